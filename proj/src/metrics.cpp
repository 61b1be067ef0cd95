#include "kalm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "kalm/errors.hpp"

namespace kalm {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Tokens& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return counts;
}

PRF make_prf(double matched, std::size_t cand_len, std::size_t ref_len) {
    PRF r;
    if (cand_len == 0) return r;
    r.precision = matched / static_cast<double>(cand_len);
    r.recall = matched / static_cast<double>(ref_len);
    const double sum = r.precision + r.recall;
    r.f = sum == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / sum;
    return r;
}

}  // namespace

double accuracy(const std::vector<std::string>& predictions,
                const std::vector<std::string>& gold_labels) {
    if (predictions.size() != gold_labels.size()) {
        throw DataError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(gold_labels.size()) + " labels");
    }
    if (predictions.empty()) throw DataError("accuracy of an empty prediction list");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == gold_labels[i];
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

std::size_t clipped_unigram_overlap(const Tokens& candidate, const Tokens& reference) {
    const auto c = ngrams(candidate, 1);
    const auto r = ngrams(reference, 1);
    std::size_t overlap = 0;
    for (const auto& [g, n] : c) {
        auto it = r.find(g);
        if (it != r.end()) overlap += std::min(n, it->second);
    }
    return overlap;
}

PRF rouge_1(const Tokens& candidate, const Tokens& reference) {
    if (reference.empty()) throw DataError("ROUGE reference is empty");
    return make_prf(static_cast<double>(clipped_unigram_overlap(candidate, reference)),
                    candidate.size(), reference.size());
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

PRF rouge_l(const Tokens& candidate, const Tokens& reference) {
    if (reference.empty()) throw DataError("ROUGE reference is empty");
    return make_prf(static_cast<double>(lcs_length(candidate, reference)), candidate.size(),
                    reference.size());
}

double bleu(const Tokens& candidate, const std::vector<Tokens>& references, std::size_t max_n) {
    if (max_n < 1 || max_n > 4) throw ConfigError("BLEU max_n must lie in [1, 4]");
    if (references.empty()) throw DataError("BLEU needs at least one reference");
    if (candidate.empty()) return 0.0;

    double log_sum = 0.0;
    std::size_t orders = 0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        if (candidate.size() < n) continue;
        const auto cand = ngrams(candidate, n);
        NgramCounts max_ref;
        for (const auto& ref : references)
            for (const auto& [g, c] : ngrams(ref, n)) max_ref[g] = std::max(max_ref[g], c);
        std::size_t matched = 0;
        for (const auto& [g, c] : cand) {
            auto it = max_ref.find(g);
            if (it != max_ref.end()) matched += std::min(c, it->second);
        }
        const std::size_t total = candidate.size() - n + 1;
        double p = 0.0;
        if (n == 1) {
            p = static_cast<double>(matched) / static_cast<double>(total);
        } else {
            p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
        }
        if (p == 0.0) return 0.0;
        log_sum += std::log(p);
        ++orders;
    }
    const double c = static_cast<double>(candidate.size());
    std::size_t best = references.front().size();
    for (const auto& ref : references) {
        const auto diff = [&](std::size_t len) {
            return std::abs(static_cast<double>(len) - c);
        };
        if (diff(ref.size()) < diff(best) || (diff(ref.size()) == diff(best) && ref.size() < best)) {
            best = ref.size();
        }
    }
    const double r = static_cast<double>(best);
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return bp * std::exp(log_sum / static_cast<double>(orders));
}

ExampleScore score_example(const Model& model, const KnowledgeBase& kb,
                           const CorpusExample& example) {
    const Explanation e = explain(model, kb, example.text);
    ExampleScore s;
    s.id = example.id;
    s.predicted = e.prediction.predicted_label;
    s.gold = example.label;
    s.correct = s.predicted == s.gold;
    s.rationale = e.rationale.text;
    s.fact_score = fact_score(e.rationale, e.retrieval, kb).value;
    if (example.reference_explanation) {
        s.has_reference = true;
        const Tokens cand = tokenize(e.rationale.text);
        const Tokens ref = tokenize(*example.reference_explanation);
        s.rouge1_f = rouge_1(cand, ref).f;
        s.rougeL_f = rouge_l(cand, ref).f;
        s.bleu = bleu(cand, {ref});
    }
    return s;
}

MetricsReport aggregate(const std::vector<ExampleScore>& scores) {
    if (scores.empty()) throw DataError("no labeled examples to evaluate");
    MetricsReport r;
    r.n_examples = scores.size();
    for (const auto& s : scores) {
        r.accuracy += s.correct ? 1.0 : 0.0;
        r.fact_score += s.fact_score;
        if (s.has_reference) {
            ++r.n_with_references;
            r.rouge1_f += s.rouge1_f;
            r.rougeL_f += s.rougeL_f;
            r.bleu += s.bleu;
        }
    }
    const double n = static_cast<double>(r.n_examples);
    r.accuracy /= n;
    r.fact_score /= n;
    if (r.n_with_references > 0) {
        const double m = static_cast<double>(r.n_with_references);
        r.rouge1_f /= m;
        r.rougeL_f /= m;
        r.bleu /= m;
    }
    return r;
}

Evaluation evaluate(const Model& model, const std::vector<CorpusExample>& corpus,
                    const std::vector<FragmentRecord>& knowledge) {
    if (corpus.empty()) throw DataError("no labeled examples to evaluate");
    const KnowledgeBase kb = model.ingest(knowledge);
    Evaluation ev;
    for (const auto& ex : corpus) ev.examples.push_back(score_example(model, kb, ex));
    ev.report = aggregate(ev.examples);
    return ev;
}

nlohmann::ordered_json report_to_json(const MetricsReport& report, const TrainConfig& cfg,
                                      double overlap_scale) {
    nlohmann::ordered_json j;
    j["accuracy"] = report.accuracy;
    j["rouge1_f"] = report.rouge1_f * overlap_scale;
    j["rougeL_f"] = report.rougeL_f * overlap_scale;
    j["bleu"] = report.bleu * overlap_scale;
    j["fact_score"] = report.fact_score;
    j["n_examples"] = report.n_examples;
    j["n_with_references"] = report.n_with_references;
    j["overlap_scale"] = overlap_scale;
    j["config_echo"] = config_to_json(cfg);
    return j;
}

}  // namespace kalm
