#include "kalm/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "kalm/errors.hpp"

namespace kalm {

ReasoningChain extract_chain(const AttentionWeights& attn, const RetrievalResult& retrieval,
                             const TokenSequence& tokens, std::size_t max_edges) {
    if (max_edges == 0) throw ConfigError("max_edges must be >= 1");
    if (attn.heads.empty()) throw DimensionError("no attention heads to explain");
    const Matrix avg = attn.head_average();
    const std::size_t n = tokens.size();
    if (avg.rows() != n + retrieval.size() || avg.cols() != avg.rows()) {
        throw DimensionError("attention " + avg.shape_string() + " does not cover " +
                             std::to_string(n) + " tokens + " +
                             std::to_string(retrieval.size()) + " fragments");
    }

    std::vector<ChainStep> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < avg.cols(); ++j) {
            if (i == j || !(avg(i, j) > 0.0)) continue;
            ChainStep s;
            s.source_index = i;
            s.source_text = tokens.tokens[i];
            s.target_index = j;
            s.target_is_fragment = j >= n;
            s.target_text = j < n ? tokens.tokens[j] : retrieval.fragment_ids[j - n];
            s.weight = avg(i, j);
            edges.push_back(std::move(s));
        }
    }
    const std::size_t keep = std::min(max_edges, edges.size());
    std::partial_sort(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(keep),
                      edges.end(), [](const ChainStep& a, const ChainStep& b) {
                          if (a.weight != b.weight) return a.weight > b.weight;
                          if (a.source_index != b.source_index) return a.source_index < b.source_index;
                          return a.target_index < b.target_index;
                      });
    edges.resize(keep);

    ReasoningChain chain;
    chain.steps = std::move(edges);
    for (std::size_t j = 0; j < retrieval.size(); ++j)
        chain.evidence.push_back({retrieval.fragment_ids[j], retrieval.weights[j]});
    return chain;
}

std::vector<double> knowledge_attribution(const AttentionWeights& attn, std::size_t n_tokens) {
    const Matrix avg = attn.head_average();
    if (n_tokens == 0 || n_tokens > avg.rows()) throw DimensionError("bad token count");
    const std::size_t k = avg.cols() - n_tokens;
    std::vector<double> a(k, 0.0);
    if (k == 0) return a;
    for (std::size_t i = 0; i < n_tokens; ++i)
        for (std::size_t j = 0; j < k; ++j) a[j] += avg(i, n_tokens + j);
    double sum = 0.0;
    for (double& v : a) {
        v = v / static_cast<double>(n_tokens) + kAttributionEpsilon;
        sum += v;
    }
    for (double& v : a) v /= sum;
    return a;
}

Var explain_loss(Tape& tape, const std::vector<Var>& attention, std::size_t n_tokens,
                 const RetrievalResult& retrieval, double beta) {
    if (attention.empty()) throw DimensionError("explain_loss needs at least one head");
    if (beta < 0.0) throw ConfigError("beta must be >= 0");
    Var avg = attention[0];
    for (std::size_t h = 1; h < attention.size(); ++h) avg = tape.add(avg, attention[h]);
    avg = tape.scale(avg, 1.0 / static_cast<double>(attention.size()));

    const std::size_t width = tape.value(avg).cols();
    const std::size_t k = retrieval.size();
    if (n_tokens == 0 || n_tokens + k != width) {
        throw DimensionError("attention width " + std::to_string(width) + " != " +
                             std::to_string(n_tokens) + " tokens + " + std::to_string(k) +
                             " fragments");
    }
    Var token_rows = tape.slice_rows(avg, 0, n_tokens);

    Var plogp = tape.mul(token_rows, tape.log(tape.add_scalar(token_rows, kLogEpsilon)));
    Var entropy = tape.scale(tape.sum_all(plogp), -1.0 / static_cast<double>(n_tokens));
    Var total = tape.scale(entropy, beta);
    if (k == 0) return total;

    Var mass = tape.mean_rows(tape.slice_cols(token_rows, n_tokens, width));
    Var attribution = tape.normalize_rows(tape.add_scalar(mass, kAttributionEpsilon));
    Matrix log_w(1, k);
    for (std::size_t j = 0; j < k; ++j) log_w(0, j) = std::log(retrieval.weights[j]);
    Var kl = tape.sum_all(
        tape.mul(attribution, tape.sub(tape.log(attribution), tape.constant(std::move(log_w)))));
    return tape.add(kl, total);
}

ExplainLossParts explain_loss(const AttentionWeights& attn, const RetrievalResult& retrieval,
                              double beta) {
    if (attn.heads.empty()) throw DimensionError("explain_loss needs at least one head");
    const std::size_t width = attn.heads[0].rows();
    if (width < retrieval.size() + 1) throw DimensionError("attention smaller than retrieval");
    const std::size_t n = width - retrieval.size();

    Tape tape;
    std::vector<Var> heads;
    for (const auto& h : attn.heads) heads.push_back(tape.constant(h));
    ExplainLossParts parts;
    // beta = 0 isolates the KL term.
    parts.kl = tape.value(explain_loss(tape, heads, n, retrieval, 0.0))(0, 0);
    const Matrix avg = attn.head_average();
    double ent = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (double p : avg.row(i)) ent -= p * std::log(p + kLogEpsilon);
    parts.entropy = ent / static_cast<double>(n);
    parts.total = parts.kl + beta * parts.entropy;
    return parts;
}

std::string format_weight(double w) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", w);
    return buf;
}

std::string step_sentence(const std::string& label, const std::string& source,
                          const std::string& target, double weight) {
    return "predicted " + label + " because \"" + source + "\" attends to \"" + target +
           "\" (w=" + format_weight(weight) + ")";
}

std::string evidence_sentence(const std::string& fragment_id, const std::string& text) {
    return "supported by " + fragment_id + ": \"" + text + "\"";
}

Rationale render_rationale(const ReasoningChain& chain, const Prediction& pred,
                           const KnowledgeBase& kb) {
    if (chain.steps.empty() && chain.evidence.empty()) {
        throw DataError("cannot render an empty reasoning chain");
    }
    Rationale r;
    std::vector<std::string> lines;
    for (const auto& s : chain.steps) {
        lines.push_back(step_sentence(pred.predicted_label, s.source_text, s.target_text, s.weight));
    }
    for (const auto& e : chain.evidence) {
        const auto pos = kb.find(e.fragment_id);
        if (!pos) throw DataError("rationale cites unknown fragment '" + e.fragment_id + "'");
        lines.push_back(evidence_sentence(e.fragment_id, kb.at(*pos).text));
        r.cited_fragment_ids.push_back(e.fragment_id);
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) r.text.push_back('\n');
        r.text += lines[i];
    }
    return r;
}

namespace {

std::set<std::string> token_set(std::string_view text) {
    try {
        auto toks = tokenize(text);
        return {toks.begin(), toks.end()};
    } catch (const EmptyInputError&) {
        return {};
    }
}

}  // namespace

FactScoreValue fact_score(const Rationale& rationale, const RetrievalResult& retrieval,
                          const KnowledgeBase& kb, double overlap_threshold) {
    if (!(overlap_threshold > 0.0 && overlap_threshold <= 1.0)) {
        throw ConfigError("overlap_threshold must lie in (0, 1]");
    }
    static constexpr std::string_view kPrefix = "supported by ";
    FactScoreValue score;
    std::size_t start = 0;
    while (start <= rationale.text.size()) {
        const auto nl = rationale.text.find('\n', start);
        const std::string_view line =
            std::string_view(rationale.text)
                .substr(start, nl == std::string::npos ? std::string::npos : nl - start);
        start = nl == std::string::npos ? rationale.text.size() + 1 : nl + 1;
        if (!line.starts_with(kPrefix)) continue;
        ++score.total;

        const auto colon = line.find(": \"", kPrefix.size());
        const std::string id(line.substr(kPrefix.size(), colon == std::string_view::npos
                                                             ? std::string_view::npos
                                                             : colon - kPrefix.size()));
        const bool retrieved = std::find(retrieval.fragment_ids.begin(),
                                         retrieval.fragment_ids.end(),
                                         id) != retrieval.fragment_ids.end();
        const auto pos = kb.find(id);
        if (!retrieved || !pos) continue;
        const auto fragment_tokens = token_set(kb.at(*pos).text);
        if (fragment_tokens.empty()) continue;
        const auto sentence_tokens = token_set(line);
        std::size_t overlap = 0;
        for (const auto& t : fragment_tokens) overlap += sentence_tokens.count(t);
        const double ratio =
            static_cast<double>(overlap) / static_cast<double>(fragment_tokens.size());
        if (ratio >= overlap_threshold) ++score.supported;
    }
    score.value = score.total == 0 ? 0.0
                                   : static_cast<double>(score.supported) /
                                         static_cast<double>(score.total);
    return score;
}

nlohmann::json explanation_to_json(const Prediction& pred, const ReasoningChain& chain,
                                   const Rationale& rationale) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : chain.steps)
        steps.push_back({{"source", s.source_text}, {"target", s.target_text}, {"weight", s.weight}});
    nlohmann::json evidence = nlohmann::json::array();
    for (const auto& e : chain.evidence) evidence.push_back({{"id", e.fragment_id}, {"w", e.weight}});
    return {{"prediction", pred.predicted_label},
            {"steps", std::move(steps)},
            {"evidence", std::move(evidence)},
            {"rationale", rationale.text}};
}

}  // namespace kalm
