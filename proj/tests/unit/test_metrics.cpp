#include <cmath>
#include <random>

#include "doctest.h"
#include "kalm/errors.hpp"
#include "kalm/metrics.hpp"
#include "kalm/trainer.hpp"
#include "oracles.hpp"

using namespace kalm;

namespace {

Tokens toks(const std::string& s) { return tokenize(s); }

Tokens random_tokens(std::size_t n, std::mt19937_64& rng) {
    static const Tokens words{"a", "b", "c", "d", "e", "f"};
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    Tokens out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(words[pick(rng)]);
    return out;
}

}  // namespace

TEST_CASE("accuracy examples") {
    CHECK(accuracy({"a", "b"}, {"a", "b"}) == 1.0);
    CHECK(accuracy({"a", "b"}, {"b", "a"}) == 0.0);
    CHECK(accuracy({"a", "b", "c", "d"}, {"a", "b", "c", "x"}) == 0.75);
    CHECK_THROWS_AS(accuracy({}, {}), DataError);
    CHECK_THROWS_AS(accuracy({"a"}, {"a", "b"}), DataError);
}

TEST_CASE("rouge-1 examples") {
    const PRF p = rouge_1(toks("the cat sat"), toks("the cat ran fast"));
    CHECK(p.precision == doctest::Approx(2.0 / 3.0));
    CHECK(p.recall == doctest::Approx(0.5));
    CHECK(std::abs(p.f - 4.0 / 7.0) < 1e-4);
    CHECK(rouge_1(toks("a b c"), toks("a b c")).f == 1.0);
    CHECK(rouge_1(toks("x y"), toks("a b")).f == 0.0);
    const PRF empty = rouge_1({}, toks("a b"));
    CHECK(empty.precision == 0.0);
    CHECK(empty.recall == 0.0);
    CHECK(empty.f == 0.0);
    CHECK_THROWS_AS(rouge_1(toks("a"), {}), DataError);
    CHECK(rouge_1(toks("a a a"), toks("a b")).precision == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("rouge-l examples") {
    const PRF p = rouge_l(toks("a b c d"), toks("a c b d"));
    CHECK(lcs_length(toks("a b c d"), toks("a c b d")) == 3);
    CHECK(p.precision == 0.75);
    CHECK(p.recall == 0.75);
    CHECK(std::abs(p.f - 0.75) < 1e-4);
    CHECK(rouge_l(toks("a b c"), toks("a b c")).f == 1.0);
    CHECK(rouge_l(toks("c"), toks("a b c d e")).recall == doctest::Approx(0.2));
    CHECK_THROWS_AS(rouge_l(toks("a"), {}), DataError);
}

TEST_CASE("lcs matches a recursive oracle and never exceeds unigram overlap") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 300; ++trial) {
        const Tokens a = random_tokens(trial % 12, rng), b = random_tokens(1 + trial % 9, rng);
        const std::size_t l = lcs_length(a, b);
        CHECK(l == oracle::lcs(a, b));
        CHECK(l <= clipped_unigram_overlap(a, b));
    }
}

TEST_CASE("bleu examples") {
    CHECK(std::abs(bleu(toks("the cat sat"), {toks("the cat sat on the mat")}) - std::exp(-1.0)) < 1e-4);
    CHECK(std::abs(bleu(toks("the cat sat"), {toks("the cat sat on the mat")}) - 0.3679) < 1e-4);
    CHECK(bleu(toks("the cat sat on the mat"), {toks("the cat sat on the mat")}) == doctest::Approx(1.0));
    CHECK(bleu(toks("x y z"), {toks("a b c")}) == 0.0);
    CHECK(bleu({}, {toks("a b c")}) == 0.0);
    CHECK(bleu(toks("a b c d e"), {toks("z z"), toks("a b c d e")}) == doctest::Approx(1.0));
    CHECK_THROWS(bleu(toks("a"), {}));
    CHECK_THROWS(bleu(toks("a"), {toks("a")}, 0));
    CHECK_THROWS(bleu(toks("a"), {toks("a")}, 5));
}

TEST_CASE("bleu brevity penalty picks the closest reference length, shorter on ties") {
    // Candidate length 4; references of length 3 and 5 are equally close.
    CHECK(bleu(toks("a b c d"), {toks("a b c"), toks("a b c d e")}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(bleu(toks("a b c d"), {toks("a b c d e")}) == doctest::Approx(std::exp(1.0 - 5.0 / 4.0)).epsilon(1e-12));
}

TEST_CASE("bleu does not increase as a matching candidate is truncated") {
    const Tokens ref = toks("one two three four five six seven eight nine ten");
    double previous = 2.0;
    for (std::size_t len = ref.size(); len >= 1; --len) {
        const Tokens cand(ref.begin(), ref.begin() + static_cast<std::ptrdiff_t>(len));
        const double b = bleu(cand, {ref});
        CHECK(b <= previous + 1e-12);
        previous = b;
    }
}

TEST_CASE("identical strings score one on every text metric") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const Tokens s = random_tokens(1 + trial % 15, rng);
        CHECK(rouge_1(s, s).f == doctest::Approx(1.0));
        CHECK(rouge_l(s, s).f == doctest::Approx(1.0));
        CHECK(bleu(s, {s}) == doctest::Approx(1.0));
        const Tokens other = random_tokens(1 + trial % 7, rng);
        for (double v : {rouge_1(s, other).f, rouge_l(s, other).f, bleu(s, {other})}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

namespace {

struct Trained {
    SyntheticData data = generate_synthetic(20, 0.8, 3);
    Model model = [this] {
        TrainConfig cfg;
        cfg.d_model = 16;
        cfg.heads = 2;
        cfg.top_k = 2;
        cfg.epochs = 2;
        cfg.batch_size = 4;
        return train(data.train, data.knowledge, cfg).model;
    }();
};

}  // namespace

TEST_CASE("evaluate equals the mean of per-example scores") {
    Trained t;
    std::vector<CorpusExample> corpus = t.data.test;
    corpus.front().reference_explanation.reset();
    const Evaluation ev = evaluate(t.model, corpus, t.data.knowledge);
    const KnowledgeBase kb = t.model.ingest(t.data.knowledge);
    double acc = 0, r1 = 0, rl = 0, bl = 0, fs = 0;
    std::size_t with_ref = 0;
    for (const auto& ex : corpus) {
        const ExampleScore s = score_example(t.model, kb, ex);
        const Explanation e = explain(t.model, kb, ex.text);
        CHECK(s.predicted == e.prediction.predicted_label);
        CHECK(s.rationale == e.rationale.text);
        acc += s.predicted == ex.label ? 1.0 : 0.0;
        fs += fact_score(e.rationale, e.retrieval, kb).value;
        if (ex.reference_explanation) {
            ++with_ref;
            const Tokens cand = tokenize(e.rationale.text), ref = tokenize(*ex.reference_explanation);
            r1 += rouge_1(cand, ref).f;
            rl += rouge_l(cand, ref).f;
            bl += bleu(cand, {ref});
        }
    }
    const double n = static_cast<double>(corpus.size());
    CHECK(ev.report.n_examples == corpus.size());
    CHECK(ev.report.n_with_references == with_ref);
    CHECK(std::abs(ev.report.accuracy - acc / n) < 1e-9);
    CHECK(std::abs(ev.report.fact_score - fs / n) < 1e-9);
    CHECK(std::abs(ev.report.rouge1_f - r1 / static_cast<double>(with_ref)) < 1e-9);
    CHECK(std::abs(ev.report.rougeL_f - rl / static_cast<double>(with_ref)) < 1e-9);
    CHECK(std::abs(ev.report.bleu - bl / static_cast<double>(with_ref)) < 1e-9);
    CHECK(ev.report == aggregate(ev.examples));
}

TEST_CASE("evaluate scores one when references equal the rendered rationales") {
    Trained t;
    std::vector<CorpusExample> corpus = t.data.test;
    const KnowledgeBase kb = t.model.ingest(t.data.knowledge);
    for (auto& ex : corpus) {
        const Explanation e = explain(t.model, kb, ex.text);
        ex.reference_explanation = e.rationale.text;
        ex.label = e.prediction.predicted_label;
    }
    const MetricsReport r = evaluate(t.model, corpus, t.data.knowledge).report;
    CHECK(r.accuracy == 1.0);
    CHECK(r.rouge1_f == doctest::Approx(1.0));
    CHECK(r.rougeL_f == doctest::Approx(1.0));
    CHECK(r.bleu == doctest::Approx(1.0));
}

TEST_CASE("evaluate errors and report JSON") {
    Trained t;
    CHECK_THROWS_AS(evaluate(t.model, {}, t.data.knowledge), DataError);
    const MetricsReport r = evaluate(t.model, {t.data.test.front()}, t.data.knowledge).report;
    CHECK(r.n_examples == 1);
    const auto j = report_to_json(r, t.model.config());
    for (const char* key : {"accuracy", "rouge1_f", "rougeL_f", "bleu", "fact_score", "n_examples",
                            "n_with_references", "config_echo"})
        CHECK(j.contains(key));
    CHECK(j["config_echo"]["d_model"] == 16);
    CHECK(j["overlap_scale"] == 1.0);
    const auto pct = report_to_json(r, t.model.config(), 100.0);
    CHECK(pct["rougeL_f"].get<double>() == doctest::Approx(100.0 * r.rougeL_f));
    CHECK(pct["bleu"].get<double>() == doctest::Approx(100.0 * r.bleu));
    CHECK(pct["accuracy"].get<double>() == r.accuracy);
    CHECK_THROWS_AS(aggregate({}), DataError);
}
