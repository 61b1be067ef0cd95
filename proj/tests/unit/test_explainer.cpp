#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "doctest.h"
#include "kalm/errors.hpp"
#include "kalm/explainer.hpp"
#include "kalm/gradcheck.hpp"
#include "oracles.hpp"

using namespace kalm;

namespace {

struct Setup {
    KnowledgeBase kb{2};
    Vocabulary vocab = build_vocab({{"acme", "rose", "today"}});
    TokenSequence tokens = make_sequence("acme rose today", vocab);
    Setup() {
        kb.add({"kb-a", "acme outlook strong", {1.0, 0.0}});
        kb.add({"kb-b", "beta outlook weak", {0.0, 1.0}});
        kb.add({"kb-c", "gamma outlook strong", {-1.0, 0.2}});
    }
    RetrievalResult retrieval(std::size_t k) const { return retrieve(std::vector<double>{1.0, 0.3}, kb, k, 0.1); }
};

Matrix random_stochastic(std::size_t n, std::mt19937_64& rng) {
    Matrix m = oracle::random_matrix(n, n, rng, 0.01, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += m(i, j);
        for (std::size_t j = 0; j < n; ++j) m(i, j) /= s;
    }
    return m;
}

Prediction positive() { return make_prediction(std::vector<double>{0.2, 0.8}, {"negative", "positive"}); }

}  // namespace

TEST_CASE("uniform attention yields the lowest index edge") {
    Setup s;
    const RetrievalResult r = s.retrieval(2);
    const AttentionWeights attn{{Matrix(5, 5, 0.2)}};
    const ReasoningChain chain = extract_chain(attn, r, s.tokens, 1);
    REQUIRE(chain.steps.size() == 1);
    CHECK(chain.steps[0].source_index == 0);
    CHECK(chain.steps[0].target_index == 1);
    CHECK(chain.steps[0].weight == 0.2);
    CHECK(chain.evidence.size() == 2);
    CHECK(chain.evidence[0].fragment_id == r.fragment_ids[0]);
    CHECK(chain.evidence[0].weight == r.weights[0]);
}

TEST_CASE("concentrated attention on a fragment becomes the first step") {
    Setup s;
    const RetrievalResult r = s.retrieval(2);
    Matrix a(5, 5, 0.01);
    a(1, 4) = 0.96;
    const ReasoningChain chain = extract_chain(AttentionWeights{{a, a}}, r, s.tokens, 3);
    CHECK(chain.steps[0].source_text == "rose");
    CHECK(chain.steps[0].target_is_fragment);
    CHECK(chain.steps[0].target_text == r.fragment_ids[1]);
    CHECK(chain.steps.size() == 3);
}

TEST_CASE("chain steps match a brute-force sort of off-diagonal token rows") {
    std::mt19937_64 rng(1);
    const Vocabulary vocab = build_vocab({{"a", "b", "c"}});
    const TokenSequence tokens = make_sequence("a b c", vocab);
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix h0 = random_stochastic(3, rng), h1 = random_stochastic(3, rng);
        const ReasoningChain chain = extract_chain(AttentionWeights{{h0, h1}}, RetrievalResult{}, tokens, 4);
        std::vector<std::tuple<double, std::size_t, std::size_t>> all;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                if (i != j) all.emplace_back(-(h0(i, j) + h1(i, j)) / 2.0, i, j);
        std::sort(all.begin(), all.end());
        REQUIRE(chain.steps.size() == 4);
        for (std::size_t e = 0; e < 4; ++e) {
            CHECK(chain.steps[e].weight == doctest::Approx(-std::get<0>(all[e])).epsilon(1e-14));
            CHECK(chain.steps[e].source_index == std::get<1>(all[e]));
            CHECK(chain.steps[e].target_index == std::get<2>(all[e]));
            if (e > 0) CHECK(chain.steps[e].weight <= chain.steps[e - 1].weight);
        }
    }
}

TEST_CASE("extract_chain errors") {
    Setup s;
    CHECK_THROWS_AS(extract_chain(AttentionWeights{{Matrix(5, 5, 0.2)}}, s.retrieval(2), s.tokens, 0), ConfigError);
    CHECK_THROWS_AS(extract_chain(AttentionWeights{{Matrix(4, 4, 0.25)}}, s.retrieval(2), s.tokens, 1), DimensionError);
}

TEST_CASE("explain loss KL arithmetic") {
    Setup s;
    RetrievalResult r = s.retrieval(2);
    r.weights = {0.5, 0.5};
    // One token row putting 0.9 and 0.1 of its mass on the two fragments.
    const Matrix a{{0.0, 0.9, 0.1}, {0.3, 0.4, 0.3}, {0.3, 0.3, 0.4}};
    const ExplainLossParts parts = explain_loss(AttentionWeights{{a}}, r, 0.0);
    CHECK(std::abs(parts.kl - (0.9 * std::log(1.8) + 0.1 * std::log(0.2))) < 1e-6);
    CHECK(std::abs(parts.kl - 0.3681) < 1e-3);
    CHECK(parts.total == parts.kl);

    const ExplainLossParts with_entropy = explain_loss(AttentionWeights{{a}}, r, 0.1);
    CHECK(std::abs(with_entropy.entropy - (-0.9 * std::log(0.9) - 0.1 * std::log(0.1))) < 1e-9);
    CHECK(with_entropy.total == doctest::Approx(with_entropy.kl + 0.1 * with_entropy.entropy));
}

TEST_CASE("explain loss vanishes when attribution equals retrieval weights") {
    Setup s;
    RetrievalResult r = s.retrieval(2);
    r.weights = {0.7, 0.3};
    const Matrix a{{0.2, 0.4, 0.28, 0.12}, {0.1, 0.2, 0.49, 0.21}, {0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25}};
    const ExplainLossParts parts = explain_loss(AttentionWeights{{a}}, r, 0.1);
    CHECK(std::abs(parts.kl) < 1e-9);
    CHECK(parts.total == doctest::Approx(0.1 * parts.entropy));

    const RetrievalResult one = s.retrieval(1);
    const ExplainLossParts single = explain_loss(AttentionWeights{{Matrix(4, 4, 0.25)}}, one, 0.0);
    CHECK(std::abs(single.kl) < 1e-9);
    CHECK(knowledge_attribution(AttentionWeights{{Matrix(3, 3, 1.0 / 3.0)}}, 3).empty());
}

TEST_CASE("explain loss is never negative") {
    std::mt19937_64 rng(2);
    Setup s;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 1 + trial % 3;
        RetrievalResult r = s.retrieval(k);
        const std::size_t n = 1 + trial % 4;
        const AttentionWeights attn{{random_stochastic(n + k, rng), random_stochastic(n + k, rng)}};
        const ExplainLossParts parts = explain_loss(attn, r, 0.1);
        CHECK(parts.kl >= -1e-12);
        CHECK(parts.total >= 0.0);
    }
}

TEST_CASE("explain loss gradient matches finite differences") {
    std::mt19937_64 rng(3);
    Setup s;
    const RetrievalResult r = s.retrieval(2);
    Parameter l0("logits0", oracle::random_matrix(5, 5, rng, -2, 2));
    Parameter l1("logits1", oracle::random_matrix(5, 5, rng, -2, 2));
    std::vector<Parameter*> params{&l0, &l1};
    auto build = [&](Tape& t) {
        std::vector<Var> heads{t.softmax_rows(t.param(l0)), t.softmax_rows(t.param(l1))};
        return explain_loss(t, heads, 3, r, 0.1);
    };
    auto loss = [&] {
        Tape t;
        return t.value(build(t))(0, 0);
    };
    auto grads = [&] {
        Tape t;
        t.backward(build(t), params);
    };
    const GradCheckReport rep = grad_check(params, loss, grads);
    CHECK(rep.max_rel_error < 1e-4);

    Tape t;
    std::vector<Var> heads{t.softmax_rows(t.param(l0)), t.softmax_rows(t.param(l1))};
    const double on_tape = t.value(explain_loss(t, heads, 3, r, 0.1))(0, 0);
    const AttentionWeights plain{{t.value(heads[0]), t.value(heads[1])}};
    CHECK(on_tape == doctest::Approx(explain_loss(plain, r, 0.1).total).epsilon(1e-12));
}

TEST_CASE("weights render with four decimals") {
    CHECK(format_weight(0.98765) == "0.9877");
    CHECK(format_weight(1.0) == "1.0000");
    CHECK(format_weight(0.00004) == "0.0000");
    CHECK(format_weight(0.125) == "0.1250");
}

TEST_CASE("rationale has one sentence per step and per evidence link") {
    Setup s;
    const RetrievalResult r = s.retrieval(1);
    ReasoningChain chain;
    chain.steps.push_back({0, "acme", 3, true, r.fragment_ids[0], 0.98765});
    chain.steps.push_back({1, "rose", 0, false, "acme", 0.5});
    chain.evidence.push_back({r.fragment_ids[0], 1.0});
    const Rationale a = render_rationale(chain, positive(), s.kb);
    const Rationale b = render_rationale(chain, positive(), s.kb);
    CHECK(a.text == b.text);
    CHECK(std::count(a.text.begin(), a.text.end(), '\n') == 2);
    CHECK(a.text ==
          "predicted positive because \"acme\" attends to \"kb-a\" (w=0.9877)\n"
          "predicted positive because \"rose\" attends to \"acme\" (w=0.5000)\n"
          "supported by kb-a: \"acme outlook strong\"");
    CHECK(a.cited_fragment_ids == std::vector<std::string>{"kb-a"});

    chain.evidence.push_back({"kb-missing", 0.1});
    CHECK_THROWS_AS(render_rationale(chain, positive(), s.kb), DataError);
    CHECK_THROWS_AS(render_rationale(ReasoningChain{}, positive(), s.kb), DataError);
}

TEST_CASE("fact score examples") {
    Setup s;
    const RetrievalResult r = s.retrieval(2);
    const std::string first = evidence_sentence("kb-a", "acme outlook strong");
    const std::string other = evidence_sentence("kb-c", "gamma outlook strong");
    REQUIRE(r.fragment_ids == std::vector<std::string>{"kb-a", "kb-b"});

    const FactScoreValue all = fact_score({first + "\n" + evidence_sentence("kb-b", "beta outlook weak"), {}}, r, s.kb);
    CHECK(all.value == 1.0);
    CHECK(all.total == 2);
    CHECK(fact_score({other, {}}, r, s.kb).value == 0.0);
    const FactScoreValue half = fact_score({first + "\n" + other, {}}, r, s.kb);
    CHECK(half.value == 0.5);
    CHECK(half.supported == 1);
    CHECK(fact_score({"predicted positive because \"a\" attends to \"b\" (w=1.0000)", {}}, r, s.kb).value == 0.0);
    CHECK(fact_score({"supported by kb-a: \"nothing relevant here\"", {}}, r, s.kb).value == 0.0);
    CHECK_THROWS_AS(fact_score({first, {}}, r, s.kb, 0.0), ConfigError);
}

TEST_CASE("fact score is monotone in supported sentences") {
    Setup s;
    const RetrievalResult r = s.retrieval(2);
    const std::string good = evidence_sentence("kb-b", "beta outlook weak");
    const std::string bad = evidence_sentence("kb-c", "gamma outlook strong");
    std::mt19937_64 rng(4);
    std::string text = evidence_sentence("kb-a", "acme outlook strong");
    for (int i = 0; i < 40; ++i) {
        const double before = fact_score({text, {}}, r, s.kb).value;
        const bool add_good = rng() % 2 == 0;
        text += "\n" + (add_good ? good : bad);
        const double after = fact_score({text, {}}, r, s.kb).value;
        if (add_good) {
            CHECK(after >= before);
        } else {
            CHECK(after <= before);
        }
    }
}

TEST_CASE("explanation JSON shape") {
    Setup s;
    const RetrievalResult r = s.retrieval(1);
    ReasoningChain chain;
    chain.steps.push_back({0, "acme", 3, true, "kb-a", 0.75});
    chain.evidence.push_back({"kb-a", 1.0});
    const Rationale rat = render_rationale(chain, positive(), s.kb);
    const nlohmann::json j = explanation_to_json(positive(), chain, rat);
    CHECK(j["prediction"] == "positive");
    CHECK(j["steps"].size() == 1);
    CHECK(j["steps"][0]["source"] == "acme");
    CHECK(j["steps"][0]["target"] == "kb-a");
    CHECK(j["steps"][0]["weight"] == 0.75);
    CHECK(j["evidence"][0]["id"] == "kb-a");
    CHECK(j["evidence"][0]["w"] == 1.0);
    CHECK(j["rationale"] == rat.text);
}
