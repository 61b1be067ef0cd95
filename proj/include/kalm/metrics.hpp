#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "kalm/corpus.hpp"
#include "kalm/knowledge.hpp"
#include "kalm/model.hpp"

namespace kalm {

using Tokens = std::vector<std::string>;

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

double accuracy(const std::vector<std::string>& predictions,
                const std::vector<std::string>& gold_labels);

/// Clipped unigram overlap.
PRF rouge_1(const Tokens& candidate, const Tokens& reference);

/// Longest-common-subsequence variant.
PRF rouge_l(const Tokens& candidate, const Tokens& reference);
std::size_t lcs_length(const Tokens& a, const Tokens& b);
/// Sum over unigrams of min(count in a, count in b).
std::size_t clipped_unigram_overlap(const Tokens& candidate, const Tokens& reference);

/// Sentence BLEU: per-reference clipped n-gram precisions, add-one smoothing
/// for n >= 2, orders with no candidate n-grams skipped, brevity penalty
/// against the closest reference length (ties toward the shorter).
double bleu(const Tokens& candidate, const std::vector<Tokens>& references, std::size_t max_n = 4);

struct ExampleScore {
    std::string id;
    std::string predicted;
    std::string gold;
    bool correct = false;
    bool has_reference = false;
    double rouge1_f = 0.0;
    double rougeL_f = 0.0;
    double bleu = 0.0;
    double fact_score = 0.0;
    std::string rationale;
};

struct MetricsReport {
    double accuracy = 0.0;
    double rouge1_f = 0.0;
    double rougeL_f = 0.0;
    double bleu = 0.0;
    double fact_score = 0.0;
    std::size_t n_examples = 0;
    std::size_t n_with_references = 0;

    bool operator==(const MetricsReport&) const = default;
};

/// Scores one example: prediction, rendered rationale vs reference, fact score.
ExampleScore score_example(const Model& model, const KnowledgeBase& kb,
                           const CorpusExample& example);

/// Mean of per-example scores; ROUGE/BLEU only over examples with references.
MetricsReport aggregate(const std::vector<ExampleScore>& scores);

struct Evaluation {
    MetricsReport report;
    std::vector<ExampleScore> examples;
};

/// Re-encodes `knowledge` with the model's encoder and scores the corpus.
Evaluation evaluate(const Model& model, const std::vector<CorpusExample>& corpus,
                    const std::vector<FragmentRecord>& knowledge);

/// MetricsReport fields plus config_echo and n_with_references. ROUGE and
/// BLEU are multiplied by `overlap_scale` (1 or 100), which is echoed.
nlohmann::ordered_json report_to_json(const MetricsReport& report, const TrainConfig& cfg,
                                      double overlap_scale = 1.0);

}  // namespace kalm
