#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kalm/autodiff.hpp"
#include "kalm/config.hpp"
#include "kalm/corpus.hpp"
#include "kalm/encoder.hpp"
#include "kalm/explainer.hpp"
#include "kalm/gradcheck.hpp"
#include "kalm/knowledge.hpp"
#include "kalm/reasoner.hpp"
#include "kalm/text.hpp"

namespace kalm {

/// Full pipeline state: vocabulary, label set and every trainable parameter.
class Model {
 public:
    /// Initialises parameters from cfg.seed.
    Model(TrainConfig cfg, Vocabulary vocab, std::vector<std::string> labels);

    const TrainConfig& config() const { return config_; }
    const Vocabulary& vocab() const { return vocab_; }
    const std::vector<std::string>& labels() const { return labels_; }
    /// Throws DataError for labels outside the label set.
    std::size_t label_index(const std::string& label) const;

    FusionConfig fusion() const { return {config_.alpha, config_.top_k, config_.tau}; }

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    /// Per-parameter learning-rate multipliers, aligned with parameters().
    std::vector<double> learning_rate_scales() const;

    /// Encodes fragments with the current (frozen) encoder.
    KnowledgeBase ingest(const std::vector<FragmentRecord>& records) const;

    EncoderParams encoder;
    AttentionParams reasoner;
    ClassifierParams classifier;

 private:
    TrainConfig config_;
    Vocabulary vocab_;
    std::vector<std::string> labels_;
};

struct LossBreakdown {
    double task = 0.0;
    double explain = 0.0;
    double total = 0.0;
};

/// Recorded forward pass. Retrieval is a constant of the tape.
struct ForwardPass {
    Tape tape;
    TokenSequence tokens;
    Var context;
    RetrievalResult retrieval;
    Var fused;
    std::vector<Var> attention;
    Var z_out;
    Var probs;
    Prediction prediction;

    // Present only when a target label was supplied.
    Var task_loss;
    Var explain_loss;
    Var total_loss;
    std::optional<LossBreakdown> losses;

    AttentionWeights attention_weights() const;
    std::vector<double> query() const;
};

/// encode -> retrieve -> fuse -> reason -> predict (-> losses when target set).
/// A supplied `fixed_retrieval` replaces the retrieval step.
ForwardPass forward(const Model& model, const KnowledgeBase& kb, std::string_view text,
                    std::optional<std::size_t> target = std::nullopt,
                    const RetrievalResult* fixed_retrieval = nullptr);

LossBreakdown total_loss(const CorpusExample& example, const Model& model,
                         const KnowledgeBase& kb);

/// Finite-difference check of the joint loss for one example, with the
/// retrieval result held at its unperturbed value.
GradCheckReport grad_check(Model& model, const CorpusExample& example, const KnowledgeBase& kb,
                           double perturbation = 1e-5);

struct Explanation {
    Prediction prediction;
    RetrievalResult retrieval;
    ReasoningChain chain;
    Rationale rationale;
};

Explanation explain(const Model& model, const KnowledgeBase& kb, std::string_view text);

/// Vocabulary over corpus texts and knowledge texts together.
Vocabulary build_model_vocab(const std::vector<CorpusExample>& corpus,
                             const std::vector<FragmentRecord>& knowledge);

}  // namespace kalm
