#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "kalm/config.hpp"
#include "kalm/corpus.hpp"
#include "kalm/model.hpp"

namespace kalm {

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) or plain SGD, per TrainConfig.
class OptimizerState {
 public:
    explicit OptimizerState(const TrainConfig& cfg) : cfg_(cfg) {}

    /// Applies one update from the accumulated gradients. `lr_scales`, when
    /// non-empty, multiplies the learning rate per parameter.
    void step(std::span<Parameter* const> params, std::span<const double> lr_scales = {});

    std::size_t steps() const { return t_; }

 private:
    TrainConfig cfg_;
    std::size_t t_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

/// Accumulates the gradient of the batch-mean joint loss, applies one
/// optimizer update and clears the gradients. Returns the mean losses
/// measured before the update.
LossBreakdown train_step(const std::vector<const CorpusExample*>& batch, Model& model,
                         const KnowledgeBase& kb, OptimizerState& optimizer);

struct TrainResult {
    Model model;
    std::vector<LossBreakdown> history;  // one entry per epoch
};

/// Builds the vocabulary from corpus + knowledge texts, initialises the model
/// from cfg.seed, applies cfg.noise_ratio to the training texts and runs
/// cfg.epochs seeded-shuffle epochs. The knowledge base is re-encoded with
/// the current encoder at the start of every epoch.
TrainResult train(const std::vector<CorpusExample>& corpus,
                  const std::vector<FragmentRecord>& knowledge, const TrainConfig& cfg);

/// Corrupts round(ratio * N) seeded-chosen examples: every token is replaced
/// with probability 0.5 by a different uniformly drawn vocabulary token (UNK
/// excluded). An example that comes out unchanged gets one forced
/// replacement. Labels are untouched.
std::vector<CorpusExample> inject_noise(const std::vector<CorpusExample>& corpus, double ratio,
                                        std::uint64_t seed, const Vocabulary& vocab);
/// Same, drawing replacements from the corpus' own vocabulary.
std::vector<CorpusExample> inject_noise(const std::vector<CorpusExample>& corpus, double ratio,
                                        std::uint64_t seed);

inline constexpr const char* kCheckpointFormat = "KALM1";

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_to_string(const Model& model);
Model checkpoint_from_string(const std::string& text);

}  // namespace kalm
