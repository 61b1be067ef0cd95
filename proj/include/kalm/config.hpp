#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace kalm {

enum class Optimizer { adam, sgd };

/// Hyperparameters of the whole pipeline. Defaults are the reference
/// configuration; `validate()` enforces the documented ranges.
struct TrainConfig {
    std::size_t d_model = 64;
    std::size_t heads = 4;
    double alpha = 0.7;
    double lambda = 0.5;
    double beta = 0.1;
    std::size_t top_k = 4;
    double tau = 0.1;
    double learning_rate = 1e-3;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double noise_ratio = 0.0;
    std::size_t max_chain_edges = 5;
    Optimizer optimizer = Optimizer::adam;
    // Multiplier on the sinusoidal position table.
    double position_scale = 0.01;
    // Encoder projections start uniform in +-encoder_init_scale / sqrt(d_model).
    double encoder_init_scale = 0.1;
    // Learning-rate multiplier for the encoder parameters.
    double encoder_lr_scale = 1.0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Applies one `key = value` assignment; throws ConfigError naming the key.
void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);

TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);

}  // namespace kalm
