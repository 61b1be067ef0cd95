#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "kalm/autodiff.hpp"
#include "kalm/matrix.hpp"
#include "kalm/text.hpp"

namespace kalm {

/// Context encoder: token embedding plus sinusoidal positions, followed by
/// one residual single-head self-attention block. Produces H (n × d_model).
struct EncoderParams {
    Parameter embedding;  // vocab × d_model
    Parameter w_q;        // d_model × d_model
    Parameter w_k;
    Parameter w_v;
    double position_scale = 1.0;

    /// Embeddings uniform in +-0.1; projections uniform in
    /// +-weight_scale / sqrt(d_model).
    static EncoderParams init(std::size_t vocab_size, std::size_t d_model, double position_scale,
                              std::mt19937_64& rng, double weight_scale = 0.1);

    std::size_t d_model() const { return embedding.value.cols(); }
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
};

/// Standard sin/cos table, n × d, multiplied by `scale`.
Matrix sinusoidal_positions(std::size_t n, std::size_t d, double scale = 1.0);

Var encode(Tape& tape, const EncoderParams& enc, std::span<const std::size_t> ids);
Matrix encode(const EncoderParams& enc, const TokenSequence& tokens);

/// Column-wise mean of the rows of h.
std::vector<double> pool(const Matrix& h);

}  // namespace kalm
