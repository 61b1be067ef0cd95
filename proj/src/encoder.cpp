#include "kalm/encoder.hpp"

#include <cmath>

#include "kalm/errors.hpp"

namespace kalm {

namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double limit, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = dist(rng);
    return m;
}

}  // namespace

EncoderParams EncoderParams::init(std::size_t vocab_size, std::size_t d_model,
                                  double position_scale, std::mt19937_64& rng,
                                  double weight_scale) {
    EncoderParams p;
    p.embedding = Parameter("encoder.embedding", uniform_matrix(vocab_size, d_model, 0.1, rng));
    const double limit = weight_scale / std::sqrt(static_cast<double>(d_model));
    p.w_q = Parameter("encoder.w_q", uniform_matrix(d_model, d_model, limit, rng));
    p.w_k = Parameter("encoder.w_k", uniform_matrix(d_model, d_model, limit, rng));
    p.w_v = Parameter("encoder.w_v", uniform_matrix(d_model, d_model, limit, rng));
    p.position_scale = position_scale;
    return p;
}

std::vector<Parameter*> EncoderParams::parameters() { return {&embedding, &w_q, &w_k, &w_v}; }

std::vector<const Parameter*> EncoderParams::parameters() const {
    return {&embedding, &w_q, &w_k, &w_v};
}

Matrix sinusoidal_positions(std::size_t n, std::size_t d, double scale) {
    Matrix p(n, d);
    for (std::size_t pos = 0; pos < n; ++pos) {
        for (std::size_t i = 0; i < d; ++i) {
            const double pair = static_cast<double>(i - i % 2);
            const double angle =
                static_cast<double>(pos) / std::pow(10000.0, pair / static_cast<double>(d));
            p(pos, i) = scale * (i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return p;
}

Var encode(Tape& tape, const EncoderParams& enc, std::span<const std::size_t> ids) {
    if (ids.empty()) throw EmptyInputError("cannot encode an empty token sequence");
    const std::size_t d = enc.d_model();
    Var x = tape.add(tape.gather_rows(tape.param(enc.embedding), ids),
                     tape.constant(sinusoidal_positions(ids.size(), d, enc.position_scale)));
    Var q = tape.matmul(x, tape.param(enc.w_q));
    Var k = tape.matmul(x, tape.param(enc.w_k));
    Var v = tape.matmul(x, tape.param(enc.w_v));
    Var logits = tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
    Var attended = tape.matmul(tape.softmax_rows(logits), v);
    return tape.add(x, attended);
}

Matrix encode(const EncoderParams& enc, const TokenSequence& tokens) {
    Tape tape;
    return tape.value(encode(tape, enc, tokens.ids));
}

std::vector<double> pool(const Matrix& h) {
    if (h.rows() == 0) throw EmptyInputError("cannot pool an empty context matrix");
    std::vector<double> out(h.cols(), 0.0);
    for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = 0; j < h.cols(); ++j) out[j] += h(i, j);
    for (double& v : out) v /= static_cast<double>(h.rows());
    return out;
}

}  // namespace kalm
