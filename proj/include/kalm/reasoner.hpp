#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "kalm/autodiff.hpp"
#include "kalm/knowledge.hpp"
#include "kalm/matrix.hpp"

namespace kalm {

struct FusionConfig {
    double alpha = 0.7;
    std::size_t top_k = 4;
    double tau = 0.1;

    void validate() const;
};

/// Token rows z_i followed by the retrieved knowledge rows.
struct FusedMatrix {
    Matrix values;
    std::size_t n_tokens = 0;
    std::size_t k_sel = 0;
};

/// g = sum_j w_j k_j as a 1 × d row.
Matrix knowledge_aggregate(const RetrievalResult& retrieval, const KnowledgeBase& kb);

/// Knowledge rows scaled by (1 - alpha), k_sel × d.
Matrix knowledge_rows(const RetrievalResult& retrieval, const KnowledgeBase& kb, double alpha);

/// z_i = alpha h_i + (1 - alpha) g, then knowledge rows appended. Gradient
/// flows through h only.
Var fuse(Tape& tape, Var h, const RetrievalResult& retrieval, const KnowledgeBase& kb,
         double alpha);
FusedMatrix fuse(const Matrix& h, const RetrievalResult& retrieval, const KnowledgeBase& kb,
                 const FusionConfig& cfg);

/// Multi-head reasoning block parameters. Per head W_Q, W_K, W_V are
/// d_model × d_head; W_O is d_model × d_model.
struct AttentionParams {
    std::vector<Parameter> w_q;
    std::vector<Parameter> w_k;
    std::vector<Parameter> w_v;
    Parameter w_o;

    static AttentionParams init(std::size_t d_model, std::size_t heads, std::mt19937_64& rng);
    /// All-zero parameters of the right shapes.
    static AttentionParams zeros(std::size_t d_model, std::size_t heads);

    std::size_t heads() const { return w_q.size(); }
    std::size_t d_model() const { return w_o.value.rows(); }
    std::size_t d_head() const { return heads() == 0 ? 0 : d_model() / heads(); }
    std::vector<Parameter*> parameters();
};

/// Per-head attention distributions over the fused positions.
struct AttentionWeights {
    std::vector<Matrix> heads;

    Matrix head_average() const;
};

struct ReasonVars {
    Var z_out;
    std::vector<Var> attention;  // one per head, (n + k) × (n + k)
};

/// z_out = z + Concat_h(softmax(Q_h K_hᵀ / sqrt(d_head)) V_h) W_O
ReasonVars reason(Tape& tape, Var z, const AttentionParams& params);

struct ReasonResult {
    Matrix z_out;
    AttentionWeights attention;
};

ReasonResult reason(const FusedMatrix& z, const AttentionParams& params);

struct ClassifierParams {
    Parameter w;  // d_model × labels
    Parameter b;  // 1 × labels

    static ClassifierParams init(std::size_t d_model, std::size_t labels, std::mt19937_64& rng);
    std::vector<Parameter*> parameters();
};

struct Prediction {
    std::vector<double> label_distribution;
    std::size_t predicted_index = 0;
    std::string predicted_label;
};

/// Mean over the first n_tokens rows, linear map, softmax. Returns 1 × L.
Var predict(Tape& tape, Var z_out, std::size_t n_tokens, const ClassifierParams& head);

/// Argmax with ties resolved toward the earlier label.
Prediction make_prediction(std::span<const double> distribution,
                           const std::vector<std::string>& labels);

Prediction predict(const Matrix& z_out, std::size_t n_tokens, const ClassifierParams& head,
                   const std::vector<std::string>& labels);

}  // namespace kalm
