#include "kalm/reasoner.hpp"

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

void check_retrieval(const RetrievalResult& retrieval, const KnowledgeBase& kb, std::size_t d) {
    if (kb.dimension() != d) {
        throw DimensionError("knowledge dimension " + std::to_string(kb.dimension()) +
                             " does not match model dimension " + std::to_string(d));
    }
    if (retrieval.positions.size() != retrieval.weights.size()) {
        throw DimensionError("retrieval positions and weights differ in length");
    }
    for (std::size_t j = 0; j < retrieval.positions.size(); ++j) {
        if (retrieval.positions[j] >= kb.size() ||
            kb.at(retrieval.positions[j]).id != retrieval.fragment_ids[j]) {
            throw DataError("retrieval result does not belong to this knowledge base");
        }
    }
}

}  // namespace

void FusionConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (top_k == 0) throw ConfigError("top_k must be >= 1");
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
}

Matrix knowledge_aggregate(const RetrievalResult& retrieval, const KnowledgeBase& kb) {
    Matrix g(1, kb.dimension());
    for (std::size_t j = 0; j < retrieval.positions.size(); ++j) {
        const auto& v = kb.at(retrieval.positions[j]).vector;
        for (std::size_t c = 0; c < v.size(); ++c) g(0, c) += retrieval.weights[j] * v[c];
    }
    return g;
}

Matrix knowledge_rows(const RetrievalResult& retrieval, const KnowledgeBase& kb, double alpha) {
    Matrix rows(retrieval.positions.size(), kb.dimension());
    const double s = 1.0 - alpha;
    for (std::size_t j = 0; j < retrieval.positions.size(); ++j) {
        const auto& v = kb.at(retrieval.positions[j]).vector;
        for (std::size_t c = 0; c < v.size(); ++c) rows(j, c) = s * v[c];
    }
    return rows;
}

Var fuse(Tape& tape, Var h, const RetrievalResult& retrieval, const KnowledgeBase& kb,
         double alpha) {
    const Matrix& hv = tape.value(h);
    check_retrieval(retrieval, kb, hv.cols());
    const Matrix g = knowledge_aggregate(retrieval, kb);
    Matrix offset(hv.rows(), hv.cols());
    for (std::size_t i = 0; i < hv.rows(); ++i)
        for (std::size_t c = 0; c < hv.cols(); ++c) offset(i, c) = (1.0 - alpha) * g(0, c);
    Var tokens = tape.add(tape.scale(h, alpha), tape.constant(std::move(offset)));
    if (retrieval.size() == 0) return tokens;
    return tape.concat_rows(tokens, tape.constant(knowledge_rows(retrieval, kb, alpha)));
}

FusedMatrix fuse(const Matrix& h, const RetrievalResult& retrieval, const KnowledgeBase& kb,
                 const FusionConfig& cfg) {
    cfg.validate();
    Tape tape;
    Var z = fuse(tape, tape.constant(h), retrieval, kb, cfg.alpha);
    return {tape.value(z), h.rows(), retrieval.size()};
}

AttentionParams AttentionParams::init(std::size_t d_model, std::size_t heads,
                                      std::mt19937_64& rng) {
    if (heads == 0 || d_model % heads != 0) {
        throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by heads " +
                          std::to_string(heads));
    }
    const std::size_t dh = d_model / heads;
    const double limit = 1.0 / std::sqrt(static_cast<double>(d_model));
    AttentionParams p;
    for (std::size_t h = 0; h < heads; ++h) {
        const std::string prefix = "reasoner.head" + std::to_string(h);
        p.w_q.emplace_back(prefix + ".w_q", uniform_matrix(d_model, dh, limit, rng));
        p.w_k.emplace_back(prefix + ".w_k", uniform_matrix(d_model, dh, limit, rng));
        p.w_v.emplace_back(prefix + ".w_v", uniform_matrix(d_model, dh, limit, rng));
    }
    p.w_o = Parameter("reasoner.w_o", uniform_matrix(d_model, d_model, limit, rng));
    return p;
}

AttentionParams AttentionParams::zeros(std::size_t d_model, std::size_t heads) {
    if (heads == 0 || d_model % heads != 0) {
        throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by heads " +
                          std::to_string(heads));
    }
    const std::size_t dh = d_model / heads;
    AttentionParams p;
    for (std::size_t h = 0; h < heads; ++h) {
        const std::string prefix = "reasoner.head" + std::to_string(h);
        p.w_q.emplace_back(prefix + ".w_q", Matrix(d_model, dh));
        p.w_k.emplace_back(prefix + ".w_k", Matrix(d_model, dh));
        p.w_v.emplace_back(prefix + ".w_v", Matrix(d_model, dh));
    }
    p.w_o = Parameter("reasoner.w_o", Matrix(d_model, d_model));
    return p;
}

std::vector<Parameter*> AttentionParams::parameters() {
    std::vector<Parameter*> out;
    for (std::size_t h = 0; h < heads(); ++h) {
        out.push_back(&w_q[h]);
        out.push_back(&w_k[h]);
        out.push_back(&w_v[h]);
    }
    out.push_back(&w_o);
    return out;
}

Matrix AttentionWeights::head_average() const {
    if (heads.empty()) return {};
    Matrix avg(heads[0].rows(), heads[0].cols());
    for (const auto& h : heads)
        for (std::size_t i = 0; i < avg.size(); ++i) avg.values()[i] += h.values()[i];
    const double inv = 1.0 / static_cast<double>(heads.size());
    for (double& v : avg.values()) v *= inv;
    return avg;
}

ReasonVars reason(Tape& tape, Var z, const AttentionParams& params) {
    const std::size_t d = tape.value(z).cols();
    if (params.heads() == 0 || d % params.heads() != 0 || params.d_model() != d) {
        throw ConfigError("reasoner expects d_model " + std::to_string(params.d_model()) +
                          " divisible by " + std::to_string(params.heads()) +
                          " heads, got input width " + std::to_string(d));
    }
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(params.d_head()));
    ReasonVars out;
    std::vector<Var> head_outputs;
    for (std::size_t h = 0; h < params.heads(); ++h) {
        Var q = tape.matmul(z, tape.param(params.w_q[h]));
        Var k = tape.matmul(z, tape.param(params.w_k[h]));
        Var v = tape.matmul(z, tape.param(params.w_v[h]));
        Var attn = tape.softmax_rows(tape.scale(tape.matmul_nt(q, k), inv_sqrt));
        out.attention.push_back(attn);
        head_outputs.push_back(tape.matmul(attn, v));
    }
    Var mixed = tape.matmul(tape.concat_cols(head_outputs), tape.param(params.w_o));
    out.z_out = tape.add(z, mixed);
    return out;
}

ReasonResult reason(const FusedMatrix& z, const AttentionParams& params) {
    Tape tape;
    ReasonVars vars = reason(tape, tape.constant(z.values), params);
    ReasonResult r;
    r.z_out = tape.value(vars.z_out);
    for (Var a : vars.attention) r.attention.heads.push_back(tape.value(a));
    return r;
}

ClassifierParams ClassifierParams::init(std::size_t d_model, std::size_t labels,
                                        std::mt19937_64& rng) {
    if (labels == 0) throw ConfigError("label set is empty");
    const double limit = 1.0 / std::sqrt(static_cast<double>(d_model));
    return {Parameter("classifier.w", uniform_matrix(d_model, labels, limit, rng)),
            Parameter("classifier.b", Matrix(1, labels))};
}

std::vector<Parameter*> ClassifierParams::parameters() { return {&w, &b}; }

Var predict(Tape& tape, Var z_out, std::size_t n_tokens, const ClassifierParams& head) {
    if (n_tokens == 0) throw DimensionError("predict needs at least one token row");
    if (head.w.value.cols() == 0) throw ConfigError("label set is empty");
    Var pooled = tape.mean_rows(tape.slice_rows(z_out, 0, n_tokens));
    Var logits = tape.add(tape.matmul(pooled, tape.param(head.w)), tape.param(head.b));
    return tape.softmax_rows(logits);
}

Prediction make_prediction(std::span<const double> distribution,
                           const std::vector<std::string>& labels) {
    if (labels.empty()) throw ConfigError("label set is empty");
    if (distribution.size() != labels.size()) {
        throw DimensionError("distribution has " + std::to_string(distribution.size()) +
                             " entries for " + std::to_string(labels.size()) + " labels");
    }
    Prediction p;
    p.label_distribution.assign(distribution.begin(), distribution.end());
    for (std::size_t i = 1; i < distribution.size(); ++i)
        if (distribution[i] > distribution[p.predicted_index]) p.predicted_index = i;
    p.predicted_label = labels[p.predicted_index];
    return p;
}

Prediction predict(const Matrix& z_out, std::size_t n_tokens, const ClassifierParams& head,
                   const std::vector<std::string>& labels) {
    Tape tape;
    Var probs = predict(tape, tape.constant(z_out), n_tokens, head);
    return make_prediction(tape.value(probs).row(0), labels);
}

}  // namespace kalm
