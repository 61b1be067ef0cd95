#pragma once

// Minimal reverse-mode tape covering the operator set of the reasoning
// pipeline. Values are recorded eagerly; backward() replays the tape in
// reverse and adds parameter gradients into the owning Parameter objects.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kalm/matrix.hpp"

namespace kalm {

/// Trainable tensor with its accumulated gradient.
struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Matrix value);

    std::string name;
    Matrix value;
    Matrix grad;

    void zero_grad();
};

void zero_grads(std::span<Parameter* const> params);

/// Handle to a node on a Tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
};

class Tape {
 public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    Var constant(Matrix m);
    /// Leaf bound to a parameter; the parameter must outlive the tape.
    Var param(const Parameter& p);

    const Matrix& value(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    Var matmul(Var a, Var b);
    /// a · bᵀ without materialising the transpose.
    Var matmul_nt(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var log(Var a);
    Var softmax_rows(Var a);
    /// Divides every row by its sum.
    Var normalize_rows(Var a);
    Var gather_rows(Var table, std::span<const std::size_t> ids);
    Var mean_rows(Var a);
    Var sum_all(Var a);
    Var concat_rows(Var a, Var b);
    Var concat_cols(std::span<const Var> parts);
    Var slice_rows(Var a, std::size_t begin, std::size_t end);
    Var slice_cols(Var a, std::size_t begin, std::size_t end);
    /// -ln(p[0, target] + 1e-12) for a 1×C probability row.
    Var cross_entropy(Var probs, std::size_t target);

    /// Seeds d(root)/d(root) = seed and adds gradients into every parameter in
    /// `params` that appears on the tape. May be called repeatedly; each call
    /// adds again.
    void backward(Var root, std::span<Parameter* const> params, double seed = 1.0);

 private:
    struct Node {
        Matrix value;
        const Matrix* ref = nullptr;
        const Parameter* param = nullptr;
        Matrix grad;
        std::function<void(Tape&, std::size_t)> backward;
    };

    Var push(Matrix value, std::function<void(Tape&, std::size_t)> backward);
    Matrix& grad(std::size_t id);
    const Node& node(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace kalm
