#include "kalm/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "kalm/errors.hpp"

namespace kalm {

Parameter::Parameter(std::string n, Matrix v)
    : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

void Parameter::zero_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
        grad = Matrix(value.rows(), value.cols());
    } else {
        grad.fill(0.0);
    }
}

void zero_grads(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->zero_grad();
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + " shape mismatch: " + a.shape_string() + " vs " +
                             b.shape_string());
    }
}

void add_into(Matrix& dst, const Matrix& src) {
    auto& d = dst.values();
    const auto& s = src.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw StateError("variable not on this tape");
    return nodes_[v.id];
}

const Matrix& Tape::value(Var v) const {
    const Node& n = node(v);
    return n.ref ? *n.ref : n.value;
}

Matrix& Tape::grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) {
        const Matrix& v = n.ref ? *n.ref : n.value;
        n.grad = Matrix(v.rows(), v.cols());
    }
    return n.grad;
}

Var Tape::push(Matrix value, std::function<void(Tape&, std::size_t)> backward) {
    if (!value.all_finite()) throw NumericError("non-finite value produced on tape");
    Node n;
    n.value = std::move(value);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix m) { return push(std::move(m), nullptr); }

Var Tape::param(const Parameter& p) {
    Node n;
    n.ref = &p.value;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::matmul(Var a, Var b) {
    Matrix out = kalm::matmul(value(a), value(b));
    return push(std::move(out), [a, b](Tape& t, std::size_t self) {
        const Matrix g = t.nodes_[self].grad;
        add_into(t.grad(a.id), kalm::matmul(g, transpose(t.value(b))));
        add_into(t.grad(b.id), kalm::matmul(transpose(t.value(a)), g));
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (av.cols() != bv.cols()) {
        throw DimensionError("matmul_nt shape mismatch: " + av.shape_string() + " x (" +
                             bv.shape_string() + ")^T");
    }
    Matrix out = kalm::matmul(av, transpose(bv));
    return push(std::move(out), [a, b](Tape& t, std::size_t self) {
        const Matrix g = t.nodes_[self].grad;
        add_into(t.grad(a.id), kalm::matmul(g, t.value(b)));
        add_into(t.grad(b.id), kalm::matmul(transpose(g), t.value(a)));
    });
}

Var Tape::add(Var a, Var b) {
    require_same_shape(value(a), value(b), "add");
    Matrix out = value(a);
    add_into(out, value(b));
    return push(std::move(out), [a, b](Tape& t, std::size_t self) {
        const Matrix g = t.nodes_[self].grad;
        add_into(t.grad(a.id), g);
        add_into(t.grad(b.id), g);
    });
}

Var Tape::sub(Var a, Var b) {
    require_same_shape(value(a), value(b), "sub");
    Matrix out = value(a);
    const auto& bv = value(b).values();
    for (std::size_t i = 0; i < bv.size(); ++i) out.values()[i] -= bv[i];
    return push(std::move(out), [a, b](Tape& t, std::size_t self) {
        const Matrix g = t.nodes_[self].grad;
        add_into(t.grad(a.id), g);
        auto& gb = t.grad(b.id).values();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g.values()[i];
    });
}

Var Tape::mul(Var a, Var b) {
    require_same_shape(value(a), value(b), "mul");
    Matrix out = value(a);
    const auto& bv = value(b).values();
    for (std::size_t i = 0; i < bv.size(); ++i) out.values()[i] *= bv[i];
    return push(std::move(out), [a, b](Tape& t, std::size_t self) {
        const auto& g = t.nodes_[self].grad.values();
        const auto& av = t.value(a).values();
        const auto& bv = t.value(b).values();
        auto& ga = t.grad(a.id).values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        auto& gb = t.grad(b.id).values();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    });
}

Var Tape::scale(Var a, double s) {
    Matrix out = value(a);
    for (double& x : out.values()) x *= s;
    return push(std::move(out), [a, s](Tape& t, std::size_t self) {
        const auto& g = t.nodes_[self].grad.values();
        auto& ga = t.grad(a.id).values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
}

Var Tape::add_scalar(Var a, double s) {
    Matrix out = value(a);
    for (double& x : out.values()) x += s;
    return push(std::move(out), [a](Tape& t, std::size_t self) {
        add_into(t.grad(a.id), t.nodes_[self].grad);
    });
}

Var Tape::log(Var a) {
    Matrix out = value(a);
    for (double& x : out.values()) {
        if (!(x > 0.0)) throw NumericError("log of non-positive value");
        x = std::log(x);
    }
    return push(std::move(out), [a](Tape& t, std::size_t self) {
        const auto& g = t.nodes_[self].grad.values();
        const auto& av = t.value(a).values();
        auto& ga = t.grad(a.id).values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / av[i];
    });
}

Var Tape::softmax_rows(Var a) {
    Matrix out = kalm::softmax_rows(value(a));
    return push(std::move(out), [a](Tape& t, std::size_t self) {
        const Matrix& y = t.nodes_[self].value;
        const Matrix& g = t.nodes_[self].grad;
        Matrix& ga = t.grad(a.id);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            auto yr = y.row(i);
            auto gr = g.row(i);
            double dot = 0.0;
            for (std::size_t j = 0; j < yr.size(); ++j) dot += gr[j] * yr[j];
            auto out = ga.row(i);
            for (std::size_t j = 0; j < yr.size(); ++j) out[j] += yr[j] * (gr[j] - dot);
        }
    });
}

Var Tape::normalize_rows(Var a) {
    const Matrix& av = value(a);
    Matrix out = av;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        double s = 0.0;
        for (double x : r) s += x;
        if (s == 0.0) throw NumericError("normalize_rows of zero-sum row");
        for (double& x : r) x /= s;
    }
    return push(std::move(out), [a](Tape& t, std::size_t self) {
        const Matrix& y = t.nodes_[self].value;
        const Matrix& g = t.nodes_[self].grad;
        const Matrix& x = t.value(a);
        Matrix& ga = t.grad(a.id);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double s = 0.0;
            for (double v : x.row(i)) s += v;
            double dot = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
            for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += (g(i, j) - dot) / s;
        }
    });
}

Var Tape::gather_rows(Var table, std::span<const std::size_t> ids) {
    const Matrix& tv = value(table);
    Matrix out(ids.size(), tv.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= tv.rows()) {
            throw IndexError("row id " + std::to_string(ids[i]) + " out of range for " +
                             tv.shape_string());
        }
        std::copy(tv.row(ids[i]).begin(), tv.row(ids[i]).end(), out.row(i).begin());
    }
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    return push(std::move(out), [table, idx = std::move(idx)](Tape& t, std::size_t self) {
        const Matrix& g = t.nodes_[self].grad;
        Matrix& gt = t.grad(table.id);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto dst = gt.row(idx[i]);
            auto src = g.row(i);
            for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
        }
    });
}

Var Tape::mean_rows(Var a) {
    const Matrix& av = value(a);
    if (av.rows() == 0) throw DimensionError("mean_rows of empty matrix");
    Matrix out(1, av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) += av(i, j);
    const double inv = 1.0 / static_cast<double>(av.rows());
    for (double& x : out.values()) x *= inv;
    return push(std::move(out), [a](Tape& t, std::size_t self) {
        const Matrix& g = t.nodes_[self].grad;
        Matrix& ga = t.grad(a.id);
        const double inv = 1.0 / static_cast<double>(ga.rows());
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(0, j) * inv;
    });
}

Var Tape::sum_all(Var a) {
    double s = 0.0;
    for (double x : value(a).values()) s += x;
    return push(Matrix(1, 1, s), [a](Tape& t, std::size_t self) {
        const double g = t.nodes_[self].grad(0, 0);
        for (double& x : t.grad(a.id).values()) x += g;
    });
}

Var Tape::concat_rows(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (av.cols() != bv.cols()) {
        throw DimensionError("concat_rows column mismatch: " + av.shape_string() + " vs " +
                             bv.shape_string());
    }
    std::vector<double> vals = av.values();
    vals.insert(vals.end(), bv.values().begin(), bv.values().end());
    const std::size_t split = av.size();
    return push(Matrix(av.rows() + bv.rows(), av.cols(), std::move(vals)),
                [a, b, split](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad.values();
                    auto& ga = t.grad(a.id).values();
                    auto& gb = t.grad(b.id).values();
                    for (std::size_t i = 0; i < split; ++i) ga[i] += g[i];
                    for (std::size_t i = split; i < g.size(); ++i) gb[i - split] += g[i];
                });
}

Var Tape::concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_cols of nothing");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t cols = 0;
    for (Var p : parts) {
        if (value(p).rows() != rows) throw DimensionError("concat_cols row mismatch");
        cols += value(p).cols();
    }
    Matrix out(rows, cols);
    std::size_t offset = 0;
    for (Var p : parts) {
        const Matrix& pv = value(p);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < pv.cols(); ++j) out(i, offset + j) = pv(i, j);
        offset += pv.cols();
    }
    std::vector<Var> ps(parts.begin(), parts.end());
    return push(std::move(out), [ps = std::move(ps)](Tape& t, std::size_t self) {
        const Matrix g = t.nodes_[self].grad;
        std::size_t offset = 0;
        for (Var p : ps) {
            Matrix& gp = t.grad(p.id);
            for (std::size_t i = 0; i < gp.rows(); ++i)
                for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, offset + j);
            offset += gp.cols();
        }
    });
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t end) {
    const Matrix& av = value(a);
    if (begin > end || end > av.rows()) throw DimensionError("slice_rows out of range");
    Matrix out(end - begin, av.cols(),
               std::vector<double>(av.values().begin() + begin * av.cols(),
                                   av.values().begin() + end * av.cols()));
    return push(std::move(out), [a, begin](Tape& t, std::size_t self) {
        const Matrix& g = t.nodes_[self].grad;
        Matrix& ga = t.grad(a.id);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga(begin + i, j) += g(i, j);
    });
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Matrix& av = value(a);
    if (begin > end || end > av.cols()) throw DimensionError("slice_cols out of range");
    Matrix out(av.rows(), end - begin);
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = av(i, j);
    return push(std::move(out), [a, begin](Tape& t, std::size_t self) {
        const Matrix& g = t.nodes_[self].grad;
        Matrix& ga = t.grad(a.id);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga(i, begin + j) += g(i, j);
    });
}

Var Tape::cross_entropy(Var probs, std::size_t target) {
    const Matrix& pv = value(probs);
    if (pv.rows() != 1) throw DimensionError("cross_entropy expects a single row");
    const double loss = kalm::cross_entropy(pv.row(0), target);
    return push(Matrix(1, 1, loss), [probs, target](Tape& t, std::size_t self) {
        const double g = t.nodes_[self].grad(0, 0);
        const double p = t.value(probs)(0, target);
        t.grad(probs.id)(0, target) -= g / (p + kLogEpsilon);
    });
}

void Tape::backward(Var root, std::span<Parameter* const> params, double seed) {
    if (nodes_.empty() || !root.valid() || root.id >= nodes_.size()) {
        throw StateError("backward called before a forward pass");
    }
    const Matrix& rv = value(root);
    if (rv.rows() != 1 || rv.cols() != 1) {
        throw StateError("backward root must be a scalar, got " + rv.shape_string());
    }
    for (Node& n : nodes_) n.grad = Matrix();
    grad(root.id)(0, 0) = seed;
    for (std::size_t i = root.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty() || !n.backward) continue;
        n.backward(*this, i);
    }
    for (Node& n : nodes_) {
        if (!n.param || n.grad.empty()) continue;
        auto it = std::find_if(params.begin(), params.end(),
                               [&](const Parameter* p) { return p == n.param; });
        if (it == params.end()) continue;
        Parameter& p = **it;
        if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
        add_into(p.grad, n.grad);
    }
}

}  // namespace kalm
