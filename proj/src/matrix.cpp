#include "kalm/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kalm/errors.hpp"

namespace kalm {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
        throw DimensionError("matrix " + shape_string() + " given " +
                             std::to_string(values_.size()) + " values");
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    values_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw DimensionError("ragged matrix literal");
        values_.insert(values_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Matrix::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul shape mismatch: " + a.shape_string() + " x " +
                             b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            auto b_row = b.row(p);
            for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += av * b_row[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

Matrix softmax_rows(const Matrix& m) {
    if (m.empty()) throw DimensionError("softmax_rows of empty matrix");
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto in = m.row(i);
        auto o = out.row(i);
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (double& v : o) v /= sum;
    }
    return out;
}

AttentionResult scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                     std::size_t scale_dim) {
    if (q.cols() != k.cols() || k.rows() != v.rows()) {
        throw DimensionError("attention shape mismatch: q " + q.shape_string() + ", k " +
                             k.shape_string() + ", v " + v.shape_string());
    }
    if (scale_dim == 0) throw DimensionError("attention scale_dim must be positive");
    Matrix logits = matmul(q, transpose(k));
    const double inv = 1.0 / std::sqrt(static_cast<double>(scale_dim));
    for (double& x : logits.values()) x *= inv;
    AttentionResult r;
    r.weights = softmax_rows(logits);
    r.output = matmul(r.weights, v);
    return r;
}

double cross_entropy(std::span<const double> predicted, std::size_t target_class) {
    if (target_class >= predicted.size()) {
        throw IndexError("target class " + std::to_string(target_class) + " out of range for " +
                         std::to_string(predicted.size()) + " classes");
    }
    return -std::log(predicted[target_class] + kLogEpsilon);
}

}  // namespace kalm
