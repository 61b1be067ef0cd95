#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace kalm {

/// Dense row-major matrix of doubles. Plain value type.
class Matrix {
 public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix row_vector(std::span<const double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    void fill(double v);
    bool all_finite() const;
    std::string shape_string() const;

    bool operator==(const Matrix&) const = default;

 private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& m);

struct AttentionResult {
    Matrix output;
    Matrix weights;
};

/// weights = softmax(q kᵀ / sqrt(scale_dim)), output = weights v.
AttentionResult scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                     std::size_t scale_dim);

/// -ln(p[target] + 1e-12). `predicted` must be a probability vector.
double cross_entropy(std::span<const double> predicted, std::size_t target_class);

inline constexpr double kLogEpsilon = 1e-12;

}  // namespace kalm
