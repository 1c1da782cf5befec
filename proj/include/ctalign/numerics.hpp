#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

namespace ctalign {

// Sentinel for masked scores; softmax_stable maps it to an exact zero.
inline constexpr double kMasked = -std::numeric_limits<double>::infinity();

// Dense row-major matrix of doubles. Point sets store one point per column.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Throws ShapeError on a size mismatch and EvaluationError on NaN/Inf.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::vector<double> column(std::size_t c) const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Nonnegative weights summing to one (within 1e-9).
class SimplexVector {
 public:
  static constexpr double kTolerance = 1e-9;

  SimplexVector() = default;
  // Throws SimplexError when the weights are not on the simplex.
  explicit SimplexVector(std::vector<double> weights);

  static SimplexVector uniform(std::size_t n);

  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  std::span<const double> weights() const noexcept { return weights_; }

 private:
  std::vector<double> weights_;
};

// Softmax with -inf entries treated as masked (exactly zero output). Throws
// AllMaskedError when nothing is left, EvaluationError on NaN or +inf.
SimplexVector softmax_stable(std::span<const double> scores);

// Keeps the k largest scores, replacing the rest with kMasked. Ties at the
// k-th rank go to the lowest index. k is clamped to the length; k == 0 is a
// ConfigError.
std::vector<double> top_k_mask(std::span<const double> scores, std::size_t k);

// Entry (i, j) is the cosine of column i of a and column j of b. Throws
// ShapeError on mismatched row counts and DegenerateVectorError on a
// zero-norm column.
Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b);

// Accumulates into grad_a / grad_b the gradient of sum_ij g(i, j) * cos(a_i, b_j).
void cosine_similarity_backward(const Matrix& a, const Matrix& b,
                                const Matrix& g, Matrix& grad_a,
                                Matrix& grad_b);

// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

std::vector<double> matvec(const Matrix& a, std::span<const double> x);
std::vector<double> matvec_t(const Matrix& a, std::span<const double> x);

using ScalarFunction = std::function<double(std::span<const double>)>;
using GradientFunction = std::function<std::vector<double>(std::span<const double>)>;

inline constexpr double kGradCheckStep = 1e-5;

// Max over coordinates of |analytic - central| / max(1, |central|), using
// central differences with step kGradCheckStep. Throws EvaluationError when
// f is not finite at a probe point.
double grad_check(const ScalarFunction& f, const GradientFunction& grad,
                  std::span<const double> point);

}  // namespace ctalign
