#include "ctalign/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ctalign/error.hpp"
#include "ctalign/kernels.hpp"

namespace ctalign {

namespace {

// Columns of m as unit-norm rows of the result, plus the original norms.
struct UnitColumns {
  Matrix unit;  // cols x rows of the source
  std::vector<double> norms;
};

UnitColumns unit_columns(const Matrix& m, const char* which) {
  UnitColumns out{m.transposed(), std::vector<double>(m.cols())};
  for (std::size_t c = 0; c < m.cols(); ++c) {
    auto v = out.unit.row(c);
    const double norm = std::sqrt(kernels::dot(v, v));
    if (!(norm > 0.0)) {
      throw DegenerateVectorError(std::string("zero-norm column ") +
                                  std::to_string(c) + " in " + which);
    }
    out.norms[c] = norm;
    for (double& x : v) x /= norm;
  }
  return out;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) throw EvaluationError("non-finite matrix fill");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " given " +
                     std::to_string(data_.size()) + " entries");
  }
  for (double x : data_) {
    if (!std::isfinite(x)) throw EvaluationError("non-finite matrix entry");
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

SimplexVector::SimplexVector(std::vector<double> weights)
    : weights_(std::move(weights)) {
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw SimplexError("simplex weight is negative or not finite");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > kTolerance) {
    throw SimplexError("simplex weights sum to " + std::to_string(total));
  }
}

SimplexVector SimplexVector::uniform(std::size_t n) {
  if (n == 0) throw ShapeError("uniform weights need at least one entry");
  return SimplexVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

SimplexVector softmax_stable(std::span<const double> scores) {
  if (scores.empty()) throw ShapeError("softmax of an empty sequence");
  double max_score = kMasked;
  for (double s : scores) {
    if (std::isnan(s) || s == std::numeric_limits<double>::infinity()) {
      throw EvaluationError("softmax score is NaN or +inf");
    }
    max_score = std::max(max_score, s);
  }
  if (max_score == kMasked) throw AllMaskedError("every softmax entry is masked");

  std::vector<double> out(scores.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] == kMasked) continue;
    out[i] = std::exp(scores[i] - max_score);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return SimplexVector(std::move(out));
}

std::vector<double> top_k_mask(std::span<const double> scores, std::size_t k) {
  if (k == 0) throw ConfigError("top-k needs k >= 1");
  std::vector<double> out(scores.begin(), scores.end());
  if (k >= scores.size()) return out;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  for (std::size_t r = k; r < order.size(); ++r) out[order[r]] = kMasked;
  return out;
}

Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("cosine similarity: dimension " + std::to_string(a.rows()) +
                     " vs " + std::to_string(b.rows()));
  }
  const Matrix at = a.transposed();
  const Matrix bt = b.transposed();
  std::vector<double> na(a.cols()), nb(b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    na[i] = kernels::dot(at.row(i), at.row(i));
    if (!(na[i] > 0.0)) {
      throw DegenerateVectorError("zero-norm column " + std::to_string(i) + " in first operand");
    }
  }
  for (std::size_t j = 0; j < b.cols(); ++j) {
    nb[j] = kernels::dot(bt.row(j), bt.row(j));
    if (!(nb[j] > 0.0)) {
      throw DegenerateVectorError("zero-norm column " + std::to_string(j) + " in second operand");
    }
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      const double dot = kernels::dot(at.row(i), bt.row(j));
      // One square root of the product makes cos(x, x) exactly 1.
      const double sq = na[i] * nb[j];
      out(i, j) = (std::isfinite(sq) && sq > 0.0)
                      ? dot / std::sqrt(sq)
                      : dot / std::sqrt(na[i]) / std::sqrt(nb[j]);
    }
  }
  return out;
}

void cosine_similarity_backward(const Matrix& a, const Matrix& b,
                                const Matrix& g, Matrix& grad_a,
                                Matrix& grad_b) {
  if (g.rows() != a.cols() || g.cols() != b.cols() ||
      grad_a.rows() != a.rows() || grad_a.cols() != a.cols() ||
      grad_b.rows() != b.rows() || grad_b.cols() != b.cols()) {
    throw ShapeError("cosine similarity backward: operand shapes disagree");
  }
  const UnitColumns ua = unit_columns(a, "first operand");
  const UnitColumns ub = unit_columns(b, "second operand");
  const std::size_t d = a.rows();

  // Gradients w.r.t. the unit vectors, point-major.
  Matrix du(a.cols(), d);
  Matrix dv(b.cols(), d);
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      const double gij = g(i, j);
      if (gij == 0.0) continue;
      kernels::axpy(gij, ub.unit.row(j), du.row(i));
      kernels::axpy(gij, ua.unit.row(i), dv.row(j));
    }
  }

  // Through the normalisation x / |x|.
  auto scatter = [d](const UnitColumns& u, const Matrix& dunit, Matrix& grad) {
    for (std::size_t c = 0; c < u.unit.rows(); ++c) {
      const double proj = kernels::dot(u.unit.row(c), dunit.row(c));
      for (std::size_t r = 0; r < d; ++r) {
        grad(r, c) += (dunit(c, r) - u.unit(c, r) * proj) / u.norms[c];
      }
    }
  };
  scatter(ua, du, grad_a);
  scatter(ub, dv, grad_b);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t k = 0; k < a.cols(); ++k)
      if (a(r, k) != 0.0) kernels::axpy(a(r, k), b.row(k), out.row(r));
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k)
    for (std::size_t r = 0; r < a.cols(); ++r)
      if (a(k, r) != 0.0) kernels::axpy(a(k, r), b.row(k), out.row(r));
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < b.rows(); ++c)
      out(r, c) = kernels::dot(a.row(r), b.row(c));
  return out;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw ShapeError("matvec: dimension mismatch");
  std::vector<double> out(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) out[r] = kernels::dot(a.row(r), x);
  return out;
}

std::vector<double> matvec_t(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) throw ShapeError("matvec_t: dimension mismatch");
  std::vector<double> out(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) kernels::axpy(x[r], a.row(r), out);
  return out;
}

double grad_check(const ScalarFunction& f, const GradientFunction& grad,
                  std::span<const double> point) {
  std::vector<double> probe(point.begin(), point.end());
  const std::vector<double> analytic = grad(point);
  if (analytic.size() != point.size()) {
    throw ShapeError("gradient has " + std::to_string(analytic.size()) +
                     " entries for a point of size " +
                     std::to_string(point.size()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + kGradCheckStep;
    const double up = f(probe);
    probe[i] = saved - kGradCheckStep;
    const double down = f(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw EvaluationError("function not finite near coordinate " +
                            std::to_string(i));
    }
    const double central = (up - down) / (2.0 * kGradCheckStep);
    const double err = std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "ShapeError";
    case ErrorKind::kSimplex: return "SimplexError";
    case ErrorKind::kAllMasked: return "AllMaskedError";
    case ErrorKind::kDegenerateVector: return "DegenerateVectorError";
    case ErrorKind::kEvaluation: return "EvaluationError";
    case ErrorKind::kEmptyLabelSet: return "EmptyLabelSetError";
    case ErrorKind::kConfig: return "ConfigError";
    case ErrorKind::kGrid: return "GridError";
    case ErrorKind::kNumerical: return "NumericalError";
    case ErrorKind::kUndefinedMetric: return "UndefinedMetricError";
    case ErrorKind::kParse: return "ParseError";
  }
  return "Error";
}

}  // namespace ctalign
