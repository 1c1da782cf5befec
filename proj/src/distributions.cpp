#include "ctalign/distributions.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "ctalign/error.hpp"

namespace ctalign {

DiscretePointSet make_point_set(Matrix support, SimplexVector weights) {
  if (weights.size() != support.cols()) {
    throw ShapeError("point set has " + std::to_string(support.cols()) +
                     " support columns but " + std::to_string(weights.size()) +
                     " weights");
  }
  return DiscretePointSet(std::move(support), std::move(weights));
}

LabelVector::LabelVector(std::vector<std::uint8_t> y) : y_(std::move(y)) {
  for (auto v : y_) {
    if (v > 1) throw ShapeError("label entries must be 0 or 1");
  }
}

LabelVector LabelVector::from_ints(const std::vector<int>& y) {
  std::vector<std::uint8_t> out;
  out.reserve(y.size());
  for (int v : y) {
    if (v != 0 && v != 1) throw ShapeError("label entries must be 0 or 1");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return LabelVector(std::move(out));
}

std::size_t LabelVector::positives() const noexcept {
  std::size_t n = 0;
  for (auto v : y_) n += v;
  return n;
}

std::vector<double> LabelVector::normalized() const {
  const std::size_t n = positives();
  if (n == 0) throw EmptyLabelSetError("label vector has no positive entries");
  std::vector<double> out(y_.size());
  for (std::size_t m = 0; m < y_.size(); ++m) {
    out[m] = y_[m] ? 1.0 / static_cast<double>(n) : 0.0;
  }
  return out;
}

std::vector<double> theta_scores(const Matrix& patches, const Matrix& labels,
                                 const LabelVector& y) {
  if (patches.rows() != labels.rows()) {
    throw ShapeError("patch dimension " + std::to_string(patches.rows()) +
                     " differs from label dimension " +
                     std::to_string(labels.rows()));
  }
  if (labels.cols() != y.size()) {
    throw ShapeError("label table has " + std::to_string(labels.cols()) +
                     " columns but y has " + std::to_string(y.size()) +
                     " entries");
  }
  const std::vector<double> label_aware = matvec(labels, y.normalized());
  return matvec_t(patches, label_aware);
}

SimplexVector theta_from_scores(const std::vector<double>& scores,
                                std::size_t k, ThetaMode mode) {
  std::vector<double> masked = top_k_mask(scores, k);
  if (mode == ThetaMode::kBinary) {
    for (double& s : masked) s = (s == kMasked) ? 0.0 : 1.0;
  }
  SimplexVector theta = softmax_stable(masked);
  // Kept entries stay strictly positive even when exp underflows.
  bool underflow = false;
  for (std::size_t i = 0; i < masked.size(); ++i) underflow |= masked[i] != kMasked && theta[i] == 0.0;
  if (!underflow) return theta;
  std::vector<double> w(theta.weights().begin(), theta.weights().end());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (masked[i] != kMasked) w[i] = std::max(w[i], std::numeric_limits<double>::min());
  }
  return SimplexVector(std::move(w));
}

SimplexVector build_theta(const Matrix& patches, const Matrix& labels,
                          const LabelVector& y, std::size_t k, ThetaMode mode) {
  if (k == 0) throw ConfigError("top-k needs k >= 1");
  return theta_from_scores(theta_scores(patches, labels, y), k, mode);
}

SimplexVector build_beta(const LabelVector& y, BetaMode mode) {
  if (y.positives() == 0) {
    throw EmptyLabelSetError("label vector has no positive entries");
  }
  if (mode == BetaMode::kMasked) return SimplexVector(y.normalized());
  std::vector<double> raw(y.size());
  for (std::size_t m = 0; m < y.size(); ++m) raw[m] = y[m] ? 1.0 : 0.0;
  return softmax_stable(raw);
}

}  // namespace ctalign
