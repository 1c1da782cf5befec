#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ctalign/numerics.hpp"

namespace ctalign {

// Weighted set of points, one point per support column.
class DiscretePointSet {
 public:
  DiscretePointSet() = default;

  const Matrix& support() const noexcept { return support_; }
  const SimplexVector& weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return weights_.size(); }
  std::size_t dim() const noexcept { return support_.rows(); }

 private:
  friend DiscretePointSet make_point_set(Matrix support, SimplexVector weights);
  DiscretePointSet(Matrix support, SimplexVector weights)
      : support_(std::move(support)), weights_(std::move(weights)) {}

  Matrix support_;
  SimplexVector weights_;
};

// Throws ShapeError when the weight count differs from the column count.
DiscretePointSet make_point_set(Matrix support, SimplexVector weights);

// Multi-hot label vector.
class LabelVector {
 public:
  LabelVector() = default;
  // Throws ShapeError for entries other than 0 and 1.
  explicit LabelVector(std::vector<std::uint8_t> y);
  static LabelVector from_ints(const std::vector<int>& y);

  std::size_t size() const noexcept { return y_.size(); }
  bool operator[](std::size_t m) const { return y_[m] != 0; }
  const std::vector<std::uint8_t>& values() const noexcept { return y_; }
  std::size_t positives() const noexcept;

  // y / sum(y). Throws EmptyLabelSetError when y has no positives.
  std::vector<double> normalized() const;

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::vector<std::uint8_t> y_;
};

// kSparse keeps the top-k raw scores and masks the rest before the softmax,
// so exactly min(k, N) weights are nonzero. kBinary replaces the top-k with
// 1 and the rest with 0 before the softmax, giving a dense two-level vector.
enum class ThetaMode { kSparse, kBinary };

// kMasked spreads mass uniformly over the positive labels. kLiteral is a
// plain softmax of the raw 0/1 vector.
enum class BetaMode { kMasked, kLiteral };

// Patch relevance scores E^T (L y_hat). Throws ShapeError on mismatched
// embedding dimensions or label count, EmptyLabelSetError on an empty y.
std::vector<double> theta_scores(const Matrix& patches, const Matrix& labels,
                                 const LabelVector& y);

// Label-guided patch weights: softmax over the masked top-k relevance scores.
SimplexVector build_theta(const Matrix& patches, const Matrix& labels,
                          const LabelVector& y, std::size_t k,
                          ThetaMode mode = ThetaMode::kSparse);

SimplexVector theta_from_scores(const std::vector<double>& scores,
                                std::size_t k, ThetaMode mode);

SimplexVector build_beta(const LabelVector& y, BetaMode mode = BetaMode::kMasked);

}  // namespace ctalign
