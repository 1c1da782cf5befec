#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ctalign/distributions.hpp"
#include "ctalign/numerics.hpp"

namespace ctalign {

// Nonnegative transport costs, one row per source point.
class CostMatrix {
 public:
  CostMatrix() = default;
  // Throws EvaluationError on negative or non-finite entries.
  explicit CostMatrix(Matrix values);

  const Matrix& values() const noexcept { return values_; }
  std::size_t rows() const noexcept { return values_.rows(); }
  std::size_t cols() const noexcept { return values_.cols(); }
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }

 private:
  Matrix values_;
};

// Learnable distance used by the navigators:
//   d(e, l) = (1 - cos(Pe e, Pl l)) / exp(log_temperature)
// where the projections are the identity unless set.
struct NavigatorParams {
  double log_temperature = 0.0;
  std::optional<Matrix> patch_projection;  // r x d
  std::optional<Matrix> label_projection;  // r x d

  double temperature() const;
  bool has_projection() const noexcept { return patch_projection.has_value(); }
  // Throws ConfigError for a non-finite temperature or a lone projection.
  void validate() const;

  static NavigatorParams with_temperature(double tau);
};

enum class PlanDirection { kForward, kBackward };

// Coupling indexed (source point i, target point j) in both directions. A
// forward plan has row sums theta; a backward plan has column sums beta.
struct TransportPlan {
  Matrix coupling;
  PlanDirection direction = PlanDirection::kForward;
};

struct CtResult {
  double total = 0.0;
  double forward_cost = 0.0;
  double backward_cost = 0.0;
  TransportPlan forward;
  TransportPlan backward;
};

// 1 - cosine, clamped to [0, 2].
CostMatrix cost_matrix(const Matrix& patches, const Matrix& labels);

Matrix navigator_distance(const Matrix& patches, const Matrix& labels,
                          const NavigatorParams& params);

// Closed-form navigators from explicit weights and distances (n x m).
TransportPlan forward_plan(const SimplexVector& theta, const SimplexVector& beta,
                           const Matrix& distance);
TransportPlan backward_plan(const SimplexVector& theta, const SimplexVector& beta,
                            const Matrix& distance);

TransportPlan forward_plan(const DiscretePointSet& p, const DiscretePointSet& q,
                           const NavigatorParams& params);
TransportPlan backward_plan(const DiscretePointSet& p, const DiscretePointSet& q,
                            const NavigatorParams& params);

// Bidirectional cost sum_ij fwd_ij c_ij + sum_ij bwd_ij c_ij with both plans
// evaluated in closed form.
CtResult ct_from_matrices(const SimplexVector& theta, const SimplexVector& beta,
                          const Matrix& cost, const Matrix& distance);

CtResult ct_distance(const DiscretePointSet& p, const DiscretePointSet& q,
                     const NavigatorParams& params);

// Sum of ct_distance over layers start_layer..L (1-based). Throws
// ConfigError when start_layer is outside [1, L] and ShapeError when the two
// sequences differ in length.
double layerwise_ct(std::span<const DiscretePointSet> per_layer_p,
                    std::span<const DiscretePointSet> per_layer_q,
                    const NavigatorParams& params, std::size_t start_layer);

// Gradient of ct_from_matrices(...).total. log_theta holds d/d(log theta_i)
// and is zero where theta_i == 0.
struct CtMatrixGradients {
  Matrix cost;
  Matrix distance;
  std::vector<double> log_theta;
};

CtMatrixGradients ct_matrix_backward(const SimplexVector& theta,
                                     const SimplexVector& beta,
                                     const Matrix& cost, const Matrix& distance);

// Gradient of scale * ct_distance(...).total w.r.t. the support embeddings,
// the navigator parameters and log theta.
struct CtGradients {
  Matrix patches;
  Matrix labels;
  std::vector<double> log_theta;
  double log_temperature = 0.0;
  std::optional<Matrix> patch_projection;
  std::optional<Matrix> label_projection;
};

CtGradients ct_backward(const Matrix& patches, const Matrix& labels,
                        const SimplexVector& theta, const SimplexVector& beta,
                        const NavigatorParams& params, double scale = 1.0);

struct SinkhornOptions {
  double epsilon = 0.05;
  std::size_t max_iter = 1000;
  double tol = 1e-6;
};

struct SinkhornResult {
  double cost = 0.0;
  Matrix plan;
  bool converged = false;
  std::size_t iterations = 0;
  // L1 row violation plus L1 column violation of the returned plan.
  double marginal_violation = 0.0;
};

// Log-domain entropic OT. Returns the best iterate with converged == false
// instead of throwing when max_iter is exhausted.
SinkhornResult sinkhorn_ot(const SimplexVector& theta, const SimplexVector& beta,
                           const CostMatrix& cost,
                           const SinkhornOptions& options = {});

// Min-max normalises a plan column, reshapes it row-major into a g x g grid
// (g * g == N) and resamples it with Catmull-Rom bicubic interpolation to
// target_size x target_size. Throws GridError when N is not a perfect square
// or target_size < g.
Matrix export_plan_grid(std::span<const double> plan_column, std::size_t target_size);

}  // namespace ctalign
