#pragma once

#include <span>
#include <vector>

#include "ctalign/distributions.hpp"
#include "ctalign/model.hpp"

namespace ctalign {

struct LossConfig {
  double gamma_plus = 0.0;
  double gamma_minus = 2.0;
  double alpha = 1.0;
  std::size_t start_layer = 2;

  void validate() const;
};

inline constexpr double kProbabilityClamp = 1e-7;

// Asymmetric focal loss, averaged over labels and negated so that lower is
// better. Probabilities are clamped to [1e-7, 1 - 1e-7].
double asl_loss(std::span<const double> probabilities, const LabelVector& y,
                const LossConfig& cfg);

// d asl_loss(sigmoid(z)) / dz. Zero where the clamp is active.
std::vector<double> asl_logit_gradient(std::span<const double> logits,
                                       const LabelVector& y, const LossConfig& cfg);

struct LossBreakdown {
  double total = 0.0;
  double lct = 0.0;
  double asl = 0.0;
};

// total = alpha * LCT(start_layer..L) + ASL.
LossBreakdown combined_loss(const EncodeResult& outputs, const LabelVector& y,
                            const NavigatorParams& navigator, const LossConfig& cfg);

// Mean of combined_loss over the batch.
LossBreakdown batch_loss(const ToyModelParams& params,
                         std::span<const SyntheticSample> batch,
                         const EncodeOptions& opts, const LossConfig& cfg);

struct GradientBundle {
  ToyModelParams partials;
  LossBreakdown loss;

  std::vector<ParamGroup> groups() { return param_groups(partials); }
  std::vector<ConstParamGroup> groups() const { return param_groups(partials); }
};

// Gradient of batch_loss w.r.t. every parameter group. Throws NumericalError
// naming the group when a partial is not finite.
// Throws NumericalError naming the first group holding a NaN or infinity.
void check_finite_gradients(const ToyModelParams& partials);

GradientBundle loss_gradients(const ToyModelParams& params,
                              std::span<const SyntheticSample> batch,
                              const EncodeOptions& opts, const LossConfig& cfg);

}  // namespace ctalign
