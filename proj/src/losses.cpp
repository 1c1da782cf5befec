#include "ctalign/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ctalign/error.hpp"
#include "model_internal.hpp"

namespace ctalign {

void LossConfig::validate() const {
  for (double v : {gamma_plus, gamma_minus, alpha}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError("loss weights and focusing exponents must be finite and >= 0");
    }
  }
  if (start_layer < 1) throw ConfigError("start layer is 1-based");
}

double asl_loss(std::span<const double> probabilities, const LabelVector& y,
                const LossConfig& cfg) {
  if (probabilities.size() != y.size()) {
    throw ShapeError("ASL: " + std::to_string(probabilities.size()) +
                     " probabilities for " + std::to_string(y.size()) + " labels");
  }
  if (probabilities.empty()) throw ShapeError("ASL over zero labels");
  double total = 0.0;
  for (std::size_t m = 0; m < y.size(); ++m) {
    const double p = std::clamp(probabilities[m], kProbabilityClamp, 1.0 - kProbabilityClamp);
    if (y[m]) {
      total -= std::pow(1.0 - p, cfg.gamma_plus) * std::log(p);
    } else {
      total -= std::pow(p, cfg.gamma_minus) * std::log(1.0 - p);
    }
  }
  return total / static_cast<double>(y.size());
}

std::vector<double> asl_logit_gradient(std::span<const double> logits,
                                       const LabelVector& y, const LossConfig& cfg) {
  if (logits.size() != y.size()) throw ShapeError("ASL gradient: length mismatch");
  std::vector<double> out(logits.size(), 0.0);
  const double inv_m = 1.0 / static_cast<double>(y.size());
  for (std::size_t m = 0; m < y.size(); ++m) {
    const double p = 1.0 / (1.0 + std::exp(-logits[m]));
    if (p < kProbabilityClamp || p > 1.0 - kProbabilityClamp) continue;
    const double q = 1.0 - p;
    // Derivatives of the per-label term w.r.t. the logit, with dp/dz = p q
    // folded in so no negative powers appear.
    if (y[m]) {
      const double gp = cfg.gamma_plus;
      out[m] = gp * p * std::pow(q, gp) * std::log(p) - std::pow(q, gp + 1.0);
    } else {
      const double gm = cfg.gamma_minus;
      out[m] = std::pow(p, gm + 1.0) - gm * std::pow(p, gm) * q * std::log(q);
    }
    out[m] *= inv_m;
  }
  return out;
}

LossBreakdown combined_loss(const EncodeResult& outputs, const LabelVector& y,
                            const NavigatorParams& navigator, const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown out;
  out.asl = asl_loss(outputs.probabilities, y, cfg);
  if (cfg.alpha != 0.0) {
    out.lct = layerwise_ct(outputs.p_sets, outputs.q_sets, navigator, cfg.start_layer);
  } else if (cfg.start_layer > outputs.p_sets.size()) {
    throw ConfigError("start layer " + std::to_string(cfg.start_layer) +
                      " exceeds the layer count");
  }
  out.total = cfg.alpha * out.lct + out.asl;
  return out;
}

namespace {

void check_batch(const ToyModelParams& params, std::span<const SyntheticSample> batch,
                 const LossConfig& cfg) {
  cfg.validate();
  if (batch.empty()) throw ShapeError("empty batch");
  if (cfg.start_layer > params.num_layers()) {
    throw ConfigError("start layer " + std::to_string(cfg.start_layer) +
                      " exceeds the layer count " + std::to_string(params.num_layers()));
  }
}

}  // namespace

LossBreakdown batch_loss(const ToyModelParams& params,
                         std::span<const SyntheticSample> batch,
                         const EncodeOptions& opts, const LossConfig& cfg) {
  check_batch(params, batch, cfg);
  LossBreakdown sum;
  for (const auto& sample : batch) {
    const LossBreakdown l =
        combined_loss(encode(params, sample, opts), sample.y, params.navigator, cfg);
    sum.total += l.total;
    sum.lct += l.lct;
    sum.asl += l.asl;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  return {sum.total * inv, sum.lct * inv, sum.asl * inv};
}

void check_finite_gradients(const ToyModelParams& partials) {
  for (const auto& g : param_groups(partials)) {
    for (double v : g.values) {
      if (!std::isfinite(v)) {
        throw NumericalError("non-finite gradient in parameter group " + g.name);
      }
    }
  }
}

GradientBundle loss_gradients(const ToyModelParams& params,
                              std::span<const SyntheticSample> batch,
                              const EncodeOptions& opts, const LossConfig& cfg) {
  check_batch(params, batch, cfg);
  GradientBundle bundle{zeros_like(params), {}};
  const double weight = 1.0 / static_cast<double>(batch.size());
  const detail::LabelTower tower = detail::label_tower(params);
  std::vector<Matrix> d_labels;
  for (const Matrix& e : tower.embeddings) d_labels.emplace_back(e.rows(), e.cols());
  for (const auto& sample : batch) {
    const detail::ForwardPass pass =
        detail::forward(params, sample.patches, &sample.y, opts, tower);
    const LossBreakdown l = combined_loss(pass.out, sample.y, params.navigator, cfg);
    bundle.loss.total += weight * l.total;
    bundle.loss.lct += weight * l.lct;
    bundle.loss.asl += weight * l.asl;
    detail::backward(params, sample.patches, sample.y, pass, opts, cfg, weight,
                     bundle.partials, d_labels);
  }
  detail::label_tower_backward(params, tower, std::move(d_labels), bundle.partials);
  check_finite_gradients(bundle.partials);
  return bundle;
}

}  // namespace ctalign
