#include "ctalign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "ctalign/error.hpp"
#include "model_internal.hpp"

namespace ctalign {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and nonnegative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam moments must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (encode.topk < 1) throw ConfigError("top-k must be positive");
  loss.validate();
}

TrainResult train(ToyModelParams params, std::span<const SyntheticSample> dataset,
                  const TrainConfig& cfg, std::span<const SyntheticSample> validation) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("training set is empty");
  if (cfg.loss.start_layer > params.num_layers()) {
    throw ConfigError("start layer " + std::to_string(cfg.loss.start_layer) +
                      " exceeds the layer count " + std::to_string(params.num_layers()));
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<double> flat = flatten(params);
  std::vector<double> first(flat.size(), 0.0);
  std::vector<double> second(flat.size(), 0.0);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<SyntheticSample> batch;
  std::size_t step = 0;

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord record;
    record.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) batch.push_back(dataset[order[k]]);

      GradientBundle grads;
      try {
        grads = loss_gradients(params, batch, cfg.encode, cfg.loss);
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ": " + e.what());
      } catch (const EvaluationError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ": " + e.what());
      } catch (const DegenerateVectorError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ": " + e.what());
      }
      if (!std::isfinite(grads.loss.total)) {
        throw NumericalError("epoch " + std::to_string(epoch) + ": loss is not finite");
      }
      const double share = static_cast<double>(batch.size());
      record.total += grads.loss.total * share;
      record.lct += grads.loss.lct * share;
      record.asl += grads.loss.asl * share;

      ++step;
      const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      const std::vector<double> g = flatten(grads.partials);
      for (std::size_t k = 0; k < flat.size(); ++k) {
        first[k] = cfg.beta1 * first[k] + (1.0 - cfg.beta1) * g[k];
        second[k] = cfg.beta2 * second[k] + (1.0 - cfg.beta2) * g[k] * g[k];
        const double update = (first[k] / correction1) /
                              (std::sqrt(second[k] / correction2) + cfg.adam_eps);
        flat[k] -= cfg.learning_rate * update;
      }
      for (double v : flat) {
        if (!std::isfinite(v)) {
          throw NumericalError("epoch " + std::to_string(epoch) +
                               ": parameters stopped being finite");
        }
      }
      unflatten(flat, params);
    }
    const double n = static_cast<double>(dataset.size());
    record.total /= n;
    record.lct /= n;
    record.asl /= n;
    record.val_map = validation.empty()
                         ? std::numeric_limits<double>::quiet_NaN()
                         : map_score(score_matrix(params, validation), label_matrix(validation));
    result.trace.push_back(record);
  }
  result.params = std::move(params);
  return result;
}

Matrix score_matrix(const ToyModelParams& params, std::span<const SyntheticSample> samples) {
  Matrix out(samples.size(), params.num_labels());
  const detail::LabelTower tower = detail::label_tower(params);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const std::vector<double> p =
        detail::forward(params, samples[r].patches, nullptr, EncodeOptions{}, tower)
            .out.probabilities;
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

Matrix label_matrix(std::span<const SyntheticSample> samples) {
  const std::size_t m = samples.empty() ? 0 : samples.front().y.size();
  Matrix out(samples.size(), m);
  for (std::size_t r = 0; r < samples.size(); ++r)
    for (std::size_t c = 0; c < m; ++c) out(r, c) = samples[r].y[c] ? 1.0 : 0.0;
  return out;
}

bool correctly_classified(std::span<const double> probabilities, const LabelVector& y) {
  if (probabilities.size() != y.size()) throw ShapeError("prediction length mismatch");
  for (std::size_t m = 0; m < y.size(); ++m) {
    if ((probabilities[m] > 0.5) != y[m]) return false;
  }
  return true;
}

TransportPlan final_backward_plan(const ToyModelParams& params,
                                  const SyntheticSample& sample,
                                  const EncodeOptions& opts) {
  const EncodeResult enc = encode(params, sample, opts);
  return backward_plan(enc.p_sets.back(), enc.q_sets.back(), params.navigator);
}

std::vector<LabelLocalization> localize(const ToyModelParams& params,
                                        const SyntheticSample& sample,
                                        const EncodeOptions& opts) {
  const TransportPlan plan = final_backward_plan(params, sample, opts);
  std::vector<LabelLocalization> out;
  for (std::size_t j = 0; j < sample.y.size(); ++j) {
    if (!sample.y[j]) continue;
    double column = 0.0;
    double on_object = 0.0;
    for (std::size_t i = 0; i < plan.coupling.rows(); ++i) {
      column += plan.coupling(i, j);
      if (sample.assignment[i] == static_cast<int>(j)) on_object += plan.coupling(i, j);
    }
    out.push_back({j, column > 0.0 ? on_object / column : 0.0});
  }
  return out;
}

LocalizationSummary localization_summary(const ToyModelParams& params,
                                         std::span<const SyntheticSample> samples,
                                         const EncodeOptions& opts, double min_mass) {
  LocalizationSummary summary;
  for (const auto& sample : samples) {
    if (!correctly_classified(predict(params, sample.patches), sample.y)) continue;
    ++summary.correctly_classified;
    const auto loc = localize(params, sample, opts);
    if (std::all_of(loc.begin(), loc.end(),
                    [&](const LabelLocalization& l) { return l.mass_on_object >= min_mass; })) {
      ++summary.localized;
    }
  }
  return summary;
}

}  // namespace ctalign
