#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ctalign/losses.hpp"
#include "ctalign/metrics.hpp"
#include "ctalign/model.hpp"

namespace ctalign {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::uint64_t seed = 42;
  EncodeOptions encode;
  LossConfig loss;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double total = 0.0;
  double lct = 0.0;
  double asl = 0.0;
  double val_map = 0.0;  // NaN when no validation split was given
};

struct TrainResult {
  ToyModelParams params;
  std::vector<EpochRecord> trace;
};

// Adam on the mean combined loss over shuffled minibatches. Throws
// NumericalError (with the epoch index) when the loss or a gradient stops
// being finite.
TrainResult train(ToyModelParams params, std::span<const SyntheticSample> dataset,
                  const TrainConfig& cfg,
                  std::span<const SyntheticSample> validation = {});

// One row per sample: predicted probabilities / multi-hot truth.
Matrix score_matrix(const ToyModelParams& params, std::span<const SyntheticSample> samples);
Matrix label_matrix(std::span<const SyntheticSample> samples);

// Every positive above 0.5 and every negative at or below it.
bool correctly_classified(std::span<const double> probabilities, const LabelVector& y);

// Final-layer backward plan for a labelled sample (label-guided patch
// weights), N x M.
TransportPlan final_backward_plan(const ToyModelParams& params,
                                  const SyntheticSample& sample,
                                  const EncodeOptions& opts);

struct LabelLocalization {
  std::size_t label = 0;
  double mass_on_object = 0.0;  // share of the label's plan column on its own patches
};

std::vector<LabelLocalization> localize(const ToyModelParams& params,
                                        const SyntheticSample& sample,
                                        const EncodeOptions& opts);

struct LocalizationSummary {
  std::size_t correctly_classified = 0;
  std::size_t localized = 0;  // correct samples whose true labels all reach min_mass
  double rate() const {
    return correctly_classified == 0
               ? 0.0
               : static_cast<double>(localized) / static_cast<double>(correctly_classified);
  }
};

LocalizationSummary localization_summary(const ToyModelParams& params,
                                         std::span<const SyntheticSample> samples,
                                         const EncodeOptions& opts, double min_mass = 0.5);

}  // namespace ctalign
