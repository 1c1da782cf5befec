#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ctalign/distributions.hpp"
#include "ctalign/numerics.hpp"
#include "ctalign/transport.hpp"

namespace ctalign {

inline constexpr int kBackgroundPatch = -1;

struct SyntheticSample {
  Matrix patches;               // input_dim x num_patches
  LabelVector y;                // num_labels
  std::vector<int> assignment;  // label index per patch, kBackgroundPatch otherwise
};

struct DataConfig {
  std::size_t num_labels = 6;
  std::size_t input_dim = 16;
  std::size_t num_patches = 16;
  std::size_t train_size = 500;
  std::size_t test_size = 200;
  double noise_sigma = 0.3;
  std::size_t max_labels_per_sample = 3;
  std::size_t min_object_patches = 2;
  std::size_t max_object_patches = 3;
  std::uint64_t seed = 42;

  // Throws ConfigError on an unusable combination.
  void validate() const;
};

struct SyntheticDataset {
  Matrix prototypes;  // input_dim x num_labels, unit-norm columns
  std::vector<SyntheticSample> samples;
};

struct DatasetSplits {
  Matrix prototypes;
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> test;
};

// Draws unit prototypes, then n_samples samples whose object patches are a
// prototype plus N(0, sigma^2) noise and whose other patches are pure noise.
// Resamples until every label occurs at least once.
SyntheticDataset generate_dataset(const DataConfig& cfg, std::size_t n_samples,
                                  std::uint64_t seed);

// Train and test drawn from one stream and one prototype set.
DatasetSplits generate_splits(const DataConfig& cfg);

struct ModelConfig {
  std::size_t embed_dim = 64;
  std::size_t head_dim = 32;
  std::size_t num_layers = 3;
  double init_log_temperature = -1.2039728043259361;  // log 0.3
  // Expected norm of an initial label-table column.
  double label_init_scale = 10.0;
  bool use_projection = false;

  void validate() const;
};

// Layer l >= 2 of the patch encoder is residual:
//   E_l = E_{l-1} + W_l gelu(E_{l-1}) + b_l
// and its first layer is affine in the raw patches. The label encoder starts
// from the centred label table (mean label embedding subtracted) and applies
//   L_l = R_l L_{l-1},  R_l = cayley(A_l)
// so each layer rotates the label frame while keeping the pairwise geometry
// of the labels intact.
struct ToyModelParams {
  std::vector<Matrix> encoder_weights;
  std::vector<std::vector<double>> encoder_biases;
  Matrix label_table;
  std::vector<Matrix> label_generators;  // layers 2..L, d x d
  Matrix head_w1;
  std::vector<double> head_b1;
  Matrix head_w2;
  std::vector<double> head_b2;
  NavigatorParams navigator;

  std::size_t num_layers() const noexcept { return encoder_weights.size(); }
  std::size_t embed_dim() const noexcept { return label_table.rows(); }
  std::size_t num_labels() const noexcept { return label_table.cols(); }
  std::size_t input_dim() const noexcept {
    return encoder_weights.empty() ? 0 : encoder_weights.front().cols();
  }

  friend bool operator==(const ToyModelParams& a, const ToyModelParams& b);
};

ToyModelParams init_params(const ModelConfig& cfg, std::size_t input_dim,
                           std::size_t num_labels, std::uint64_t seed);

// Same shapes as params, all zero.
ToyModelParams zeros_like(const ToyModelParams& params);

struct ParamGroup {
  std::string name;
  std::span<double> values;
};
struct ConstParamGroup {
  std::string name;
  std::span<const double> values;
};

// Named views over every learnable tensor, in a fixed order.
std::vector<ParamGroup> param_groups(ToyModelParams& params);
std::vector<ConstParamGroup> param_groups(const ToyModelParams& params);

std::vector<double> flatten(const ToyModelParams& params);
void unflatten(std::span<const double> flat, ToyModelParams& params);

struct EncodeOptions {
  std::size_t topk = 200;
  ThetaMode theta_mode = ThetaMode::kSparse;
  BetaMode beta_mode = BetaMode::kMasked;
};

struct EncodeResult {
  std::vector<Matrix> patch_embeddings;  // per layer, embed_dim x N
  std::vector<Matrix> label_embeddings;  // per layer, embed_dim x M
  std::vector<DiscretePointSet> p_sets;
  std::vector<DiscretePointSet> q_sets;
  std::vector<double> global_feature;
  std::vector<double> logits;
  std::vector<double> probabilities;
};

// With y, patch weights are label-guided; without y (inference) they are
// uniform and the Q sets use uniform label weights.
EncodeResult encode(const ToyModelParams& params, const Matrix& patches,
                    const LabelVector* y, const EncodeOptions& opts);

inline EncodeResult encode(const ToyModelParams& params,
                           const SyntheticSample& sample,
                           const EncodeOptions& opts) {
  return encode(params, sample.patches, &sample.y, opts);
}

// Orthogonal R = (I - S)^-1 (I + S) with S = A - A^T.
struct CayleyMap {
  Matrix rotation;
  Matrix inverse_minus;  // (I - S)^-1
};

CayleyMap cayley(const Matrix& generator);

// Gradient w.r.t. the generator A given dL/dR.
Matrix cayley_backward(const CayleyMap& map, const Matrix& grad_rotation);

std::vector<double> predict(const ToyModelParams& params, const Matrix& patches);

double gelu(double x);
double gelu_derivative(double x);

}  // namespace ctalign
