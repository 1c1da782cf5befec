#include "ctalign/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ctalign/error.hpp"
#include "ctalign/kernels.hpp"
#include "model_internal.hpp"

namespace ctalign {

namespace {

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev,
                       std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = normal(rng);
  return m;
}

Matrix gelu_of(const Matrix& m) {
  Matrix out = m;
  for (double& x : out.data()) x = gelu(x);
  return out;
}

void add_bias(Matrix& m, std::span<const double> bias) {
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (double& x : m.row(r)) x += bias[r];
}

void accumulate(Matrix& into, const Matrix& from) {
  kernels::axpy(1.0, from.data(), into.data());
}

void accumulate_row_sums(std::vector<double>& into, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) into[r] += kernels::sum(m.row(r));
}

// E_l = E_{l-1} + W gelu(E_{l-1}) + b
Matrix residual_layer(const Matrix& prev, const Matrix& weight,
                      std::span<const double> bias) {
  Matrix out = matmul(weight, gelu_of(prev));
  add_bias(out, bias);
  accumulate(out, prev);
  return out;
}

// Backprop through residual_layer: returns d prev, accumulates parameter
// gradients.
Matrix residual_layer_backward(const Matrix& prev, const Matrix& weight,
                               const Matrix& grad_out, Matrix& grad_weight,
                               std::vector<double>& grad_bias) {
  accumulate(grad_weight, matmul_nt(grad_out, gelu_of(prev)));
  accumulate_row_sums(grad_bias, grad_out);
  Matrix grad_prev = matmul_tn(weight, grad_out);
  for (std::size_t k = 0; k < grad_prev.data().size(); ++k) {
    grad_prev.data()[k] *= gelu_derivative(prev.data()[k]);
  }
  accumulate(grad_prev, grad_out);
  return grad_prev;
}

// Inverse of a well-conditioned square matrix by Gauss-Jordan elimination
// with partial pivoting.
Matrix inverse(Matrix a) {
  const std::size_t n = a.rows();
  Matrix inv(n, n);
  for (std::size_t k = 0; k < n; ++k) inv(k, k) = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    if (a(pivot, col) == 0.0) throw NumericalError("singular matrix in Cayley map");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) {
        std::swap(a(pivot, c), a(col, c));
        std::swap(inv(pivot, c), inv(col, c));
      }
    }
    const double scale = 1.0 / a(col, col);
    for (double& x : a.row(col)) x *= scale;
    for (double& x : inv.row(col)) x *= scale;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col || a(r, col) == 0.0) continue;
      const double f = a(r, col);
      kernels::axpy(-f, a.row(col), a.row(r));
      kernels::axpy(-f, inv.row(col), inv.row(r));
    }
  }
  return inv;
}

}  // namespace

CayleyMap cayley(const Matrix& generator) {
  if (generator.rows() != generator.cols()) throw ShapeError("Cayley generator must be square");
  const std::size_t n = generator.rows();
  // S = A - A^T is skew, so I - S is always invertible.
  Matrix minus(n, n);
  Matrix plus(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double skew = generator(r, c) - generator(c, r);
      minus(r, c) = (r == c ? 1.0 : 0.0) - skew;
      plus(r, c) = (r == c ? 1.0 : 0.0) + skew;
    }
  }
  CayleyMap map;
  map.inverse_minus = inverse(std::move(minus));
  map.rotation = matmul(map.inverse_minus, plus);
  return map;
}

Matrix cayley_backward(const CayleyMap& map, const Matrix& grad_rotation) {
  // dR = M dS (R + I) with M = (I - S)^-1, so dL/dS = M^T G (R + I)^T.
  Matrix r_plus_i = map.rotation;
  for (std::size_t k = 0; k < r_plus_i.rows(); ++k) r_plus_i(k, k) += 1.0;
  const Matrix grad_skew = matmul_nt(matmul_tn(map.inverse_minus, grad_rotation), r_plus_i);
  Matrix grad(grad_skew.rows(), grad_skew.cols());
  for (std::size_t r = 0; r < grad.rows(); ++r)
    for (std::size_t c = 0; c < grad.cols(); ++c) grad(r, c) = grad_skew(r, c) - grad_skew(c, r);
  return grad;
}

namespace {

// Subtracts the mean column, so label embeddings always sum to zero.
Matrix centre_columns(Matrix m) {
  const double inv = 1.0 / static_cast<double>(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double mean = kernels::sum(m.row(r)) * inv;
    for (double& x : m.row(r)) x -= mean;
  }
  return m;
}

std::vector<double> sigmoid(std::span<const double> z) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-z[i]));
  return out;
}

}  // namespace

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + kGeluCubic * x * x * x)));
}

double gelu_derivative(double x) {
  const double t = std::tanh(kGeluScale * (x + kGeluCubic * x * x * x));
  return 0.5 * (1.0 + t) +
         0.5 * x * (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
}

void DataConfig::validate() const {
  if (num_labels < 2) throw ConfigError("need at least two labels");
  if (input_dim < 1) throw ConfigError("input dimension must be positive");
  if (num_patches < num_labels) {
    throw ConfigError("need at least as many patches as labels");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("noise sigma must be finite and nonnegative");
  }
  if (max_labels_per_sample < 1) {
    throw ConfigError("samples need at least one label");
  }
  if (min_object_patches < 1 || max_object_patches < min_object_patches) {
    throw ConfigError("object patch range must satisfy 1 <= min <= max");
  }
  const std::size_t cardinality = std::min(max_labels_per_sample, num_labels);
  if (num_patches < cardinality * min_object_patches) {
    throw ConfigError("num_patches " + std::to_string(num_patches) +
                      " cannot hold " + std::to_string(cardinality) +
                      " objects of " + std::to_string(min_object_patches) +
                      " patches");
  }
}

namespace {

SyntheticSample draw_sample(const DataConfig& cfg, const Matrix& prototypes,
                            std::mt19937_64& rng) {
  const std::size_t m = cfg.num_labels;
  const std::size_t n = cfg.num_patches;
  const std::size_t max_card = std::min(cfg.max_labels_per_sample, m);
  std::uniform_int_distribution<std::size_t> card_dist(1, max_card);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t cardinality = card_dist(rng);
  std::vector<std::size_t> labels(m);
  std::iota(labels.begin(), labels.end(), 0);
  std::shuffle(labels.begin(), labels.end(), rng);
  labels.resize(cardinality);
  std::sort(labels.begin(), labels.end());

  // Each object gets between min and max patches, capped so the rest fit.
  std::vector<std::size_t> counts(cardinality);
  std::size_t used = 0;
  for (std::size_t c = 0; c < cardinality; ++c) {
    const std::size_t reserve = (cardinality - c - 1) * cfg.min_object_patches;
    const std::size_t hi = std::min(cfg.max_object_patches, n - used - reserve);
    counts[c] = std::uniform_int_distribution<std::size_t>(cfg.min_object_patches, hi)(rng);
    used += counts[c];
  }

  std::vector<std::size_t> slots(n);
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);

  SyntheticSample s;
  s.assignment.assign(n, kBackgroundPatch);
  std::size_t next = 0;
  for (std::size_t c = 0; c < cardinality; ++c)
    for (std::size_t k = 0; k < counts[c]; ++k)
      s.assignment[slots[next++]] = static_cast<int>(labels[c]);

  s.patches = Matrix(cfg.input_dim, n);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t r = 0; r < cfg.input_dim; ++r) {
      const double base = s.assignment[p] == kBackgroundPatch
                              ? 0.0
                              : prototypes(r, static_cast<std::size_t>(s.assignment[p]));
      // sigma == 0 must reproduce the prototype exactly.
      s.patches(r, p) = cfg.noise_sigma == 0.0 ? base : base + cfg.noise_sigma * noise(rng);
    }
  }

  std::vector<std::uint8_t> y(m, 0);
  for (std::size_t label : labels) y[label] = 1;
  s.y = LabelVector(std::move(y));
  return s;
}

Matrix draw_prototypes(const DataConfig& cfg, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix protos(cfg.input_dim, cfg.num_labels);
  for (std::size_t c = 0; c < cfg.num_labels; ++c) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t r = 0; r < cfg.input_dim; ++r) {
        protos(r, c) = normal(rng);
        norm += protos(r, c) * protos(r, c);
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-8);
    for (std::size_t r = 0; r < cfg.input_dim; ++r) protos(r, c) /= norm;
  }
  return protos;
}

std::vector<SyntheticSample> draw_covering(const DataConfig& cfg,
                                           const Matrix& prototypes,
                                           std::size_t n_samples,
                                           std::mt19937_64& rng) {
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<SyntheticSample> out;
    out.reserve(n_samples);
    std::vector<bool> seen(cfg.num_labels, false);
    for (std::size_t i = 0; i < n_samples; ++i) {
      out.push_back(draw_sample(cfg, prototypes, rng));
      for (std::size_t m = 0; m < cfg.num_labels; ++m)
        if (out.back().y[m]) seen[m] = true;
    }
    if (n_samples == 0 || std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
      return out;
    }
  }
  throw ConfigError("could not draw a dataset in which every label occurs");
}

}  // namespace

SyntheticDataset generate_dataset(const DataConfig& cfg, std::size_t n_samples,
                                  std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  SyntheticDataset ds;
  ds.prototypes = draw_prototypes(cfg, rng);
  ds.samples = draw_covering(cfg, ds.prototypes, n_samples, rng);
  return ds;
}

DatasetSplits generate_splits(const DataConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  DatasetSplits out;
  out.prototypes = draw_prototypes(cfg, rng);
  out.train = draw_covering(cfg, out.prototypes, cfg.train_size, rng);
  out.test = draw_covering(cfg, out.prototypes, cfg.test_size, rng);
  return out;
}

void ModelConfig::validate() const {
  if (embed_dim < 1 || head_dim < 1) throw ConfigError("model widths must be positive");
  if (num_layers < 1) throw ConfigError("model needs at least one layer");
  if (!std::isfinite(init_log_temperature)) {
    throw ConfigError("initial log temperature must be finite");
  }
}

ToyModelParams init_params(const ModelConfig& cfg, std::size_t input_dim,
                           std::size_t num_labels, std::uint64_t seed) {
  cfg.validate();
  if (input_dim < 1 || num_labels < 1) throw ConfigError("empty model input");
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg.embed_dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  ToyModelParams p;
  p.encoder_weights.push_back(
      gaussian_matrix(d, input_dim, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng));
  p.encoder_biases.emplace_back(d, 0.0);
  for (std::size_t l = 1; l < cfg.num_layers; ++l) {
    p.encoder_weights.push_back(gaussian_matrix(d, d, 0.5 * inv_sqrt_d, rng));
    p.encoder_biases.emplace_back(d, 0.0);
  }
  p.label_table = gaussian_matrix(d, num_labels, cfg.label_init_scale * inv_sqrt_d, rng);
  for (std::size_t l = 1; l < cfg.num_layers; ++l) {
    p.label_generators.emplace_back(d, d, 0.0);
  }
  p.head_w1 = gaussian_matrix(cfg.head_dim, d, inv_sqrt_d, rng);
  p.head_b1.assign(cfg.head_dim, 0.0);
  p.head_w2 = gaussian_matrix(d, cfg.head_dim,
                              0.1 / std::sqrt(static_cast<double>(cfg.head_dim)), rng);
  p.head_b2.assign(d, 0.0);
  p.navigator.log_temperature = cfg.init_log_temperature;
  if (cfg.use_projection) {
    Matrix pe = gaussian_matrix(d, d, 0.1 * inv_sqrt_d, rng);
    Matrix pl = gaussian_matrix(d, d, 0.1 * inv_sqrt_d, rng);
    for (std::size_t k = 0; k < d; ++k) {
      pe(k, k) += 1.0;
      pl(k, k) += 1.0;
    }
    p.navigator.patch_projection = std::move(pe);
    p.navigator.label_projection = std::move(pl);
  }
  return p;
}

ToyModelParams zeros_like(const ToyModelParams& params) {
  ToyModelParams z = params;
  for (auto& g : param_groups(z)) std::fill(g.values.begin(), g.values.end(), 0.0);
  return z;
}

namespace {

template <class P, class G>
std::vector<G> groups_impl(P& p) {
  std::vector<G> out;
  for (std::size_t l = 0; l < p.encoder_weights.size(); ++l) {
    out.push_back({"encoder." + std::to_string(l + 1) + ".weight", p.encoder_weights[l].data()});
    out.push_back({"encoder." + std::to_string(l + 1) + ".bias", p.encoder_biases[l]});
  }
  out.push_back({"label.table", p.label_table.data()});
  for (std::size_t l = 0; l < p.label_generators.size(); ++l) {
    out.push_back({"label." + std::to_string(l + 2) + ".generator", p.label_generators[l].data()});
  }
  out.push_back({"head.w1", p.head_w1.data()});
  out.push_back({"head.b1", p.head_b1});
  out.push_back({"head.w2", p.head_w2.data()});
  out.push_back({"head.b2", p.head_b2});
  out.push_back({"navigator.log_temperature", {&p.navigator.log_temperature, 1}});
  if (p.navigator.patch_projection) {
    out.push_back({"navigator.patch_projection", p.navigator.patch_projection->data()});
    out.push_back({"navigator.label_projection", p.navigator.label_projection->data()});
  }
  return out;
}

}  // namespace

std::vector<ParamGroup> param_groups(ToyModelParams& params) {
  return groups_impl<ToyModelParams, ParamGroup>(params);
}

std::vector<ConstParamGroup> param_groups(const ToyModelParams& params) {
  return groups_impl<const ToyModelParams, ConstParamGroup>(params);
}

std::vector<double> flatten(const ToyModelParams& params) {
  std::vector<double> flat;
  for (const auto& g : param_groups(params)) flat.insert(flat.end(), g.values.begin(), g.values.end());
  return flat;
}

void unflatten(std::span<const double> flat, ToyModelParams& params) {
  std::size_t offset = 0;
  auto groups = param_groups(params);
  std::size_t total = 0;
  for (const auto& g : groups) total += g.values.size();
  if (total != flat.size()) {
    throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) +
                     " entries, model needs " + std::to_string(total));
  }
  for (auto& g : groups) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), g.values.size(),
                g.values.begin());
    offset += g.values.size();
  }
}

bool operator==(const ToyModelParams& a, const ToyModelParams& b) {
  const auto ga = param_groups(a);
  const auto gb = param_groups(b);
  if (ga.size() != gb.size()) return false;
  for (std::size_t k = 0; k < ga.size(); ++k) {
    if (ga[k].name != gb[k].name ||
        !std::equal(ga[k].values.begin(), ga[k].values.end(), gb[k].values.begin(),
                    gb[k].values.end())) {
      return false;
    }
  }
  return true;
}

namespace detail {

LabelTower label_tower(const ToyModelParams& params) {
  LabelTower t;
  t.embeddings.push_back(centre_columns(params.label_table));
  for (const Matrix& g : params.label_generators) {
    t.maps.push_back(cayley(g));
    t.embeddings.push_back(matmul(t.maps.back().rotation, t.embeddings.back()));
  }
  return t;
}

ForwardPass forward(const ToyModelParams& params, const Matrix& patches,
                    const LabelVector* y, const EncodeOptions& opts,
                    const LabelTower& tower) {
  if (patches.rows() != params.input_dim()) {
    throw ShapeError("patches have dimension " + std::to_string(patches.rows()) +
                     ", model expects " + std::to_string(params.input_dim()));
  }
  if (patches.cols() == 0) throw ShapeError("sample has no patches");
  if (y != nullptr && y->size() != params.num_labels()) {
    throw ShapeError("label vector has " + std::to_string(y->size()) +
                     " entries, model has " + std::to_string(params.num_labels()) +
                     " labels");
  }
  const std::size_t layers = params.num_layers();
  ForwardPass pass;
  EncodeResult& out = pass.out;

  Matrix e = matmul(params.encoder_weights[0], patches);
  add_bias(e, params.encoder_biases[0]);
  out.patch_embeddings.push_back(e);
  for (std::size_t l = 1; l < layers; ++l) {
    out.patch_embeddings.push_back(residual_layer(
        out.patch_embeddings.back(), params.encoder_weights[l], params.encoder_biases[l]));
  }
  out.label_embeddings = tower.embeddings;

  const SimplexVector beta = y != nullptr ? build_beta(*y, opts.beta_mode)
                                          : SimplexVector::uniform(params.num_labels());
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix& el = out.patch_embeddings[l];
    SimplexVector theta =
        y != nullptr
            ? build_theta(el, out.label_embeddings[l], *y, opts.topk, opts.theta_mode)
            : SimplexVector::uniform(el.cols());
    out.p_sets.push_back(make_point_set(el, std::move(theta)));
    out.q_sets.push_back(make_point_set(out.label_embeddings[l], beta));
  }

  const Matrix& last = out.patch_embeddings.back();
  pass.pooled.resize(last.rows());
  const double inv_n = 1.0 / static_cast<double>(last.cols());
  for (std::size_t r = 0; r < last.rows(); ++r) pass.pooled[r] = kernels::sum(last.row(r)) * inv_n;

  pass.head_pre = matvec(params.head_w1, pass.pooled);
  kernels::axpy(1.0, params.head_b1, pass.head_pre);
  pass.head_act = pass.head_pre;
  for (double& x : pass.head_act) x = gelu(x);
  out.global_feature = matvec(params.head_w2, pass.head_act);
  kernels::axpy(1.0, params.head_b2, out.global_feature);
  kernels::axpy(1.0, pass.pooled, out.global_feature);

  out.logits = matvec_t(out.label_embeddings.back(), out.global_feature);
  out.probabilities = sigmoid(out.logits);
  return pass;
}

void backward(const ToyModelParams& params, const Matrix& patches,
              const LabelVector& y, const ForwardPass& pass,
              const EncodeOptions& opts, const LossConfig& cfg, double weight,
              ToyModelParams& grads, std::vector<Matrix>& d_label) {
  const EncodeResult& out = pass.out;
  const std::size_t layers = params.num_layers();
  std::vector<Matrix> d_patch(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    d_patch[l] = Matrix(out.patch_embeddings[l].rows(), out.patch_embeddings[l].cols());
  }

  // Classification head.
  std::vector<double> d_logits = asl_logit_gradient(out.logits, y, cfg);
  for (double& g : d_logits) g *= weight;
  const Matrix& labels_last = out.label_embeddings.back();
  for (std::size_t r = 0; r < labels_last.rows(); ++r)
    kernels::axpy(out.global_feature[r], d_logits, d_label.back().row(r));
  const std::vector<double> d_feature = matvec(labels_last, d_logits);

  for (std::size_t r = 0; r < grads.head_w2.rows(); ++r)
    kernels::axpy(d_feature[r], pass.head_act, grads.head_w2.row(r));
  kernels::axpy(1.0, d_feature, grads.head_b2);
  std::vector<double> d_head = matvec_t(params.head_w2, d_feature);
  for (std::size_t k = 0; k < d_head.size(); ++k) d_head[k] *= gelu_derivative(pass.head_pre[k]);
  for (std::size_t r = 0; r < grads.head_w1.rows(); ++r)
    kernels::axpy(d_head[r], pass.pooled, grads.head_w1.row(r));
  kernels::axpy(1.0, d_head, grads.head_b1);
  std::vector<double> d_pooled = matvec_t(params.head_w1, d_head);
  kernels::axpy(1.0, d_feature, d_pooled);

  Matrix& d_last = d_patch.back();
  const double inv_n = 1.0 / static_cast<double>(d_last.cols());
  for (std::size_t r = 0; r < d_last.rows(); ++r)
    for (double& x : d_last.row(r)) x += d_pooled[r] * inv_n;

  // Layer-wise CT.
  const double ct_weight = weight * cfg.alpha;
  if (ct_weight != 0.0) {
    const std::vector<double> y_hat = y.normalized();
    for (std::size_t l = cfg.start_layer - 1; l < layers; ++l) {
      const Matrix& el = out.patch_embeddings[l];
      const Matrix& ll = out.label_embeddings[l];
      const SimplexVector& theta = out.p_sets[l].weights();
      CtGradients g = ct_backward(el, ll, theta, out.q_sets[l].weights(),
                                  params.navigator, ct_weight);
      accumulate(d_patch[l], g.patches);
      accumulate(d_label[l], g.labels);
      grads.navigator.log_temperature += g.log_temperature;
      if (g.patch_projection) {
        accumulate(*grads.navigator.patch_projection, *g.patch_projection);
        accumulate(*grads.navigator.label_projection, *g.label_projection);
      }

      if (opts.theta_mode != ThetaMode::kSparse) continue;
      // theta = softmax over the selected scores s = E^T (L y_hat).
      double h_total = 0.0;
      for (double h : g.log_theta) h_total += h;
      std::vector<double> d_scores(theta.size(), 0.0);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        if (theta[i] > 0.0) d_scores[i] = g.log_theta[i] - theta[i] * h_total;
      }
      const std::vector<double> label_aware = matvec(ll, y_hat);
      for (std::size_t r = 0; r < el.rows(); ++r)
        kernels::axpy(label_aware[r], d_scores, d_patch[l].row(r));
      const std::vector<double> d_label_aware = matvec(el, d_scores);
      for (std::size_t r = 0; r < ll.rows(); ++r)
        kernels::axpy(d_label_aware[r], y_hat, d_label[l].row(r));
    }
  }

  // Encoders, top down.
  for (std::size_t l = layers - 1; l >= 1; --l) {
    accumulate(d_patch[l - 1],
               residual_layer_backward(out.patch_embeddings[l - 1], params.encoder_weights[l],
                                       d_patch[l], grads.encoder_weights[l],
                                       grads.encoder_biases[l]));
  }
  accumulate(grads.encoder_weights[0], matmul_nt(d_patch[0], patches));
  accumulate_row_sums(grads.encoder_biases[0], d_patch[0]);
}

void label_tower_backward(const ToyModelParams& params, const LabelTower& tower,
                          std::vector<Matrix> d_label, ToyModelParams& grads) {
  for (std::size_t l = params.num_layers() - 1; l >= 1; --l) {
    const CayleyMap& map = tower.maps[l - 1];
    accumulate(d_label[l - 1], matmul_tn(map.rotation, d_label[l]));
    accumulate(grads.label_generators[l - 1],
               cayley_backward(map, matmul_nt(d_label[l], tower.embeddings[l - 1])));
  }
  accumulate(grads.label_table, centre_columns(d_label[0]));
}

}  // namespace detail

EncodeResult encode(const ToyModelParams& params, const Matrix& patches,
                    const LabelVector* y, const EncodeOptions& opts) {
  return detail::forward(params, patches, y, opts, detail::label_tower(params)).out;
}

std::vector<double> predict(const ToyModelParams& params, const Matrix& patches) {
  return encode(params, patches, nullptr, EncodeOptions{}).probabilities;
}

}  // namespace ctalign
