#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "ctalign/error.hpp"
#include "ctalign/model.hpp"
#include "model_fixtures.hpp"

namespace ctalign {
namespace {

DataConfig tiny_data() {
  DataConfig dc;
  dc.num_labels = 4;
  dc.input_dim = 5;
  dc.num_patches = 9;
  dc.max_labels_per_sample = 3;
  dc.min_object_patches = 1;
  dc.max_object_patches = 2;
  return dc;
}

TEST(GenerateDataset, ZeroNoiseReproducesPrototypes) {
  DataConfig dc = tiny_data();
  dc.noise_sigma = 0.0;
  const SyntheticDataset ds = generate_dataset(dc, 30, 1);
  for (const auto& s : ds.samples) {
    for (std::size_t p = 0; p < dc.num_patches; ++p) {
      if (s.assignment[p] == kBackgroundPatch) continue;
      const auto label = static_cast<std::size_t>(s.assignment[p]);
      for (std::size_t r = 0; r < dc.input_dim; ++r) EXPECT_EQ(s.patches(r, p), ds.prototypes(r, label));
    }
  }
}

TEST(GenerateDataset, PrototypesAreUnitNorm) {
  const SyntheticDataset ds = generate_dataset(tiny_data(), 10, 2);
  for (std::size_t c = 0; c < ds.prototypes.cols(); ++c) {
    double n = 0.0;
    for (double v : ds.prototypes.column(c)) n += v * v;
    EXPECT_NEAR(n, 1.0, 1e-12);
  }
}

TEST(GenerateDataset, DeterministicUnderSeed) {
  const SyntheticDataset a = generate_dataset(tiny_data(), 20, 9);
  const SyntheticDataset b = generate_dataset(tiny_data(), 20, 9);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  EXPECT_EQ(a.prototypes, b.prototypes);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].patches, b.samples[i].patches);
    EXPECT_EQ(a.samples[i].y, b.samples[i].y);
    EXPECT_EQ(a.samples[i].assignment, b.samples[i].assignment);
  }
  const SyntheticDataset c = generate_dataset(tiny_data(), 20, 10);
  EXPECT_NE(a.prototypes, c.prototypes);
}

TEST(GenerateDataset, EveryLabelCovered) {
  DataConfig dc = tiny_data();
  dc.num_labels = 4;
  const SyntheticDataset ds = generate_dataset(dc, 100, 3);
  std::vector<int> seen(4, 0);
  for (const auto& s : ds.samples)
    for (std::size_t m = 0; m < 4; ++m) seen[m] += s.y[m];
  for (int c : seen) EXPECT_GE(c, 1);
}

TEST(GenerateDataset, SampleInvariants) {
  const DataConfig dc = tiny_data();
  const SyntheticDataset ds = generate_dataset(dc, 200, 4);
  for (const auto& s : ds.samples) {
    EXPECT_GE(s.y.positives(), 1u);
    EXPECT_LE(s.y.positives(), dc.max_labels_per_sample);
    std::vector<std::size_t> owned(dc.num_labels, 0);
    for (int a : s.assignment) {
      if (a == kBackgroundPatch) continue;
      ASSERT_GE(a, 0);
      ASSERT_LT(static_cast<std::size_t>(a), dc.num_labels);
      EXPECT_TRUE(s.y[static_cast<std::size_t>(a)]) << "patch assigned to a negative label";
      ++owned[static_cast<std::size_t>(a)];
    }
    for (std::size_t m = 0; m < dc.num_labels; ++m) {
      if (!s.y[m]) continue;
      EXPECT_GE(owned[m], dc.min_object_patches);
      EXPECT_LE(owned[m], dc.max_object_patches);
    }
  }
}

TEST(GenerateDataset, ConfigErrors) {
  DataConfig dc = tiny_data();
  dc.num_patches = 5;
  dc.min_object_patches = 2;  // 3 labels x 2 patches > 5
  EXPECT_THROW(generate_dataset(dc, 5, 1), ConfigError);
  dc = tiny_data();
  dc.num_labels = 1;
  EXPECT_THROW(generate_dataset(dc, 5, 1), ConfigError);
  dc = tiny_data();
  dc.num_patches = 3;
  EXPECT_THROW(generate_dataset(dc, 5, 1), ConfigError);
  dc = tiny_data();
  dc.noise_sigma = -0.1;
  EXPECT_THROW(dc.validate(), ConfigError);
}

TEST(GenerateSplits, DefaultSizes) {
  const DataConfig dc;
  const DatasetSplits s = generate_splits(dc);
  EXPECT_EQ(s.train.size(), 500u);
  EXPECT_EQ(s.test.size(), 200u);
  EXPECT_EQ(s.train.front().patches.rows(), 16u);
  EXPECT_EQ(s.train.front().patches.cols(), 16u);
  EXPECT_EQ(s.train.front().y.size(), 6u);
}

TEST(Cayley, ZeroGeneratorIsIdentity) {
  const CayleyMap map = cayley(Matrix(4, 4));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(map.rotation(r, c), r == c ? 1.0 : 0.0);
}

TEST(Cayley, RotationIsOrthogonal) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = testing::random_matrix(6, 6, rng, 2.0);
    const Matrix r = cayley(a).rotation;
    const Matrix rtr = matmul_tn(r, r);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(rtr(i, j), i == j ? 1.0 : 0.0, 1e-12);
  }
}

TEST(Cayley, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  const Matrix g = testing::random_matrix(4, 4, rng);
  const Matrix a0 = testing::random_matrix(4, 4, rng, 0.5);
  auto f = [&](std::span<const double> x) {
    const Matrix r = cayley(Matrix(4, 4, std::vector<double>(x.begin(), x.end()))).rotation;
    double s = 0.0;
    for (std::size_t k = 0; k < 16; ++k) s += r.data()[k] * g.data()[k];
    return s;
  };
  auto grad = [&](std::span<const double> x) {
    const CayleyMap map = cayley(Matrix(4, 4, std::vector<double>(x.begin(), x.end())));
    const Matrix d = cayley_backward(map, g);
    return std::vector<double>(d.data().begin(), d.data().end());
  };
  EXPECT_LE(grad_check(f, grad, std::vector<double>(a0.data().begin(), a0.data().end())), 1e-8);
}

TEST(Cayley, NonSquareRejected) {
  EXPECT_THROW(cayley(Matrix(2, 3)), ShapeError);
}

TEST(Gelu, ValuesAndDerivative) {
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(1.0), 0.841192, 1e-6);  // tanh approximation
  EXPECT_NEAR(gelu(-10.0), 0.0, 1e-12);
  auto f = [](std::span<const double> x) { return gelu(x[0]); };
  auto g = [](std::span<const double> x) { return std::vector<double>{gelu_derivative(x[0])}; };
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) EXPECT_LE(grad_check(f, g, std::vector<double>{x}), 1e-9);
}

TEST(Params, InitShapesAndNames) {
  ModelConfig mc;
  mc.embed_dim = 5;
  mc.head_dim = 3;
  mc.num_layers = 3;
  mc.use_projection = true;
  const ToyModelParams p = init_params(mc, 4, 6, 1);
  EXPECT_EQ(p.num_layers(), 3u);
  EXPECT_EQ(p.embed_dim(), 5u);
  EXPECT_EQ(p.num_labels(), 6u);
  EXPECT_EQ(p.input_dim(), 4u);
  EXPECT_EQ(p.label_generators.size(), 2u);
  for (const Matrix& g : p.label_generators) EXPECT_EQ(g, Matrix(5, 5));
  EXPECT_NEAR(p.navigator.temperature(), std::exp(mc.init_log_temperature), 1e-15);
  std::vector<std::string> names;
  for (const auto& g : param_groups(p)) names.push_back(g.name);
  const std::vector<std::string> expected{
      "encoder.1.weight", "encoder.1.bias", "encoder.2.weight", "encoder.2.bias",
      "encoder.3.weight", "encoder.3.bias", "label.table", "label.2.generator",
      "label.3.generator", "head.w1", "head.b1", "head.w2", "head.b2",
      "navigator.log_temperature", "navigator.patch_projection", "navigator.label_projection"};
  EXPECT_EQ(names, expected);
  EXPECT_THROW(init_params(ModelConfig{.embed_dim = 0}, 4, 6, 1), ConfigError);
}

TEST(Params, FlattenRoundTripAndZeros) {
  const auto prob = testing::small_problem(3, true);
  const std::vector<double> flat = flatten(prob.params);
  ToyModelParams copy = zeros_like(prob.params);
  for (double v : flatten(copy)) EXPECT_EQ(v, 0.0);
  unflatten(flat, copy);
  EXPECT_TRUE(copy == prob.params);
  std::vector<double> short_flat(flat.begin(), flat.end() - 1);
  EXPECT_THROW(unflatten(short_flat, copy), ShapeError);
}

TEST(Params, SeedDeterminism) {
  const ModelConfig mc;
  EXPECT_TRUE(init_params(mc, 16, 6, 42) == init_params(mc, 16, 6, 42));
  EXPECT_FALSE(init_params(mc, 16, 6, 42) == init_params(mc, 16, 6, 43));
}

// Identity first layer, zero residual branches and a zero head: x = mean patch.
ToyModelParams identity_model(std::size_t d, std::size_t m, std::size_t layers) {
  ModelConfig mc;
  mc.embed_dim = d;
  mc.head_dim = 3;
  mc.num_layers = layers;
  ToyModelParams p = init_params(mc, d, m, 5);
  p.encoder_weights[0] = Matrix(d, d);
  for (std::size_t k = 0; k < d; ++k) p.encoder_weights[0](k, k) = 1.0;
  for (auto& b : p.encoder_biases) std::fill(b.begin(), b.end(), 0.0);
  for (std::size_t l = 1; l < layers; ++l) p.encoder_weights[l] = Matrix(d, d);
  p.head_w2 = Matrix(d, 3);
  std::fill(p.head_b2.begin(), p.head_b2.end(), 0.0);
  return p;
}

TEST(Encode, IdentityEncoderGivesMeanPatch) {
  const ToyModelParams p = identity_model(3, 2, 2);
  const Matrix patches = Matrix::from_rows({{1, 2, 3, 6}, {0, -1, 1, 4}, {2, 2, 2, 2}});
  const EncodeResult r = encode(p, patches, nullptr, EncodeOptions{});
  EXPECT_NEAR(r.global_feature[0], 3.0, 1e-15);
  EXPECT_NEAR(r.global_feature[1], 1.0, 1e-15);
  EXPECT_NEAR(r.global_feature[2], 2.0, 1e-15);
}

TEST(Encode, UnitLogitGivesSigmoidOfOne) {
  // Oracle: logit = <(1,0), (1,0)> = 1, p = sigmoid(1) = 0.731059.
  ToyModelParams p = identity_model(2, 2, 1);
  p.label_table = Matrix::from_rows({{1, -1}, {0, 0}});  // already centred
  const Matrix patch = Matrix::from_rows({{1}, {0}});
  const LabelVector y = LabelVector::from_ints({1, 0});
  const EncodeResult r = encode(p, patch, &y, EncodeOptions{});
  EXPECT_NEAR(r.logits[0], 1.0, 1e-15);
  EXPECT_NEAR(r.probabilities[0], 0.731059, 1e-6);
  EXPECT_GT(r.probabilities[0], 0.5);
  EXPECT_LT(r.probabilities[1], 0.5);
}

TEST(Encode, PerLayerSetsAndRanges) {
  const auto prob = testing::small_problem(14, false);
  EncodeOptions opts;
  opts.topk = 2;
  const EncodeResult r = encode(prob.params, prob.batch[0], opts);
  const std::size_t layers = prob.params.num_layers();
  ASSERT_EQ(r.p_sets.size(), layers);
  ASSERT_EQ(r.q_sets.size(), layers);
  for (std::size_t l = 0; l < layers; ++l) {
    std::size_t nonzero = 0;
    for (double w : r.p_sets[l].weights().weights()) nonzero += w > 0.0;
    EXPECT_EQ(nonzero, std::min<std::size_t>(2, prob.batch[0].patches.cols()));
    // Centred label embeddings sum to zero.
    for (std::size_t row = 0; row < r.label_embeddings[l].rows(); ++row) {
      double s = 0.0;
      for (double v : r.label_embeddings[l].row(row)) s += v;
      EXPECT_NEAR(s, 0.0, 1e-12);
    }
  }
  for (double p : r.probabilities) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(Encode, LabelLayersPreserveGeometry) {
  // Rotations keep label norms and pairwise cosines across layers.
  int checked = 0;
  for (std::uint64_t seed = 15; checked < 5; ++seed) {
    const auto prob = testing::small_problem(seed, false);
    if (prob.params.num_layers() < 2) continue;
    ++checked;
    const EncodeResult r = encode(prob.params, prob.batch[0], EncodeOptions{});
    const Matrix first = matmul_tn(r.label_embeddings.front(), r.label_embeddings.front());
    const Matrix last = matmul_tn(r.label_embeddings.back(), r.label_embeddings.back());
    for (std::size_t k = 0; k < first.data().size(); ++k)
      EXPECT_NEAR(first.data()[k], last.data()[k], 1e-10);
  }
}

TEST(Encode, InferenceUsesUniformWeights) {
  const auto prob = testing::small_problem(16, false);
  const EncodeResult r = encode(prob.params, prob.batch[0].patches, nullptr, EncodeOptions{});
  const double n = static_cast<double>(prob.batch[0].patches.cols());
  for (double w : r.p_sets.back().weights().weights()) EXPECT_NEAR(w, 1.0 / n, 1e-15);
}

TEST(Encode, ShapeErrors) {
  const auto prob = testing::small_problem(17, false);
  const Matrix wrong(prob.params.input_dim() + 1, 3, 1.0);
  EXPECT_THROW(encode(prob.params, wrong, nullptr, EncodeOptions{}), ShapeError);
  const LabelVector y = LabelVector::from_ints(std::vector<int>(prob.params.num_labels() + 1, 1));
  EXPECT_THROW(encode(prob.params, prob.batch[0].patches, &y, EncodeOptions{}), ShapeError);
  EXPECT_THROW(predict(prob.params, wrong), ShapeError);
}

TEST(Predict, DeterministicAndSized) {
  const auto prob = testing::small_problem(18, false);
  const auto a = predict(prob.params, prob.batch[0].patches);
  const auto b = predict(prob.params, prob.batch[0].patches);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), prob.params.num_labels());
  // The head ignores y, so label-guided encoding gives the same probabilities.
  EXPECT_EQ(encode(prob.params, prob.batch[0], EncodeOptions{}).probabilities, a);
}

}  // namespace
}  // namespace ctalign
