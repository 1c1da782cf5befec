#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ctalign/model.hpp"
#include "test_util.hpp"

namespace ctalign::testing {

// A small random model and batch: n <= 6 patches, m <= 6 labels, widths <= 8.
struct SmallProblem {
  ToyModelParams params;
  std::vector<SyntheticSample> batch;
};

inline SmallProblem small_problem(std::uint64_t seed, bool projected, std::size_t batch_size = 2) {
  std::mt19937_64 rng(seed);
  DataConfig dc;
  // At least one negative label per sample: with centred label embeddings an
  // all-positive sample has a zero label-aware vector and tied patch scores.
  dc.num_labels = uniform_size(rng, 3, 5);
  dc.input_dim = uniform_size(rng, 2, 5);
  dc.num_patches = uniform_size(rng, dc.num_labels, 6);
  dc.max_labels_per_sample = 2;
  dc.min_object_patches = 1;
  dc.max_object_patches = 2;
  dc.noise_sigma = 0.4;
  ModelConfig mc;
  mc.embed_dim = uniform_size(rng, 3, 8);
  mc.head_dim = uniform_size(rng, 2, 6);
  mc.num_layers = uniform_size(rng, 1, 3);
  mc.init_log_temperature = std::log(0.5);
  mc.label_init_scale = 2.0;
  mc.use_projection = projected;
  SmallProblem out;
  out.params = init_params(mc, dc.input_dim, dc.num_labels, seed + 1);
  // Generators start at zero; move them off the identity so the Cayley
  // path is exercised.
  for (Matrix& g : out.params.label_generators) g = random_matrix(g.rows(), g.cols(), rng, 0.3);
  // Label coverage needs a few samples; keep only the first batch_size.
  out.batch = generate_dataset(dc, std::max<std::size_t>(batch_size, 8), seed + 2).samples;
  out.batch.resize(batch_size);
  return out;
}

}  // namespace ctalign::testing
