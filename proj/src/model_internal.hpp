#pragma once

// Forward pass with the intermediates the hand-written backward pass needs.

#include <vector>

#include "ctalign/losses.hpp"
#include "ctalign/model.hpp"

namespace ctalign::detail {

struct ForwardPass {
  EncodeResult out;
  std::vector<double> pooled;    // mean of final-layer patch embeddings
  std::vector<double> head_pre;  // first head layer before the activation
  std::vector<double> head_act;
};

// Per-layer label embeddings. They depend only on the parameters, so a batch
// shares one tower.
struct LabelTower {
  std::vector<Matrix> embeddings;
  std::vector<CayleyMap> maps;  // maps[l - 1] rotates layer l - 1 into layer l
};

LabelTower label_tower(const ToyModelParams& params);

ForwardPass forward(const ToyModelParams& params, const Matrix& patches,
                    const LabelVector* y, const EncodeOptions& opts,
                    const LabelTower& tower);

// Adds weight * d(combined_loss)/d(params) into grads, except for the label
// tower: its per-layer gradients go into d_labels (sized like
// tower.embeddings) for label_tower_backward.
void backward(const ToyModelParams& params, const Matrix& patches,
              const LabelVector& y, const ForwardPass& pass,
              const EncodeOptions& opts, const LossConfig& cfg, double weight,
              ToyModelParams& grads, std::vector<Matrix>& d_labels);

void label_tower_backward(const ToyModelParams& params, const LabelTower& tower,
                          std::vector<Matrix> d_labels, ToyModelParams& grads);

}  // namespace ctalign::detail
