#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "ctalign/numerics.hpp"

namespace ctalign {

struct Regime {
  enum class Kind { kThreshold, kTopK };
  Kind kind = Kind::kThreshold;
  double threshold = 0.5;
  std::size_t k = 3;

  static Regime threshold_at(double t = 0.5) { return {Kind::kThreshold, t, 0}; }
  static Regime top_k(std::size_t k) { return {Kind::kTopK, 0.5, k}; }
  std::string name() const;
};

struct MetricsReport {
  double map = 0.0;
  double cp = 0.0;
  double cr = 0.0;
  double cf1 = 0.0;
  double op = 0.0;
  double orc = 0.0;  // overall recall ("OR")
  double of1 = 0.0;
  Regime regime;
};

// All-points average precision. Scores are ranked descending with ties
// broken by original index. Throws UndefinedMetricError without positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);

// Mean AP over classes (columns) with at least one positive.
double map_score(const Matrix& scores, const Matrix& labels);

// Per-class (C*) and pooled (O*) precision/recall/F1 under a decision regime.
// Per-class averages run over classes with at least one positive; a class
// with no predicted positives contributes precision 0.
MetricsReport prf_suite(const Matrix& scores, const Matrix& labels, const Regime& regime);

}  // namespace ctalign
