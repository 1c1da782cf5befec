#include "ctalign/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "ctalign/error.hpp"

namespace ctalign {

namespace {

void check_shapes(const Matrix& scores, const Matrix& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
    throw ShapeError("score and label matrices differ in shape");
  }
  for (double v : labels.data()) {
    if (v != 0.0 && v != 1.0) throw ShapeError("label matrix entries must be 0 or 1");
  }
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

std::string Regime::name() const {
  return kind == Kind::kThreshold ? "all" : "top" + std::to_string(k);
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("AP: length mismatch");
  std::size_t positives = 0;
  for (int l : labels) positives += (l != 0);
  if (positives == 0) throw UndefinedMetricError("average precision without positives");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 0) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return ap / static_cast<double>(positives);
}

double map_score(const Matrix& scores, const Matrix& labels) {
  check_shapes(scores, labels);
  double total = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    const std::vector<double> col = scores.column(c);
    std::vector<int> truth(labels.rows());
    for (std::size_t r = 0; r < labels.rows(); ++r) truth[r] = labels(r, c) != 0.0;
    if (std::none_of(truth.begin(), truth.end(), [](int v) { return v != 0; })) continue;
    total += average_precision(col, truth);
    ++classes;
  }
  if (classes == 0) throw UndefinedMetricError("no class has a positive sample");
  return total / static_cast<double>(classes);
}

MetricsReport prf_suite(const Matrix& scores, const Matrix& labels, const Regime& regime) {
  MetricsReport report;
  report.regime = regime;
  report.map = map_score(scores, labels);

  const std::size_t n = scores.rows();
  const std::size_t m = scores.cols();
  Matrix predicted(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    if (regime.kind == Regime::Kind::kThreshold) {
      for (std::size_t c = 0; c < m; ++c) predicted(r, c) = scores(r, c) > regime.threshold;
    } else {
      std::vector<std::size_t> order(m);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores(r, a) > scores(r, b);
      });
      for (std::size_t k = 0; k < std::min(regime.k, m); ++k) predicted(r, order[k]) = 1.0;
    }
  }

  double tp_all = 0.0, fp_all = 0.0, fn_all = 0.0;
  double cp_sum = 0.0, cr_sum = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < m; ++c) {
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const bool pred = predicted(r, c) != 0.0;
      const bool truth = labels(r, c) != 0.0;
      tp += pred && truth;
      fp += pred && !truth;
      fn += !pred && truth;
    }
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    if (tp + fn == 0.0) continue;
    ++classes;
    cp_sum += tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
    cr_sum += tp / (tp + fn);
  }
  report.cp = cp_sum / static_cast<double>(classes);
  report.cr = cr_sum / static_cast<double>(classes);
  report.cf1 = harmonic(report.cp, report.cr);
  report.op = tp_all + fp_all > 0.0 ? tp_all / (tp_all + fp_all) : 0.0;
  report.orc = tp_all + fn_all > 0.0 ? tp_all / (tp_all + fn_all) : 0.0;
  report.of1 = harmonic(report.op, report.orc);
  return report;
}

}  // namespace ctalign
