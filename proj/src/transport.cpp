#include "ctalign/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ctalign/error.hpp"
#include "ctalign/kernels.hpp"

namespace ctalign {

namespace {

void check_distance(const Matrix& distance, std::size_t n, std::size_t m) {
  if (distance.rows() != n || distance.cols() != m) {
    throw ShapeError("distance matrix is " + std::to_string(distance.rows()) +
                     "x" + std::to_string(distance.cols()) + ", expected " +
                     std::to_string(n) + "x" + std::to_string(m));
  }
  for (double x : distance.data()) {
    if (std::isnan(x)) throw EvaluationError("navigator distance is NaN");
  }
}

// Row-stochastic navigator: out(i, j) = w_j exp(-dist(i, j)) / sum_j' (...),
// restricted to w_j > 0.
Matrix navigator_rows(std::span<const double> w, const Matrix& dist) {
  Matrix out(dist.rows(), dist.cols());
  for (std::size_t i = 0; i < dist.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < dist.cols(); ++j)
      if (w[j] > 0.0) best = std::max(best, std::log(w[j]) - dist(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < dist.cols(); ++j) {
      if (w[j] <= 0.0) continue;
      out(i, j) = std::exp(std::log(w[j]) - dist(i, j) - best);
      total += out(i, j);
    }
    for (double& x : out.row(i)) x /= total;
  }
  return out;
}

// pi(i, j): forward conditional of target j given source i.
Matrix forward_conditional(const SimplexVector& theta, const SimplexVector& beta,
                           const Matrix& distance) {
  check_distance(distance, theta.size(), beta.size());
  return navigator_rows(beta.weights(), distance);
}

// rho(i, j): backward conditional of source i given target j, stored (i, j).
Matrix backward_conditional(const SimplexVector& theta, const SimplexVector& beta,
                            const Matrix& distance) {
  check_distance(distance, theta.size(), beta.size());
  return navigator_rows(theta.weights(), distance.transposed()).transposed();
}


}  // namespace

CostMatrix::CostMatrix(Matrix values) : values_(std::move(values)) {
  for (double x : values_.data()) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw EvaluationError("cost entries must be finite and nonnegative");
    }
  }
}

double NavigatorParams::temperature() const { return std::exp(log_temperature); }

void NavigatorParams::validate() const {
  const double tau = temperature();
  if (!std::isfinite(log_temperature) || !(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError("navigator temperature must be finite and positive");
  }
  if (patch_projection.has_value() != label_projection.has_value()) {
    throw ConfigError("navigator projections must be set together");
  }
  if (patch_projection && patch_projection->rows() != label_projection->rows()) {
    throw ConfigError("navigator projections must share an output dimension");
  }
}

NavigatorParams NavigatorParams::with_temperature(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError("temperature must be finite and positive");
  }
  NavigatorParams p;
  p.log_temperature = std::log(tau);
  return p;
}

CostMatrix cost_matrix(const Matrix& patches, const Matrix& labels) {
  Matrix c = cosine_similarity_matrix(patches, labels);
  for (double& x : c.data()) x = std::clamp(1.0 - x, 0.0, 2.0);
  return CostMatrix(std::move(c));
}

Matrix navigator_distance(const Matrix& patches, const Matrix& labels,
                          const NavigatorParams& params) {
  params.validate();
  Matrix k = params.has_projection()
                 ? cosine_similarity_matrix(matmul(*params.patch_projection, patches),
                                            matmul(*params.label_projection, labels))
                 : cosine_similarity_matrix(patches, labels);
  const double inv_tau = 1.0 / params.temperature();
  for (double& x : k.data()) x = (1.0 - x) * inv_tau;
  return k;
}

TransportPlan forward_plan(const SimplexVector& theta, const SimplexVector& beta,
                           const Matrix& distance) {
  Matrix t = forward_conditional(theta, beta, distance);
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (double& x : t.row(i)) x *= theta[i];
  return {std::move(t), PlanDirection::kForward};
}

TransportPlan backward_plan(const SimplexVector& theta, const SimplexVector& beta,
                            const Matrix& distance) {
  Matrix t = backward_conditional(theta, beta, distance);
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) *= beta[j];
  return {std::move(t), PlanDirection::kBackward};
}

TransportPlan forward_plan(const DiscretePointSet& p, const DiscretePointSet& q,
                           const NavigatorParams& params) {
  return forward_plan(p.weights(), q.weights(),
                      navigator_distance(p.support(), q.support(), params));
}

TransportPlan backward_plan(const DiscretePointSet& p, const DiscretePointSet& q,
                            const NavigatorParams& params) {
  return backward_plan(p.weights(), q.weights(),
                       navigator_distance(p.support(), q.support(), params));
}

CtResult ct_from_matrices(const SimplexVector& theta, const SimplexVector& beta,
                          const Matrix& cost, const Matrix& distance) {
  check_distance(cost, theta.size(), beta.size());
  CtResult out;
  out.forward = forward_plan(theta, beta, distance);
  out.backward = backward_plan(theta, beta, distance);
  for (std::size_t i = 0; i < cost.rows(); ++i) {
    out.forward_cost += kernels::dot(out.forward.coupling.row(i), cost.row(i));
    out.backward_cost += kernels::dot(out.backward.coupling.row(i), cost.row(i));
  }
  out.total = out.forward_cost + out.backward_cost;
  return out;
}

CtResult ct_distance(const DiscretePointSet& p, const DiscretePointSet& q,
                     const NavigatorParams& params) {
  const CostMatrix cost = cost_matrix(p.support(), q.support());
  return ct_from_matrices(p.weights(), q.weights(), cost.values(),
                          navigator_distance(p.support(), q.support(), params));
}

double layerwise_ct(std::span<const DiscretePointSet> per_layer_p,
                    std::span<const DiscretePointSet> per_layer_q,
                    const NavigatorParams& params, std::size_t start_layer) {
  if (per_layer_p.size() != per_layer_q.size()) {
    throw ShapeError("layer-wise CT needs as many P sets as Q sets");
  }
  const std::size_t layers = per_layer_p.size();
  if (layers == 0 || start_layer < 1 || start_layer > layers) {
    throw ConfigError("start layer " + std::to_string(start_layer) +
                      " outside [1, " + std::to_string(layers) + "]");
  }
  double total = 0.0;
  for (std::size_t l = start_layer - 1; l < layers; ++l) {
    total += ct_distance(per_layer_p[l], per_layer_q[l], params).total;
  }
  return total;
}

CtMatrixGradients ct_matrix_backward(const SimplexVector& theta,
                                     const SimplexVector& beta,
                                     const Matrix& cost, const Matrix& distance) {
  check_distance(cost, theta.size(), beta.size());
  const std::size_t n = theta.size();
  const std::size_t m = beta.size();
  const Matrix pi = forward_conditional(theta, beta, distance);
  const Matrix rho = backward_conditional(theta, beta, distance);

  CtMatrixGradients g{Matrix(n, m), Matrix(n, m), std::vector<double>(n, 0.0)};

  for (std::size_t i = 0; i < n; ++i) {
    if (theta[i] == 0.0) continue;
    const double row_cost = kernels::dot(pi.row(i), cost.row(i));
    g.log_theta[i] += theta[i] * row_cost;
    for (std::size_t j = 0; j < m; ++j) {
      const double t = theta[i] * pi(i, j);
      g.cost(i, j) += t;
      g.distance(i, j) -= t * (cost(i, j) - row_cost);
    }
  }

  std::vector<double> col_cost(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) col_cost[j] += rho(i, j) * cost(i, j);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double t = beta[j] * rho(i, j);
      if (t == 0.0) continue;
      const double centred = t * (cost(i, j) - col_cost[j]);
      g.cost(i, j) += t;
      g.distance(i, j) -= centred;
      g.log_theta[i] += centred;
    }
  }
  return g;
}

CtGradients ct_backward(const Matrix& patches, const Matrix& labels,
                        const SimplexVector& theta, const SimplexVector& beta,
                        const NavigatorParams& params, double scale) {
  params.validate();
  const CostMatrix cost = cost_matrix(patches, labels);
  const Matrix distance = navigator_distance(patches, labels, params);
  const CtMatrixGradients g =
      ct_matrix_backward(theta, beta, cost.values(), distance);

  CtGradients out;
  out.patches = Matrix(patches.rows(), patches.cols());
  out.labels = Matrix(labels.rows(), labels.cols());
  out.log_theta = g.log_theta;
  for (double& x : out.log_theta) x *= scale;

  const double inv_tau = 1.0 / params.temperature();
  for (std::size_t i = 0; i < distance.rows(); ++i)
    for (std::size_t j = 0; j < distance.cols(); ++j)
      out.log_temperature -= scale * g.distance(i, j) * distance(i, j);

  // C = 1 - K, so dK = -dC. The clamp only bites at |K| == 1 where the
  // cosine is stationary.
  Matrix grad_cos(cost.rows(), cost.cols());
  for (std::size_t i = 0; i < grad_cos.rows(); ++i)
    for (std::size_t j = 0; j < grad_cos.cols(); ++j)
      grad_cos(i, j) = -scale * g.cost(i, j);

  Matrix grad_nav(cost.rows(), cost.cols());
  for (std::size_t i = 0; i < grad_nav.rows(); ++i)
    for (std::size_t j = 0; j < grad_nav.cols(); ++j)
      grad_nav(i, j) = -scale * g.distance(i, j) * inv_tau;

  if (!params.has_projection()) {
    for (std::size_t k = 0; k < grad_cos.data().size(); ++k)
      grad_cos.data()[k] += grad_nav.data()[k];
    cosine_similarity_backward(patches, labels, grad_cos, out.patches, out.labels);
    return out;
  }

  cosine_similarity_backward(patches, labels, grad_cos, out.patches, out.labels);
  const Matrix& pe = *params.patch_projection;
  const Matrix& pl = *params.label_projection;
  const Matrix proj_patches = matmul(pe, patches);
  const Matrix proj_labels = matmul(pl, labels);
  Matrix d_proj_patches(proj_patches.rows(), proj_patches.cols());
  Matrix d_proj_labels(proj_labels.rows(), proj_labels.cols());
  cosine_similarity_backward(proj_patches, proj_labels, grad_nav, d_proj_patches,
                             d_proj_labels);
  const Matrix dp = matmul_tn(pe, d_proj_patches);
  const Matrix dl = matmul_tn(pl, d_proj_labels);
  kernels::axpy(1.0, dp.data(), out.patches.data());
  kernels::axpy(1.0, dl.data(), out.labels.data());
  out.patch_projection = matmul_nt(d_proj_patches, patches);
  out.label_projection = matmul_nt(d_proj_labels, labels);
  return out;
}

SinkhornResult sinkhorn_ot(const SimplexVector& theta, const SimplexVector& beta,
                           const CostMatrix& cost, const SinkhornOptions& options) {
  if (!(options.epsilon > 0.0) || !(options.tol > 0.0)) {
    throw ConfigError("Sinkhorn needs epsilon > 0 and tol > 0");
  }
  const std::size_t n = theta.size();
  const std::size_t m = beta.size();
  if (cost.rows() != n || cost.cols() != m) {
    throw ShapeError("Sinkhorn cost matrix does not match the marginals");
  }
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const double eps = options.epsilon;
  std::vector<double> f(n, 0.0);
  std::vector<double> g(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (theta[i] == 0.0) f[i] = kNegInf;
  for (std::size_t j = 0; j < m; ++j)
    if (beta[j] == 0.0) g[j] = kNegInf;

  auto log_sum_exp = [](const std::vector<double>& v) {
    double best = kNegInf;
    for (double x : v) best = std::max(best, x);
    if (best == kNegInf) return kNegInf;
    double total = 0.0;
    for (double x : v) total += std::exp(x - best);
    return best + std::log(total);
  };

  auto plan_from = [&](const std::vector<double>& fv, const std::vector<double>& gv) {
    Matrix plan(n, m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (fv[i] != kNegInf && gv[j] != kNegInf)
          plan(i, j) = std::exp((fv[i] + gv[j] - cost(i, j)) / eps);
    return plan;
  };

  auto violation_of = [&](const Matrix& plan) {
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += std::abs(kernels::sum(plan.row(i)) - theta[i]);
    for (std::size_t j = 0; j < m; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < n; ++i) col += plan(i, j);
      v += std::abs(col - beta[j]);
    }
    return v;
  };

  SinkhornResult best;
  best.marginal_violation = std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    terms.assign(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (theta[i] == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) terms[j] = (g[j] - cost(i, j)) / eps;
      f[i] = eps * (std::log(theta[i]) - log_sum_exp(terms));
    }
    terms.assign(n, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      if (beta[j] == 0.0) continue;
      for (std::size_t i = 0; i < n; ++i) terms[i] = (f[i] - cost(i, j)) / eps;
      g[j] = eps * (std::log(beta[j]) - log_sum_exp(terms));
    }
    Matrix plan = plan_from(f, g);
    const double violation = violation_of(plan);
    if (violation < best.marginal_violation) {
      best.plan = std::move(plan);
      best.marginal_violation = violation;
      best.iterations = it;
    }
    if (violation < options.tol) {
      best.converged = true;
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    best.cost += kernels::dot(best.plan.row(i), cost.values().row(i));
  return best;
}

namespace {

double catmull_rom(double t, double p0, double p1, double p2, double p3) {
  // Keys cubic convolution with a = -0.5.
  const double t2 = t * t;
  const double t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * t +
                (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

}  // namespace

Matrix export_plan_grid(std::span<const double> plan_column, std::size_t target_size) {
  const std::size_t n = plan_column.size();
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (n == 0 || side * side != n) {
    throw GridError("plan column of length " + std::to_string(n) +
                    " is not a perfect square");
  }
  if (target_size < side) {
    throw GridError("target size " + std::to_string(target_size) +
                    " is smaller than the grid side " + std::to_string(side));
  }

  const auto [lo_it, hi_it] = std::minmax_element(plan_column.begin(), plan_column.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  Matrix grid(side, side);
  for (std::size_t k = 0; k < n; ++k) {
    grid(k / side, k % side) = range > 0.0 ? (plan_column[k] - lo) / range : 0.0;
  }

  const auto at = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    const auto last = static_cast<std::ptrdiff_t>(side) - 1;
    return grid(static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(r, 0, last)),
                static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(c, 0, last)));
  };
  const double scale = static_cast<double>(side) / static_cast<double>(target_size);
  Matrix out(target_size, target_size);
  for (std::size_t r = 0; r < target_size; ++r) {
    const double sr = (static_cast<double>(r) + 0.5) * scale - 0.5;
    const auto r0 = static_cast<std::ptrdiff_t>(std::floor(sr));
    const double tr = sr - static_cast<double>(r0);
    for (std::size_t c = 0; c < target_size; ++c) {
      const double sc = (static_cast<double>(c) + 0.5) * scale - 0.5;
      const auto c0 = static_cast<std::ptrdiff_t>(std::floor(sc));
      const double tc = sc - static_cast<double>(c0);
      double rows[4];
      for (int k = 0; k < 4; ++k) {
        const std::ptrdiff_t rr = r0 - 1 + k;
        rows[k] = catmull_rom(tc, at(rr, c0 - 1), at(rr, c0), at(rr, c0 + 1),
                              at(rr, c0 + 2));
      }
      out(r, c) = std::clamp(catmull_rom(tr, rows[0], rows[1], rows[2], rows[3]),
                             0.0, 1.0);
    }
  }
  return out;
}

}  // namespace ctalign
