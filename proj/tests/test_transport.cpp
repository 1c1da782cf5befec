#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ctalign/error.hpp"
#include "ctalign/transport.hpp"
#include "test_util.hpp"

namespace ctalign {
namespace {

using testing::random_matrix;
using testing::random_simplex;

const Matrix kIdentity2 = Matrix::from_rows({{1, 0}, {0, 1}});
const Matrix kSwap = Matrix::from_rows({{0, 1}, {1, 0}});

SimplexVector half() { return SimplexVector({0.5, 0.5}); }

TEST(CostMatrix, CosineExamples) {
  // Oracles: 1 - cos = 0 (identical), 1 (orthogonal), 2 (antipodal).
  const Matrix e = Matrix::from_rows({{1}, {0}});
  const Matrix l = Matrix::from_rows({{1, 0, -1}, {0, 1, 0}});
  const CostMatrix c = cost_matrix(e, l);
  EXPECT_DOUBLE_EQ(c(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(c(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(c(0, 2), 2.0);
}

TEST(CostMatrix, RejectsNegativeEntries) {
  EXPECT_THROW(CostMatrix(Matrix::from_rows({{-0.1}})), EvaluationError);
  EXPECT_NO_THROW(CostMatrix(Matrix::from_rows({{0.0, 2.0}})));
}

TEST(CostMatrix, DegenerateColumn) {
  EXPECT_THROW(cost_matrix(Matrix(2, 1), kIdentity2), DegenerateVectorError);
}

TEST(NavigatorDistance, TemperatureExamples) {
  const Matrix e = Matrix::from_rows({{1}, {0}});
  const Matrix same = Matrix::from_rows({{1}, {0}});
  const Matrix orth = Matrix::from_rows({{0}, {1}});
  const Matrix anti = Matrix::from_rows({{-1}, {0}});
  EXPECT_DOUBLE_EQ(navigator_distance(e, same, NavigatorParams::with_temperature(1.0))(0, 0), 0.0);
  EXPECT_NEAR(navigator_distance(e, orth, NavigatorParams::with_temperature(2.0))(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(navigator_distance(e, anti, NavigatorParams::with_temperature(0.5))(0, 0), 4.0, 1e-14);
}

TEST(NavigatorDistance, IdentityProjectionsChangeNothing) {
  std::mt19937_64 rng(3);
  const Matrix e = random_matrix(3, 4, rng);
  const Matrix l = random_matrix(3, 2, rng);
  NavigatorParams plain = NavigatorParams::with_temperature(0.7);
  NavigatorParams projected = plain;
  const Matrix eye = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  projected.patch_projection = eye;
  projected.label_projection = eye;
  const Matrix a = navigator_distance(e, l, plain);
  const Matrix b = navigator_distance(e, l, projected);
  for (std::size_t i = 0; i < a.data().size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-14);
}

TEST(NavigatorParams, Validation) {
  EXPECT_THROW(NavigatorParams::with_temperature(0.0), ConfigError);
  EXPECT_THROW(NavigatorParams::with_temperature(-1.0), ConfigError);
  NavigatorParams p;
  p.patch_projection = Matrix(2, 3);
  EXPECT_THROW(p.validate(), ConfigError);
  p.label_projection = Matrix(3, 3);
  EXPECT_THROW(p.validate(), ConfigError);
  p.label_projection = Matrix(2, 3);
  EXPECT_NO_THROW(p.validate());
  EXPECT_NEAR(NavigatorParams::with_temperature(0.3).temperature(), 0.3, 1e-15);
}

TEST(ForwardPlan, SinglePoint) {
  const TransportPlan t = forward_plan(SimplexVector({1.0}), SimplexVector({1.0}), Matrix(1, 1, 0.7));
  EXPECT_DOUBLE_EQ(t.coupling(0, 0), 1.0);
  EXPECT_EQ(t.direction, PlanDirection::kForward);
}

TEST(ForwardPlan, EqualDistancesGiveIndependentCoupling) {
  // Oracle: exponent cancels, t_ij = theta_i beta_j.
  const SimplexVector theta({0.2, 0.3, 0.5});
  const SimplexVector beta({0.6, 0.4});
  const TransportPlan f = forward_plan(theta, beta, Matrix(3, 2, 1.3));
  const TransportPlan b = backward_plan(theta, beta, Matrix(3, 2, 1.3));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_NEAR(f.coupling(i, j), theta[i] * beta[j], 1e-15);
      EXPECT_NEAR(b.coupling(i, j), theta[i] * beta[j], 1e-15);
    }
  }
}

TEST(ForwardPlan, SymmetricTwoByTwo) {
  // Oracle: 0.5 e^0 / (0.5 + 0.5 e^-1) * 0.5 = 0.365529; off-diagonal 0.134471.
  const TransportPlan f = forward_plan(half(), half(), kSwap);
  EXPECT_NEAR(f.coupling(0, 0), 0.365529, 1e-6);
  EXPECT_NEAR(f.coupling(0, 1), 0.134471, 1e-6);
  EXPECT_NEAR(f.coupling(1, 0), 0.134471, 1e-6);
  EXPECT_NEAR(f.coupling(1, 1), 0.365529, 1e-6);
  const TransportPlan b = backward_plan(half(), half(), kSwap);
  EXPECT_EQ(b.direction, PlanDirection::kBackward);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(b.coupling.data()[i], f.coupling.data()[i], 1e-15);
}

TEST(ForwardPlan, NanDistanceRejected) {
  // Matrix refuses NaN outright, so a NaN distance can never reach the plan.
  EXPECT_THROW(Matrix(1, 1, std::vector<double>{std::nan("")}), EvaluationError);
  EXPECT_THROW(forward_plan(half(), half(), Matrix(3, 2)), ShapeError);
}

TEST(CtDistance, SharedSinglePointIsZero) {
  const DiscretePointSet p = make_point_set(Matrix::from_rows({{1}, {2}}), SimplexVector({1.0}));
  const CtResult r = ct_distance(p, p, NavigatorParams{});
  EXPECT_DOUBLE_EQ(r.total, 0.0);
}

TEST(CtDistance, WorkedTwoByTwo) {
  // Oracle: forward = backward = 2 * 0.134471 * 1 = 0.268941, total 0.537883.
  const DiscretePointSet p = make_point_set(kIdentity2, half());
  const CtResult r = ct_distance(p, p, NavigatorParams::with_temperature(1.0));
  EXPECT_NEAR(r.forward_cost, 0.268941, 1e-6);
  EXPECT_NEAR(r.backward_cost, 0.268941, 1e-6);
  EXPECT_NEAR(r.total, 0.537883, 1e-6);
  EXPECT_NEAR(r.total, 2.0 / (1.0 + std::exp(1.0)), 1e-15);
}

TEST(CtDistance, HighTemperatureLimit) {
  // Oracle: independent coupling, 2 * sum theta_i beta_j c_ij = 2 * 0.5 = 1.0.
  const DiscretePointSet p = make_point_set(kIdentity2, half());
  const CtResult r = ct_distance(p, p, NavigatorParams::with_temperature(1e6));
  EXPECT_NEAR(r.total, 1.0, 1e-5);
}

TEST(CtDistance, DimensionMismatch) {
  const DiscretePointSet p = make_point_set(kIdentity2, half());
  const DiscretePointSet q = make_point_set(Matrix(3, 1, 1.0), SimplexVector({1.0}));
  EXPECT_THROW(ct_distance(p, q, NavigatorParams{}), ShapeError);
}

TEST(LayerwiseCt, Examples) {
  std::mt19937_64 rng(5);
  const DiscretePointSet p1 = testing::random_set(3, 4, rng);
  const DiscretePointSet q1 = testing::random_set(3, 2, rng);
  const DiscretePointSet p2 = testing::random_set(3, 4, rng);
  const DiscretePointSet q2 = testing::random_set(3, 2, rng);
  const NavigatorParams nav = NavigatorParams::with_temperature(0.8);
  const double single = ct_distance(p1, q1, nav).total;

  const std::vector<DiscretePointSet> one_p{p1}, one_q{q1};
  EXPECT_DOUBLE_EQ(layerwise_ct(one_p, one_q, nav, 1), single);

  const std::vector<DiscretePointSet> twin_p{p1, p1}, twin_q{q1, q1};
  EXPECT_NEAR(layerwise_ct(twin_p, twin_q, nav, 1), 2.0 * single, 1e-15);

  const std::vector<DiscretePointSet> ps{p1, p2}, qs{q1, q2};
  EXPECT_DOUBLE_EQ(layerwise_ct(ps, qs, nav, 2), ct_distance(p2, q2, nav).total);
}

TEST(LayerwiseCt, Errors) {
  std::mt19937_64 rng(6);
  const std::vector<DiscretePointSet> ps{testing::random_set(2, 2, rng)};
  const std::vector<DiscretePointSet> qs{testing::random_set(2, 2, rng)};
  const std::vector<DiscretePointSet> none;
  EXPECT_THROW(layerwise_ct(ps, qs, NavigatorParams{}, 0), ConfigError);
  EXPECT_THROW(layerwise_ct(ps, qs, NavigatorParams{}, 2), ConfigError);
  EXPECT_THROW(layerwise_ct(ps, none, NavigatorParams{}, 1), ShapeError);
}

TEST(Sinkhorn, ZeroCostGivesIndependentCoupling) {
  const SimplexVector theta({0.2, 0.8});
  const SimplexVector beta({0.1, 0.3, 0.6});
  const SinkhornResult r = sinkhorn_ot(theta, beta, CostMatrix(Matrix(2, 3)));
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.cost, 0.0, 1e-15);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(r.plan(i, j), theta[i] * beta[j], 1e-12);
}

TEST(Sinkhorn, DiagonalOptimum) {
  // Oracle: the exact LP optimum puts 0.5 on each diagonal entry at cost 0.
  SinkhornOptions opts;
  opts.epsilon = 0.01;
  const SinkhornResult r = sinkhorn_ot(half(), half(), CostMatrix(kSwap), opts);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.cost, 0.02);
  EXPECT_GE(r.plan(0, 0), 0.49);
  EXPECT_GE(r.plan(1, 1), 0.49);
  EXPECT_LE(r.marginal_violation, 1e-6);
}

TEST(Sinkhorn, SinglePoint) {
  const SinkhornResult r =
      sinkhorn_ot(SimplexVector({1.0}), SimplexVector({1.0}), CostMatrix(Matrix(1, 1, 0.42)));
  EXPECT_NEAR(r.cost, 0.42, 1e-15);
}

TEST(Sinkhorn, NonConvergenceIsReportedNotThrown) {
  std::mt19937_64 rng(9);
  SinkhornOptions opts;
  opts.epsilon = 1e-3;
  opts.max_iter = 1;
  opts.tol = 1e-14;
  const Matrix raw = random_matrix(4, 5, rng);
  Matrix c(4, 5);
  for (std::size_t i = 0; i < raw.data().size(); ++i) c.data()[i] = std::abs(raw.data()[i]);
  SinkhornResult r;
  ASSERT_NO_THROW(r = sinkhorn_ot(random_simplex(4, rng), random_simplex(5, rng), CostMatrix(c), opts));
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_GT(r.marginal_violation, opts.tol);
}

TEST(Sinkhorn, Errors) {
  SinkhornOptions opts;
  opts.epsilon = 0.0;
  EXPECT_THROW(sinkhorn_ot(half(), half(), CostMatrix(kSwap), opts), ConfigError);
  opts.epsilon = 0.1;
  opts.tol = 0.0;
  EXPECT_THROW(sinkhorn_ot(half(), half(), CostMatrix(kSwap), opts), ConfigError);
  EXPECT_THROW(sinkhorn_ot(half(), half(), CostMatrix(Matrix(3, 2)), SinkhornOptions{}), ShapeError);
}

TEST(ExportPlanGrid, IdentityResample) {
  // Oracle: min-max gives [0, 1, 1, 0]; a same-size resample is the identity.
  const std::vector<double> col{0.1, 0.4, 0.4, 0.1};
  const Matrix g = export_plan_grid(col, 2);
  EXPECT_EQ(g, Matrix::from_rows({{0, 1}, {1, 0}}));
}

TEST(ExportPlanGrid, ConstantColumnIsZero) {
  const Matrix g = export_plan_grid(std::vector<double>(9, 0.25), 6);
  EXPECT_EQ(g, Matrix(6, 6));
}

TEST(ExportPlanGrid, UpsampledStaysInRangeAndSymmetric) {
  const std::vector<double> col{0.1, 0.4, 0.4, 0.1};
  const Matrix g = export_plan_grid(col, 8);
  ASSERT_EQ(g.rows(), 8u);
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_GE(g(r, c), 0.0);
      EXPECT_LE(g(r, c), 1.0);
      EXPECT_NEAR(g(r, c), g(c, r), 1e-15);
    }
  }
  EXPECT_LT(g(0, 0), g(0, 7));
}

TEST(ExportPlanGrid, Errors) {
  EXPECT_THROW(export_plan_grid(std::vector<double>{1, 2, 3}, 4), GridError);
  EXPECT_THROW(export_plan_grid(std::vector<double>(16, 1.0), 3), GridError);
  EXPECT_THROW(export_plan_grid(std::vector<double>{}, 3), GridError);
}

// Packs P, Q, log tau and (optionally) both projections into one vector.
struct CtInstance {
  std::size_t d, n, m, r;
  SimplexVector theta, beta;
  bool projected;

  NavigatorParams nav(std::span<const double> x) const {
    NavigatorParams p;
    p.log_temperature = x[d * (n + m)];
    if (projected) {
      const std::size_t off = d * (n + m) + 1;
      p.patch_projection = Matrix(r, d, std::vector<double>(x.begin() + off, x.begin() + off + r * d));
      p.label_projection = Matrix(r, d, std::vector<double>(x.begin() + off + r * d, x.end()));
    }
    return p;
  }
  Matrix patches(std::span<const double> x) const {
    return Matrix(d, n, std::vector<double>(x.begin(), x.begin() + d * n));
  }
  Matrix labels(std::span<const double> x) const {
    return Matrix(d, m, std::vector<double>(x.begin() + d * n, x.begin() + d * (n + m)));
  }
};

TEST(CtBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const bool projected = trial % 2 == 1;
    CtInstance inst{3, 4, 3, 2, random_simplex(4, rng), random_simplex(3, rng), projected};
    std::vector<double> x = testing::random_vector(inst.d * (inst.n + inst.m), rng);
    x.push_back(std::log(0.5));
    if (projected) {
      const auto proj = testing::random_vector(2 * inst.r * inst.d, rng);
      x.insert(x.end(), proj.begin(), proj.end());
    }
    auto f = [&](std::span<const double> v) {
      return ct_distance(make_point_set(inst.patches(v), inst.theta),
                         make_point_set(inst.labels(v), inst.beta), inst.nav(v))
          .total;
    };
    auto g = [&](std::span<const double> v) {
      const CtGradients cg = ct_backward(inst.patches(v), inst.labels(v), inst.theta, inst.beta,
                                         inst.nav(v));
      std::vector<double> out(cg.patches.data().begin(), cg.patches.data().end());
      out.insert(out.end(), cg.labels.data().begin(), cg.labels.data().end());
      out.push_back(cg.log_temperature);
      if (cg.patch_projection) {
        out.insert(out.end(), cg.patch_projection->data().begin(), cg.patch_projection->data().end());
        out.insert(out.end(), cg.label_projection->data().begin(), cg.label_projection->data().end());
      }
      return out;
    };
    EXPECT_LE(grad_check(f, g, x), 1e-7) << "trial " << trial;
  }
}

TEST(CtBackward, LogThetaGradient) {
  // theta = softmax(z); d/dz_i = h_i - theta_i * sum(h) with h = d/d(log theta).
  std::mt19937_64 rng(78);
  const Matrix e = random_matrix(3, 4, rng);
  const Matrix l = random_matrix(3, 2, rng);
  const SimplexVector beta = random_simplex(2, rng);
  const NavigatorParams nav = NavigatorParams::with_temperature(0.6);
  const std::vector<double> z0 = testing::random_vector(4, rng);
  auto f = [&](std::span<const double> z) {
    return ct_distance(make_point_set(e, softmax_stable(z)), make_point_set(l, beta), nav).total;
  };
  auto g = [&](std::span<const double> z) {
    const SimplexVector theta = softmax_stable(z);
    const CtGradients cg = ct_backward(e, l, theta, beta, nav);
    double total = 0.0;
    for (double h : cg.log_theta) total += h;
    std::vector<double> out(4);
    for (std::size_t i = 0; i < 4; ++i) out[i] = cg.log_theta[i] - theta[i] * total;
    return out;
  };
  EXPECT_LE(grad_check(f, g, z0), 1e-8);
}

TEST(CtBackward, ScaleIsLinear) {
  std::mt19937_64 rng(79);
  const Matrix e = random_matrix(2, 3, rng);
  const Matrix l = random_matrix(2, 2, rng);
  const SimplexVector t = random_simplex(3, rng), b = random_simplex(2, rng);
  const CtGradients one = ct_backward(e, l, t, b, NavigatorParams{}, 1.0);
  const CtGradients three = ct_backward(e, l, t, b, NavigatorParams{}, 3.0);
  EXPECT_NEAR(three.log_temperature, 3.0 * one.log_temperature, 1e-14);
  for (std::size_t i = 0; i < one.patches.data().size(); ++i)
    EXPECT_NEAR(three.patches.data()[i], 3.0 * one.patches.data()[i], 1e-14);
}

}  // namespace
}  // namespace ctalign
