#include "mshoot/errors.hpp"
#include "mshoot/models.hpp"
#include "mshoot/sensitivity.hpp"
#include "mshoot/shooting.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <random>
#include <set>

using namespace mshoot;
using mshoot::testing::vec;

namespace {

MeasurementSet single_point(double eta, double sigma) {
  MeasurementSet m;
  m.times = {0.0};
  m.node_indices = {0};
  m.obs_indices = {0};
  m.values = Matrix::Constant(1, 1, eta);
  m.weights = Matrix::Constant(1, 1, sigma);
  return m;
}

ExtendedParams scalar_q(std::initializer_list<double> s, double p) {
  Matrix blocks(static_cast<Eigen::Index>(s.size()), 1);
  Eigen::Index k = 0;
  for (double v : s)
    blocks(k++, 0) = v;
  return ExtendedParams(blocks, vec({p}));
}

/// Random LV point near the benchmark: s in [0.2, 2.5], p in [0.5, 1.5].
ExtendedParams random_lv_q(std::mt19937_64 &gen, int nodes) {
  ExtendedParams q(nodes, 2, 4);
  for (int j = 0; j < nodes; ++j)
    q.set_s(j, mshoot::testing::uniform_vector(gen, 2, 0.2, 2.5));
  q.p() = mshoot::testing::uniform_vector(gen, 4, 0.5, 1.5);
  return q;
}

} // namespace

TEST(ExtendedParams, LayoutAndRoundTrip) {
  ExtendedParams q(11, 2, 4);
  EXPECT_EQ(q.size(), 26);
  EXPECT_EQ(q.s_offset(3), 6);
  EXPECT_EQ(q.s_index(3, 1), 7);
  EXPECT_EQ(q.p_offset(), 22);
  Vector flat = Vector::LinSpaced(26, 0.0, 25.0);
  const ExtendedParams r = q.with_values(flat);
  EXPECT_EQ(r.s(3, 1), 7.0);
  EXPECT_EQ(r.p()[2], 24.0);
  EXPECT_EQ(r.flatten(), flat);
  EXPECT_THROW(q.with_values(Vector::Zero(25)), DimensionError);
}

TEST(ShootingGrid, Validation) {
  EXPECT_THROW(ShootingGrid({0.0}, 10).validate(), DimensionError);
  EXPECT_THROW(ShootingGrid({0.0, 1.0, 1.0}, 10).validate(), DimensionError);
  EXPECT_THROW(ShootingGrid({0.0, 1.0}, 0).validate(), DimensionError);
  const ShootingGrid g({0.0, 0.5, 1.5}, 10);
  EXPECT_EQ(g.intervals(), 2);
  EXPECT_EQ(g.find_node(0.5), 1);
  EXPECT_EQ(g.find_node(0.5 + 1e-13), 1);
  EXPECT_EQ(g.find_node(0.7), -1);
}

TEST(Objective, PerfectFitIsZero) {
  const MeasurementSet m = single_point(1.0, 1.0);
  EXPECT_EQ(objective_value(scalar_q({1.0, 0.0}, 0.3), m), 0.0);
  EXPECT_EQ(objective_gradient(scalar_q({1.0, 0.0}, 0.3), m),
            Vector::Zero(3));
}

TEST(Objective, HandArithmetic) {
  EXPECT_DOUBLE_EQ(objective_value(scalar_q({0.5, 0.0}, 0.0),
                                   single_point(1.0, 1.0)),
                   0.25);
  EXPECT_DOUBLE_EQ(objective_value(scalar_q({0.5, 0.0}, 0.0),
                                   single_point(1.0, 0.5)),
                   1.0);
  const Vector g =
      objective_gradient(scalar_q({0.5, 0.0}, 0.0), single_point(1.0, 1.0));
  EXPECT_DOUBLE_EQ(g[0], -1.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 0.0);
}

TEST(Objective, MissingEntriesAreSkipped) {
  MeasurementSet m = single_point(1.0, 1.0);
  m.values(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(objective_value(scalar_q({0.5, 0.0}, 0.0), m), 0.0);
  EXPECT_EQ(objective_hessian_diagonal(scalar_q({0.5, 0.0}, 0.0), m),
            Vector::Zero(3));
}

TEST(Objective, GradientMatchesFiniteDifferencesAndPBlockIsZero) {
  std::mt19937_64 gen(7);
  const ShootingGrid grid(mshoot::testing::unit_nodes(4), 20);
  MeasurementSet m;
  m.times = {0, 1, 2, 3, 4};
  m.node_indices = {0, 1, 2, 3, 4};
  m.obs_indices = {0, 1};
  m.values = Matrix::Random(2, 5);
  m.weights = Matrix::Constant(2, 5, 0.3);
  for (int trial = 0; trial < 10; ++trial) {
    const ExtendedParams q = random_lv_q(gen, 5);
    const Vector g = objective_gradient(q, m);
    const Vector fd = finite_diff_gradient(
        [&](const Vector &flat) { return objective_value(q.with_values(flat), m); },
        q.flatten());
    EXPECT_LE(max_relative_error(g, fd), 1e-6);
    for (int i = 0; i < 4; ++i)
      EXPECT_EQ(g[q.p_offset() + i], 0.0);
  }
  const Vector diag = objective_hessian_diagonal(random_lv_q(gen, 5), m);
  EXPECT_NEAR(diag[0], 2.0 / 0.09, 1e-12);
  EXPECT_EQ(diag.tail(4), Vector::Zero(4));
}

TEST(ConstraintValue, ZeroFieldCases) {
  const Model model = zero_model(2, 1);
  const ShootingGrid grid({0.0, 1.0}, 10);
  ExtendedParams q(2, 2, 1);
  q.set_s(0, vec({0.3, 0.7}));
  q.set_s(1, vec({0.3, 0.7}));
  EXPECT_EQ(constraint_value(0, q, model, grid).h, 0.0);
  q.set_s(0, vec({1.0, 0.0}));
  q.set_s(1, vec({0.0, 0.0}));
  EXPECT_EQ(constraint_value(0, q, model, grid).h, 1.0);
}

TEST(ConstraintValue, LinearClosedForm) {
  const ShootingGrid grid({0.0, 1.0}, 100);
  const ConstraintValue cv =
      constraint_value(0, scalar_q({1.0, 2.0}, 1.0), linear_model(), grid);
  const double expected = std::pow(std::numbers::e - 2.0, 2);
  EXPECT_NEAR(cv.h, expected, 1e-8);
  EXPECT_NEAR(expected, 0.515929, 1e-6);
  EXPECT_NEAR(cv.defect[0], std::numbers::e - 2.0, 1e-8);
}

TEST(ConstraintValue, BlowUpCarriesInterval) {
  const ShootingGrid grid(mshoot::testing::unit_nodes(10), 100);
  ExtendedParams q(11, 2, 4);
  for (int j = 0; j <= 10; ++j)
    q.set_s(j, vec({0.4, 1.0}));
  q.p() = vec({0.5, 0.5, 0.5, -0.2});
  // From (0.4, 1) the p0 flow explodes within about 3.3 time units, so a
  // single unit interval does not; push the start state up instead.
  q.set_s(4, vec({50.0, 50.0}));
  try {
    constraint_value(4, q, lv_model(), grid);
    FAIL() << "expected BlowUp";
  } catch (const BlowUp &e) {
    EXPECT_EQ(e.interval(), 4);
    EXPECT_GT(e.time(), 4.0);
    EXPECT_LT(e.time(), 5.0);
  }
}

TEST(ConstraintValue, RejectsBadIndex) {
  const ShootingGrid grid({0.0, 1.0}, 10);
  EXPECT_THROW(constraint_value(1, scalar_q({1.0, 1.0}, 0.0), linear_model(),
                                grid),
               DimensionError);
}

TEST(ConstraintGradient, SatisfiedConstraintIsStationary) {
  const ShootingGrid grid({0.0, 1.0}, 50);
  ExtendedParams q(2, 2, 4);
  q.set_s(0, vec({0.4, 1.0}));
  q.p() = vec({1, 1, 1, 1});
  q.set_s(1, constraint_value(0, q, lv_model(), grid).traj.final_state());
  const ConstraintValue cv = constraint_value(0, q, lv_model(), grid);
  EXPECT_EQ(cv.h, 0.0);
  const ConstraintGradient g = constraint_gradient(0, q, lv_model(), grid, cv.traj);
  EXPECT_EQ(g.grad_s_j, Vector::Zero(2));
  EXPECT_EQ(g.grad_s_j1, Vector::Zero(2));
  EXPECT_EQ(g.grad_p, Vector::Zero(4));
}

TEST(ConstraintGradient, ZeroFieldSignFollowsBackwardAdjoint) {
  // h = (s_j - s_{j+1})^2, so dh/ds_j = 2 (s_j - s_{j+1}) = -Lambda(tau_j).
  const Model model = zero_model(1, 1);
  const ShootingGrid grid({0.0, 1.0}, 10);
  const ExtendedParams q = scalar_q({1.0, 0.0}, 0.0);
  const ConstraintValue cv = constraint_value(0, q, model, grid);
  const ConstraintGradient g = constraint_gradient(0, q, model, grid, cv.traj);
  EXPECT_DOUBLE_EQ(g.grad_s_j[0], 2.0);
  EXPECT_DOUBLE_EQ(g.grad_s_j1[0], -2.0);
  EXPECT_EQ(g.grad_p[0], 0.0);
  const AdjointResult adj =
      integrate_adjoint(model, cv.traj, q.p(), -2.0 * cv.defect);
  EXPECT_DOUBLE_EQ(g.grad_s_j[0], -adj.lambda_at_start[0]);
  EXPECT_NE(g.grad_s_j[0], adj.lambda_at_start[0]);
}

TEST(ConstraintGradient, LvFirstIntervalMatchesFiniteDifferences) {
  const ShootingGrid grid({0.0, 1.0}, 100);
  ExtendedParams q(2, 2, 4);
  q.set_s(0, vec({0.4, 1.0}));
  q.set_s(1, vec({0.35, 1.6}));
  q.p() = vec({0.5, 0.5, 0.5, -0.2});
  const ConstraintValue cv = constraint_value(0, q, lv_model(), grid);
  const ConstraintGradient g = constraint_gradient(0, q, lv_model(), grid, cv.traj);
  const Vector fd = finite_diff_gradient(
      [&](const Vector &flat) {
        return constraint_value(0, q.with_values(flat), lv_model(), grid).h;
      },
      q.flatten());
  EXPECT_LE(max_relative_error(g.dense(q), fd), 1e-6);
}

TEST(ConstraintGradient, RandomPointsMatchFiniteDifferences) {
  std::mt19937_64 gen(99);
  const ShootingGrid grid(mshoot::testing::unit_nodes(3), 100);
  for (int trial = 0; trial < 5; ++trial) {
    const ExtendedParams q = random_lv_q(gen, 4);
    for (int j = 0; j < 3; ++j) {
      const ConstraintValue cv = constraint_value(j, q, lv_model(), grid);
      const ConstraintGradient g =
          constraint_gradient(j, q, lv_model(), grid, cv.traj);
      const Vector fd = finite_diff_gradient(
          [&](const Vector &flat) {
            return constraint_value(j, q.with_values(flat), lv_model(), grid).h;
          },
          q.flatten());
      EXPECT_LE(max_relative_error(g.dense(q), fd), 1e-5)
          << "trial " << trial << " interval " << j;
    }
  }
  const ShootingGrid lin_grid({0.0, 0.7, 1.5}, 100);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector v = mshoot::testing::uniform_vector(gen, 4, -1.0, 1.0);
    const ExtendedParams q = scalar_q({v[0], v[1], v[2]}, v[3]);
    for (int j = 0; j < 2; ++j) {
      const ConstraintValue cv = constraint_value(j, q, linear_model(), lin_grid);
      const ConstraintGradient g =
          constraint_gradient(j, q, linear_model(), lin_grid, cv.traj);
      const Vector fd = finite_diff_gradient(
          [&](const Vector &flat) {
            return constraint_value(j, q.with_values(flat), linear_model(),
                                    lin_grid)
                .h;
          },
          q.flatten());
      EXPECT_LE(max_relative_error(g.dense(q), fd), 1e-5);
    }
  }
}

TEST(ConstraintGradient, ChainRuleThroughForwardSensitivities) {
  std::mt19937_64 gen(5);
  const ShootingGrid grid(mshoot::testing::unit_nodes(2), 100);
  for (int trial = 0; trial < 5; ++trial) {
    const ExtendedParams q = random_lv_q(gen, 3);
    for (int j = 0; j < 2; ++j) {
      const ConstraintValue cv = constraint_value(j, q, lv_model(), grid);
      const ConstraintGradient g =
          constraint_gradient(j, q, lv_model(), grid, cv.traj);
      const ForwardSensitivities s = forward_sensitivities(
          lv_model(), q.s(j), q.p(), grid.nodes[j], grid.nodes[j + 1], 100);
      EXPECT_LE(max_relative_error(g.grad_s_j,
                                   2.0 * s.dx_ds.transpose() * cv.defect),
                1e-8);
      EXPECT_LE(max_relative_error(g.grad_p,
                                   2.0 * s.dx_dp.transpose() * cv.defect),
                1e-8);
    }
  }
}

TEST(ConstraintGradient, SparsityOfDenseEmbedding) {
  std::mt19937_64 gen(11);
  const ShootingGrid grid(mshoot::testing::unit_nodes(10), 20);
  for (int trial = 0; trial < 5; ++trial) {
    const ExtendedParams q = random_lv_q(gen, 11);
    for (int j = 0; j < 10; ++j) {
      const ConstraintValue cv = constraint_value(j, q, lv_model(), grid);
      const ConstraintGradient g =
          constraint_gradient(j, q, lv_model(), grid, cv.traj);
      const Vector dense = g.dense(q);
      const auto support = g.support(q);
      ASSERT_EQ(support.size(), 8u);
      const std::set<int> slots(support.begin(), support.end());
      EXPECT_EQ(slots.size(), 8u);
      for (int k = 0; k < q.size(); ++k)
        if (!slots.count(k))
          EXPECT_EQ(dense[k], 0.0) << "slot " << k;
    }
  }
}

TEST(ConstraintGradient, ParallelEvaluationMatchesSequential) {
  std::mt19937_64 gen(3);
  const ShootingGrid grid(mshoot::testing::unit_nodes(10), 100);
  const ExtendedParams q = random_lv_q(gen, 11);
  auto eval = [&](int j) {
    const ConstraintValue cv = constraint_value(j, q, lv_model(), grid);
    return constraint_gradient(j, q, lv_model(), grid, cv.traj).dense(q);
  };
  std::vector<std::future<Vector>> futures;
  for (int j = 0; j < 10; ++j)
    futures.push_back(std::async(std::launch::async, eval, j));
  for (int j = 0; j < 10; ++j)
    EXPECT_EQ(futures[j].get(), eval(j));
}

TEST(MeasurementSet, Validation) {
  MeasurementSet m = single_point(1.0, 1.0);
  EXPECT_NO_THROW(m.validate());
  m.weights(0, 0) = 0.0;
  EXPECT_THROW(m.validate(), DimensionError);
}
