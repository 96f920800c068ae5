#include "mshoot/errors.hpp"
#include "mshoot/models.hpp"
#include "mshoot/sensitivity.hpp"
#include "mshoot/shooting.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mshoot;
using mshoot::testing::vec;

TEST(ForwardSensitivities, FrozenFlow) {
  const ForwardSensitivities s = forward_sensitivities(
      zero_model(3, 2), vec({1, 2, 3}), vec({0, 0}), 0.0, 2.0, 10);
  EXPECT_EQ(s.dx_ds, Matrix::Identity(3, 3));
  EXPECT_EQ(s.dx_dp, Matrix::Zero(3, 2));
}

TEST(ForwardSensitivities, LinearClosedForm) {
  const ForwardSensitivities s = forward_sensitivities(
      linear_model(), vec({1.0}), vec({1.0}), 0.0, 1.0, 100);
  EXPECT_NEAR(s.dx_ds(0, 0), std::exp(1.0), 1e-8);
  EXPECT_NEAR(s.dx_dp(0, 0), std::exp(1.0), 1e-8);

  const ForwardSensitivities s2 = forward_sensitivities(
      linear_model(), vec({1.5}), vec({-0.3}), 2.0, 4.5, 250);
  EXPECT_NEAR(s2.dx_ds(0, 0), std::exp(-0.3 * 2.5), 1e-8);
  EXPECT_NEAR(s2.dx_dp(0, 0), 2.5 * 1.5 * std::exp(-0.3 * 2.5), 1e-8);
}

TEST(ForwardSensitivities, LotkaVolterraMatchesFiniteDifferences) {
  std::mt19937_64 gen(17);
  const Model m = lv_model();
  for (int trial = 0; trial < 10; ++trial) {
    const Vector s = mshoot::testing::uniform_vector(gen, 2, 0.2, 2.0);
    const Vector p = mshoot::testing::uniform_vector(gen, 4, 0.5, 1.5);
    const ForwardSensitivities fs = forward_sensitivities(m, s, p, 0.0, 1.0, 100);
    for (int i = 0; i < 2; ++i) {
      const Vector fd_s = finite_diff_gradient(
          [&](const Vector &ss) {
            return integrate_forward(m, ss, p, 0.0, 1.0, 100).final_state()[i];
          },
          s);
      const Vector fd_p = finite_diff_gradient(
          [&](const Vector &pp) {
            return integrate_forward(m, s, pp, 0.0, 1.0, 100).final_state()[i];
          },
          p);
      EXPECT_LE(max_relative_error(fs.dx_ds.row(i).transpose(), fd_s), 1e-5);
      EXPECT_LE(max_relative_error(fs.dx_dp.row(i).transpose(), fd_p), 1e-5);
    }
  }
}

TEST(ForwardSensitivities, BlowUpPropagates) {
  EXPECT_THROW(forward_sensitivities(lv_model(), vec({0.4, 1.0}),
                                     vec({0.5, 0.5, 0.5, -0.2}), 0.0, 10.0,
                                     1000),
               BlowUp);
}

TEST(ForwardSensitivities, CountsWork) {
  IntegrationStats stats;
  IntegratorOptions opts;
  opts.stats = &stats;
  forward_sensitivities(lv_model(), vec({0.4, 1.0}), vec({1, 1, 1, 1}), 0.0,
                        1.0, 10, opts);
  EXPECT_EQ(stats.sensitivity_sweeps.load(), 1);
  EXPECT_EQ(stats.sensitivity_dims.load(), 14);
}

TEST(FiniteDiff, Examples) {
  const Vector g = finite_diff_gradient(
      [](const Vector &x) { return x.squaredNorm(); }, vec({1.0, 2.0}), 1e-6);
  EXPECT_NEAR(g[0], 2.0, 1e-6);
  EXPECT_NEAR(g[1], 4.0, 1e-6);
  EXPECT_EQ(finite_diff_gradient([](const Vector &) { return 3.5; },
                                 vec({1.0, -2.0, 7.0})),
            Vector::Zero(3));
  const Vector h = finite_diff_gradient(
      [](const Vector &x) { return x[0] * x[1]; }, vec({3.0, 5.0}));
  EXPECT_NEAR(h[0], 5.0, 1e-6);
  EXPECT_NEAR(h[1], 3.0, 1e-6);
}

TEST(RelativeError, DenominatorFloor) {
  EXPECT_DOUBLE_EQ(relative_error(1e-3, 0.0), 1e-3);
  EXPECT_DOUBLE_EQ(relative_error(110.0, 100.0), 0.1);
  EXPECT_DOUBLE_EQ(max_relative_error(vec({1.0, 210.0}), vec({1.0, 200.0})),
                   0.05);
}

TEST(CostReport, Examples) {
  CostReport r = cost_report(2, 4);
  EXPECT_EQ(r.ode_dimensions_adjoint, 8);
  EXPECT_EQ(r.ode_dimensions_forward_sens, 14);
  r = cost_report(1, 1);
  EXPECT_EQ(r.ode_dimensions_adjoint, 3);
  EXPECT_EQ(r.ode_dimensions_forward_sens, 3);
  r = cost_report(10, 50);
  EXPECT_EQ(r.ode_dimensions_adjoint, 70);
  EXPECT_EQ(r.ode_dimensions_forward_sens, 610);
}

TEST(CostReport, SlopesInParameterCount) {
  for (int d = 1; d <= 6; ++d)
    for (int m = 1; m < 20; ++m) {
      const CostReport a = cost_report(d, m);
      const CostReport b = cost_report(d, m + 1);
      EXPECT_EQ(b.ode_dimensions_forward_sens - a.ode_dimensions_forward_sens, d);
      EXPECT_EQ(b.ode_dimensions_adjoint - a.ode_dimensions_adjoint, 1);
    }
}

TEST(CostReport, MatchesMeasuredSweeps) {
  IntegrationStats stats;
  IntegratorOptions opts;
  opts.stats = &stats;
  const ShootingGrid grid({0.0, 1.0}, 50);
  ExtendedParams q(2, 2, 4);
  q.set_s(0, vec({0.4, 1.0}));
  q.set_s(1, vec({0.5, 1.0}));
  q.p() = vec({1, 1, 1, 1});
  const ConstraintValue cv = constraint_value(0, q, lv_model(), grid, opts);
  constraint_gradient(0, q, lv_model(), grid, cv.traj, opts);
  EXPECT_EQ(stats.total_dims(), cost_report(2, 4).ode_dimensions_adjoint);
  stats.reset();
  forward_sensitivities(lv_model(), q.s(0), q.p(), 0.0, 1.0, 50, opts);
  EXPECT_EQ(stats.total_dims(), cost_report(2, 4).ode_dimensions_forward_sens);
}

// Adjoint gradient, forward-sensitivity chain rule and central differences
// must agree pairwise on both models.
TEST(OracleTriangle, TwentyRandomConfigurations) {
  std::mt19937_64 gen(2718);
  std::uniform_int_distribution<int> pick(0, 3);
  const ShootingGrid grid(mshoot::testing::unit_nodes(4), 100);
  for (int config = 0; config < 20; ++config) {
    const bool lv = config % 2 == 0;
    const Model model = lv ? lv_model() : linear_model();
    const int d = model.dim_state;
    ExtendedParams q(5, d, model.dim_params);
    for (int j = 0; j < 5; ++j)
      q.set_s(j, lv ? mshoot::testing::uniform_vector(gen, 2, 0.2, 2.0)
                    : mshoot::testing::uniform_vector(gen, 1, -2.0, 2.0));
    q.p() = lv ? mshoot::testing::uniform_vector(gen, 4, 0.5, 1.5)
               : mshoot::testing::uniform_vector(gen, 1, -1.0, 1.0);
    const int j = pick(gen);

    const ConstraintValue cv = constraint_value(j, q, model, grid);
    const ConstraintGradient g = constraint_gradient(j, q, model, grid, cv.traj);
    const ForwardSensitivities s = forward_sensitivities(
        model, q.s(j), q.p(), grid.nodes[j], grid.nodes[j + 1], 100);
    Vector chain = Vector::Zero(q.size());
    chain.segment(q.s_offset(j), d) = 2.0 * s.dx_ds.transpose() * cv.defect;
    chain.segment(q.s_offset(j + 1), d) = -2.0 * cv.defect;
    chain.tail(model.dim_params) = 2.0 * s.dx_dp.transpose() * cv.defect;
    const Vector fd = finite_diff_gradient(
        [&](const Vector &flat) {
          return constraint_value(j, q.with_values(flat), model, grid).h;
        },
        q.flatten());
    const Vector adj = g.dense(q);
    EXPECT_LE(max_relative_error(adj, chain), 1e-8) << "config " << config;
    EXPECT_LE(max_relative_error(adj, fd), 1e-5) << "config " << config;
    EXPECT_LE(max_relative_error(chain, fd), 1e-5) << "config " << config;
  }
}
