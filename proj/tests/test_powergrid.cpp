#include "scoreinv/powergrid.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace scoreinv;
using namespace scoreinv::powergrid;

namespace {

const double kX11 = 1.006755413658047;
const double kX14 = -0.070244002800643;

DiffState diff_part(const GridState& x) { return x.head<kDifferential>(); }

GridConfig short_config() {
  GridConfig cfg;
  cfg.t_end = 1.0;
  cfg.window_start = 0.5;
  cfg.window_end = 1.0;
  return cfg;
}

}  // namespace

TEST(Residual, SteadyStateGate) {
  const GridState r = residual(steady_state(), diff_part(steady_state()), kSteadyDt, 10.0, kSteadyP, kSteadyQ);
  EXPECT_LE(r.lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(Residual, PrintedFactoredRowsLeaveGap) {
  // Rows 10 and 13 as printed use one susceptance for both voltage terms.
  const GridState x = steady_state();
  const double c = std::cos(x(0)), s = std::sin(x(0));
  const double printed10 = s * x(7) + c * x(8) - 0.030140727054618 * (x(9) - x(10)) -
                           17.361008783459972 * (x(12) - x(13));
  const double printed13 = -(c * x(7)) + s * x(8) + 17.361008783459972 * (x(9) - x(10)) -
                           0.030140727054618 * (x(12) - x(13));
  EXPECT_NEAR(std::abs(printed10), 3.5e-6, 0.1e-6);
  EXPECT_NEAR(std::abs(printed13), 5.0e-5, 0.1e-5);

  const double dself = 17.361058783459974 - 17.361008783459972;
  const GridState r = residual(x, diff_part(x), kSteadyDt, 10.0, kSteadyP, kSteadyQ);
  EXPECT_NEAR(r(9), printed10 + dself * x(13), 1e-14);
  EXPECT_NEAR(r(12), printed13 - dself * x(10), 1e-13);
  EXPECT_LE(std::abs(r(9)), 1e-10);
  EXPECT_LE(std::abs(r(12)), 1e-10);
}

TEST(Residual, RowOneIsLinearInX2) {
  const GridState x = steady_state();
  const double dt = 0.01;
  GridState xp = x;
  xp(1) += 1.0;
  const GridState r0 = residual(x, diff_part(x), dt, 10.0, kSteadyP, kSteadyQ);
  const GridState r1 = residual(xp, diff_part(x), dt, 10.0, kSteadyP, kSteadyQ);
  EXPECT_NEAR(r1(0) - r0(0), -dt, 1e-14);
}

TEST(Residual, InertiaScalesRateTerm) {
  GridState x = steady_state();
  DiffState prev = diff_part(x);
  prev(1) -= 0.02;
  const double dt = 0.01, m = 7.0;
  const double rm = residual(x, prev, dt, m, kSteadyP, kSteadyQ)(1);
  const double r2m = residual(x, prev, dt, 2 * m, kSteadyP, kSteadyQ)(1);
  EXPECT_NEAR(r2m - rm, (m / 23.64) * 0.02, 1e-14);
}

TEST(Residual, VoltageCollapse) {
  GridState x = steady_state();
  x(11) = 0;
  x(14) = 0;
  try {
    residual(x, diff_part(x), 0.01, 10.0, kSteadyP, kSteadyQ);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_STREQ(e.what(), "load-bus voltage collapse");
  }
}

TEST(Step, SteadyStateIsFixedPoint) {
  GridState x = steady_state();
  for (int k = 0; k < 100; ++k) x = step(x, 0.01, 10.0, kSteadyP, kSteadyQ);
  EXPECT_LE((x - steady_state()).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(Step, PerturbedLoad) {
  const GridState x0 = steady_state();
  const GridState x = step(x0, 0.01, 10.0, 1.30, kSteadyQ);
  EXPECT_GT(std::abs(x(11) - x0(11)), 1e-6);
  EXPECT_GT(std::abs(x(14) - x0(14)), 1e-6);
  const GridState r = residual(x, diff_part(x0), 0.01, 10.0, 1.30, kSteadyQ);
  EXPECT_LE(r.tail<8>().lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(Step, FirstOrderSelfConvergence) {
  const double t_end = 0.4;
  auto run = [&](double dt) {
    GridState x = steady_state();
    const int n = static_cast<int>(std::lround(t_end / dt));
    for (int k = 1; k <= n; ++k) {
      const double t = k * dt;
      x = step(x, dt, 10.0, 1.25 + 0.1 * std::sin(5 * t), 0.5 + 0.05 * std::sin(3 * t));
    }
    return x;
  };
  const double dt = 0.02;
  const GridState ref = run(dt / 8);
  const double e1 = (run(dt) - ref).lpNorm<Eigen::Infinity>();
  const double e2 = (run(dt / 2) - ref).lpNorm<Eigen::Infinity>();
  const double e4 = (run(dt / 4) - ref).lpNorm<Eigen::Infinity>();
  // Errors against a dt/8 reference shrink by 7/3 and 3 for an exact first-order method.
  EXPECT_NEAR(e1 / e2, 7.0 / 3.0, 0.35);
  EXPECT_NEAR(e2 / e4, 3.0, 0.45);
}

TEST(Simulate, DefaultWindowSize) {
  const GridModel model;
  EXPECT_EQ(model.observable_size(), 1000);
  EXPECT_EQ(model.window_steps().first, 300);
  EXPECT_EQ(model.window_steps().second, 800);
}

TEST(Simulate, ConstantLoadsGiveSteadyObservables) {
  const GridModel model;
  const LoadProcess process(model.config());
  const Vector d = model.simulate(10.0, process.constant(kSteadyP, kSteadyQ));
  ASSERT_EQ(d.size(), 1000);
  EXPECT_LE((d.head(500).array() - kX11).abs().maxCoeff(), 1e-8);
  EXPECT_LE((d.tail(500).array() - kX14).abs().maxCoeff(), 1e-8);
}

TEST(Simulate, DeterministicObservables) {
  const GridConfig cfg = short_config();
  const GridModel model(cfg);
  const LoadProcess process(cfg);
  const LoadSeries loads = process.draw(3, 0);
  EXPECT_TRUE(model.simulate(12.0, loads) == model.simulate(12.0, loads));
  EXPECT_TRUE(process.draw(3, 0).p == loads.p);
}

TEST(Simulate, TrajectorySatisfiesConstraints) {
  const GridConfig cfg = short_config();
  const GridModel model(cfg);
  const LoadProcess process(cfg);
  const LoadSeries loads = process.draw(5, 1);
  const double m = 15.0;
  const Trajectory traj = model.integrate(m, loads);
  ASSERT_EQ(traj.states.rows(), loads.steps() + 1);
  for (Index k = 1; k < traj.states.rows(); ++k) {
    const GridState x = traj.states.row(k).transpose();
    const DiffState prev = traj.states.row(k - 1).head<kDifferential>().transpose();
    const GridState r = residual(x, prev, loads.dt, m, loads.p(k - 1), loads.q(k - 1));
    EXPECT_LE(r.lpNorm<Eigen::Infinity>(), 1e-8) << "step " << k;
  }
}

TEST(Loads, DefaultParameters) {
  const GridConfig cfg;
  const LoadProcess process(cfg);
  EXPECT_DOUBLE_EQ(process.p_process().spec().mean, 1.25);
  EXPECT_DOUBLE_EQ(process.q_process().spec().mean, 0.5);
  EXPECT_NEAR(process.p_process().covariance()(0, 0), 0.01 * 1.1, 1e-9);
  EXPECT_NEAR(process.q_process().covariance()(0, 0), 0.0025 * 1.1, 1e-9);
  const LoadSeries s = process.draw(1, 0);
  EXPECT_EQ(s.steps(), 1000);
  EXPECT_DOUBLE_EQ(s.dt, 0.01);
}

TEST(VariogramWeights, BandedWithinAndAcrossChannels) {
  const GridConfig cfg = short_config();
  const GridModel model(cfg);
  const VariogramWeights w = model.variogram_weights();
  const Index half = model.observable_size() / 2;
  ASSERT_EQ(w.w.rows(), 2 * half);
  EXPECT_EQ(w.w(0, 0), 0.0);
  EXPECT_EQ(w.w(0, 1), 1.0);
  EXPECT_EQ(w.w(0, 49), 1.0);
  EXPECT_EQ(w.w(0, 50), 1.0);
  EXPECT_EQ(w.w(0, 49 + 2), 0.0);
  EXPECT_EQ(w.w(3, half + 3), 1.0);
  EXPECT_EQ(w.w(3, half + 4), 0.0);
  EXPECT_TRUE(w.w == w.w.transpose());
}

TEST(Objective, SingleBatchEqualsInstantaneousScore) {
  const GridConfig cfg = short_config();
  const GridModel model(cfg);
  const LoadProcess process(cfg);
  std::vector<LoadSeries> scenarios;
  for (int i = 0; i < 3; ++i) scenarios.push_back(process.draw(11, i));
  Matrix obs(1, model.observable_size());
  obs.row(0) = model.simulate(10.0, process.draw(22, 0)).transpose();
  ScoreSpec spec;
  spec.kind = ScoreKind::variogram;
  spec.variogram = model.variogram_weights();
  const Ensemble ens = simulate_ensemble(model, 9.0, scenarios);
  EXPECT_DOUBLE_EQ(grid_objective(model, 9.0, obs, scenarios, spec),
                   variogram_score(ens, Vector(obs.row(0).transpose()), spec.variogram));
}

TEST(Estimate, TraceAndBounds) {
  const GridConfig cfg = short_config();
  const GridModel model(cfg);
  const LoadProcess process(cfg);
  std::vector<LoadSeries> scenarios;
  for (int i = 0; i < 4; ++i) scenarios.push_back(process.draw(31, i));
  Matrix obs(2, model.observable_size());
  for (int b = 0; b < 2; ++b) obs.row(b) = model.simulate(10.0, process.draw(32, b)).transpose();
  ScoreSpec spec;
  spec.kind = ScoreKind::energy;
  const InertiaEstimate est = estimate_inertia(model, obs, scenarios, spec, 5.0, 15.0, 15.0);
  EXPECT_GE(est.m, 5.0);
  EXPECT_LE(est.m, 15.0);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& ev : est.search.trace) {
    if (!ev.accepted) continue;
    EXPECT_LE(ev.value, best);
    best = ev.value;
  }
  EXPECT_EQ(est.objective, best);
  EXPECT_THROW(estimate_inertia(model, obs, scenarios, spec, 15.0, 5.0, 10.0), std::invalid_argument);
}
