#ifndef SCOREINV_POWERGRID_HPP
#define SCOREINV_POWERGRID_HPP

// One-generator, three-bus power grid as an index-1 DAE: seven differential
// states (rotor angle and speed, machine and exciter states) and eight
// algebraic states (stator currents and bus voltages). The generator inertia
// m multiplies the swing equation; the load (P, Q) at the load bus is the
// stochastic input.

#include "scoreinv/optimize.hpp"
#include "scoreinv/scores.hpp"
#include "scoreinv/stochastic.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace scoreinv::powergrid {

constexpr int kStates = 15;
constexpr int kDifferential = 7;
constexpr double kSteadyP = 1.25;
constexpr double kSteadyQ = 0.5;
// Selects the steady-state residual (time-derivative terms dropped).
constexpr double kSteadyDt = std::numeric_limits<double>::infinity();

using GridState = Eigen::Matrix<double, kStates, 1>;
using DiffState = Eigen::Matrix<double, kDifferential, 1>;

/// Published steady-state operating point for P = 1.25, Q = 0.5.
GridState steady_state();

/// Rows 0-6: backward-Euler residuals x_d - x_d,prev - dt f_d (row 1 carries
/// the inertia factor m / 23.64 on the increment). Rows 7-14: algebraic
/// residuals g(x; P, Q). With dt = kSteadyDt rows 0-6 are f_d(x) instead.
GridState residual(const GridState& x, const DiffState& prev_diff, double dt, double m, double p, double q);

struct NewtonOptions {
  double tol = 1e-10;  // infinity norm of the residual
  int max_iters = 50;
};

/// One backward-Euler step by Newton iteration with a forward-difference
/// Jacobian, warm-started from `prev`.
GridState step(const GridState& prev, double dt, double m, double p, double q, const NewtonOptions& opts = {});

/// Solve the steady-state residual starting from `guess`.
GridState refine_steady_state(const GridState& guess, double p = kSteadyP, double q = kSteadyQ,
                              const NewtonOptions& opts = {});

struct LoadSeries {
  Vector p;  // load at step k = 1..T (held over the step ending at t0 + k dt)
  Vector q;
  double dt = 0.01;
  double t0 = 0.0;

  Index steps() const { return p.size(); }
  void validate() const;
};

struct Trajectory {
  Matrix states;  // (T + 1) x 15, row 0 is the initial state
  Vector times;
};

struct GridConfig {
  double t_end = 10.0;
  double dt = 0.01;
  double window_start = 3.0;  // observation window [start, end)
  double window_end = 8.0;
  double p_mean = kSteadyP;
  double q_mean = kSteadyQ;
  double p_scale = 0.1;
  double q_scale = 0.05;
  double length2 = 0.002;
  double floor = 0.1;
  // Diagonal jitter relative to scale^2; the squared-exponential kernel on a
  // 10 ms grid is numerically singular without it.
  double relative_nugget = 1e-8;
  int variogram_lag = 50;
  NewtonOptions newton;

  Index steps() const;
  void validate() const;
};

/// Temporal Gaussian load process: one joint draw over the time grid per
/// scenario for P and, independently, for Q.
class LoadProcess {
 public:
  explicit LoadProcess(const GridConfig& cfg);

  /// Scenario `index`: P from stream (seed, 2 index), Q from (seed, 2 index + 1).
  LoadSeries draw(std::uint64_t seed, std::uint64_t index) const;
  LoadSeries constant(double p, double q) const;

  const GaussianProcess& p_process() const { return p_; }
  const GaussianProcess& q_process() const { return q_; }

 private:
  GridConfig cfg_;
  GaussianProcess p_;
  GaussianProcess q_;
};

class GridModel {
 public:
  explicit GridModel(GridConfig cfg = {});

  const GridConfig& config() const { return cfg_; }
  const GridState& initial_state() const { return x0_; }
  /// Steps k (1-based, t_k = t0 + k dt) observed: [first, last).
  std::pair<Index, Index> window_steps() const;
  /// 2 x window length: x11 over the window, then x14.
  Index observable_size() const;

  Trajectory integrate(double m, const LoadSeries& loads) const;
  Vector simulate(double m, const LoadSeries& loads) const;
  Vector observe(const Trajectory& traj) const;

  /// Unit weights for |i - j| <= lag within each channel and between the two
  /// channels at equal time index.
  VariogramWeights variogram_weights() const;

 private:
  GridConfig cfg_;
  GridState x0_;
};

void write_trajectory_csv(const std::string& path, const Trajectory& traj);

/// Observables of every scenario (M x Ns).
Ensemble simulate_ensemble(const GridModel& model, double m, const std::vector<LoadSeries>& scenarios);

/// Mean score of the simulated ensemble at m against the rows of obs_batches (n x M).
double grid_objective(const GridModel& model, double m, const Matrix& obs_batches,
                      const std::vector<LoadSeries>& scenarios, const ScoreSpec& spec);

struct InertiaEstimate {
  double m = 0;
  double objective = 0;
  ScalarSearchResult search;
};

/// Bounded quasi-Newton estimate of m on [lo, hi] from `start`, with a
/// forward-difference derivative of step 1e-3 (1 + |m|).
InertiaEstimate estimate_inertia(const GridModel& model, const Matrix& obs_batches,
                                 const std::vector<LoadSeries>& scenarios, const ScoreSpec& spec, double lo, double hi,
                                 double start);

}  // namespace scoreinv::powergrid

#endif  // SCOREINV_POWERGRID_HPP
