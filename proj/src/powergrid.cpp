#include "scoreinv/powergrid.hpp"

#include "scoreinv/io.hpp"

#include <cmath>

namespace scoreinv::powergrid {

GridState steady_state() {
  GridState x;
  x << 0.391057483977274, 376.9911184307751, 1.022092319747551, 0.308311065534821, 1.107019848098437,
      0.199263572657719, 1.12883036798339, 0.996801975949364, 0.909203967958775, 1.04, 1.006755413658047,
      0.938198590465838, 0, -0.070244002800643, -0.166824934470857;
  return x;
}

namespace {

// Right-hand sides of the seven differential equations; entry 1 is the
// right-hand side of (m / 23.64) dx2/dt.
DiffState differential_rhs(const GridState& x) {
  const double x1 = x(0), x2 = x(1), x3 = x(2), x4 = x(3), x5 = x(4), x6 = x(5), x7 = x(6);
  const double x8 = x(7), x9 = x(8), x10 = x(9), x13 = x(12);
  DiffState f;
  f(0) = -376.99111843077515 + x2;
  f(1) = 47.70113037725341 - 0.09968102073365231 * x2 -
         7.974481658692184 * (x4 * x8 + x3 * x9 + 0.0361 * x8 * x9);
  f(2) = 0.11160714285714285 * (x5 - x3) - 0.009508928571428571 * x8;
  f(3) = -3.2258064516129035 * x4 + 1.0938709677419356 * x9;
  f(4) = -0.012420382165605096 * std::exp(1.555 * x5) + 3.1847133757961785 * (x7 - x5);
  f(5) = 0.5142857142857145 * x5 - 2.857142857142857 * x6;
  f(6) = 109.644151839917 - 18 * x5 + 100 * x6 - 5 * x7 - 100 * std::sqrt(x10 * x10 + x13 * x13);
  (void)x1;
  return f;
}

Eigen::Matrix<double, 8, 1> algebraic_residual(const GridState& x, double p, double q) {
  const double x1 = x(0), x3 = x(2), x4 = x(3);
  const double x8 = x(7), x9 = x(8), x10 = x(9), x11 = x(10), x12 = x(11), x13 = x(12), x14 = x(13), x15 = x(14);
  const double v2 = x12 * x12 + x15 * x15;
  if (std::abs(x12) + std::abs(x15) == 0) throw NumericalError("load-bus voltage collapse");
  const double c = std::cos(x1);
  const double s = std::sin(x1);
  Eigen::Matrix<double, 8, 1> g;
  g(0) = x8 + 16.44736842105263 * (c * x10 + s * x13 - x3);
  g(1) = x9 + 10.319917440660475 * (x4 - s * x10 + c * x13);
  // Generator-bus rows: the self susceptance (17.3610087...) and the line
  // susceptance to bus 2 (17.3610587..., as in the bus-2 rows) differ by the
  // bus shunt, so they are kept as separate terms.
  g(2) = s * x8 + c * x9 - 0.030140727054618 * (x10 - x11) - (17.361008783459972 * x13 - 17.361058783459974 * x14);
  g(3) = 0.030140727054618 * x10 - 1.395328440365198 * x11 + 1.36518771331058 * x12 + 17.361058783459974 * x13 -
         28.877104346599904 * x14 + 11.60409556313993 * x15;
  g(4) = 1.36518771331058 * (x11 - x12) + 11.60409556313993 * x14 - 11.516095563139931 * x15 - p * x12 / v2 -
         q * x15 / v2;
  g(5) = -(c * x8) + s * x9 + (17.361008783459972 * x10 - 17.361058783459974 * x11) -
         0.030140727054618 * (x13 - x14);
  g(6) = -17.361058783459974 * x10 + 28.877104346599904 * x11 - 11.60409556313993 * x12 + 0.030140727054618 * x13 -
         1.395328440365198 * x14 + 1.36518771331058 * x15;
  g(7) = -11.60409556313993 * x11 + 11.516095563139931 * x12 + 1.36518771331058 * (x14 - x15) + q * x12 / v2 -
         p * x15 / v2;
  return g;
}

// min_norm selects a minimum-norm step for (nearly) singular Jacobians.
template <typename ResidualFn>
GridState newton(GridState x, ResidualFn&& res, const NewtonOptions& opts, const char* what, bool min_norm = false) {
  GridState r = res(x);
  double norm = r.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < opts.max_iters && !(norm <= opts.tol); ++it) {
    Eigen::Matrix<double, kStates, kStates> jac;
    for (int j = 0; j < kStates; ++j) {
      const double h = 1.4901161193847656e-08 * (1.0 + std::abs(x(j)));
      GridState xp = x;
      xp(j) += h;
      jac.col(j) = (res(xp) - r) / h;
    }
    if (min_norm) {
      x -= jac.completeOrthogonalDecomposition().solve(r);
    } else {
      x -= jac.partialPivLu().solve(r);
    }
    r = res(x);
    norm = r.lpNorm<Eigen::Infinity>();
  }
  if (!(norm <= opts.tol)) {
    std::string iterate;
    for (int j = 0; j < kStates; ++j) iterate += (j ? ", " : "") + format_double(x(j));
    throw NumericalError(std::string(what) + ": Newton did not converge, residual " + format_double(norm) +
                         " at [" + iterate + "]");
  }
  return x;
}

}  // namespace

GridState residual(const GridState& x, const DiffState& prev_diff, double dt, double m, double p, double q) {
  GridState r;
  const DiffState f = differential_rhs(x);
  if (std::isinf(dt)) {
    r.head<kDifferential>() = f;
  } else {
    if (!(dt > 0)) throw std::invalid_argument("time step must be positive");
    r.head<kDifferential>() = x.head<kDifferential>() - prev_diff - dt * f;
    r(1) = (m / 23.64) * (x(1) - prev_diff(1)) - dt * f(1);
  }
  r.tail<8>() = algebraic_residual(x, p, q);
  return r;
}

GridState step(const GridState& prev, double dt, double m, double p, double q, const NewtonOptions& opts) {
  const DiffState prev_diff = prev.head<kDifferential>();
  return newton(prev, [&](const GridState& x) { return residual(x, prev_diff, dt, m, p, q); }, opts,
                "backward Euler step");
}

GridState refine_steady_state(const GridState& guess, double p, double q, const NewtonOptions& opts) {
  // A common rotation of the rotor angle and all bus-voltage phasors maps
  // steady states to steady states, so the Jacobian is singular along that
  // direction; the minimum-norm step leaves the phase reference alone.
  const DiffState unused = DiffState::Zero();
  return newton(guess, [&](const GridState& x) { return residual(x, unused, kSteadyDt, 1.0, p, q); }, opts,
                "steady state", true);
}

void LoadSeries::validate() const {
  if (p.size() != q.size()) throw std::invalid_argument("load series P and Q lengths differ");
  if (!(dt > 0)) throw std::invalid_argument("load series dt must be positive");
}

Index GridConfig::steps() const { return static_cast<Index>(std::llround(t_end / dt)); }

void GridConfig::validate() const {
  if (!(dt > 0) || !(t_end > 0)) throw std::invalid_argument("grid time step and horizon must be positive");
  if (!(window_start >= 0 && window_start < window_end && window_end <= t_end + 1e-12)) {
    throw std::invalid_argument("observation window must lie inside [0, t_end]");
  }
  if (!(p_scale >= 0) || !(q_scale >= 0)) throw std::invalid_argument("load scales must be nonnegative");
  if (variogram_lag < 0) throw std::invalid_argument("variogram lag must be nonnegative");
}

namespace {

GpSpec load_spec(double mean, double scale, const GridConfig& cfg) {
  GpSpec spec;
  spec.mean = mean;
  const double s2 = scale * scale;
  // A zero scale degenerates to a deterministic load; keep the factorization valid.
  spec.kernel = TemporalKernel{s2 > 0 ? s2 : 1.0, cfg.length2, cfg.floor, cfg.relative_nugget * (s2 > 0 ? s2 : 1.0)};
  return spec;
}

Matrix time_points(const GridConfig& cfg) {
  Matrix t(cfg.steps(), 1);
  for (Index k = 0; k < t.rows(); ++k) t(k, 0) = double(k + 1) * cfg.dt;
  return t;
}

}  // namespace

LoadProcess::LoadProcess(const GridConfig& cfg)
    : cfg_(cfg), p_(load_spec(cfg.p_mean, cfg.p_scale, cfg), time_points(cfg)),
      q_(load_spec(cfg.q_mean, cfg.q_scale, cfg), time_points(cfg)) {}

LoadSeries LoadProcess::draw(std::uint64_t seed, std::uint64_t index) const {
  LoadSeries s;
  s.dt = cfg_.dt;
  s.p = cfg_.p_scale > 0 ? p_.draw(seed, 2 * index) : Vector::Constant(cfg_.steps(), cfg_.p_mean);
  s.q = cfg_.q_scale > 0 ? q_.draw(seed, 2 * index + 1) : Vector::Constant(cfg_.steps(), cfg_.q_mean);
  return s;
}

LoadSeries LoadProcess::constant(double p, double q) const {
  LoadSeries s;
  s.dt = cfg_.dt;
  s.p = Vector::Constant(cfg_.steps(), p);
  s.q = Vector::Constant(cfg_.steps(), q);
  return s;
}

GridModel::GridModel(GridConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  x0_ = refine_steady_state(steady_state(), cfg_.p_mean, cfg_.q_mean, cfg_.newton);
}

std::pair<Index, Index> GridModel::window_steps() const {
  return {static_cast<Index>(std::llround(cfg_.window_start / cfg_.dt)),
          static_cast<Index>(std::llround(cfg_.window_end / cfg_.dt))};
}

Index GridModel::observable_size() const {
  const auto [a, b] = window_steps();
  return 2 * (b - a);
}

Trajectory GridModel::integrate(double m, const LoadSeries& loads) const {
  loads.validate();
  if (!(m > 0)) throw std::invalid_argument("inertia must be positive");
  const Index steps = loads.steps();
  Trajectory traj;
  traj.states.resize(steps + 1, kStates);
  traj.times.resize(steps + 1);
  GridState x = x0_;
  traj.states.row(0) = x.transpose();
  traj.times(0) = loads.t0;
  for (Index k = 1; k <= steps; ++k) {
    x = step(x, loads.dt, m, loads.p(k - 1), loads.q(k - 1), cfg_.newton);
    traj.states.row(k) = x.transpose();
    traj.times(k) = loads.t0 + double(k) * loads.dt;
  }
  return traj;
}

Vector GridModel::observe(const Trajectory& traj) const {
  const auto [a, b] = window_steps();
  if (b > traj.states.rows() - 1) throw std::invalid_argument("trajectory shorter than the observation window");
  const Index w = b - a;
  Vector d(2 * w);
  d.head(w) = traj.states.col(10).segment(a, w);
  d.tail(w) = traj.states.col(13).segment(a, w);
  return d;
}

Vector GridModel::simulate(double m, const LoadSeries& loads) const {
  const auto [a, b] = window_steps();
  if (b > loads.steps()) throw std::invalid_argument("load series shorter than the observation window");
  // Integrate only as far as the window requires.
  LoadSeries head = loads;
  head.p = loads.p.head(b);
  head.q = loads.q.head(b);
  return observe(integrate(m, head));
}

VariogramWeights GridModel::variogram_weights() const {
  const auto [a, b] = window_steps();
  const Index w = b - a;
  VariogramWeights out;
  out.p = 2.0;
  out.w = Matrix::Zero(2 * w, 2 * w);
  for (Index i = 0; i < w; ++i) {
    for (Index j = i + 1; j < w && j - i <= cfg_.variogram_lag; ++j) {
      out.w(i, j) = out.w(j, i) = 1.0;
      out.w(w + i, w + j) = out.w(w + j, w + i) = 1.0;
    }
    out.w(i, w + i) = out.w(w + i, i) = 1.0;
  }
  return out;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::vector<std::string> header{"t"};
  for (int j = 1; j <= kStates; ++j) header.push_back("x" + std::to_string(j));
  CsvWriter w(path, header);
  for (Index k = 0; k < traj.states.rows(); ++k) {
    std::vector<std::string> row{format_double(traj.times(k))};
    for (int j = 0; j < kStates; ++j) row.push_back(format_double(traj.states(k, j)));
    w.row(row);
  }
}

Ensemble simulate_ensemble(const GridModel& model, double m, const std::vector<LoadSeries>& scenarios) {
  if (scenarios.empty()) throw std::invalid_argument("need at least one scenario");
  Ensemble e(model.observable_size(), static_cast<Index>(scenarios.size()));
  for (std::size_t i = 0; i < scenarios.size(); ++i) e.col(static_cast<Index>(i)) = model.simulate(m, scenarios[i]);
  return e;
}

double grid_objective(const GridModel& model, double m, const Matrix& obs_batches,
                      const std::vector<LoadSeries>& scenarios, const ScoreSpec& spec) {
  return mean_score(spec, simulate_ensemble(model, m, scenarios), obs_batches);
}

InertiaEstimate estimate_inertia(const GridModel& model, const Matrix& obs_batches,
                                 const std::vector<LoadSeries>& scenarios, const ScoreSpec& spec, double lo, double hi,
                                 double start) {
  if (!(std::isfinite(lo) && std::isfinite(hi)) || !(lo < hi) || !(lo > 0)) {
    throw std::invalid_argument("infeasible inertia bounds");
  }
  ScalarSearchConfig cfg;
  cfg.scheme = FdScheme::forward;
  cfg.rel_step = 1e-3;
  cfg.x_tol = 1e-6;
  InertiaEstimate est;
  est.search = bounded_scalar_minimize(
      [&](double m) { return grid_objective(model, m, obs_batches, scenarios, spec); }, lo, hi, start, cfg);
  est.m = est.search.x;
  est.objective = est.search.value;
  return est;
}

}  // namespace scoreinv::powergrid
