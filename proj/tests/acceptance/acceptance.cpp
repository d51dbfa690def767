// Acceptance gate: one PASS/FAIL line per criterion. Tolerances are fixed here.

#include "scoreinv/elliptic.hpp"
#include "scoreinv/experiments.hpp"
#include "scoreinv/optimize.hpp"
#include "scoreinv/powergrid.hpp"
#include "scoreinv/scores.hpp"
#include "scoreinv/verify.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace scoreinv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s %d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), s);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string config_path(const std::string& name) { return std::string(SCOREINV_SOURCE_DIR) + "/configs/" + name; }

Matrix gaussian_draws(std::mt19937_64& rng, const Matrix& chol, const Vector& mean, Index count) {
  std::normal_distribution<double> d;
  Matrix out(mean.size(), count);
  for (Index k = 0; k < count; ++k) {
    Vector z(mean.size());
    for (auto& x : z) x = d(rng);
    out.col(k) = mean + chol * z;
  }
  return out;
}

// One-sided paired test that the alternative scores higher on average.
Outcome paired_test(const Vector& truth_scores, const Vector& alt_scores, const char* label) {
  constexpr double kLevel = 0.01;
  const Vector d = alt_scores - truth_scores;
  const double n = double(d.size());
  const double mean = d.mean();
  const double sd = std::sqrt((d.array() - mean).square().sum() / (n - 1));
  const double t = mean / (sd / std::sqrt(n));
  const double p = boost::math::cdf(boost::math::complement(boost::math::students_t(n - 1), t));
  const bool ok = truth_scores.mean() < alt_scores.mean() && p < kLevel;
  return {ok, fmt("%s mean %.4g vs %.4g, p=%.3g", label, truth_scores.mean(), alt_scores.mean(), p)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// First n from which the argmin equals the truth for every batch count up to `budget`; 0 if none.
int stabilization(const ScoreCurve& c, int truth, int budget) {
  int first = 0;
  for (int n = 1; n <= budget; ++n) {
    if (c.argmin(n) == truth) {
      if (first == 0) first = n;
    } else {
      first = 0;
    }
  }
  return first;
}

bool hits(const ScoreCurve& c, int truth, int budget) {
  for (int n = 1; n <= budget; ++n) {
    if (c.argmin(n) == truth) return true;
  }
  return false;
}

Outcome steady_state() {
  constexpr double kTol = 1e-6;
  const powergrid::GridState r = powergrid::residual(powergrid::steady_state(), powergrid::steady_state().head<7>(),
                                                     powergrid::kSteadyDt, 10.0, powergrid::kSteadyP,
                                                     powergrid::kSteadyQ);
  const double norm = r.lpNorm<Eigen::Infinity>();
  return {norm <= kTol, fmt("residual %.3g <= %.0e", norm, kTol)};
}

Outcome gradients() {
  constexpr double kTol = 1e-4;
  double worst = 0;
  bool ok = true;
  int count = 0;
  for (const auto& line : gradcheck()) {
    worst = std::max(worst, line.error);
    ok = ok && line.error <= std::min(kTol, line.tolerance);
    ++count;
  }
  return {ok, fmt("%d checks, worst relative error %.3g <= %.0e", count, worst, kTol)};
}

Outcome identities() {
  constexpr double kMachine = 1e-14;
  std::mt19937_64 rng(20);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> grid(-8192, 8192);
  std::uniform_int_distribution<int> shift(-64, 64);
  double crps_gap = 0, hybrid_gap = 0;
  bool shift_exact = true;
  for (int trial = 0; trial < 200; ++trial) {
    const Index ns = 1 + trial % 12;
    Matrix e1(1, ns);
    for (auto& x : e1.reshaped()) x = normal(rng);
    const Vector y1 = Vector::Constant(1, normal(rng));
    const double es = energy_score(e1, y1);
    const double crps = empirical_crps(Vector(e1.row(0).transpose()), y1(0));
    crps_gap = std::max(crps_gap, std::abs(es - crps) / std::max(1.0, std::abs(crps)));

    // Dyadic data and integer shifts keep every difference exact.
    const Index m = 2 + trial % 6;
    Matrix e(m, ns);
    Vector y(m);
    for (auto& x : e.reshaped()) x = grid(rng) / 1024.0;
    for (auto& x : y) x = grid(rng) / 1024.0;
    const VariogramWeights w = constant_variogram_weights(m);
    const double c = shift(rng);
    const double vs = variogram_score(e, y, w);
    shift_exact = shift_exact && vs == variogram_score(Matrix(e.array() + c), Vector(y.array() + c), w);

    for (auto& x : e.reshaped()) x = normal(rng);
    for (auto& x : y) x = normal(rng);
    const HybridCoeffs h{0.1 + 0.01 * trial, 0.9};
    const double lin = h.alpha * energy_score(e, y) + h.beta * variogram_score(e, y, w);
    hybrid_gap = std::max(hybrid_gap, std::abs(hybrid_score(e, y, w, h) - lin) / std::max(1.0, std::abs(lin)));
  }
  const bool ok = crps_gap <= kMachine && shift_exact && hybrid_gap <= kMachine;
  return {ok, fmt("ES-CRPS gap %.2g, VS shift %s, hybrid gap %.2g", crps_gap, shift_exact ? "exact" : "inexact",
                  hybrid_gap)};
}

Outcome propriety() {
  constexpr int kTrials = 2000;
  constexpr Index kMembers = 20;
  constexpr double kShift = 1.0;
  constexpr double kRho = 0.8;
  std::mt19937_64 rng(40);
  const Vector zero = Vector::Zero(3);
  const Matrix identity = Matrix::Identity(3, 3);
  Matrix corr = Matrix::Constant(3, 3, kRho);
  corr.diagonal().setOnes();
  const Matrix corr_chol = corr.llt().matrixL();
  const VariogramWeights w = constant_variogram_weights(3);

  Vector es_true(kTrials), es_alt(kTrials), vs_true(kTrials), vs_alt(kTrials);
  for (int t = 0; t < kTrials; ++t) {
    const Vector y = gaussian_draws(rng, identity, zero, 1).col(0);
    es_true(t) = energy_score(gaussian_draws(rng, identity, zero, kMembers), y);
    es_alt(t) = energy_score(gaussian_draws(rng, identity, Vector::Constant(3, kShift), kMembers), y);

    const Vector yc = gaussian_draws(rng, corr_chol, zero, 1).col(0);
    vs_true(t) = variogram_score(gaussian_draws(rng, corr_chol, zero, kMembers), yc, w);
    vs_alt(t) = variogram_score(gaussian_draws(rng, identity, zero, kMembers), yc, w);
  }
  const Outcome es = paired_test(es_true, es_alt, "ES");
  const Outcome vs = paired_test(vs_true, vs_alt, "VS");
  return {es.pass && vs.pass, es.detail + "; " + vs.detail};
}

struct GridSetup {
  GridExperiment cfg;
  powergrid::GridModel model;
  powergrid::LoadProcess process;
  std::vector<powergrid::LoadSeries> scenarios;

  explicit GridSetup(const GridExperiment& g)
      : cfg(g), model(g.grid), process(g.grid), scenarios(grid_scenarios(process, g.scenarios, g.seeds.scenarios)) {}
};

Outcome grid_convergence(const GridSetup& s) {
  constexpr int kScenarios = 100;
  constexpr int kVsBudget = 50;
  constexpr int kEsBudget = 200;
  if (s.cfg.scenarios != kScenarios) throw std::runtime_error("grid setup must use 100 scenarios");
  const std::vector<ScoreSpec> specs{grid_score_spec(s.model, ScoreKind::variogram, s.cfg.hybrid),
                                     grid_score_spec(s.model, ScoreKind::energy, s.cfg.hybrid)};
  bool ok = true;
  bool directional = false;
  std::string detail;
  for (std::size_t t = 0; t < s.cfg.truths.size(); ++t) {
    const int truth = static_cast<int>(s.cfg.truths[t]);
    const Matrix obs = grid_observations(s.model, s.process, truth, kEsBudget, s.cfg.seeds.observations + t);
    const auto curves = score_curves(s.model, s.scenarios, obs, specs, s.cfg.m_min, s.cfg.m_max);
    const bool vs_hit = hits(curves[0], truth, kVsBudget);
    const bool es_hit = hits(curves[1], truth, kEsBudget);
    const int vs_stable = stabilization(curves[0], truth, kVsBudget);
    const int es_stable = stabilization(curves[1], truth, kVsBudget);
    ok = ok && vs_hit && es_hit;
    if (vs_stable > 0 && (es_stable == 0 || vs_stable <= es_stable)) directional = true;
    auto from = [](int n) { return n > 0 ? std::to_string(n) : std::string("never"); };
    detail += fmt("m=%d: VS argmin(n=%d)=%d hit %s stable from %s, ES argmin(n=%d)=%d hit %s stable from %s; ", truth,
                  kVsBudget, curves[0].argmin(kVsBudget), vs_hit ? "yes" : "no", from(vs_stable).c_str(), kEsBudget,
                  curves[1].argmin(kEsBudget), es_hit ? "yes" : "no", from(es_stable).c_str());
  }
  detail += directional ? "VS stabilizes no later than ES" : "VS never stabilizes first";
  return {ok && directional, detail};
}

Outcome grid_estimation(const GridSetup& s) {
  constexpr double kTol = 0.5;
  constexpr int kBatches = 50;
  const ScoreSpec spec = grid_score_spec(s.model, ScoreKind::variogram, s.cfg.hybrid);
  bool ok = true;
  std::string detail = "VS";
  for (std::size_t t = 0; t < s.cfg.truths.size(); ++t) {
    const double truth = s.cfg.truths[t];
    const Matrix obs = grid_observations(s.model, s.process, truth, kBatches, s.cfg.seeds.observations + t);
    const double lo = truth - s.cfg.bound_halfwidth, hi = truth + s.cfg.bound_halfwidth;
    for (double start : {lo, hi}) {
      const double m = powergrid::estimate_inertia(s.model, obs, s.scenarios, spec, lo, hi, start).m;
      ok = ok && std::abs(m - truth) <= kTol;
      detail += fmt(" m=%g from %g -> %.3f;", truth, start, m);
    }
  }
  return {ok, detail + fmt(" tolerance %.1f", kTol)};
}

struct EllipticResults {
  std::vector<EllipticRun> runs;

  const EllipticRun& get(ScoreKind k, PriorKind p, int ns) const {
    for (const auto& r : runs) {
      if (r.score == k && r.prior == p && r.samples == ns) return r;
    }
    throw std::runtime_error("missing elliptic run");
  }
};

EllipticResults elliptic_runs() {
  EllipticExperiment e = load_config(config_path("elliptic_desk.json")).elliptic;
  e.mesh_cells = 32;
  e.samples = {4, 32};
  const EllipticSetup setup(e);
  EllipticResults out;
  for (ScoreKind k : {ScoreKind::energy, ScoreKind::variogram}) {
    for (PriorKind p : {PriorKind::standard, PriorKind::informed}) {
      for (int ns : e.samples) out.runs.push_back(solve_elliptic_case(setup, e, k, p, ns));
    }
  }
  return out;
}

Outcome elliptic_trend(const EllipticResults& r) {
  bool ok = true;
  std::string detail;
  for (int ns : {4, 32}) {
    const double es_inf = r.get(ScoreKind::energy, PriorKind::informed, ns).metrics.rmse;
    const double vs_inf = r.get(ScoreKind::variogram, PriorKind::informed, ns).metrics.rmse;
    const double es_std = r.get(ScoreKind::energy, PriorKind::standard, ns).metrics.rmse;
    const double vs_std = r.get(ScoreKind::variogram, PriorKind::standard, ns).metrics.rmse;
    ok = ok && vs_inf < es_inf && es_inf < es_std && vs_inf < vs_std;
    detail += fmt("Ns=%d RMSE VS-inf %.4f ES-inf %.4f VS-std %.4f ES-std %.4f; ", ns, vs_inf, es_inf, vs_std, es_std);
  }
  return {ok, detail + "need VS-inf < ES-inf and informed < standard"};
}

Outcome rank_calibration(const EllipticResults& r) {
  bool ok = true;
  std::string detail;
  for (int ns : {4, 32}) {
    const double es = r.get(ScoreKind::energy, PriorKind::standard, ns).ranks.chi_square();
    const double vs = r.get(ScoreKind::variogram, PriorKind::standard, ns).ranks.chi_square();
    ok = ok && es < vs;
    detail += fmt("Ns=%d chi2 ES %.3f VS %.3f; ", ns, es, vs);
  }
  return {ok, detail + "need ES < VS"};
}

Outcome solver_sanity() {
  constexpr double kQuadTol = 1e-8;
  constexpr int kQuadIters = 60;
  constexpr double kRosenTol = 1e-6;
  constexpr double kRate = 1.9;

  std::mt19937_64 rng(90);
  std::normal_distribution<double> normal;
  Matrix g(20, 20);
  for (auto& x : g.reshaped()) x = normal(rng);
  const Matrix a = g * g.transpose() + 20.0 * Matrix::Identity(20, 20);
  const Vector b = Vector::LinSpaced(20, -1, 1);
  LbfgsConfig qc;
  qc.grad_tol = 0;
  qc.abs_grad_tol = kQuadTol;
  qc.max_iters = kQuadIters;
  const LbfgsResult q = lbfgs_minimize(
      [&](const Vector& x) { return std::make_pair(0.5 * x.dot(a * x) - b.dot(x), Vector(a * x - b)); },
      Vector::Zero(20), qc);
  const double q_err = (q.x - a.ldlt().solve(b)).norm();
  const bool quad_ok = q.gradient.norm() <= kQuadTol && q_err <= 1e-7;

  auto rosen = [](const Vector& x) {
    Vector gr(2);
    gr << -400 * x(0) * (x(1) - x(0) * x(0)) - 2 * (1 - x(0)), 200 * (x(1) - x(0) * x(0));
    return std::make_pair(100 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1 - x(0), 2), gr);
  };
  Vector x0(2);
  x0 << -1.2, 1.0;
  LbfgsConfig rc;
  rc.grad_tol = 0;
  rc.abs_grad_tol = 1e-10;
  const LbfgsResult r = lbfgs_minimize(rosen, x0, rc);
  const double r_err = (r.x - Vector::Ones(2)).lpNorm<Eigen::Infinity>();

  const double pi = std::numbers::pi;
  std::vector<double> err;
  for (int n : {16, 32, 64}) {
    const Mesh mesh(n, n);
    const EllipticModel model(mesh, interior_lattice(5));
    Vector f(mesh.num_nodes()), exact(mesh.num_nodes());
    for (Index i = 0; i < mesh.num_nodes(); ++i) {
      const double x = mesh.node(i).x(), y = mesh.node(i).y();
      f(i) = 2 * pi * pi * std::cos(pi * x) * std::sin(pi * y);
      exact(i) = y + std::cos(pi * x) * std::sin(pi * y);
    }
    const Vector e = model.solve_forward(Vector::Zero(mesh.num_nodes()), f) - exact;
    err.push_back(std::sqrt(e.dot(assemble_mass(mesh) * e)));
  }
  const double rate1 = std::log2(err[0] / err[1]), rate2 = std::log2(err[1] / err[2]);
  const bool ok = quad_ok && r_err <= kRosenTol && rate1 >= kRate && rate2 >= kRate;
  return {ok, fmt("quadratic |g|=%.2g in %zu iterations; Rosenbrock error %.2g; L2 rates %.3f %.3f", q.gradient.norm(),
                  q.trace.records.size(), r_err, rate1, rate2)};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "scoreinv_acceptance";
  fs::remove_all(root);
  bool ok = true;
  int compared = 0;
  std::string mismatch;
  for (const std::string name : {"elliptic_smoke.json", "powergrid_smoke.json"}) {
    const ExperimentConfig cfg = load_config(config_path(name));
    const fs::path first = root / (name + ".first"), second = root / (name + ".second");
    auto run = [](const ExperimentConfig& c, const fs::path& dir) {
      const RunOptions opts{dir.string(), false};
      return c.experiment == "elliptic" ? run_elliptic(c, opts) : run_powergrid(c, opts);
    };
    if (run(cfg, first) != exit_ok) throw std::runtime_error(name + ": first run failed");
    if (run(load_config((first / "metadata.json").string()), second) != exit_ok) {
      throw std::runtime_error(name + ": rerun failed");
    }
    for (const auto& e : fs::directory_iterator(first)) {
      if (e.path().extension() != ".csv") continue;
      ++compared;
      if (slurp(e.path()) != slurp(second / e.path().filename())) {
        ok = false;
        mismatch += " " + e.path().filename().string();
      }
    }
  }
  fs::remove_all(root);
  return {ok && compared > 0, fmt("%d CSV files compared", compared) + (ok ? "" : ", differing:" + mismatch)};
}

}  // namespace

int main() {
  report(1, "steady-state transcription", steady_state);
  report(2, "gradient consistency", gradients);
  report(3, "score identities", identities);
  report(4, "propriety", propriety);

  std::unique_ptr<GridSetup> grid;
  try {
    GridExperiment g = load_config(config_path("powergrid_desk.json")).powergrid;
    grid = std::make_unique<GridSetup>(g);
  } catch (const std::exception& e) {
    std::printf("grid setup failed: %s\n", e.what());
  }
  report(5, "power-grid argmin convergence", [&] {
    if (!grid) throw std::runtime_error("no grid setup");
    return grid_convergence(*grid);
  });
  report(6, "bounded inertia estimation", [&] {
    if (!grid) throw std::runtime_error("no grid setup");
    return grid_estimation(*grid);
  });
  grid.reset();

  std::optional<EllipticResults> elliptic;
  report(7, "elliptic inversion trend", [&] {
    elliptic = elliptic_runs();
    return elliptic_trend(*elliptic);
  });
  report(8, "rank-histogram calibration", [&] {
    if (!elliptic) throw std::runtime_error("no elliptic runs");
    return rank_calibration(*elliptic);
  });
  report(9, "solver sanity", solver_sanity);
  report(10, "determinism", determinism);

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
