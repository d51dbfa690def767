#include "scoreinv/experiments.hpp"

#include "scoreinv/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

namespace scoreinv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads an object key by key and collects every problem instead of stopping
// at the first; keys never read are reported as unknown by finish().
class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) error("", "expected an object");
  }

  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::vector<std::string>& errors() { return errors_; }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const std::exception&) {
      error(key, "has the wrong type");
    }
  }

  void get_seed(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    seen_.insert(key);
    const json& v = j_.at(key);
    if (v.is_number_unsigned()) {
      out = v.get<std::uint64_t>();
    } else {
      error(key, "must be a nonnegative integer");
    }
  }

  const json* section(const std::string& key) {
    if (!has(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void error(const std::string& key, const std::string& what) {
    const std::string where = key.empty() ? (path_.empty() ? std::string("config") : path_) : child(key);
    errors_.push_back(where + ": " + what);
  }

  void finish() {
    if (!j_.is_object()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) errors_.push_back(child(it.key()) + ": unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

void read_scores(Reader& r, const std::string& key, std::vector<ScoreKind>& out) {
  if (!r.has(key)) return;
  std::vector<std::string> names;
  r.get(key, names);
  out.clear();
  for (const auto& n : names) {
    try {
      out.push_back(score_kind_from_string(n));
    } catch (const std::exception& e) {
      r.error(key, e.what());
    }
  }
}

json scores_json(const std::vector<ScoreKind>& kinds) {
  json a = json::array();
  for (auto k : kinds) a.push_back(to_string(k));
  return a;
}

void read_hybrid(Reader& parent, HybridCoeffs& h) {
  const json* s = parent.section("hybrid");
  if (!s) return;
  Reader r(*s, parent.child("hybrid"), parent.errors());
  r.get("alpha", h.alpha);
  r.get("beta", h.beta);
  r.finish();
}

json hybrid_json(const HybridCoeffs& h) { return {{"alpha", h.alpha}, {"beta", h.beta}}; }

void read_lbfgs(Reader& parent, LbfgsConfig& c) {
  const json* s = parent.section("lbfgs");
  if (!s) return;
  Reader r(*s, parent.child("lbfgs"), parent.errors());
  r.get("memory", c.memory);
  r.get("max_iters", c.max_iters);
  r.get("grad_tol", c.grad_tol);
  r.get("abs_grad_tol", c.abs_grad_tol);
  r.get("c1", c.c1);
  r.get("backtrack", c.backtrack);
  r.get("max_backtracks", c.max_backtracks);
  r.finish();
}

json lbfgs_json(const LbfgsConfig& c) {
  return {{"memory", c.memory},     {"max_iters", c.max_iters},          {"grad_tol", c.grad_tol},
          {"abs_grad_tol", c.abs_grad_tol}, {"c1", c.c1}, {"backtrack", c.backtrack},
          {"max_backtracks", c.max_backtracks}};
}

void read_prior(Reader& parent, PriorSpec& p) {
  const json* s = parent.section("prior");
  if (!s) return;
  Reader r(*s, parent.child("prior"), parent.errors());
  r.get("gamma", p.gamma);
  r.get("delta", p.delta);
  r.get("penalty", p.penalty);
  r.get("width_ratio", p.width_ratio);
  if (r.has("theta")) {
    std::vector<std::vector<double>> t;
    r.get("theta", t);
    if (t.size() == 2 && t[0].size() == 2 && t[1].size() == 2) {
      p.theta << t[0][0], t[0][1], t[1][0], t[1][1];
    } else {
      r.error("theta", "must be a 2 x 2 array");
    }
  }
  if (r.has("mollifier_points")) {
    std::vector<std::vector<double>> pts;
    r.get("mollifier_points", pts);
    p.mollifier_points.resize(static_cast<Index>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (pts[i].size() != 2) {
        r.error("mollifier_points", "every point needs two coordinates");
        break;
      }
      p.mollifier_points(static_cast<Index>(i), 0) = pts[i][0];
      p.mollifier_points(static_cast<Index>(i), 1) = pts[i][1];
    }
  }
  r.finish();
}

json prior_json(const PriorSpec& p) {
  json pts = json::array();
  for (Index i = 0; i < p.mollifier_points.rows(); ++i) {
    pts.push_back({p.mollifier_points(i, 0), p.mollifier_points(i, 1)});
  }
  return {{"gamma", p.gamma},
          {"delta", p.delta},
          {"penalty", p.penalty},
          {"width_ratio", p.width_ratio},
          {"theta", {{p.theta(0, 0), p.theta(0, 1)}, {p.theta(1, 0), p.theta(1, 1)}}},
          {"mollifier_points", pts}};
}

void read_forcing(Reader& parent, SpatialKernel& k) {
  const json* s = parent.section("forcing");
  if (!s) return;
  Reader r(*s, parent.child("forcing"), parent.errors());
  r.get("sigma", k.sigma);
  r.get("length_x", k.length_x);
  r.get("length_y", k.length_y);
  r.get("nugget", k.nugget);
  r.finish();
}

json forcing_json(const SpatialKernel& k) {
  return {{"sigma", k.sigma}, {"length_x", k.length_x}, {"length_y", k.length_y}, {"nugget", k.nugget}};
}

void read_elliptic(Reader& parent, EllipticExperiment& e) {
  const json* s = parent.section("elliptic");
  if (!s) return;
  Reader r(*s, parent.child("elliptic"), parent.errors());
  r.get("mesh_cells", e.mesh_cells);
  r.get("observation_lattice", e.observation_lattice);
  read_scores(r, "scores", e.scores);
  if (r.has("priors")) {
    std::vector<std::string> names;
    r.get("priors", names);
    e.priors.clear();
    for (const auto& n : names) {
      try {
        e.priors.push_back(prior_kind_from_string(n));
      } catch (const std::exception& ex) {
        r.error("priors", ex.what());
      }
    }
  }
  r.get("samples", e.samples);
  r.get("noise_sigma", e.noise_sigma);
  r.get("score_weight", e.score_weight);
  read_hybrid(r, e.hybrid);
  r.get("variogram_weights", e.variogram_weights);
  read_prior(r, e.prior);
  read_forcing(r, e.forcing);
  read_lbfgs(r, e.lbfgs);
  if (const json* sd = r.section("seeds")) {
    Reader rs(*sd, r.child("seeds"), r.errors());
    rs.get_seed("truth", e.seeds.truth);
    rs.get_seed("truth_forcing", e.seeds.truth_forcing);
    rs.get_seed("noise", e.seeds.noise);
    rs.get_seed("scenarios", e.seeds.scenarios);
    rs.get_seed("ranks", e.seeds.ranks);
    rs.finish();
  }
  r.finish();
}

json elliptic_seeds_json(const EllipticSeeds& s) {
  return {{"truth", s.truth},
          {"truth_forcing", s.truth_forcing},
          {"noise", s.noise},
          {"scenarios", s.scenarios},
          {"ranks", s.ranks}};
}

json elliptic_json(const EllipticExperiment& e) {
  json priors = json::array();
  for (auto p : e.priors) priors.push_back(to_string(p));
  return {{"mesh_cells", e.mesh_cells},
          {"observation_lattice", e.observation_lattice},
          {"scores", scores_json(e.scores)},
          {"priors", priors},
          {"samples", e.samples},
          {"noise_sigma", e.noise_sigma},
          {"score_weight", e.score_weight},
          {"hybrid", hybrid_json(e.hybrid)},
          {"variogram_weights", e.variogram_weights},
          {"prior", prior_json(e.prior)},
          {"forcing", forcing_json(e.forcing)},
          {"lbfgs", lbfgs_json(e.lbfgs)},
          {"seeds", elliptic_seeds_json(e.seeds)}};
}

void read_grid_config(Reader& parent, powergrid::GridConfig& g) {
  const json* s = parent.section("grid");
  if (!s) return;
  Reader r(*s, parent.child("grid"), parent.errors());
  r.get("t_end", g.t_end);
  r.get("dt", g.dt);
  r.get("window_start", g.window_start);
  r.get("window_end", g.window_end);
  r.get("p_mean", g.p_mean);
  r.get("q_mean", g.q_mean);
  r.get("p_scale", g.p_scale);
  r.get("q_scale", g.q_scale);
  r.get("length2", g.length2);
  r.get("floor", g.floor);
  r.get("relative_nugget", g.relative_nugget);
  r.get("variogram_lag", g.variogram_lag);
  r.get("newton_tol", g.newton.tol);
  r.get("newton_max_iters", g.newton.max_iters);
  r.finish();
}

json grid_config_json(const powergrid::GridConfig& g) {
  return {{"t_end", g.t_end},
          {"dt", g.dt},
          {"window_start", g.window_start},
          {"window_end", g.window_end},
          {"p_mean", g.p_mean},
          {"q_mean", g.q_mean},
          {"p_scale", g.p_scale},
          {"q_scale", g.q_scale},
          {"length2", g.length2},
          {"floor", g.floor},
          {"relative_nugget", g.relative_nugget},
          {"variogram_lag", g.variogram_lag},
          {"newton_tol", g.newton.tol},
          {"newton_max_iters", g.newton.max_iters}};
}

void read_powergrid(Reader& parent, GridExperiment& e) {
  const json* s = parent.section("powergrid");
  if (!s) return;
  Reader r(*s, parent.child("powergrid"), parent.errors());
  read_grid_config(r, e.grid);
  r.get("scenarios", e.scenarios);
  r.get("batches", e.batches);
  r.get("m_min", e.m_min);
  r.get("m_max", e.m_max);
  r.get("truths", e.truths);
  r.get("bound_halfwidth", e.bound_halfwidth);
  read_scores(r, "scores", e.scores);
  r.get("estimate", e.estimate);
  r.get("dump_trajectory", e.dump_trajectory);
  read_hybrid(r, e.hybrid);
  if (const json* sd = r.section("seeds")) {
    Reader rs(*sd, r.child("seeds"), r.errors());
    rs.get_seed("scenarios", e.seeds.scenarios);
    rs.get_seed("observations", e.seeds.observations);
    rs.finish();
  }
  r.finish();
}

json grid_seeds_json(const GridSeeds& s) { return {{"scenarios", s.scenarios}, {"observations", s.observations}}; }

json powergrid_json(const GridExperiment& e) {
  return {{"grid", grid_config_json(e.grid)},
          {"scenarios", e.scenarios},
          {"batches", e.batches},
          {"m_min", e.m_min},
          {"m_max", e.m_max},
          {"truths", e.truths},
          {"bound_halfwidth", e.bound_halfwidth},
          {"scores", scores_json(e.scores)},
          {"estimate", e.estimate},
          {"dump_trajectory", e.dump_trajectory},
          {"hybrid", hybrid_json(e.hybrid)},
          {"seeds", grid_seeds_json(e.seeds)}};
}

void read_score_eval(Reader& parent, ScoreEvalConfig& c) {
  const json* s = parent.section("score_eval");
  if (!s) return;
  Reader r(*s, parent.child("score_eval"), parent.errors());
  r.get("ensemble", c.ensemble);
  r.get("observation", c.observation);
  if (r.has("kind")) {
    std::string k;
    r.get("kind", k);
    try {
      c.kind = score_kind_from_string(k);
    } catch (const std::exception& e) {
      r.error("kind", e.what());
    }
  }
  r.get("variogram_p", c.variogram_p);
  r.get("weights", c.weights);
  read_hybrid(r, c.hybrid);
  r.finish();
}

json score_eval_json(const ScoreEvalConfig& c) {
  return {{"ensemble", c.ensemble},       {"observation", c.observation}, {"kind", to_string(c.kind)},
          {"variogram_p", c.variogram_p}, {"weights", c.weights},         {"hybrid", hybrid_json(c.hybrid)}};
}

void check_hybrid(const HybridCoeffs& h, const std::string& where, std::vector<std::string>& errors) {
  if (!(h.alpha >= 0) || !(h.beta >= 0) || !(h.alpha + h.beta > 0)) {
    errors.push_back(where + ".hybrid: coefficients must be nonnegative and not both zero");
  }
}

void validate(const ExperimentConfig& cfg, std::vector<std::string>& errors) {
  auto check = [&](auto&& fn, const std::string& where) {
    try {
      fn();
    } catch (const std::exception& e) {
      errors.push_back(where + ": " + e.what());
    }
  };
  if (cfg.experiment == "elliptic") {
    const auto& e = cfg.elliptic;
    if (e.mesh_cells < 1) errors.push_back("elliptic.mesh_cells: must be at least 1");
    if (e.observation_lattice < 1) errors.push_back("elliptic.observation_lattice: must be at least 1");
    if (e.scores.empty()) errors.push_back("elliptic.scores: at least one score is required");
    if (e.priors.empty()) errors.push_back("elliptic.priors: at least one prior is required");
    if (e.samples.empty()) errors.push_back("elliptic.samples: at least one sample count is required");
    for (int ns : e.samples) {
      if (ns < 1) errors.push_back("elliptic.samples: every Ns must be at least 1");
    }
    if (!(e.noise_sigma >= 0)) errors.push_back("elliptic.noise_sigma: must be nonnegative");
    if (!(e.score_weight >= 0)) errors.push_back("elliptic.score_weight: must be nonnegative");
    if (e.variogram_weights != "constant" && e.variogram_weights != "inverse_distance") {
      errors.push_back("elliptic.variogram_weights: must be \"constant\" or \"inverse_distance\"");
    }
    for (auto k : e.scores) {
      if (k == ScoreKind::crps) errors.push_back("elliptic.scores: crps is scalar-only; use es, vs or hs");
    }
    check_hybrid(e.hybrid, "elliptic", errors);
    check([&] { e.prior.validate(); }, "elliptic.prior");
    check([&] { e.lbfgs.validate(); }, "elliptic.lbfgs");
    check(
        [&] {
          GpSpec g;
          g.kernel = e.forcing;
          g.validate();
        },
        "elliptic.forcing");
  } else if (cfg.experiment == "powergrid") {
    const auto& g = cfg.powergrid;
    check([&] { g.grid.validate(); }, "powergrid.grid");
    if (g.scenarios < 1) errors.push_back("powergrid.scenarios: must be at least 1");
    if (g.batches < 1) errors.push_back("powergrid.batches: must be at least 1");
    if (!(g.m_min >= 1 && g.m_min <= g.m_max)) errors.push_back("powergrid.m_min/m_max: need 1 <= m_min <= m_max");
    if (g.truths.empty()) errors.push_back("powergrid.truths: at least one truth is required");
    for (double t : g.truths) {
      if (!(t > 0)) errors.push_back("powergrid.truths: inertia values must be positive");
      if (g.estimate && !(t - g.bound_halfwidth > 0)) {
        errors.push_back("powergrid.bound_halfwidth: lower bound must stay positive for every truth");
      }
    }
    if (!(g.bound_halfwidth > 0)) errors.push_back("powergrid.bound_halfwidth: must be positive");
    if (g.scores.empty()) errors.push_back("powergrid.scores: at least one score is required");
    for (auto k : g.scores) {
      if (k == ScoreKind::crps) errors.push_back("powergrid.scores: crps is scalar-only; use es, vs or hs");
    }
    check_hybrid(g.hybrid, "powergrid", errors);
  } else if (cfg.experiment == "score-eval") {
    const auto& s = cfg.score_eval;
    if (s.ensemble.empty()) errors.push_back("score_eval.ensemble: path is required");
    if (s.observation.empty()) errors.push_back("score_eval.observation: path is required");
    if (!(s.variogram_p > 0)) errors.push_back("score_eval.variogram_p: must be positive");
    check_hybrid(s.hybrid, "score_eval", errors);
  } else {
    errors.push_back("experiment: must be \"elliptic\", \"powergrid\" or \"score-eval\"");
  }
}

std::string join_errors(const std::vector<std::string>& errors) {
  std::string msg = "invalid configuration:";
  for (const auto& e : errors) msg += "\n  " + e;
  return msg;
}

}  // namespace

ExperimentConfig parse_config(const json& input) {
  const json* doc = &input;
  // Run metadata embeds the full configuration under "config".
  if (input.is_object() && input.contains("config") && input.contains("version")) doc = &input.at("config");
  std::vector<std::string> errors;
  ExperimentConfig cfg;
  Reader r(*doc, "", errors);
  if (!r.has("experiment")) {
    errors.push_back("experiment: missing");
  } else {
    r.get("experiment", cfg.experiment);
  }
  read_elliptic(r, cfg.elliptic);
  read_powergrid(r, cfg.powergrid);
  read_score_eval(r, cfg.score_eval);
  r.finish();
  if (errors.empty()) validate(cfg, errors);
  if (!errors.empty()) throw ConfigError(join_errors(errors));
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& cfg) {
  json j = {{"experiment", cfg.experiment}};
  if (cfg.experiment == "elliptic") j["elliptic"] = elliptic_json(cfg.elliptic);
  if (cfg.experiment == "powergrid") j["powergrid"] = powergrid_json(cfg.powergrid);
  if (cfg.experiment == "score-eval") j["score_eval"] = score_eval_json(cfg.score_eval);
  return j;
}

void override_seeds(ExperimentConfig& cfg, std::uint64_t base) {
  if (cfg.experiment == "elliptic") {
    auto& s = cfg.elliptic.seeds;
    s.truth = base;
    s.truth_forcing = base + 1;
    s.noise = base + 2;
    s.scenarios = base + 3;
    s.ranks = base + 4;
  } else if (cfg.experiment == "powergrid") {
    // Observation streams use seed + truth index, so keep them clear of the scenario seed.
    cfg.powergrid.seeds.scenarios = base;
    cfg.powergrid.seeds.observations = base + 1;
  }
}

void prepare_output_dir(const std::string& dir, bool force) {
  if (dir.empty()) throw ConfigError("an output directory is required (--out)");
  const fs::path p(dir);
  if (fs::exists(p)) {
    if (!force) throw ConfigError("output directory '" + dir + "' exists; pass --force to overwrite");
    fs::remove_all(p);
  }
  fs::create_directories(p);
}

// ---- elliptic ---------------------------------------------------------------

std::string model_label(ScoreKind score, PriorKind prior) {
  std::string s = score == ScoreKind::energy      ? "ES"
                  : score == ScoreKind::variogram ? "VS"
                  : score == ScoreKind::hybrid    ? "HS"
                                                  : "CRPS";
  return s + "-" + to_string(prior);
}

namespace {

PriorSpec prior_of_kind(const PriorSpec& base, PriorKind kind) {
  PriorSpec s = base;
  s.kind = kind;
  return s;
}

VariogramWeights elliptic_weights(const EllipticExperiment& cfg, const ObservationOperator& obs) {
  if (cfg.variogram_weights == "inverse_distance") {
    return inverse_distance_variogram_weights(obs.points().transpose(), 2.0);
  }
  return constant_variogram_weights(obs.size(), 2.0);
}

}  // namespace

EllipticSetup::EllipticSetup(const EllipticExperiment& cfg)
    : mesh(cfg.mesh_cells, cfg.mesh_cells), model(mesh, interior_lattice(cfg.observation_lattice)) {
  const Prior truth_prior(mesh, prior_of_kind(cfg.prior, PriorKind::standard));
  m_true = truth_prior.sample(cfg.seeds.truth, 0);
  GpSpec gp_spec;
  gp_spec.kernel = cfg.forcing;
  const GaussianProcess gp(gp_spec, mesh.node_coordinates());
  truth_forcing = gp.draw(cfg.seeds.truth_forcing, 0);
  const int max_ns = *std::max_element(cfg.samples.begin(), cfg.samples.end());
  scenarios = sample(gp, max_ns, cfg.seeds.scenarios).samples;
  d_obs = make_observations(model, m_true, truth_forcing, cfg.noise_sigma, cfg.seeds.noise);
  variogram = elliptic_weights(cfg, model.observation());
}

EllipticRun solve_elliptic_case(const EllipticSetup& setup, const EllipticExperiment& cfg, ScoreKind score,
                                PriorKind prior_kind, int samples) {
  if (samples < 1 || samples > setup.scenarios.rows()) throw std::invalid_argument("sample count out of range");
  const Prior prior(setup.mesh, prior_of_kind(cfg.prior, prior_kind), &setup.m_true);
  ScoreSpec spec;
  spec.kind = score;
  spec.variogram = setup.variogram;
  spec.hybrid = cfg.hybrid;
  const InverseProblem problem(setup.model, setup.scenarios.topRows(samples), setup.d_obs, spec, prior,
                               cfg.score_weight);
  LbfgsConfig lb = cfg.lbfgs;
  if (lb.norm_weights.size() == 0) lb.norm_weights = setup.model.lumped().cwiseInverse();

  EllipticRun run;
  run.score = score;
  run.prior = prior_kind;
  run.samples = samples;
  run.result = lbfgs_minimize(
      [&](const Vector& m) {
        ObjectiveValue v = problem.evaluate(m);
        return std::make_pair(v.value, std::move(v.gradient));
      },
      prior.mean(), lb);
  run.predictions = problem.predict(run.result.x);
  run.metrics.model = model_label(score, prior_kind);
  run.metrics.samples = samples;
  run.metrics.rmse = rmse(run.result.x, setup.m_true);
  run.metrics.ssim = ssim(run.result.x, setup.m_true);
  run.ranks = rank_histogram({run.predictions}, {setup.d_obs}, cfg.seeds.ranks);
  return run;
}

// ---- power grid ---------------------------------------------------------------

Matrix grid_observations(const powergrid::GridModel& model, const powergrid::LoadProcess& process, double truth,
                         int batches, std::uint64_t seed) {
  Matrix obs(batches, model.observable_size());
  for (int b = 0; b < batches; ++b) obs.row(b) = model.simulate(truth, process.draw(seed, b)).transpose();
  return obs;
}

std::vector<powergrid::LoadSeries> grid_scenarios(const powergrid::LoadProcess& process, int count,
                                                  std::uint64_t seed) {
  std::vector<powergrid::LoadSeries> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(process.draw(seed, i));
  return out;
}

Vector ScoreCurve::mean(Index n) const {
  if (n < 1 || n > batch.cols()) throw std::invalid_argument("batch count out of range");
  Vector out(batch.rows());
  for (Index r = 0; r < batch.rows(); ++r) {
    double acc = 0;
    for (Index b = 0; b < n; ++b) acc += batch(r, b);
    out(r) = acc / double(n);
  }
  return out;
}

int ScoreCurve::argmin(Index n) const {
  const Vector s = mean(n);
  Index best = 0;
  for (Index r = 1; r < s.size(); ++r) {
    if (s(r) < s(best)) best = r;
  }
  return m[static_cast<std::size_t>(best)];
}

ScoreSpec grid_score_spec(const powergrid::GridModel& model, ScoreKind kind, const HybridCoeffs& hybrid) {
  ScoreSpec spec;
  spec.kind = kind;
  spec.hybrid = hybrid;
  if (kind == ScoreKind::variogram || kind == ScoreKind::hybrid) spec.variogram = model.variogram_weights();
  return spec;
}

std::vector<ScoreCurve> score_curves(const powergrid::GridModel& model,
                                     const std::vector<powergrid::LoadSeries>& scenarios, const Matrix& obs_batches,
                                     const std::vector<ScoreSpec>& specs, int m_min, int m_max) {
  std::vector<ScoreCurve> curves(specs.size());
  for (auto& c : curves) {
    for (int m = m_min; m <= m_max; ++m) c.m.push_back(m);
    c.batch.resize(m_max - m_min + 1, obs_batches.rows());
  }
  for (int m = m_min; m <= m_max; ++m) {
    const Ensemble ens = powergrid::simulate_ensemble(model, double(m), scenarios);
    for (std::size_t k = 0; k < specs.size(); ++k) {
      curves[k].batch.row(m - m_min) = batch_scores(specs[k], ens, obs_batches).transpose();
    }
  }
  return curves;
}

// ---- runners ------------------------------------------------------------------

namespace {

json metadata_base(const ExperimentConfig& cfg) {
  return {{"version", SCOREINV_VERSION}, {"experiment", cfg.experiment}, {"config", config_to_json(cfg)}};
}

void write_json(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::string run_stem(const EllipticRun& r) {
  std::string label = r.metrics.model;
  std::transform(label.begin(), label.end(), label.begin(), [](unsigned char c) { return std::tolower(c); });
  return label + "_ns" + std::to_string(r.samples);
}

}  // namespace

int run_elliptic(const ExperimentConfig& cfg, const RunOptions& opts) {
  const EllipticExperiment& e = cfg.elliptic;
  prepare_output_dir(opts.out_dir, opts.force);
  const fs::path out(opts.out_dir);
  json meta = metadata_base(cfg);
  meta["seeds"] = elliptic_seeds_json(e.seeds);
  meta["noise_variance"] = e.noise_sigma * e.noise_sigma;
  meta["hybrid"] = hybrid_json(e.hybrid);

  const EllipticSetup setup(e);
  write_field_csv((out / "m_true.csv").string(), setup.mesh, setup.m_true);
  write_field_csv((out / "truth_forcing.csv").string(), setup.mesh, setup.truth_forcing);
  {
    CsvWriter w((out / "observations.csv").string(), {"x", "y", "d_obs"});
    const Matrix& pts = setup.model.observation().points();
    for (Index i = 0; i < pts.rows(); ++i) {
      w.row({format_double(pts(i, 0)), format_double(pts(i, 1)), format_double(setup.d_obs(i))});
    }
  }
  {
    SampleBatch batch;
    batch.samples = setup.scenarios;
    batch.seed = e.seeds.scenarios;
    batch.points = setup.mesh.node_coordinates();
    batch.spec.kernel = e.forcing;
    save_sample_batch(batch, (out / "scenarios").string());
  }

  std::vector<MetricsRow> metrics;
  CsvWriter runs((out / "runs.csv").string(), {"model", "samples", "status", "iterations", "evaluations", "objective",
                                              "grad_norm", "rmse", "ssim", "chi_square"});
  CsvWriter ranks((out / "rank_histograms.csv").string(), {"model", "samples", "bin", "count", "ci_low", "ci_high"});
  json run_meta = json::array();
  bool failed = false;
  for (auto prior : e.priors) {
    for (auto score : e.scores) {
      for (int ns : e.samples) {
        const std::string label = model_label(score, prior);
        try {
          const EllipticRun r = solve_elliptic_case(setup, e, score, prior, ns);
          const std::string stem = run_stem(r);
          write_field_csv((out / ("map_" + stem + ".csv")).string(), setup.mesh, r.result.x);
          write_trace_csv((out / ("trace_" + stem + ".csv")).string(), r.result.trace);
          metrics.push_back(r.metrics);
          const auto& rec = r.result.trace.records;
          const double gnorm = rec.empty() ? 0.0 : rec.back().grad_norm;
          runs.row({label, std::to_string(ns), to_string(r.result.trace.status),
                    std::to_string(rec.empty() ? 0 : rec.back().iter), std::to_string(r.result.trace.evaluations),
                    format_double(r.result.value), format_double(gnorm), format_double(r.metrics.rmse),
                    format_double(r.metrics.ssim.ssim), format_double(r.ranks.chi_square())});
          for (std::size_t b = 0; b < r.ranks.counts.size(); ++b) {
            ranks.row({label, std::to_string(ns), std::to_string(b), std::to_string(r.ranks.counts[b]),
                       format_double(r.ranks.ci_low[b]), format_double(r.ranks.ci_high[b])});
          }
          run_meta.push_back({{"model", label},
                              {"samples", ns},
                              {"status", to_string(r.result.trace.status)},
                              {"memory_used", r.result.trace.memory_used}});
        } catch (const NumericalError& ex) {
          failed = true;
          runs.row({label, std::to_string(ns), "error", "", "", "", "", "", "", ""});
          run_meta.push_back({{"model", label}, {"samples", ns}, {"status", "error"}, {"message", ex.what()}});
        }
      }
    }
  }
  write_metrics_csv((out / "metrics.csv").string(), metrics);
  meta["runs"] = run_meta;
  meta["status"] = failed ? "solver_failure" : "ok";
  write_json((out / "metadata.json").string(), meta);
  return failed ? exit_solver_failure : exit_ok;
}

int run_powergrid(const ExperimentConfig& cfg, const RunOptions& opts) {
  const GridExperiment& g = cfg.powergrid;
  prepare_output_dir(opts.out_dir, opts.force);
  const fs::path out(opts.out_dir);
  json meta = metadata_base(cfg);
  meta["seeds"] = grid_seeds_json(g.seeds);
  meta["hybrid"] = hybrid_json(g.hybrid);
  meta["observable_size"] = nullptr;

  bool failed = false;
  json run_meta = json::array();
  try {
    const powergrid::GridModel model(g.grid);
    const powergrid::LoadProcess process(g.grid);
    meta["observable_size"] = model.observable_size();
    const auto scenarios = grid_scenarios(process, g.scenarios, g.seeds.scenarios);
    std::vector<ScoreSpec> specs;
    for (auto k : g.scores) specs.push_back(grid_score_spec(model, k, g.hybrid));

    CsvWriter curve_csv((out / "score_curve.csv").string(), {"truth", "score", "m", "n", "score_value"});
    CsvWriter argmin_csv((out / "argmin.csv").string(), {"truth", "score", "n", "argmin"});
    CsvWriter trace_csv((out / "estimation_trace.csv").string(),
                        {"truth", "score", "start", "eval", "m", "objective", "accepted"});
    CsvWriter est_csv((out / "estimates.csv").string(),
                      {"truth", "score", "start", "estimate", "objective", "evaluations"});
    for (std::size_t t = 0; t < g.truths.size(); ++t) {
      const double truth = g.truths[t];
      const Matrix obs = grid_observations(model, process, truth, g.batches, g.seeds.observations + t);
      if (g.dump_trajectory) {
        powergrid::write_trajectory_csv((out / ("trajectory_truth" + format_double(truth) + ".csv")).string(),
                                        model.integrate(truth, process.draw(g.seeds.observations + t, 0)));
      }
      const auto curves = score_curves(model, scenarios, obs, specs, g.m_min, g.m_max);
      for (std::size_t k = 0; k < specs.size(); ++k) {
        const std::string name = to_string(g.scores[k]);
        for (Index n = 1; n <= obs.rows(); ++n) {
          const Vector s = curves[k].mean(n);
          for (Index r = 0; r < s.size(); ++r) {
            curve_csv.row({format_double(truth), name, std::to_string(curves[k].m[r]), std::to_string(n),
                           format_double(s(r))});
          }
          argmin_csv.row({format_double(truth), name, std::to_string(n), std::to_string(curves[k].argmin(n))});
        }
      }
      if (!g.estimate) continue;
      const double lo = truth - g.bound_halfwidth;
      const double hi = truth + g.bound_halfwidth;
      for (std::size_t k = 0; k < specs.size(); ++k) {
        const std::string name = to_string(g.scores[k]);
        for (double start : {lo, hi}) {
          const auto est = powergrid::estimate_inertia(model, obs, scenarios, specs[k], lo, hi, start);
          for (const auto& ev : est.search.trace) {
            trace_csv.row({format_double(truth), name, format_double(start), std::to_string(ev.index),
                           format_double(ev.x), format_double(ev.value), ev.accepted ? "1" : "0"});
          }
          est_csv.row({format_double(truth), name, format_double(start), format_double(est.m),
                       format_double(est.objective), std::to_string(est.search.trace.size())});
          run_meta.push_back({{"truth", truth}, {"score", name}, {"start", start}, {"estimate", est.m}});
        }
      }
    }
  } catch (const NumericalError& ex) {
    failed = true;
    meta["error"] = ex.what();
  }
  meta["estimates"] = run_meta;
  meta["status"] = failed ? "solver_failure" : "ok";
  write_json((out / "metadata.json").string(), meta);
  return failed ? exit_solver_failure : exit_ok;
}

ScoreEvalResult score_eval(const ScoreEvalConfig& cfg) {
  const Matrix ens = read_matrix_csv(cfg.ensemble);
  const Matrix obs_raw = read_matrix_csv(cfg.observation);
  Vector obs;
  if (obs_raw.cols() == 1) {
    obs = obs_raw.col(0);
  } else if (obs_raw.rows() == 1) {
    obs = obs_raw.row(0).transpose();
  } else {
    throw std::invalid_argument(cfg.observation + ": observation must be a single row or column");
  }
  if (ens.rows() != obs.size()) {
    throw std::invalid_argument("ensemble has " + std::to_string(ens.rows()) + " rows but the observation has " +
                                std::to_string(obs.size()) + " entries");
  }
  ScoreSpec spec;
  spec.kind = cfg.kind;
  spec.hybrid = cfg.hybrid;
  if (cfg.kind == ScoreKind::variogram || cfg.kind == ScoreKind::hybrid) {
    if (cfg.weights.empty()) {
      spec.variogram = constant_variogram_weights(obs.size(), cfg.variogram_p);
    } else {
      spec.variogram.w = read_matrix_csv(cfg.weights);
      spec.variogram.p = cfg.variogram_p;
    }
  }
  if (cfg.kind == ScoreKind::crps && obs.size() != 1) {
    throw std::invalid_argument("crps needs a single observed value (M = 1)");
  }
  ScoreEvalResult res;
  res.value = cfg.kind == ScoreKind::crps ? empirical_crps(ens.row(0).transpose(), obs(0)) : score(spec, ens, obs);
  res.record = {{"version", SCOREINV_VERSION},
                {"experiment", "score-eval"},
                {"config", {{"experiment", "score-eval"}, {"score_eval", score_eval_json(cfg)}}},
                {"observables", obs.size()},
                {"samples", ens.cols()},
                {"score", res.value}};
  return res;
}

// ---- finite-difference checks --------------------------------------------------

namespace {

double rel_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-12});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

Matrix fd_matrix(const std::function<double(const Matrix&)>& f, const Matrix& x) {
  Matrix g(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double h = 1e-6 * (1.0 + std::abs(x(i, j)));
      Matrix xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      g(i, j) = (f(xp) - f(xm)) / (2 * h);
    }
  }
  return g;
}

}  // namespace

std::vector<GradcheckLine> gradcheck(std::uint64_t seed) {
  std::vector<GradcheckLine> lines;
  std::mt19937_64 rng = random_stream(seed, 0);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> size(1, 8);

  // Score gradients on random ensembles.
  for (ScoreKind kind : {ScoreKind::energy, ScoreKind::variogram, ScoreKind::hybrid}) {
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const Index m = kind == ScoreKind::energy ? size(rng) : std::max(2, size(rng));
      const Index ns = size(rng);
      Matrix ens(m, ns);
      Vector obs(m);
      for (Index i = 0; i < ens.size(); ++i) ens.data()[i] = normal(rng);
      for (Index i = 0; i < m; ++i) obs(i) = normal(rng);
      ScoreSpec spec;
      spec.kind = kind;
      spec.variogram = constant_variogram_weights(m);
      const Matrix g = score_grad(spec, ens, obs).d;
      const Matrix fd = fd_matrix([&](const Matrix& e) { return score(spec, e, obs); }, ens);
      worst = std::max(worst, rel_error(g, fd));
    }
    lines.push_back({"scores", to_string(kind) + " gradient, 100 random ensembles", worst, 1e-6});
  }

  // Prior and PDE objective gradients on an 8 x 8 mesh with four scenarios.
  EllipticExperiment e;
  e.mesh_cells = 8;
  e.samples = {4};
  e.seeds = {seed + 1, seed + 2, seed + 3, seed + 4, seed + 5};
  const EllipticSetup setup(e);
  const Vector m0 = 0.5 * setup.m_true;
  for (PriorKind pk : {PriorKind::standard, PriorKind::informed}) {
    PriorSpec ps = e.prior;
    ps.kind = pk;
    const Prior prior(setup.mesh, ps, &setup.m_true);
    {
      const Vector g = prior.gradient(m0);
      const Vector fd = fd_gradient([&](const Vector& x) { return prior.value(x); }, m0, 1e-6);
      lines.push_back({"prior", to_string(pk) + " prior gradient", rel_error(g, fd), 1e-6});
    }
    for (ScoreKind kind : {ScoreKind::energy, ScoreKind::variogram, ScoreKind::hybrid}) {
      ScoreSpec spec;
      spec.kind = kind;
      spec.variogram = setup.variogram;
      const InverseProblem problem(setup.model, setup.scenarios, setup.d_obs, spec, prior);
      const Vector g = problem.evaluate(m0).gradient;
      double worst = 0;
      for (int d = 0; d < 10; ++d) {
        const Vector v = standard_normals(m0.size(), seed + 100, static_cast<std::uint64_t>(d));
        const double h = 1e-5;
        const double fd = (problem.value(m0 + h * v) - problem.value(m0 - h * v)) / (2 * h);
        const double an = g.dot(v);
        worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-12}));
      }
      lines.push_back({"objective", to_string(kind) + " objective, " + to_string(pk) + " prior, 10 directions", worst,
                       1e-4});
    }
  }
  return lines;
}

}  // namespace scoreinv
