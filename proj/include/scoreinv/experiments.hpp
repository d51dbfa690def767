#ifndef SCOREINV_EXPERIMENTS_HPP
#define SCOREINV_EXPERIMENTS_HPP

// Configuration-driven drivers for the elliptic inversion and power-grid
// inertia experiments. Every random draw is keyed by a named seed in the
// configuration.

#include "scoreinv/elliptic.hpp"
#include "scoreinv/optimize.hpp"
#include "scoreinv/powergrid.hpp"
#include "scoreinv/prior.hpp"
#include "scoreinv/stochastic.hpp"
#include "scoreinv/verify.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace scoreinv {

// Configuration errors: the message lists every problem found.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EllipticSeeds {
  std::uint64_t truth = 1;          // m_true prior draw
  std::uint64_t truth_forcing = 2;  // forcing behind d_obs
  std::uint64_t noise = 3;          // observational noise
  std::uint64_t scenarios = 4;      // forcing scenario i uses stream (scenarios, i)
  std::uint64_t ranks = 5;          // rank-histogram tie breaking
};

struct EllipticExperiment {
  int mesh_cells = 64;
  int observation_lattice = 5;
  std::vector<ScoreKind> scores{ScoreKind::energy, ScoreKind::variogram};
  std::vector<PriorKind> priors{PriorKind::standard, PriorKind::informed};
  std::vector<int> samples{1, 4, 8, 32, 64, 128};
  double noise_sigma = 0.1;
  double score_weight = 1.0;
  HybridCoeffs hybrid;
  std::string variogram_weights = "constant";  // or "inverse_distance"
  PriorSpec prior;
  SpatialKernel forcing;
  LbfgsConfig lbfgs;
  EllipticSeeds seeds;
};

struct GridSeeds {
  std::uint64_t scenarios = 7;     // simulated ensemble, scenario i
  std::uint64_t observations = 8;  // observation batch b of truth t uses index b of seed + t
};

struct GridExperiment {
  powergrid::GridConfig grid;
  int scenarios = 100;
  int batches = 50;
  int m_min = 1;
  int m_max = 35;
  std::vector<double> truths{10.0, 20.0};
  double bound_halfwidth = 5.0;
  std::vector<ScoreKind> scores{ScoreKind::energy, ScoreKind::variogram};
  bool estimate = true;
  bool dump_trajectory = false;
  HybridCoeffs hybrid;
  GridSeeds seeds;
};

struct ScoreEvalConfig {
  std::string ensemble;     // CSV, M x Ns
  std::string observation;  // CSV, M values (one column or one row)
  ScoreKind kind = ScoreKind::energy;
  double variogram_p = 2.0;
  std::string weights;  // optional CSV, M x M
  HybridCoeffs hybrid;
};

struct ExperimentConfig {
  std::string experiment;  // elliptic | powergrid | score-eval
  EllipticExperiment elliptic;
  GridExperiment powergrid;
  ScoreEvalConfig score_eval;
};

/// Parses a configuration document; a run-metadata document (with "config"
/// and "version") is accepted as well. Unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Replaces every named seed of the selected experiment by base, base + 1, ...
void override_seeds(ExperimentConfig& cfg, std::uint64_t base);

// ---- elliptic -------------------------------------------------------------

struct EllipticSetup {
  EllipticSetup(const EllipticExperiment& cfg);

  Mesh mesh;
  EllipticModel model;
  Vector m_true;
  Vector truth_forcing;
  Vector d_obs;
  Matrix scenarios;  // max(samples) x N nodal forcings
  VariogramWeights variogram;
};

struct EllipticRun {
  ScoreKind score = ScoreKind::energy;
  PriorKind prior = PriorKind::standard;
  int samples = 0;
  LbfgsResult result;
  Ensemble predictions;  // F(m_MAP), M x Ns
  MetricsRow metrics;
  RankHistogram ranks;
};

std::string model_label(ScoreKind score, PriorKind prior);

EllipticRun solve_elliptic_case(const EllipticSetup& setup, const EllipticExperiment& cfg, ScoreKind score,
                                PriorKind prior, int samples);

// ---- power grid -------------------------------------------------------------

/// Observation batches (n x M) at inertia `truth`.
Matrix grid_observations(const powergrid::GridModel& model, const powergrid::LoadProcess& process, double truth,
                         int batches, std::uint64_t seed);

std::vector<powergrid::LoadSeries> grid_scenarios(const powergrid::LoadProcess& process, int count,
                                                  std::uint64_t seed);

struct ScoreCurve {
  std::vector<int> m;  // grid values
  Matrix batch;        // per-batch scores, |m| x n
  /// Mean score over the first n batches at every grid value (prefix mean in
  /// row order, identical to mean_score on the first n rows).
  Vector mean(Index n) const;
  int argmin(Index n) const;
};

/// One curve per spec over the integer grid [m_min, m_max]; each ensemble is
/// simulated once and shared by all specs.
std::vector<ScoreCurve> score_curves(const powergrid::GridModel& model,
                                     const std::vector<powergrid::LoadSeries>& scenarios, const Matrix& obs_batches,
                                     const std::vector<ScoreSpec>& specs, int m_min, int m_max);

ScoreSpec grid_score_spec(const powergrid::GridModel& model, ScoreKind kind, const HybridCoeffs& hybrid);

// ---- runners ---------------------------------------------------------------

enum ExitCode { exit_ok = 0, exit_solver_failure = 1, exit_usage = 2 };

struct RunOptions {
  std::string out_dir;
  bool force = false;
};

/// Each runner writes its artifacts and metadata.json into out_dir and returns
/// an exit code; solver failures are recorded in the metadata.
int run_elliptic(const ExperimentConfig& cfg, const RunOptions& opts);
int run_powergrid(const ExperimentConfig& cfg, const RunOptions& opts);

struct ScoreEvalResult {
  double value = 0;
  nlohmann::json record;
};
ScoreEvalResult score_eval(const ScoreEvalConfig& cfg);

struct GradcheckLine {
  std::string suite;
  std::string name;
  double error = 0;
  double tolerance = 0;
  bool pass() const { return error <= tolerance; }
};

/// Finite-difference checks of the score gradients, the prior gradient and the
/// assembled PDE objective gradient.
std::vector<GradcheckLine> gradcheck(std::uint64_t seed = 12345);

/// Creates out_dir; refuses an existing directory unless force is set.
void prepare_output_dir(const std::string& dir, bool force);

}  // namespace scoreinv

#endif  // SCOREINV_EXPERIMENTS_HPP
