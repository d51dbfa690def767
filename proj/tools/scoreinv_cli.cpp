// scoreinv: command-line front end for the experiments.
//
//   scoreinv elliptic  --config cfg.json --out dir [--seed-override N] [--force]
//   scoreinv powergrid --config cfg.json --out dir [--seed-override N] [--force]
//   scoreinv score     --ensemble ens.csv --obs obs.csv --kind es|vs|hs|crps
//   scoreinv gradcheck [--out dir] [--seed-override N] [--force]

#include "scoreinv/experiments.hpp"
#include "scoreinv/io.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace scoreinv;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  bool force = false;
};

void add_common(CLI::App* app, CommonFlags& f, bool config_required) {
  auto* c = app->add_option("--config", f.config, "JSON configuration or run metadata");
  if (config_required) c->required();
  app->add_option("--out", f.out, "output directory");
  app->add_option("--seed-override", f.seed_override, "replace every named seed by N, N+1, ...");
  app->add_flag("--force", f.force, "overwrite an existing output directory");
}

ExperimentConfig load_for(const CommonFlags& f, const std::string& experiment) {
  ExperimentConfig cfg = load_config(f.config);
  if (cfg.experiment != experiment) {
    throw ConfigError(f.config + ": experiment is '" + cfg.experiment + "', expected '" + experiment + "'");
  }
  if (f.seed_override) override_seeds(cfg, *f.seed_override);
  return cfg;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

int run_score(const CommonFlags& f, ScoreEvalConfig cli, const std::string& kind, bool has_kind,
              const CLI::App& app) {
  ScoreEvalConfig cfg;
  if (!f.config.empty()) cfg = load_for(f, "score-eval").score_eval;
  if (!cli.ensemble.empty()) cfg.ensemble = cli.ensemble;
  if (!cli.observation.empty()) cfg.observation = cli.observation;
  if (has_kind) cfg.kind = score_kind_from_string(kind);
  if (app.count("--p") > 0) cfg.variogram_p = cli.variogram_p;
  if (app.count("--alpha") > 0) cfg.hybrid.alpha = cli.hybrid.alpha;
  if (app.count("--beta") > 0) cfg.hybrid.beta = cli.hybrid.beta;
  if (!cli.weights.empty()) cfg.weights = cli.weights;
  if (cfg.ensemble.empty() || cfg.observation.empty()) {
    throw ConfigError("score needs --ensemble and --obs (or a score-eval config)");
  }

  const ScoreEvalResult res = score_eval(cfg);
  std::cout << format_double(res.value) << '\n';
  if (!f.out.empty()) {
    prepare_output_dir(f.out, f.force);
    write_json_file(std::filesystem::path(f.out) / "metadata.json", res.record);
  }
  return exit_ok;
}

int run_gradcheck(const CommonFlags& f) {
  std::uint64_t seed = 12345;
  if (f.seed_override) seed = *f.seed_override;
  const auto lines = gradcheck(seed);

  std::optional<CsvWriter> csv;
  if (!f.out.empty()) {
    prepare_output_dir(f.out, f.force);
    csv.emplace((std::filesystem::path(f.out) / "gradcheck.csv").string(),
                std::vector<std::string>{"suite", "name", "error", "tolerance", "pass"});
  }
  bool ok = true;
  for (const auto& l : lines) {
    ok = ok && l.pass();
    std::cout << (l.pass() ? "PASS " : "FAIL ") << l.suite << ' ' << l.name << " error=" << std::setprecision(3)
              << std::scientific << l.error << " tol=" << l.tolerance << std::defaultfloat << '\n';
    if (csv) csv->row({l.suite, l.name, format_double(l.error), format_double(l.tolerance), l.pass() ? "1" : "0"});
  }
  if (!f.out.empty()) {
    write_json_file(std::filesystem::path(f.out) / "metadata.json",
                    {{"version", SCOREINV_VERSION},
                     {"experiment", "gradcheck"},
                     {"seed", seed},
                     {"checks", lines.size()},
                     {"status", ok ? "ok" : "failed"}});
  }
  return ok ? exit_ok : exit_solver_failure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scoring-rule based inversion experiments"};
  app.require_subcommand(1);

  CommonFlags elliptic_flags, grid_flags, score_flags, grad_flags;
  auto* elliptic = app.add_subcommand("elliptic", "elliptic inverse problem");
  add_common(elliptic, elliptic_flags, true);
  elliptic->get_option("--out")->required();

  auto* grid = app.add_subcommand("powergrid", "power-grid inertia estimation");
  add_common(grid, grid_flags, true);
  grid->get_option("--out")->required();

  ScoreEvalConfig score_cli;
  std::string kind;
  auto* sc = app.add_subcommand("score", "evaluate a score on ensemble and observation CSV files");
  add_common(sc, score_flags, false);
  sc->add_option("--ensemble", score_cli.ensemble, "ensemble CSV, M rows x Ns columns");
  sc->add_option("--obs", score_cli.observation, "observation CSV, M values");
  auto* kind_opt = sc->add_option("--kind", kind, "es | vs | hs | crps");
  sc->add_option("--p", score_cli.variogram_p, "variogram order");
  sc->add_option("--alpha", score_cli.hybrid.alpha, "hybrid ES coefficient");
  sc->add_option("--beta", score_cli.hybrid.beta, "hybrid VS coefficient");
  sc->add_option("--weights", score_cli.weights, "variogram weights CSV, M x M");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suites");
  add_common(grad, grad_flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  try {
    if (*elliptic) {
      return run_elliptic(load_for(elliptic_flags, "elliptic"), {elliptic_flags.out, elliptic_flags.force});
    }
    if (*grid) {
      return run_powergrid(load_for(grid_flags, "powergrid"), {grid_flags.out, grid_flags.force});
    }
    if (*sc) return run_score(score_flags, score_cli, kind, kind_opt->count() > 0, *sc);
    if (*grad) return run_gradcheck(grad_flags);
  } catch (const NumericalError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return exit_solver_failure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_usage;
  }
  return exit_usage;
}
