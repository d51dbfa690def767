#include <gtest/gtest.h>

#include <json.hpp>

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run(const std::string& args) {
  const std::string cmd = std::string(SCOREINV_CLI_PATH) + " " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string config(const std::string& name) { return std::string(SCOREINV_SOURCE_DIR) + "/configs/" + name; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("scoreinv_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, ScoreIdenticalEnsembleIsZero) {
  write(path("ens.csv"), "1.5\n-2\n0.25\n");
  write(path("obs.csv"), "1.5\n-2\n0.25\n");
  const CliResult r = run("score --ensemble " + path("ens.csv") + " --obs " + path("obs.csv") + " --kind es");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out, "0\n");
}

TEST_F(Cli, ScoreHandExample) {
  write(path("ens.csv"), "0,2\n0,0\n");
  write(path("obs.csv"), "1,0\n");
  const CliResult r = run("score --ensemble " + path("ens.csv") + " --obs " + path("obs.csv") + " --kind es");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out, "0.5\n");
}

TEST_F(Cli, ScoreWritesRecord) {
  write(path("ens.csv"), "0\n2\n");
  write(path("obs.csv"), "0\n1\n");
  const CliResult r = run("score --ensemble " + path("ens.csv") + " --obs " + path("obs.csv") + " --kind vs --out " +
                    path("rec"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out, "18\n");
  const auto j = nlohmann::json::parse(slurp(dir_ / "rec" / "metadata.json"));
  EXPECT_EQ(j.at("score").get<double>(), 18.0);
  EXPECT_EQ(j.at("config").at("score_eval").at("kind"), "vs");
}

TEST_F(Cli, UnknownScoreFlagIsUsageError) {
  write(path("ens.csv"), "1\n");
  write(path("obs.csv"), "1\n");
  const CliResult r = run("score --ensemble " + path("ens.csv") + " --obs " + path("obs.csv") + " --kind es --bogus 3");
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, UnknownScoreKindIsUsageError) {
  write(path("ens.csv"), "1\n");
  write(path("obs.csv"), "1\n");
  EXPECT_EQ(run("score --ensemble " + path("ens.csv") + " --obs " + path("obs.csv") + " --kind brier").code, 2);
}

TEST_F(Cli, ParseErrorReportsLine) {
  write(path("ens.csv"), "1,2\n3,x\n");
  write(path("obs.csv"), "1\n2\n");
  const CliResult r = run("score --ensemble " + path("ens.csv") + " --obs " + path("obs.csv") + " --kind es");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find(":2:"), std::string::npos) << r.out;
}

TEST_F(Cli, DimensionMismatchIsUsageError) {
  write(path("ens.csv"), "1,2\n3,4\n");
  write(path("obs.csv"), "1\n2\n3\n");
  EXPECT_EQ(run("score --ensemble " + path("ens.csv") + " --obs " + path("obs.csv") + " --kind es").code, 2);
}

TEST_F(Cli, MissingSubcommand) { EXPECT_EQ(run("").code, 2); }

TEST_F(Cli, ConfigErrorsListedTogether) {
  write(path("bad.json"), R"({"experiment": "elliptic", "elliptic": {"mesh_cels": 8, "noise_sigma": "x"}})");
  const CliResult r = run("elliptic --config " + path("bad.json") + " --out " + path("o"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("mesh_cels"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("noise_sigma"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(dir_ / "o"));
}

TEST_F(Cli, ExperimentMismatch) {
  EXPECT_EQ(run("powergrid --config " + config("elliptic_smoke.json") + " --out " + path("o")).code, 2);
}

TEST_F(Cli, EllipticSmokeRun) {
  const std::string out = path("run");
  const CliResult r = run("elliptic --config " + config("elliptic_smoke.json") + " --out " + out);
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* f : {"m_true.csv", "truth_forcing.csv", "observations.csv", "scenarios.csv", "scenarios.json",
                        "map_es-standard_ns4.csv", "trace_es-standard_ns4.csv", "runs.csv", "metrics.csv",
                        "rank_histograms.csv", "metadata.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  }
  const auto meta = nlohmann::json::parse(slurp(fs::path(out) / "metadata.json"));
  EXPECT_EQ(meta.at("status"), "ok");
  EXPECT_TRUE(meta.contains("version"));
  EXPECT_DOUBLE_EQ(meta.at("noise_variance").get<double>(), 0.01);
  EXPECT_EQ(meta.at("config").at("elliptic").at("mesh_cells"), 8);

  // Existing output directories are kept unless --force is given.
  EXPECT_EQ(run("elliptic --config " + config("elliptic_smoke.json") + " --out " + out).code, 2);
  EXPECT_EQ(run("elliptic --config " + config("elliptic_smoke.json") + " --out " + out + " --force").code, 0);

  // A rerun from the metadata reproduces every CSV byte for byte.
  const std::string again = path("again");
  ASSERT_EQ(run("elliptic --config " + out + "/metadata.json --out " + again).code, 0);
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.path().extension() != ".csv") continue;
    EXPECT_EQ(slurp(e.path()), slurp(fs::path(again) / e.path().filename())) << e.path().filename();
  }
}

TEST_F(Cli, SeedOverride) {
  ASSERT_EQ(run("elliptic --config " + config("elliptic_smoke.json") + " --out " + path("a")).code, 0);
  ASSERT_EQ(run("elliptic --config " + config("elliptic_smoke.json") + " --out " + path("b") +
                " --seed-override 100")
                .code,
            0);
  EXPECT_NE(slurp(dir_ / "a" / "m_true.csv"), slurp(dir_ / "b" / "m_true.csv"));
  const auto meta = nlohmann::json::parse(slurp(dir_ / "b" / "metadata.json"));
  EXPECT_EQ(meta.at("seeds").at("truth"), 100);
  EXPECT_EQ(meta.at("seeds").at("ranks"), 104);
}

TEST_F(Cli, PowergridSmokeRun) {
  const auto t0 = std::chrono::steady_clock::now();
  const CliResult r = run("powergrid --config " + config("powergrid_smoke.json") + " --out " + path("grid"));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_LT(seconds, 300.0);
  for (const char* f : {"score_curve.csv", "argmin.csv", "estimation_trace.csv", "estimates.csv", "metadata.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "grid" / f)) << f;
  }
  // 2 truths x 2 scores x 5 batch counts x 35 grid values, plus the header.
  std::ifstream curve(dir_ / "grid" / "score_curve.csv");
  int lines = 0;
  for (std::string s; std::getline(curve, s);) ++lines;
  EXPECT_EQ(lines, 1 + 2 * 2 * 5 * 35);
}

TEST_F(Cli, Gradcheck) {
  const CliResult r = run("gradcheck --out " + path("gc"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "gc" / "gradcheck.csv"));
}
