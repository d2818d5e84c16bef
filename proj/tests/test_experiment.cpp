#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mlmct/experiment.hpp"

using namespace mlmct;
namespace fs = std::filesystem;

namespace {

struct Output {
  int status;
  std::string text;
};

Output run_cli(const std::string& args) {
  const std::string cmd = std::string(MLMCT_CLI_PATH) + " " + args + " 2>&1";
  FILE* f = popen(cmd.c_str(), "r");
  Output o{-1, {}};
  if (!f) return o;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), f)) o.text += buf.data();
  const int st = pclose(f);
  o.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return o;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "mlmct_experiment_tests";
  fs::create_directories(d);
  const fs::path p = d / name;
  fs::remove_all(p);
  fs::remove(fs::path(p).replace_extension(".json"));
  return p;
}

ExperimentConfig small_laplace() {
  ExperimentConfig c;
  c.Ns = {15};
  c.epsilons = {1e-2};
  return c;
}

}  // namespace

TEST(ParseEpsilon, PlainAndFractionalExponents) {
  EXPECT_DOUBLE_EQ(parse_epsilon("1e-3"), 1e-3);
  EXPECT_DOUBLE_EQ(parse_epsilon("0.01"), 0.01);
  EXPECT_NEAR(parse_epsilon("1e-1.5"), std::pow(10.0, -1.5), 1e-17);
  EXPECT_NEAR(parse_epsilon("1e-2.5"), 0.0031622776601683794, 1e-17);
  EXPECT_THROW(parse_epsilon("tight"), Error);
}

TEST(Config, DefaultsAndRoundTrip) {
  const auto c = config_from_json(nlohmann::json::parse(R"({"family":"schwinger","N":16,"m":-0.1,"beta":0.1,
      "epsilon":["1e-2","1e-2.5"],"seeds":[1,2],"methods":["plain","mlmc"]})"));
  EXPECT_EQ(c.solver.mode, SolveMode::flexible_krylov);
  EXPECT_EQ(c.solver.nu_pre, 2);
  EXPECT_EQ(c.Ns, std::vector<std::size_t>{16});
  EXPECT_EQ(c.epsilons.size(), 2u);
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(back.epsilons, c.epsilons);
  EXPECT_EQ(back.methods, c.methods);
  EXPECT_EQ(back.solver.mode, c.solver.mode);
  EXPECT_EQ(back.m, c.m);
  EXPECT_EQ(config_from_json(nlohmann::json::object()).solver.mode, SolveMode::stationary);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"epsilon_typo":1})")), Error);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"methods":["magic"]})")), Error);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"N":"big"})")), Error);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"weights":[0.2,0.2]})")), Error);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"solver":{"omega":1}})")), Error);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"family":"ising"})")), Error);
}

TEST(Levels, GeometricDepths) {
  EXPECT_EQ(auto_geometric_levels(63), 3u);
  EXPECT_EQ(auto_geometric_levels(127), 4u);
  EXPECT_EQ(auto_geometric_levels(15), 2u);
  EXPECT_EQ(solver_geometric_levels(63), 4u);
  EXPECT_EQ(solver_geometric_levels(15), 2u);
  ExperimentConfig c;
  c.family = "schwinger";
  EXPECT_EQ(auto_levels(c, 128), 4u);
  EXPECT_EQ(auto_levels(c, 16), 3u);
  c.family = "gauge";
  EXPECT_EQ(auto_levels(c, 16), 3u);
}

TEST(Problem, LaplaceSolverDeeperThanMlmc) {
  ExperimentConfig c;
  auto p = build_problem(c, 63);
  EXPECT_EQ(p.mlmc_levels, 3u);
  EXPECT_EQ(p.hierarchy->num_levels(), 4u);
  EXPECT_NEAR(*exact_trace(c, p), 2668.9862303027708, 1e-8);
}

TEST(Problem, DenseCapRejectsShallowHierarchy) {
  ExperimentConfig c;
  c.levels = 1;
  c.solver_levels = 1;
  c.dense_cap = 1000;
  EXPECT_THROW(build_problem(c, 63), Error);
}

TEST(RunCell, MlmcRecordFields) {
  const auto c = small_laplace();
  auto p = build_problem(c, 15);
  const auto r = run_cell(c, p, "mlmc", 1e-2, 0, 3);
  ASSERT_TRUE(r.ok()) << r.status;
  EXPECT_EQ(r.level_samples.size(), 1u);
  EXPECT_GT(r.work_total, 0u);
  ASSERT_TRUE(r.rel_error);
  EXPECT_LT(*r.rel_error, 0.05);
  EXPECT_EQ(r.work_eigensolver, 0u);
}

TEST(RunCell, DeflatedReusesEigenbasis) {
  const auto c = small_laplace();
  auto p = build_problem(c, 15);
  const auto a = run_cell(c, p, "deflated", 1e-2, 6, 1);
  const auto b = run_cell(c, p, "deflated", 1e-2, 6, 2);
  ASSERT_TRUE(a.ok()) << a.status;
  EXPECT_GT(a.work_eigensolver, 0u);
  EXPECT_EQ(a.work_eigensolver, b.work_eigensolver);
  EXPECT_EQ(p.deflation.size(), 1u);
  EXPECT_EQ(a.n_defl, 6u);
}

TEST(RunCell, FailuresBecomeStatus) {
  auto c = small_laplace();
  c.max_samples = 6;
  auto p = build_problem(c, 15);
  const auto r = run_cell(c, p, "plain", 1e-6, 0, 1);
  EXPECT_FALSE(r.ok());
  EXPECT_NE(r.status.find("budget"), std::string::npos);
  EXPECT_EQ(r.level_samples, std::vector<std::size_t>{6});

  ExperimentConfig s;
  s.family = "schwinger";
  s.Ns = {8};
  s.beta = 0.1;
  s.aggregate = {2};
  s.coarse_dofs = {4};
  auto q = build_problem(s, 8);
  const auto d = run_cell(s, q, "deflated", 1e-2, 2, 1);
  EXPECT_NE(d.status.find("Hermitian"), std::string::npos);
}

TEST(Run, GridShapeAndCsvAppend) {
  auto c = small_laplace();
  c.methods = {"plain", "deflated", "mlmc", "exact"};
  c.n_defls = {2, 4};
  c.seeds = {1, 2};
  c.epsilons = {1e-1, 5e-2};
  const fs::path out = scratch("grid.csv");
  c.output = out.string();
  const auto s = run(c);
  // Per ε: plain, mlmc, exact twice each; deflated for both n_defl twice.
  EXPECT_EQ(s.records.size(), 2u * (3u * 2u + 2u * 2u));
  EXPECT_TRUE(s.all_ok());
  EXPECT_EQ(read_csv(out.string()).size(), s.records.size());
  run(c);
  EXPECT_EQ(read_csv(out.string()).size(), 2 * s.records.size());
  std::ifstream mj(fs::path(out).replace_extension(".json"));
  const auto man = nlohmann::json::parse(mj);
  EXPECT_EQ(man["invocations"].size(), 2u);
  EXPECT_EQ(man["invocations"][0]["runs"].size(), s.records.size());
  EXPECT_EQ(man["invocations"][0]["hierarchies"][0]["kind"], "geometric");
}

TEST(Run, BuildFailureFillsEveryCell) {
  auto c = small_laplace();
  c.Ns = {16};
  c.levels = 2;
  c.seeds = {1, 2, 3};
  const auto s = run(c);
  ASSERT_EQ(s.records.size(), 3u);
  for (const auto& r : s.records) EXPECT_FALSE(r.ok());
}

TEST(Cli, TraceExactGaugeMatchesLibrary) {
  const auto o = run_cli("trace-exact --family gauge --N 8 --beta 0.1 --gauge-seed 3");
  ASSERT_EQ(o.status, 0) << o.text;
  ExperimentConfig c;
  c.family = "gauge";
  c.beta = 0.1;
  c.gauge_seed = 3;
  auto p = build_problem(c, 8);
  EXPECT_NEAR(std::stod(o.text), *exact_trace(c, p), 1e-9);
}

TEST(Cli, EstimateIsReproducible) {
  const std::string args = "estimate --N 15 --method mlmc --eps 1e-2 --seed 7";
  const auto a = run_cli(args);
  const auto b = run_cli(args);
  ASSERT_EQ(a.status, 0) << a.text;
  EXPECT_EQ(a.text, b.text);
  EXPECT_EQ(a.text.rfind("method,family,N,", 0), 0u);
}

TEST(Cli, EstimateRejectsGrids) {
  const auto o = run_cli("estimate --N 15 --method mlmc --eps 1e-2,1e-3");
  EXPECT_EQ(o.status, 2);
  EXPECT_NE(o.text.find("sweep"), std::string::npos);
}

TEST(Cli, SweepThenReport) {
  const fs::path out = scratch("sweep.csv");
  const auto s = run_cli("sweep --N 15 --method plain,mlmc --eps 1e-1,1e-2 --seed 1,2 --out " + out.string());
  ASSERT_EQ(s.status, 0) << s.text;
  EXPECT_EQ(read_csv(out.string()).size(), 8u);
  const auto r = run_cli("report " + out.string());
  ASSERT_EQ(r.status, 0) << r.text;
  EXPECT_NE(r.text.find("plain"), std::string::npos);
}

TEST(Cli, GenerateAndHierarchy) {
  const fs::path mtx = scratch("lap.mtx");
  const auto g = run_cli("generate --N 7 --out " + mtx.string());
  ASSERT_EQ(g.status, 0) << g.text;
  EXPECT_TRUE(fs::exists(mtx));
  EXPECT_TRUE(fs::exists(fs::path(mtx).replace_extension(".json")));
  const fs::path dir = scratch("hier");
  const auto h = run_cli("hierarchy --N 31 --out " + dir.string());
  ASSERT_EQ(h.status, 0) << h.text;
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "level_1_P.mtx"));
}

TEST(Cli, FailedCellExitsOne) {
  const auto o = run_cli("estimate --N 15 --method plain --eps 1e-5 --max-samples 6");
  EXPECT_EQ(o.status, 1) << o.text;
}
