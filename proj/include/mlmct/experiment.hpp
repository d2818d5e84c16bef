#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlmct/costmodel.hpp"
#include "mlmct/estimators.hpp"
#include "mlmct/generators.hpp"
#include "mlmct/hierarchy_io.hpp"
#include "mlmct/multigrid.hpp"
#include "mlmct/solvers.hpp"

namespace mlmct {

/// Parses "1e-3", "0.01" and fractional exponents such as "1e-1.5" (= 10^-1.5).
inline double parse_epsilon(const std::string& s) {
  try {
    const auto e = s.find_first_of("eE");
    if (e == std::string::npos) return std::stod(s);
    const double mant = std::stod(s.substr(0, e));
    const double expo = std::stod(s.substr(e + 1));
    return mant * std::pow(10.0, expo);
  } catch (const std::logic_error&) {
    throw Error("cannot parse tolerance '" + s + "'");
  }
}

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"plain", "deflated", "mlmc", "exact"};
  return m;
}

struct ExperimentConfig {
  std::string family = "laplace2d";  // laplace2d | gauge | schwinger
  std::vector<std::size_t> Ns{63};
  double beta = 0.0;
  double m = 0.0;
  std::uint64_t gauge_seed = 1;
  std::optional<std::size_t> levels;         // MLMC levels L; chosen from N when absent
  std::optional<std::size_t> solver_levels;  // multigrid depth, at least L; laplace2d goes down to 7x7, others stop at L
  Distribution dist = Distribution::z4;
  std::vector<double> epsilons{1e-3};
  std::vector<double> weights;
  std::optional<double> abs_tol;
  std::vector<std::size_t> n_defls{0};
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> methods{"mlmc"};
  std::string output;
  SolveConfig solver;
  std::vector<std::size_t> aggregate;    // aggregate extent per coarsening step
  std::vector<std::size_t> coarse_dofs;  // dofs per coarse site per coarsening step
  std::uint64_t setup_seed = 0;
  int adaptive_passes = 4;  // bootstrap passes of the aggregation setup
  int adaptive_cycles = 4;
  unsigned workers = 1;
  std::size_t max_samples = 1'000'000;
  std::size_t dense_cap = kDefaultDenseCap;
  std::size_t exact_dense_cap = 2048;

  void validate() const {
    require(family == "laplace2d" || family == "gauge" || family == "schwinger",
            "config: family must be laplace2d, gauge or schwinger (got '" + family + "')");
    require(!Ns.empty() && !epsilons.empty() && !seeds.empty() && !methods.empty() && !n_defls.empty(),
            "config: N, epsilon, seeds, methods and n_defl must be non-empty");
    for (auto n : Ns) require(n >= 2, "config: N must be at least 2");
    for (double e : epsilons) require(e > 0.0, "config: epsilon must be positive");
    for (const auto& m : methods) {
      bool ok = false;
      for (const auto& k : known_methods()) ok = ok || k == m;
      require(ok, "config: unknown method '" + m + "' (expected plain, deflated, mlmc or exact)");
    }
    require(beta >= 0.0, "config: beta must be non-negative");
    if (levels) require(*levels >= 1, "config: levels must be at least 1");
    if (levels && solver_levels) require(*solver_levels >= *levels, "config: solver_levels must be >= levels");
    if (abs_tol) require(*abs_tol > 0.0, "config: abs_tol must be positive");
    require(workers >= 1, "config: workers must be positive");
    require(aggregate.size() == coarse_dofs.size(), "config: aggregate and coarse_dofs differ in length");
    require(adaptive_passes >= 0 && adaptive_cycles >= 1, "config: adaptive_passes >= 0 and adaptive_cycles >= 1");
    solver.validate();
    StoppingRule r;
    r.weights = weights;
    r.validate();
  }
};

inline SolveConfig default_solver(const std::string& family) {
  SolveConfig s;
  if (family == "schwinger") {
    s.nu_pre = 2;
    s.nu_post = 2;
    s.mode = SolveMode::flexible_krylov;
  }
  return s;
}

namespace detail {

template <class T>
std::vector<T> scalar_or_list(const nlohmann::json& j, const std::string& key) {
  std::vector<T> out;
  if (j.is_array()) {
    for (const auto& e : j) out.push_back(e.get<T>());
  } else {
    out.push_back(j.get<T>());
  }
  require(!out.empty(), "config: '" + key + "' is empty");
  return out;
}

inline std::vector<double> epsilon_list(const nlohmann::json& j) {
  std::vector<double> out;
  auto one = [](const nlohmann::json& e) {
    return e.is_string() ? parse_epsilon(e.get<std::string>()) : e.get<double>();
  };
  if (j.is_array()) {
    for (const auto& e : j) out.push_back(one(e));
  } else {
    out.push_back(one(j));
  }
  return out;
}

inline SolveMode parse_mode(const std::string& s) {
  if (s == "stationary") return SolveMode::stationary;
  if (s == "flexible-krylov" || s == "flexible_krylov" || s == "fgmres") return SolveMode::flexible_krylov;
  throw Error("config: unknown solver mode '" + s + "'");
}

}  // namespace detail

/// Reads a config object. Unknown keys and ill-typed values are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "config: top level must be a JSON object");
  static const std::vector<std::string> keys{
      "family",  "N",          "beta",        "m",         "gauge_seed", "levels",      "solver_levels",
      "dist",    "epsilon",    "weights",     "abs_tol",   "n_defl",     "seeds",       "methods",
      "output",  "solver",     "aggregate",   "coarse_dofs", "setup_seed", "workers",   "max_samples",
      "dense_cap", "exact_dense_cap", "adaptive_passes", "adaptive_cycles"};
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const auto& known : keys) ok = ok || k == known;
    require(ok, "config: unknown key '" + k + "'");
  }
  ExperimentConfig c;
  try {
    if (j.contains("family")) c.family = j["family"].get<std::string>();
    c.solver = default_solver(c.family);
    if (j.contains("N")) c.Ns = detail::scalar_or_list<std::size_t>(j["N"], "N");
    if (j.contains("beta")) c.beta = j["beta"].get<double>();
    if (j.contains("m")) c.m = j["m"].get<double>();
    if (j.contains("gauge_seed")) c.gauge_seed = j["gauge_seed"].get<std::uint64_t>();
    if (j.contains("levels") && !j["levels"].is_null()) c.levels = j["levels"].get<std::size_t>();
    if (j.contains("solver_levels") && !j["solver_levels"].is_null())
      c.solver_levels = j["solver_levels"].get<std::size_t>();
    if (j.contains("dist")) c.dist = parse_distribution(j["dist"].get<std::string>());
    if (j.contains("epsilon")) c.epsilons = detail::epsilon_list(j["epsilon"]);
    if (j.contains("weights")) c.weights = j["weights"].get<std::vector<double>>();
    if (j.contains("abs_tol") && !j["abs_tol"].is_null()) c.abs_tol = j["abs_tol"].get<double>();
    if (j.contains("n_defl")) c.n_defls = detail::scalar_or_list<std::size_t>(j["n_defl"], "n_defl");
    if (j.contains("seeds")) c.seeds = detail::scalar_or_list<std::uint64_t>(j["seeds"], "seeds");
    if (j.contains("methods")) c.methods = detail::scalar_or_list<std::string>(j["methods"], "methods");
    if (j.contains("output")) c.output = j["output"].get<std::string>();
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      require(s.is_object(), "config: 'solver' must be an object");
      for (const auto& [k, v] : s.items())
        require(k == "nu_pre" || k == "nu_post" || k == "rtol" || k == "max_iter" || k == "mode" ||
                    k == "krylov_restart",
                "config: unknown solver key '" + k + "'");
      if (s.contains("nu_pre")) c.solver.nu_pre = s["nu_pre"].get<int>();
      if (s.contains("nu_post")) c.solver.nu_post = s["nu_post"].get<int>();
      if (s.contains("rtol")) c.solver.rtol = s["rtol"].get<double>();
      if (s.contains("max_iter")) c.solver.max_iter = s["max_iter"].get<int>();
      if (s.contains("mode")) c.solver.mode = detail::parse_mode(s["mode"].get<std::string>());
      if (s.contains("krylov_restart")) c.solver.krylov_restart = s["krylov_restart"].get<int>();
    }
    if (j.contains("aggregate")) c.aggregate = j["aggregate"].get<std::vector<std::size_t>>();
    if (j.contains("coarse_dofs")) c.coarse_dofs = j["coarse_dofs"].get<std::vector<std::size_t>>();
    if (j.contains("setup_seed")) c.setup_seed = j["setup_seed"].get<std::uint64_t>();
    if (j.contains("adaptive_passes")) c.adaptive_passes = j["adaptive_passes"].get<int>();
    if (j.contains("adaptive_cycles")) c.adaptive_cycles = j["adaptive_cycles"].get<int>();
    if (j.contains("workers")) c.workers = j["workers"].get<unsigned>();
    if (j.contains("max_samples")) c.max_samples = j["max_samples"].get<std::size_t>();
    if (j.contains("dense_cap")) c.dense_cap = j["dense_cap"].get<std::size_t>();
    if (j.contains("exact_dense_cap")) c.exact_dense_cap = j["exact_dense_cap"].get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["family"] = c.family;
  j["N"] = c.Ns;
  j["beta"] = c.beta;
  j["m"] = c.m;
  j["gauge_seed"] = c.gauge_seed;
  j["levels"] = c.levels ? nlohmann::json(*c.levels) : nlohmann::json(nullptr);
  j["solver_levels"] = c.solver_levels ? nlohmann::json(*c.solver_levels) : nlohmann::json(nullptr);
  j["dist"] = to_string(c.dist);
  j["epsilon"] = c.epsilons;
  j["weights"] = c.weights;
  j["abs_tol"] = c.abs_tol ? nlohmann::json(*c.abs_tol) : nlohmann::json(nullptr);
  j["n_defl"] = c.n_defls;
  j["seeds"] = c.seeds;
  j["methods"] = c.methods;
  j["output"] = c.output;
  j["solver"] = {{"nu_pre", c.solver.nu_pre},
                 {"nu_post", c.solver.nu_post},
                 {"rtol", c.solver.rtol},
                 {"max_iter", c.solver.max_iter},
                 {"mode", c.solver.mode == SolveMode::stationary ? "stationary" : "flexible-krylov"},
                 {"krylov_restart", c.solver.krylov_restart}};
  j["aggregate"] = c.aggregate;
  j["coarse_dofs"] = c.coarse_dofs;
  j["setup_seed"] = c.setup_seed;
  j["adaptive_passes"] = c.adaptive_passes;
  j["adaptive_cycles"] = c.adaptive_cycles;
  j["workers"] = c.workers;
  j["max_samples"] = c.max_samples;
  j["dense_cap"] = c.dense_cap;
  j["exact_dense_cap"] = c.exact_dense_cap;
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("config " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Problems

/// A generated operator, its hierarchy and solver, and cached oracles.
struct Problem {
  std::string family;
  std::size_t N = 0;
  SparseMatrix A;
  std::unique_ptr<Hierarchy> hierarchy;
  std::unique_ptr<MultigridSolver> solver;
  std::size_t mlmc_levels = 1;
  CostLedger setup;
  std::optional<double> exact;
  bool exact_tried = false;
  std::map<std::size_t, std::pair<DeflationBasis, std::uint64_t>> deflation;
};

inline SparseMatrix generate_operator(const std::string& family, std::size_t N, double beta, double m,
                                      std::uint64_t gauge_seed) {
  if (family == "laplace2d") return gen_laplace2d(N);
  const GaugeField f = draw_gauge_field(N, beta, gauge_seed);
  if (family == "gauge") return gen_gauge_laplace(f);
  if (family == "schwinger") return gen_schwinger({N, m, f});
  throw Error("unknown family '" + family + "'");
}

/// Geometric depth whose coarsest extent is at most 15 (at least two levels
/// when N allows it).
inline std::size_t auto_geometric_levels(std::size_t N) {
  std::size_t L = 1;
  std::size_t e = N;
  while (e % 2 == 1 && e / 2 >= 3 && (e > 15 || L < 2)) {
    e /= 2;
    ++L;
  }
  return L;
}

/// Full geometric solver depth, halving down to an extent of 7.
inline std::size_t solver_geometric_levels(std::size_t N) {
  std::size_t L = 1;
  std::size_t e = N;
  while (e % 2 == 1 && e / 2 >= 3 && e > 7) {
    e /= 2;
    ++L;
  }
  return L;
}

inline Hierarchy build_hierarchy(const ExperimentConfig& cfg, const SparseMatrix& A, std::size_t N,
                                 std::size_t depth, CostLedger& setup) {
  if (cfg.family == "laplace2d") return build_geometric_hierarchy(A, N, depth, setup);
  AggregationConfig ac;
  ac.seed = cfg.setup_seed;
  const bool schwinger = cfg.family == "schwinger";
  ac.fine = LatticeShape{N, schwinger ? 2u : 1u, schwinger};
  ac.spin_split = schwinger;
  ac.adaptive_passes = cfg.adaptive_passes;
  ac.adaptive_cycles = cfg.adaptive_cycles;
  std::vector<std::size_t> agg = cfg.aggregate;
  std::vector<std::size_t> dofs = cfg.coarse_dofs;
  if (agg.empty()) {
    for (std::size_t s = 0; s + 1 < depth; ++s) {
      agg.push_back(schwinger ? 4 : 2);
      dofs.push_back(schwinger ? (s == 0 ? 4 : 8) : 2);
    }
  }
  require(agg.size() + 1 >= depth, "hierarchy: " + std::to_string(depth) + " levels requested but only " +
                                       std::to_string(agg.size()) + " coarsening steps configured");
  agg.resize(depth - 1);
  dofs.resize(depth - 1);
  ac.aggregate_extent = agg;
  ac.coarse_dofs = dofs;
  return build_adaptive_hierarchy(A, ac, setup);
}

inline std::size_t auto_levels(const ExperimentConfig& cfg, std::size_t N) {
  if (cfg.family == "laplace2d") return auto_geometric_levels(N);
  if (!cfg.aggregate.empty()) return cfg.aggregate.size() + 1;
  const std::size_t a = cfg.family == "schwinger" ? 4 : 2;
  std::size_t L = 1;
  std::size_t e = N;
  while (L < (cfg.family == "schwinger" ? 4u : 3u) && e % a == 0) {
    e /= a;
    ++L;
  }
  return L;
}

inline Problem build_problem(const ExperimentConfig& cfg, std::size_t N) {
  Problem p;
  p.family = cfg.family;
  p.N = N;
  p.A = generate_operator(cfg.family, N, cfg.beta, cfg.m, cfg.gauge_seed);
  p.mlmc_levels = cfg.levels ? *cfg.levels : auto_levels(cfg, N);
  std::size_t depth = p.mlmc_levels;
  if (cfg.solver_levels)
    depth = *cfg.solver_levels;
  else if (cfg.family == "laplace2d")
    depth = std::max(depth, solver_geometric_levels(N));
  require(depth >= p.mlmc_levels, "solver depth below MLMC levels");
  p.hierarchy = std::make_unique<Hierarchy>(build_hierarchy(cfg, p.A, N, depth, p.setup));
  require(p.hierarchy->size(depth - 1) <= cfg.dense_cap,
          "coarsest level has " + std::to_string(p.hierarchy->size(depth - 1)) + " unknowns, above the dense cap " +
              std::to_string(cfg.dense_cap) + "; use more levels");
  p.solver = std::make_unique<MultigridSolver>(*p.hierarchy, cfg.solver);
  return p;
}

/// Analytic value for laplace2d, dense tr(A⁻¹) (real part) for the other
/// families when n ≤ exact_dense_cap, otherwise none.
inline std::optional<double> exact_trace(const ExperimentConfig& cfg, Problem& p) {
  if (p.exact_tried) return p.exact;
  p.exact_tried = true;
  if (p.family == "laplace2d") {
    p.exact = exact_trace_inv_laplace2d(p.N);
  } else if (p.A.rows() <= cfg.exact_dense_cap) {
    CostLedger scratch;
    p.exact = dense_invert(to_dense(p.A), scratch).trace().real();
  }
  return p.exact;
}

inline StoppingRule stopping_rule(const ExperimentConfig& cfg, double epsilon) {
  StoppingRule r;
  r.epsilon = epsilon;
  r.abs_tol = cfg.abs_tol;
  r.weights = cfg.weights;
  r.workers = cfg.workers;
  r.max_samples = cfg.max_samples;
  return r;
}

inline const std::pair<DeflationBasis, std::uint64_t>& deflation_basis(const ExperimentConfig& cfg, Problem& p,
                                                                       std::size_t k) {
  auto it = p.deflation.find(k);
  if (it != p.deflation.end()) return it->second;
  require(max_abs_diff(p.A, adjoint(p.A)) == 0.0,
          "deflated: eigen-deflation needs a Hermitian operator (family " + p.family + ")");
  CostLedger eig;
  DeflationBasis b = smallest_eigenpairs(p.A, k, *p.solver, eig, cfg.setup_seed + 12345);
  return p.deflation.emplace(k, std::make_pair(std::move(b), eig.work_units())).first->second;
}

/// Runs one (method, ε, n_defl, seed) cell. Errors never escape: the record
/// carries status "failed: ..." and whatever partial result exists.
inline RunRecord run_cell(const ExperimentConfig& cfg, Problem& p, const std::string& method, double epsilon,
                          std::size_t n_defl, std::uint64_t seed) {
  RunRecord r;
  r.method = method;
  r.family = cfg.family;
  r.N = p.N;
  r.m = cfg.family == "schwinger" ? cfg.m : 0.0;
  r.beta = cfg.family == "laplace2d" ? 0.0 : cfg.beta;
  r.dist = to_string(cfg.dist);
  r.epsilon = epsilon;
  r.seed = seed;
  r.n_defl = method == "deflated" ? n_defl : 0;
  const auto t0 = std::chrono::steady_clock::now();
  auto fill = [&](const EstimateResult& e) {
    r.estimate = e.mean;
    r.work_total = e.cost();
    r.level_samples.clear();
    if (method == "mlmc") {
      for (const auto& c : e.per_level) r.level_samples.push_back(c.n_samples);
    } else {
      r.level_samples.push_back(e.n_samples);
    }
    r.result = e;
  };
  try {
    const StoppingRule rule = stopping_rule(cfg, epsilon);
    if (method == "exact") {
      const auto ex = exact_trace(cfg, p);
      if (!ex) throw Error("exact: no analytic oracle and n = " + std::to_string(p.A.rows()) + " exceeds exact_dense_cap");
      r.estimate = *ex;
    } else if (method == "plain") {
      fill(hutchinson(inverse_operator(*p.solver), p.A.rows(), cfg.dist, rule, seed));
    } else if (method == "deflated") {
      const auto& [basis, eig_cost] = deflation_basis(cfg, p, n_defl);
      r.work_eigensolver = eig_cost;
      fill(deflated_hutchinson(*p.solver, basis, cfg.dist, rule, seed));
    } else if (method == "mlmc") {
      MlmcOptions o;
      o.levels = p.mlmc_levels;
      o.dense_cap = cfg.dense_cap;
      fill(mlmc_trace(*p.solver, cfg.dist, rule, seed, o));
    } else {
      throw Error("unknown method '" + method + "'");
    }
    if (const auto ex = exact_trace(cfg, p)) r.set_exact(*ex);
  } catch (const BudgetExceeded& e) {
    fill(e.partial());
    r.status = std::string("failed: ") + e.what();
  } catch (const std::exception& e) {
    r.status = std::string("failed: ") + e.what();
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Output

/// Appends rows to a CSV file by rewriting it through a temporary file and a
/// rename, so an interrupted write never leaves a truncated table.
inline void append_csv_atomic(const std::filesystem::path& path, const std::vector<RunRecord>& rows) {
  std::vector<RunRecord> all;
  if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) all = read_csv(path.string());
  all.insert(all.end(), rows.begin(), rows.end());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    require(static_cast<bool>(os), "cannot write " + tmp.string());
    write_csv(os, all);
    os.flush();
    require(static_cast<bool>(os), "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json record_to_json(const RunRecord& r) {
  nlohmann::json j{{"method", r.method},   {"family", r.family},        {"N", r.N},
                   {"epsilon", r.epsilon}, {"seed", r.seed},            {"n_defl", r.n_defl},
                   {"status", r.status},   {"wall_seconds", r.wall_seconds},
                   {"work_total", r.work_total}, {"work_eigensolver", r.work_eigensolver},
                   {"estimate", {r.estimate.real(), r.estimate.imag()}}};
  if (r.exact) j["exact"] = *r.exact;
  if (r.rel_error) j["rel_error"] = *r.rel_error;
  if (r.result) {
    const EstimateResult& e = *r.result;
    j["tau"] = e.tau;
    nlohmann::json cats;
    for (std::size_t c = 0; c < kWorkCategoryCount; ++c) {
      const auto cat = static_cast<WorkCategory>(c);
      if (e.ledger.work_units(cat)) cats[std::string(to_string(cat))] = e.ledger.work_units(cat);
    }
    j["work_by_category"] = cats;
    if (e.direct_value) {
      j["direct_value"] = {e.direct_value->real(), e.direct_value->imag()};
      j["direct_cost"] = e.direct_cost;
    }
    j["levels"] = nlohmann::json::array();
    for (const auto& c : e.per_level)
      j["levels"].push_back({{"mean", {c.mean.real(), c.mean.imag()}},
                             {"variance", c.sample_variance},
                             {"n_samples", c.n_samples},
                             {"work", c.cost},
                             {"target", c.target}});
  }
  return j;
}

/// Appends one invocation (config, hierarchies, per-run details) to
/// <csv stem>.json next to the CSV.
inline void append_manifest(const std::filesystem::path& csv_path, const ExperimentConfig& cfg,
                            const nlohmann::json& hierarchies, const std::vector<RunRecord>& rows) {
  std::filesystem::path mp = csv_path;
  mp.replace_extension(".json");
  nlohmann::json doc = {{"invocations", nlohmann::json::array()}};
  if (std::filesystem::exists(mp)) {
    std::ifstream in(mp);
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error("manifest " + mp.string() + " is not valid JSON: " + e.what());
    }
  }
  nlohmann::json inv{{"config", config_to_json(cfg)}, {"hierarchies", hierarchies}, {"runs", nlohmann::json::array()}};
  for (const auto& r : rows) inv["runs"].push_back(record_to_json(r));
  doc["invocations"].push_back(std::move(inv));
  const std::filesystem::path tmp = mp.string() + ".tmp";
  {
    std::ofstream os(tmp);
    require(static_cast<bool>(os), "cannot write " + tmp.string());
    os << doc.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, mp);
}

struct RunSummary {
  std::vector<RunRecord> records;
  nlohmann::json hierarchies = nlohmann::json::array();
  [[nodiscard]] bool all_ok() const {
    for (const auto& r : records)
      if (!r.ok()) return false;
    return true;
  }
};

/// Every (N, n_defl, ε, method, seed) cell of the grid. A problem that fails
/// to build yields failure rows for all of its cells. Rows go to cfg.output
/// when it is set.
inline RunSummary run(const ExperimentConfig& cfg) {
  cfg.validate();
  RunSummary s;
  for (std::size_t N : cfg.Ns) {
    std::optional<Problem> p;
    std::string build_error;
    try {
      p.emplace(build_problem(cfg, N));
      nlohmann::json hj = hierarchy_manifest(*p->hierarchy);
      hj["N"] = N;
      hj["mlmc_levels"] = p->mlmc_levels;
      hj["setup_work"] = p->setup.work_units();
      s.hierarchies.push_back(std::move(hj));
    } catch (const std::exception& e) {
      build_error = e.what();
    }
    for (std::size_t k : cfg.n_defls) {
      for (double eps : cfg.epsilons) {
        for (const auto& method : cfg.methods) {
          // Only deflated runs depend on n_defl; other methods run once per ε.
          if (method != "deflated" && k != cfg.n_defls.front()) continue;
          for (std::uint64_t seed : cfg.seeds) {
            if (p) {
              s.records.push_back(run_cell(cfg, *p, method, eps, k, seed));
            } else {
              RunRecord r;
              r.method = method;
              r.family = cfg.family;
              r.N = N;
              r.m = cfg.family == "schwinger" ? cfg.m : 0.0;
              r.beta = cfg.family == "laplace2d" ? 0.0 : cfg.beta;
              r.dist = to_string(cfg.dist);
              r.epsilon = eps;
              r.seed = seed;
              r.n_defl = method == "deflated" ? k : 0;
              r.status = "failed: " + build_error;
              s.records.push_back(std::move(r));
            }
          }
        }
      }
    }
  }
  if (!cfg.output.empty()) {
    append_csv_atomic(cfg.output, s.records);
    append_manifest(cfg.output, cfg, s.hierarchies, s.records);
  }
  return s;
}

}  // namespace mlmct
