#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlmct/costmodel.hpp"
#include "mlmct/experiment.hpp"
#include "mlmct/hierarchy_io.hpp"
#include "mlmct/matrix_market.hpp"

using namespace mlmct;
using nlohmann::json;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Flags shared by every subcommand. Unset flags leave the config file alone.
struct Overrides {
  std::string config;
  std::string family, dist, method, eps, N, seed, n_defl, weights;
  std::optional<double> beta, m, abs_tol;
  std::optional<std::size_t> levels, solver_levels, max_samples;
  std::optional<std::uint64_t> gauge_seed;
  std::optional<unsigned> workers;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON experiment config")->check(CLI::ExistingFile);
    app->add_option("--family", family, "laplace2d | gauge | schwinger");
    app->add_option("--N", N, "lattice extent, or a comma list for sweeps");
    app->add_option("--beta", beta, "gauge phase temperature");
    app->add_option("--m", m, "Schwinger mass shift");
    app->add_option("--gauge-seed", gauge_seed, "seed of the random gauge field");
    app->add_option("--levels", levels, "MLMC levels L");
    app->add_option("--solver-levels", solver_levels, "multigrid solver depth");
    app->add_option("--method", method, "plain, deflated, mlmc or exact (comma list for sweeps)");
    app->add_option("--eps", eps, "relative accuracy; comma list, fractional exponents allowed (1e-2.5)");
    app->add_option("--dist", dist, "rademacher | z4 | uniform-phase | gaussian");
    app->add_option("--seed", seed, "master seed, or a comma list");
    app->add_option("--n-defl", n_defl, "deflated eigenpairs (comma list for sweeps)");
    app->add_option("--weights", weights, "comma list of per-level weights summing to 1");
    app->add_option("--abs-tol", abs_tol, "absolute standard-error target instead of eps");
    app->add_option("--workers", workers, "sampling threads");
    app->add_option("--max-samples", max_samples, "sample budget per component");
    app->add_option("--out", out, "output path");
  }

  [[nodiscard]] json apply() const {
    json j = json::object();
    if (!config.empty()) {
      std::ifstream in(config);
      try {
        j = json::parse(in);
      } catch (const json::parse_error& e) {
        throw Error("config " + config + ": " + e.what());
      }
    }
    auto ints = [](const std::string& s) {
      json a = json::array();
      for (const auto& x : split_list(s)) a.push_back(std::stoull(x));
      return a;
    };
    if (!family.empty()) j["family"] = family;
    if (!N.empty()) j["N"] = ints(N);
    if (beta) j["beta"] = *beta;
    if (m) j["m"] = *m;
    if (gauge_seed) j["gauge_seed"] = *gauge_seed;
    if (levels) j["levels"] = *levels;
    if (solver_levels) j["solver_levels"] = *solver_levels;
    if (!method.empty()) j["methods"] = split_list(method);
    if (!eps.empty()) j["epsilon"] = split_list(eps);
    if (!dist.empty()) j["dist"] = dist;
    if (!seed.empty()) j["seeds"] = ints(seed);
    if (!n_defl.empty()) j["n_defl"] = ints(n_defl);
    if (!weights.empty()) {
      json a = json::array();
      for (const auto& x : split_list(weights)) a.push_back(std::stod(x));
      j["weights"] = a;
    }
    if (abs_tol) j["abs_tol"] = *abs_tol;
    if (workers) j["workers"] = *workers;
    if (max_samples) j["max_samples"] = *max_samples;
    return j;
  }

  [[nodiscard]] ExperimentConfig config_value() const {
    try {
      return config_from_json(apply());
    } catch (const std::invalid_argument&) {
      throw Error("malformed numeric list in command-line flags");
    }
  }
};

int cmd_generate(const Overrides& o) {
  const ExperimentConfig c = o.config_value();
  if (o.out.empty()) throw Error("generate: --out <file.mtx> is required");
  const std::size_t N = c.Ns.front();
  const SparseMatrix A = generate_operator(c.family, N, c.beta, c.m, c.gauge_seed);
  write_matrix_market(o.out, A);
  std::filesystem::path side(o.out);
  side.replace_extension(".json");
  json s{{"family", c.family}, {"N", N}, {"beta", c.beta}, {"m", c.m}, {"seed", c.gauge_seed},
         {"rows", A.rows()},   {"nnz", A.nnz()}};
  std::ofstream(side) << s.dump(2) << '\n';
  if (c.family == "schwinger") {
    const SpectrumProbe p = probe_leftmost_spectrum(A, c.gauge_seed);
    if (!p.right_half_plane)
      std::cerr << "warning: leftmost spectrum estimate " << p.min_real_estimate
                << " is not in the right half plane\n";
  }
  std::printf("wrote %s (%zu x %zu, nnz %zu) and %s\n", o.out.c_str(), A.rows(), A.cols(), A.nnz(),
              side.string().c_str());
  return 0;
}

int cmd_hierarchy(const Overrides& o, bool matrices) {
  const ExperimentConfig c = o.config_value();
  const Problem p = build_problem(c, c.Ns.front());
  json man = hierarchy_manifest(*p.hierarchy);
  man["N"] = p.N;
  man["family"] = c.family;
  man["mlmc_levels"] = p.mlmc_levels;
  man["setup_work"] = p.setup.work_units();
  if (!o.out.empty()) {
    dump_hierarchy(*p.hierarchy, o.out, matrices);
    std::ofstream(std::filesystem::path(o.out) / "manifest.json") << man.dump(2) << '\n';
  }
  std::printf("%-6s %10s %10s\n", "level", "size", "nnz");
  for (std::size_t l = 0; l < p.hierarchy->num_levels(); ++l)
    std::printf("%-6zu %10zu %10zu\n", l + 1, p.hierarchy->size(l), p.hierarchy->A(l).nnz());
  std::printf("kind %s, orthonormal %s, MLMC levels %zu\n", to_string(p.hierarchy->kind()).c_str(),
              p.hierarchy->orthonormal() ? "yes" : "no", p.mlmc_levels);
  return 0;
}

int cmd_trace_exact(const Overrides& o) {
  const ExperimentConfig c = o.config_value();
  const std::size_t N = c.Ns.front();
  if (c.family == "laplace2d") {
    std::printf("%.10f\n", exact_trace_inv_laplace2d(N));
    return 0;
  }
  const SparseMatrix A = generate_operator(c.family, N, c.beta, c.m, c.gauge_seed);
  if (A.rows() > 8192) throw Error("trace-exact: n = " + std::to_string(A.rows()) + " is too large for a dense inverse");
  CostLedger scratch;
  const Complex t = dense_invert(to_dense(A), scratch).trace();
  if (c.family == "gauge")
    std::printf("%.10f\n", t.real());
  else
    std::printf("%.10f %.10f\n", t.real(), t.imag());
  return 0;
}

int cmd_run(const Overrides& o, bool single) {
  ExperimentConfig c = o.config_value();
  if (single) {
    if (c.methods.size() != 1 || c.Ns.size() != 1 || c.epsilons.size() != 1)
      throw Error("estimate: give exactly one method, N and eps (use sweep for grids)");
  }
  if (!o.out.empty()) c.output = o.out;
  const RunSummary s = run(c);
  if (c.output.empty()) write_csv(std::cout, s.records);
  for (const auto& r : s.records) {
    if (!r.ok()) std::cerr << r.method << " N=" << r.N << " seed=" << r.seed << ": " << r.status << '\n';
  }
  return s.all_ok() ? 0 : 1;
}

int cmd_report(const std::string& path) {
  const std::vector<RunRecord> rs = read_csv(path);
  // Scaling fits per (family, N, method).
  std::map<std::tuple<std::string, std::size_t, std::string>, std::vector<RunRecord>> groups;
  for (const auto& r : rs)
    if (r.ok() && r.method != "exact") groups[{r.family, r.N, r.method}].push_back(r);
  std::printf("scaling fits: slope of log(work) vs log(1/eps), eps <= 1e-2\n");
  for (const auto& [key, g] : groups) {
    const auto& [fam, N, method] = key;
    try {
      std::printf("  %-10s N=%-5zu %-9s slope %.3f\n", fam.c_str(), N, method.c_str(), scaling_fit(g));
    } catch (const Error& e) {
      std::printf("  %-10s N=%-5zu %-9s (%s)\n", fam.c_str(), N, method.c_str(), e.what());
    }
  }
  // Ratios against MLMC, averaging work over seeds.
  std::map<std::tuple<std::string, std::size_t, double, std::string>, std::pair<double, int>> mean_work;
  for (const auto& r : rs) {
    if (!r.ok() || r.method == "exact") continue;
    const std::string m = r.method == "deflated" ? "deflated(" + std::to_string(r.n_defl) + ")" : r.method;
    auto& [sum, n] = mean_work[{r.family, r.N, r.epsilon, m}];
    sum += static_cast<double>(r.work_total);
    ++n;
  }
  std::printf("work relative to mlmc (mean over seeds, eigensolver excluded)\n");
  for (const auto& [key, v] : mean_work) {
    const auto& [fam, N, eps, m] = key;
    if (m == "mlmc") continue;
    const auto it = mean_work.find({fam, N, eps, "mlmc"});
    if (it == mean_work.end()) continue;
    std::printf("  %-10s N=%-5zu eps=%-10.4g %-14s %.3f\n", fam.c_str(), N, eps, m.c_str(),
                (v.first / v.second) / (it->second.first / it->second.second));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel Monte-Carlo trace estimation experiments"};
  app.require_subcommand(1);

  Overrides gen, hier, exact, est, sweep;
  bool no_matrices = false;
  std::string report_csv;

  gen.attach(app.add_subcommand("generate", "write a test matrix (Matrix Market) and JSON sidecar"));
  auto* h = app.add_subcommand("hierarchy", "build a multigrid hierarchy and dump it");
  hier.attach(h);
  h->add_flag("--no-matrices", no_matrices, "write only the manifest");
  exact.attach(app.add_subcommand("trace-exact", "print tr(A^-1) from the analytic or dense oracle"));
  est.attach(app.add_subcommand("estimate", "run one estimator and emit CSV rows"));
  sweep.attach(app.add_subcommand("sweep", "run a grid over eps, N, n_defl and seeds"));
  auto* rep = app.add_subcommand("report", "scaling fits and method ratios from a results CSV");
  rep->add_option("csv", report_csv, "results CSV")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("generate")) return cmd_generate(gen);
    if (app.got_subcommand("hierarchy")) return cmd_hierarchy(hier, !no_matrices);
    if (app.got_subcommand("trace-exact")) return cmd_trace_exact(exact);
    if (app.got_subcommand("estimate")) return cmd_run(est, true);
    if (app.got_subcommand("sweep")) return cmd_run(sweep, false);
    if (app.got_subcommand("report")) return cmd_report(report_csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
