#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mlmct/multigrid.hpp"
#include "mlmct/sampling.hpp"
#include "mlmct/solvers.hpp"
#include "mlmct/sparse.hpp"
#include "mlmct/spectral.hpp"

namespace mlmct {

/// Statistics of one stochastic component (a plain estimate or one level
/// difference of a multilevel estimate).
struct ComponentEstimate {
  Complex mean{};
  double sample_variance = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t cost = 0;
  double target = 0.0;  // standard-error target it was run to

  [[nodiscard]] double standard_error() const {
    return n_samples >= 2 ? std::sqrt(sample_variance / static_cast<double>(n_samples)) : 0.0;
  }
};

struct EstimateResult {
  Complex mean{};
  double sample_variance = 0.0;  // variance of the total estimator times n for plain runs; see per_level for MLMC
  std::size_t n_samples = 0;
  CostLedger ledger;              // every unit charged by the estimate
  double tau = 0.0;               // pilot scale used for relative targets, 0 in absolute mode
  std::vector<ComponentEstimate> per_level;  // MLMC level differences, finest first
  std::optional<Complex> direct_value;       // exact part: coarsest trace or deflated eigenvalue sum
  std::uint64_t direct_cost = 0;

  [[nodiscard]] std::uint64_t cost() const { return ledger.work_units(); }
  [[nodiscard]] double standard_error() const {
    if (per_level.empty())
      return n_samples >= 2 ? std::sqrt(sample_variance / static_cast<double>(n_samples)) : 0.0;
    double v = 0.0;
    for (const auto& c : per_level) v += c.standard_error() * c.standard_error();
    return std::sqrt(v);
  }
};

/// The sample budget was exhausted before the target was met.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(const std::string& what, EstimateResult partial) : Error(what), partial_(std::move(partial)) {}
  [[nodiscard]] const EstimateResult& partial() const noexcept { return partial_; }

 private:
  EstimateResult partial_;
};

/// A linear operator applied to a vector, charging its own work.
using LinearOperator = std::function<Vector(std::span<const Complex>, CostLedger&)>;

/// x* (op x).
inline Complex quadratic_sample(const LinearOperator& op, std::span<const Complex> x, CostLedger& ledger) {
  const Vector y = op(x, ledger);
  require_dims(y.size() == x.size(), "quadratic_sample: operator output length differs from input");
  return dot(x, y);
}

inline LinearOperator sparse_operator(const SparseMatrix& A) {
  return [&A](std::span<const Complex> x, CostLedger& l) { return spmv(A, x, l); };
}

/// x ↦ A_ℓ⁻¹ x through the multigrid solver.
inline LinearOperator inverse_operator(const MultigridSolver& solver, std::size_t level = 0) {
  return [&solver, level](std::span<const Complex> x, CostLedger& l) { return solver.solve(level, x, l).first; };
}

/// τ from exactly five pilot samples of x*(op)x drawn from stream `stream`.
inline double estimate_tau(const LinearOperator& op, std::size_t n, Distribution dist, std::uint64_t seed,
                           std::uint64_t stream = 0) {
  std::vector<Complex> pilot;
  CostLedger scratch;
  for (std::uint64_t i = 0; i < 5; ++i) {
    auto rng = sample_rng(seed, stream, i);
    const Vector x = draw_vector(n, dist, rng);
    pilot.push_back(quadratic_sample(op, x, scratch));
  }
  return tau_from_pilot(pilot);
}

namespace detail {

/// Runs one stochastic component: pilot (if a relative target still needs
/// τ), then sampling to the target. `shift` is added to every sample before
/// τ is formed (the exactly known part of the estimate).
inline ComponentEstimate run_component(const SampleFn& f, const StoppingRule& rule, Complex shift, double& tau,
                                       CostLedger& ledger, const std::string& label) {
  RunningStats stats;
  CostLedger own;
  if (!rule.abs_tol && !rule.tau) {
    std::vector<Complex> pilot;
    StoppingRule pilot_rule = rule;
    pilot_rule.min_samples = 5;
    pilot_rule.max_samples = 5;
    sample_until(f, 0.0, pilot_rule, stats, own, &pilot);
    for (auto& p : pilot) p += shift;
    tau = tau_from_pilot(pilot);
  } else if (rule.tau) {
    tau = *rule.tau;
  }
  const double target = rule.abs_tol ? *rule.abs_tol : rule.epsilon * tau;
  const bool ok = sample_until(f, target, rule, stats, own);
  ledger.merge(own);
  ComponentEstimate c{stats.mean(), stats.variance(), stats.count(), own.work_units(), target};
  if (!ok) {
    EstimateResult partial;
    partial.mean = c.mean + shift;
    partial.sample_variance = c.sample_variance;
    partial.n_samples = c.n_samples;
    partial.ledger = ledger;
    partial.tau = tau;
    throw BudgetExceeded(label + ": sample budget of " + std::to_string(rule.max_samples) +
                             " exhausted (standard error " + std::to_string(stats.standard_error()) + " > target " +
                             std::to_string(target) + ")",
                         partial);
  }
  return c;
}

}  // namespace detail

/// Plain Hutchinson estimate of tr(op) with samples from stream 0 of `seed`.
/// In relative mode the first five samples form the pilot for τ and are kept.
inline EstimateResult hutchinson(const LinearOperator& op, std::size_t n, Distribution dist, const StoppingRule& rule,
                                 std::uint64_t seed) {
  rule.validate();
  const SampleFn f = [&](std::uint64_t i, CostLedger& l) {
    auto rng = sample_rng(seed, 0, i);
    const Vector x = draw_vector(n, dist, rng);
    return quadratic_sample(op, x, l);
  };
  EstimateResult r;
  const ComponentEstimate c = detail::run_component(f, rule, Complex{}, r.tau, r.ledger, "hutchinson");
  r.mean = c.mean;
  r.sample_variance = c.sample_variance;
  r.n_samples = c.n_samples;
  return r;
}

// ---------------------------------------------------------------------------
// Enumeration oracle

struct PopulationMoments {
  Complex mean{};
  double variance = 0.0;
};

/// Exact mean and variance of x*Ax over every vector of the distribution's
/// support: 2ⁿ sign vectors (n ≤ 8) or 4ⁿ Z4 vectors (n ≤ 4).
inline PopulationMoments enumerate_variance(const DenseMatrix& A, Distribution dist) {
  require_dims(A.square(), "enumerate_variance: matrix must be square");
  const std::size_t n = A.rows();
  std::size_t base = 0;
  if (dist == Distribution::rademacher) {
    require(n <= 8, "enumerate_variance: rademacher enumeration limited to n <= 8");
    base = 2;
  } else if (dist == Distribution::z4) {
    require(n <= 4, "enumerate_variance: z4 enumeration limited to n <= 4");
    base = 4;
  } else {
    throw Error("enumerate_variance: only rademacher and z4 have finite support");
  }
  static constexpr std::array<Complex, 4> kSupport{Complex(1, 0), Complex(-1, 0), Complex(0, 1), Complex(0, -1)};
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= base;
  std::vector<Complex> vals(total);
  Vector x(n);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = kSupport[c % base];
      c /= base;
    }
    vals[code] = dot(x, matvec(A, x));
  }
  PopulationMoments m;
  for (auto v : vals) m.mean += v;
  m.mean /= static_cast<double>(total);
  for (auto v : vals) m.variance += std::norm(v - m.mean);
  m.variance /= static_cast<double>(total);
  return m;
}

// ---------------------------------------------------------------------------
// Deflation

/// Orthonormal eigenvector columns U (n x k) with eigenvalues ascending.
struct DeflationBasis {
  DenseMatrix U;
  std::vector<double> eigenvalues;

  [[nodiscard]] std::size_t size() const noexcept { return eigenvalues.size(); }
};

/// x - U(U*x), charged 2·n·k.
inline Vector project_out(const DeflationBasis& basis, std::span<const Complex> x, CostLedger& ledger) {
  const std::size_t n = x.size();
  const std::size_t k = basis.size();
  Vector out(x.begin(), x.end());
  if (k == 0) return out;
  require_dims(basis.U.rows() == n && basis.U.cols() == k, "project_out: basis shape mismatch");
  std::vector<Complex> c(k);
  for (std::size_t i = 0; i < n; ++i) {
    const Complex* row = &basis.U(i, 0);
    for (std::size_t j = 0; j < k; ++j) c[j] += std::conj(row[j]) * x[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Complex* row = &basis.U(i, 0);
    Complex s{};
    for (std::size_t j = 0; j < k; ++j) s += row[j] * c[j];
    out[i] -= s;
  }
  ledger.charge(2 * static_cast<std::uint64_t>(n) * k, WorkCategory::projection);
  return out;
}

struct EigensolverOptions {
  std::size_t oversample = 0;  // 0 picks max(8, k/2)
  int max_outer = 200;
  double solve_rtol = 1e-11;
};

/// k smallest eigenpairs of a Hermitian positive definite A by block inverse
/// subspace iteration with multigrid solves and Rayleigh-Ritz. Converged
/// when every wanted residual ‖Au - λu‖₂ ≤ 1e-8‖A‖₁. Work goes to `ledger`.
inline DeflationBasis smallest_eigenpairs(const SparseMatrix& A, std::size_t k, const MultigridSolver& solver,
                                          CostLedger& ledger, std::uint64_t seed = 12345,
                                          EigensolverOptions opts = {}) {
  require_dims(A.square(), "smallest_eigenpairs: matrix must be square");
  require_dims(solver.hierarchy().size(0) == A.rows(), "smallest_eigenpairs: solver does not match A");
  const std::size_t n = A.rows();
  DeflationBasis out;
  out.U = DenseMatrix(n, k);
  if (k == 0) return out;
  require(k <= n, "smallest_eigenpairs: k exceeds matrix size");
  const std::size_t p = std::min(n, k + (opts.oversample ? opts.oversample : std::max<std::size_t>(8, k / 2)));
  const double tol = 1e-8 * norm1(A);
  const auto ni = static_cast<Eigen::Index>(n);
  const auto pi = static_cast<Eigen::Index>(p);

  EigenMatrix X(ni, pi);
  {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    for (Eigen::Index j = 0; j < pi; ++j)
      for (Eigen::Index i = 0; i < ni; ++i) X(i, j) = Complex(nd(rng), nd(rng));
  }
  auto apply_A = [&](const EigenMatrix& Y) {
    EigenMatrix AY(ni, Y.cols());
    Vector col(n), res(n);
    for (Eigen::Index j = 0; j < Y.cols(); ++j) {
      for (Eigen::Index i = 0; i < ni; ++i) col[static_cast<std::size_t>(i)] = Y(i, j);
      spmv_into(A, col, res);
      ledger.charge(A.nnz(), WorkCategory::matvec);
      for (Eigen::Index i = 0; i < ni; ++i) AY(i, j) = res[static_cast<std::size_t>(i)];
    }
    return AY;
  };

  Vector col(n);
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    // Y = A⁻¹ X, orthonormalised.
    EigenMatrix Y(ni, pi);
    for (Eigen::Index j = 0; j < pi; ++j) {
      for (Eigen::Index i = 0; i < ni; ++i) col[static_cast<std::size_t>(i)] = X(i, j);
      const Vector y = solver.solve(0, col, ledger, opts.solve_rtol).first;
      for (Eigen::Index i = 0; i < ni; ++i) Y(i, j) = y[static_cast<std::size_t>(i)];
    }
    Eigen::HouseholderQR<EigenMatrix> qr(Y);
    const EigenMatrix Q = qr.householderQ() * EigenMatrix::Identity(ni, pi);
    // Rayleigh-Ritz on span(Q).
    const EigenMatrix AQ = apply_A(Q);
    EigenMatrix H = Q.adjoint() * AQ;
    H = 0.5 * (H + H.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<EigenMatrix> es(H);
    X = Q * es.eigenvectors();
    const EigenMatrix AX = AQ * es.eigenvectors();
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      worst = std::max(worst, (AX.col(jj) - es.eigenvalues()(jj) * X.col(jj)).norm());
    }
    if (worst <= tol) {
      for (std::size_t j = 0; j < k; ++j) {
        out.eigenvalues.push_back(es.eigenvalues()(static_cast<Eigen::Index>(j)));
        for (std::size_t i = 0; i < n; ++i) out.U(i, j) = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
      return out;
    }
  }
  throw NotConverged("smallest_eigenpairs: " + std::to_string(k) + " eigenpairs did not converge in " +
                         std::to_string(opts.max_outer) + " outer iterations",
                     0.0);
}

/// Hutchinson on A⁻¹(I - UU*) plus Σ 1/λ_i for the deflated part. Samples use
/// stream 0, so an empty basis reproduces plain hutchinson on A⁻¹.
inline EstimateResult deflated_hutchinson(const MultigridSolver& solver, const DeflationBasis& basis,
                                          Distribution dist, const StoppingRule& rule, std::uint64_t seed) {
  rule.validate();
  const std::size_t n = solver.hierarchy().size(0);
  Complex deflated_part{};
  for (double lam : basis.eigenvalues) deflated_part += 1.0 / lam;
  const SampleFn f = [&](std::uint64_t i, CostLedger& l) {
    auto rng = sample_rng(seed, 0, i);
    const Vector x = draw_vector(n, dist, rng);
    const Vector xp = project_out(basis, x, l);
    const Vector y = solver.solve(0, xp, l).first;
    return dot(x, y);
  };
  EstimateResult r;
  const ComponentEstimate c = detail::run_component(f, rule, deflated_part, r.tau, r.ledger, "deflated hutchinson");
  r.mean = c.mean + deflated_part;
  r.sample_variance = c.sample_variance;
  r.n_samples = c.n_samples;
  if (basis.size() > 0) r.direct_value = deflated_part;
  return r;
}

// ---------------------------------------------------------------------------
// Multilevel Monte-Carlo

enum class DifferenceForm { automatic, full, reduced };

/// One sample of level difference ℓ (0-based, ℓ < L-1) for test vector x.
/// Full form, x ∈ Cⁿ: x*(P̂_ℓA_ℓ⁻¹R̂_ℓ - P̂_{ℓ+1}A_{ℓ+1}⁻¹R̂_{ℓ+1})x, evaluated as
/// x* P̂_ℓ(y_ℓ - P_ℓ y_{ℓ+1}) with y_ℓ = A_ℓ⁻¹R̂_ℓx and y_{ℓ+1} = A_{ℓ+1}⁻¹R_ℓR̂_ℓx.
/// Reduced form (requires R̂_ℓP̂_ℓ = I), x ∈ C^{n_ℓ}: x*(A_ℓ⁻¹ - P_ℓA_{ℓ+1}⁻¹R_ℓ)x.
inline Complex level_difference_apply(const MultigridSolver& solver, std::size_t level, std::span<const Complex> x,
                                      CostLedger& ledger, DifferenceForm form = DifferenceForm::automatic) {
  const Hierarchy& h = solver.hierarchy();
  require(level + 1 < h.num_levels(), "level_difference_apply: level has no coarser partner");
  const bool reduced = form == DifferenceForm::reduced || (form == DifferenceForm::automatic && h.orthonormal());
  if (reduced) {
    require(h.orthonormal(), "level_difference_apply: reduced form needs orthonormal transfers");
    require_dims(x.size() == h.size(level), "level_difference_apply: reduced form needs x of level size");
    Vector y = solver.solve(level, x, ledger).first;
    const Vector z = spmv(h.R(level), x, ledger, WorkCategory::transfer);
    const Vector yc = solver.solve(level + 1, z, ledger).first;
    const Vector w = spmv(h.P(level), yc, ledger, WorkCategory::transfer);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= w[i];
    return dot(x, y);
  }
  require_dims(x.size() == h.size(0), "level_difference_apply: full form needs x of finest size");
  const Vector zl = level == 0 ? Vector(x.begin(), x.end()) : spmv(h.R_hat(level), x, ledger, WorkCategory::transfer);
  Vector yl = solver.solve(level, zl, ledger).first;
  const Vector zc = spmv(h.R(level), zl, ledger, WorkCategory::transfer);
  const Vector yc = solver.solve(level + 1, zc, ledger).first;
  const Vector w = spmv(h.P(level), yc, ledger, WorkCategory::transfer);
  for (std::size_t i = 0; i < yl.size(); ++i) yl[i] -= w[i];
  if (level == 0) return dot(x, yl);
  return dot(x, spmv(h.P_hat(level), yl, ledger, WorkCategory::transfer));
}

inline constexpr std::size_t kDefaultDenseCap = 4096;

/// tr(P̂_L A_L⁻¹ R̂_L) for 0-based level `level`, computed as tr(A_L⁻¹ (R̂_L P̂_L))
/// via dense inversion. With orthonormal transfers R̂_LP̂_L = I and this is tr(A_L⁻¹).
inline Complex coarsest_direct_trace(const Hierarchy& h, std::size_t level, CostLedger& ledger,
                                     std::size_t dense_cap = kDefaultDenseCap) {
  require(level < h.num_levels(), "coarsest_direct_trace: level out of range");
  const std::size_t nL = h.size(level);
  if (nL > dense_cap)
    throw Error("coarsest_direct_trace: level size " + std::to_string(nL) + " exceeds dense cap " +
                std::to_string(dense_cap) + "; use a deeper hierarchy");
  const DenseMatrix inv = dense_invert(to_dense(h.A(level)), ledger);
  if (level == 0 || h.orthonormal()) return inv.trace();
  const SparseMatrix RP = multiply(h.R_hat(level), h.P_hat(level), ledger);
  return trace_product(inv, RP, ledger);
}

struct MlmcOptions {
  std::size_t levels = 0;  // L used by the decomposition; 0 means every hierarchy level
  DifferenceForm form = DifferenceForm::automatic;
  std::size_t dense_cap = kDefaultDenseCap;
};

/// Multilevel estimate of tr(A⁻¹): Hutchinson on each level difference
/// ℓ = 0..L-2 to standard error ρ_ℓ = sqrt(w_ℓ)·ε·τ (or sqrt(w_ℓ)·abs_tol), at
/// least min_samples each, plus the coarsest term computed directly. Level
/// difference ℓ draws its samples from stream ℓ+1.
///
/// In relative mode τ comes from five pilot samples per level difference,
/// combined into five pilot totals (with the direct term added); the pilot
/// samples are kept in the estimate.
inline EstimateResult mlmc_trace(const MultigridSolver& solver, Distribution dist, const StoppingRule& rule,
                                 std::uint64_t seed, const MlmcOptions& opts = {}) {
  rule.validate();
  const Hierarchy& h = solver.hierarchy();
  const std::size_t L = opts.levels ? opts.levels : h.num_levels();
  require(L >= 1 && L <= h.num_levels(), "mlmc_trace: requested " + std::to_string(L) + " levels, hierarchy has " +
                                             std::to_string(h.num_levels()));
  const bool reduced =
      opts.form == DifferenceForm::reduced || (opts.form == DifferenceForm::automatic && h.orthonormal());
  const std::size_t D = L - 1;
  const std::vector<double> w = rule.level_weights(D);

  EstimateResult r;
  CostLedger direct;
  const Complex coarse = coarsest_direct_trace(h, L - 1, direct, opts.dense_cap);
  r.direct_value = coarse;
  r.direct_cost = direct.work_units();
  r.ledger.merge(direct);
  r.mean = coarse;
  if (D == 0) return r;

  std::vector<SampleFn> fns;
  for (std::size_t l = 0; l < D; ++l) {
    const std::size_t n = reduced ? h.size(l) : h.size(0);
    const DifferenceForm form = reduced ? DifferenceForm::reduced : DifferenceForm::full;
    fns.push_back([&solver, l, n, form, dist, seed](std::uint64_t i, CostLedger& led) {
      auto rng = sample_rng(seed, l + 1, i);
      const Vector x = draw_vector(n, dist, rng);
      return level_difference_apply(solver, l, x, led, form);
    });
  }

  std::vector<RunningStats> stats(D);
  std::vector<CostLedger> ledgers(D);
  double tau = 0.0;
  if (rule.abs_tol) {
    tau = 0.0;
  } else if (rule.tau) {
    tau = *rule.tau;
  } else {
    StoppingRule pilot_rule = rule;
    pilot_rule.min_samples = 5;
    pilot_rule.max_samples = 5;
    std::vector<Complex> totals(5, coarse);
    for (std::size_t l = 0; l < D; ++l) {
      std::vector<Complex> vals;
      sample_until(fns[l], 0.0, pilot_rule, stats[l], ledgers[l], &vals);
      for (std::size_t i = 0; i < 5; ++i) totals[i] += vals[i];
    }
    tau = tau_from_pilot(totals);
  }
  r.tau = tau;

  for (std::size_t l = 0; l < D; ++l) {
    const double target = std::sqrt(w[l]) * (rule.abs_tol ? *rule.abs_tol : rule.epsilon * tau);
    const bool ok = sample_until(fns[l], target, rule, stats[l], ledgers[l]);
    r.per_level.push_back({stats[l].mean(), stats[l].variance(), stats[l].count(), ledgers[l].work_units(), target});
    r.ledger.merge(ledgers[l]);
    r.mean += stats[l].mean();
    r.n_samples += stats[l].count();
    if (!ok)
      throw BudgetExceeded("mlmc_trace: sample budget exhausted on level difference " + std::to_string(l + 1) +
                               " (standard error " + std::to_string(stats[l].standard_error()) + " > target " +
                               std::to_string(target) + ")",
                           r);
  }
  double var = 0.0;
  for (const auto& c : r.per_level) var += c.standard_error() * c.standard_error();
  r.sample_variance = var;
  return r;
}

// ---------------------------------------------------------------------------
// Sample allocation

struct Allocation {
  std::vector<std::size_t> samples;
  double mu = 0.0;
  double predicted_cost = 0.0;  // Σ N_ℓ C_ℓ
  double minimal_cost = 0.0;    // ε⁻²(Σ sqrt(V_ℓ C_ℓ))²
};

/// N_ℓ = ceil(μ sqrt(V_ℓ/C_ℓ)), μ = ε⁻² Σ_k sqrt(V_k C_k), which minimises
/// Σ N_ℓ C_ℓ subject to Σ V_ℓ/N_ℓ ≤ ε².
inline Allocation optimal_allocation(std::span<const double> V, std::span<const double> C, double epsilon) {
  require_dims(V.size() == C.size(), "optimal_allocation: V and C differ in length");
  require(epsilon > 0.0, "optimal_allocation: epsilon must be positive");
  Allocation a;
  a.samples.assign(V.size(), 0);
  double s = 0.0;
  for (std::size_t l = 0; l < V.size(); ++l) {
    require(V[l] >= 0.0 && C[l] > 0.0, "optimal_allocation: need V >= 0 and C > 0");
    s += std::sqrt(V[l] * C[l]);
  }
  if (s == 0.0) return a;
  a.mu = s / (epsilon * epsilon);
  a.minimal_cost = s * s / (epsilon * epsilon);
  for (std::size_t l = 0; l < V.size(); ++l) {
    // Guard against ceil rounding an exact integer up through floating error.
    const double exact = a.mu * std::sqrt(V[l] / C[l]);
    const double nearest = std::round(exact);
    const double n = std::abs(exact - nearest) <= 1e-9 * std::max(1.0, nearest) ? nearest : std::ceil(exact);
    a.samples[l] = static_cast<std::size_t>(n);
    a.predicted_cost += n * C[l];
  }
  return a;
}

}  // namespace mlmct
