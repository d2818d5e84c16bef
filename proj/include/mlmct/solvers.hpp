#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mlmct/multigrid.hpp"
#include "mlmct/smoother.hpp"
#include "mlmct/sparse.hpp"

namespace mlmct {

enum class SolveMode { stationary, flexible_krylov };

struct SolveConfig {
  int nu_pre = 1;
  int nu_post = 1;
  double rtol = 1e-8;
  int max_iter = 200;
  SolveMode mode = SolveMode::stationary;
  int krylov_restart = 20;

  void validate() const {
    require(rtol > 0.0 && rtol < 1.0, "SolveConfig: rtol must lie in (0,1)");
    require(nu_pre >= 0 && nu_post >= 0, "SolveConfig: smoothing counts must be non-negative");
    require(max_iter >= 1, "SolveConfig: max_iter must be positive");
    require(krylov_restart >= 1, "SolveConfig: krylov_restart must be positive");
  }
};

struct SolveReport {
  int iterations = 0;
  double final_relres = 0.0;
  std::uint64_t cost_charged = 0;
};

/// Multigrid V-cycle over an immutable hierarchy. A solve started on level ℓ
/// uses levels ℓ..L-1 of the hierarchy; the deepest level is always solved
/// with a dense inverse computed once at construction.
///
/// The hierarchy must outlive the solver. Solves are const and may run
/// concurrently with private ledgers.
class MultigridSolver {
 public:
  MultigridSolver(const Hierarchy& h, SolveConfig cfg) : h_(&h), cfg_(cfg) {
    cfg_.validate();
    coarsest_inverse_ = dense_invert(to_dense(h.A(h.num_levels() - 1)), setup_);
  }

  [[nodiscard]] const Hierarchy& hierarchy() const noexcept { return *h_; }
  [[nodiscard]] const SolveConfig& config() const noexcept { return cfg_; }
  /// Work spent factoring the coarsest level; not part of any solve.
  [[nodiscard]] const CostLedger& setup_cost() const noexcept { return setup_; }
  [[nodiscard]] std::size_t deepest_level() const noexcept { return h_->num_levels() - 1; }

  /// Applies one V(nu_pre, nu_post) cycle on level `level` to x in place.
  void vcycle(std::size_t level, std::span<const Complex> b, std::span<Complex> x, CostLedger& ledger) const {
    require(level < h_->num_levels(), "vcycle: level out of range");
    require_dims(b.size() == h_->size(level) && x.size() == h_->size(level), "vcycle: vector length mismatch");
    if (level == deepest_level()) {
      coarse_solve(b, x, ledger);
      return;
    }
    const SparseMatrix& A = h_->A(level);
    for (int s = 0; s < cfg_.nu_pre; ++s) gauss_seidel_sweep(A, b, x, SweepOrder::forward, ledger);
    Vector r(A.rows());
    spmv_into(A, x, r);
    ledger.charge(A.nnz(), WorkCategory::residual);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    const Vector rc = spmv(h_->R(level), r, ledger, WorkCategory::transfer);
    Vector ec(rc.size());
    vcycle(level + 1, rc, ec, ledger);
    const Vector e = spmv(h_->P(level), ec, ledger, WorkCategory::transfer);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += e[i];
    for (int s = 0; s < cfg_.nu_post; ++s) gauss_seidel_sweep(A, b, x, SweepOrder::backward, ledger);
  }

  /// Solves A_ℓ x = b to ‖b - A_ℓx‖ ≤ rtol‖b‖ from a zero initial guess.
  /// Throws NotConverged after max_iter iterations.
  std::pair<Vector, SolveReport> solve(std::size_t level, std::span<const Complex> b, CostLedger& ledger) const {
    return solve(level, b, ledger, cfg_.rtol);
  }

  std::pair<Vector, SolveReport> solve(std::size_t level, std::span<const Complex> b, CostLedger& ledger,
                                       double rtol) const {
    require(level < h_->num_levels(), "solve: level out of range");
    require_dims(b.size() == h_->size(level), "solve: right-hand side length mismatch");
    const std::uint64_t before = ledger.work_units();
    Vector x(b.size());
    SolveReport rep;
    const double bnorm = norm2(b);
    if (bnorm == 0.0) return {std::move(x), rep};
    if (level == deepest_level()) {
      coarse_solve(b, x, ledger);
      rep.iterations = 1;
      rep.final_relres = relres(level, b, x, bnorm);
    } else if (cfg_.mode == SolveMode::stationary) {
      rep = stationary(level, b, x, bnorm, rtol, ledger);
    } else {
      rep = fgmres(level, b, x, bnorm, rtol, ledger);
    }
    rep.cost_charged = ledger.work_units() - before;
    return {std::move(x), rep};
  }

 private:
  void coarse_solve(std::span<const Complex> b, std::span<Complex> x, CostLedger& ledger) const {
    const Vector y = matvec(coarsest_inverse_, b);
    std::copy(y.begin(), y.end(), x.begin());
    ledger.charge(static_cast<std::uint64_t>(coarsest_inverse_.rows()) * coarsest_inverse_.cols(),
                  WorkCategory::coarse_solve);
  }

  // Uncharged residual norm, used only for reporting.
  double relres(std::size_t level, std::span<const Complex> b, std::span<const Complex> x, double bnorm) const {
    Vector r(b.size());
    spmv_into(h_->A(level), x, r);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    return norm2(r) / bnorm;
  }

  SolveReport stationary(std::size_t level, std::span<const Complex> b, std::span<Complex> x, double bnorm,
                         double rtol, CostLedger& ledger) const {
    const SparseMatrix& A = h_->A(level);
    Vector r(b.size());
    SolveReport rep;
    for (int it = 1; it <= cfg_.max_iter; ++it) {
      vcycle(level, b, x, ledger);
      spmv_into(A, x, r);
      ledger.charge(A.nnz(), WorkCategory::residual);
      for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
      rep.iterations = it;
      rep.final_relres = norm2(r) / bnorm;
      if (rep.final_relres <= rtol) return rep;
    }
    throw NotConverged("multigrid solve on level " + std::to_string(level) + " did not reach rtol " +
                           std::to_string(rtol) + " in " + std::to_string(cfg_.max_iter) + " iterations",
                       rep.final_relres);
  }

  // Restarted flexible GMRES with one V-cycle (zero initial guess) as the
  // right preconditioner.
  SolveReport fgmres(std::size_t level, std::span<const Complex> b, std::span<Complex> x, double bnorm, double rtol,
                     CostLedger& ledger) const {
    const SparseMatrix& A = h_->A(level);
    const std::size_t n = b.size();
    const auto m = static_cast<std::size_t>(cfg_.krylov_restart);
    SolveReport rep;
    std::vector<Vector> V(m + 1, Vector(n));
    std::vector<Vector> Z(m, Vector(n));
    std::vector<std::vector<Complex>> H(m + 1, std::vector<Complex>(m, Complex{}));
    std::vector<double> cs(m);
    std::vector<Complex> sn(m);
    std::vector<Complex> g(m + 1);
    Vector w(n);
    int total = 0;
    double res = 0.0;

    auto residual_into = [&](Vector& r) {
      spmv_into(A, x, r);
      ledger.charge(A.nnz(), WorkCategory::residual);
      for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    };

    residual_into(V[0]);
    res = norm2(V[0]);
    while (true) {
      rep.final_relres = res / bnorm;
      if (rep.final_relres <= rtol) break;
      if (total >= cfg_.max_iter)
        throw NotConverged("FGMRES on level " + std::to_string(level) + " did not reach rtol " +
                               std::to_string(rtol) + " in " + std::to_string(cfg_.max_iter) + " iterations",
                           rep.final_relres);
      for (auto& v : V[0]) v /= res;
      std::fill(g.begin(), g.end(), Complex{});
      g[0] = res;
      std::size_t j = 0;
      for (; j < m && total < cfg_.max_iter; ++j) {
        ++total;
        std::fill(Z[j].begin(), Z[j].end(), Complex{});
        vcycle(level, V[j], Z[j], ledger);
        spmv_into(A, Z[j], w);
        ledger.charge(A.nnz(), WorkCategory::matvec);
        for (std::size_t i = 0; i <= j; ++i) {
          H[i][j] = dot(V[i], w);
          axpy(-H[i][j], V[i], w);
        }
        const double hn = norm2(w);
        H[j + 1][j] = hn;
        if (hn > 0.0)
          for (std::size_t i = 0; i < n; ++i) V[j + 1][i] = w[i] / hn;
        for (std::size_t i = 0; i < j; ++i) {
          const Complex t = cs[i] * H[i][j] + sn[i] * H[i + 1][j];
          H[i + 1][j] = -std::conj(sn[i]) * H[i][j] + cs[i] * H[i + 1][j];
          H[i][j] = t;
        }
        // Givens rotation zeroing H[j+1][j].
        const Complex a = H[j][j];
        const double bb = std::abs(H[j + 1][j]);
        const double r = std::hypot(std::abs(a), bb);
        if (r == 0.0) {
          cs[j] = 1.0;
          sn[j] = 0.0;
        } else if (std::abs(a) == 0.0) {
          cs[j] = 0.0;
          sn[j] = std::conj(H[j + 1][j]) / bb;
        } else {
          cs[j] = std::abs(a) / r;
          sn[j] = (a / std::abs(a)) * std::conj(H[j + 1][j]) / r;
        }
        H[j][j] = cs[j] * H[j][j] + sn[j] * H[j + 1][j];
        H[j + 1][j] = 0.0;
        g[j + 1] = -std::conj(sn[j]) * g[j];
        g[j] = cs[j] * g[j];
        if (std::abs(g[j + 1]) / bnorm <= rtol || hn == 0.0) {
          ++j;
          break;
        }
      }
      // Back substitution on the j x j triangle, then x += Z y.
      std::vector<Complex> y(j);
      for (std::size_t ii = j; ii-- > 0;) {
        Complex s = g[ii];
        for (std::size_t k = ii + 1; k < j; ++k) s -= H[ii][k] * y[k];
        y[ii] = s / H[ii][ii];
      }
      for (std::size_t k = 0; k < j; ++k) axpy(y[k], Z[k], x);
      residual_into(V[0]);
      res = norm2(V[0]);
      rep.iterations = total;
    }
    rep.iterations = total;
    return rep;
  }

  const Hierarchy* h_;
  SolveConfig cfg_;
  DenseMatrix coarsest_inverse_;
  CostLedger setup_;
};

/// Aggregation hierarchy with cfg.adaptive_passes bootstrap passes. A pass
/// visits the coarsening steps finest first; step ℓ replaces its test vectors
/// by adaptive_cycles V(2,2) cycles on A_ℓ x = v from x = 0 (an inexact
/// inverse iteration towards the smallest eigenvectors), orthonormalises them
/// and rebuilds the hierarchy before the next step. All work is charged to
/// `setup_ledger`.
inline Hierarchy build_adaptive_hierarchy(const SparseMatrix& A, const AggregationConfig& cfg,
                                          CostLedger& setup_ledger) {
  std::vector<std::vector<Vector>> tv;
  Hierarchy h = build_aggregation_hierarchy(A, cfg, setup_ledger, &tv);
  SolveConfig sc;
  sc.nu_pre = sc.nu_post = 2;
  for (int pass = 0; pass < cfg.adaptive_passes; ++pass) {
    for (std::size_t step = 0; step < tv.size(); ++step) {
      {
        const MultigridSolver mg(h, sc);
        setup_ledger.merge(mg.setup_cost());
        for (auto& v : tv[step]) {
          Vector x(v.size());
          for (int c = 0; c < cfg.adaptive_cycles; ++c) mg.vcycle(step, v, x, setup_ledger);
          v = std::move(x);
        }
        detail::orthonormalize(tv[step]);
      }
      h = build_aggregation_hierarchy(A, cfg, setup_ledger, &tv);
    }
  }
  return h;
}

}  // namespace mlmct
