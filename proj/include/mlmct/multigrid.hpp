#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mlmct/generators.hpp"
#include "mlmct/smoother.hpp"
#include "mlmct/sparse.hpp"
#include "mlmct/spectral.hpp"

namespace mlmct {

/// Geometry of the unknowns on one level: an extent x extent lattice with
/// `dofs` unknowns per site. Spin-major ordering puts dof-major blocks of
/// extent² entries one after another; site-major interleaves the dofs.
struct LatticeShape {
  std::size_t extent = 0;
  std::size_t dofs = 1;
  bool spin_major = false;

  [[nodiscard]] std::size_t sites() const { return extent * extent; }
  [[nodiscard]] std::size_t size() const { return sites() * dofs; }
  [[nodiscard]] std::size_t index(std::size_t site, std::size_t dof) const {
    return spin_major ? dof * sites() + site : site * dofs + dof;
  }
};

/// One level of a hierarchy. Levels are numbered from 0 (finest). P maps
/// level ℓ+1 to level ℓ; P and R are absent on the coarsest level.
struct Level {
  SparseMatrix A;
  std::optional<SparseMatrix> P;
  std::optional<SparseMatrix> R;
  LatticeShape shape;
};

enum class HierarchyKind { geometric, aggregation };

inline std::string to_string(HierarchyKind k) { return k == HierarchyKind::geometric ? "geometric" : "aggregation"; }

/// P̂_ℓ = P_0⋯P_{ℓ-1} and R̂_ℓ = R_{ℓ-1}⋯R_0, with P̂_0 = R̂_0 = I.
struct AccumulatedTransfers {
  std::vector<SparseMatrix> P_hat;
  std::vector<SparseMatrix> R_hat;
};

inline AccumulatedTransfers accumulate_transfers(const std::vector<Level>& levels, CostLedger& ledger) {
  require(!levels.empty(), "accumulate_transfers: empty level list");
  AccumulatedTransfers acc;
  const std::size_t n = levels.front().A.rows();
  acc.P_hat.push_back(SparseMatrix::identity(n));
  acc.R_hat.push_back(SparseMatrix::identity(n));
  for (std::size_t l = 0; l + 1 < levels.size(); ++l) {
    require(levels[l].P && levels[l].R, "accumulate_transfers: missing transfer on level " + std::to_string(l));
    acc.P_hat.push_back(l == 0 ? *levels[0].P : multiply(acc.P_hat.back(), *levels[l].P, ledger));
    acc.R_hat.push_back(l == 0 ? *levels[0].R : multiply(*levels[l].R, acc.R_hat.back(), ledger));
  }
  return acc;
}

/// Largest entry of |R̂_ℓ P̂_ℓ - I| over all levels.
inline double max_transfer_orthonormality_defect(const AccumulatedTransfers& acc) {
  double worst = 0.0;
  CostLedger scratch;
  for (std::size_t l = 1; l < acc.P_hat.size(); ++l) {
    const SparseMatrix RP = multiply(acc.R_hat[l], acc.P_hat[l], scratch);
    worst = std::max(worst, max_abs_diff(RP, SparseMatrix::identity(RP.rows())));
  }
  return worst;
}

/// An immutable multigrid hierarchy with its accumulated transfer operators.
class Hierarchy {
 public:
  Hierarchy(std::vector<Level> levels, HierarchyKind kind, CostLedger& setup_ledger)
      : levels_(std::move(levels)), kind_(kind) {
    require(!levels_.empty(), "Hierarchy: need at least one level");
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const Level& lv = levels_[l];
      require_dims(lv.A.square(), "Hierarchy: A on level " + std::to_string(l) + " is not square");
      if (l + 1 < levels_.size()) {
        require(lv.P && lv.R, "Hierarchy: missing P/R on level " + std::to_string(l));
        require_dims(lv.P->rows() == lv.A.rows() && lv.P->cols() == levels_[l + 1].A.rows(),
                     "Hierarchy: P dimensions do not chain on level " + std::to_string(l));
        require_dims(lv.R->cols() == lv.A.rows() && lv.R->rows() == levels_[l + 1].A.rows(),
                     "Hierarchy: R dimensions do not chain on level " + std::to_string(l));
      } else {
        require(!lv.P && !lv.R, "Hierarchy: coarsest level must not carry transfers");
      }
    }
    acc_ = accumulate_transfers(levels_, setup_ledger);
    orthonormal_ = levels_.size() > 1 && max_transfer_orthonormality_defect(acc_) <= 1e-12;
  }

  [[nodiscard]] std::size_t num_levels() const noexcept { return levels_.size(); }
  [[nodiscard]] const Level& level(std::size_t l) const { return levels_.at(l); }
  [[nodiscard]] const std::vector<Level>& levels() const noexcept { return levels_; }
  [[nodiscard]] const SparseMatrix& A(std::size_t l) const { return levels_.at(l).A; }
  [[nodiscard]] const SparseMatrix& P(std::size_t l) const { return levels_.at(l).P.value(); }
  [[nodiscard]] const SparseMatrix& R(std::size_t l) const { return levels_.at(l).R.value(); }
  [[nodiscard]] const SparseMatrix& P_hat(std::size_t l) const { return acc_.P_hat.at(l); }
  [[nodiscard]] const SparseMatrix& R_hat(std::size_t l) const { return acc_.R_hat.at(l); }
  [[nodiscard]] HierarchyKind kind() const noexcept { return kind_; }
  /// True iff R̂_ℓ P̂_ℓ = I was verified (max-norm ≤ 1e-12) on every level.
  [[nodiscard]] bool orthonormal() const noexcept { return orthonormal_; }
  [[nodiscard]] std::size_t size(std::size_t l) const { return levels_.at(l).A.rows(); }

 private:
  std::vector<Level> levels_;
  AccumulatedTransfers acc_;
  HierarchyKind kind_;
  bool orthonormal_ = false;
};

/// A_c = R A P, formed as R (A P). Both products are charged.
inline SparseMatrix galerkin_coarse(const SparseMatrix& R, const SparseMatrix& A, const SparseMatrix& P,
                                    CostLedger& ledger) {
  require_dims(A.square() && P.rows() == A.cols() && R.cols() == A.rows() && R.rows() == P.cols(),
               "galerkin_coarse: dimension chain R A P is inconsistent");
  return multiply(R, multiply(A, P, ledger), ledger);
}

// ---------------------------------------------------------------------------
// Geometric coarsening

/// Bilinear interpolation from an N_coarse² Dirichlet grid to an N_fine² grid
/// with N_fine = 2 N_coarse + 1. Coarse point (I,J) sits at fine (2I+1, 2J+1).
inline SparseMatrix bilinear_prolongation(std::size_t N_fine, std::size_t N_coarse) {
  require(N_coarse >= 1 && N_fine == 2 * N_coarse + 1,
          "bilinear_prolongation: need N_fine = 2*N_coarse + 1 (got " + std::to_string(N_fine) + ", " +
              std::to_string(N_coarse) + ")");
  std::vector<Triplet> t;
  t.reserve(9 * N_coarse * N_coarse);
  const double w1d[3] = {0.5, 1.0, 0.5};
  for (std::size_t I = 0; I < N_coarse; ++I)
    for (std::size_t J = 0; J < N_coarse; ++J)
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b)
          t.push_back({site_index(2 * I + a, 2 * J + b, N_fine), site_index(I, J, N_coarse), w1d[a] * w1d[b]});
  return SparseMatrix::from_triplets(N_fine * N_fine, N_coarse * N_coarse, std::move(t));
}

/// Galerkin hierarchy with bilinear P_ℓ and R_ℓ = P_ℓ*. Every extent on the
/// way down must be odd and stay at least 3; N_{ℓ+1} = ⌊N_ℓ/2⌋.
inline Hierarchy build_geometric_hierarchy(const SparseMatrix& A, std::size_t N, std::size_t num_levels,
                                           CostLedger& setup_ledger) {
  require(num_levels >= 1, "build_geometric_hierarchy: need at least one level");
  require_dims(A.square() && A.rows() == N * N, "build_geometric_hierarchy: A is not N^2 x N^2");
  std::vector<Level> levels;
  levels.push_back({A, std::nullopt, std::nullopt, {N, 1, false}});
  std::size_t extent = N;
  for (std::size_t l = 1; l < num_levels; ++l) {
    const std::size_t coarse = extent / 2;
    require(extent % 2 == 1 && coarse >= 3,
            "build_geometric_hierarchy: " + std::to_string(num_levels) + " levels is too deep for N=" +
                std::to_string(N) + " (extent " + std::to_string(extent) + " cannot be halved)");
    SparseMatrix P = bilinear_prolongation(extent, coarse);
    SparseMatrix R = adjoint(P);
    SparseMatrix Ac = galerkin_coarse(R, levels.back().A, P, setup_ledger);
    levels.back().P = std::move(P);
    levels.back().R = std::move(R);
    levels.push_back({std::move(Ac), std::nullopt, std::nullopt, {coarse, 1, false}});
    extent = coarse;
  }
  return Hierarchy(std::move(levels), HierarchyKind::geometric, setup_ledger);
}

// ---------------------------------------------------------------------------
// Aggregation coarsening

/// Orthonormal aggregation prolongation. The fine lattice is cut into
/// aggregate_extent x aggregate_extent blocks of sites; on each block the
/// restriction of the test vectors is orthonormalised by column-pivoted QR.
/// With spin_blocks = 2 the dofs of a site are split into two halves (spins)
/// and each half is treated as its own aggregate, so P commutes with the spin
/// parity. Column k of spin block s at coarse site c is c·(d·spin_blocks) + s·d + k
/// (site-major), d = #test vectors.
inline SparseMatrix aggregation_prolongation(const LatticeShape& fine, std::size_t aggregate_extent,
                                             const std::vector<Vector>& test_vectors, std::size_t spin_blocks = 1) {
  const std::size_t d = test_vectors.size();
  require(d >= 1, "aggregation_prolongation: need at least one test vector");
  require(spin_blocks >= 1 && fine.dofs % spin_blocks == 0,
          "aggregation_prolongation: dofs per site not divisible by the number of spin blocks");
  const std::size_t dofs_per_block = fine.dofs / spin_blocks;
  require(aggregate_extent >= 1 && fine.extent % aggregate_extent == 0,
          "aggregation_prolongation: aggregate extent " + std::to_string(aggregate_extent) +
              " does not divide lattice extent " + std::to_string(fine.extent));
  for (const auto& v : test_vectors)
    require_dims(v.size() == fine.size(), "aggregation_prolongation: test vector length mismatch");
  const std::size_t Nc = fine.extent / aggregate_extent;
  const std::size_t rows_per_agg = aggregate_extent * aggregate_extent * dofs_per_block;
  require(rows_per_agg >= d, "aggregation_prolongation: aggregate has fewer unknowns than test vectors");

  std::vector<Triplet> t;
  t.reserve(fine.size() * d);
  std::vector<std::size_t> rows;
  rows.reserve(rows_per_agg);
  for (std::size_t I = 0; I < Nc; ++I) {
    for (std::size_t J = 0; J < Nc; ++J) {
      for (std::size_t sb = 0; sb < spin_blocks; ++sb) {
        rows.clear();
        for (std::size_t a = 0; a < aggregate_extent; ++a)
          for (std::size_t b = 0; b < aggregate_extent; ++b)
            for (std::size_t k = sb * dofs_per_block; k < (sb + 1) * dofs_per_block; ++k)
              rows.push_back(fine.index(site_index(I * aggregate_extent + a, J * aggregate_extent + b, fine.extent), k));
        EigenMatrix block(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
        for (std::size_t r = 0; r < rows.size(); ++r)
          for (std::size_t c = 0; c < d; ++c) block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = test_vectors[c][rows[r]];

        Eigen::ColPivHouseholderQR<EigenMatrix> qr(block);
        const EigenMatrix Rf = qr.matrixR().template triangularView<Eigen::Upper>();
        const double lead = std::abs(Rf(0, 0));
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(d); ++k) {
          if (!(std::abs(Rf(k, k)) >= 1e-12 * lead) || lead == 0.0)
            throw Error("aggregation_prolongation: test vectors are rank deficient on aggregate (" +
                        std::to_string(I) + "," + std::to_string(J) + ")");
        }
        EigenMatrix Q = qr.householderQ() * EigenMatrix::Identity(block.rows(), static_cast<Eigen::Index>(d));
        const std::size_t first_col = site_index(I, J, Nc) * d * spin_blocks + sb * d;
        for (std::size_t c = 0; c < d; ++c) {
          const Complex rkk = Rf(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
          const Complex phase = rkk / std::abs(rkk);
          for (std::size_t r = 0; r < rows.size(); ++r)
            t.push_back({rows[r], first_col + c, Q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * phase});
        }
      }
    }
  }
  return SparseMatrix::from_triplets(fine.size(), Nc * Nc * d * spin_blocks, std::move(t));
}

struct AggregationConfig {
  LatticeShape fine;                        // geometry of the finest operator
  std::vector<std::size_t> aggregate_extent;  // one per coarsening step
  std::vector<std::size_t> coarse_dofs;       // dofs per coarse site, one per coarsening step
  int candidate_sweeps = 5;
  int improvement_sweeps = 8;
  std::uint64_t seed = 0;
  // Split every test vector by spin (first and second half of each site's
  // dofs). coarse_dofs then counts both halves and must be even.
  bool spin_split = false;
  // Bootstrap passes: test vectors are pushed through V-cycles of the current
  // hierarchy and the hierarchy is rebuilt. See build_adaptive_hierarchy.
  int adaptive_passes = 0;
  int adaptive_cycles = 2;
};

namespace detail {

inline void orthonormalize(std::vector<Vector>& vs) {
  for (std::size_t k = 0; k < vs.size(); ++k) {
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t j = 0; j < k; ++j) axpy(-dot(vs[j], vs[k]), vs[j], vs[k]);
    const double nk = norm2(vs[k]);
    if (nk > 0.0)
      for (auto& v : vs[k]) v /= nk;
  }
}

}  // namespace detail

/// Test vectors for one coarsening step: seeded random starts relaxed with
/// Gauss-Seidel on A x = 0, then a second relaxation pass after the set has
/// been orthonormalised against itself.
inline std::vector<Vector> relaxed_test_vectors(const SparseMatrix& A, std::size_t count, int candidate_sweeps,
                                                int improvement_sweeps, std::uint64_t seed, CostLedger& ledger) {
  std::vector<Vector> vs(count, Vector(A.rows()));
  const Vector zero(A.rows());
  for (std::size_t k = 0; k < count; ++k) {
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * (k + 1));
    std::normal_distribution<double> nd;
    for (auto& v : vs[k]) v = Complex(nd(rng), nd(rng));
    for (int s = 0; s < candidate_sweeps; ++s) gauss_seidel_sweep(A, zero, vs[k], SweepOrder::forward, ledger);
  }
  detail::orthonormalize(vs);
  for (int s = 0; s < improvement_sweeps; ++s) {
    for (auto& v : vs)
      gauss_seidel_sweep(A, zero, v, s % 2 == 0 ? SweepOrder::forward : SweepOrder::backward, ledger);
    detail::orthonormalize(vs);
  }
  return vs;
}

/// Aggregation hierarchy with orthonormal P_ℓ and R_ℓ = P_ℓ*. When
/// `test_vectors` is given, its entry for a coarsening step is used instead of
/// fresh relaxed vectors; missing entries are relaxed and appended.
inline Hierarchy build_aggregation_hierarchy(const SparseMatrix& A, const AggregationConfig& cfg,
                                             CostLedger& setup_ledger,
                                             std::vector<std::vector<Vector>>* test_vectors = nullptr) {
  require(cfg.aggregate_extent.size() == cfg.coarse_dofs.size(),
          "build_aggregation_hierarchy: aggregate_extent and coarse_dofs must have equal length");
  require_dims(A.square() && A.rows() == cfg.fine.size(),
               "build_aggregation_hierarchy: operator size does not match lattice shape");
  std::vector<Level> levels;
  levels.push_back({A, std::nullopt, std::nullopt, cfg.fine});
  for (std::size_t step = 0; step < cfg.coarse_dofs.size(); ++step) {
    const Level& fine = levels.back();
    const std::size_t a = cfg.aggregate_extent[step];
    require(a >= 1 && fine.shape.extent % a == 0,
            "build_aggregation_hierarchy: aggregate extent " + std::to_string(a) + " does not divide lattice extent " +
                std::to_string(fine.shape.extent) + " on level " + std::to_string(step));
    const std::size_t blocks = cfg.spin_split ? 2 : 1;
    require(cfg.coarse_dofs[step] % blocks == 0 && fine.shape.dofs % blocks == 0,
            "build_aggregation_hierarchy: spin splitting needs even dof counts on level " + std::to_string(step));
    std::vector<Vector> tv;
    if (test_vectors && step < test_vectors->size()) {
      tv = (*test_vectors)[step];
    } else {
      tv = relaxed_test_vectors(fine.A, cfg.coarse_dofs[step] / blocks, cfg.candidate_sweeps, cfg.improvement_sweeps,
                                cfg.seed + 1000003ULL * (step + 1), setup_ledger);
      if (test_vectors) test_vectors->push_back(tv);
    }
    SparseMatrix P = aggregation_prolongation(fine.shape, a, tv, blocks);
    SparseMatrix R = adjoint(P);
    SparseMatrix Ac = galerkin_coarse(R, fine.A, P, setup_ledger);
    const LatticeShape coarse{fine.shape.extent / a, cfg.coarse_dofs[step], false};
    levels.back().P = std::move(P);
    levels.back().R = std::move(R);
    levels.push_back({std::move(Ac), std::nullopt, std::nullopt, coarse});
  }
  return Hierarchy(std::move(levels), HierarchyKind::aggregation, setup_ledger);
}

}  // namespace mlmct
