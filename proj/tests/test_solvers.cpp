#include <gtest/gtest.h>

#include <random>

#include "mlmct/generators.hpp"
#include "mlmct/multigrid.hpp"
#include "mlmct/smoother.hpp"
#include "mlmct/solvers.hpp"
#include "oracles.hpp"

using namespace mlmct;

namespace {

Vector random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Vector v(n);
  for (auto& x : v) x = Complex(nd(rng), nd(rng));
  return v;
}

double residual_norm(const SparseMatrix& A, const Vector& b, const Vector& x) {
  Vector r(b.size());
  spmv_into(A, x, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  return norm2(r);
}

}  // namespace

TEST(GaussSeidel, OneForwardSweepOnTwoByTwo) {
  std::vector<Triplet> t{{0, 0, 4.0}, {0, 1, -1.0}, {1, 0, -1.0}, {1, 1, 4.0}};
  const auto A = SparseMatrix::from_triplets(2, 2, t);
  Vector x(2);
  CostLedger l;
  gauss_seidel_sweep(A, Vector{3.0, 3.0}, x, SweepOrder::forward, l);
  EXPECT_NEAR(std::abs(x[0] - 0.75), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(x[1] - (3.0 + 0.75) / 4.0), 0.0, 1e-15);
  EXPECT_EQ(l.work_units(WorkCategory::smoothing), 4u);
  Vector y(2);
  gauss_seidel_sweep(A, Vector{3.0, 3.0}, y, SweepOrder::backward, l);
  EXPECT_NEAR(std::abs(y[1] - 0.75), 0.0, 1e-15);
}

TEST(GaussSeidel, ZeroDiagonalThrows) {
  const auto A = SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}});
  Vector x(2);
  CostLedger l;
  EXPECT_THROW(gauss_seidel_sweep(A, Vector{1.0, 1.0}, x, SweepOrder::forward, l), Error);
}

TEST(VCycle, ContractsLaplaceErrorByHalf) {
  const std::size_t N = 31;
  CostLedger setup;
  const auto h = build_geometric_hierarchy(gen_laplace2d(N), N, 3, setup);
  const MultigridSolver mg(h, SolveConfig{});
  const auto& A = h.A(0);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Vector b = random_vector(A.rows(), s);
    Vector x(A.rows());
    CostLedger l;
    double prev = residual_norm(A, b, x);
    for (int c = 0; c < 4; ++c) {
      mg.vcycle(0, b, x, l);
      const double r = residual_norm(A, b, x);
      EXPECT_LT(r, 0.5 * prev);
      prev = r;
    }
  }
}

TEST(Solve, StationaryReachesTolerance) {
  const std::size_t N = 31;
  CostLedger setup;
  const auto h = build_geometric_hierarchy(gen_laplace2d(N), N, 3, setup);
  SolveConfig cfg;
  cfg.rtol = 1e-10;
  const MultigridSolver mg(h, cfg);
  const Vector b = random_vector(h.size(0), 3);
  CostLedger l;
  const auto [x, rep] = mg.solve(0, b, l);
  EXPECT_LE(rep.final_relres, 1e-10);
  EXPECT_LE(residual_norm(h.A(0), b, x) / norm2(b), 1e-10);
  EXPECT_EQ(rep.cost_charged, l.work_units());
  EXPECT_GT(l.work_units(WorkCategory::coarse_solve), 0u);
  EXPECT_TRUE(l.balanced());
  EXPECT_GT(mg.setup_cost().work_units(WorkCategory::dense_inverse), 0u);
}

TEST(Solve, CoarseLevelSolveMatchesDenseOracle) {
  CostLedger setup;
  const auto h = build_geometric_hierarchy(gen_laplace2d(15), 15, 3, setup);
  const MultigridSolver mg(h, SolveConfig{});
  const Vector b = random_vector(h.size(1), 9);
  CostLedger l;
  const auto [x, rep] = mg.solve(1, b, l);
  Eigen::VectorXcd be(static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < b.size(); ++i) be(static_cast<Eigen::Index>(i)) = b[i];
  const Eigen::VectorXcd ref = oracle::inverse(oracle::dense(h.A(1))) * be;
  double err = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) err = std::max(err, std::abs(ref(static_cast<Eigen::Index>(i)) - x[i]));
  EXPECT_LT(err, 1e-7 * ref.cwiseAbs().maxCoeff());
}

TEST(Solve, ZeroRightHandSideIsFree) {
  CostLedger setup;
  const auto h = build_geometric_hierarchy(gen_laplace2d(15), 15, 2, setup);
  const MultigridSolver mg(h, SolveConfig{});
  CostLedger l;
  const auto [x, rep] = mg.solve(0, Vector(h.size(0)), l);
  EXPECT_EQ(norm2(x), 0.0);
  EXPECT_EQ(l.work_units(), 0u);
}

TEST(Solve, IterationCapThrowsNotConverged) {
  CostLedger setup;
  const auto h = build_geometric_hierarchy(gen_laplace2d(31), 31, 2, setup);
  SolveConfig cfg;
  cfg.max_iter = 1;
  cfg.rtol = 1e-12;
  const MultigridSolver mg(h, cfg);
  CostLedger l;
  try {
    mg.solve(0, random_vector(h.size(0), 1), l);
    FAIL() << "expected NotConverged";
  } catch (const NotConverged& e) {
    EXPECT_GT(e.final_relres(), 1e-12);
  }
}

TEST(Solve, FlexibleKrylovOnSchwinger) {
  const std::size_t N = 16;
  const auto S = gen_schwinger({N, 0.1, draw_gauge_field(N, 0.1, 4)});
  AggregationConfig ac;
  ac.fine = {N, 2, true};
  ac.aggregate_extent = {4, 4};
  ac.coarse_dofs = {4, 8};
  CostLedger setup;
  const auto h = build_aggregation_hierarchy(S, ac, setup);
  SolveConfig cfg;
  cfg.mode = SolveMode::flexible_krylov;
  cfg.nu_pre = cfg.nu_post = 2;
  cfg.rtol = 1e-10;
  const MultigridSolver mg(h, cfg);
  const Vector b = random_vector(S.rows(), 5);
  CostLedger l;
  const auto [x, rep] = mg.solve(0, b, l);
  EXPECT_LE(residual_norm(S, b, x) / norm2(b), 1e-9);
  EXPECT_LE(rep.final_relres, 1e-10);
}

TEST(Solve, FlexibleKrylovAgreesWithStationaryOnLaplace) {
  CostLedger setup;
  const auto h = build_geometric_hierarchy(gen_laplace2d(31), 31, 3, setup);
  SolveConfig a, b;
  a.rtol = b.rtol = 1e-11;
  b.mode = SolveMode::flexible_krylov;
  const MultigridSolver ma(h, a), mb(h, b);
  const Vector rhs = random_vector(h.size(0), 8);
  CostLedger l;
  const Vector xa = ma.solve(0, rhs, l).first;
  const Vector xb = mb.solve(0, rhs, l).first;
  double d = 0.0;
  for (std::size_t i = 0; i < xa.size(); ++i) d = std::max(d, std::abs(xa[i] - xb[i]));
  EXPECT_LT(d, 1e-8);
}

TEST(SolveConfig, ValidatesRanges) {
  SolveConfig c;
  c.rtol = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = SolveConfig{};
  c.nu_pre = -1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(AdaptiveSetup, BootstrapShrinksFinestDifferenceVariance) {
  const std::size_t N = 16;
  const auto S = gen_schwinger({N, -0.1, draw_gauge_field(N, 0.05, 1)});
  AggregationConfig ac;
  ac.fine = {N, 2, true};
  ac.aggregate_extent = {4, 4};
  ac.coarse_dofs = {4, 8};
  ac.spin_split = true;
  auto offdiag = [](EigenMatrix M) {
    M.diagonal().setZero();
    return M.squaredNorm();
  };
  const EigenMatrix inv = oracle::inverse(oracle::dense(S));
  auto first_difference = [&](const Hierarchy& h) {
    return offdiag(inv - oracle::dense(h.P(0)) * oracle::inverse(oracle::dense(h.A(1))) * oracle::dense(h.R(0)));
  };
  CostLedger l0, l1;
  const double raw = first_difference(build_adaptive_hierarchy(S, ac, l0));
  ac.adaptive_passes = 4;
  ac.adaptive_cycles = 4;
  const auto h = build_adaptive_hierarchy(S, ac, l1);
  const double boot = first_difference(h);
  EXPECT_LT(boot, 0.25 * offdiag(inv));
  EXPECT_LT(boot, raw);
  EXPECT_GT(l1.work_units(), l0.work_units());
  EXPECT_TRUE(h.orthonormal());
}
