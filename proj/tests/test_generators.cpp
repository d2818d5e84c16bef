#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "mlmct/generators.hpp"
#include "oracles.hpp"

using namespace mlmct;

TEST(Laplace2d, N2MatchesKroneckerSum) {
  const auto A = gen_laplace2d(2);
  const double expect[4][4] = {{4, -1, -1, 0}, {-1, 4, 0, -1}, {-1, 0, 4, -1}, {0, -1, -1, 4}};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(A.at(i, j), Complex(expect[i][j])) << i << "," << j;
}

TEST(Laplace2d, NnzFormulaAndTableValue) {
  for (std::size_t N : {2u, 3u, 7u, 15u, 63u, 127u}) EXPECT_EQ(gen_laplace2d(N).nnz(), 5 * N * N - 4 * N);
  EXPECT_EQ(gen_laplace2d(63).nnz(), 19593u);
}

TEST(Laplace2d, DiagonalAndInteriorRowSums) {
  const std::size_t N = 9;
  const auto A = gen_laplace2d(N);
  for (auto d : A.diagonal()) EXPECT_EQ(d, Complex(4.0));
  EXPECT_EQ(to_dense(A).trace(), Complex(4.0 * N * N));
  EXPECT_EQ(to_dense(gen_laplace2d(3)).trace(), Complex(36.0));
  for (std::size_t i = 1; i + 1 < N; ++i)
    for (std::size_t j = 1; j + 1 < N; ++j) {
      const std::size_t r = site_index(i, j, N);
      Complex s{};
      for (std::size_t k = A.row_ptr()[r]; k < A.row_ptr()[r + 1]; ++k) s += A.values()[k];
      EXPECT_EQ(s, Complex(0.0));
    }
}

TEST(Laplace2d, RejectsTinyN) { EXPECT_THROW(gen_laplace2d(1), Error); }

TEST(Laplace2d, ExactTraceN2IsSevenSixths) {
  EXPECT_NEAR(exact_trace_inv_laplace2d(2), 7.0 / 6.0, 1e-15);
  EXPECT_NEAR(exact_trace_inv_laplace2d(2), oracle::trace_inverse(gen_laplace2d(2)).real(), 1e-12);
}

TEST(Laplace2d, ExactTraceMatchesDenseAndBound) {
  for (std::size_t N : {3u, 5u, 8u, 15u}) {
    const double t = exact_trace_inv_laplace2d(N);
    EXPECT_NEAR(t, oracle::trace_inverse(gen_laplace2d(N)).real(), 1e-11 * t);
    EXPECT_GT(t, static_cast<double>(N * N) / 8.0);
  }
  EXPECT_NEAR(exact_trace_inv_laplace2d(15), 108.38632845706412, 1e-10);
  EXPECT_NEAR(exact_trace_inv_laplace2d(63), 2668.9862303027708, 1e-8);
}

TEST(Laplace2d, SmallestEigenvalueIsPositiveAndAnalytic) {
  for (std::size_t N : {3u, 7u, 15u}) {
    Eigen::SelfAdjointEigenSolver<EigenMatrix> es(oracle::dense(gen_laplace2d(N)));
    const double lmin = 2.0 * (2.0 - 2.0 * std::cos(std::numbers::pi / static_cast<double>(N + 1)));
    EXPECT_NEAR(es.eigenvalues()(0), lmin, 1e-10);
    EXPECT_GT(es.eigenvalues()(0), 0.0);
  }
}

TEST(GaugeField, ZeroBetaGivesZeroPhases) {
  const auto f = draw_gauge_field(8, 0.0, 3);
  for (double t : f.theta) EXPECT_EQ(t, 0.0);
  for (double p : f.phi) EXPECT_EQ(p, 0.0);
}

TEST(GaugeField, DeterministicInSeed) {
  const auto a = draw_gauge_field(16, 0.009, 42);
  const auto b = draw_gauge_field(16, 0.009, 42);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.phi, b.phi);
  const auto c = draw_gauge_field(16, 0.009, 43);
  EXPECT_NE(a.theta, c.theta);
  EXPECT_THROW(draw_gauge_field(4, -1.0, 1), Error);
}

TEST(GaugeField, PhaseStandardDeviationNearTarget) {
  const auto f = draw_gauge_field(64, 0.009, 7);
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (const auto* v : {&f.theta, &f.phi})
    for (double x : *v) {
      s += x;
      s2 += x * x;
      ++n;
    }
  EXPECT_EQ(n, 8192u);
  const double mean = s / n;
  const double sd = std::sqrt((s2 - n * mean * mean) / (n - 1));
  const double target = 2.0 * std::numbers::pi * 0.009;
  EXPECT_LT(std::abs(sd - target), 0.2 * target);
}

TEST(GaugeLaplace, ZeroPhasesGivePeriodicLaplacian) {
  const auto A = gen_gauge_laplace(draw_gauge_field(4, 0.0, 1));
  for (std::size_t r = 0; r < A.rows(); ++r) {
    Complex s{};
    for (std::size_t k = A.row_ptr()[r]; k < A.row_ptr()[r + 1]; ++k) s += A.values()[k];
    EXPECT_EQ(s, Complex(0.0));
  }
}

TEST(GaugeLaplace, HermitianUnitModulusAndNnz) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto A = gen_gauge_laplace(draw_gauge_field(8, 0.3, seed));
    EXPECT_EQ(max_abs_diff(A, adjoint(A)), 0.0);
    EXPECT_EQ(A.nnz(), 5u * 64u);
    for (std::size_t i = 0; i < A.rows(); ++i)
      for (std::size_t k = A.row_ptr()[i]; k < A.row_ptr()[i + 1]; ++k) {
        if (A.col_idx()[k] == i)
          EXPECT_EQ(A.values()[k], Complex(4.0));
        else
          EXPECT_NEAR(std::abs(A.values()[k]), 1.0, 1e-15);
      }
  }
  EXPECT_EQ(gen_gauge_laplace(draw_gauge_field(64, 0.009, 1)).nnz(), 20480u);
}

TEST(GaugeLaplace, PositiveDefiniteAtSmallBeta) {
  for (std::size_t N : {8u, 16u, 32u}) {
    const auto A = gen_gauge_laplace(draw_gauge_field(N, 0.009, 1));
    Eigen::SelfAdjointEigenSolver<EigenMatrix> es(oracle::dense(A), Eigen::EigenvaluesOnly);
    EXPECT_GT(es.eigenvalues()(0), 0.0) << "N=" << N;
  }
}

TEST(Schwinger, NnzFormulaAndTableValue) {
  for (std::size_t N : {4u, 8u, 16u}) {
    const auto S = gen_schwinger({N, -0.1, draw_gauge_field(N, 0.1, 5)});
    EXPECT_EQ(S.rows(), 2 * N * N);
    EXPECT_EQ(S.nnz(), 18 * N * N);
  }
  EXPECT_EQ(gen_schwinger({128, -0.13, draw_gauge_field(128, 0.1, 1)}).nnz(), 294912u);
}

TEST(Schwinger, SpinSymmetryHoldsExactly) {
  for (std::uint64_t seed : {1u, 2u, 3u})
    for (double m : {0.0, -0.13, 0.5}) {
      const std::size_t N = 8;
      const auto S = gen_schwinger({N, m, draw_gauge_field(N, 0.2, seed)});
      const auto J = spin_parity(N * N);
      CostLedger l;
      EXPECT_EQ(max_abs_diff(multiply(J, S, l), multiply(adjoint(S), J, l)), 0.0);
    }
}

TEST(Schwinger, ZeroFieldZeroMassDiagonal) {
  const auto S = gen_schwinger({2, 0.0, draw_gauge_field(2, 0.0, 1)});
  for (auto d : S.diagonal()) EXPECT_EQ(d, Complex(4.0));
}

TEST(Schwinger, BlockFormWithGaugeLaplacianDiagonalBlocks) {
  const std::size_t N = 6;
  const auto f = draw_gauge_field(N, 0.2, 9);
  const auto S = oracle::dense(gen_schwinger({N, 0.0, f}));
  const auto G = oracle::dense(gen_gauge_laplace(f));
  const Eigen::Index V = N * N;
  EXPECT_LT(oracle::max_abs(S.topLeftCorner(V, V) - G), 1e-15);
  EXPECT_LT(oracle::max_abs(S.bottomRightCorner(V, V) - G), 1e-15);
  EXPECT_LT(oracle::max_abs(S.bottomLeftCorner(V, V) + S.topRightCorner(V, V).adjoint()), 1e-15);
}

TEST(Schwinger, SpectrumProbeFlagsNegativeMassAtZeroField) {
  const auto free = gen_schwinger({8, -0.5, draw_gauge_field(8, 0.0, 1)});
  EXPECT_FALSE(probe_leftmost_spectrum(free, 1).right_half_plane);
  const auto heavy = gen_schwinger({8, 0.5, draw_gauge_field(8, 0.0, 1)});
  EXPECT_TRUE(probe_leftmost_spectrum(heavy, 1).right_half_plane);
}
