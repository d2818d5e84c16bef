#include <gtest/gtest.h>

#include <sstream>

#include "mlmct/cost_ledger.hpp"
#include "mlmct/generators.hpp"
#include "mlmct/matrix_market.hpp"
#include "mlmct/sparse.hpp"
#include "mlmct/spectral.hpp"
#include "oracles.hpp"

using namespace mlmct;

namespace {

SparseMatrix from_rows(std::vector<std::vector<Complex>> rows) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      if (rows[i][j] != Complex{}) t.push_back({i, j, rows[i][j]});
  return SparseMatrix::from_triplets(rows.size(), rows.front().size(), std::move(t));
}

SparseMatrix random_sparse(std::size_t n, std::size_t m, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd;
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (u(rng) < density) t.push_back({i, j, Complex(nd(rng), nd(rng))});
  return SparseMatrix::from_triplets(n, m, std::move(t));
}

}  // namespace

TEST(CostLedger, ChargesPerCategoryAndTotal) {
  CostLedger a;
  a.charge(5, WorkCategory::matvec);
  a.charge(7, WorkCategory::smoothing);
  EXPECT_EQ(a.work_units(), 12u);
  EXPECT_EQ(a.work_units(WorkCategory::matvec), 5u);
  EXPECT_TRUE(a.balanced());
  CostLedger b;
  b.charge(3, WorkCategory::matvec);
  CostLedger c;
  c.charge(11, WorkCategory::projection);
  EXPECT_EQ((a + b) + c, a + (b + c));
  EXPECT_EQ(a + b, b + a);
  a.merge(b);
  EXPECT_EQ(a.work_units(WorkCategory::matvec), 8u);
}

TEST(SparseMatrix, TripletsAreSortedAndDuplicatesSummed) {
  const auto A = SparseMatrix::from_triplets(2, 3, {{1, 2, 1.0}, {0, 1, 2.0}, {1, 0, 3.0}, {0, 1, 4.0}});
  EXPECT_EQ(A.nnz(), 3u);
  EXPECT_EQ(A.at(0, 1), Complex(6.0));
  EXPECT_EQ(A.at(1, 0), Complex(3.0));
  EXPECT_EQ(A.at(0, 0), Complex(0.0));
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t k = A.row_ptr()[i] + 1; k < A.row_ptr()[i + 1]; ++k)
      EXPECT_LT(A.col_idx()[k - 1], A.col_idx()[k]);
}

TEST(SparseMatrix, RejectsOutOfRangeIndices) {
  EXPECT_THROW(SparseMatrix::from_triplets(2, 2, {{0, 2, 1.0}}), Error);
  EXPECT_THROW(SparseMatrix(2, 2, {0, 1, 2}, {1, 0}, {1.0}), Error);
}

TEST(Spmv, IdentityLeavesVectorAndChargesN) {
  CostLedger l;
  const Vector x{1.0, Complex(0, 2), -1.0};
  const Vector y = spmv(SparseMatrix::identity(3), x, l);
  EXPECT_EQ(y, x);
  EXPECT_EQ(l.work_units(), 3u);
}

TEST(Spmv, HandExample) {
  CostLedger l;
  const auto A = from_rows({{4.0, -1.0}, {-1.0, 4.0}});
  const Vector y = spmv(A, Vector{1.0, 1.0}, l);
  EXPECT_EQ(y[0], Complex(3.0));
  EXPECT_EQ(y[1], Complex(3.0));
  EXPECT_EQ(l.work_units(), 4u);
}

TEST(Spmv, LaplaceN63ChargesNnz) {
  CostLedger l;
  const auto A = gen_laplace2d(63);
  spmv(A, Vector(A.cols(), 1.0), l);
  EXPECT_EQ(l.work_units(), 19593u);
}

TEST(Spmv, DimensionMismatchThrows) {
  CostLedger l;
  EXPECT_THROW(spmv(SparseMatrix::identity(3), Vector(2), l), DimensionMismatch);
}

TEST(Spmv, MatchesDenseOracle) {
  const auto A = random_sparse(17, 11, 0.3, 4);
  Vector x(11);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = Complex(std::sin(i + 1.0), std::cos(3.0 * i));
  CostLedger l;
  const Vector y = spmv(A, x, l);
  const auto M = oracle::dense(A);
  Eigen::VectorXcd xe(11);
  for (int i = 0; i < 11; ++i) xe(i) = x[static_cast<std::size_t>(i)];
  const Eigen::VectorXcd ye = M * xe;
  for (int i = 0; i < 17; ++i) EXPECT_LT(std::abs(ye(i) - y[static_cast<std::size_t>(i)]), 1e-13);
  EXPECT_EQ(l.work_units(), A.nnz());
}

TEST(Transpose, AdjointConjugates) {
  const auto A = random_sparse(5, 7, 0.5, 9);
  const auto At = transpose(A);
  const auto Ah = adjoint(A);
  EXPECT_LT(oracle::max_abs(oracle::dense(At) - oracle::dense(A).transpose()), 1e-15);
  EXPECT_LT(oracle::max_abs(oracle::dense(Ah) - oracle::dense(A).adjoint()), 1e-15);
}

TEST(Multiply, MatchesDenseAndChargesContributingRows) {
  const auto A = random_sparse(9, 6, 0.4, 1);
  const auto B = random_sparse(6, 8, 0.4, 2);
  CostLedger l;
  const auto C = multiply(A, B, l);
  EXPECT_LT(oracle::max_abs(oracle::dense(C) - oracle::dense(A) * oracle::dense(B)), 1e-13);
  std::uint64_t expect = 0;
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t k = A.row_ptr()[i]; k < A.row_ptr()[i + 1]; ++k) {
      const std::size_t r = A.col_idx()[k];
      expect += B.row_ptr()[r + 1] - B.row_ptr()[r];
    }
  EXPECT_EQ(l.work_units(), expect);
}

TEST(Frobenius, OffdiagExamples) {
  EXPECT_EQ(frobenius_offdiag_sq(from_rows({{1.0, 0, 0}, {0, 5.0, 0}, {0, 0, -2.0}})), 0.0);
  EXPECT_EQ(frobenius_offdiag_sq(from_rows({{1.0, 2.0}, {0, 1.0}})), 4.0);
  EXPECT_EQ(frobenius_offdiag_sq(from_rows({{0, 2.0}, {0, 0}})), 4.0);
  EXPECT_THROW(frobenius_offdiag_sq(random_sparse(2, 3, 1.0, 1)), DimensionMismatch);
}

TEST(Frobenius, SymmetricOffdiagExamples) {
  EXPECT_EQ(frobenius_offdiag_sym_sq(from_rows({{0, 1.0}, {-1.0, 0}})), 0.0);
  EXPECT_EQ(frobenius_offdiag_sym_sq(from_rows({{1.0, 2.0}, {0, 1.0}})), 4.0);
  EXPECT_EQ(frobenius_offdiag_sym_sq(from_rows({{3.0, 0}, {0, -1.0}})), 0.0);
}

TEST(Frobenius, OffdiagPlusDiagonalIsFullNormOnRandomMatrices) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t n = 1 + s * 3;
    const auto A = random_sparse(n, n, 0.4, 100 + s);
    double diag = 0.0;
    for (auto d : A.diagonal()) diag += std::norm(d);
    const double full = frobenius_sq(A);
    EXPECT_NEAR(frobenius_offdiag_sq(A) + diag, full, 1e-12 * std::max(1.0, full));
    EXPECT_NEAR(frobenius_offdiag_sym_sq(A), oracle::rademacher_variance(oracle::dense(A)),
                1e-12 * std::max(1.0, full));
  }
}

TEST(DenseInvert, Examples) {
  CostLedger l;
  const auto I4 = dense_invert(DenseMatrix::identity(4), l);
  EXPECT_EQ(l.work_units(), 64u);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(I4(i, j), Complex(i == j ? 1.0 : 0.0));
  const auto D = dense_invert(to_dense(from_rows({{2.0, 0}, {0, 4.0}})), l);
  EXPECT_EQ(D(0, 0), Complex(0.5));
  EXPECT_EQ(D(1, 1), Complex(0.25));
  const auto T = dense_invert(to_dense(from_rows({{4.0, -1.0}, {-1.0, 4.0}})), l);
  EXPECT_NEAR(std::abs(T(0, 0) - 4.0 / 15), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(T(0, 1) - 1.0 / 15), 0.0, 1e-15);
}

TEST(DenseInvert, RecoversIdentityOnRandomMatrices) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto M = oracle::random_complex(30, s);
    CostLedger l;
    const auto inv = dense_invert(oracle::to_library(M), l);
    const EigenMatrix prod = M * to_eigen(inv);
    const double n = 30;
    EXPECT_LT(oracle::max_abs(prod - EigenMatrix::Identity(30, 30)), 1e-8 * oracle::max_abs(M) * n);
  }
}

TEST(DenseInvert, SingularThrows) {
  CostLedger l;
  EXPECT_THROW(dense_invert(to_dense(from_rows({{1.0, 2.0}, {2.0, 4.0}})), l), SingularMatrix);
}

TEST(TraceProduct, Examples) {
  CostLedger l;
  const auto C = from_rows({{1.0, 0, 0}, {0, 2.0, 0}, {0, 0, 3.0}});
  EXPECT_EQ(trace_product(DenseMatrix::identity(3), C, l), Complex(6.0));
  const DenseMatrix B(2, 2, {1.0, 2.0, 3.0, 4.0});
  EXPECT_EQ(trace_product(B, from_rows({{0, 1.0}, {1.0, 0}}), l), Complex(5.0));
}

TEST(TraceProduct, CyclicSwapAgrees) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto Bs = random_sparse(4, 4, 0.6, 200 + s);
    const auto Cs = random_sparse(4, 4, 0.6, 300 + s);
    CostLedger l1, l2;
    const Complex a = trace_product(to_dense(Bs), Cs, l1);
    const Complex b = trace_product(Bs, to_dense(Cs), l2);
    const Complex ref = (oracle::dense(Bs) * oracle::dense(Cs)).trace();
    EXPECT_LT(std::abs(a - b), 1e-12);
    EXPECT_LT(std::abs(a - ref), 1e-12);
    EXPECT_EQ(l1.work_units(), Cs.nnz());
  }
}

TEST(SpectralSummary, Examples) {
  const auto s = spectral_summary(to_dense(from_rows({{3.0, 0}, {0, 1.0}})));
  EXPECT_NEAR(s.singular_values[0], 3.0, 1e-14);
  EXPECT_NEAR(s.singular_values[1], 1.0, 1e-14);
  EXPECT_NEAR(s.offdiag_frobenius_sq(), 0.0, 1e-13);
  const auto t = spectral_summary(to_dense(from_rows({{0, 2.0}, {0, 0}})));
  EXPECT_NEAR(t.singular_values[0], 2.0, 1e-14);
  EXPECT_NEAR(t.singular_values[1], 0.0, 1e-14);
  EXPECT_NEAR(t.offdiag_frobenius_sq(), 4.0, 1e-13);
}

TEST(SpectralSummary, OffdiagIdentityOnRandomDense) {
  for (int n : {1, 2, 8, 33, 64}) {
    const auto M = oracle::random_complex(n, static_cast<std::uint64_t>(n));
    const auto s = spectral_summary(oracle::to_library(M));
    for (std::size_t i = 1; i < s.singular_values.size(); ++i)
      EXPECT_GE(s.singular_values[i - 1], s.singular_values[i]);
    const double ref = oracle::z4_variance(M);
    EXPECT_NEAR(s.offdiag_frobenius_sq(), ref, 1e-10 * std::max(1.0, ref));
    double sig = 0.0;
    for (double v : s.singular_values) sig += v * v;
    EXPECT_NEAR(sig, M.squaredNorm(), 1e-10 * M.squaredNorm());
  }
}

TEST(MatrixMarket, RoundTripIsExact) {
  const auto A = random_sparse(13, 9, 0.3, 77);
  std::stringstream ss;
  write_matrix_market(ss, A);
  const std::string text = ss.str();
  EXPECT_EQ(text.rfind("%%MatrixMarket matrix coordinate complex general\n13 9 " + std::to_string(A.nnz()), 0), 0u);
  const auto B = read_matrix_market(ss);
  EXPECT_EQ(B.rows(), 13u);
  EXPECT_EQ(B.nnz(), A.nnz());
  EXPECT_EQ(max_abs_diff(A, B), 0.0);
}

TEST(MatrixMarket, ReadsSymmetricRealAndHermitian) {
  std::stringstream s1("%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 4\n2 1 -1\n");
  const auto A = read_matrix_market(s1);
  EXPECT_EQ(A.at(0, 1), Complex(-1.0));
  EXPECT_EQ(A.at(1, 0), Complex(-1.0));
  std::stringstream s2("%%MatrixMarket matrix coordinate complex hermitian\n2 2 1\n2 1 0 1\n");
  const auto H = read_matrix_market(s2);
  EXPECT_EQ(H.at(1, 0), Complex(0, 1));
  EXPECT_EQ(H.at(0, 1), Complex(0, -1));
}

TEST(MatrixMarket, RejectsMalformedInput) {
  std::stringstream bad("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n");
  EXPECT_THROW(read_matrix_market(bad), Error);
  std::stringstream shortfile("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n");
  EXPECT_THROW(read_matrix_market(shortfile), Error);
}
