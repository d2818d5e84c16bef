#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlmct/cost_ledger.hpp"
#include "mlmct/errors.hpp"

namespace mlmct {

using Complex = std::complex<double>;
using Vector = std::vector<Complex>;

struct Triplet {
  std::size_t row;
  std::size_t col;
  Complex value;
};

/// Compressed sparse row matrix over complex doubles.
///
/// Column indices are strictly increasing within a row and duplicates are
/// summed at construction. Stored entries are structural: an entry that
/// happens to evaluate to zero is kept. Immutable after construction.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  SparseMatrix(std::size_t nrows, std::size_t ncols, std::vector<std::size_t> row_ptr,
               std::vector<std::size_t> col_idx, std::vector<Complex> values)
      : nrows_(nrows),
        ncols_(ncols),
        row_ptr_(std::move(row_ptr)),
        col_idx_(std::move(col_idx)),
        values_(std::move(values)) {
    validate();
  }

  static SparseMatrix from_triplets(std::size_t nrows, std::size_t ncols, std::vector<Triplet> t) {
    for (const auto& e : t)
      require_dims(e.row < nrows && e.col < ncols, "triplet index out of range");
    std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::size_t> rp(nrows + 1, 0);
    std::vector<std::size_t> ci;
    std::vector<Complex> v;
    ci.reserve(t.size());
    v.reserve(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (k > 0 && t[k].row == t[k - 1].row && t[k].col == t[k - 1].col) {
        v.back() += t[k].value;
        continue;
      }
      ci.push_back(t[k].col);
      v.push_back(t[k].value);
      ++rp[t[k].row + 1];
    }
    for (std::size_t i = 0; i < nrows; ++i) rp[i + 1] += rp[i];
    return SparseMatrix(nrows, ncols, std::move(rp), std::move(ci), std::move(v));
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<std::size_t> rp(n + 1);
    std::iota(rp.begin(), rp.end(), std::size_t{0});
    std::vector<std::size_t> ci(n);
    std::iota(ci.begin(), ci.end(), std::size_t{0});
    return SparseMatrix(n, n, std::move(rp), std::move(ci), std::vector<Complex>(n, Complex(1.0)));
  }

  [[nodiscard]] std::size_t rows() const noexcept { return nrows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return ncols_; }
  [[nodiscard]] std::size_t nnz() const noexcept { return values_.size(); }
  [[nodiscard]] bool square() const noexcept { return nrows_ == ncols_; }

  [[nodiscard]] std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
  [[nodiscard]] std::span<const std::size_t> col_idx() const noexcept { return col_idx_; }
  [[nodiscard]] std::span<const Complex> values() const noexcept { return values_; }

  /// Entry (i, j), zero when not stored.
  [[nodiscard]] Complex at(std::size_t i, std::size_t j) const {
    const auto b = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    const auto e = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    const auto it = std::lower_bound(b, e, j);
    if (it == e || *it != j) return {};
    return values_[static_cast<std::size_t>(it - col_idx_.begin())];
  }

  [[nodiscard]] bool stores(std::size_t i, std::size_t j) const {
    const auto b = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    const auto e = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    return std::binary_search(b, e, j);
  }

  [[nodiscard]] std::vector<Complex> diagonal() const {
    std::vector<Complex> d(std::min(nrows_, ncols_));
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(i, i);
    return d;
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  void validate() const {
    require_dims(row_ptr_.size() == nrows_ + 1, "row pointer length must be nrows+1");
    require_dims(row_ptr_.front() == 0 && row_ptr_.back() == values_.size(),
                 "row pointer bounds inconsistent with value count");
    require_dims(col_idx_.size() == values_.size(), "column index and value arrays differ in length");
    for (std::size_t i = 0; i < nrows_; ++i) {
      require_dims(row_ptr_[i] <= row_ptr_[i + 1], "row pointer not monotone");
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        require_dims(col_idx_[k] < ncols_, "column index out of range");
        if (k > row_ptr_[i])
          require_dims(col_idx_[k - 1] < col_idx_[k], "column indices must strictly increase");
      }
    }
  }

  std::size_t nrows_ = 0;
  std::size_t ncols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<Complex> values_;
};

/// Row-major dense complex matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t nrows, std::size_t ncols) : nrows_(nrows), ncols_(ncols), data_(nrows * ncols) {}
  DenseMatrix(std::size_t nrows, std::size_t ncols, std::vector<Complex> data)
      : nrows_(nrows), ncols_(ncols), data_(std::move(data)) {
    require_dims(data_.size() == nrows_ * ncols_, "dense storage length must equal nrows*ncols");
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  [[nodiscard]] std::size_t rows() const noexcept { return nrows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return ncols_; }
  [[nodiscard]] bool square() const noexcept { return nrows_ == ncols_; }

  Complex& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * ncols_ + j]; }
  const Complex& operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * ncols_ + j]; }

  [[nodiscard]] std::span<Complex> data() noexcept { return data_; }
  [[nodiscard]] std::span<const Complex> data() const noexcept { return data_; }

  [[nodiscard]] Complex trace() const {
    Complex t{};
    for (std::size_t i = 0; i < std::min(nrows_, ncols_); ++i) t += (*this)(i, i);
    return t;
  }

  [[nodiscard]] double max_abs() const {
    double m = 0.0;
    for (const auto& v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t nrows_ = 0;
  std::size_t ncols_ = 0;
  std::vector<Complex> data_;
};

// ---------------------------------------------------------------------------
// Sparse kernels

/// y = A x without charging; used internally where the caller charges.
inline void spmv_into(const SparseMatrix& A, std::span<const Complex> x, std::span<Complex> y) {
  const auto rp = A.row_ptr();
  const auto ci = A.col_idx();
  const auto v = A.values();
  for (std::size_t i = 0; i < A.rows(); ++i) {
    Complex s{};
    for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) s += v[k] * x[ci[k]];
    y[i] = s;
  }
}

/// Returns A x and charges exactly nnz(A).
inline Vector spmv(const SparseMatrix& A, std::span<const Complex> x, CostLedger& ledger,
                   WorkCategory category = WorkCategory::matvec) {
  require_dims(x.size() == A.cols(), "spmv: vector length " + std::to_string(x.size()) +
                                         " does not match matrix columns " + std::to_string(A.cols()));
  Vector y(A.rows());
  spmv_into(A, x, y);
  ledger.charge(A.nnz(), category);
  return y;
}

namespace detail {

inline SparseMatrix transpose_impl(const SparseMatrix& A, bool conjugate) {
  std::vector<std::size_t> rp(A.cols() + 1, 0);
  const auto arp = A.row_ptr();
  const auto aci = A.col_idx();
  const auto av = A.values();
  for (auto c : aci) ++rp[c + 1];
  for (std::size_t j = 0; j < A.cols(); ++j) rp[j + 1] += rp[j];
  std::vector<std::size_t> ci(A.nnz());
  std::vector<Complex> v(A.nnz());
  std::vector<std::size_t> next(rp.begin(), rp.end() - 1);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    for (std::size_t k = arp[i]; k < arp[i + 1]; ++k) {
      const std::size_t dst = next[aci[k]]++;
      ci[dst] = i;
      v[dst] = conjugate ? std::conj(av[k]) : av[k];
    }
  }
  return SparseMatrix(A.cols(), A.rows(), std::move(rp), std::move(ci), std::move(v));
}

}  // namespace detail

inline SparseMatrix transpose(const SparseMatrix& A) { return detail::transpose_impl(A, false); }
inline SparseMatrix adjoint(const SparseMatrix& A) { return detail::transpose_impl(A, true); }

/// Sparse product A B. Charged Σ_i Σ_{k ∈ row i of A} nnz(row k of B).
inline SparseMatrix multiply(const SparseMatrix& A, const SparseMatrix& B, CostLedger& ledger) {
  require_dims(A.cols() == B.rows(), "multiply: inner dimensions differ (" + std::to_string(A.cols()) +
                                         " vs " + std::to_string(B.rows()) + ")");
  const auto arp = A.row_ptr();
  const auto aci = A.col_idx();
  const auto av = A.values();
  const auto brp = B.row_ptr();
  const auto bci = B.col_idx();
  const auto bv = B.values();

  std::vector<std::size_t> rp(A.rows() + 1, 0);
  std::vector<std::size_t> ci;
  std::vector<Complex> v;
  std::vector<std::ptrdiff_t> marker(B.cols(), -1);
  std::vector<Complex> acc(B.cols());
  std::vector<std::size_t> cols_in_row;
  std::uint64_t work = 0;

  for (std::size_t i = 0; i < A.rows(); ++i) {
    cols_in_row.clear();
    for (std::size_t ka = arp[i]; ka < arp[i + 1]; ++ka) {
      const std::size_t k = aci[ka];
      work += brp[k + 1] - brp[k];
      for (std::size_t kb = brp[k]; kb < brp[k + 1]; ++kb) {
        const std::size_t j = bci[kb];
        if (marker[j] != static_cast<std::ptrdiff_t>(i)) {
          marker[j] = static_cast<std::ptrdiff_t>(i);
          acc[j] = 0.0;
          cols_in_row.push_back(j);
        }
        acc[j] += av[ka] * bv[kb];
      }
    }
    std::sort(cols_in_row.begin(), cols_in_row.end());
    for (auto j : cols_in_row) {
      ci.push_back(j);
      v.push_back(acc[j]);
    }
    rp[i + 1] = ci.size();
  }
  ledger.charge(work, WorkCategory::sparse_product);
  return SparseMatrix(A.rows(), B.cols(), std::move(rp), std::move(ci), std::move(v));
}

inline DenseMatrix to_dense(const SparseMatrix& A) {
  DenseMatrix D(A.rows(), A.cols());
  const auto rp = A.row_ptr();
  const auto ci = A.col_idx();
  const auto v = A.values();
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) D(i, ci[k]) = v[k];
  return D;
}

/// Every entry of D becomes a stored entry, zeros included unless drop_zeros.
inline SparseMatrix to_sparse(const DenseMatrix& D, bool drop_zeros = true) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < D.rows(); ++i)
    for (std::size_t j = 0; j < D.cols(); ++j)
      if (!drop_zeros || D(i, j) != Complex{}) t.push_back({i, j, D(i, j)});
  return SparseMatrix::from_triplets(D.rows(), D.cols(), std::move(t));
}

/// Largest entrywise modulus of A - B over the union of their patterns.
inline double max_abs_diff(const SparseMatrix& A, const SparseMatrix& B) {
  require_dims(A.rows() == B.rows() && A.cols() == B.cols(), "max_abs_diff: shapes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < A.rows(); ++i) {
    std::size_t ka = A.row_ptr()[i];
    std::size_t kb = B.row_ptr()[i];
    const std::size_t ea = A.row_ptr()[i + 1];
    const std::size_t eb = B.row_ptr()[i + 1];
    while (ka < ea || kb < eb) {
      const std::size_t ja = ka < ea ? A.col_idx()[ka] : SIZE_MAX;
      const std::size_t jb = kb < eb ? B.col_idx()[kb] : SIZE_MAX;
      Complex d;
      if (ja == jb) {
        d = A.values()[ka++] - B.values()[kb++];
      } else if (ja < jb) {
        d = A.values()[ka++];
      } else {
        d = -B.values()[kb++];
      }
      m = std::max(m, std::abs(d));
    }
  }
  return m;
}

inline double max_abs(const SparseMatrix& A) {
  double m = 0.0;
  for (const auto& v : A.values()) m = std::max(m, std::abs(v));
  return m;
}

/// Maximum absolute column sum.
inline double norm1(const SparseMatrix& A) {
  std::vector<double> colsum(A.cols(), 0.0);
  for (std::size_t k = 0; k < A.nnz(); ++k) colsum[A.col_idx()[k]] += std::abs(A.values()[k]);
  return colsum.empty() ? 0.0 : *std::max_element(colsum.begin(), colsum.end());
}

inline double frobenius_sq(const SparseMatrix& A) {
  double s = 0.0;
  for (const auto& v : A.values()) s += std::norm(v);
  return s;
}

/// Σ_{i≠j} |a_ij|².
inline double frobenius_offdiag_sq(const SparseMatrix& A) {
  require_dims(A.square(), "frobenius_offdiag_sq: matrix must be square");
  double s = 0.0;
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t k = A.row_ptr()[i]; k < A.row_ptr()[i + 1]; ++k)
      if (A.col_idx()[k] != i) s += std::norm(A.values()[k]);
  return s;
}

/// ½ Σ_{i≠j} |a_ij + a_ji|², with the plain (unconjugated) transpose.
inline double frobenius_offdiag_sym_sq(const SparseMatrix& A) {
  require_dims(A.square(), "frobenius_offdiag_sym_sq: matrix must be square");
  // Each unordered pair {i,j} contributes 2|a_ij + a_ji|^2. It is counted from
  // its upper entry, or from the lower entry when the upper one is not stored.
  double s = 0.0;
  for (std::size_t i = 0; i < A.rows(); ++i) {
    for (std::size_t k = A.row_ptr()[i]; k < A.row_ptr()[i + 1]; ++k) {
      const std::size_t j = A.col_idx()[k];
      if (j == i) continue;
      if (i < j) {
        s += 2.0 * std::norm(A.values()[k] + A.at(j, i));
      } else if (!A.stores(j, i)) {
        s += 2.0 * std::norm(A.values()[k]);
      }
    }
  }
  return 0.5 * s;
}

// ---------------------------------------------------------------------------
// Dense kernels

inline DenseMatrix matmul(const DenseMatrix& A, const DenseMatrix& B) {
  require_dims(A.cols() == B.rows(), "matmul: inner dimensions differ");
  DenseMatrix C(A.rows(), B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t k = 0; k < A.cols(); ++k) {
      const Complex a = A(i, k);
      if (a == Complex{}) continue;
      for (std::size_t j = 0; j < B.cols(); ++j) C(i, j) += a * B(k, j);
    }
  return C;
}

inline DenseMatrix adjoint(const DenseMatrix& A) {
  DenseMatrix T(A.cols(), A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) T(j, i) = std::conj(A(i, j));
  return T;
}

inline Vector matvec(const DenseMatrix& A, std::span<const Complex> x) {
  require_dims(x.size() == A.cols(), "dense matvec: dimension mismatch");
  Vector y(A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    Complex s{};
    const Complex* row = &A(i, 0);
    for (std::size_t j = 0; j < A.cols(); ++j) s += row[j] * x[j];
    y[i] = s;
  }
  return y;
}

/// Inverse by LU with partial pivoting. Charges exactly n³.
inline DenseMatrix dense_invert(const DenseMatrix& A, CostLedger& ledger) {
  require_dims(A.square(), "dense_invert: matrix must be square");
  const std::size_t n = A.rows();
  const double scale = A.max_abs();
  const double pivot_floor = 1e-14 * scale;
  DenseMatrix lu = A;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu(i, k)) > best) {
        best = std::abs(lu(i, k));
        p = i;
      }
    if (!(best > pivot_floor) || scale == 0.0)
      throw SingularMatrix("dense_invert: matrix is singular to working precision (pivot " +
                           std::to_string(best) + " at column " + std::to_string(k) + ")");
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(p, j));
      std::swap(perm[k], perm[p]);
    }
    const Complex inv_piv = 1.0 / lu(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const Complex f = lu(i, k) * inv_piv;
      lu(i, k) = f;
      if (f == Complex{}) continue;
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
    }
  }

  // Solve L U X = P I column by column.
  DenseMatrix inv(n, n);
  Vector col(n);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < n; ++i) col[i] = perm[i] == c ? Complex(1.0) : Complex{};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) col[i] -= lu(i, j) * col[j];
    for (std::size_t ii = n; ii-- > 0;) {
      for (std::size_t j = ii + 1; j < n; ++j) col[ii] -= lu(ii, j) * col[j];
      col[ii] /= lu(ii, ii);
    }
    for (std::size_t i = 0; i < n; ++i) inv(i, c) = col[i];
  }
  ledger.charge(static_cast<std::uint64_t>(n) * n * n, WorkCategory::dense_inverse);
  return inv;
}

/// tr(BC) = Σ_ij B_ij C_ji without forming BC. Charges nnz(C).
inline Complex trace_product(const DenseMatrix& B, const SparseMatrix& C, CostLedger& ledger) {
  require_dims(B.cols() == C.rows() && B.rows() == C.cols(),
               "trace_product: B must be n x m and C m x n");
  Complex t{};
  for (std::size_t j = 0; j < C.rows(); ++j)
    for (std::size_t k = C.row_ptr()[j]; k < C.row_ptr()[j + 1]; ++k) t += B(C.col_idx()[k], j) * C.values()[k];
  ledger.charge(C.nnz(), WorkCategory::trace_product);
  return t;
}

/// tr(BC) with sparse B and dense C. Charges nnz(B).
inline Complex trace_product(const SparseMatrix& B, const DenseMatrix& C, CostLedger& ledger) {
  require_dims(B.cols() == C.rows() && B.rows() == C.cols(),
               "trace_product: B must be n x m and C m x n");
  Complex t{};
  for (std::size_t i = 0; i < B.rows(); ++i)
    for (std::size_t k = B.row_ptr()[i]; k < B.row_ptr()[i + 1]; ++k) t += B.values()[k] * C(B.col_idx()[k], i);
  ledger.charge(B.nnz(), WorkCategory::trace_product);
  return t;
}

// ---------------------------------------------------------------------------
// Vector helpers; not charged.

inline Complex dot(std::span<const Complex> x, std::span<const Complex> y) {
  Complex s{};
  for (std::size_t i = 0; i < x.size(); ++i) s += std::conj(x[i]) * y[i];
  return s;
}

inline double norm2(std::span<const Complex> x) {
  double s = 0.0;
  for (const auto& v : x) s += std::norm(v);
  return std::sqrt(s);
}

inline void axpy(Complex a, std::span<const Complex> x, std::span<Complex> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace mlmct
