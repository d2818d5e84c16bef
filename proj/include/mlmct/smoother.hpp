#pragma once

#include <span>
#include <string>

#include "mlmct/sparse.hpp"

namespace mlmct {

enum class SweepOrder { forward, backward };

/// One lexicographic Gauss-Seidel sweep for A x = b, in place. Charges nnz(A).
inline void gauss_seidel_sweep(const SparseMatrix& A, std::span<const Complex> b, std::span<Complex> x,
                               SweepOrder order, CostLedger& ledger) {
  require_dims(A.square() && b.size() == A.rows() && x.size() == A.rows(),
               "gauss_seidel_sweep: dimension mismatch");
  const auto rp = A.row_ptr();
  const auto ci = A.col_idx();
  const auto v = A.values();
  const std::size_t n = A.rows();
  auto relax_row = [&](std::size_t i) {
    Complex s = b[i];
    Complex diag{};
    for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) {
      if (ci[k] == i)
        diag = v[k];
      else
        s -= v[k] * x[ci[k]];
    }
    if (diag == Complex{})
      throw Error("gauss_seidel_sweep: zero diagonal entry in row " + std::to_string(i));
    x[i] = s / diag;
  };
  if (order == SweepOrder::forward) {
    for (std::size_t i = 0; i < n; ++i) relax_row(i);
  } else {
    for (std::size_t i = n; i-- > 0;) relax_row(i);
  }
  ledger.charge(A.nnz(), WorkCategory::smoothing);
}

}  // namespace mlmct
