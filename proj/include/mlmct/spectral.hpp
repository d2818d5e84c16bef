#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <vector>

#include "mlmct/sparse.hpp"

namespace mlmct {

using EigenMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;
using EigenRowMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline EigenMatrix to_eigen(const DenseMatrix& A) {
  return Eigen::Map<const EigenRowMatrix>(A.data().data(), static_cast<Eigen::Index>(A.rows()),
                                          static_cast<Eigen::Index>(A.cols()));
}

inline DenseMatrix from_eigen(const EigenMatrix& M) {
  DenseMatrix D(static_cast<std::size_t>(M.rows()), static_cast<std::size_t>(M.cols()));
  Eigen::Map<EigenRowMatrix>(D.data().data(), M.rows(), M.cols()) = M;
  return D;
}

struct SpectralSummary {
  std::vector<double> singular_values;  // non-increasing
  double diag_moduli_sq = 0.0;          // Σ|a_ii|²

  /// Σσ_i² - Σ|a_ii|², which equals ‖offdiag(A)‖²_F.
  [[nodiscard]] double offdiag_frobenius_sq() const {
    double s = 0.0;
    for (double v : singular_values) s += v * v;
    return s - diag_moduli_sq;
  }
};

inline constexpr std::size_t kSpectralSizeCap = 2048;

inline SpectralSummary spectral_summary(const DenseMatrix& A) {
  require_dims(A.square(), "spectral_summary: matrix must be square");
  require(A.rows() <= kSpectralSizeCap, "spectral_summary: dense SVD limited to n <= 2048");
  SpectralSummary out;
  if (A.rows() == 0) return out;
  Eigen::BDCSVD<EigenMatrix> svd(to_eigen(A));
  const auto& sv = svd.singularValues();
  out.singular_values.assign(sv.data(), sv.data() + sv.size());
  std::sort(out.singular_values.begin(), out.singular_values.end(), std::greater<>());
  for (std::size_t i = 0; i < A.rows(); ++i) out.diag_moduli_sq += std::norm(A(i, i));
  return out;
}

}  // namespace mlmct
