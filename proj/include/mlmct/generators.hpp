#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "mlmct/sparse.hpp"

namespace mlmct {

/// Mathematical modulus, always in [0, n).
inline std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

/// Site (i, j) of an N x N lattice; i is the outer (slow) index.
inline std::size_t site_index(std::size_t i, std::size_t j, std::size_t N) { return i * N + j; }

/// Dirichlet 5-point Laplacian B ⊗ I + I ⊗ B on an N x N grid, B = tridiag(-1, 2, -1).
inline SparseMatrix gen_laplace2d(std::size_t N) {
  require(N >= 2, "gen_laplace2d: N must be at least 2");
  std::vector<Triplet> t;
  t.reserve(5 * N * N);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      const std::size_t s = site_index(i, j, N);
      t.push_back({s, s, 4.0});
      if (i > 0) t.push_back({s, site_index(i - 1, j, N), -1.0});
      if (i + 1 < N) t.push_back({s, site_index(i + 1, j, N), -1.0});
      if (j > 0) t.push_back({s, site_index(i, j - 1, N), -1.0});
      if (j + 1 < N) t.push_back({s, site_index(i, j + 1, N), -1.0});
    }
  }
  return SparseMatrix::from_triplets(N * N, N * N, std::move(t));
}

/// tr((L^N)^{-1}) from the known spectrum λ_j + λ_k, λ_j = 2 - 2cos(jπ/(N+1)).
inline double exact_trace_inv_laplace2d(std::size_t N) {
  require(N >= 2, "exact_trace_inv_laplace2d: N must be at least 2");
  std::vector<double> lam(N);
  for (std::size_t j = 1; j <= N; ++j)
    lam[j - 1] = 2.0 - 2.0 * std::cos(static_cast<double>(j) * std::numbers::pi / static_cast<double>(N + 1));
  double s = 0.0;
  for (double a : lam)
    for (double b : lam) s += 1.0 / (a + b);
  return s;
}

/// Link phases of a U(1) lattice field. theta couples (i,j) to (i+1,j),
/// phi couples (i,j) to (i,j+1); both are indexed by site_index.
struct GaugeField {
  std::size_t N = 0;
  std::vector<double> theta;
  std::vector<double> phi;
  double beta = 0.0;
  std::uint64_t seed = 0;
};

/// Phases i.i.d. normal with mean 0 and standard deviation 2π·beta.
inline GaugeField draw_gauge_field(std::size_t N, double beta, std::uint64_t seed) {
  require(N >= 1, "draw_gauge_field: N must be positive");
  require(beta >= 0.0 && std::isfinite(beta), "draw_gauge_field: beta must be finite and non-negative");
  GaugeField f{N, std::vector<double>(N * N, 0.0), std::vector<double>(N * N, 0.0), beta, seed};
  if (beta == 0.0) return f;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 2.0 * std::numbers::pi * beta);
  for (auto& v : f.theta) v = dist(rng);
  for (auto& v : f.phi) v = dist(rng);
  return f;
}

/// Periodic gauge Laplacian: row (i,j) reads
/// 4u_ij - e^{iΘ_ij}u_{i+1,j} - e^{iΦ_ij}u_{i,j+1} - e^{-iΘ_{i-1,j}}u_{i-1,j} - e^{-iΦ_{i,j-1}}u_{i,j-1}.
inline SparseMatrix gen_gauge_laplace(const GaugeField& field) {
  const std::size_t N = field.N;
  require(N >= 2, "gen_gauge_laplace: N must be at least 2");
  std::vector<Triplet> t;
  t.reserve(5 * N * N);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      const std::size_t s = site_index(i, j, N);
      const auto ii = static_cast<std::ptrdiff_t>(i);
      const auto jj = static_cast<std::ptrdiff_t>(j);
      const std::size_t xp = site_index(wrap(ii + 1, N), j, N);
      const std::size_t xm = site_index(wrap(ii - 1, N), j, N);
      const std::size_t yp = site_index(i, wrap(jj + 1, N), N);
      const std::size_t ym = site_index(i, wrap(jj - 1, N), N);
      t.push_back({s, s, 4.0});
      t.push_back({s, xp, -std::polar(1.0, field.theta[s])});
      t.push_back({s, yp, -std::polar(1.0, field.phi[s])});
      t.push_back({s, xm, -std::conj(std::polar(1.0, field.theta[xm]))});
      t.push_back({s, ym, -std::conj(std::polar(1.0, field.phi[ym]))});
    }
  }
  return SparseMatrix::from_triplets(N * N, N * N, std::move(t));
}

struct SchwingerParams {
  std::size_t N = 0;
  double m = 0.0;
  GaugeField field;
};

/// Two-spin Schwinger discretisation of the 2D Dirac operator,
///   (4+m)u_ij - e^{iΘ_ij}(I-σ1)u_{i+1,j} - e^{iΦ_ij}(I-σ2)u_{i,j+1}
///             - e^{-iΘ_{i-1,j}}(I+σ1)u_{i-1,j} - e^{-iΦ_{i,j-1}}(I+σ2)u_{i,j-1},
/// with σ1 = [[0,1],[1,0]], σ2 = [[0,i],[-i,0]]. Rows are spin-major: all
/// first spin components, then all second ones, giving [[G, B], [-B*, G]].
inline SparseMatrix gen_schwinger(const SchwingerParams& p) {
  const std::size_t N = p.N;
  require(N >= 2, "gen_schwinger: N must be at least 2");
  require(p.field.N == N, "gen_schwinger: gauge field extent differs from N");
  const std::size_t V = N * N;
  const Complex I(0.0, 1.0);
  // 2x2 spin blocks, row-major.
  using Block = std::array<Complex, 4>;
  const Block fwd_x{1.0, -1.0, -1.0, 1.0};  // I - σ1
  const Block fwd_y{1.0, -I, I, 1.0};       // I - σ2
  const Block bwd_x{1.0, 1.0, 1.0, 1.0};    // I + σ1
  const Block bwd_y{1.0, I, -I, 1.0};       // I + σ2

  std::vector<Triplet> t;
  t.reserve(18 * V);
  auto couple = [&](std::size_t s, std::size_t nb, Complex link, const Block& b) {
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t c = 0; c < 2; ++c) t.push_back({a * V + s, c * V + nb, -(link * b[2 * a + c])});
  };
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      const std::size_t s = site_index(i, j, N);
      const auto ii = static_cast<std::ptrdiff_t>(i);
      const auto jj = static_cast<std::ptrdiff_t>(j);
      const std::size_t xp = site_index(wrap(ii + 1, N), j, N);
      const std::size_t xm = site_index(wrap(ii - 1, N), j, N);
      const std::size_t yp = site_index(i, wrap(jj + 1, N), N);
      const std::size_t ym = site_index(i, wrap(jj - 1, N), N);
      t.push_back({s, s, 4.0 + p.m});
      t.push_back({V + s, V + s, 4.0 + p.m});
      couple(s, xp, std::polar(1.0, p.field.theta[s]), fwd_x);
      couple(s, yp, std::polar(1.0, p.field.phi[s]), fwd_y);
      couple(s, xm, std::conj(std::polar(1.0, p.field.theta[xm])), bwd_x);
      couple(s, ym, std::conj(std::polar(1.0, p.field.phi[ym])), bwd_y);
    }
  }
  return SparseMatrix::from_triplets(2 * V, 2 * V, std::move(t));
}

/// J = diag(I, -I) for a spin-major operator of size 2V.
inline SparseMatrix spin_parity(std::size_t V) {
  std::vector<Triplet> t;
  t.reserve(2 * V);
  for (std::size_t s = 0; s < V; ++s) {
    t.push_back({s, s, 1.0});
    t.push_back({V + s, V + s, -1.0});
  }
  return SparseMatrix::from_triplets(2 * V, 2 * V, std::move(t));
}

/// Rough location of the leftmost part of the spectrum: power iteration on
/// cI - A with c = ‖A‖₁, returning c minus the dominant Rayleigh quotient.
struct SpectrumProbe {
  double min_real_estimate = 0.0;
  bool right_half_plane = false;
};

inline SpectrumProbe probe_leftmost_spectrum(const SparseMatrix& A, std::uint64_t seed = 1,
                                             int iterations = 300) {
  require_dims(A.square(), "probe_leftmost_spectrum: matrix must be square");
  const double c = norm1(A);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Vector x(A.rows());
  for (auto& v : x) v = Complex(nd(rng), nd(rng));
  Vector y(A.rows());
  Complex rq{};
  for (int it = 0; it < iterations; ++it) {
    const double nx = norm2(x);
    for (auto& v : x) v /= nx;
    spmv_into(A, x, y);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = c * x[i] - y[i];
    rq = dot(x, y);
    x.swap(y);
  }
  SpectrumProbe out;
  out.min_real_estimate = c - rq.real();
  out.right_half_plane = out.min_real_estimate > 0.0;
  return out;
}

}  // namespace mlmct
