#pragma once

#include <cmath>
#include <cstdint>
#include <array>
#include <exception>
#include <limits>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "mlmct/sparse.hpp"

namespace mlmct {

enum class Distribution { rademacher, z4, uniform_phase, gaussian };

inline std::string to_string(Distribution d) {
  switch (d) {
    case Distribution::rademacher: return "rademacher";
    case Distribution::z4: return "z4";
    case Distribution::uniform_phase: return "uniform-phase";
    case Distribution::gaussian: return "gaussian";
  }
  return "unknown";
}

inline Distribution parse_distribution(const std::string& s) {
  if (s == "rademacher") return Distribution::rademacher;
  if (s == "z4") return Distribution::z4;
  if (s == "uniform-phase" || s == "uniform_phase") return Distribution::uniform_phase;
  if (s == "gaussian") return Distribution::gaussian;
  throw Error("unknown distribution '" + s + "' (expected rademacher, z4, uniform-phase or gaussian)");
}

/// Counter-based stream seeding: the generator for sample `index` of stream
/// `stream` depends only on (master_seed, stream, index), so the order or
/// thread in which samples are drawn cannot change their values.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 sample_rng(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t s = splitmix64(splitmix64(splitmix64(master_seed) ^ stream) ^ index);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

/// n i.i.d. components with E[x_i] = 0 and E[x̄_i x_j] = δ_ij.
inline Vector draw_vector(std::size_t n, Distribution dist, std::mt19937_64& rng) {
  require(n >= 1, "draw_vector: n must be positive");
  Vector x(n);
  switch (dist) {
    case Distribution::rademacher:
      for (auto& v : x) v = (rng() >> 63) ? 1.0 : -1.0;
      break;
    case Distribution::z4: {
      static constexpr std::array<Complex, 4> kZ4{Complex(1, 0), Complex(-1, 0), Complex(0, 1), Complex(0, -1)};
      for (auto& v : x) v = kZ4[rng() >> 62];
      break;
    }
    case Distribution::uniform_phase: {
      std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
      for (auto& v : x) v = std::polar(1.0, u(rng));
      break;
    }
    case Distribution::gaussian: {
      std::normal_distribution<double> nd;
      for (auto& v : x) v = nd(rng);
      break;
    }
  }
  return x;
}

/// Running mean and variance of complex samples, V = Σ|y - ȳ|²/(n-1).
class RunningStats {
 public:
  void add(Complex y) {
    ++n_;
    const Complex d = y - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += (std::conj(d) * (y - mean_)).real();
  }
  [[nodiscard]] std::size_t count() const noexcept { return n_; }
  [[nodiscard]] Complex mean() const noexcept { return mean_; }
  [[nodiscard]] double variance() const noexcept { return n_ >= 2 ? std::max(0.0, m2_) / static_cast<double>(n_ - 1) : 0.0; }
  [[nodiscard]] double standard_error() const noexcept {
    return n_ >= 2 ? std::sqrt(variance() / static_cast<double>(n_)) : std::numeric_limits<double>::infinity();
  }

 private:
  std::size_t n_ = 0;
  Complex mean_{};
  double m2_ = 0.0;
};

/// When a stochastic estimate may stop. Either a relative target ε (scaled by
/// τ from a pilot run, or by a supplied τ) or an absolute standard-error
/// target is used. `weights` split (ετ)² across MLMC level differences.
struct StoppingRule {
  double epsilon = 1e-3;
  std::optional<double> tau;
  std::optional<double> abs_tol;
  std::size_t min_samples = 5;
  std::vector<double> weights;
  std::size_t max_samples = 1'000'000;
  std::size_t batch = 8;
  unsigned workers = 1;

  void validate() const {
    require(abs_tol ? *abs_tol > 0.0 : epsilon > 0.0, "StoppingRule: tolerance must be positive");
    require(min_samples >= 2, "StoppingRule: min_samples must be at least 2");
    require(max_samples >= min_samples, "StoppingRule: max_samples below min_samples");
    require(batch >= 1 && workers >= 1, "StoppingRule: batch and workers must be positive");
    if (!weights.empty()) {
      double s = 0.0;
      for (double w : weights) {
        require(w >= 0.0, "StoppingRule: weights must be non-negative");
        s += w;
      }
      require(std::abs(s - 1.0) <= 1e-9, "StoppingRule: weights must sum to 1");
    }
  }

  /// Per-level weights for `differences` level differences, defaulting to equal shares.
  [[nodiscard]] std::vector<double> level_weights(std::size_t differences) const {
    if (weights.empty()) return std::vector<double>(differences, differences ? 1.0 / static_cast<double>(differences) : 0.0);
    require(weights.size() == differences, "StoppingRule: expected " + std::to_string(differences) +
                                               " weights, got " + std::to_string(weights.size()));
    return weights;
  }
};

/// τ = mean - (sample standard deviation) over pilot values.
inline double tau_from_pilot(std::span<const Complex> pilot) {
  require(pilot.size() >= 2, "tau_from_pilot: need at least two pilot values");
  RunningStats st;
  for (auto v : pilot) st.add(v);
  const double tau = st.mean().real() - std::sqrt(st.variance());
  if (!(tau > 0.0))
    throw Error("pilot scale tau = " + std::to_string(tau) +
                " is not positive; rerun with an absolute tolerance (abs_tol)");
  return tau;
}

/// Sample i of a stochastic estimate, charging its work to the given ledger.
using SampleFn = std::function<Complex(std::uint64_t index, CostLedger& ledger)>;

/// Draws samples with indices count(), count()+1, ... into `stats` until
/// n ≥ min_samples and the standard error is ≤ target, or `max_samples` is
/// reached (returns false). With several workers, samples are evaluated in
/// batches but accepted strictly in index order; work spent on samples past
/// the stopping point is discarded rather than charged.
inline bool sample_until(const SampleFn& f, double target, const StoppingRule& rule, RunningStats& stats,
                         CostLedger& ledger, std::vector<Complex>* values = nullptr) {
  auto done = [&] { return stats.count() >= rule.min_samples && stats.standard_error() <= target; };
  if (rule.workers <= 1) {
    while (!done()) {
      if (stats.count() >= rule.max_samples) return false;
      CostLedger l;
      const Complex y = f(stats.count(), l);
      stats.add(y);
      ledger.merge(l);
      if (values) values->push_back(y);
    }
    return true;
  }
  const std::size_t batch = std::max<std::size_t>(rule.batch, rule.workers);
  while (!done()) {
    if (stats.count() >= rule.max_samples) return false;
    const std::size_t first = stats.count();
    const std::size_t count = std::min(batch, rule.max_samples - first);
    std::vector<Complex> ys(count);
    std::vector<CostLedger> ls(count);
    // A worker stops at its first failure; the failure surfaces when its
    // sample index is reached in order, before any later sample is accepted.
    std::vector<std::exception_ptr> errs(count);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < rule.workers; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t k = w; k < count; k += rule.workers) {
            try {
              ys[k] = f(first + k, ls[k]);
            } catch (...) {
              errs[k] = std::current_exception();
              return;
            }
          }
        });
      }
    }
    for (std::size_t k = 0; k < count; ++k) {
      if (done()) break;
      if (errs[k]) std::rethrow_exception(errs[k]);
      stats.add(ys[k]);
      ledger.merge(ls[k]);
      if (values) values->push_back(ys[k]);
    }
  }
  return true;
}

}  // namespace mlmct
