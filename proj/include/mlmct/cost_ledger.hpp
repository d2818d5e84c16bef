#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace mlmct {

/// Where a batch of work units was spent. Every charge names one category so
/// that per-category counters can be reconciled against the running total.
enum class WorkCategory : std::uint8_t {
  matvec,
  smoothing,
  residual,
  transfer,
  coarse_solve,
  dense_inverse,
  sparse_product,
  trace_product,
  projection,
  count_
};

inline constexpr std::size_t kWorkCategoryCount = static_cast<std::size_t>(WorkCategory::count_);

inline constexpr std::string_view to_string(WorkCategory c) {
  switch (c) {
    case WorkCategory::matvec: return "matvec";
    case WorkCategory::smoothing: return "smoothing";
    case WorkCategory::residual: return "residual";
    case WorkCategory::transfer: return "transfer";
    case WorkCategory::coarse_solve: return "coarse_solve";
    case WorkCategory::dense_inverse: return "dense_inverse";
    case WorkCategory::sparse_product: return "sparse_product";
    case WorkCategory::trace_product: return "trace_product";
    case WorkCategory::projection: return "projection";
    case WorkCategory::count_: break;
  }
  return "unknown";
}

/// Accumulated arithmetic work. One unit is roughly one multiply-add; a
/// product Bx is charged nnz(B). Vector-vector and scalar work is not counted.
///
/// A ledger only grows. Concurrent callers keep private ledgers and merge
/// them at join points; merging is associative and commutative.
class CostLedger {
 public:
  void charge(std::uint64_t units, WorkCategory category) noexcept {
    total_ += units;
    by_category_[static_cast<std::size_t>(category)] += units;
  }

  void merge(const CostLedger& other) noexcept {
    total_ += other.total_;
    for (std::size_t i = 0; i < kWorkCategoryCount; ++i) by_category_[i] += other.by_category_[i];
  }

  [[nodiscard]] std::uint64_t work_units() const noexcept { return total_; }
  [[nodiscard]] std::uint64_t work_units(WorkCategory c) const noexcept {
    return by_category_[static_cast<std::size_t>(c)];
  }

  /// Double-entry check: the categories must sum to the total.
  [[nodiscard]] bool balanced() const noexcept {
    std::uint64_t s = 0;
    for (auto v : by_category_) s += v;
    return s == total_;
  }

  friend CostLedger operator+(CostLedger a, const CostLedger& b) noexcept {
    a.merge(b);
    return a;
  }
  friend bool operator==(const CostLedger&, const CostLedger&) = default;

 private:
  std::uint64_t total_ = 0;
  std::array<std::uint64_t, kWorkCategoryCount> by_category_{};
};

}  // namespace mlmct
