#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mlmct/errors.hpp"
#include "mlmct/estimators.hpp"

namespace mlmct {

/// One (method, seed) cell of an experiment.
struct RunRecord {
  std::string method;  // plain | deflated | mlmc | exact
  std::string family;  // laplace2d | gauge | schwinger
  std::size_t N = 0;
  double m = 0.0;
  double beta = 0.0;
  std::string dist = "z4";
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  // Samples per stochastic component: one entry per MLMC level difference,
  // a single entry for plain and deflated runs, none for exact runs.
  std::vector<std::size_t> level_samples;
  std::size_t n_defl = 0;
  std::uint64_t work_total = 0;
  std::uint64_t work_eigensolver = 0;
  Complex estimate{};
  std::optional<double> exact;
  std::optional<double> rel_error;
  std::string status = "ok";
  double wall_seconds = 0.0;  // informational, never written to the CSV
  std::optional<EstimateResult> result;

  [[nodiscard]] bool ok() const { return status == "ok"; }

  void set_exact(double value) {
    exact = value;
    rel_error = std::abs(estimate - Complex(value, 0.0)) / std::abs(value);
  }
};

inline const std::vector<std::string>& csv_leading_columns() {
  static const std::vector<std::string> cols{"method", "family", "N", "m", "beta", "dist", "epsilon", "seed"};
  return cols;
}

inline const std::vector<std::string>& csv_trailing_columns() {
  static const std::vector<std::string> cols{"n_defl",      "work_total",  "work_eigensolver", "estimate_re",
                                             "estimate_im", "exact",       "rel_error",        "status"};
  return cols;
}

inline std::string csv_header(std::size_t level_columns) {
  std::string h;
  for (const auto& c : csv_leading_columns()) h += c + ",";
  for (std::size_t l = 1; l <= level_columns; ++l) h += "n_samples_level_" + std::to_string(l) + ",";
  for (std::size_t i = 0; i < csv_trailing_columns().size(); ++i)
    h += csv_trailing_columns()[i] + (i + 1 < csv_trailing_columns().size() ? "," : "");
  return h;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_safe(std::string s) {
  for (auto& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline std::string csv_row(const RunRecord& r, std::size_t level_columns) {
  using detail::fmt_double;
  require(r.level_samples.size() <= level_columns, "csv_row: record has more level columns than the header");
  std::string s = r.method + "," + r.family + "," + std::to_string(r.N) + "," + fmt_double(r.m) + "," +
                  fmt_double(r.beta) + "," + r.dist + "," + fmt_double(r.epsilon) + "," + std::to_string(r.seed) + ",";
  for (std::size_t l = 0; l < level_columns; ++l)
    s += (l < r.level_samples.size() ? std::to_string(r.level_samples[l]) : std::string()) + ",";
  s += std::to_string(r.n_defl) + "," + std::to_string(r.work_total) + "," + std::to_string(r.work_eigensolver) + "," +
       fmt_double(r.estimate.real()) + "," + fmt_double(r.estimate.imag()) + "," +
       (r.exact ? fmt_double(*r.exact) : "") + "," + (r.rel_error ? fmt_double(*r.rel_error) : "") + "," +
       detail::csv_safe(r.status);
  return s;
}

inline std::size_t level_columns_needed(const std::vector<RunRecord>& rs) {
  std::size_t k = 1;
  for (const auto& r : rs) k = std::max(k, r.level_samples.size());
  return k;
}

inline void write_csv(std::ostream& os, const std::vector<RunRecord>& rs) {
  const std::size_t k = level_columns_needed(rs);
  os << csv_header(k) << '\n';
  for (const auto& r : rs) os << csv_row(r, k) << '\n';
}

inline std::vector<RunRecord> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("read_csv: empty input, header row missing");
  const auto header = detail::split_csv(line);
  const auto& lead = csv_leading_columns();
  const auto& trail = csv_trailing_columns();
  require(header.size() >= lead.size() + trail.size(), "read_csv: header has too few columns");
  for (std::size_t i = 0; i < lead.size(); ++i)
    require(header[i] == lead[i], "read_csv: expected column '" + lead[i] + "' at position " + std::to_string(i));
  const std::size_t k = header.size() - lead.size() - trail.size();
  for (std::size_t l = 0; l < k; ++l)
    require(header[lead.size() + l] == "n_samples_level_" + std::to_string(l + 1),
            "read_csv: malformed level column '" + header[lead.size() + l] + "'");
  for (std::size_t i = 0; i < trail.size(); ++i)
    require(header[lead.size() + k + i] == trail[i], "read_csv: expected column '" + trail[i] + "'");

  std::vector<RunRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv(line);
    require(f.size() == header.size(), "read_csv: line " + std::to_string(lineno) + " has " +
                                           std::to_string(f.size()) + " fields, header has " +
                                           std::to_string(header.size()));
    try {
      RunRecord r;
      r.method = f[0];
      r.family = f[1];
      r.N = std::stoull(f[2]);
      r.m = std::stod(f[3]);
      r.beta = std::stod(f[4]);
      r.dist = f[5];
      r.epsilon = std::stod(f[6]);
      r.seed = std::stoull(f[7]);
      for (std::size_t l = 0; l < k; ++l)
        if (!f[8 + l].empty()) r.level_samples.push_back(std::stoull(f[8 + l]));
      const std::size_t t = 8 + k;
      r.n_defl = std::stoull(f[t]);
      r.work_total = std::stoull(f[t + 1]);
      r.work_eigensolver = std::stoull(f[t + 2]);
      r.estimate = Complex(std::stod(f[t + 3]), std::stod(f[t + 4]));
      if (!f[t + 5].empty()) r.exact = std::stod(f[t + 5]);
      if (!f[t + 6].empty()) r.rel_error = std::stod(f[t + 6]);
      r.status = f[t + 7];
      out.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw Error("read_csv: line " + std::to_string(lineno) + ": unparsable field (" + e.what() + ")");
    }
  }
  return out;
}

inline std::vector<RunRecord> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_csv(in);
}

/// Least-squares slope of log(work) against log(1/ε) over successful records
/// with ε ≤ 1e-2. Needs at least three distinct ε values.
inline double scaling_fit(const std::vector<RunRecord>& records) {
  std::vector<double> xs, ys, distinct;
  const RunRecord* first = nullptr;
  for (const auto& r : records) {
    if (!r.ok() || r.epsilon > 1e-2 * (1 + 1e-12)) continue;
    if (!first) {
      first = &r;
    } else {
      require(r.family == first->family && r.N == first->N && r.method == first->method,
              "scaling_fit: records mix problems or methods");
    }
    require(r.epsilon > 0.0 && r.work_total > 0, "scaling_fit: need positive epsilon and work");
    xs.push_back(-std::log(r.epsilon));
    ys.push_back(std::log(static_cast<double>(r.work_total)));
    bool seen = false;
    for (double e : distinct) seen = seen || std::abs(e - r.epsilon) <= 1e-12 * r.epsilon;
    if (!seen) distinct.push_back(r.epsilon);
  }
  if (distinct.size() < 3)
    throw Error("scaling_fit: need at least 3 distinct epsilon values <= 1e-2, got " + std::to_string(distinct.size()));
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

/// work(a) / work(b). The eigensolver ledger is kept apart and excluded.
inline double compare_methods(const RunRecord& a, const RunRecord& b) {
  const bool same = a.family == b.family && a.N == b.N && a.m == b.m && a.beta == b.beta &&
                    std::abs(a.epsilon - b.epsilon) <= 1e-12 * std::max(a.epsilon, b.epsilon);
  if (!same) throw Error("compare_methods: records describe different problems or tolerances");
  require(b.work_total > 0, "compare_methods: reference record has zero work");
  return static_cast<double>(a.work_total) / static_cast<double>(b.work_total);
}

}  // namespace mlmct
