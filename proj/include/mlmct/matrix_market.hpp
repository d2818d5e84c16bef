#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "mlmct/sparse.hpp"

namespace mlmct {

/// Writes A as "coordinate complex general" with 1-based indices. Values are
/// printed with 17 significant digits so a read-back is exact.
inline void write_matrix_market(std::ostream& os, const SparseMatrix& A) {
  os << "%%MatrixMarket matrix coordinate complex general\n";
  os << A.rows() << ' ' << A.cols() << ' ' << A.nnz() << '\n';
  char buf[96];
  for (std::size_t i = 0; i < A.rows(); ++i) {
    for (std::size_t k = A.row_ptr()[i]; k < A.row_ptr()[i + 1]; ++k) {
      const Complex v = A.values()[k];
      std::snprintf(buf, sizeof buf, "%zu %zu %.17g %.17g\n", i + 1, A.col_idx()[k] + 1, v.real(), v.imag());
      os << buf;
    }
  }
}

inline void write_matrix_market(const std::string& path, const SparseMatrix& A) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "cannot open " + path + " for writing");
  write_matrix_market(os, A);
  require(static_cast<bool>(os), "write failed for " + path);
}

/// Reads coordinate real/complex/integer/pattern files, general or
/// symmetric/hermitian/skew-symmetric. Mirror entries are expanded.
inline SparseMatrix read_matrix_market(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), "matrix market: empty input");
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  auto lower = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  object = lower(object);
  format = lower(format);
  field = lower(field);
  symmetry = lower(symmetry);
  require(tag == "%%MatrixMarket" && object == "matrix" && format == "coordinate",
          "matrix market: only 'matrix coordinate' files are supported");
  require(field == "complex" || field == "real" || field == "integer" || field == "pattern",
          "matrix market: unsupported field '" + field + "'");
  require(symmetry == "general" || symmetry == "symmetric" || symmetry == "hermitian" ||
              symmetry == "skew-symmetric",
          "matrix market: unsupported symmetry '" + symmetry + "'");

  while (std::getline(is, line))
    if (!line.empty() && line[0] != '%') break;
  std::size_t nr = 0, nc = 0, nz = 0;
  {
    std::istringstream hdr(line);
    require(static_cast<bool>(hdr >> nr >> nc >> nz), "matrix market: malformed size line");
  }
  std::vector<Triplet> t;
  t.reserve(symmetry == "general" ? nz : 2 * nz);
  for (std::size_t k = 0; k < nz; ++k) {
    require(static_cast<bool>(std::getline(is, line)), "matrix market: fewer entries than declared");
    if (line.empty() || line[0] == '%') {
      --k;
      continue;
    }
    std::istringstream es(line);
    std::size_t i = 0, j = 0;
    double re = 1.0, im = 0.0;
    require(static_cast<bool>(es >> i >> j), "matrix market: malformed entry line");
    if (field != "pattern") require(static_cast<bool>(es >> re), "matrix market: missing value");
    if (field == "complex") require(static_cast<bool>(es >> im), "matrix market: missing imaginary part");
    require(i >= 1 && j >= 1 && i <= nr && j <= nc, "matrix market: entry index out of range");
    const Complex v(re, im);
    t.push_back({i - 1, j - 1, v});
    if (i != j) {
      if (symmetry == "symmetric") t.push_back({j - 1, i - 1, v});
      if (symmetry == "hermitian") t.push_back({j - 1, i - 1, std::conj(v)});
      if (symmetry == "skew-symmetric") t.push_back({j - 1, i - 1, -v});
    }
  }
  return SparseMatrix::from_triplets(nr, nc, std::move(t));
}

inline SparseMatrix read_matrix_market(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "cannot open " + path);
  return read_matrix_market(is);
}

}  // namespace mlmct
