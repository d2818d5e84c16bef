#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mlmct/matrix_market.hpp"
#include "mlmct/multigrid.hpp"

namespace mlmct {

inline nlohmann::json hierarchy_manifest(const Hierarchy& h) {
  nlohmann::json j;
  j["kind"] = to_string(h.kind());
  j["orthonormal"] = h.orthonormal();
  j["num_levels"] = h.num_levels();
  j["levels"] = nlohmann::json::array();
  for (std::size_t l = 0; l < h.num_levels(); ++l) {
    const Level& lv = h.level(l);
    nlohmann::json e{{"level", l + 1},
                     {"size", lv.A.rows()},
                     {"nnz", lv.A.nnz()},
                     {"extent", lv.shape.extent},
                     {"dofs", lv.shape.dofs}};
    if (lv.P) e["P_nnz"] = lv.P->nnz();
    j["levels"].push_back(std::move(e));
  }
  return j;
}

/// Writes A_ℓ, P_ℓ, R_ℓ as level_<ℓ>_{A,P,R}.mtx (1-based ℓ) plus manifest.json.
inline void dump_hierarchy(const Hierarchy& h, const std::filesystem::path& dir, bool matrices = true) {
  std::filesystem::create_directories(dir);
  if (matrices) {
    for (std::size_t l = 0; l < h.num_levels(); ++l) {
      const std::string stem = "level_" + std::to_string(l + 1) + "_";
      write_matrix_market((dir / (stem + "A.mtx")).string(), h.A(l));
      if (l + 1 < h.num_levels()) {
        write_matrix_market((dir / (stem + "P.mtx")).string(), h.P(l));
        write_matrix_market((dir / (stem + "R.mtx")).string(), h.R(l));
      }
    }
  }
  std::ofstream os(dir / "manifest.json");
  require(static_cast<bool>(os), "cannot write " + (dir / "manifest.json").string());
  os << hierarchy_manifest(h).dump(2) << '\n';
}

}  // namespace mlmct
