#pragma once

#include <stdexcept>
#include <string>

namespace mlmct {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class SingularMatrix : public Error {
 public:
  using Error::Error;
};

/// An iterative method stopped at its iteration cap; carries the last
/// relative residual it reached.
class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, double final_relres)
      : Error(what), final_relres_(final_relres) {}
  [[nodiscard]] double final_relres() const noexcept { return final_relres_; }

 private:
  double final_relres_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline void require_dims(bool cond, const std::string& msg) {
  if (!cond) throw DimensionMismatch(msg);
}

}  // namespace mlmct
