#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace h2ulv {

enum class ErrorKind {
  invalid_argument,
  format,
  not_positive_definite,
  singular,
  coincident_points,
  dimension_mismatch,
  structural,
  unavailable,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::format: return "format";
    case ErrorKind::not_positive_definite: return "not-positive-definite";
    case ErrorKind::singular: return "singular";
    case ErrorKind::coincident_points: return "coincident-points";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::structural: return "structural";
    case ErrorKind::unavailable: return "unavailable";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Cholesky pivot failure. level/box are -1 when raised outside a factorization.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(std::size_t pivot, double value, int level = -1, long box = -1)
      : Error(ErrorKind::not_positive_definite, describe(pivot, value, level, box)),
        pivot_(pivot), value_(value), level_(level), box_(box) {}

  std::size_t pivot() const noexcept { return pivot_; }
  double value() const noexcept { return value_; }
  int level() const noexcept { return level_; }
  long box() const noexcept { return box_; }

  NotPositiveDefinite at(int level, long box) const {
    return NotPositiveDefinite(pivot_, value_, level, box);
  }

 private:
  static std::string describe(std::size_t pivot, double value, int level, long box) {
    std::string s = "matrix is not positive definite: pivot " + std::to_string(pivot) +
                    " = " + std::to_string(value);
    if (level >= 0) s += " (level " + std::to_string(level) + ", box " + std::to_string(box) + ")";
    return s;
  }

  std::size_t pivot_;
  double value_;
  int level_;
  long box_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace h2ulv
