#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "h2ulv/dense.hpp"
#include "h2ulv/geometry.hpp"

namespace h2ulv {

enum class KernelFamily { laplace, yukawa };

inline const char* to_string(KernelFamily f) { return f == KernelFamily::laplace ? "laplace" : "yukawa"; }

inline KernelFamily parse_kernel_family(const std::string& s) {
  if (s == "laplace") return KernelFamily::laplace;
  if (s == "yukawa") return KernelFamily::yukawa;
  fail(ErrorKind::invalid_argument, "unknown kernel '" + s + "' (expected laplace|yukawa)");
}

struct KernelSpec {
  KernelFamily family = KernelFamily::laplace;
  double diagonal_shift = 1.0e3;
  double yukawa_decay = 1.0;

  void validate() const {
    require(diagonal_shift > 0.0, ErrorKind::invalid_argument, "kernel: diagonal shift must be positive");
    require(yukawa_decay > 0.0, ErrorKind::invalid_argument, "kernel: yukawa decay must be positive");
  }
};

// Green's function entry; the diagonal (same index) is the constant shift.
inline double eval_entry(const KernelSpec& k, std::size_t i_idx, std::size_t j_idx, const Point& xi,
                         const Point& xj) {
  if (i_idx == j_idx) return k.diagonal_shift;
  const double r = distance(xi, xj);
  if (r == 0.0)
    fail(ErrorKind::coincident_points, "kernel: distinct points " + std::to_string(i_idx) + " and " +
                                           std::to_string(j_idx) + " coincide");
  if (k.family == KernelFamily::laplace) return 1.0 / r;
  return std::exp(-k.yukawa_decay * r) / r;
}

// rows/cols index the cloud's points in storage (tree) order.
inline DenseBlock gen_block(const KernelSpec& k, std::span<const std::size_t> rows,
                            std::span<const std::size_t> cols, const PointCloud& cloud) {
  DenseBlock out(rows.size(), cols.size());
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const std::size_t i = rows[a];
    require(i < cloud.count(), ErrorKind::invalid_argument, "gen_block: row index out of range");
    const Point& xi = cloud.points[i];
    double* dst = out.row(a);
    for (std::size_t b = 0; b < cols.size(); ++b) {
      const std::size_t j = cols[b];
      require(j < cloud.count(), ErrorKind::invalid_argument, "gen_block: column index out of range");
      dst[b] = eval_entry(k, i, j, xi, cloud.points[j]);
    }
  }
  return out;
}

}  // namespace h2ulv
