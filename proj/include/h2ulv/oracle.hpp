#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "h2ulv/dense.hpp"
#include "h2ulv/h2_build.hpp"
#include "h2ulv/kernels.hpp"
#include "h2ulv/ulv_factor.hpp"

namespace h2ulv {

inline constexpr std::size_t kDefaultOracleCap = 16384;

// Full kernel matrix in the cloud's storage order.
inline DenseBlock dense_assemble(const KernelSpec& kernel, const PointCloud& cloud,
                                 std::size_t cap = kDefaultOracleCap) {
  const std::size_t n = cloud.count();
  require(n <= cap, ErrorKind::unavailable,
          "dense oracle refused: N = " + std::to_string(n) + " exceeds the cap of " + std::to_string(cap));
  DenseBlock a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = a.row(i);
    for (std::size_t j = 0; j < i; ++j) row[j] = eval_entry(kernel, i, j, cloud.points[i], cloud.points[j]);
    row[i] = kernel.diagonal_shift;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i);
  return a;
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMatrix> view(const DenseBlock& a) {
  return Eigen::Map<const RowMatrix>(a.data(), static_cast<Eigen::Index>(a.rows()),
                                     static_cast<Eigen::Index>(a.cols()));
}

}  // namespace detail

// Dense Cholesky solve with Eigen.
inline DenseBlock dense_solve(const DenseBlock& a, const DenseBlock& b) {
  require(a.rows() == a.cols(), ErrorKind::dimension_mismatch, "dense_solve: matrix is not square");
  require(b.rows() == a.rows(), ErrorKind::dimension_mismatch, "dense_solve: right-hand side rows differ");
  Eigen::LLT<detail::RowMatrix> llt(detail::view(a));
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::not_positive_definite, "dense_solve: matrix is not positive definite");
  detail::RowMatrix x = llt.solve(detail::view(b));
  return DenseBlock(b.rows(), b.cols(), std::vector<double>(x.data(), x.data() + x.size()));
}

inline std::vector<double> dense_solve(const DenseBlock& a, const std::vector<double>& b) {
  return dense_solve(a, DenseBlock(b.size(), 1, b)).values();
}

// Eigen product, used as the reference A·x.
inline DenseBlock dense_multiply(const DenseBlock& a, const DenseBlock& x) {
  require(a.cols() == x.rows(), ErrorKind::dimension_mismatch, "dense_multiply: inner dimensions differ");
  detail::RowMatrix y = detail::view(a) * detail::view(x);
  return DenseBlock(a.rows(), x.cols(), std::vector<double>(y.data(), y.data() + y.size()));
}

inline double relative_error(const DenseBlock& x, const DenseBlock& ref) {
  require(x.rows() == ref.rows() && x.cols() == ref.cols(), ErrorKind::dimension_mismatch,
          "relative_error: shapes differ");
  const double denom = ref.frobenius_norm();
  require(denom > 0.0, ErrorKind::invalid_argument, "relative_error: reference has zero norm");
  return subtract(x, ref).frobenius_norm() / denom;
}

inline double relative_error(const std::vector<double>& x, const std::vector<double>& ref) {
  return relative_error(DenseBlock(x.size(), 1, x), DenseBlock(ref.size(), 1, ref));
}

inline DenseBlock random_block(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  DenseBlock out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = dist(rng);
  return out;
}

// Worst relative error of the H² product against the dense product over seeded
// random vectors (tree order).
inline double matvec_error(const H2Matrix& h2, const DenseBlock& a, std::size_t trials, std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const DenseBlock v = random_block(h2.count(), 1, seed + t);
    worst = std::max(worst, relative_error(h2_matvec(h2, v), dense_multiply(a, v)));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Fill-in verification

struct FillinTerm {
  int level = 0;
  std::size_t i = 0, j = 0, k = 0;
  double ss = 0.0;  // ‖A_ji^SR (A_ii^RR)⁻¹ A_ik^RS‖_F / scale
  double rr = 0.0;
  double rs = 0.0;
  double sr = 0.0;

  double max_term() const { return std::max({ss, rr, rs, sr}); }
};

struct FillinReport {
  std::vector<FillinTerm> off_diagonal;
  std::vector<FillinTerm> diagonal;  // i = j = k, SS-targeted term
  std::vector<double> scale;         // per level: max ‖A_ii‖_F
  double max_off_diagonal = 0.0;
  double max_diagonal = 0.0;
};

struct TripleSelection {
  bool all = true;
  std::size_t samples = 500;
  std::uint64_t seed = 0;

  // All triples at levels with at most 64 boxes, else seeded samples.
  static TripleSelection by_default(std::uint64_t seed = 0) { return TripleSelection{false, 500, seed}; }
};

namespace detail {

inline FillinTerm fillin_term(const ULVFactors& f, int level, std::size_t i, std::size_t j, std::size_t k,
                              double scale) {
  const auto& lv = f.levels[static_cast<std::size_t>(level)];
  auto stored = [&](std::size_t a, std::size_t b) {
    return a >= b ? lv.retained.at({a, b}) : lv.retained.at({b, a}).transposed();
  };
  const std::size_t ri = lv.red[i];
  // rows of box i's redundant slab against j and k, solved with L(r)_ii
  const DenseBlock tij = stored(i, j), tik = stored(i, k);
  const DenseBlock pj = tri_solve(lv.lr_diag[i], tij.block(0, 0, ri, tij.cols()), Side::left, false);
  const DenseBlock pk = tri_solve(lv.lr_diag[i], tik.block(0, 0, ri, tik.cols()), Side::left, false);
  const DenseBlock c = multiply(pj, pk, true, false);  // rows: box j (R|S), cols: box k (R|S)
  const std::size_t rj = lv.red[j], rk = lv.red[k];
  const std::size_t sj = c.rows() - rj, sk = c.cols() - rk;
  FillinTerm t{level, i, j, k};
  t.rr = c.block(0, 0, rj, rk).frobenius_norm() / scale;
  t.rs = c.block(0, rk, rj, sk).frobenius_norm() / scale;
  t.sr = c.block(rj, 0, sj, rk).frobenius_norm() / scale;
  t.ss = c.block(rj, rk, sj, sk).frobenius_norm() / scale;
  return t;
}

}  // namespace detail

// Cross terms A_ji (A_ii^RR)⁻¹ A_ik of the redundant elimination, computed
// from the retained sparsified blocks, relative to the level's largest
// diagonal block norm.
inline FillinReport verify_fillin(const ULVFactors& f, const TripleSelection& sel = TripleSelection{}) {
  require(f.retained, ErrorKind::unavailable, "verify_fillin: factors were computed without block retention");
  const H2Matrix& h2 = *f.h2;
  FillinReport rep;
  rep.scale.assign(static_cast<std::size_t>(h2.depth()) + 1, 0.0);
  for (int l = h2.depth(); l >= 1; --l) {
    const auto lu = static_cast<std::size_t>(l);
    const auto& lv = f.levels[lu];
    const auto& near = h2.lists.near[lu];
    const std::size_t nb = near.size();
    double scale = 0.0;
    for (std::size_t i = 0; i < nb; ++i) scale = std::max(scale, lv.retained.at({i, i}).frobenius_norm());
    rep.scale[lu] = scale;
    if (scale == 0.0) continue;

    std::vector<std::array<std::size_t, 3>> triples;
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t j : near[i])
        for (std::size_t k : near[i]) triples.push_back({i, j, k});
    if (!sel.all && nb > 64 && triples.size() > sel.samples) {
      std::vector<std::array<std::size_t, 3>> picked;
      for (std::size_t i = 0; i < nb; ++i) picked.push_back({i, i, i});
      std::mt19937_64 rng(sel.seed + lu);
      std::shuffle(triples.begin(), triples.end(), rng);
      for (const auto& t : triples) {
        if (picked.size() >= sel.samples + nb) break;
        if (!(t[0] == t[1] && t[1] == t[2])) picked.push_back(t);
      }
      triples = std::move(picked);
    }
    for (const auto& [i, j, k] : triples) {
      if (lv.red[i] == 0) continue;
      FillinTerm t = detail::fillin_term(f, l, i, j, k, scale);
      if (i == j && j == k) {
        rep.max_diagonal = std::max(rep.max_diagonal, t.ss);
        rep.diagonal.push_back(t);
      } else {
        rep.max_off_diagonal = std::max(rep.max_off_diagonal, t.max_term());
        rep.off_diagonal.push_back(t);
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Flop comparison

struct FlopComparison {
  double eta = 0.0;
  std::uint64_t prefactor_flops = 0;
  std::uint64_t factor_flops = 0;

  double ratio() const {
    const double total = static_cast<double>(prefactor_flops) + static_cast<double>(factor_flops);
    return total > 0.0 ? static_cast<double>(prefactor_flops) / total : 0.0;
  }
};

inline FlopComparison flop_report_compare(const H2Matrix& h2, const ULVFactors& f) {
  return FlopComparison{h2.config.eta, h2.stats.prefactor_flops, f.total_flops().true_flops};
}

}  // namespace h2ulv
