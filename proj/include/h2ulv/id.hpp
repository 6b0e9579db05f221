#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "h2ulv/dense.hpp"

namespace h2ulv {

// Orthonormal split of a box's row space into skeleton and redundant slabs.
//
// [q_red | q_skel] is square and orthonormal. r_skel is the k×k triangular
// factor of the interpolation operator, so rows of the box satisfy
//   q_skelᵀ·A(box, :) ≈ r_skel·A(skeleton, :)
// which is what coupling matrices and parent levels are expressed in.
struct BasisDecomposition {
  DenseBlock q_skel;
  DenseBlock q_red;
  DenseBlock r_skel;
  std::vector<std::size_t> skeleton;
  std::size_t rank = 0;
  bool rank_clamped = false;
  double residual = 0.0;  // Frobenius norm of the interpolation error on the samples

  std::size_t size() const { return q_skel.rows(); }
  std::size_t redundant() const { return q_red.cols(); }

  // [q_red | q_skel]
  DenseBlock full() const { return hconcat(q_red, q_skel); }
};

namespace detail {

using ColMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

// transfer (optional, n×n) maps the box's point rows into its coordinate
// frame; upper-level boxes pass the block-diagonal of their children's r_skel.
inline BasisDecomposition basis_from_interpolation(std::size_t n, const std::vector<std::size_t>& skeleton,
                                                   const ColMatrix& interp, const DenseBlock* transfer = nullptr) {
  const std::size_t k = skeleton.size();
  BasisDecomposition out;
  out.rank = k;
  out.skeleton = skeleton;
  out.q_skel = DenseBlock(n, k);
  out.q_red = DenseBlock(n, n - k);
  out.r_skel = DenseBlock(k, k);
  if (n == 0) return out;
  if (k == 0) {
    out.q_red = DenseBlock::identity(n);
    return out;
  }
  ColMatrix basis = interp;
  if (transfer) {
    ColMatrix t(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*transfer)(i, j);
    basis = t * interp;
  }
  Eigen::HouseholderQR<ColMatrix> qr(basis);
  ColMatrix q = qr.householderQ() * ColMatrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const auto& r = qr.matrixQR();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out.q_skel(i, j) = q(i, j);
    for (std::size_t j = k; j < n; ++j) out.q_red(i, j - k) = q(i, j);
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) out.r_skel(i, j) = r(i, j);
  return out;
}

}  // namespace detail

// Interpolative decomposition of the rows of `samples` (n rows × m sample
// columns) by column-pivoted QR of samplesᵀ. Exactly one of rank/tol drives the
// truncation. With tol, k is the smallest rank whose trailing triangle has
// Frobenius norm ≤ tol·‖samples‖_F, which bounds the projection residual.
//
// With a transfer matrix the skeleton is still chosen among the sample rows,
// but the orthonormal basis spans transfer·interpolation.
inline BasisDecomposition id_basis(const DenseBlock& samples, const DenseBlock* transfer,
                                   std::optional<std::size_t> rank, std::optional<double> tol) {
  require(rank.has_value() != tol.has_value(), ErrorKind::invalid_argument,
          "id_basis: exactly one of rank and tol must be given");
  require(!tol || *tol >= 0.0, ErrorKind::invalid_argument, "id_basis: tol must be non-negative");
  using detail::ColMatrix;
  const std::size_t n = samples.rows();
  const std::size_t m = samples.cols();

  require(!transfer || (transfer->rows() == n && transfer->cols() == n), ErrorKind::dimension_mismatch,
          "id_basis: transfer matrix does not match the sample rows");
  if (n == 0) return detail::basis_from_interpolation(0, {}, ColMatrix());
  const double total = samples.frobenius_norm();
  require(std::isfinite(total), ErrorKind::invalid_argument, "id_basis: samples contain non-finite entries");
  if (m == 0 || total == 0.0) {
    auto out = detail::basis_from_interpolation(n, {}, ColMatrix());
    out.rank_clamped = rank && *rank > 0;
    return out;
  }

  // samplesᵀ, reduced to an n×n triangle first when the sample count dominates.
  ColMatrix st(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) st(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = samples(i, j);
  ColMatrix work;
  if (m > n) {
    Eigen::HouseholderQR<ColMatrix> pre(st);
    work = pre.matrixQR().topRows(static_cast<Eigen::Index>(n)).template triangularView<Eigen::Upper>();
  } else {
    work = std::move(st);
  }

  Eigen::ColPivHouseholderQR<ColMatrix> cpqr(work);
  const ColMatrix& rfull = cpqr.matrixQR();
  const std::size_t p = std::min<std::size_t>(static_cast<std::size_t>(work.rows()), n);
  const auto& perm = cpqr.colsPermutation().indices();

  // tail2[k] = ‖R[k:, k:]‖_F²
  std::vector<double> tail2(p + 1, 0.0);
  for (std::size_t a = p; a-- > 0;) {
    double s = 0.0;
    for (std::size_t b = a; b < n; ++b) {
      const double v = rfull(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      s += v * v;
    }
    tail2[a] = tail2[a + 1] + s;
  }

  // numerical rank: pivots indistinguishable from zero cannot be skeleton rows
  const double r00 = std::abs(rfull(0, 0));
  std::size_t numerical = 0;
  while (numerical < p &&
         std::abs(rfull(static_cast<Eigen::Index>(numerical), static_cast<Eigen::Index>(numerical))) >
             1e-14 * r00 * static_cast<double>(std::max(n, m)))
    ++numerical;

  std::size_t k = 0;
  bool clamped = false;
  if (rank) {
    k = std::min(*rank, p);
    clamped = *rank > std::min(n, m);
  } else {
    const double bound = *tol * total;
    while (k < p && std::sqrt(tail2[k]) > bound) ++k;
  }
  k = std::min(k, numerical);

  std::vector<std::size_t> skeleton(k);
  for (std::size_t a = 0; a < k; ++a) skeleton[a] = static_cast<std::size_t>(perm(static_cast<Eigen::Index>(a)));

  // interpolation operator: rows at skeleton positions are the identity, the rest R11⁻¹R12 transposed
  ColMatrix interp = ColMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  if (k > 0) {
    const auto ki = static_cast<Eigen::Index>(k);
    const auto ni = static_cast<Eigen::Index>(n);
    ColMatrix t = rfull.topRightCorner(ki, ni - ki);
    rfull.topLeftCorner(ki, ki).template triangularView<Eigen::Upper>().solveInPlace(t);
    for (std::size_t a = 0; a < k; ++a) interp(perm(static_cast<Eigen::Index>(a)), static_cast<Eigen::Index>(a)) = 1.0;
    for (std::size_t a = k; a < n; ++a)
      for (std::size_t b = 0; b < k; ++b)
        interp(perm(static_cast<Eigen::Index>(a)), static_cast<Eigen::Index>(b)) =
            t(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a - k));
  }

  auto out = detail::basis_from_interpolation(n, skeleton, interp, transfer);
  out.rank_clamped = clamped;
  out.residual = std::sqrt(tail2[std::min(k, p)]);
  return out;
}

inline BasisDecomposition id_basis(const DenseBlock& samples, std::optional<std::size_t> rank,
                                   std::optional<double> tol) {
  return id_basis(samples, nullptr, rank, tol);
}

}  // namespace h2ulv
