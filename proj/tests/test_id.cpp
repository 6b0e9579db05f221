#include <gtest/gtest.h>

#include <algorithm>

#include "h2ulv/id.hpp"
#include "h2ulv/kernels.hpp"
#include "h2ulv/oracle.hpp"

using namespace h2ulv;

namespace {

double orthonormality_defect(const DenseBlock& q) {
  return subtract(multiply(q, q, true, false), DenseBlock::identity(q.cols())).max_abs();
}

DenseBlock smooth_samples(std::size_t n, std::size_t m) {
  PointCloud c = gen_uniform_cube(n + m, 9);
  std::vector<std::size_t> rows(n), cols(m);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  for (std::size_t j = 0; j < m; ++j) cols[j] = n + j;
  for (std::size_t j = 0; j < m; ++j)
    for (auto& x : c.points[n + j]) x += 4.0;  // well separated
  return gen_block(KernelSpec{}, rows, cols, c);
}

}  // namespace

TEST(Id, BasisIsOrthonormalAndSquare) {
  const DenseBlock s = smooth_samples(40, 100);
  const BasisDecomposition b = id_basis(s, std::nullopt, 1e-8);
  EXPECT_EQ(b.q_skel.cols() + b.q_red.cols(), 40u);
  EXPECT_LT(orthonormality_defect(b.full()), 1e-12);
  EXPECT_EQ(b.skeleton.size(), b.rank);
  EXPECT_EQ(b.r_skel.rows(), b.rank);
  EXPECT_EQ(b.r_skel.cols(), b.rank);
}

TEST(Id, SkeletonRowsReconstructSamples) {
  const DenseBlock s = smooth_samples(40, 100);
  const BasisDecomposition b = id_basis(s, std::nullopt, 1e-9);
  // q_skel r_skel is the interpolation operator: samples ≈ (q_skel r_skel) samples[SK, :]
  DenseBlock sk(b.rank, s.cols());
  for (std::size_t a = 0; a < b.rank; ++a) std::copy_n(s.row(b.skeleton[a]), s.cols(), sk.row(a));
  const DenseBlock approx = multiply(multiply(b.q_skel, b.r_skel), sk);
  EXPECT_LT(relative_error(approx, s), 1e-7);
  EXPECT_LT(b.rank, 40u);
}

TEST(Id, FixedRankAndClamp) {
  const DenseBlock s = smooth_samples(30, 50);
  EXPECT_EQ(id_basis(s, std::size_t{5}, std::nullopt).rank, 5u);
  const BasisDecomposition c = id_basis(s.block(0, 0, 30, 4), std::size_t{10}, std::nullopt);
  EXPECT_TRUE(c.rank_clamped);
  EXPECT_LE(c.rank, 4u);
}

TEST(Id, RankDecreasesWithLooserTolerance) {
  const DenseBlock s = smooth_samples(60, 120);
  std::size_t prev = 61;
  for (double tol : {1e-12, 1e-9, 1e-6, 1e-3}) {
    const std::size_t r = id_basis(s, std::nullopt, tol).rank;
    EXPECT_LE(r, prev);
    prev = r;
  }
}

TEST(Id, EmptySamplesGiveAllRedundant) {
  const BasisDecomposition b = id_basis(DenseBlock(8, 0), std::nullopt, 1e-8);
  EXPECT_EQ(b.rank, 0u);
  EXPECT_EQ(b.q_red.cols(), 8u);
  EXPECT_LT(orthonormality_defect(b.full()), 1e-14);
}

TEST(Id, RequiresExactlyOneCriterion) {
  const DenseBlock s = smooth_samples(10, 10);
  EXPECT_THROW(id_basis(s, std::size_t{3}, 1e-8), Error);
  EXPECT_THROW(id_basis(s, std::nullopt, std::nullopt), Error);
}

TEST(Id, TransferFrameKeepsOrthonormality) {
  const DenseBlock s = smooth_samples(20, 40);
  DenseBlock g = random_block(20, 20, 3);
  for (std::size_t i = 0; i < 20; ++i) g(i, i) += 5.0;
  const BasisDecomposition b = id_basis(s, &g, std::nullopt, 1e-8);
  EXPECT_LT(orthonormality_defect(b.full()), 1e-12);
}
