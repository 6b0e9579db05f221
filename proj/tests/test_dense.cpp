#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "h2ulv/dense.hpp"
#include "h2ulv/oracle.hpp"

using namespace h2ulv;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMatrix eig(const DenseBlock& a) {
  return Eigen::Map<const RowMatrix>(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

DenseBlock spd(std::size_t n, std::uint64_t seed) {
  const DenseBlock g = random_block(n, n, seed);
  DenseBlock a = multiply(g, g, false, true);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += static_cast<double>(n);
  return a;
}

}  // namespace

TEST(Dense, MultiplyMatchesEigenForAllTransposes) {
  const DenseBlock a = random_block(7, 5, 1), b = random_block(5, 6, 2);
  const DenseBlock at = a.transposed(), bt = b.transposed();
  const RowMatrix ref = eig(a) * eig(b);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      const DenseBlock c = multiply(ta ? at : a, tb ? bt : b, ta, tb);
      EXPECT_LT((eig(c) - ref).norm(), 1e-13 * ref.norm());
    }
}

TEST(Dense, MultiplyIntoAccumulatesScaled) {
  const DenseBlock a = random_block(4, 3, 3), b = random_block(3, 2, 4);
  DenseBlock c = random_block(4, 2, 5);
  const RowMatrix ref = eig(c) - 2.0 * eig(a) * eig(b);
  multiply_into(c, a, b, false, false, -2.0);
  EXPECT_LT((eig(c) - ref).norm(), 1e-13);
}

TEST(Dense, CholeskyMatchesEigen) {
  const DenseBlock a = spd(12, 6);
  const DenseBlock l = cholesky(a);
  const RowMatrix ref = Eigen::LLT<RowMatrix>(eig(a)).matrixL();
  EXPECT_LT((eig(l) - ref).norm(), 1e-12 * ref.norm());
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = i + 1; j < 12; ++j) EXPECT_EQ(l(i, j), 0.0);
}

TEST(Dense, CholeskyReportsPivot) {
  DenseBlock a{{4, 2, 0}, {2, 1, 0}, {0, 0, 1}};
  try {
    cholesky(a);
    FAIL();
  } catch (const NotPositiveDefinite& e) {
    EXPECT_EQ(e.pivot(), 1u);
    EXPECT_EQ(e.kind(), ErrorKind::not_positive_definite);
  }
}

TEST(Dense, CholeskyRejectsAsymmetric) {
  DenseBlock a{{4, 1}, {0, 4}};
  EXPECT_THROW(cholesky(a), Error);
}

TEST(Dense, TriSolveAllVariants) {
  const DenseBlock l = cholesky(spd(6, 7));
  const RowMatrix le = eig(l);
  const DenseBlock bl = random_block(6, 3, 8), br = random_block(3, 6, 9);
  EXPECT_LT((le * eig(tri_solve(l, bl, Side::left, false)) - eig(bl)).norm(), 1e-12);
  EXPECT_LT((le.transpose() * eig(tri_solve(l, bl, Side::left, true)) - eig(bl)).norm(), 1e-12);
  EXPECT_LT((eig(tri_solve(l, br, Side::right, false)) * le - eig(br)).norm(), 1e-12);
  EXPECT_LT((eig(tri_solve(l, br, Side::right, true)) * le.transpose() - eig(br)).norm(), 1e-12);
}

TEST(Dense, PaddingIsNeutralBitForBit) {
  const DenseBlock a = random_block(5, 7, 10), b = random_block(7, 3, 11);
  const DenseBlock c = multiply(a, b);
  const DenseBlock cp = multiply(pad(a, 8, 8), pad(b, 8, 4));
  EXPECT_EQ(cp.block(0, 0, 5, 3), c);

  const DenseBlock s = spd(5, 12);
  const DenseBlock l = cholesky(s);
  const DenseBlock lp = cholesky(pad_for_cholesky(s, 8));
  EXPECT_EQ(lp.block(0, 0, 5, 5), l);
  for (std::size_t i = 5; i < 8; ++i) EXPECT_EQ(lp(i, i), 1.0);

  const DenseBlock x = tri_solve(l, b.block(0, 0, 5, 3), Side::left, true);
  const DenseBlock xp = tri_solve(lp, pad(b.block(0, 0, 5, 3), 8, 4), Side::left, true);
  EXPECT_EQ(xp.block(0, 0, 5, 3), x);
}

TEST(Dense, FlopCounts) {
  EXPECT_EQ(flop_count(OpKind::multiply, 2, 3, 4), 48u);
  EXPECT_EQ(round_up4(5), 8u);
  EXPECT_EQ(round_up4(8), 8u);
  EXPECT_EQ(round_up4(0), 0u);
}

TEST(Dense, ConcatAndBlocks) {
  const DenseBlock a{{1, 2}, {3, 4}};
  const DenseBlock h = hconcat(a, DenseBlock::identity(2));
  EXPECT_EQ(h.cols(), 4u);
  EXPECT_EQ(h(1, 3), 1.0);
  const DenseBlock v = vconcat(a, a);
  EXPECT_EQ(v.block(2, 0, 2, 2), a);
  EXPECT_EQ(a.transposed()(0, 1), 3.0);
  EXPECT_THROW(hconcat(a, DenseBlock(3, 1)), Error);
}
