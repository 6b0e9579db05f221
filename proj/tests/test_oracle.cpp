#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "h2ulv/oracle.hpp"
#include "h2ulv/ulv_factor.hpp"

using namespace h2ulv;

TEST(Oracle, CapRefusal) {
  const PointCloud c = gen_sphere_surface(100, 0);
  try {
    dense_assemble(KernelSpec{}, c, 50);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unavailable);
  }
}

TEST(Oracle, AssembleMatchesEntries) {
  const PointCloud c = gen_uniform_cube(30, 1);
  const DenseBlock a = dense_assemble(KernelSpec{}, c);
  EXPECT_EQ(a, a.transposed());
  EXPECT_EQ(a(4, 4), 1000.0);
  EXPECT_DOUBLE_EQ(a(2, 9), 1.0 / distance(c.points[2], c.points[9]));
}

TEST(Oracle, DenseSolveResidual) {
  const PointCloud c = gen_uniform_cube(200, 2);
  const DenseBlock a = dense_assemble(KernelSpec{}, c);
  const DenseBlock b = random_block(200, 2, 3);
  const DenseBlock x = dense_solve(a, b);
  EXPECT_LT(relative_error(multiply(a, x), b), 1e-14);
}

TEST(Oracle, RelativeErrorBasics) {
  const DenseBlock a{{1, 0}, {0, 1}};
  EXPECT_EQ(relative_error(a, a), 0.0);
  EXPECT_NEAR(relative_error(DenseBlock{{1, 0}, {0, 2}}, a), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_THROW(relative_error(a, DenseBlock(2, 2)), Error);
}

namespace {

ULVFactors retained_factors(double eta) {
  BuildConfig c;
  c.eta = eta;
  c.leaf_max = 64;
  c.tol = 1e-8;
  auto h2 = std::make_shared<const H2Matrix>(construct(KernelSpec{}, gen_sphere_surface(1024, 3), c));
  FactorOptions o;
  o.retain = true;
  return factorize(h2, o);
}

}  // namespace

TEST(Oracle, FillinRequiresRetention) {
  BuildConfig c;
  c.leaf_max = 64;
  const ULVFactors f = factorize(construct(KernelSpec{}, gen_sphere_surface(512, 0), c));
  EXPECT_THROW(verify_fillin(f), Error);
}

TEST(Oracle, FillinTermMatchesIndependentComputation) {
  const ULVFactors f = retained_factors(1.5);
  const FillinReport r = verify_fillin(f);
  ASSERT_FALSE(r.off_diagonal.empty());
  // recompute one term with Eigen directly from the retained blocks
  const FillinTerm& t = r.off_diagonal.front();
  const auto& lv = f.levels[static_cast<std::size_t>(t.level)];
  using M = Eigen::MatrixXd;
  auto to_eigen = [](const DenseBlock& a) {
    M m(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j) m(i, j) = a(i, j);
    return m;
  };
  auto stored = [&](std::size_t a, std::size_t b) {
    return a >= b ? to_eigen(lv.retained.at({a, b})) : M(to_eigen(lv.retained.at({b, a})).transpose());
  };
  const std::size_t ri = lv.red[t.i], rj = lv.red[t.j], rk = lv.red[t.k];
  const M aii = stored(t.i, t.i).topLeftCorner(ri, ri);
  const M aji = stored(t.j, t.i).leftCols(ri);
  const M aik = stored(t.i, t.k).topRows(ri);
  const M term = aji * aii.llt().solve(aik);
  const double ss = term.bottomRightCorner(term.rows() - rj, term.cols() - rk).norm() / r.scale[t.level];
  EXPECT_NEAR(t.ss, ss, 1e-10 + 1e-8 * ss);
}

TEST(Oracle, OffDiagonalFillinIsSmallDiagonalIsNot) {
  const ULVFactors f = retained_factors(1.0);
  const FillinReport r = verify_fillin(f);
  EXPECT_LE(r.max_off_diagonal, 1e-5);
  EXPECT_GT(r.max_diagonal, 1e-5);
}

TEST(Oracle, SampledSelectionIncludesDiagonals) {
  const ULVFactors f = retained_factors(1.0);
  const FillinReport all = verify_fillin(f);
  const FillinReport sampled = verify_fillin(f, TripleSelection::by_default(1));
  EXPECT_EQ(sampled.diagonal.size(), all.diagonal.size());
  EXPECT_LE(sampled.off_diagonal.size(), all.off_diagonal.size());
}

TEST(Oracle, FlopComparisonRatio) {
  BuildConfig c;
  c.leaf_max = 64;
  const H2Matrix h2 = construct(KernelSpec{}, gen_sphere_surface(1024, 0), c);
  const ULVFactors f = factorize(h2);
  const FlopComparison cmp = flop_report_compare(h2, f);
  EXPECT_GT(cmp.factor_flops, 0u);
  EXPECT_GE(cmp.ratio(), 0.0);
  EXPECT_LE(cmp.ratio(), 1.0);
}
