#include <gtest/gtest.h>

#include <memory>

#include "h2ulv/h2_build.hpp"
#include "h2ulv/oracle.hpp"
#include "h2ulv/ulv_factor.hpp"
#include "h2ulv/ulv_solve.hpp"

using namespace h2ulv;

namespace {

std::shared_ptr<const H2Matrix> build(PointCloud cloud, double eta, std::size_t leaf, std::optional<double> tol,
                                      std::optional<std::size_t> rank = std::nullopt, int gs = 2) {
  BuildConfig c;
  c.eta = eta;
  c.leaf_max = leaf;
  c.tol = tol;
  c.rank = rank;
  c.gs_sweeps = gs;
  return std::make_shared<const H2Matrix>(construct(KernelSpec{}, std::move(cloud), c));
}

double dense_solution_error(const ULVFactors& f, std::uint64_t seed) {
  const H2Matrix& h2 = *f.h2;
  const DenseBlock b = random_block(h2.count(), 1, seed);
  const DenseBlock ref = dense_solve(dense_assemble(h2.kernel, h2.cloud), b);
  return relative_error(solve_tree_order(f, b, SolveMode::parallel), ref);
}

}  // namespace

TEST(Ulv, SolveMatchesDenseOracle) {
  auto h2 = build(gen_sphere_surface(1024, 1), 1.0, 64, 1e-8);
  const ULVFactors f = factorize(h2);
  EXPECT_LT(dense_solution_error(f, 3), 1e-6);
}

TEST(Ulv, RootOnlyIsDenseCholesky) {
  auto h2 = build(gen_sphere_surface(200, 1), 1.0, 256, 1e-8);
  ASSERT_EQ(h2->depth(), 0);
  const ULVFactors f = factorize(h2);
  EXPECT_LT(dense_solution_error(f, 4), 1e-12);
}

TEST(Ulv, FullRankHssIsExact) {
  auto h2 = build(gen_uniform_cube(512, 2), 0.0, 64, std::nullopt, std::size_t{512});
  const ULVFactors f = factorize(h2);
  EXPECT_LT(dense_solution_error(f, 5), 1e-10);
}

TEST(Ulv, NaiveAndParallelAgree) {
  for (double eta : {0.0, 0.7, 1.5}) {
    auto h2 = build(gen_uniform_cube(1024, 3), eta, 64, 1e-9);
    const ULVFactors f = factorize(h2);
    const DenseBlock b = random_block(1024, 2, 6);
    const BlockVector yn = forward_naive(f, b), yp = forward_parallel(f, b);
    EXPECT_LT(relative_error(yp.root, yn.root), 1e-12);
    const DenseBlock xn = backward_naive(f, yn), xp = backward_parallel(f, yn);
    EXPECT_LT(relative_error(xp, xn), 1e-12) << "eta " << eta;
  }
}

TEST(Ulv, MultipleRightHandSidesMatchSingleColumns) {
  auto h2 = build(gen_sphere_surface(512, 1), 1.0, 64, 1e-8);
  const ULVFactors f = factorize(h2);
  const DenseBlock b = random_block(512, 3, 8);
  const DenseBlock x = solve(f, b, SolveMode::parallel);
  for (std::size_t c = 0; c < 3; ++c) {
    const DenseBlock col = solve(f, b.block(0, c, 512, 1), SolveMode::parallel);
    EXPECT_LT(relative_error(x.block(0, c, 512, 1), col), 1e-14);
  }
}

TEST(Ulv, InputOrderSolveIsConsistent) {
  PointCloud input = gen_sphere_surface(512, 4);
  auto h2 = build(input, 1.0, 64, 1e-9);
  const ULVFactors f = factorize(h2);
  const DenseBlock b = random_block(512, 1, 9);
  const DenseBlock x = solve(f, b, SolveMode::naive);
  const DenseBlock ref = dense_solve(dense_assemble(KernelSpec{}, input), b);
  EXPECT_LT(relative_error(x, ref), 1e-6);
}

TEST(Ulv, AuditIsClean) {
  for (double eta : {0.7, 1.5, 3.0}) {
    auto h2 = build(gen_uniform_cube(1024, 5), eta, 64, 1e-8);
    FactorOptions o;
    o.audit = true;
    const ULVFactors f = factorize(h2, o);
    EXPECT_TRUE(f.audit.enabled);
    EXPECT_TRUE(f.audit.clean()) << "eta " << eta;
    EXPECT_EQ(f.audit.offdiag_ss_writes, 0u);
    EXPECT_EQ(f.audit.factored_slot_writes, 0u);
    EXPECT_EQ(f.audit.repeated_diagonal_updates, 0u);
    EXPECT_GT(f.audit.diagonal_ss_updates, 0u);
  }
}

TEST(Ulv, BatchedEqualsSequentialBitForBit) {
  auto h2 = build(gen_uniform_cube(1024, 6), 1.0, 64, 1e-6);
  FactorOptions seq, bat;
  seq.mode = ExecMode::sequential;
  bat.mode = ExecMode::batched;
  const ULVFactors a = factorize(h2, seq), b = factorize(h2, bat);
  EXPECT_EQ(a.root, b.root);
  for (std::size_t l = 1; l < a.levels.size(); ++l) {
    EXPECT_EQ(a.levels[l].lr_diag, b.levels[l].lr_diag);
    EXPECT_EQ(a.levels[l].lr_off, b.levels[l].lr_off);
    EXPECT_EQ(a.levels[l].ls, b.levels[l].ls);
    EXPECT_EQ(a.levels[l].ss, b.levels[l].ss);
  }
  EXPECT_EQ(a.total_flops().true_flops, b.total_flops().true_flops);
  EXPECT_GE(b.total_flops().padded_flops, b.total_flops().true_flops);
}

TEST(Ulv, TaskOrderDoesNotChangeFactors) {
  auto h2 = build(gen_sphere_surface(1024, 7), 1.5, 64, 1e-7);
  FactorOptions shuffled;
  shuffled.shuffle_seed = 99;
  const ULVFactors a = factorize(h2), b = factorize(h2, shuffled);
  EXPECT_EQ(a.root, b.root);
  for (std::size_t l = 1; l < a.levels.size(); ++l) EXPECT_EQ(a.levels[l].ss, b.levels[l].ss);
}

TEST(Ulv, IndefiniteMatrixReportsLevelAndBox) {
  BuildConfig c;
  c.leaf_max = 64;
  c.eta = 0.0;
  KernelSpec k;
  k.diagonal_shift = 1e-3;
  auto h2 = std::make_shared<const H2Matrix>(construct(k, gen_sphere_surface(512, 0), c));
  try {
    factorize(h2);
    FAIL();
  } catch (const NotPositiveDefinite& e) {
    EXPECT_GE(e.level(), 0);
    EXPECT_GE(e.box(), 0);
  }
}

TEST(Ulv, FlopsAreReportedPerLevelAndPhase) {
  auto h2 = build(gen_sphere_surface(1024, 1), 1.0, 64, 1e-7);
  const ULVFactors f = factorize(h2);
  std::uint64_t sum = 0;
  for (const auto& p : f.flops) sum += p.tally.true_flops;
  EXPECT_EQ(sum, f.total_flops().true_flops);
  std::uint64_t levels = 0;
  for (int l = 0; l <= h2->depth(); ++l) levels += f.level_flops(l).true_flops;
  EXPECT_EQ(levels, sum);
}

TEST(Ulv, RhsLengthChecked) {
  auto h2 = build(gen_sphere_surface(256, 1), 1.0, 64, 1e-7);
  const ULVFactors f = factorize(h2);
  EXPECT_THROW(forward_naive(f, DenseBlock(255, 1)), Error);
}
