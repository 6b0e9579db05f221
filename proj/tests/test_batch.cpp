#include <gtest/gtest.h>

#include <random>
#include <set>

#include "h2ulv/batch.hpp"
#include "h2ulv/oracle.hpp"

using namespace h2ulv;

TEST(Batch, FootprintsAndBudget) {
  EXPECT_EQ(op_footprint(OpKind::multiply, 2, 3, 4), 2u * 4 + 4 * 3 + 2 * 3);
  EXPECT_EQ(op_footprint(OpKind::tri_solve, 2, 3, 0), 9u + 6);
  EXPECT_EQ(op_footprint(OpKind::cholesky, 5, 5, 0), 25u);
  EXPECT_EQ(diagonal_budget(4, 8), 4u * 3 * 64);
}

TEST(Batch, PlanProperties) {
  std::mt19937_64 rng(1);
  std::vector<BlockOp> ops;
  for (std::size_t i = 0; i < 200; ++i) {
    const auto kind = static_cast<OpKind>(rng() % 3);
    ops.push_back(BlockOp{kind, static_cast<int>(rng() % 2), 1 + rng() % 30, 1 + rng() % 30, 1 + rng() % 30, i});
  }
  for (std::size_t budget : {std::size_t{10}, std::size_t{5000}, std::size_t{1} << 30}) {
    const BatchPlan plan = plan_batches(ops, budget);
    std::multiset<std::size_t> seen;
    std::uint64_t true_flops = 0;
    for (const auto& g : plan.groups) {
      EXPECT_EQ(g.m % 4, 0u);
      EXPECT_EQ(g.n % 4, 0u);
      EXPECT_EQ(g.k % 4, 0u);
      if (g.ops.size() > 1) EXPECT_LE(g.footprint, plan.budget);
      for (std::size_t o : g.ops) {
        seen.insert(o);
        EXPECT_EQ(ops[o].kind, g.kind);
        EXPECT_EQ(ops[o].variant, g.variant);
        EXPECT_LE(ops[o].m, g.m);
        EXPECT_LE(ops[o].n, g.n);
        EXPECT_LE(ops[o].k, g.k);
        true_flops += flop_count(ops[o].kind, ops[o].m, ops[o].n, ops[o].k);
      }
    }
    EXPECT_EQ(seen.size(), ops.size());
    for (std::size_t i = 0; i < ops.size(); ++i) EXPECT_EQ(seen.count(i), 1u);
    EXPECT_EQ(plan.true_flops, true_flops);
    EXPECT_GE(plan.padded_flops, plan.true_flops);
  }
}

TEST(Batch, BatchedMatchesSequentialBitForBit) {
  std::vector<DenseBlock> a, b, c_seq, c_bat, l, x_seq, x_bat, s, l_seq, l_bat;
  for (std::size_t i = 0; i < 12; ++i) {
    const std::size_t m = 3 + i, k = 5 + (i * 7) % 11, n = 2 + (i * 3) % 5;
    a.push_back(random_block(m, k, i));
    b.push_back(random_block(k, n, 100 + i));
    c_seq.push_back(random_block(m, n, 200 + i));
    const DenseBlock g = random_block(m, m, 300 + i);
    DenseBlock spd = multiply(g, g, false, true);
    for (std::size_t d = 0; d < m; ++d) spd(d, d) += static_cast<double>(m);
    s.push_back(spd);
  }
  c_bat = c_seq;
  l_seq.resize(12);
  l_bat.resize(12);
  x_seq.resize(12);
  x_bat.resize(12);
  for (auto mode : {ExecMode::sequential, ExecMode::batched}) {
    BatchExecutor ex(mode, 2000, 1);
    auto& c = mode == ExecMode::sequential ? c_seq : c_bat;
    auto& lo = mode == ExecMode::sequential ? l_seq : l_bat;
    auto& xo = mode == ExecMode::sequential ? x_seq : x_bat;
    std::vector<MultiplyTask> mt;
    for (std::size_t i = 0; i < 12; ++i) mt.push_back(MultiplyTask{&a[i], &b[i], false, false, -1.0, &c[i]});
    ex.multiply(mt);
    std::vector<CholeskyTask> ct;
    for (std::size_t i = 0; i < 12; ++i) ct.push_back(CholeskyTask{&s[i], &lo[i], i});
    ex.cholesky(ct);
    std::vector<TriSolveTask> tt;
    for (std::size_t i = 0; i < 12; ++i) tt.push_back(TriSolveTask{&lo[i], &c[i], Side::left, i % 2 == 1, &xo[i]});
    ex.tri_solve(tt);
  }
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(c_seq[i], c_bat[i]);
    EXPECT_EQ(l_seq[i], l_bat[i]);
    EXPECT_EQ(x_seq[i], x_bat[i]);
  }
}

TEST(Batch, CholeskyFailureCarriesLevelAndBox) {
  DenseBlock bad{{1, 2}, {2, 1}};
  DenseBlock out;
  BatchExecutor ex(ExecMode::batched, 100, 1);
  ex.set_level(3);
  try {
    ex.cholesky({CholeskyTask{&bad, &out, 7}});
    FAIL();
  } catch (const NotPositiveDefinite& e) {
    EXPECT_EQ(e.level(), 3);
    EXPECT_EQ(e.box(), 7);
  }
}
