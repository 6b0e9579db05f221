#include <gtest/gtest.h>

#include <sstream>

#include "h2ulv/comm_sim.hpp"

using namespace h2ulv;

namespace {

struct Structure {
  ClusterTree tree;
  InteractionLists lists;
};

Structure structure(std::size_t n, std::size_t leaf, double eta) {
  PointCloud c = gen_uniform_cube(n, 1);
  Structure s;
  s.tree = build_tree(c, leaf);
  s.lists = build_interaction_lists(s.tree, eta);
  return s;
}

}  // namespace

TEST(CommSim, AssignmentIsContiguous) {
  const ProcAssignment a = assign(5, 8);
  EXPECT_EQ(a.split_level, 3);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(a.owner(5, i), i / 4);
  EXPECT_EQ(a.group(1, 1), (std::pair<std::size_t, std::size_t>{4, 8}));
  EXPECT_EQ(a.group_size(0), 8u);
  EXPECT_EQ(a.group_size(4), 1u);
  EXPECT_EQ(a.comm_tree().size(), 3u);
}

TEST(CommSim, AssignmentPreconditions) {
  EXPECT_THROW(assign(4, 3), Error);
  EXPECT_THROW(assign(2, 8), Error);
  EXPECT_NO_THROW(assign(3, 8));
}

TEST(CommSim, SingleProcessHasNoEvents) {
  const Structure s = structure(4096, 128, 1.0);
  const CommStructure cs = comm_structure(s.tree, s.lists, 30);
  const ProcAssignment a = assign(s.tree, 1);
  EXPECT_TRUE(simulate_factor(cs, a).events.empty());
  EXPECT_TRUE(simulate_solve(cs, a).events.empty());
  std::ostringstream os;
  write_trace_csv(os, simulate_factor(cs, a));
  EXPECT_EQ(os.str(), "phase,level,kind,participants,bytes\n");
}

TEST(CommSim, FactorEventsIndependentOfN) {
  std::vector<std::size_t> counts;
  for (std::size_t n : {1u << 13, 1u << 15, 1u << 17}) {
    const Structure s = structure(n, 128, 1.0);
    const CommStructure cs = comm_structure(s.tree, s.lists, 30);
    counts.push_back(simulate_factor(cs, assign(s.tree, 8)).events.size());
  }
  EXPECT_EQ(counts[0], counts[1]);
  EXPECT_EQ(counts[1], counts[2]);
  EXPECT_GT(counts[0], 0u);
}

TEST(CommSim, FactorEventsMatchParentNearPairs) {
  const Structure s = structure(8192, 256, 1.0);
  const CommStructure cs = comm_structure(s.tree, s.lists, 30);
  const ProcAssignment a = assign(s.tree, 8);
  std::size_t expected = 0;
  for (int pl = 0; pl < a.split_level; ++pl)
    for (std::size_t i = 0; i < s.tree.boxes_at(pl); ++i)
      for (std::size_t j : s.lists.near[static_cast<std::size_t>(pl)][i])
        if (j <= i) ++expected;
  const CommTrace t = simulate_factor(cs, a);
  EXPECT_EQ(t.events.size(), expected);
  for (const auto& e : t.events) {
    EXPECT_EQ(e.kind, CommKind::allreduce);
    EXPECT_GE(e.participants.size(), 2u);
    EXPECT_GT(e.bytes, 0u);
  }
}

TEST(CommSim, SolveEventsInvolveDistinctOwners) {
  const Structure s = structure(8192, 128, 1.5);
  const CommStructure cs = comm_structure(s.tree, s.lists, 20);
  const ProcAssignment a = assign(s.tree, 4);
  const CommTrace t = simulate_solve(cs, a);
  EXPECT_GT(t.count(CommKind::neighbor_reduce), 0u);
  EXPECT_GT(t.count(CommKind::neighbor_bcast), 0u);
  EXPECT_GT(t.count(CommPhase::forward), 0u);
  EXPECT_GT(t.count(CommPhase::backward), 0u);
  for (const auto& e : t.events) EXPECT_GE(e.participants.size(), 2u);
  const auto bytes = t.bytes_per_rank();
  for (auto b : bytes) EXPECT_GT(b, 0u);
}

TEST(CommSim, RedundantShareGrowsWithProcesses) {
  std::vector<PhaseFlops> flops;
  for (int l = 0; l <= 6; ++l) flops.push_back(PhaseFlops{l, "factor_diag", FlopTally{1000, 1000, 1}});
  double prev = -1.0;
  for (std::size_t p : {1u, 2u, 4u, 8u, 16u}) {
    const ReplicationSummary r = replicated_work(assign(6, p), flops);
    EXPECT_EQ(r.distinct_flops, 7000u);
    EXPECT_EQ(r.executed_flops, r.distinct_flops + r.redundant_flops);
    EXPECT_GT(r.redundant_share(), prev);
    prev = r.redundant_share();
  }
  EXPECT_EQ(replicated_work(assign(6, 1), flops).redundant_flops, 0u);
}
