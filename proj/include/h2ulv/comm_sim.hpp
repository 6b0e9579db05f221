#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "h2ulv/geometry.hpp"
#include "h2ulv/h2_build.hpp"
#include "h2ulv/ulv_factor.hpp"

namespace h2ulv {

// Block structure needed to plan communication: interaction lists plus the
// effective and skeleton sizes of every box.
struct CommStructure {
  int depth = 0;
  InteractionLists lists;
  std::vector<std::vector<std::size_t>> size;  // [level][box] effective size
  std::vector<std::vector<std::size_t>> skel;  // [level][box] skeleton size (0 at level 0)

  std::size_t red(int level, std::size_t i) const {
    return size[static_cast<std::size_t>(level)][i] - skel[static_cast<std::size_t>(level)][i];
  }
};

inline CommStructure comm_structure(const H2Matrix& h2) {
  CommStructure s;
  s.depth = h2.depth();
  s.lists = h2.lists;
  s.size.resize(static_cast<std::size_t>(s.depth) + 1);
  s.skel.resize(static_cast<std::size_t>(s.depth) + 1);
  for (int l = 0; l <= s.depth; ++l) {
    const auto& lv = h2.levels[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < lv.points.size(); ++i) {
      s.size[static_cast<std::size_t>(l)].push_back(lv.size(i));
      s.skel[static_cast<std::size_t>(l)].push_back(l == 0 ? 0 : lv.rank(i));
    }
  }
  return s;
}

// Structure-only variant: skeleton size = min(rank, effective size).
inline CommStructure comm_structure(const ClusterTree& tree, const InteractionLists& lists, std::size_t rank) {
  CommStructure s;
  s.depth = tree.depth;
  s.lists = lists;
  s.size.resize(static_cast<std::size_t>(s.depth) + 1);
  s.skel.resize(static_cast<std::size_t>(s.depth) + 1);
  for (int l = s.depth; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    const std::size_t nb = tree.boxes_at(l);
    s.size[lu].resize(nb);
    s.skel[lu].resize(nb);
    for (std::size_t i = 0; i < nb; ++i) {
      s.size[lu][i] = l == s.depth ? tree.box(l, i).size() : s.skel[lu + 1][2 * i] + s.skel[lu + 1][2 * i + 1];
      s.skel[lu][i] = l == 0 ? 0 : std::min(rank, s.size[lu][i]);
    }
  }
  return s;
}

// 1-D ownership: at levels ≥ log₂p each box has one owner (contiguous
// ranges); above, a box is replicated on the process group of its subtree.
struct ProcAssignment {
  std::size_t procs = 1;
  int split_level = 0;  // log₂p
  int depth = 0;

  // Half-open process range [first, last) holding box (level, i).
  std::pair<std::size_t, std::size_t> group(int level, std::size_t i) const {
    if (level >= split_level) {
      const std::size_t p = i >> (level - split_level);
      return {p, p + 1};
    }
    const std::size_t width = procs >> level;
    return {i * width, (i + 1) * width};
  }
  std::size_t owner(int level, std::size_t i) const { return group(level, i).first; }
  std::size_t group_size(int level) const { return level >= split_level ? 1 : procs >> level; }

  // Split communicators per level above log₂p, as a binary tree.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> comm_tree() const {
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> out(static_cast<std::size_t>(split_level));
    for (int l = 0; l < split_level; ++l)
      for (std::size_t i = 0; i < (std::size_t{1} << l); ++i) out[static_cast<std::size_t>(l)].push_back(group(l, i));
    return out;
  }
};

inline bool is_power_of_two(std::size_t p) { return p != 0 && (p & (p - 1)) == 0; }

inline ProcAssignment assign(int depth, std::size_t procs) {
  require(is_power_of_two(procs), ErrorKind::invalid_argument,
          "assign: process count " + std::to_string(procs) + " is not a power of two");
  require(procs <= (std::size_t{1} << depth), ErrorKind::invalid_argument,
          "assign: " + std::to_string(procs) + " processes exceed the " + std::to_string(std::size_t{1} << depth) +
              " leaf boxes");
  ProcAssignment a;
  a.procs = procs;
  a.depth = depth;
  while ((std::size_t{1} << a.split_level) < procs) ++a.split_level;
  return a;
}

inline ProcAssignment assign(const ClusterTree& tree, std::size_t procs) { return assign(tree.depth, procs); }

// ---------------------------------------------------------------------------
// Traces

enum class CommPhase { factor, forward, backward };
enum class CommKind { allreduce, allgather, neighbor_reduce, neighbor_bcast };

inline const char* to_string(CommPhase p) {
  switch (p) {
    case CommPhase::factor: return "factor";
    case CommPhase::forward: return "forward";
    case CommPhase::backward: return "backward";
  }
  return "?";
}

inline const char* to_string(CommKind k) {
  switch (k) {
    case CommKind::allreduce: return "allreduce";
    case CommKind::allgather: return "allgather";
    case CommKind::neighbor_reduce: return "neighbor_reduce";
    case CommKind::neighbor_bcast: return "neighbor_bcast";
  }
  return "?";
}

struct CommEvent {
  CommPhase phase = CommPhase::factor;
  int level = 0;
  CommKind kind = CommKind::allreduce;
  std::vector<std::size_t> participants;  // sorted process ids
  std::uint64_t bytes = 0;
};

struct CommTrace {
  std::size_t procs = 1;
  std::vector<CommEvent> events;

  std::vector<std::uint64_t> bytes_per_rank() const {
    std::vector<std::uint64_t> out(procs, 0);
    for (const auto& e : events)
      for (std::size_t p : e.participants) out[p] += e.bytes;
    return out;
  }
  std::vector<std::size_t> events_per_rank() const {
    std::vector<std::size_t> out(procs, 0);
    for (const auto& e : events)
      for (std::size_t p : e.participants) ++out[p];
    return out;
  }
  std::size_t count(CommPhase phase) const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [&](const CommEvent& e) { return e.phase == phase; }));
  }
  std::size_t count(CommKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [&](const CommEvent& e) { return e.kind == kind; }));
  }
};

namespace detail {

inline std::vector<std::size_t> members(std::pair<std::size_t, std::size_t> a, std::pair<std::size_t, std::size_t> b) {
  std::set<std::size_t> s;
  for (std::size_t p = a.first; p < a.second; ++p) s.insert(p);
  for (std::size_t p = b.first; p < b.second; ++p) s.insert(p);
  return {s.begin(), s.end()};
}

inline void push(CommTrace& t, CommPhase phase, int level, CommKind kind, std::vector<std::size_t> who,
                 std::uint64_t bytes) {
  if (bytes == 0 || who.size() < 2) return;
  t.events.push_back(CommEvent{phase, level, kind, std::move(who), bytes});
}

}  // namespace detail

// One AllReduce per parent near block (i ≥ j) at every merge whose children
// live on different processes, i.e. parent levels below log₂p.
inline CommTrace simulate_factor(const CommStructure& s, const ProcAssignment& a) {
  CommTrace t;
  t.procs = a.procs;
  for (int l = std::min(a.split_level, s.depth); l >= 1; --l) {
    const int pl = l - 1;
    const auto plu = static_cast<std::size_t>(pl);
    for (std::size_t i = 0; i < s.lists.near[plu].size(); ++i)
      for (std::size_t j : s.lists.near[plu][i]) {
        if (j > i) continue;
        const std::uint64_t bytes = 8ull * s.size[plu][i] * s.size[plu][j];
        detail::push(t, CommPhase::factor, pl, CommKind::allreduce, detail::members(a.group(pl, j), a.group(pl, j)),
                     bytes);
      }
  }
  return t;
}

// Neighbor traffic of the substitution plus vector-sized merges.
inline CommTrace simulate_solve(const CommStructure& s, const ProcAssignment& a) {
  CommTrace t;
  t.procs = a.procs;
  auto neighbors = [&](CommPhase phase, int l, bool forward) {
    const auto lu = static_cast<std::size_t>(l);
    const auto& near = s.lists.near[lu];
    std::set<std::pair<std::size_t, std::size_t>> bcast_seen;  // (source box, remote group start)
    for (std::size_t i = 0; i < near.size(); ++i)
      for (std::size_t j : near[i]) {
        if (a.group(l, i) == a.group(l, j)) continue;
        const auto who = detail::members(a.group(l, i), a.group(l, j));
        if (forward) {
          // L(s)_ji·y_i computed by the owner of column i, reduced into b_j^S
          detail::push(t, phase, l, CommKind::neighbor_reduce, who, 8ull * s.skel[lu][j]);
          // y_i^R needed by the remote row owner of L(r)_ji
          if (bcast_seen.insert({i, a.group(l, j).first}).second)
            detail::push(t, phase, l, CommKind::neighbor_bcast, who, 8ull * s.red(l, i));
        } else {
          // x_j^S and z'_j needed by the owner of box i
          if (bcast_seen.insert({j, a.group(l, i).first}).second)
            detail::push(t, phase, l, CommKind::neighbor_bcast, who, 8ull * s.size[lu][j]);
        }
      }
  };
  for (int l = s.depth; l >= 1; --l) {
    neighbors(CommPhase::forward, l, true);
    if (l <= a.split_level)
      for (std::size_t p = 0; p < (std::size_t{1} << (l - 1)); ++p)
        detail::push(t, CommPhase::forward, l - 1, CommKind::allreduce, detail::members(a.group(l - 1, p), a.group(l - 1, p)),
                     8ull * s.size[static_cast<std::size_t>(l) - 1][p]);
  }
  for (int l = 1; l <= s.depth; ++l) neighbors(CommPhase::backward, l, false);
  return t;
}

struct ReplicationSummary {
  std::size_t procs = 1;
  std::uint64_t distinct_flops = 0;
  std::uint64_t executed_flops = 0;
  std::uint64_t redundant_flops = 0;
  std::vector<std::uint64_t> redundant_per_level;

  double redundant_share() const {
    return executed_flops ? static_cast<double>(redundant_flops) / static_cast<double>(executed_flops) : 0.0;
  }
};

// Work at levels above log₂p (and the root) is executed by every process of
// the owning group.
inline ReplicationSummary replicated_work(const ProcAssignment& a, const std::vector<PhaseFlops>& flops) {
  ReplicationSummary r;
  r.procs = a.procs;
  r.redundant_per_level.assign(static_cast<std::size_t>(a.depth) + 1, 0);
  for (const auto& p : flops) {
    const std::uint64_t g = a.group_size(p.level);
    const std::uint64_t f = p.tally.true_flops;
    r.distinct_flops += f;
    r.executed_flops += f * g;
    r.redundant_flops += f * (g - 1);
    r.redundant_per_level[static_cast<std::size_t>(p.level)] += f * (g - 1);
  }
  return r;
}

inline void write_trace_csv(std::ostream& os, const CommTrace& t) {
  os << "phase,level,kind,participants,bytes\n";
  for (const auto& e : t.events) {
    os << to_string(e.phase) << ',' << e.level << ',' << to_string(e.kind) << ',';
    for (std::size_t k = 0; k < e.participants.size(); ++k) os << (k ? ";" : "") << e.participants[k];
    os << ',' << e.bytes << '\n';
  }
}

}  // namespace h2ulv
