#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "h2ulv/dense.hpp"
#include "h2ulv/parallel.hpp"

namespace h2ulv {

// One block operation of a level phase, described by its true dimensions.
//   cholesky / diag_fill: n×n (m = n)
//   tri_solve:            triangle n×n, m right-hand sides
//   multiply:             (m×k)·(k×n)
// variant separates ops of one kind that cannot share a batched call
// (transpose flags, solve side).
struct BlockOp {
  OpKind kind = OpKind::multiply;
  int variant = 0;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t ref = 0;  // caller's handle for the op's output block
};

struct BatchGroup {
  OpKind kind = OpKind::multiply;
  int variant = 0;
  std::size_t m = 0, n = 0, k = 0;  // padded dimensions shared by every op in the group
  std::vector<std::size_t> ops;     // indices into the planned op list
  std::size_t footprint = 0;        // doubles of padded temporary storage for the whole group
};

struct BatchPlan {
  std::vector<BatchGroup> groups;
  std::size_t budget = 0;  // doubles
  std::uint64_t true_flops = 0;
  std::uint64_t padded_flops = 0;

  std::uint64_t waste_flops() const { return padded_flops - true_flops; }
};

// Doubles of padded temporary storage one op needs (operands plus output).
inline std::size_t op_footprint(OpKind kind, std::size_t m, std::size_t n, std::size_t k) {
  switch (kind) {
    case OpKind::cholesky:
    case OpKind::diag_fill: return n * n;
    case OpKind::tri_solve: return n * n + m * n;
    case OpKind::multiply: return m * k + k * n + m * n;
  }
  return 0;
}

// Storage budget for a level: one padded sparsification footprint (input block,
// product, transformed block) per diagonal block.
inline std::size_t diagonal_budget(std::size_t diagonal_blocks, std::size_t padded_n) {
  return diagonal_blocks * 3 * padded_n * padded_n;
}

// Groups ops of one level and phase by (kind, variant), pads every dimension to
// the group maximum rounded up to a multiple of 4, and splits groups whose
// aggregate footprint exceeds `budget` doubles. A budget smaller than a single
// op's footprint is raised to that footprint.
inline BatchPlan plan_batches(const std::vector<BlockOp>& level_ops, std::size_t budget) {
  BatchPlan plan;
  std::vector<std::pair<OpKind, int>> keys;
  std::map<std::pair<int, int>, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < level_ops.size(); ++i) {
    const auto& op = level_ops[i];
    const std::pair<int, int> key{static_cast<int>(op.kind), op.variant};
    if (!members.count(key)) keys.emplace_back(op.kind, op.variant);
    members[key].push_back(i);
  }
  std::size_t effective_budget = budget;
  for (const auto& [kind, variant] : keys) {
    const auto& idx = members[{static_cast<int>(kind), variant}];
    std::size_t pm = 0, pn = 0, pk = 0;
    for (std::size_t i : idx) {
      pm = std::max(pm, level_ops[i].m);
      pn = std::max(pn, level_ops[i].n);
      pk = std::max(pk, level_ops[i].k);
    }
    pm = round_up4(pm);
    pn = round_up4(pn);
    pk = round_up4(pk);
    const std::size_t each = op_footprint(kind, pm, pn, pk);
    effective_budget = std::max(effective_budget, each);
    const std::size_t per_group = each == 0 ? idx.size() : std::max<std::size_t>(1, effective_budget / each);
    for (std::size_t start = 0; start < idx.size(); start += per_group) {
      BatchGroup g;
      g.kind = kind;
      g.variant = variant;
      g.m = pm;
      g.n = pn;
      g.k = pk;
      g.ops.assign(idx.begin() + static_cast<std::ptrdiff_t>(start),
                   idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), start + per_group)));
      g.footprint = each * g.ops.size();
      plan.groups.push_back(std::move(g));
    }
    for (std::size_t i : idx) {
      const auto& op = level_ops[i];
      plan.true_flops += flop_count(kind, op.m, op.n, op.k);
      plan.padded_flops += flop_count(kind, pm, pn, pk);
    }
  }
  plan.budget = effective_budget;
  return plan;
}

// ---------------------------------------------------------------------------
// Execution

enum class ExecMode { sequential, batched };

struct FlopTally {
  std::uint64_t true_flops = 0;
  std::uint64_t padded_flops = 0;
  std::size_t blocks = 0;

  FlopTally& operator+=(const FlopTally& o) {
    true_flops += o.true_flops;
    padded_flops += o.padded_flops;
    blocks += o.blocks;
    return *this;
  }
};

// c += scale·op(a)·op(b); c is pre-shaped by the caller.
struct MultiplyTask {
  const DenseBlock* a = nullptr;
  const DenseBlock* b = nullptr;
  bool transpose_a = false;
  bool transpose_b = false;
  double scale = 1.0;
  DenseBlock* c = nullptr;
};

struct CholeskyTask {
  const DenseBlock* a = nullptr;
  DenseBlock* l = nullptr;
  std::size_t box = 0;  // reported on pivot failure
};

struct TriSolveTask {
  const DenseBlock* l = nullptr;
  const DenseBlock* b = nullptr;
  Side side = Side::left;
  bool transposed = false;
  DenseBlock* x = nullptr;
};

namespace detail {

inline BlockOp describe(const MultiplyTask& t, std::size_t ref) {
  const std::size_t m = t.transpose_a ? t.a->cols() : t.a->rows();
  const std::size_t k = t.transpose_a ? t.a->rows() : t.a->cols();
  const std::size_t n = t.transpose_b ? t.b->rows() : t.b->cols();
  return BlockOp{OpKind::multiply, (t.transpose_a ? 2 : 0) + (t.transpose_b ? 1 : 0), m, n, k, ref};
}

inline BlockOp describe(const TriSolveTask& t, std::size_t ref) {
  const std::size_t n = t.l->rows();
  const std::size_t m = t.side == Side::left ? t.b->cols() : t.b->rows();
  return BlockOp{OpKind::tri_solve, (t.side == Side::right ? 2 : 0) + (t.transposed ? 1 : 0), m, n, 0, ref};
}

inline void crop_into(DenseBlock& dst, const DenseBlock& padded) {
  for (std::size_t i = 0; i < dst.rows(); ++i) std::copy_n(padded.row(i), dst.cols(), dst.row(i));
}

}  // namespace detail

// Executes independent block operations of one phase. Sequential mode runs
// each op on its true dimensions; batched mode plans groups and runs every op
// on zero-padded (unit-diagonal for triangles) operands, copying back the true
// region. Both produce identical values in the true region.
class BatchExecutor {
 public:
  BatchExecutor(ExecMode mode, std::size_t budget, std::size_t workers)
      : mode_(mode), budget_(budget), workers_(workers) {}

  ExecMode mode() const { return mode_; }
  void set_budget(std::size_t budget) { budget_ = budget; }

  FlopTally multiply(const std::vector<MultiplyTask>& tasks) {
    std::vector<BlockOp> ops;
    ops.reserve(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) ops.push_back(detail::describe(tasks[i], i));
    const BatchPlan plan = plan_batches(ops, budget_);
    last_plan_ = plan;
    if (mode_ == ExecMode::sequential) {
      parallel_for(tasks.size(), workers_, [&](std::size_t i) {
        const auto& t = tasks[i];
        multiply_into(*t.c, *t.a, *t.b, t.transpose_a, t.transpose_b, t.scale);
      });
    } else {
      for (const auto& g : plan.groups)
        parallel_for(g.ops.size(), workers_, [&](std::size_t s) {
          const auto& t = tasks[g.ops[s]];
          const DenseBlock a = t.transpose_a ? pad(*t.a, g.k, g.m) : pad(*t.a, g.m, g.k);
          const DenseBlock b = t.transpose_b ? pad(*t.b, g.n, g.k) : pad(*t.b, g.k, g.n);
          DenseBlock c = pad(*t.c, g.m, g.n);
          multiply_into(c, a, b, t.transpose_a, t.transpose_b, t.scale);
          detail::crop_into(*t.c, c);
        });
    }
    return tally(plan, tasks.size());
  }

  FlopTally cholesky(const std::vector<CholeskyTask>& tasks) {
    std::vector<BlockOp> ops;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const std::size_t n = tasks[i].a->rows();
      ops.push_back(BlockOp{OpKind::diag_fill, 0, n, n, 0, i});
      ops.push_back(BlockOp{OpKind::cholesky, 0, n, n, 0, i});
    }
    const BatchPlan plan = plan_batches(ops, budget_);
    last_plan_ = plan;
    auto run = [&](const CholeskyTask& t, std::size_t padded) {
      try {
        if (mode_ == ExecMode::sequential || padded == t.a->rows()) {
          *t.l = h2ulv::cholesky(*t.a);
        } else {
          const DenseBlock lp = h2ulv::cholesky(pad_for_cholesky(*t.a, padded));
          *t.l = lp.block(0, 0, t.a->rows(), t.a->rows());
        }
      } catch (const NotPositiveDefinite& e) {
        throw e.at(level_, static_cast<long>(t.box));
      }
    };
    if (mode_ == ExecMode::sequential) {
      parallel_for(tasks.size(), workers_, [&](std::size_t i) { run(tasks[i], 0); });
    } else {
      for (const auto& g : plan.groups) {
        if (g.kind != OpKind::cholesky) continue;
        parallel_for(g.ops.size(), workers_, [&](std::size_t s) { run(tasks[ops[g.ops[s]].ref], g.n); });
      }
    }
    return tally(plan, tasks.size());
  }

  FlopTally tri_solve(const std::vector<TriSolveTask>& tasks) {
    std::vector<BlockOp> ops;
    for (std::size_t i = 0; i < tasks.size(); ++i) ops.push_back(detail::describe(tasks[i], i));
    const BatchPlan plan = plan_batches(ops, budget_);
    last_plan_ = plan;
    if (mode_ == ExecMode::sequential) {
      parallel_for(tasks.size(), workers_, [&](std::size_t i) {
        const auto& t = tasks[i];
        *t.x = h2ulv::tri_solve(*t.l, *t.b, t.side, t.transposed);
      });
    } else {
      for (const auto& g : plan.groups)
        parallel_for(g.ops.size(), workers_, [&](std::size_t s) {
          const auto& t = tasks[g.ops[s]];
          const DenseBlock l = pad_for_cholesky(*t.l, g.n);
          const DenseBlock b = t.side == Side::left ? pad(*t.b, g.n, g.m) : pad(*t.b, g.m, g.n);
          const DenseBlock x = h2ulv::tri_solve(l, b, t.side, t.transposed);
          *t.x = DenseBlock(t.b->rows(), t.b->cols());
          detail::crop_into(*t.x, x);
        });
    }
    return tally(plan, tasks.size());
  }

  void set_level(int level) { level_ = level; }
  const BatchPlan& last_plan() const { return last_plan_; }

 private:
  FlopTally tally(const BatchPlan& plan, std::size_t blocks) const {
    return FlopTally{plan.true_flops, plan.padded_flops, blocks};
  }

  ExecMode mode_;
  std::size_t budget_;
  std::size_t workers_;
  int level_ = -1;
  BatchPlan last_plan_;
};

}  // namespace h2ulv
