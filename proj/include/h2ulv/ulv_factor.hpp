#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "h2ulv/batch.hpp"
#include "h2ulv/dense.hpp"
#include "h2ulv/h2_build.hpp"

namespace h2ulv {

// ---------------------------------------------------------------------------
// Write audit

enum class SlotPart { rr, rs, sr, ss };

inline const char* to_string(SlotPart p) {
  switch (p) {
    case SlotPart::rr: return "RR";
    case SlotPart::rs: return "RS";
    case SlotPart::sr: return "SR";
    case SlotPart::ss: return "SS";
  }
  return "?";
}

struct AuditReport {
  bool enabled = false;
  std::uint64_t initial_writes = 0;
  std::uint64_t diagonal_ss_updates = 0;
  std::uint64_t repeated_diagonal_updates = 0;
  std::uint64_t offdiag_ss_writes = 0;   // after initialization
  std::uint64_t factored_slot_writes = 0;  // RR/RS/SR after initialization
  std::vector<std::string> violations;

  bool clean() const {
    return repeated_diagonal_updates == 0 && offdiag_ss_writes == 0 && factored_slot_writes == 0;
  }
};

// Records every store into a sparsified slot (level, i, j, part). A slot may
// be initialized once; afterwards only diagonal SS slots may be updated, once.
class WriteAudit {
 public:
  explicit WriteAudit(bool enabled) { report_.enabled = enabled; }

  void initial(int level, std::size_t i, std::size_t j, SlotPart part) {
    if (!report_.enabled) return;
    auto& state = slots_[{level, i, j, static_cast<int>(part)}];
    if (state == 0) {
      state = 1;
      ++report_.initial_writes;
      return;
    }
    violation(level, i, j, part, "re-initialized");
  }

  void update(int level, std::size_t i, std::size_t j, SlotPart part) {
    if (!report_.enabled) return;
    auto& state = slots_[{level, i, j, static_cast<int>(part)}];
    if (i == j && part == SlotPart::ss && state == 1) {
      state = 2;
      ++report_.diagonal_ss_updates;
      return;
    }
    violation(level, i, j, part, state == 0 ? "written before initialization" : "written after initialization");
  }

  const AuditReport& report() const { return report_; }

 private:
  void violation(int level, std::size_t i, std::size_t j, SlotPart part, const char* what) {
    if (i == j && part == SlotPart::ss)
      ++report_.repeated_diagonal_updates;
    else if (part == SlotPart::ss)
      ++report_.offdiag_ss_writes;
    else
      ++report_.factored_slot_writes;
    report_.violations.push_back("level " + std::to_string(level) + " (" + std::to_string(i) + "," +
                                 std::to_string(j) + ") " + to_string(part) + ": " + what);
  }

  std::map<std::tuple<int, std::size_t, std::size_t, int>, int> slots_;
  AuditReport report_;
};

// ---------------------------------------------------------------------------
// Factor storage

struct ULVLevel {
  std::vector<std::size_t> red;   // redundant size per box
  std::vector<std::size_t> skel;  // skeleton size per box
  std::vector<DenseBlock> lr_diag;
  std::map<BlockKey, DenseBlock> lr_off;    // (i, j), i > j near
  std::map<BlockKey, DenseBlock> ls;        // (j, i) for every near pair: skel_j × red_i
  std::vector<DenseBlock> v;                // q_red·L(r)_ii⁻ᵀ
  std::map<BlockKey, DenseBlock> ss;        // (i, j), i ≥ j, near and far: skeleton remainders
  std::map<BlockKey, DenseBlock> retained;  // (i, j), i ≥ j near: Qᵢᵀ A_ij Q_j before elimination
};

struct ChildSource {
  BlockKey child;
  bool far = false;
  bool transposed = false;  // read as the transpose of the stored (j, i) slot
};

struct MergeRecord {
  BlockKey parent;
  std::array<ChildSource, 4> sources;  // (2i,2j), (2i,2j+1), (2i+1,2j), (2i+1,2j+1)
};

struct PhaseFlops {
  int level = 0;
  std::string phase;
  FlopTally tally;
};

struct FactorOptions {
  ExecMode mode = ExecMode::batched;
  bool audit = false;
  bool retain = false;  // keep sparsified blocks for fill-in verification
  std::size_t workers = 1;
  std::optional<std::uint64_t> shuffle_seed;  // permutes task order inside every phase
};

struct ULVFactors {
  std::shared_ptr<const H2Matrix> h2;
  std::vector<ULVLevel> levels;                   // index = tree level; 0 unused
  std::vector<std::vector<MergeRecord>> merge_map;  // index = parent level
  DenseBlock root;
  std::vector<PhaseFlops> flops;
  AuditReport audit;
  bool retained = false;

  int depth() const { return h2->depth(); }

  FlopTally total_flops() const {
    FlopTally t;
    for (const auto& p : flops) t += p.tally;
    return t;
  }
  FlopTally level_flops(int level) const {
    FlopTally t;
    for (const auto& p : flops)
      if (p.level == level) t += p.tally;
    return t;
  }
};

// ---------------------------------------------------------------------------
// Single-block operations

struct SparsifiedBlock {
  DenseBlock rr, rs, sr, ss;
};

inline SparsifiedBlock split_block(const DenseBlock& t, std::size_t red_rows, std::size_t red_cols) {
  const std::size_t sr = t.rows() - red_rows, sc = t.cols() - red_cols;
  return SparsifiedBlock{t.block(0, 0, red_rows, red_cols), t.block(0, red_cols, red_rows, sc),
                         t.block(red_rows, 0, sr, red_cols), t.block(red_rows, red_cols, sr, sc)};
}

// Qᵀ·a_ii·Q with Q = [q_red | q_skel], split [RR RS; SR SS].
inline SparsifiedBlock sparsify_diag(const BasisDecomposition& basis, const DenseBlock& a_ii) {
  require(a_ii.rows() == basis.size() && a_ii.cols() == basis.size(), ErrorKind::dimension_mismatch,
          "sparsify_diag: block does not match the basis");
  const DenseBlock q = basis.full();
  return split_block(multiply(q, multiply(a_ii, q), true, false), basis.redundant(), basis.redundant());
}

struct DiagonalFactor {
  DenseBlock lr;  // L(r)_ii
  DenseBlock ls;  // L(s)_ii
  DenseBlock ss;  // SS − L(s)_ii L(s)_iiᵀ
  DenseBlock v;   // q_red·L(r)_ii⁻ᵀ
};

inline DiagonalFactor factor_diag(const DenseBlock& rr, const DenseBlock& sr, const DenseBlock& ss,
                                  const BasisDecomposition& basis) {
  DiagonalFactor f;
  f.lr = cholesky(rr);
  f.ls = tri_solve(f.lr, sr, Side::right, true);
  f.ss = ss;
  multiply_into(f.ss, f.ls, f.ls, false, true, -1.0);
  f.v = tri_solve(f.lr, basis.q_red, Side::right, true);
  return f;
}

struct OffDiagonalFactor {
  DenseBlock lr;      // L(r)_ij
  DenseBlock ls;      // L(s)_ij
  DenseBlock rs;      // q_red_iᵀ A_ij q_skel_j, untransformed
  DenseBlock ss;      // q_skel_iᵀ A_ij q_skel_j
};

// Left transform by Q_iᵀ, right transform by [V_j | q_skel_j], so the RR and
// SR slabs arrive already solved against L(r)_jj.
inline OffDiagonalFactor sparsify_off(const BasisDecomposition& basis_i, const DenseBlock& a_ij,
                                      const DenseBlock& v_j, const BasisDecomposition& basis_j) {
  require(a_ij.rows() == basis_i.size() && a_ij.cols() == basis_j.size(), ErrorKind::dimension_mismatch,
          "sparsify_off: block does not match the bases");
  const DenseBlock right = hconcat(v_j, basis_j.q_skel);
  const DenseBlock t = multiply(basis_i.full(), multiply(a_ij, right), true, false);
  auto s = split_block(t, basis_i.redundant(), basis_j.redundant());
  return OffDiagonalFactor{std::move(s.rr), std::move(s.sr), std::move(s.rs), std::move(s.ss)};
}

// ---------------------------------------------------------------------------
// Factorization driver

namespace detail {

inline DenseBlock read_ss(const std::map<BlockKey, DenseBlock>& ss, std::size_t i, std::size_t j) {
  const bool flip = i < j;
  const auto it = ss.find(flip ? BlockKey{j, i} : BlockKey{i, j});
  require(it != ss.end(), ErrorKind::structural,
          "merge: missing child SS slot (" + std::to_string(i) + "," + std::to_string(j) + ")");
  return flip ? it->second.transposed() : it->second;
}

template <typename T>
void maybe_shuffle(std::vector<T>& tasks, const std::optional<std::uint64_t>& seed, std::uint64_t salt) {
  if (!seed) return;
  std::mt19937_64 rng(*seed ^ (salt * 0x9E3779B97F4A7C15ull));
  std::shuffle(tasks.begin(), tasks.end(), rng);
}

}  // namespace detail

// Assembles the parent-level near blocks (i ≥ j) from the 2×2 child SS slots.
inline std::map<BlockKey, DenseBlock> merge_level(const ULVLevel& child, const InteractionLists& lists,
                                                  int parent_level, std::vector<MergeRecord>* records) {
  std::map<BlockKey, DenseBlock> out;
  const auto pl = static_cast<std::size_t>(parent_level);
  const auto cl = pl + 1;
  for (std::size_t i = 0; i < lists.near[pl].size(); ++i)
    for (std::size_t j : lists.near[pl][i]) {
      if (j > i) continue;
      MergeRecord rec{{i, j}, {}};
      const std::size_t rows = child.skel[2 * i] + child.skel[2 * i + 1];
      const std::size_t cols = child.skel[2 * j] + child.skel[2 * j + 1];
      DenseBlock block(rows, cols);
      std::size_t s = 0;
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b, ++s) {
          const std::size_t ci = 2 * i + a, cj = 2 * j + b;
          const bool is_far = lists.is_far(static_cast<int>(cl), ci, cj);
          require(is_far || lists.is_near(static_cast<int>(cl), ci, cj), ErrorKind::structural,
                  "merge: child pair (" + std::to_string(ci) + "," + std::to_string(cj) + ") is in no list");
          rec.sources[s] = ChildSource{{ci, cj}, is_far, ci < cj};
          block.set_block(a == 0 ? 0 : child.skel[2 * i], b == 0 ? 0 : child.skel[2 * j],
                          detail::read_ss(child.ss, ci, cj));
        }
      out.emplace(BlockKey{i, j}, std::move(block));
      if (records) records->push_back(rec);
    }
  return out;
}

// Couplings become the far-pair SS slots.
inline void inject_couplings(ULVLevel& level, const H2Level& h2_level, int level_index, WriteAudit& audit) {
  for (const auto& [key, s] : h2_level.couplings) {
    level.ss[key] = s;
    audit.initial(level_index, key.first, key.second, SlotPart::ss);
  }
}

namespace detail {

struct LevelInput {
  int level;
  const std::map<BlockKey, DenseBlock>* blocks;  // level matrix, near pairs i ≥ j
};

inline void factor_level(ULVFactors& f, const LevelInput& in, const FactorOptions& opt, WriteAudit& audit) {
  const H2Matrix& h2 = *f.h2;
  const int l = in.level;
  const auto lu = static_cast<std::size_t>(l);
  const auto& bases = h2.levels[lu].bases;
  const auto& near = h2.lists.near[lu];
  const std::size_t nb = bases.size();
  ULVLevel& out = f.levels[lu];
  out.red.resize(nb);
  out.skel.resize(nb);
  std::size_t max_n = 0;
  for (std::size_t i = 0; i < nb; ++i) {
    out.red[i] = bases[i].redundant();
    out.skel[i] = bases[i].rank;
    max_n = std::max(max_n, bases[i].size());
  }
  BatchExecutor exec(opt.mode, diagonal_budget(nb, round_up4(max_n)), opt.workers);
  exec.set_level(l);
  auto record = [&](const char* phase, const FlopTally& t) {
    for (auto& p : f.flops)
      if (p.level == l && p.phase == phase) {
        p.tally += t;
        return;
      }
    f.flops.push_back(PhaseFlops{l, phase, t});
  };

  std::vector<std::size_t> order(nb);
  std::iota(order.begin(), order.end(), std::size_t{0});
  detail::maybe_shuffle(order, opt.shuffle_seed, static_cast<std::uint64_t>(l) * 8 + 1);

  // sparsify diagonals: Qᵀ (A Q)
  std::vector<DenseBlock> q(nb), aq(nb), t(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    q[i] = bases[i].full();
    aq[i] = DenseBlock(bases[i].size(), bases[i].size());
    t[i] = DenseBlock(bases[i].size(), bases[i].size());
  }
  {
    std::vector<MultiplyTask> first, second;
    for (std::size_t i : order) {
      first.push_back(MultiplyTask{&in.blocks->at({i, i}), &q[i], false, false, 1.0, &aq[i]});
      second.push_back(MultiplyTask{&q[i], &aq[i], true, false, 1.0, &t[i]});
    }
    FlopTally tally = exec.multiply(first);
    tally += exec.multiply(second);
    record("sparsify_diag", tally);
  }
  std::vector<SparsifiedBlock> diag(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    diag[i] = split_block(t[i], out.red[i], out.red[i]);
    for (SlotPart p : {SlotPart::rr, SlotPart::rs, SlotPart::sr, SlotPart::ss}) audit.initial(l, i, i, p);
    if (opt.retain) out.retained[{i, i}] = std::move(t[i]);
  }
  aq.clear();
  t.clear();

  // factor diagonals
  out.lr_diag.assign(nb, DenseBlock());
  out.v.assign(nb, DenseBlock());
  std::vector<DenseBlock> ls_diag(nb), ss_diag(nb);
  {
    std::vector<CholeskyTask> chol;
    for (std::size_t i : order) chol.push_back(CholeskyTask{&diag[i].rr, &out.lr_diag[i], i});
    FlopTally tally = exec.cholesky(chol);
    std::vector<TriSolveTask> solves;
    for (std::size_t i : order) {
      solves.push_back(TriSolveTask{&out.lr_diag[i], &diag[i].sr, Side::right, true, &ls_diag[i]});
      solves.push_back(TriSolveTask{&out.lr_diag[i], &bases[i].q_red, Side::right, true, &out.v[i]});
    }
    tally += exec.tri_solve(solves);
    std::vector<MultiplyTask> schur;
    for (std::size_t i : order) {
      ss_diag[i] = diag[i].ss;
      schur.push_back(MultiplyTask{&ls_diag[i], &ls_diag[i], false, true, -1.0, &ss_diag[i]});
    }
    tally += exec.multiply(schur);
    record("factor_diag", tally);
  }
  for (std::size_t i = 0; i < nb; ++i) {
    out.ls[{i, i}] = std::move(ls_diag[i]);
    out.ss[{i, i}] = std::move(ss_diag[i]);
    audit.update(l, i, i, SlotPart::ss);
  }
  diag.clear();

  // sparsify off-diagonal near pairs (i > j)
  std::vector<BlockKey> pairs;
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j : near[i])
      if (i > j) pairs.emplace_back(i, j);
  detail::maybe_shuffle(pairs, opt.shuffle_seed, static_cast<std::uint64_t>(l) * 8 + 2);
  {
    std::vector<DenseBlock> right(nb);
    for (std::size_t j = 0; j < nb; ++j) right[j] = hconcat(out.v[j], bases[j].q_skel);
    std::vector<DenseBlock> w(pairs.size()), tt(pairs.size()), mirror(pairs.size());
    std::vector<MultiplyTask> first, second;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [i, j] = pairs[p];
      w[p] = DenseBlock(bases[i].size(), bases[j].size());
      tt[p] = DenseBlock(bases[i].size(), bases[j].size());
      first.push_back(MultiplyTask{&in.blocks->at({i, j}), &right[j], false, false, 1.0, &w[p]});
      second.push_back(MultiplyTask{&q[i], &w[p], true, false, 1.0, &tt[p]});
    }
    FlopTally tally = exec.multiply(first);
    tally += exec.multiply(second);
    w.clear();
    std::vector<SparsifiedBlock> parts(pairs.size());
    std::vector<DenseBlock> rs_t(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [i, j] = pairs[p];
      parts[p] = split_block(tt[p], out.red[i], out.red[j]);
      rs_t[p] = parts[p].rs.transposed();
    }
    tt.clear();
    std::vector<TriSolveTask> solves;
    for (std::size_t p = 0; p < pairs.size(); ++p)
      solves.push_back(TriSolveTask{&out.lr_diag[pairs[p].first], &rs_t[p], Side::right, true, &mirror[p]});
    tally += exec.tri_solve(solves);
    record("sparsify_off", tally);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [i, j] = pairs[p];
      for (SlotPart s : {SlotPart::rr, SlotPart::rs, SlotPart::sr, SlotPart::ss}) audit.initial(l, i, j, s);
      out.lr_off[{i, j}] = std::move(parts[p].rr);
      out.ls[{i, j}] = std::move(parts[p].sr);
      out.ls[{j, i}] = std::move(mirror[p]);
      out.ss[{i, j}] = std::move(parts[p].ss);
    }
  }

  if (opt.retain) {
    for (const auto& [i, j] : pairs) {
      const DenseBlock& a = in.blocks->at({i, j});
      out.retained[{i, j}] = multiply(q[i], multiply(a, q[j]), true, false);
    }
  }

  inject_couplings(out, h2.levels[lu], l, audit);
}

}  // namespace detail

// ULV factorization, levels from the leaves up, then the root Cholesky.
inline ULVFactors factorize(std::shared_ptr<const H2Matrix> h2, const FactorOptions& opt = {}) {
  require(h2 != nullptr, ErrorKind::invalid_argument, "factorize: no H2 matrix");
  ULVFactors f;
  f.h2 = h2;
  f.retained = opt.retain;
  const int depth = h2->depth();
  f.levels.resize(static_cast<std::size_t>(depth) + 1);
  f.merge_map.resize(static_cast<std::size_t>(depth) + 1);
  WriteAudit audit(opt.audit);

  const std::map<BlockKey, DenseBlock>* blocks = &h2->levels[static_cast<std::size_t>(depth)].near;
  std::map<BlockKey, DenseBlock> merged;
  for (int l = depth; l >= 1; --l) {
    detail::factor_level(f, detail::LevelInput{l, blocks}, opt, audit);
    auto next = merge_level(f.levels[static_cast<std::size_t>(l)], h2->lists, l - 1,
                            &f.merge_map[static_cast<std::size_t>(l) - 1]);
    merged = std::move(next);
    blocks = &merged;
    f.flops.push_back(PhaseFlops{l, "merge", FlopTally{0, 0, merged.size()}});
  }

  const DenseBlock& a00 = blocks->at({0, 0});
  BatchExecutor exec(opt.mode, round_up4(a00.rows()) * round_up4(a00.rows()), opt.workers);
  exec.set_level(0);
  std::vector<CholeskyTask> task{CholeskyTask{&a00, &f.root, 0}};
  f.flops.push_back(PhaseFlops{0, "root", exec.cholesky(task)});
  f.audit = audit.report();
  return f;
}

inline ULVFactors factorize(const H2Matrix& h2, const FactorOptions& opt = {}) {
  return factorize(std::make_shared<const H2Matrix>(h2), opt);
}

}  // namespace h2ulv
