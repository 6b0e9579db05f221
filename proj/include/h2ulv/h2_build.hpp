#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "h2ulv/dense.hpp"
#include "h2ulv/geometry.hpp"
#include "h2ulv/id.hpp"
#include "h2ulv/kernels.hpp"
#include "h2ulv/parallel.hpp"

namespace h2ulv {

struct BuildConfig {
  double eta = 1.0;
  std::size_t leaf_max = 256;
  std::optional<std::size_t> rank;
  std::optional<double> tol = 1e-7;
  std::size_t s_far = 0;   // 0 = use every far point
  std::size_t s_near = 0;  // 0 = use every near point
  int gs_sweeps = 2;       // 0 = exact close-field inverse
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const {
    require(eta >= 0.0, ErrorKind::invalid_argument, "build: eta must be non-negative");
    require(leaf_max >= 1, ErrorKind::invalid_argument, "build: leaf_max must be positive");
    require(rank.has_value() != tol.has_value(), ErrorKind::invalid_argument,
            "build: exactly one of rank and tol must be set");
    require(!rank || *rank >= 1, ErrorKind::invalid_argument, "build: rank must be positive");
    require(!tol || *tol > 0.0, ErrorKind::invalid_argument, "build: tol must be positive");
    require(gs_sweeps >= 0, ErrorKind::invalid_argument, "build: gs sweeps must be non-negative");
  }
};

using BlockKey = std::pair<std::size_t, std::size_t>;

// Per-level data of the H² matrix. Box i at this level acts on the global
// points `points[i]` (leaf: its own points; upper: its children's skeletons),
// expressed in the frame `transfer[i]` (empty at the leaf level = identity).
struct H2Level {
  std::vector<std::vector<std::size_t>> points;
  std::vector<DenseBlock> transfer;
  std::vector<BasisDecomposition> bases;
  std::vector<std::vector<std::size_t>> skeleton;  // global point indices
  std::map<BlockKey, DenseBlock> near;             // i ≥ j, leaf level only
  std::map<BlockKey, DenseBlock> couplings;        // i ≥ j far pairs

  std::size_t size(std::size_t i) const { return points[i].size(); }
  std::size_t rank(std::size_t i) const { return bases.empty() ? 0 : bases[i].rank; }
};

struct BuildStats {
  std::uint64_t prefactor_flops = 0;
  double max_relative_residual = 0.0;  // worst ID residual over boxes, relative to the sample norm
  std::size_t max_rank = 0;
  std::size_t clamped_boxes = 0;
};

struct H2Matrix {
  PointCloud cloud;  // tree order; cloud.perm maps back to input order
  ClusterTree tree;
  InteractionLists lists;
  KernelSpec kernel;
  BuildConfig config;
  std::vector<H2Level> levels;  // index = tree level; level 0 holds the root's points only
  BuildStats stats;

  int depth() const { return tree.depth; }
  std::size_t count() const { return cloud.count(); }

  // Synthesizes the (j, i) orientation from the stored (i, j) block.
  DenseBlock near_block(std::size_t i, std::size_t j) const {
    const auto& m = levels[static_cast<std::size_t>(depth())].near;
    if (i >= j) return m.at({i, j});
    return m.at({j, i}).transposed();
  }
  DenseBlock coupling(int level, std::size_t i, std::size_t j) const {
    const auto& m = levels[static_cast<std::size_t>(level)].couplings;
    if (i >= j) return m.at({i, j});
    return m.at({j, i}).transposed();
  }
};

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint64_t out = 0;
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out;
}

// Round-robin over shuffled groups until `budget` indices are taken. Budget 0
// or a budget covering everything returns the full union. Output is sorted.
inline std::vector<std::size_t> stratified_sample(const std::vector<std::vector<std::size_t>>& groups,
                                                  std::size_t budget, std::uint64_t seed) {
  std::size_t total = 0;
  for (const auto& g : groups) total += g.size();
  std::vector<std::size_t> out;
  out.reserve(budget == 0 ? total : std::min(budget, total));
  if (budget == 0 || budget >= total) {
    for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  } else {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::size_t>> shuffled = groups;
    for (auto& g : shuffled) std::shuffle(g.begin(), g.end(), rng);
    for (std::size_t round = 0; out.size() < budget; ++round)
      for (const auto& g : shuffled) {
        if (round < g.size()) out.push_back(g[round]);
        if (out.size() == budget) break;
      }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::size_t> box_points(const Box& b) {
  std::vector<std::size_t> v(b.size());
  for (std::size_t t = 0; t < b.size(); ++t) v[t] = b.begin + t;
  return v;
}

}  // namespace detail

// Points of every box that is far from `box` at `level` or far from one of its
// ancestors: the whole well-separated field the nested basis must capture.
inline std::vector<std::size_t> sample_far(const ClusterTree& tree, const InteractionLists& lists, int level,
                                           std::size_t box, std::size_t s_far, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> groups;
  for (int l = level; l >= 1; --l) {
    const std::size_t a = box >> (level - l);
    for (std::size_t b : lists.far[static_cast<std::size_t>(l)][a]) groups.push_back(detail::box_points(tree.box(l, b)));
  }
  return detail::stratified_sample(groups, s_far, detail::mix_seed(seed, static_cast<std::uint64_t>(level) * 2, box));
}

// Effective points of the near boxes of `box`, the box itself excluded.
inline std::vector<std::size_t> sample_near(const InteractionLists& lists, int level, std::size_t box,
                                            const std::vector<std::vector<std::size_t>>& level_points,
                                            std::size_t s_near, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t b : lists.near[static_cast<std::size_t>(level)][box])
    if (b != box) groups.push_back(level_points[b]);
  return detail::stratified_sample(groups, s_near,
                                   detail::mix_seed(seed, static_cast<std::uint64_t>(level) * 2 + 1, box));
}

// ---------------------------------------------------------------------------
// Pre-factorization of the close field

// Forward Gauss–Seidel sweeps on a·X = b from X = 0.
inline DenseBlock gauss_seidel_solve(const DenseBlock& a, const DenseBlock& b, int sweeps) {
  require(a.rows() == a.cols(), ErrorKind::dimension_mismatch, "gauss_seidel: matrix is not square");
  require(b.rows() == a.rows(), ErrorKind::dimension_mismatch, "gauss_seidel: right-hand side rows differ");
  require(sweeps >= 1, ErrorKind::invalid_argument, "gauss_seidel: at least one sweep is required");
  const std::size_t n = a.rows();
  const std::size_t m = b.cols();
  for (std::size_t r = 0; r < n; ++r)
    if (a(r, r) == 0.0) fail(ErrorKind::singular, "gauss_seidel: zero diagonal entry at " + std::to_string(r));
  DenseBlock x(n, m);
  std::vector<double> acc(m);
  for (int s = 0; s < sweeps; ++s)
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(b.row(r), m, acc.data());
      const double* ar = a.row(r);
      for (std::size_t c = 0; c < n; ++c) {
        if (c == r) continue;
        const double av = ar[c];
        const double* xc = x.row(c);
        for (std::size_t j = 0; j < m; ++j) acc[j] -= av * xc[j];
      }
      const double d = ar[r];
      double* xr = x.row(r);
      for (std::size_t j = 0; j < m; ++j) xr[j] = acc[j] / d;
    }
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < m; ++j)
      if (!std::isfinite(x(r, j)))
        fail(ErrorKind::not_positive_definite, "gauss_seidel: iteration diverged; near-field block is not positive definite");
  return x;
}

inline std::uint64_t prefactor_flops(std::size_t close, std::size_t rows, int sweeps) {
  const std::uint64_t c = close, n = rows;
  if (sweeps == 0) return flop_count(OpKind::cholesky, c, c) + 2 * flop_count(OpKind::tri_solve, n, c);
  return static_cast<std::uint64_t>(sweeps) * 2 * c * c * n;
}

// G(rows, S_C)·G(S_C, S_C)⁻¹ with the inverse applied by Gauss–Seidel (or
// exactly by Cholesky when sweeps = 0). Empty near samples give zero columns.
inline DenseBlock prefactor_close(const KernelSpec& kernel, const PointCloud& cloud,
                                  std::span<const std::size_t> rows, std::span<const std::size_t> near_samples,
                                  int gs_sweeps) {
  if (near_samples.empty()) return DenseBlock(rows.size(), 0);
  const DenseBlock acc = gen_block(kernel, near_samples, near_samples, cloud);
  const DenseBlock g = gen_block(kernel, near_samples, rows, cloud);
  DenseBlock x;
  if (gs_sweeps == 0) {
    const DenseBlock l = cholesky(acc);
    x = tri_solve(l, tri_solve(l, g, Side::left, false), Side::left, true);
  } else {
    x = gauss_seidel_solve(acc, g, gs_sweeps);
  }
  return x.transposed();
}

// Composite basis: ID of [G(rows, far) | close] in the frame `transfer`.
inline BasisDecomposition build_basis_for_box(const KernelSpec& kernel, const PointCloud& cloud,
                                              std::span<const std::size_t> rows,
                                              std::span<const std::size_t> far_points, const DenseBlock& close,
                                              const DenseBlock* transfer, std::optional<std::size_t> rank,
                                              std::optional<double> tol, double* sample_norm = nullptr) {
  const DenseBlock far = gen_block(kernel, rows, far_points, cloud);
  const DenseBlock samples = close.cols() == 0 ? far : hconcat(far, close);
  if (sample_norm) *sample_norm = samples.frobenius_norm();
  return id_basis(samples, transfer, rank, tol);
}

// ---------------------------------------------------------------------------
// Construction

namespace detail {

inline DenseBlock block_diagonal(const DenseBlock& a, const DenseBlock& b) {
  DenseBlock out(a.rows() + b.rows(), a.cols() + b.cols());
  out.set_block(0, 0, a);
  out.set_block(a.rows(), a.cols(), b);
  return out;
}

}  // namespace detail

// Bottom-up construction. `cloud` must already be in tree order for `tree`.
inline H2Matrix construct(const KernelSpec& kernel, PointCloud cloud, ClusterTree tree, InteractionLists lists,
                          const BuildConfig& cfg) {
  kernel.validate();
  cfg.validate();
  H2Matrix h2;
  h2.kernel = kernel;
  h2.config = cfg;
  h2.cloud = std::move(cloud);
  h2.tree = std::move(tree);
  h2.lists = std::move(lists);
  const int depth = h2.tree.depth;
  h2.levels.resize(static_cast<std::size_t>(depth) + 1);

  auto& leaf = h2.levels[static_cast<std::size_t>(depth)];
  const std::size_t nleaf = h2.tree.boxes_at(depth);
  leaf.points.resize(nleaf);
  for (std::size_t i = 0; i < nleaf; ++i) leaf.points[i] = detail::box_points(h2.tree.box(depth, i));

  // dense near blocks at the leaf level
  {
    std::vector<BlockKey> keys;
    for (std::size_t i = 0; i < nleaf; ++i)
      for (std::size_t j : h2.lists.near[static_cast<std::size_t>(depth)][i])
        if (i >= j) keys.emplace_back(i, j);
    std::vector<DenseBlock> blocks(keys.size());
    parallel_for(keys.size(), cfg.workers, [&](std::size_t t) {
      blocks[t] = gen_block(kernel, leaf.points[keys[t].first], leaf.points[keys[t].second], h2.cloud);
    });
    for (std::size_t t = 0; t < keys.size(); ++t) leaf.near.emplace(keys[t], std::move(blocks[t]));
  }

  for (int l = depth; l >= 1; --l) {
    auto& lv = h2.levels[static_cast<std::size_t>(l)];
    const std::size_t nb = h2.tree.boxes_at(l);
    lv.bases.resize(nb);
    lv.skeleton.resize(nb);
    std::vector<std::uint64_t> flops(nb, 0);
    std::vector<double> residual(nb, 0.0);
    parallel_for(nb, cfg.workers, [&](std::size_t i) {
      const auto& rows = lv.points[i];
      const auto far = sample_far(h2.tree, h2.lists, l, i, cfg.s_far, cfg.seed);
      const auto near = sample_near(h2.lists, l, i, lv.points, cfg.s_near, cfg.seed);
      const DenseBlock close = prefactor_close(kernel, h2.cloud, rows, near, cfg.gs_sweeps);
      flops[i] = near.empty() ? 0 : prefactor_flops(near.size(), rows.size(), cfg.gs_sweeps);
      const DenseBlock* transfer = lv.transfer.empty() ? nullptr : &lv.transfer[i];
      double norm = 0.0;
      auto basis = build_basis_for_box(kernel, h2.cloud, rows, far, close, transfer, cfg.rank, cfg.tol, &norm);
      residual[i] = norm > 0.0 ? basis.residual / norm : 0.0;
      std::vector<std::size_t> sk(basis.rank);
      for (std::size_t a = 0; a < basis.rank; ++a) sk[a] = rows[basis.skeleton[a]];
      lv.skeleton[i] = std::move(sk);
      lv.bases[i] = std::move(basis);
    });
    for (std::size_t i = 0; i < nb; ++i) {
      h2.stats.prefactor_flops += flops[i];
      h2.stats.max_relative_residual = std::max(h2.stats.max_relative_residual, residual[i]);
      h2.stats.max_rank = std::max(h2.stats.max_rank, lv.bases[i].rank);
      if (lv.bases[i].rank_clamped) ++h2.stats.clamped_boxes;
    }

    // couplings S_ij = r_i G(SK_i, SK_j) r_jᵀ
    std::vector<BlockKey> keys;
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t j : h2.lists.far[static_cast<std::size_t>(l)][i])
        if (i >= j) keys.emplace_back(i, j);
    std::vector<DenseBlock> blocks(keys.size());
    parallel_for(keys.size(), cfg.workers, [&](std::size_t t) {
      const auto [i, j] = keys[t];
      const DenseBlock g = gen_block(kernel, lv.skeleton[i], lv.skeleton[j], h2.cloud);
      blocks[t] = multiply(multiply(lv.bases[i].r_skel, g), lv.bases[j].r_skel, false, true);
    });
    for (std::size_t t = 0; t < keys.size(); ++t) lv.couplings.emplace(keys[t], std::move(blocks[t]));

    // parent effective points and frames
    auto& up = h2.levels[static_cast<std::size_t>(l) - 1];
    up.points.resize(nb / 2);
    up.transfer.resize(nb / 2);
    for (std::size_t p = 0; p < nb / 2; ++p) {
      up.points[p] = lv.skeleton[2 * p];
      up.points[p].insert(up.points[p].end(), lv.skeleton[2 * p + 1].begin(), lv.skeleton[2 * p + 1].end());
      up.transfer[p] = detail::block_diagonal(lv.bases[2 * p].r_skel, lv.bases[2 * p + 1].r_skel);
    }
  }
  return h2;
}

// Convenience: tree, lists and construction from an input-order cloud.
inline H2Matrix construct(const KernelSpec& kernel, PointCloud cloud, const BuildConfig& cfg) {
  cfg.validate();
  ClusterTree tree = build_tree(cloud, cfg.leaf_max);
  InteractionLists lists = build_interaction_lists(tree, cfg.eta);
  return construct(kernel, std::move(cloud), std::move(tree), std::move(lists), cfg);
}

// ---------------------------------------------------------------------------
// Matrix-vector product (tree order, one column per right-hand side)

inline DenseBlock h2_matvec(const H2Matrix& h2, const DenseBlock& x) {
  require(x.rows() == h2.count(), ErrorKind::dimension_mismatch, "h2_matvec: vector length does not match");
  const int depth = h2.depth();
  const std::size_t m = x.cols();
  const std::size_t nleaf = h2.tree.boxes_at(depth);
  DenseBlock y(x.rows(), m);

  // skeleton coordinates per level, upward pass
  std::vector<std::vector<DenseBlock>> xhat(static_cast<std::size_t>(depth) + 1);
  std::vector<std::vector<DenseBlock>> yhat(static_cast<std::size_t>(depth) + 1);
  for (int l = depth; l >= 1; --l) {
    const auto& lv = h2.levels[static_cast<std::size_t>(l)];
    const std::size_t nb = h2.tree.boxes_at(l);
    auto& xs = xhat[static_cast<std::size_t>(l)];
    xs.resize(nb);
    for (std::size_t i = 0; i < nb; ++i) {
      DenseBlock local;
      if (l == depth) {
        const Box& b = h2.tree.box(l, i);
        local = x.block(b.begin, 0, b.size(), m);
      } else {
        const auto& below = xhat[static_cast<std::size_t>(l) + 1];
        local = vconcat(below[2 * i], below[2 * i + 1]);
      }
      xs[i] = multiply(lv.bases[i].q_skel, local, true, false);
    }
    auto& ys = yhat[static_cast<std::size_t>(l)];
    ys.assign(nb, DenseBlock());
    for (std::size_t i = 0; i < nb; ++i) {
      ys[i] = DenseBlock(lv.bases[i].rank, m);
      for (std::size_t j : h2.lists.far[static_cast<std::size_t>(l)][i])
        multiply_into(ys[i], h2.coupling(l, i, j), xs[j], false, false);
    }
  }
  // downward pass
  for (int l = 1; l <= depth; ++l) {
    const auto& lv = h2.levels[static_cast<std::size_t>(l)];
    const std::size_t nb = h2.tree.boxes_at(l);
    for (std::size_t i = 0; i < nb; ++i) {
      DenseBlock full = multiply(lv.bases[i].q_skel, yhat[static_cast<std::size_t>(l)][i]);
      if (l == depth) {
        const Box& b = h2.tree.box(l, i);
        for (std::size_t r = 0; r < b.size(); ++r)
          for (std::size_t c = 0; c < m; ++c) y(b.begin + r, c) += full(r, c);
      } else {
        auto& below = yhat[static_cast<std::size_t>(l) + 1];
        const std::size_t k0 = below[2 * i].rows();
        for (std::size_t r = 0; r < k0; ++r)
          for (std::size_t c = 0; c < m; ++c) below[2 * i](r, c) += full(r, c);
        for (std::size_t r = 0; r < below[2 * i + 1].rows(); ++r)
          for (std::size_t c = 0; c < m; ++c) below[2 * i + 1](r, c) += full(k0 + r, c);
      }
    }
  }
  // near field
  for (std::size_t i = 0; i < nleaf; ++i) {
    const Box& bi = h2.tree.box(depth, i);
    DenseBlock acc(bi.size(), m);
    for (std::size_t j : h2.lists.near[static_cast<std::size_t>(depth)][i]) {
      const Box& bj = h2.tree.box(depth, j);
      multiply_into(acc, h2.near_block(i, j), x.block(bj.begin, 0, bj.size(), m), false, false);
    }
    for (std::size_t r = 0; r < bi.size(); ++r)
      for (std::size_t c = 0; c < m; ++c) y(bi.begin + r, c) += acc(r, c);
  }
  return y;
}

inline std::vector<double> h2_matvec(const H2Matrix& h2, const std::vector<double>& x) {
  return h2_matvec(h2, DenseBlock(x.size(), 1, x)).values();
}

}  // namespace h2ulv
