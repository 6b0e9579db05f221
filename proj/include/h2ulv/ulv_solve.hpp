#pragma once

#include <cstddef>
#include <vector>

#include "h2ulv/dense.hpp"
#include "h2ulv/parallel.hpp"
#include "h2ulv/ulv_factor.hpp"

namespace h2ulv {

enum class SolveMode { naive, parallel };

inline const char* to_string(SolveMode m) { return m == SolveMode::naive ? "naive" : "parallel"; }

inline SolveMode parse_solve_mode(const std::string& s) {
  if (s == "naive") return SolveMode::naive;
  if (s == "parallel") return SolveMode::parallel;
  fail(ErrorKind::invalid_argument, "unknown solve mode '" + s + "' (expected naive|parallel)");
}

// Right-hand side partitioned by boxes. After the forward pass of level l,
// red[l][i] holds y_i^R; root holds L_00⁻¹ applied to the merged skeletons.
struct BlockVector {
  std::vector<std::vector<DenseBlock>> red;  // index = level
  DenseBlock root;
  std::size_t columns = 0;
};

namespace detail {

inline void check_rhs(const ULVFactors& f, const DenseBlock& b) {
  require(b.rows() == f.h2->count(), ErrorKind::dimension_mismatch,
          "solve: right-hand side has " + std::to_string(b.rows()) + " rows, expected " +
              std::to_string(f.h2->count()));
}

// Leaf segments of a tree-order block.
inline std::vector<DenseBlock> leaf_segments(const ULVFactors& f, const DenseBlock& b) {
  const auto& tree = f.h2->tree;
  std::vector<DenseBlock> seg(tree.boxes_at(tree.depth));
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const Box& box = tree.box(tree.depth, i);
    seg[i] = b.block(box.begin, 0, box.size(), b.cols());
  }
  return seg;
}

inline void subtract_into(DenseBlock& target, const DenseBlock& a, const DenseBlock& x, bool transpose_a) {
  multiply_into(target, a, x, transpose_a, false, -1.0);
}

inline DenseBlock forward(const ULVFactors& f, const DenseBlock& b, SolveMode mode, std::size_t workers,
                          BlockVector& out) {
  const H2Matrix& h2 = *f.h2;
  const int depth = h2.depth();
  const std::size_t m = b.cols();
  out.red.assign(static_cast<std::size_t>(depth) + 1, {});
  out.columns = m;
  std::vector<DenseBlock> seg = leaf_segments(f, b);

  for (int l = depth; l >= 1; --l) {
    const auto lu = static_cast<std::size_t>(l);
    const auto& lv = f.levels[lu];
    const auto& bases = h2.levels[lu].bases;
    const auto& near = h2.lists.near[lu];
    const std::size_t nb = bases.size();
    std::vector<DenseBlock> br(nb), bs(nb);
    parallel_for(nb, workers, [&](std::size_t i) {
      const DenseBlock t = multiply(bases[i].full(), seg[i], true, false);
      br[i] = t.block(0, 0, lv.red[i], m);
      bs[i] = t.block(lv.red[i], 0, lv.skel[i], m);
    });
    std::vector<DenseBlock> y(nb);
    if (mode == SolveMode::naive) {
      for (std::size_t i = 0; i < nb; ++i) {
        y[i] = tri_solve(lv.lr_diag[i], br[i], Side::left, false);
        for (std::size_t j : near[i]) {
          if (j > i) subtract_into(br[j], lv.lr_off.at({j, i}), y[i], false);
          subtract_into(bs[j], lv.ls.at({j, i}), y[i], false);
        }
      }
    } else {
      std::vector<DenseBlock> z(nb);
      parallel_for(nb, workers, [&](std::size_t i) { z[i] = tri_solve(lv.lr_diag[i], br[i], Side::left, false); });
      parallel_for(nb, workers, [&](std::size_t i) {
        DenseBlock u(lv.red[i], m);
        bool any = false;
        for (std::size_t j : near[i])
          if (j < i) {
            multiply_into(u, lv.lr_off.at({i, j}), z[j], false, false);
            any = true;
          }
        y[i] = any ? tri_solve(lv.lr_diag[i], subtract(br[i], u), Side::left, false) : z[i];
      });
      parallel_for(nb, workers, [&](std::size_t j) {
        for (std::size_t i : near[j]) subtract_into(bs[j], lv.ls.at({j, i}), y[i], false);
      });
    }
    out.red[lu] = std::move(y);
    std::vector<DenseBlock> up(nb / 2);
    for (std::size_t p = 0; p < nb / 2; ++p) up[p] = vconcat(bs[2 * p], bs[2 * p + 1]);
    seg = std::move(up);
  }
  out.root = tri_solve(f.root, seg[0], Side::left, false);
  return out.root;
}

inline DenseBlock backward(const ULVFactors& f, const BlockVector& y, SolveMode mode, std::size_t workers) {
  const H2Matrix& h2 = *f.h2;
  const int depth = h2.depth();
  const std::size_t m = y.columns;
  std::vector<DenseBlock> seg{tri_solve(f.root, y.root, Side::left, true)};

  for (int l = 1; l <= depth; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    const auto& lv = f.levels[lu];
    const auto& bases = h2.levels[lu].bases;
    const auto& near = h2.lists.near[lu];
    const std::size_t nb = bases.size();
    std::vector<DenseBlock> xs(nb);
    for (std::size_t p = 0; p < nb / 2; ++p) {
      const std::size_t k0 = lv.skel[2 * p];
      xs[2 * p] = seg[p].block(0, 0, k0, m);
      xs[2 * p + 1] = seg[p].block(k0, 0, lv.skel[2 * p + 1], m);
    }
    const auto& yr = y.red[lu];
    std::vector<DenseBlock> xr(nb);
    if (mode == SolveMode::naive) {
      for (std::size_t i = nb; i-- > 0;) {
        DenseBlock w = yr[i];
        for (std::size_t j : near[i]) subtract_into(w, lv.ls.at({j, i}), xs[j], true);
        for (std::size_t j : near[i])
          if (j > i) subtract_into(w, lv.lr_off.at({j, i}), xr[j], true);
        xr[i] = tri_solve(lv.lr_diag[i], w, Side::left, true);
      }
    } else {
      std::vector<DenseBlock> w(nb), z(nb);
      parallel_for(nb, workers, [&](std::size_t i) {
        w[i] = yr[i];
        for (std::size_t j : near[i]) subtract_into(w[i], lv.ls.at({j, i}), xs[j], true);
      });
      parallel_for(nb, workers, [&](std::size_t i) { z[i] = tri_solve(lv.lr_diag[i], w[i], Side::left, true); });
      parallel_for(nb, workers, [&](std::size_t i) {
        DenseBlock u(lv.red[i], m);
        bool any = false;
        for (std::size_t j : near[i])
          if (j > i) {
            multiply_into(u, lv.lr_off.at({j, i}), z[j], true, false);
            any = true;
          }
        xr[i] = any ? tri_solve(lv.lr_diag[i], subtract(w[i], u), Side::left, true) : z[i];
      });
    }
    std::vector<DenseBlock> next(nb);
    parallel_for(nb, workers, [&](std::size_t i) { next[i] = multiply(bases[i].full(), vconcat(xr[i], xs[i])); });
    seg = std::move(next);
  }

  DenseBlock x(h2.count(), m);
  const auto& tree = h2.tree;
  for (std::size_t i = 0; i < seg.size(); ++i) x.set_block(tree.box(depth, i).begin, 0, seg[i]);
  return x;
}

}  // namespace detail

// Forward substitution on a tree-order right-hand side (one column per system).
inline BlockVector forward_naive(const ULVFactors& f, const DenseBlock& b) {
  detail::check_rhs(f, b);
  BlockVector out;
  detail::forward(f, b, SolveMode::naive, 1, out);
  return out;
}

inline BlockVector forward_parallel(const ULVFactors& f, const DenseBlock& b, std::size_t workers = 1) {
  detail::check_rhs(f, b);
  BlockVector out;
  detail::forward(f, b, SolveMode::parallel, workers, out);
  return out;
}

// Backward substitution; returns the solution in tree order.
inline DenseBlock backward_naive(const ULVFactors& f, const BlockVector& y) {
  return detail::backward(f, y, SolveMode::naive, 1);
}

inline DenseBlock backward_parallel(const ULVFactors& f, const BlockVector& y, std::size_t workers = 1) {
  return detail::backward(f, y, SolveMode::parallel, workers);
}

inline DenseBlock solve_tree_order(const ULVFactors& f, const DenseBlock& b, SolveMode mode, std::size_t workers = 1) {
  detail::check_rhs(f, b);
  BlockVector y;
  detail::forward(f, b, mode, workers, y);
  return detail::backward(f, y, mode, workers);
}

// Tree-order ↔ input-order permutation helpers.
inline DenseBlock to_tree_order(const PointCloud& cloud, const DenseBlock& b) {
  DenseBlock out(b.rows(), b.cols());
  for (std::size_t t = 0; t < b.rows(); ++t) std::copy_n(b.row(cloud.perm[t]), b.cols(), out.row(t));
  return out;
}

inline DenseBlock to_input_order(const PointCloud& cloud, const DenseBlock& x) {
  DenseBlock out(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) std::copy_n(x.row(t), x.cols(), out.row(cloud.perm[t]));
  return out;
}

// Solves A x = b with b in input order; multiple columns are solved together.
inline DenseBlock solve(const ULVFactors& f, const DenseBlock& b, SolveMode mode, std::size_t workers = 1) {
  detail::check_rhs(f, b);
  const PointCloud& cloud = f.h2->cloud;
  return to_input_order(cloud, solve_tree_order(f, to_tree_order(cloud, b), mode, workers));
}

inline std::vector<double> solve(const ULVFactors& f, const std::vector<double>& b, SolveMode mode,
                                 std::size_t workers = 1) {
  return solve(f, DenseBlock(b.size(), 1, b), mode, workers).values();
}

}  // namespace h2ulv
