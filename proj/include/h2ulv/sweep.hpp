#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "h2ulv/geometry.hpp"
#include "h2ulv/h2_build.hpp"
#include "h2ulv/kernels.hpp"
#include "h2ulv/oracle.hpp"
#include "h2ulv/ulv_factor.hpp"
#include "h2ulv/ulv_solve.hpp"

namespace h2ulv {

enum class Shape { sphere, cube };

inline const char* to_string(Shape s) { return s == Shape::sphere ? "sphere" : "cube"; }

inline Shape parse_shape(const std::string& s) {
  if (s == "sphere") return Shape::sphere;
  if (s == "cube") return Shape::cube;
  fail(ErrorKind::invalid_argument, "unknown shape '" + s + "' (expected sphere|cube)");
}

inline PointCloud generate(Shape s, std::size_t n, std::uint64_t seed) {
  return s == Shape::sphere ? gen_sphere_surface(n, seed) : gen_uniform_cube(n, seed);
}

struct SweepSetup {
  Shape shape = Shape::sphere;
  KernelSpec kernel;
  BuildConfig build;
  ExecMode mode = ExecMode::batched;
  std::uint64_t seed = 0;  // geometry and right-hand side
  std::size_t oracle_cap = kDefaultOracleCap;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct NSweepRow {
  std::size_t n = 0;
  std::uint64_t true_flops = 0;
  std::uint64_t padded_flops = 0;
  double seconds = 0.0;  // factorization wall time
};

inline std::vector<NSweepRow> sweep_n(const SweepSetup& s, const std::vector<std::size_t>& grid) {
  std::vector<NSweepRow> rows;
  for (std::size_t n : grid) {
    const H2Matrix h2 = construct(s.kernel, generate(s.shape, n, s.seed), s.build);
    const auto t0 = std::chrono::steady_clock::now();
    FactorOptions fo;
    fo.mode = s.mode;
    fo.workers = s.build.workers;
    const ULVFactors f = factorize(h2, fo);
    const double secs = seconds_since(t0);
    const FlopTally t = f.total_flops();
    rows.push_back(NSweepRow{n, t.true_flops, t.padded_flops, secs});
  }
  return rows;
}

struct RankSweepRow {
  std::size_t rank = 0;
  std::optional<double> h2_error;   // empty when the dense oracle is unavailable
  std::optional<double> hss_error;
};

// Solution error against the dense oracle of the strong build (config eta)
// and of the HSS build (eta = 0) at each fixed rank.
inline std::vector<RankSweepRow> sweep_rank(const SweepSetup& s, std::size_t n, const std::vector<std::size_t>& grid) {
  PointCloud input = generate(s.shape, n, s.seed);
  BuildConfig base = s.build;
  base.tol.reset();
  base.rank = grid.empty() ? 1 : grid.front();
  ClusterTree tree = build_tree(input, base.leaf_max);
  const PointCloud& cloud = input;  // tree order
  const DenseBlock b = random_block(n, 1, s.seed + 1);
  std::optional<DenseBlock> x_ref;
  if (n <= s.oracle_cap) x_ref = dense_solve(dense_assemble(s.kernel, cloud, s.oracle_cap), b);

  auto error_at = [&](double eta, std::size_t rank) -> std::optional<double> {
    if (!x_ref) return std::nullopt;
    BuildConfig c = base;
    c.eta = eta;
    c.rank = rank;
    auto h2 = std::make_shared<const H2Matrix>(
        construct(s.kernel, cloud, tree, build_interaction_lists(tree, eta), c));
    FactorOptions fo;
    fo.mode = s.mode;
    fo.workers = c.workers;
    const ULVFactors f = factorize(h2, fo);
    return relative_error(solve_tree_order(f, b, SolveMode::parallel, c.workers), *x_ref);
  };
  std::vector<RankSweepRow> rows;
  for (std::size_t r : grid) rows.push_back(RankSweepRow{r, error_at(s.build.eta, r), error_at(0.0, r)});
  return rows;
}

struct EtaSweepRow {
  double eta = 0.0;
  std::uint64_t prefactor_flops = 0;
  std::uint64_t factor_flops = 0;
  double ratio = 0.0;
};

inline std::vector<EtaSweepRow> sweep_eta(const SweepSetup& s, std::size_t n, const std::vector<double>& grid) {
  PointCloud cloud = generate(s.shape, n, s.seed);
  const ClusterTree tree = build_tree(cloud, s.build.leaf_max);
  std::vector<EtaSweepRow> rows;
  for (double eta : grid) {
    BuildConfig c = s.build;
    c.eta = eta;
    const H2Matrix h2 = construct(s.kernel, cloud, tree, build_interaction_lists(tree, eta), c);
    FactorOptions fo;
    fo.mode = s.mode;
    fo.workers = c.workers;
    const ULVFactors f = factorize(h2, fo);
    const FlopComparison cmp = flop_report_compare(h2, f);
    rows.push_back(EtaSweepRow{eta, cmp.prefactor_flops, cmp.factor_flops, cmp.ratio()});
  }
  return rows;
}

}  // namespace h2ulv
