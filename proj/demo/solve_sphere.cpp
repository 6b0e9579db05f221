// Builds, factors and solves a Laplace system on a sphere surface, then checks
// the result against the dense solver.
#include <cstdio>
#include <cstdlib>
#include <memory>

#include "h2ulv/h2ulv.hpp"

int main(int argc, char** argv) {
  using namespace h2ulv;
  const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 2048;

  BuildConfig cfg;
  cfg.leaf_max = 128;
  cfg.eta = 1.0;
  cfg.tol = 1e-7;
  const KernelSpec kernel;
  auto h2 = std::make_shared<const H2Matrix>(construct(kernel, gen_sphere_surface(n, 42), cfg));
  std::printf("N = %zu, depth %d, max rank %zu\n", h2->count(), h2->depth(), h2->stats.max_rank);

  const ULVFactors f = factorize(h2);
  std::printf("factorization: %.3e flops\n", static_cast<double>(f.total_flops().true_flops));

  const DenseBlock b = random_block(n, 1, 7);
  const DenseBlock x = solve(f, b, SolveMode::parallel);

  if (n <= kDefaultOracleCap) {
    PointCloud input = gen_sphere_surface(n, 42);
    const DenseBlock ref = dense_solve(dense_assemble(kernel, input), b);
    std::printf("relative error vs dense solve: %.3e\n", relative_error(x, ref));
  }
  return 0;
}
