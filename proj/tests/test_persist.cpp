#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "h2ulv/oracle.hpp"
#include "h2ulv/persist.hpp"
#include "h2ulv/ulv_solve.hpp"

using namespace h2ulv;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("h2ulv_persist_" + name);
  std::filesystem::remove_all(p);
  return p;
}

H2Matrix small_build() {
  BuildConfig c;
  c.leaf_max = 64;
  c.eta = 1.0;
  return construct(KernelSpec{}, gen_sphere_surface(512, 2), c);
}

}  // namespace

TEST(Persist, H2RoundTripIsBitExact) {
  const H2Matrix h2 = small_build();
  const auto dir = temp_dir("h2");
  save_h2(h2, dir);
  const H2Matrix back = load_h2(dir);
  EXPECT_EQ(back.cloud.points, h2.cloud.points);
  EXPECT_EQ(back.cloud.perm, h2.cloud.perm);
  EXPECT_EQ(back.lists.near, h2.lists.near);
  EXPECT_EQ(back.lists.far, h2.lists.far);
  ASSERT_EQ(back.levels.size(), h2.levels.size());
  for (std::size_t l = 0; l < h2.levels.size(); ++l) {
    EXPECT_EQ(back.levels[l].points, h2.levels[l].points);
    EXPECT_EQ(back.levels[l].skeleton, h2.levels[l].skeleton);
    EXPECT_EQ(back.levels[l].near, h2.levels[l].near);
    EXPECT_EQ(back.levels[l].couplings, h2.levels[l].couplings);
    EXPECT_EQ(back.levels[l].transfer, h2.levels[l].transfer);
    for (std::size_t i = 0; i < h2.levels[l].bases.size(); ++i) {
      EXPECT_EQ(back.levels[l].bases[i].q_skel, h2.levels[l].bases[i].q_skel);
      EXPECT_EQ(back.levels[l].bases[i].q_red, h2.levels[l].bases[i].q_red);
    }
  }
  for (int l = 0; l <= h2.depth(); ++l)
    for (std::size_t i = 0; i < h2.tree.boxes_at(l); ++i) {
      EXPECT_EQ(back.tree.box(l, i).center, h2.tree.box(l, i).center);
      EXPECT_EQ(back.tree.box(l, i).radius, h2.tree.box(l, i).radius);
    }
  EXPECT_EQ(back.config.tol, h2.config.tol);
  EXPECT_EQ(back.stats.prefactor_flops, h2.stats.prefactor_flops);

  // factoring the loaded matrix reproduces the in-memory factors
  const ULVFactors a = factorize(h2), b = factorize(back);
  EXPECT_EQ(a.root, b.root);
  EXPECT_EQ(a.total_flops().true_flops, b.total_flops().true_flops);
  std::filesystem::remove_all(dir);
}

TEST(Persist, FactorsRoundTripSolveIdentically) {
  FactorOptions o;
  o.audit = true;
  o.retain = true;
  const ULVFactors f = factorize(small_build(), o);
  const auto dir = temp_dir("ulv");
  save_factors(f, dir);
  const ULVFactors g = load_factors(dir);
  EXPECT_TRUE(g.retained);
  EXPECT_EQ(g.audit.offdiag_ss_writes, f.audit.offdiag_ss_writes);
  EXPECT_EQ(g.flops.size(), f.flops.size());
  const DenseBlock b = random_block(512, 1, 4);
  EXPECT_EQ(solve(f, b, SolveMode::parallel), solve(g, b, SolveMode::parallel));
  std::filesystem::remove_all(dir);
}

TEST(Persist, MissingOrCorruptContainer) {
  const auto dir = temp_dir("bad");
  EXPECT_THROW(load_h2(dir), Error);
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "manifest.json") << "{ not json";
    std::ofstream(dir / "blocks.bin") << "";
  }
  EXPECT_THROW(load_h2(dir), Error);
  save_h2(small_build(), dir);
  std::filesystem::resize_file(dir / "blocks.bin", 16);
  EXPECT_THROW(load_h2(dir), Error);
  EXPECT_THROW(load_factors(dir), Error);
  std::filesystem::remove_all(dir);
}

TEST(Persist, VectorRoundTrip) {
  const std::vector<double> v{1.0, -2.5, 1e-300, 0.1, 3.141592653589793};
  const auto dir = temp_dir("vec");
  std::filesystem::create_directories(dir);
  for (auto fmt : {VectorFormat::csv, VectorFormat::binary}) {
    const auto path = (dir / (fmt == VectorFormat::csv ? "v.csv" : "v.bin")).string();
    save_vector(v, path, fmt);
    EXPECT_EQ(load_vector(path), v);
  }
  std::ifstream in(dir / "v.bin", std::ios::binary);
  char magic[6];
  in.read(magic, 6);
  EXPECT_EQ(std::string(magic, 5), "H2VEC");
  EXPECT_EQ(magic[5], '\0');
  std::filesystem::remove_all(dir);
}

TEST(Persist, FlopReportTotals) {
  const ULVFactors f = factorize(small_build());
  const json j = flop_report_json(f);
  std::uint64_t sum = 0;
  for (const auto& p : j["phases"]) sum += p["true_flops"].get<std::uint64_t>();
  EXPECT_EQ(sum, j["total"]["true_flops"].get<std::uint64_t>());
}
