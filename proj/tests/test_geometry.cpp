#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "h2ulv/geometry.hpp"

using namespace h2ulv;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("h2ulv_geo_" + name)).string();
}

}  // namespace

TEST(Geometry, SphereOnUnitSurface) {
  const PointCloud c = gen_sphere_surface(500, 3);
  ASSERT_EQ(c.count(), 500u);
  for (const auto& p : c.points) EXPECT_NEAR(std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]), 1.0, 1e-12);
}

TEST(Geometry, CubeInUnitBox) {
  const PointCloud c = gen_uniform_cube(500, 3);
  for (const auto& p : c.points)
    for (double x : p) {
      EXPECT_GE(x, 0.0);
      EXPECT_LT(x, 1.0);
    }
}

TEST(Geometry, GeneratorsAreDeterministic) {
  EXPECT_EQ(gen_sphere_surface(100, 5).points, gen_sphere_surface(100, 5).points);
  EXPECT_EQ(gen_uniform_cube(100, 5).points, gen_uniform_cube(100, 5).points);
  EXPECT_NE(gen_uniform_cube(100, 5).points, gen_uniform_cube(100, 6).points);
}

TEST(Geometry, PointFilesRoundTrip) {
  const PointCloud c = gen_uniform_cube(64, 1);
  for (auto fmt : {PointFormat::csv, PointFormat::binary}) {
    const std::string path = temp_path(fmt == PointFormat::csv ? "a.csv" : "a.bin");
    save_points(c, path, fmt);
    EXPECT_EQ(load_points(path).points, c.points);
    std::filesystem::remove(path);
  }
}

TEST(Geometry, MalformedCsvReportsLine) {
  const std::string path = temp_path("bad.csv");
  {
    std::ofstream out(path);
    out << "x,y,z\n0,0,0\n1,2\n";
  }
  try {
    load_points(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(Geometry, TreeInvariants) {
  for (std::size_t n : {1u, 7u, 100u, 1000u}) {
    PointCloud c = gen_uniform_cube(n, 2);
    const auto original = c.points;
    const ClusterTree t = build_tree(c, 16);
    std::vector<std::size_t> sorted = c.perm;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(n);
    std::iota(iota.begin(), iota.end(), std::size_t{0});
    EXPECT_EQ(sorted, iota);
    for (std::size_t k = 0; k < n; ++k) EXPECT_EQ(c.points[k], original[c.perm[k]]);
    for (int l = 0; l <= t.depth; ++l) {
      ASSERT_EQ(t.boxes_at(l), std::size_t{1} << l);
      for (std::size_t i = 0; i < t.boxes_at(l); ++i) {
        const Box& b = t.box(l, i);
        EXPECT_GE(b.size(), 1u);
        for (std::size_t k = b.begin; k < b.end; ++k) EXPECT_LE(distance(b.center, c.points[k]), b.radius + 1e-15);
        if (l < t.depth) {
          EXPECT_EQ(t.box(l + 1, 2 * i).begin, b.begin);
          EXPECT_EQ(t.box(l + 1, 2 * i + 1).end, b.end);
        }
      }
    }
    for (const Box& b : t.leaves()) EXPECT_LE(b.size(), 16u);
  }
}

TEST(Geometry, TreeDepthExamples) {
  PointCloud c = gen_sphere_surface(1024, 0);
  EXPECT_EQ(build_tree(c, 512).depth, 1);
  PointCloud d = gen_sphere_surface(1024, 0);
  EXPECT_EQ(build_tree(d, 2048).depth, 0);
}

TEST(Geometry, AdmissibilityExamples) {
  Box a{1, 0, 0, 1, {0, 0, 0}, 1.0}, b{1, 1, 1, 2, {3, 0, 0}, 1.0};
  EXPECT_FALSE(admissible(a, a, 2.0));
  EXPECT_TRUE(admissible(a, b, 2.0));
  EXPECT_FALSE(admissible(a, b, 4.0));
  EXPECT_TRUE(admissible(a, b, 0.0));
}

TEST(Geometry, InteractionListsPartitionAndSymmetry) {
  PointCloud c = gen_uniform_cube(2048, 4);
  const ClusterTree t = build_tree(c, 64);
  for (double eta : {0.0, 0.7, 1.5, 3.0}) {
    const InteractionLists lists = build_interaction_lists(t, eta);
    for (int l = 1; l <= t.depth; ++l)
      for (std::size_t i = 0; i < t.boxes_at(l); ++i) {
        EXPECT_TRUE(lists.is_near(l, i, i));
        for (std::size_t j : lists.near[static_cast<std::size_t>(l)][i]) EXPECT_TRUE(lists.is_near(l, j, i));
        for (std::size_t j : lists.far[static_cast<std::size_t>(l)][i]) {
          EXPECT_TRUE(lists.is_far(l, j, i));
          EXPECT_FALSE(lists.is_near(l, i, j));
        }
      }
    // every leaf pair is covered exactly once: near at the leaf level or far at some level
    std::vector<std::vector<int>> cover(t.boxes_at(t.depth), std::vector<int>(t.boxes_at(t.depth), 0));
    for (int l = 1; l <= t.depth; ++l) {
      const std::size_t shift = static_cast<std::size_t>(t.depth - l);
      for (std::size_t i = 0; i < t.boxes_at(l); ++i) {
        auto mark = [&](std::size_t j) {
          for (std::size_t a = i << shift; a < (i + 1) << shift; ++a)
            for (std::size_t b = j << shift; b < (j + 1) << shift; ++b) ++cover[a][b];
        };
        for (std::size_t j : lists.far[static_cast<std::size_t>(l)][i]) mark(j);
        if (l == t.depth)
          for (std::size_t j : lists.near[static_cast<std::size_t>(l)][i]) mark(j);
      }
    }
    if (t.depth == 0) continue;
    for (const auto& row : cover)
      for (int v : row) EXPECT_EQ(v, 1);
  }
}

TEST(Geometry, HssAdmissibilityHasOnlyDiagonalNear) {
  PointCloud c = gen_sphere_surface(512, 0);
  const ClusterTree t = build_tree(c, 64);
  const InteractionLists lists = build_interaction_lists(t, 0.0);
  for (int l = 1; l <= t.depth; ++l) EXPECT_EQ(lists.near_pairs(l), t.boxes_at(l));
}

TEST(Geometry, NeighborCountSaturates) {
  double bound = 0.0;
  std::vector<double> density;
  for (std::size_t n = 1u << 10; n <= (1u << 16); n <<= 2) {
    PointCloud c = gen_uniform_cube(n, 1);
    const ClusterTree t = build_tree(c, 64);
    const InteractionLists lists = build_interaction_lists(t, 1.0);
    const double d = static_cast<double>(lists.near_pairs(t.depth)) / static_cast<double>(t.boxes_at(t.depth));
    density.push_back(d);
    bound = std::max(bound, d);
  }
  // near pairs per box stay bounded by a small constant as N grows
  EXPECT_LT(bound, 64.0);
  EXPECT_GE(density.back(), density.front());
}

TEST(Geometry, TopLevelsStableAcrossSampleSizes) {
  for (auto gen : {gen_sphere_surface, gen_uniform_cube}) {
    PointCloud small = gen(1u << 13, 0), large = gen(1u << 16, 0);
    const ClusterTree a = build_tree(small, 128), b = build_tree(large, 128);
    for (int l = 1; l <= 3; ++l)
      for (std::size_t i = 0; i < a.boxes_at(l); ++i) {
        EXPECT_LT(distance(a.box(l, i).center, b.box(l, i).center), 0.05);
        EXPECT_NEAR(a.box(l, i).radius, b.box(l, i).radius, 0.05);
      }
  }
}
