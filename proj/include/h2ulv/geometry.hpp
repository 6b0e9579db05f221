#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "h2ulv/error.hpp"

namespace h2ulv {

using Point = std::array<double, 3>;

inline double distance(const Point& a, const Point& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

struct PointCloud {
  std::vector<Point> points;
  // perm[t] = input position of the point stored at position t
  std::vector<std::size_t> perm;

  PointCloud() = default;
  explicit PointCloud(std::vector<Point> pts) : points(std::move(pts)), perm(points.size()) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
  }

  std::size_t count() const noexcept { return points.size(); }
};

namespace detail {

// 53 uniformly random mantissa bits in [0, 1), identical on every platform.
inline double unit_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

// Fibonacci (golden-angle) lattice on the unit sphere; the seed rotates the
// starting phase only.
inline PointCloud gen_sphere_surface(std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::invalid_argument, "gen_sphere_surface: n must be positive");
  std::mt19937_64 rng(seed);
  const double phase = 2.0 * std::numbers::pi * detail::unit_double(rng);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Point> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = phase + golden * static_cast<double>(i);
    Point p{r * std::cos(phi), r * std::sin(phi), z};
    const double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    for (double& c : p) c /= norm;
    pts[i] = p;
  }
  return PointCloud(std::move(pts));
}

inline PointCloud gen_uniform_cube(std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::invalid_argument, "gen_uniform_cube: n must be positive");
  std::mt19937_64 rng(seed);
  std::vector<Point> pts(n);
  for (auto& p : pts)
    for (double& c : p) c = detail::unit_double(rng);
  return PointCloud(std::move(pts));
}

// ---------------------------------------------------------------------------
// Point files

enum class PointFormat { csv, binary };

inline constexpr char kPointMagic[6] = {'H', '2', 'P', 'T', 'S', '\0'};

namespace detail {

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool read_le(std::istream& is, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  std::memcpy(&value, bytes, sizeof(T));
  return true;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline PointCloud load_points_csv(std::istream& in, const std::string& path) {
  std::vector<Point> pts;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = trim(line);
    if (v.empty() || v.front() == '#') continue;
    if (!header) {
      std::string compact;
      for (char c : v)
        if (!std::isspace(static_cast<unsigned char>(c))) compact += static_cast<char>(std::tolower(c));
      if (compact != "x,y,z") fail(ErrorKind::format, path + ": line " + std::to_string(lineno) + ": expected header x,y,z");
      header = true;
      continue;
    }
    Point p{};
    std::size_t field = 0;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = v.find(',', start);
      const std::string_view tok = v.substr(start, comma == std::string_view::npos ? v.npos : comma - start);
      if (field >= 3 || !parse_double(tok, p[field]))
        fail(ErrorKind::format, path + ": line " + std::to_string(lineno) + ": malformed record");
      if (!std::isfinite(p[field]))
        fail(ErrorKind::format, path + ": line " + std::to_string(lineno) + ": non-finite coordinate");
      ++field;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (field != 3) fail(ErrorKind::format, path + ": line " + std::to_string(lineno) + ": expected 3 coordinates");
    pts.push_back(p);
  }
  if (!header) fail(ErrorKind::format, path + ": missing header x,y,z");
  if (pts.empty()) fail(ErrorKind::format, path + ": point file contains no records");
  return PointCloud(std::move(pts));
}

inline PointCloud load_points_binary(std::istream& in, const std::string& path) {
  std::uint64_t count = 0;
  if (!read_le(in, count)) fail(ErrorKind::format, path + ": offset 6: truncated count");
  if (count == 0) fail(ErrorKind::format, path + ": offset 6: empty point cloud");
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
  for (std::uint64_t i = 0; i < count; ++i) {
    Point p{};
    for (double& c : p) {
      const std::uint64_t offset = 14 + 8 * (3 * i + static_cast<std::uint64_t>(&c - p.data()));
      if (!read_le(in, c)) fail(ErrorKind::format, path + ": offset " + std::to_string(offset) + ": truncated record");
      if (!std::isfinite(c)) fail(ErrorKind::format, path + ": offset " + std::to_string(offset) + ": non-finite coordinate");
    }
    pts.push_back(p);
  }
  return PointCloud(std::move(pts));
}

}  // namespace detail

inline PointCloud load_points(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::format, path + ": cannot open point file");
  char magic[6] = {};
  in.read(magic, 6);
  if (in.gcount() == 6 && std::memcmp(magic, kPointMagic, 6) == 0) return detail::load_points_binary(in, path);
  in.clear();
  in.seekg(0);
  return detail::load_points_csv(in, path);
}

// Writes points in their current storage order.
inline void save_points(const PointCloud& cloud, const std::string& path, PointFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::format, path + ": cannot open for writing");
  if (format == PointFormat::binary) {
    out.write(kPointMagic, 6);
    detail::write_le<std::uint64_t>(out, cloud.count());
    for (const auto& p : cloud.points)
      for (double c : p) detail::write_le(out, c);
  } else {
    out << "x,y,z\n";
    char buf[32];
    for (const auto& p : cloud.points) {
      for (int d = 0; d < 3; ++d) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), p[d]);
        out.write(buf, ptr - buf);
        out.put(d < 2 ? ',' : '\n');
      }
    }
  }
  if (!out) fail(ErrorKind::format, path + ": write failed");
}

// ---------------------------------------------------------------------------
// Cluster tree

struct Box {
  int level = 0;
  std::size_t index = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  Point center{};
  double radius = 0.0;

  std::size_t size() const noexcept { return end - begin; }
};

struct ClusterTree {
  int depth = 0;
  std::size_t leaf_max = 1;
  std::vector<std::vector<Box>> levels;  // levels[l].size() == 2^l

  const Box& box(int level, std::size_t i) const { return levels[static_cast<std::size_t>(level)][i]; }
  std::size_t boxes_at(int level) const { return levels[static_cast<std::size_t>(level)].size(); }
  const std::vector<Box>& leaves() const { return levels.back(); }
};

namespace detail {

inline void fit_box(Box& box, const std::vector<Point>& pts) {
  Point lo = pts[box.begin], hi = pts[box.begin];
  for (std::size_t t = box.begin; t < box.end; ++t)
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], pts[t][d]);
      hi[d] = std::max(hi[d], pts[t][d]);
    }
  for (int d = 0; d < 3; ++d) box.center[d] = 0.5 * (lo[d] + hi[d]);
  double r = 0.0;
  for (std::size_t t = box.begin; t < box.end; ++t) r = std::max(r, distance(box.center, pts[t]));
  if (box.size() == 1) r = 0.0;
  box.radius = r;
}

}  // namespace detail

inline constexpr double kAxisTieTolerance = 0.01;

// Median bisection along the longest bounding-box axis. Reorders cloud.points
// into tree order and composes cloud.perm accordingly.
inline ClusterTree build_tree(PointCloud& cloud, std::size_t leaf_max) {
  require(cloud.count() >= 1, ErrorKind::invalid_argument, "build_tree: empty point cloud");
  require(leaf_max >= 1, ErrorKind::invalid_argument, "build_tree: leaf_max must be positive");
  const std::size_t n = cloud.count();
  const std::size_t leaves_needed = (n + leaf_max - 1) / leaf_max;
  int depth = 0;
  while ((std::size_t{1} << depth) < leaves_needed) ++depth;
  require((std::size_t{1} << depth) <= n, ErrorKind::invalid_argument,
          "build_tree: perfect tree would contain empty leaves (count " + std::to_string(n) +
              ", leaf_max " + std::to_string(leaf_max) + ")");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Point> pts = cloud.points;

  ClusterTree tree;
  tree.depth = depth;
  tree.leaf_max = leaf_max;
  tree.levels.resize(static_cast<std::size_t>(depth) + 1);
  tree.levels[0].push_back(Box{0, 0, 0, n, {}, 0.0});

  for (int l = 0; l < depth; ++l) {
    auto& parents = tree.levels[static_cast<std::size_t>(l)];
    auto& children = tree.levels[static_cast<std::size_t>(l) + 1];
    children.resize(parents.size() * 2);
    for (std::size_t i = 0; i < parents.size(); ++i) {
      const Box& p = parents[i];
      Point lo = pts[order[p.begin]], hi = lo;
      for (std::size_t t = p.begin; t < p.end; ++t)
        for (int d = 0; d < 3; ++d) {
          lo[d] = std::min(lo[d], pts[order[t]][d]);
          hi[d] = std::max(hi[d], pts[order[t]][d]);
        }
      // extents within kAxisTieTolerance of the longest are ties; the lowest axis wins
      double longest = 0.0;
      for (int d = 0; d < 3; ++d) longest = std::max(longest, hi[d] - lo[d]);
      int axis = 0;
      while (hi[axis] - lo[axis] < (1.0 - kAxisTieTolerance) * longest) ++axis;
      const std::size_t mid = p.begin + p.size() / 2;
      std::nth_element(order.begin() + static_cast<std::ptrdiff_t>(p.begin),
                       order.begin() + static_cast<std::ptrdiff_t>(mid),
                       order.begin() + static_cast<std::ptrdiff_t>(p.end),
                       [&](std::size_t a, std::size_t b) {
                         if (pts[a][axis] != pts[b][axis]) return pts[a][axis] < pts[b][axis];
                         return a < b;
                       });
      children[2 * i] = Box{l + 1, 2 * i, p.begin, mid, {}, 0.0};
      children[2 * i + 1] = Box{l + 1, 2 * i + 1, mid, p.end, {}, 0.0};
    }
  }

  std::vector<Point> sorted(n);
  std::vector<std::size_t> perm(n);
  for (std::size_t t = 0; t < n; ++t) {
    sorted[t] = pts[order[t]];
    perm[t] = cloud.perm.empty() ? order[t] : cloud.perm[order[t]];
  }
  cloud.points = std::move(sorted);
  cloud.perm = std::move(perm);
  for (auto& level : tree.levels)
    for (auto& b : level) detail::fit_box(b, cloud.points);
  return tree;
}

// ---------------------------------------------------------------------------
// Admissibility and interaction lists

// Far (low-rank) iff the boxes differ and their centers are at least
// eta·max(radius) apart. eta = 0 makes every distinct pair far.
inline bool admissible(const Box& a, const Box& b, double eta) {
  if (a.level == b.level && a.index == b.index) return false;
  return distance(a.center, b.center) >= eta * std::max(a.radius, b.radius);
}

// near[l][i] / far[l][i]: ascending box indices interacting with box i at level l.
struct InteractionLists {
  std::vector<std::vector<std::vector<std::size_t>>> near;
  std::vector<std::vector<std::vector<std::size_t>>> far;

  bool is_near(int level, std::size_t i, std::size_t j) const {
    const auto& v = near[static_cast<std::size_t>(level)][i];
    return std::binary_search(v.begin(), v.end(), j);
  }
  bool is_far(int level, std::size_t i, std::size_t j) const {
    const auto& v = far[static_cast<std::size_t>(level)][i];
    return std::binary_search(v.begin(), v.end(), j);
  }
  std::size_t near_pairs(int level) const {
    std::size_t s = 0;
    for (const auto& v : near[static_cast<std::size_t>(level)]) s += v.size();
    return s;
  }
  std::size_t far_pairs(int level) const {
    std::size_t s = 0;
    for (const auto& v : far[static_cast<std::size_t>(level)]) s += v.size();
    return s;
  }
};

inline InteractionLists build_interaction_lists(const ClusterTree& tree, double eta) {
  require(eta >= 0.0, ErrorKind::invalid_argument, "build_interaction_lists: eta must be non-negative");
  InteractionLists lists;
  const auto levels = static_cast<std::size_t>(tree.depth) + 1;
  lists.near.resize(levels);
  lists.far.resize(levels);
  lists.near[0] = {{0}};
  lists.far[0] = {{}};
  for (std::size_t l = 1; l < levels; ++l) {
    const std::size_t nb = tree.levels[l].size();
    lists.near[l].assign(nb, {});
    lists.far[l].assign(nb, {});
    for (std::size_t p = 0; p < nb / 2; ++p)
      for (std::size_t q : lists.near[l - 1][p])
        for (std::size_t a = 2 * p; a < 2 * p + 2; ++a)
          for (std::size_t b = 2 * q; b < 2 * q + 2; ++b) {
            if (admissible(tree.levels[l][a], tree.levels[l][b], eta))
              lists.far[l][a].push_back(b);
            else
              lists.near[l][a].push_back(b);
          }
    for (auto& v : lists.near[l]) std::sort(v.begin(), v.end());
    for (auto& v : lists.far[l]) std::sort(v.begin(), v.end());
  }
  return lists;
}

}  // namespace h2ulv
