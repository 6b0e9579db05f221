#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "h2ulv/dense.hpp"
#include "h2ulv/geometry.hpp"
#include "h2ulv/h2_build.hpp"
#include "h2ulv/ulv_factor.hpp"

namespace h2ulv {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Block container: manifest.json + blocks.bin (little-endian float64)

class BlockWriter {
 public:
  json add(const DenseBlock& a) {
    const std::uint64_t offset = bytes_.size();
    const std::size_t n = a.rows() * a.cols();
    bytes_.resize(bytes_.size() + n * 8);
    char* dst = bytes_.data() + offset;
    for (std::size_t t = 0; t < n; ++t) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(a.data()[t]);
      for (int b = 0; b < 8; ++b) dst[8 * t + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    return json::array({offset, a.rows(), a.cols()});
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class BlockReader {
 public:
  explicit BlockReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  DenseBlock get(const json& ref) const {
    require(ref.is_array() && ref.size() == 3, ErrorKind::format, "blocks: malformed block reference");
    const auto offset = ref[0].get<std::uint64_t>();
    const auto rows = ref[1].get<std::size_t>(), cols = ref[2].get<std::size_t>();
    const std::size_t n = rows * cols;
    require(offset + n * 8 <= bytes_.size(), ErrorKind::format,
            "blocks.bin: block at offset " + std::to_string(offset) + " runs past the end of the file");
    DenseBlock a(rows, cols);
    const char* src = bytes_.data() + offset;
    for (std::size_t t = 0; t < n; ++t) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(src[8 * t + b])) << (8 * b);
      a.data()[t] = std::bit_cast<double>(bits);
    }
    return a;
  }

 private:
  std::vector<char> bytes_;
};

namespace detail {

inline std::vector<char> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::format, p.string() + ": cannot open");
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& p, const char* data, std::size_t n) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::format, p.string() + ": cannot open for writing");
  out.write(data, static_cast<std::streamsize>(n));
  if (!out) fail(ErrorKind::format, p.string() + ": write failed");
}

inline json block_map(BlockWriter& w, const std::map<BlockKey, DenseBlock>& m) {
  json out = json::array();
  for (const auto& [k, a] : m) out.push_back({k.first, k.second, w.add(a)});
  return out;
}

inline std::map<BlockKey, DenseBlock> read_block_map(const BlockReader& r, const json& j) {
  std::map<BlockKey, DenseBlock> out;
  for (const auto& e : j) out.emplace(BlockKey{e[0].get<std::size_t>(), e[1].get<std::size_t>()}, r.get(e[2]));
  return out;
}

inline json block_list(BlockWriter& w, const std::vector<DenseBlock>& v) {
  json out = json::array();
  for (const auto& a : v) out.push_back(w.add(a));
  return out;
}

inline std::vector<DenseBlock> read_block_list(const BlockReader& r, const json& j) {
  std::vector<DenseBlock> out;
  for (const auto& e : j) out.push_back(r.get(e));
  return out;
}

inline json config_json(const BuildConfig& c) {
  json j{{"eta", c.eta},   {"leaf_max", c.leaf_max},   {"s_far", c.s_far}, {"s_near", c.s_near},
         {"gs_sweeps", c.gs_sweeps}, {"seed", c.seed}, {"workers", c.workers}};
  j["rank"] = c.rank ? json(*c.rank) : json(nullptr);
  j["tol"] = c.tol ? json(*c.tol) : json(nullptr);
  return j;
}

inline BuildConfig config_from_json(const json& j) {
  BuildConfig c;
  c.eta = j.at("eta").get<double>();
  c.leaf_max = j.at("leaf_max").get<std::size_t>();
  c.s_far = j.at("s_far").get<std::size_t>();
  c.s_near = j.at("s_near").get<std::size_t>();
  c.gs_sweeps = j.at("gs_sweeps").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.workers = j.at("workers").get<std::size_t>();
  c.rank = j.at("rank").is_null() ? std::nullopt : std::optional<std::size_t>(j["rank"].get<std::size_t>());
  c.tol = j.at("tol").is_null() ? std::nullopt : std::optional<double>(j["tol"].get<double>());
  return c;
}

inline json kernel_json(const KernelSpec& k) {
  return {{"family", to_string(k.family)}, {"diagonal_shift", k.diagonal_shift}, {"yukawa_decay", k.yukawa_decay}};
}

inline KernelSpec kernel_from_json(const json& j) {
  KernelSpec k;
  k.family = parse_kernel_family(j.at("family").get<std::string>());
  k.diagonal_shift = j.at("diagonal_shift").get<double>();
  k.yukawa_decay = j.at("yukawa_decay").get<double>();
  return k;
}

inline json tally_json(const FlopTally& t) {
  return {{"true_flops", t.true_flops}, {"padded_flops", t.padded_flops}, {"blocks", t.blocks}};
}

inline FlopTally tally_from_json(const json& j) {
  return FlopTally{j.at("true_flops").get<std::uint64_t>(), j.at("padded_flops").get<std::uint64_t>(),
                   j.at("blocks").get<std::size_t>()};
}

inline json h2_section(BlockWriter& w, const H2Matrix& h2) {
  json j;
  j["kernel"] = kernel_json(h2.kernel);
  j["config"] = config_json(h2.config);
  j["stats"] = {{"prefactor_flops", h2.stats.prefactor_flops},
                {"max_relative_residual", h2.stats.max_relative_residual},
                {"max_rank", h2.stats.max_rank},
                {"clamped_boxes", h2.stats.clamped_boxes}};
  DenseBlock pts(h2.count(), 3);
  for (std::size_t t = 0; t < h2.count(); ++t)
    for (int d = 0; d < 3; ++d) pts(t, static_cast<std::size_t>(d)) = h2.cloud.points[t][static_cast<std::size_t>(d)];
  j["points"] = w.add(pts);
  j["perm"] = h2.cloud.perm;

  json tree;
  tree["depth"] = h2.tree.depth;
  tree["leaf_max"] = h2.tree.leaf_max;
  json boxes = json::array();
  for (const auto& level : h2.tree.levels) {
    json lv = json::array();
    for (const auto& b : level) {
      DenseBlock geom(1, 4, {b.center[0], b.center[1], b.center[2], b.radius});
      lv.push_back({b.begin, b.end, w.add(geom)});
    }
    boxes.push_back(std::move(lv));
  }
  tree["boxes"] = std::move(boxes);
  j["tree"] = std::move(tree);
  j["near"] = h2.lists.near;
  j["far"] = h2.lists.far;

  json levels = json::array();
  for (const auto& lv : h2.levels) {
    json e;
    e["points"] = lv.points;
    e["transfer"] = block_list(w, lv.transfer);
    json bases = json::array();
    for (const auto& b : lv.bases)
      bases.push_back({{"q_skel", w.add(b.q_skel)},
                       {"q_red", w.add(b.q_red)},
                       {"r_skel", w.add(b.r_skel)},
                       {"skeleton", b.skeleton},
                       {"rank", b.rank},
                       {"rank_clamped", b.rank_clamped},
                       {"residual", b.residual}});
    e["bases"] = std::move(bases);
    e["skeleton"] = lv.skeleton;
    e["near"] = block_map(w, lv.near);
    e["couplings"] = block_map(w, lv.couplings);
    levels.push_back(std::move(e));
  }
  j["levels"] = std::move(levels);
  return j;
}

inline H2Matrix h2_from_section(const BlockReader& r, const json& j) {
  H2Matrix h2;
  h2.kernel = kernel_from_json(j.at("kernel"));
  h2.config = config_from_json(j.at("config"));
  const auto& st = j.at("stats");
  h2.stats.prefactor_flops = st.at("prefactor_flops").get<std::uint64_t>();
  h2.stats.max_relative_residual = st.at("max_relative_residual").get<double>();
  h2.stats.max_rank = st.at("max_rank").get<std::size_t>();
  h2.stats.clamped_boxes = st.at("clamped_boxes").get<std::size_t>();
  const DenseBlock pts = r.get(j.at("points"));
  h2.cloud.points.resize(pts.rows());
  for (std::size_t t = 0; t < pts.rows(); ++t) h2.cloud.points[t] = {pts(t, 0), pts(t, 1), pts(t, 2)};
  h2.cloud.perm = j.at("perm").get<std::vector<std::size_t>>();
  require(h2.cloud.perm.size() == h2.cloud.points.size(), ErrorKind::format, "manifest: perm length mismatch");

  const auto& tj = j.at("tree");
  h2.tree.depth = tj.at("depth").get<int>();
  h2.tree.leaf_max = tj.at("leaf_max").get<std::size_t>();
  const auto& boxes = tj.at("boxes");
  require(boxes.size() == static_cast<std::size_t>(h2.tree.depth) + 1, ErrorKind::format,
          "manifest: tree level count does not match depth");
  for (std::size_t l = 0; l < boxes.size(); ++l) {
    std::vector<Box> level;
    for (std::size_t i = 0; i < boxes[l].size(); ++i) {
      const auto& e = boxes[l][i];
      const DenseBlock g = r.get(e[2]);
      level.push_back(Box{static_cast<int>(l), i, e[0].get<std::size_t>(), e[1].get<std::size_t>(),
                          {g(0, 0), g(0, 1), g(0, 2)}, g(0, 3)});
    }
    h2.tree.levels.push_back(std::move(level));
  }
  h2.lists.near = j.at("near").get<std::vector<std::vector<std::vector<std::size_t>>>>();
  h2.lists.far = j.at("far").get<std::vector<std::vector<std::vector<std::size_t>>>>();

  for (const auto& e : j.at("levels")) {
    H2Level lv;
    lv.points = e.at("points").get<std::vector<std::vector<std::size_t>>>();
    lv.transfer = read_block_list(r, e.at("transfer"));
    for (const auto& b : e.at("bases")) {
      BasisDecomposition d;
      d.q_skel = r.get(b.at("q_skel"));
      d.q_red = r.get(b.at("q_red"));
      d.r_skel = r.get(b.at("r_skel"));
      d.skeleton = b.at("skeleton").get<std::vector<std::size_t>>();
      d.rank = b.at("rank").get<std::size_t>();
      d.rank_clamped = b.at("rank_clamped").get<bool>();
      d.residual = b.at("residual").get<double>();
      lv.bases.push_back(std::move(d));
    }
    lv.skeleton = e.at("skeleton").get<std::vector<std::vector<std::size_t>>>();
    lv.near = read_block_map(r, e.at("near"));
    lv.couplings = read_block_map(r, e.at("couplings"));
    h2.levels.push_back(std::move(lv));
  }
  require(h2.levels.size() == static_cast<std::size_t>(h2.tree.depth) + 1, ErrorKind::format,
          "manifest: level count does not match depth");
  return h2;
}

inline json audit_json(const AuditReport& a) {
  return {{"enabled", a.enabled},
          {"initial_writes", a.initial_writes},
          {"diagonal_ss_updates", a.diagonal_ss_updates},
          {"repeated_diagonal_updates", a.repeated_diagonal_updates},
          {"offdiag_ss_writes", a.offdiag_ss_writes},
          {"factored_slot_writes", a.factored_slot_writes},
          {"violations", a.violations},
          {"clean", a.clean()}};
}

inline AuditReport audit_from_json(const json& j) {
  AuditReport a;
  a.enabled = j.at("enabled").get<bool>();
  a.initial_writes = j.at("initial_writes").get<std::uint64_t>();
  a.diagonal_ss_updates = j.at("diagonal_ss_updates").get<std::uint64_t>();
  a.repeated_diagonal_updates = j.at("repeated_diagonal_updates").get<std::uint64_t>();
  a.offdiag_ss_writes = j.at("offdiag_ss_writes").get<std::uint64_t>();
  a.factored_slot_writes = j.at("factored_slot_writes").get<std::uint64_t>();
  a.violations = j.at("violations").get<std::vector<std::string>>();
  return a;
}

inline json ulv_section(BlockWriter& w, const ULVFactors& f) {
  json j;
  json levels = json::array();
  for (const auto& lv : f.levels) {
    levels.push_back({{"red", lv.red},
                      {"skel", lv.skel},
                      {"lr_diag", block_list(w, lv.lr_diag)},
                      {"lr_off", block_map(w, lv.lr_off)},
                      {"ls", block_map(w, lv.ls)},
                      {"v", block_list(w, lv.v)},
                      {"ss", block_map(w, lv.ss)},
                      {"retained", block_map(w, lv.retained)}});
  }
  j["levels"] = std::move(levels);
  json merges = json::array();
  for (const auto& level : f.merge_map) {
    json lv = json::array();
    for (const auto& m : level) {
      json src = json::array();
      for (const auto& s : m.sources) src.push_back({s.child.first, s.child.second, s.far, s.transposed});
      lv.push_back({m.parent.first, m.parent.second, std::move(src)});
    }
    merges.push_back(std::move(lv));
  }
  j["merge_map"] = std::move(merges);
  j["root"] = w.add(f.root);
  json flops = json::array();
  for (const auto& p : f.flops) flops.push_back({{"level", p.level}, {"phase", p.phase}, {"tally", tally_json(p.tally)}});
  j["flops"] = std::move(flops);
  j["audit"] = audit_json(f.audit);
  j["retained"] = f.retained;
  return j;
}

inline ULVFactors ulv_from_section(const BlockReader& r, const json& j, std::shared_ptr<const H2Matrix> h2) {
  ULVFactors f;
  f.h2 = std::move(h2);
  for (const auto& e : j.at("levels")) {
    ULVLevel lv;
    lv.red = e.at("red").get<std::vector<std::size_t>>();
    lv.skel = e.at("skel").get<std::vector<std::size_t>>();
    lv.lr_diag = read_block_list(r, e.at("lr_diag"));
    lv.lr_off = read_block_map(r, e.at("lr_off"));
    lv.ls = read_block_map(r, e.at("ls"));
    lv.v = read_block_list(r, e.at("v"));
    lv.ss = read_block_map(r, e.at("ss"));
    lv.retained = read_block_map(r, e.at("retained"));
    f.levels.push_back(std::move(lv));
  }
  for (const auto& level : j.at("merge_map")) {
    std::vector<MergeRecord> recs;
    for (const auto& m : level) {
      MergeRecord rec;
      rec.parent = {m[0].get<std::size_t>(), m[1].get<std::size_t>()};
      for (std::size_t s = 0; s < 4; ++s) {
        const auto& src = m[2][s];
        rec.sources[s] = ChildSource{{src[0].get<std::size_t>(), src[1].get<std::size_t>()},
                                     src[2].get<bool>(), src[3].get<bool>()};
      }
      recs.push_back(rec);
    }
    f.merge_map.push_back(std::move(recs));
  }
  f.root = r.get(j.at("root"));
  for (const auto& p : j.at("flops"))
    f.flops.push_back(PhaseFlops{p.at("level").get<int>(), p.at("phase").get<std::string>(), tally_from_json(p.at("tally"))});
  f.audit = audit_from_json(j.at("audit"));
  f.retained = j.at("retained").get<bool>();
  require(f.levels.size() == static_cast<std::size_t>(f.h2->depth()) + 1, ErrorKind::format,
          "manifest: ulv level count does not match depth");
  return f;
}

inline void write_container(const std::filesystem::path& dir, const json& manifest, const BlockWriter& w) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::format, dir.string() + ": cannot create directory: " + ec.message());
  const std::string text = manifest.dump(1);
  write_file(dir / "manifest.json", text.data(), text.size());
  write_file(dir / "blocks.bin", w.bytes().data(), w.bytes().size());
}

inline std::pair<json, BlockReader> read_container(const std::filesystem::path& dir) {
  const auto text = read_file(dir / "manifest.json");
  json m = json::parse(text.begin(), text.end(), nullptr, false);
  if (m.is_discarded()) fail(ErrorKind::format, (dir / "manifest.json").string() + ": invalid JSON");
  require(m.value("format_version", -1) == kFormatVersion, ErrorKind::format,
          (dir / "manifest.json").string() + ": unsupported format version");
  return {std::move(m), BlockReader(read_file(dir / "blocks.bin"))};
}

}  // namespace detail

inline void save_h2(const H2Matrix& h2, const std::filesystem::path& dir) {
  BlockWriter w;
  json m{{"format_version", kFormatVersion}};
  m["h2"] = detail::h2_section(w, h2);
  detail::write_container(dir, m, w);
}

inline H2Matrix load_h2(const std::filesystem::path& dir) {
  auto [m, r] = detail::read_container(dir);
  require(m.contains("h2"), ErrorKind::format, dir.string() + ": manifest has no h2 section");
  try {
    return detail::h2_from_section(r, m["h2"]);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, dir.string() + ": malformed h2 section: " + e.what());
  }
}

// Factors are stored next to the matrix they were computed from.
inline void save_factors(const ULVFactors& f, const std::filesystem::path& dir) {
  BlockWriter w;
  json m{{"format_version", kFormatVersion}};
  m["h2"] = detail::h2_section(w, *f.h2);
  m["ulv"] = detail::ulv_section(w, f);
  detail::write_container(dir, m, w);
}

inline ULVFactors load_factors(const std::filesystem::path& dir) {
  auto [m, r] = detail::read_container(dir);
  require(m.contains("ulv"), ErrorKind::format, dir.string() + ": manifest has no ulv section");
  try {
    auto h2 = std::make_shared<const H2Matrix>(detail::h2_from_section(r, m["h2"]));
    return detail::ulv_from_section(r, m["ulv"], std::move(h2));
  } catch (const json::exception& e) {
    fail(ErrorKind::format, dir.string() + ": malformed ulv section: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Vectors: CSV (one value per line) or H2VEC\0 + uint64 count + float64 values

enum class VectorFormat { csv, binary };

inline constexpr char kVectorMagic[6] = {'H', '2', 'V', 'E', 'C', '\0'};

inline std::vector<double> load_vector(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::format, path + ": cannot open");
  char magic[6] = {};
  in.read(magic, 6);
  if (in.gcount() == 6 && std::memcmp(magic, kVectorMagic, 6) == 0) {
    std::uint64_t count = 0;
    if (!detail::read_le(in, count)) fail(ErrorKind::format, path + ": offset 6: truncated count");
    std::vector<double> v(count);
    for (std::uint64_t t = 0; t < count; ++t)
      if (!detail::read_le(in, v[t]))
        fail(ErrorKind::format, path + ": offset " + std::to_string(14 + 8 * t) + ": truncated value");
    return v;
  }
  in.clear();
  in.seekg(0);
  std::vector<double> v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    double x = 0.0;
    if (!detail::parse_double(s, x)) {
      if (v.empty() && lineno == 1) continue;  // header
      fail(ErrorKind::format, path + ": line " + std::to_string(lineno) + ": not a number");
    }
    v.push_back(x);
  }
  return v;
}

inline void save_vector(const std::vector<double>& v, const std::string& path, VectorFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::format, path + ": cannot open for writing");
  if (format == VectorFormat::binary) {
    out.write(kVectorMagic, 6);
    detail::write_le<std::uint64_t>(out, v.size());
    for (double x : v) detail::write_le(out, x);
  } else {
    char buf[32];
    for (double x : v) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
      out.write(buf, ptr - buf);
      out.put('\n');
    }
  }
  if (!out) fail(ErrorKind::format, path + ": write failed");
}

// ---------------------------------------------------------------------------
// Reports

inline json flop_report_json(const ULVFactors& f) {
  json phases = json::array();
  for (const auto& p : f.flops) {
    json e = detail::tally_json(p.tally);
    e["level"] = p.level;
    e["phase"] = p.phase;
    phases.push_back(std::move(e));
  }
  json total = detail::tally_json(f.total_flops());
  return {{"phases", std::move(phases)}, {"total", std::move(total)}};
}

inline json audit_report_json(const AuditReport& a) { return detail::audit_json(a); }

}  // namespace h2ulv
