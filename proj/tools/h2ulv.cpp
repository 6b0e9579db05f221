#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "h2ulv/h2ulv.hpp"

using namespace h2ulv;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitOther = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key=value config. Keys are long option names without dashes.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(path + ": cannot open config file");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto s = std::string(detail::trim(line));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError(path + ": line " + std::to_string(lineno) + ": expected key=value");
    out.emplace_back(std::string(detail::trim(std::string_view(s).substr(0, eq))),
                     std::string(detail::trim(std::string_view(s).substr(eq + 1))));
  }
  return out;
}

struct Common {
  std::string config;
  std::size_t workers = 1;
  bool verbose = false;
};

struct BuildArgs {
  std::string kernel = "laplace";
  double diag = 1.0e3;
  double decay = 1.0;
  std::size_t leaf = 256;
  double eta = 1.0;
  std::optional<double> tol;
  std::optional<std::size_t> rank;
  std::size_t sfar = 0, snear = 0;
  int gs = 2;
  std::uint64_t seed = 0;

  KernelSpec kernel_spec() const {
    KernelSpec k;
    k.family = parse_kernel_family(kernel);
    k.diagonal_shift = diag;
    k.yukawa_decay = decay;
    k.validate();
    return k;
  }
  BuildConfig config(std::size_t workers) const {
    BuildConfig c;
    c.eta = eta;
    c.leaf_max = leaf;
    c.rank = rank;
    c.tol = rank ? tol : tol.value_or(1e-7);
    c.s_far = sfar;
    c.s_near = snear;
    c.gs_sweeps = gs;
    c.seed = seed;
    c.workers = workers;
    c.validate();
    return c;
  }
  std::string describe() const {
    std::ostringstream os;
    os << "kernel=" << kernel << " diag=" << diag << " decay=" << decay << " leaf=" << leaf << " eta=" << eta;
    if (rank) os << " rank=" << *rank;
    else os << " tol=" << tol.value_or(1e-7);
    os << " sfar=" << sfar << " snear=" << snear << " gs=" << gs << " seed=" << seed;
    return os.str();
  }
};

void add_build_options(CLI::App* cmd, BuildArgs& a) {
  cmd->add_option("--kernel", a.kernel, "laplace|yukawa")->check(CLI::IsMember({"laplace", "yukawa"}));
  cmd->add_option("--diag", a.diag, "diagonal shift")->check(CLI::PositiveNumber);
  cmd->add_option("--decay", a.decay, "yukawa decay")->check(CLI::PositiveNumber);
  cmd->add_option("--leaf", a.leaf, "leaf size bound")->check(CLI::PositiveNumber);
  cmd->add_option("--eta", a.eta, "admissibility number")->check(CLI::NonNegativeNumber);
  cmd->add_option("--tol", a.tol, "truncation tolerance")->check(CLI::PositiveNumber);
  cmd->add_option("--rank", a.rank, "fixed rank")->check(CLI::PositiveNumber);
  cmd->add_option("--sfar", a.sfar, "far sample budget (0 = all)");
  cmd->add_option("--snear", a.snear, "near sample budget (0 = all)");
  cmd->add_option("--gs", a.gs, "Gauss-Seidel sweeps (0 = exact)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", a.seed, "sampling seed");
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = std::string(detail::trim(item));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

template <typename T>
std::vector<T> parse_grid(const std::string& s) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw UsageError("--grid: cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--grid: empty list");
  return out;
}

std::ofstream open_csv(const std::string& path, const std::string& comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::format, path + ": cannot open for writing");
  out << "# h2ulv format " << kFormatVersion << ' ' << comment << '\n';
  return out;
}

json build_summary(const H2Matrix& h2, double seconds) {
  json ranks = json::array();
  for (int l = 1; l <= h2.depth(); ++l) {
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& b : h2.levels[static_cast<std::size_t>(l)].bases) {
      lo = std::min(lo, b.rank);
      hi = std::max(hi, b.rank);
    }
    ranks.push_back({{"level", l}, {"min_rank", lo}, {"max_rank", hi}});
  }
  return {{"n", h2.count()},
          {"depth", h2.depth()},
          {"max_rank", h2.stats.max_rank},
          {"ranks", ranks},
          {"clamped_boxes", h2.stats.clamped_boxes},
          {"max_relative_residual", h2.stats.max_relative_residual},
          {"prefactor_flops", h2.stats.prefactor_flops},
          {"seconds", seconds}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"H2-matrix ULV Cholesky solver"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config, "key=value config file");
    cmd->add_option("--workers", common.workers, "worker threads (0 = auto)");
    cmd->add_flag("--verbose", common.verbose, "log progress to standard error");
  };

  // gen
  auto* gen = app.add_subcommand("gen", "generate a point cloud");
  std::string shape = "sphere", gen_out, gen_format = "csv";
  std::size_t gen_n = 0;
  std::uint64_t gen_seed = 0;
  add_common(gen);
  gen->add_option("--shape", shape, "sphere|cube")->check(CLI::IsMember({"sphere", "cube"}));
  gen->add_option("--n", gen_n, "point count")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "seed");
  gen->add_option("--out", gen_out, "output path")->required();
  gen->add_option("--format", gen_format, "csv|bin")->check(CLI::IsMember({"csv", "bin"}));

  // build
  auto* build = app.add_subcommand("build", "construct the H2 matrix");
  BuildArgs bargs;
  std::string points_path, build_out;
  add_common(build);
  add_build_options(build, bargs);
  build->add_option("--points", points_path, "geometry file")->required();
  build->add_option("--out", build_out, "output directory")->required();

  // factor
  auto* factor = app.add_subcommand("factor", "ULV factorization");
  std::string h2_dir, factor_out, exec = "batched";
  bool audit = false, retain = false;
  add_common(factor);
  factor->add_option("--h2", h2_dir, "H2 directory")->required();
  factor->add_option("--out", factor_out, "output directory (default: --h2)");
  factor->add_option("--exec", exec, "batched|sequential")->check(CLI::IsMember({"batched", "sequential"}));
  factor->add_flag("--audit", audit, "track slot writes");
  factor->add_flag("--retain", retain, "keep sparsified blocks");

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "forward and backward substitution");
  std::string factors_dir, rhs_path, solve_out, solve_mode = "parallel", vec_format = "csv";
  std::optional<std::uint64_t> rhs_seed;
  add_common(solve_cmd);
  solve_cmd->add_option("--factors", factors_dir, "factor directory")->required();
  auto* rhs_opt = solve_cmd->add_option("--rhs", rhs_path, "right-hand side vector file");
  auto* rhs_rand = solve_cmd->add_option("--rhs-random", rhs_seed, "random right-hand side seed");
  rhs_opt->excludes(rhs_rand);
  solve_cmd->add_option("--mode", solve_mode, "parallel|naive")->check(CLI::IsMember({"parallel", "naive"}));
  solve_cmd->add_option("--out", solve_out, "solution vector path")->required();
  solve_cmd->add_option("--format", vec_format, "csv|bin")->check(CLI::IsMember({"csv", "bin"}));

  // sweep
  auto* sweep = app.add_subcommand("sweep", "experiment series as CSV");
  BuildArgs sargs;
  std::string kind, grid, sweep_out, sweep_shape = "sphere";
  std::size_t sweep_n_points = 8192, oracle_cap = kDefaultOracleCap;
  std::uint64_t geo_seed = 0;
  add_common(sweep);
  add_build_options(sweep, sargs);
  sweep->add_option("--kind", kind, "n|rank|eta")->required()->check(CLI::IsMember({"n", "rank", "eta"}));
  sweep->add_option("--grid", grid, "comma-separated values")->required();
  sweep->add_option("--n", sweep_n_points, "point count for rank/eta sweeps")->check(CLI::PositiveNumber);
  sweep->add_option("--shape", sweep_shape, "sphere|cube")->check(CLI::IsMember({"sphere", "cube"}));
  sweep->add_option("--geometry-seed", geo_seed, "geometry and right-hand side seed");
  sweep->add_option("--oracle-cap", oracle_cap, "largest N for the dense oracle");
  sweep->add_option("--out", sweep_out, "CSV path")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "distributed communication traces");
  std::string sim_dir, sim_out;
  std::size_t procs = 1;
  add_common(sim);
  sim->add_option("--h2", sim_dir, "H2 or factor directory")->required();
  sim->add_option("--procs", procs, "process count (power of two)")->required()->check(CLI::PositiveNumber);
  sim->add_option("--out", sim_out, "output prefix")->required();

  // config file keys are injected as flags ahead of the command line so that
  // explicit flags take precedence
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    for (std::size_t t = 0; t < args.size(); ++t) {
      std::string path;
      if (args[t] == "--config" && t + 1 < args.size()) path = args[t + 1];
      else if (args[t].rfind("--config=", 0) == 0) path = args[t].substr(9);
      if (path.empty() || args.empty()) continue;
      CLI::App* cmd = nullptr;
      for (auto* c : {gen, build, factor, solve_cmd, sweep, sim})
        if (c->get_name() == args[0]) cmd = c;
      if (!cmd) throw UsageError("--config must follow a subcommand");
      std::vector<std::string> injected;
      for (const auto& [key, value] : read_config(path)) {
        const CLI::Option* opt = cmd->get_option_no_throw("--" + key);
        if (!opt || key == "config") throw UsageError(path + ": unknown key '" + key + "' for " + args[0]);
        if (opt->get_expected_min() == 0) {
          if (value == "true" || value == "1") injected.push_back("--" + key);
          else if (value != "false" && value != "0") throw UsageError(path + ": key '" + key + "' expects true|false");
        } else {
          injected.push_back("--" + key);
          injected.push_back(value);
        }
      }
      args.insert(args.begin() + 1, injected.begin(), injected.end());
      break;
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  auto log = [&](const std::string& msg) {
    if (common.verbose) std::cerr << "[h2ulv] " << msg << '\n';
  };
  const std::size_t workers = resolve_workers(common.workers);

  try {
    if (gen->parsed()) {
      const PointCloud cloud = generate(parse_shape(shape), gen_n, gen_seed);
      save_points(cloud, gen_out, gen_format == "bin" ? PointFormat::binary : PointFormat::csv);
      print_json({{"points", gen_n}, {"shape", shape}, {"out", gen_out}});
    } else if (build->parsed()) {
      const KernelSpec k = bargs.kernel_spec();
      const BuildConfig cfg = bargs.config(workers);
      log("loading " + points_path);
      PointCloud cloud = load_points(points_path);
      const auto t0 = std::chrono::steady_clock::now();
      const H2Matrix h2 = construct(k, std::move(cloud), cfg);
      const double secs = seconds_since(t0);
      log("saving " + build_out);
      save_h2(h2, build_out);
      print_json(build_summary(h2, secs));
    } else if (factor->parsed()) {
      log("loading " + h2_dir);
      auto h2 = std::make_shared<const H2Matrix>(load_h2(h2_dir));
      FactorOptions fo;
      fo.mode = exec == "batched" ? ExecMode::batched : ExecMode::sequential;
      fo.audit = audit;
      fo.retain = retain;
      fo.workers = workers;
      const auto t0 = std::chrono::steady_clock::now();
      const ULVFactors f = factorize(h2, fo);
      const double secs = seconds_since(t0);
      save_factors(f, factor_out.empty() ? h2_dir : factor_out);
      json out{{"n", h2->count()}, {"depth", h2->depth()}, {"seconds", secs}, {"flops", flop_report_json(f)}};
      out["prefactor_flops"] = h2->stats.prefactor_flops;
      if (audit) out["audit"] = audit_report_json(f.audit);
      print_json(out);
    } else if (solve_cmd->parsed()) {
      if (rhs_path.empty() && !rhs_seed) {
        std::cerr << "error: one of --rhs or --rhs-random is required\n" << solve_cmd->help();
        return kExitUsage;
      }
      log("loading " + factors_dir);
      const ULVFactors f = load_factors(factors_dir);
      const std::size_t n = f.h2->count();
      std::vector<double> b = rhs_seed ? random_block(n, 1, *rhs_seed).values() : load_vector(rhs_path);
      require(b.size() == n, ErrorKind::dimension_mismatch,
              "solve: right-hand side has " + std::to_string(b.size()) + " entries, expected " + std::to_string(n));
      const auto t0 = std::chrono::steady_clock::now();
      const std::vector<double> x = h2ulv::solve(f, b, parse_solve_mode(solve_mode), workers);
      const double secs = seconds_since(t0);
      save_vector(x, solve_out, vec_format == "bin" ? VectorFormat::binary : VectorFormat::csv);
      const PointCloud& cloud = f.h2->cloud;
      const DenseBlock xb(n, 1, x), bb(n, 1, b);
      const DenseBlock ax = to_input_order(cloud, h2_matvec(*f.h2, to_tree_order(cloud, xb)));
      print_json({{"n", n}, {"mode", solve_mode}, {"seconds", secs}, {"h2_residual", relative_error(ax, bb)}});
    } else if (sweep->parsed()) {
      SweepSetup s;
      s.shape = parse_shape(sweep_shape);
      s.kernel = sargs.kernel_spec();
      s.seed = geo_seed;
      s.oracle_cap = oracle_cap;
      const std::string comment = "kind=" + kind + " grid=" + grid + " n=" + std::to_string(sweep_n_points) +
                                  " shape=" + sweep_shape + " " + sargs.describe();
      if (kind == "n") {
        s.build = sargs.config(workers);
        const auto rows = sweep_n(s, parse_grid<std::size_t>(grid));
        auto out = open_csv(sweep_out, comment);
        out << "N,true_flops,padded_flops,seconds\n";
        for (const auto& r : rows) out << r.n << ',' << r.true_flops << ',' << r.padded_flops << ',' << r.seconds << '\n';
      } else if (kind == "rank") {
        BuildArgs a = sargs;
        a.rank = a.rank.value_or(1);
        s.build = a.config(workers);
        const auto rows = sweep_rank(s, sweep_n_points, parse_grid<std::size_t>(grid));
        auto out = open_csv(sweep_out, comment);
        out << "rank,h2_error,hss_error\n";
        auto cell = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("unavailable"); };
        for (const auto& r : rows) {
          char buf[64];
          out << r.rank << ',';
          if (r.h2_error) std::snprintf(buf, sizeof buf, "%.6e", *r.h2_error), out << buf;
          else out << cell(r.h2_error);
          out << ',';
          if (r.hss_error) std::snprintf(buf, sizeof buf, "%.6e", *r.hss_error), out << buf;
          else out << cell(r.hss_error);
          out << '\n';
        }
      } else {
        s.build = sargs.config(workers);
        const auto rows = sweep_eta(s, sweep_n_points, parse_grid<double>(grid));
        auto out = open_csv(sweep_out, comment);
        out << "eta,prefactor_flops,factor_flops,ratio\n";
        for (const auto& r : rows)
          out << r.eta << ',' << r.prefactor_flops << ',' << r.factor_flops << ',' << r.ratio << '\n';
      }
      print_json({{"kind", kind}, {"out", sweep_out}});
    } else if (sim->parsed()) {
      if (!is_power_of_two(procs)) {
        std::cerr << "error: --procs " << procs << " is not a power of two\n";
        return kExitUsage;
      }
      auto [manifest, reader] = detail::read_container(sim_dir);
      const H2Matrix h2 = detail::h2_from_section(reader, manifest.at("h2"));
      if (procs > h2.tree.boxes_at(h2.depth())) {
        std::cerr << "error: --procs " << procs << " exceeds the " << h2.tree.boxes_at(h2.depth()) << " leaf boxes\n";
        return kExitUsage;
      }
      const ProcAssignment a = assign(h2.tree, procs);
      const CommStructure st = comm_structure(h2);
      const CommTrace ft = simulate_factor(st, a), strace = simulate_solve(st, a);
      const std::string comment = "procs=" + std::to_string(procs) + " h2=" + sim_dir;
      {
        auto out = open_csv(sim_out + "_factor.csv", comment);
        write_trace_csv(out, ft);
      }
      {
        auto out = open_csv(sim_out + "_solve.csv", comment);
        write_trace_csv(out, strace);
      }
      json summary{{"procs", procs},
                   {"factor_events", ft.events.size()},
                   {"solve_events", strace.events.size()},
                   {"factor_bytes_per_rank", ft.bytes_per_rank()},
                   {"solve_bytes_per_rank", strace.bytes_per_rank()}};
      if (manifest.contains("ulv")) {
        auto h2p = std::make_shared<const H2Matrix>(h2);
        const ULVFactors f = detail::ulv_from_section(reader, manifest["ulv"], h2p);
        const ReplicationSummary r = replicated_work(a, f.flops);
        summary["replicated"] = {{"distinct_flops", r.distinct_flops},
                                 {"executed_flops", r.executed_flops},
                                 {"redundant_flops", r.redundant_flops},
                                 {"redundant_share", r.redundant_share()}};
      }
      std::ofstream js(sim_out + "_summary.json", std::ios::trunc);
      js << summary.dump(2) << '\n';
      print_json(summary);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (e.kind() == ErrorKind::not_positive_definite || e.kind() == ErrorKind::singular) return kExitNumerical;
    if (e.kind() == ErrorKind::invalid_argument) return kExitUsage;
    return kExitOther;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return 0;
}
