// ahmm: policy recognition in hierarchies of abstract Markov policies.
//
// Subcommands: validate, build-scenario, simulate, filter, bench, fixtures.
// Exit codes: 0 success, 1 usage, 2 data error, 3 model/evidence
// inconsistency.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ahmm/experiment.hpp"
#include "ahmm/fixtures.hpp"
#include "ahmm/hierarchy_io.hpp"
#include "ahmm/scenarios.hpp"
#include "ahmm/simulate.hpp"
#include "ahmm/stream.hpp"

namespace {

using namespace ahmm;

std::vector<double> uniform_top_prior(const Hierarchy& h) {
  const int n = h.num_policies(h.num_levels());
  return std::vector<double>(n, 1.0 / n);
}

int resolve_s0(const Hierarchy& h, const std::string& s0_name, uint64_t seed) {
  if (!s0_name.empty()) return h.states.require(s0_name);
  if (h.initial.empty())
    throw_usage("hierarchy has no initial distribution; pass --s0");
  RngStream rng(seed, 0x51);
  return sample_sparse(h.initial, rng);
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

int cmd_validate(const std::string& path) {
  Hierarchy h = load_hierarchy(path);
  ValidationReport report = validate(h);
  if (report.ok()) {
    std::cout << "ok: " << path << " (" << h.states.size() << " states, K=" << h.num_levels()
              << ")\n";
    return 0;
  }
  for (const auto& issue : report.issues) {
    std::cout << "violation";
    if (issue.level >= 0) std::cout << " level=" << issue.level;
    if (!issue.policy_id.empty()) std::cout << " policy=" << issue.policy_id;
    if (!issue.state_id.empty()) std::cout << " state=" << issue.state_id;
    std::cout << ": " << issue.message << "\n";
  }
  std::cout << report.issues.size() << " violation(s)\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"policy recognition engine for abstract hidden Markov models"};
  app.require_subcommand(1);

  // validate
  std::string v_path;
  auto* validate_cmd = app.add_subcommand("validate", "check a hierarchy file");
  validate_cmd->add_option("hierarchy", v_path, "hierarchy JSON file")->required();

  // build-scenario
  std::string b_scenario = "building", b_out;
  int b_grid = 5, b_levels = 3;
  double b_obs_stay = 0.6;
  auto* build_cmd = app.add_subcommand("build-scenario", "generate a scenario hierarchy file");
  build_cmd->add_option("--scenario", b_scenario, "building | two_room | ring | t4 | t4_srd")
      ->capture_default_str();
  build_cmd->add_option("--out", b_out, "output hierarchy path")->required();
  build_cmd->add_option("--grid", b_grid, "room grid size")->capture_default_str();
  build_cmd->add_option("--obs-stay", b_obs_stay, "observation mass on the true cell")
      ->capture_default_str();
  build_cmd->add_option("--levels", b_levels, "ring scenario depth K")->capture_default_str();

  // simulate
  std::string s_hier, s_top, s_s0, s_out, s_obs_out;
  int s_steps = 1000;
  uint64_t s_seed = 1;
  auto* sim_cmd = app.add_subcommand("simulate", "run one episode and export it");
  sim_cmd->add_option("--hierarchy", s_hier, "hierarchy JSON file")->required();
  sim_cmd->add_option("--top", s_top, "top-level policy id")->required();
  sim_cmd->add_option("--s0", s_s0, "initial state (default: drawn from the initial section)");
  sim_cmd->add_option("--steps", s_steps, "maximum steps")->capture_default_str();
  sim_cmd->add_option("--seed", s_seed, "episode seed")->capture_default_str();
  sim_cmd->add_option("--out", s_out, "trajectory output path")->required();
  sim_cmd->add_option("--obs-out", s_obs_out, "observation-only export path");

  // filter
  std::string f_hier, f_kind = "rb_sis", f_traj, f_obs, f_s0, f_out, f_diag, f_levels,
              f_estimate_kind = "next";
  int f_particles = 1000, f_every = 1, f_threads = 1;
  uint64_t f_seed = 1;
  double f_resample = 0.5;
  bool f_stdin = false, f_strict = false, f_timing = false;
  auto* filter_cmd = app.add_subcommand("filter", "run a filter over an evidence stream");
  filter_cmd->add_option("--hierarchy", f_hier, "hierarchy JSON file")->required();
  filter_cmd->add_option("--kind", f_kind, "exact | rb_sis | sis")->capture_default_str();
  filter_cmd->add_option("--trajectory", f_traj, "trajectory file (required for exact)");
  filter_cmd->add_option("--obs", f_obs, "observation file (t,o records)");
  filter_cmd->add_flag("--stdin", f_stdin, "read the evidence stream from stdin");
  filter_cmd->add_option("--s0", f_s0, "initial state (otherwise taken from the stream header)");
  filter_cmd->add_option("--particles", f_particles, "sample count N")->capture_default_str();
  filter_cmd->add_option("--seed", f_seed, "filter seed")->capture_default_str();
  filter_cmd->add_option("--levels", f_levels, "query levels, e.g. 3,2 (default: top)");
  filter_cmd->add_option("--estimate-kind", f_estimate_kind, "next | posterior")
      ->capture_default_str();
  filter_cmd->add_option("--every", f_every, "estimate cadence; 0 = final step only")
      ->capture_default_str();
  filter_cmd->add_option("--threads", f_threads, "worker threads")->capture_default_str();
  filter_cmd->add_option("--resample-threshold", f_resample, "ESS fraction; 0 disables")
      ->capture_default_str();
  filter_cmd->add_option("--out", f_out, "estimate records path (default stdout)");
  filter_cmd->add_option("--diagnostics", f_diag, "diagnostics records path");
  filter_cmd->add_flag("--strict", f_strict, "abort on malformed stream lines");
  filter_cmd->add_flag("--timing", f_timing, "include wall_ns in records (not reproducible)");

  // bench
  std::string x_hier, x_filters = "rb_sis,sis", x_n = "100,1000,10000", x_top, x_s0, x_out;
  int x_repeats = 50, x_steps = 60, x_threads = 1, x_level = -1;
  uint64_t x_seed = 1, x_sim_seed = 1;
  auto* bench_cmd = app.add_subcommand("bench", "sigma(N)/T(N) performance profiles");
  bench_cmd->add_option("--hierarchy", x_hier, "hierarchy JSON file")->required();
  bench_cmd->add_option("--filters", x_filters, "comma list of exact|rb_sis|sis")
      ->capture_default_str();
  bench_cmd->add_option("--N", x_n, "comma list of sample sizes")->capture_default_str();
  bench_cmd->add_option("--repeats", x_repeats, "runs per cell")->capture_default_str();
  bench_cmd->add_option("--top", x_top, "true top-level policy id")->required();
  bench_cmd->add_option("--s0", x_s0, "initial state");
  bench_cmd->add_option("--steps", x_steps, "evidence stream length")->capture_default_str();
  bench_cmd->add_option("--seed", x_seed, "experiment seed")->capture_default_str();
  bench_cmd->add_option("--sim-seed", x_sim_seed, "seed of the frozen evidence stream")
      ->capture_default_str();
  bench_cmd->add_option("--level", x_level, "queried level (default: top)")->capture_default_str();
  bench_cmd->add_option("--threads", x_threads, "concurrent cells")->capture_default_str();
  bench_cmd->add_option("--out", x_out, "profile CSV path (default stdout)");

  // fixtures
  std::string g_name = "t4", g_dir = "fixtures";
  auto* fix_cmd = app.add_subcommand("fixtures", "write desk-scale fixtures with oracle tables");
  fix_cmd->add_option("--name", g_name, "t4 | two_room")->capture_default_str();
  fix_cmd->add_option("--out-dir", g_dir, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*validate_cmd) return cmd_validate(v_path);

    if (*build_cmd) {
      if (b_scenario == "building") {
        BuildResult br = build_building({b_grid, b_obs_stay});
        save_hierarchy(br.h, b_out, &br.regions);
      } else if (b_scenario == "two_room") {
        BuildResult br = build_two_room(b_grid, b_obs_stay);
        save_hierarchy(br.h, b_out, &br.regions);
      } else if (b_scenario == "ring") {
        BuildResult br = build_ring(b_levels);
        save_hierarchy(br.h, b_out, &br.regions);
      } else if (b_scenario == "t4") {
        save_hierarchy(build_t4(), b_out);
      } else if (b_scenario == "t4_srd") {
        save_hierarchy(build_t4(true, true), b_out);
      } else {
        throw_usage("unknown scenario '" + b_scenario + "'");
      }
      std::cout << "wrote " << b_out << "\n";
      return 0;
    }

    if (*sim_cmd) {
      Hierarchy h = load_hierarchy(s_hier);
      const int top = h.require_policy(h.num_levels(), s_top);
      const int s0 = resolve_s0(h, s_s0, s_seed);
      Trajectory traj = simulate(h, top, s0, s_steps, s_seed);
      save_trajectory(h, traj, s_out);
      if (!s_obs_out.empty()) save_observations(h, traj, s_obs_out);
      std::cout << "wrote " << s_out << " (" << traj.steps.size() << " steps, done="
                << (traj.done ? 1 : 0) << ")\n";
      return 0;
    }

    if (*filter_cmd) {
      Hierarchy h = load_hierarchy(f_hier);
      StreamOptions opt;
      opt.kind = filter_kind_from_string(f_kind);
      opt.filter.n_particles = f_particles;
      opt.filter.seed = f_seed;
      opt.filter.estimate_every = f_every;
      opt.filter.threads = f_threads;
      opt.filter.resample_threshold = f_resample;
      if (!f_levels.empty()) opt.filter.query_levels = parse_int_list(f_levels);
      if (f_estimate_kind == "posterior")
        opt.filter.kind = EstimateKind::posterior;
      else if (f_estimate_kind != "next")
        throw_usage("unknown estimate kind '" + f_estimate_kind + "'");
      opt.strict = f_strict;
      opt.timing = f_timing;
      if (!f_s0.empty()) opt.s0 = h.states.require(f_s0);

      const int sources = (f_traj.empty() ? 0 : 1) + (f_obs.empty() ? 0 : 1) + (f_stdin ? 1 : 0);
      if (sources != 1) throw_usage("pass exactly one of --trajectory, --obs, --stdin");
      std::ifstream file_in;
      std::istream* in = &std::cin;
      if (!f_traj.empty() || !f_obs.empty()) {
        file_in.open(f_traj.empty() ? f_obs : f_traj);
        if (!file_in) throw_parse("cannot open evidence stream file");
        in = &file_in;
      }
      std::ofstream file_out;
      std::ostream* out = &std::cout;
      if (!f_out.empty()) {
        file_out.open(f_out);
        if (!file_out) throw_parse("cannot open '" + f_out + "' for writing");
        out = &file_out;
      }
      std::ofstream diag_out;
      std::ostream* diag = nullptr;
      if (!f_diag.empty()) {
        diag_out.open(f_diag);
        if (!diag_out) throw_parse("cannot open '" + f_diag + "' for writing");
        diag = &diag_out;
      }
      const std::vector<double> prior = uniform_top_prior(h);
      stream_filter(h, prior, *in, *out, std::cerr, opt, diag);
      return 0;
    }

    if (*bench_cmd) {
      Hierarchy h = load_hierarchy(x_hier);
      const int top = h.require_policy(h.num_levels(), x_top);
      const int s0 = resolve_s0(h, x_s0, x_sim_seed);
      Trajectory traj = simulate(h, top, s0, x_steps, x_sim_seed);

      ExperimentConfig cfg;
      cfg.kinds.clear();
      std::stringstream ss(x_filters);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) cfg.kinds.push_back(filter_kind_from_string(tok));
      cfg.sample_sizes = parse_int_list(x_n);
      cfg.repeats = x_repeats;
      cfg.seed = x_seed;
      cfg.query_level = x_level;
      cfg.threads = x_threads;

      const std::vector<double> prior = uniform_top_prior(h);
      ProfileTable table = run_experiment(h, prior, traj, cfg);
      if (x_out.empty()) {
        write_profile_csv(table, std::cout);
      } else {
        std::ofstream out(x_out);
        if (!out) throw_parse("cannot open '" + x_out + "' for writing");
        write_profile_csv(table, out);
        std::cout << "wrote " << x_out << "\n";
      }
      return 0;
    }

    if (*fix_cmd) {
      FixtureFiles files = make_fixture(g_name, g_dir);
      for (const auto& f : files.written) std::cout << "wrote " << f << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case Errc::usage: return 1;
      case Errc::parse:
      case Errc::hierarchy: return 2;
      default: return 3;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
