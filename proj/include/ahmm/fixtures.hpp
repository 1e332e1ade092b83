#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ahmm/hierarchy_io.hpp"
#include "ahmm/oracle.hpp"
#include "ahmm/scenarios.hpp"
#include "ahmm/simulate.hpp"

namespace ahmm {

// Desk-scale fixtures: hierarchy file, a frozen seeded trajectory (plus its
// observation-only export), and an oracle table holding the exhaustively
// enumerated posteriors along that trajectory. The oracle table is computed
// from the raw model tables only.
struct FixtureFiles {
  std::vector<std::string> written;
};

namespace detail {

inline nlohmann::json oracle_table(const Hierarchy& h, std::span<const double> top_prior,
                                   const Trajectory& traj) {
  const int K = h.num_levels();
  oracle::JointFilter exact(h, top_prior, traj.s0);   // conditioned on (s, l)
  oracle::JointFilter blurred(h, top_prior, traj.s0); // conditioned on o only

  nlohmann::json steps = nlohmann::json::array();
  double log_lik = 0.0;
  for (const auto& st : traj.steps) {
    if (st.l >= K) break;
    log_lik += exact.step(st.s, st.l, -1);
    blurred.step(-1, -1, st.o);
    nlohmann::json rec;
    rec["t"] = static_cast<int>(steps.size()) + 1;
    for (int k = 0; k <= K; ++k) {
      nlohmann::json post = nlohmann::json::object(), next = nlohmann::json::object(),
                     noisy = nlohmann::json::object();
      const auto pm = exact.posterior_marginal(k);
      const auto nm = exact.marginal(k);
      const auto bm = blurred.marginal(k);
      for (int p = 0; p < h.num_policies(k); ++p) {
        post[h.policy_id(k, p)] = pm[p];
        next[h.policy_id(k, p)] = nm[p];
        noisy[h.policy_id(k, p)] = bm[p];
      }
      rec["posterior"]["level_" + std::to_string(k)] = post;
      rec["next"]["level_" + std::to_string(k)] = next;
      rec["next_given_obs"]["level_" + std::to_string(k)] = noisy;
    }
    steps.push_back(rec);
  }
  return nlohmann::json{{"log_lik", log_lik}, {"steps", steps}};
}

inline void write_text(const std::string& path, const std::string& body,
                       FixtureFiles& files) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::parse, "cannot open '" + path + "' for writing");
  out << body;
  files.written.push_back(path);
}

inline void emit_fixture(const Hierarchy& h, const RegionPartition* regions,
                         const std::string& stem, uint64_t sim_seed, int max_steps,
                         const std::string& out_dir, FixtureFiles& files) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string base = (fs::path(out_dir) / stem).string();

  save_hierarchy(h, base + ".json", regions);
  files.written.push_back(base + ".json");

  const int K = h.num_levels();
  std::vector<double> prior(h.num_policies(K), 1.0 / h.num_policies(K));
  const int s0 = h.initial.empty() ? 0 : h.initial.front().first;
  const int top = 0;
  Trajectory traj = simulate(h, top, s0, max_steps, sim_seed);

  {
    std::ostringstream ss;
    save_trajectory(h, traj, ss);
    write_text(base + "_traj.csv", ss.str(), files);
  }
  {
    std::ostringstream ss;
    save_observations(h, traj, ss);
    write_text(base + "_obs.csv", ss.str(), files);
  }
  write_text(base + "_oracle.json", oracle_table(h, prior, traj).dump(1) + "\n", files);
}

}  // namespace detail

inline FixtureFiles make_fixture(const std::string& name, const std::string& out_dir) {
  FixtureFiles files;
  if (name == "t4") {
    Hierarchy h = build_t4();
    detail::emit_fixture(h, nullptr, "t4", 11, 6, out_dir, files);
    Hierarchy hs = build_t4(true, true);
    detail::emit_fixture(hs, nullptr, "t4_srd", 11, 6, out_dir, files);
  } else if (name == "two_room") {
    BuildResult br = build_two_room();
    detail::emit_fixture(br.h, &br.regions, "two_room", 17, 6, out_dir, files);
  } else {
    throw_usage("unknown fixture '" + name + "' (t4 | two_room)");
  }
  return files;
}

}  // namespace ahmm
