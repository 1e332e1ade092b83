#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ahmm/hierarchy.hpp"
#include "ahmm/rng.hpp"

namespace ahmm {

inline int sample_sparse(const SparseRow& row, RngStream& rng) {
  const double u = rng.uniform() * sparse_sum(row);
  double acc = 0.0;
  int last = row.front().first;
  for (const auto& [k, p] : row) {
    if (p <= 0.0) continue;
    acc += p;
    last = k;
    if (u < acc) return last;
  }
  return last;
}

// One generative step record: the state arrived at, its observation, the
// highest termination level evaluated there, and the policy stack that
// produced the move (levels 0..K).
struct TrajectoryStep {
  int s = -1;
  int o = -1;
  int l = 0;
  std::vector<int> policies;
};

struct Trajectory {
  std::string top_id;
  uint64_t seed = 0;
  int s0 = -1;
  int o0 = -1;
  std::vector<int> initial_stack;     // stack selected at s0 (levels 0..K)
  std::vector<TrajectoryStep> steps;  // records t = 1..T
  bool done = false;                  // top-level policy terminated

  std::vector<int> observations() const {
    std::vector<int> obs;
    obs.reserve(steps.size());
    for (const auto& st : steps) obs.push_back(st.o);
    return obs;
  }
};

struct ExecState {
  int t = 0;
  std::vector<int> stack;  // stack[k] = current policy at level k (actions at 0)
  int state = -1;
  bool done = false;
  RngStream rng;

  ExecState(int K, uint64_t seed) : stack(K + 1, -1), rng(seed) {}
};

inline ExecState init_episode(const Hierarchy& h, int top, int s0, uint64_t seed) {
  const int K = h.num_levels();
  if (top < 0 || top >= h.num_policies(K)) throw_usage("unknown top-level policy index");
  if (!h.policy(K, top).applicable_at(s0))
    throw_usage("state '" + h.states.names[s0] + "' is not applicable for top-level policy '" +
                h.policy(K, top).id + "'");
  ExecState es(K, seed);
  es.state = s0;
  es.stack[K] = top;
  for (int k = K - 1; k >= 0; --k) {
    const SparseRow* row = h.policy(k + 1, es.stack[k + 1]).select_row(s0);
    if (row == nullptr || row->empty())
      throw_hierarchy("policy '" + h.policy(k + 1, es.stack[k + 1]).id +
                      "' has no selection at state '" + h.states.names[s0] + "'");
    es.stack[k] = sample_sparse(*row, es.rng);
  }
  return es;
}

inline TrajectoryStep step(const Hierarchy& h, ExecState& es) {
  if (es.done) throw_usage("step() on a finished episode");
  const int K = h.num_levels();

  const SparseRow& trow = h.actions.row(es.stack[0], es.state);
  if (trow.empty())
    throw_hierarchy("action '" + h.actions.names[es.stack[0]] + "' blocked at state '" +
                    h.states.names[es.state] + "'");
  const int s_next = sample_sparse(trow, es.rng);

  // Termination cascade at the arrived state, bottom-up; stops at the first
  // level that keeps running.
  int l = 0;
  for (int k = 1; k <= K; ++k) {
    const PolicySpec& spec = h.policy(k, es.stack[k]);
    if (!spec.is_destination(s_next)) break;
    if (es.rng.uniform() < spec.beta(s_next))
      l = k;
    else
      break;
  }

  const int o = sample_sparse(h.observation.likelihood[s_next], es.rng);

  TrajectoryStep rec{s_next, o, l, es.stack};

  if (l == K) {
    es.done = true;
  } else {
    for (int k = l; k >= 0; --k) {
      const SparseRow* row = h.policy(k + 1, es.stack[k + 1]).select_row(s_next);
      if (row == nullptr || row->empty())
        throw_hierarchy("policy '" + h.policy(k + 1, es.stack[k + 1]).id +
                        "' has no selection at state '" + h.states.names[s_next] + "'");
      es.stack[k] = sample_sparse(*row, es.rng);
    }
  }
  es.state = s_next;
  ++es.t;
  return rec;
}

inline Trajectory simulate(const Hierarchy& h, int top, int s0, int max_steps, uint64_t seed) {
  ExecState es = init_episode(h, top, s0, seed);
  Trajectory traj;
  traj.top_id = h.policy(h.num_levels(), top).id;
  traj.seed = seed;
  traj.s0 = s0;
  traj.o0 = sample_sparse(h.observation.likelihood[s0], es.rng);
  traj.initial_stack = es.stack;
  for (int i = 0; i < max_steps && !es.done; ++i) traj.steps.push_back(step(h, es));
  traj.done = es.done;
  return traj;
}

// ---------------------------------------------------------------------------
// Trajectory files: `t,s,o,l,pi_0..pi_K` records; `t,o` for the
// observation-only export that feeds the sampling filters.
// ---------------------------------------------------------------------------

inline void save_trajectory(const Hierarchy& h, const Trajectory& traj, std::ostream& out) {
  const int K = h.num_levels();
  out << "# ahmm-trajectory-v1\n";
  out << "# top=" << traj.top_id << " seed=" << traj.seed << " s0=" << h.states.names[traj.s0]
      << " done=" << (traj.done ? 1 : 0) << "\n";
  out << "t,s,o,l";
  for (int k = 0; k <= K; ++k) out << ",pi_" << k;
  out << "\n";
  auto write_row = [&](int t, int s, int o, int l, const std::vector<int>& stack) {
    out << t << "," << h.states.names[s] << "," << h.observation.symbols[o] << "," << l;
    for (int k = 0; k <= K; ++k) out << "," << h.policy_id(k, stack[k]);
    out << "\n";
  };
  write_row(0, traj.s0, traj.o0, 0, traj.initial_stack);
  for (size_t i = 0; i < traj.steps.size(); ++i)
    write_row(static_cast<int>(i) + 1, traj.steps[i].s, traj.steps[i].o, traj.steps[i].l,
              traj.steps[i].policies);
}

inline void save_trajectory(const Hierarchy& h, const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::parse, "cannot open '" + path + "' for writing");
  save_trajectory(h, traj, out);
}

inline void save_observations(const Hierarchy& h, const Trajectory& traj, std::ostream& out) {
  out << "# ahmm-observations-v1\n";
  out << "# s0=" << h.states.names[traj.s0] << " seed=" << traj.seed << "\n";
  out << "t,o\n";
  for (size_t i = 0; i < traj.steps.size(); ++i)
    out << (i + 1) << "," << h.observation.symbols[traj.steps[i].o] << "\n";
}

inline void save_observations(const Hierarchy& h, const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::parse, "cannot open '" + path + "' for writing");
  save_observations(h, traj, out);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline Trajectory load_trajectory(const Hierarchy& h, std::istream& in) {
  const int K = h.num_levels();
  Trajectory traj;
  std::string line;
  int lineno = 0;
  bool have_header_row = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string tok;
      while (meta >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "top") traj.top_id = val;
        if (key == "seed") traj.seed = std::stoull(val);
        if (key == "done") traj.done = val == "1";
      }
      continue;
    }
    if (!have_header_row) {  // column header
      have_header_row = true;
      continue;
    }
    const auto cols = split_csv(line);
    if (static_cast<int>(cols.size()) != 4 + K + 1)
      throw_parse("trajectory line " + std::to_string(lineno) + ": expected " +
                  std::to_string(4 + K + 1) + " columns");
    TrajectoryStep rec;
    const int t = std::stoi(cols[0]);
    rec.s = h.states.require(cols[1]);
    auto oit = h.observation.index.find(cols[2]);
    if (oit == h.observation.index.end())
      throw_parse("trajectory line " + std::to_string(lineno) + ": unknown observation '" +
                  cols[2] + "'");
    rec.o = oit->second;
    rec.l = std::stoi(cols[3]);
    rec.policies.resize(K + 1);
    for (int k = 0; k <= K; ++k) rec.policies[k] = h.require_policy(k, cols[4 + k]);
    if (t == 0) {
      traj.s0 = rec.s;
      traj.o0 = rec.o;
      traj.initial_stack = rec.policies;
    } else {
      traj.steps.push_back(std::move(rec));
    }
  }
  if (traj.s0 < 0) throw_parse("trajectory file has no t=0 record");
  return traj;
}

inline Trajectory load_trajectory(const Hierarchy& h, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::parse, "cannot open '" + path + "'");
  return load_trajectory(h, in);
}

}  // namespace ahmm
