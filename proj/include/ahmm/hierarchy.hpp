#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ahmm/error.hpp"
#include "ahmm/prob.hpp"

namespace ahmm {

// Sparse probability row: (index, prob) pairs sorted by index.
using SparseRow = std::vector<std::pair<int, double>>;

inline double sparse_lookup(const SparseRow& row, int key) {
  auto it = std::lower_bound(row.begin(), row.end(), key,
                             [](const auto& p, int k) { return p.first < k; });
  return (it != row.end() && it->first == key) ? it->second : 0.0;
}

inline double sparse_sum(const SparseRow& row) {
  double s = 0.0;
  for (const auto& [k, p] : row) s += p;
  return s;
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct StateSpace {
  std::vector<std::string> names;
  std::vector<std::vector<int>> neighbours;  // sorted, excludes self
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(names.size()); }

  int require(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw_usage("unknown state '" + name + "'");
    return it->second;
  }

  bool is_neighbour(int s, int t) const {
    const auto& nb = neighbours[s];
    return std::binary_search(nb.begin(), nb.end(), t);
  }

  // Domain of a one-step state node: neighbours(s) plus s itself, sorted.
  std::vector<int> step_domain(int s) const {
    std::vector<int> d = neighbours[s];
    d.insert(std::lower_bound(d.begin(), d.end(), s), s);
    return d;
  }
};

struct ActionModel {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> index;
  // transition[a][s]: distribution over successor states; empty row means the
  // action is blocked (not available) at s.
  std::vector<std::vector<SparseRow>> transition;

  int size() const { return static_cast<int>(names.size()); }

  const SparseRow& row(int a, int s) const { return transition[a][s]; }
};

struct ObservationModel {
  std::vector<std::string> symbols;
  std::unordered_map<std::string, int> index;
  std::vector<SparseRow> likelihood;  // per state: distribution over symbols

  int size() const { return static_cast<int>(symbols.size()); }

  double prob(int s, int o) const { return sparse_lookup(likelihood[s], o); }
};

struct PolicySpec {
  std::string id;
  int level = 0;
  std::vector<int> applicable;    // S_pi, sorted state indices
  std::vector<int> destinations;  // D_pi, sorted state indices
  std::map<int, double> stop_prob;  // beta, keyed by destination state
  // Selection over children (level-1 policy indices; actions when level == 1).
  // States without an explicit row fall back to select_default when present.
  std::map<int, SparseRow> select;
  std::optional<SparseRow> select_default;

  bool applicable_at(int s) const {
    return std::binary_search(applicable.begin(), applicable.end(), s);
  }
  bool is_destination(int s) const {
    return std::binary_search(destinations.begin(), destinations.end(), s);
  }
  double beta(int s) const {
    auto it = stop_prob.find(s);
    return it == stop_prob.end() ? 0.0 : it->second;
  }
  const SparseRow* select_row(int s) const {
    auto it = select.find(s);
    if (it != select.end()) return &it->second;
    if (select_default) return &*select_default;
    return nullptr;
  }
};

// State-space partitions for one region level: region id per state.
struct RegionLevel {
  std::vector<int> region_of;  // state -> region id
  int region_count = 0;
};

struct RegionPartition {
  // levels[k-1] is the partition P_k, k = 1..K; P_K must be the whole space.
  std::vector<RegionLevel> levels;

  int num_levels() const { return static_cast<int>(levels.size()); }

  // Periphery of the region containing `seed` at partition level k:
  // states outside the region but reachable from it in one step.
  std::vector<int> periphery(const StateSpace& ss, int k, int seed) const {
    const auto& part = levels[k - 1];
    const int region = part.region_of[seed];
    std::vector<int> out;
    for (int s = 0; s < ss.size(); ++s) {
      if (part.region_of[s] != region) continue;
      for (int t : ss.neighbours[s])
        if (part.region_of[t] != region) out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

// Highest partition level at which the two states fall in different regions;
// 0 when they share a region everywhere (only the primitive action ended).
// P_K covers the whole space, so results stay below K by construction.
inline int srd_termination_level(const RegionPartition& part, int s_prev, int s_now) {
  int level = 0;
  for (int k = 1; k <= part.num_levels(); ++k) {
    const auto& p = part.levels[k - 1];
    if (p.region_of[s_prev] != p.region_of[s_now]) level = k;
  }
  return level;
}

// ---------------------------------------------------------------------------
// The hierarchy
// ---------------------------------------------------------------------------

struct ValidationIssue {
  int level = -1;           // -1: not policy-specific
  std::string policy_id;    // empty when not policy-specific
  std::string state_id;     // empty when not state-specific
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
};

class Hierarchy {
 public:
  StateSpace states;
  ActionModel actions;
  ObservationModel observation;
  // levels[k-1] holds the level-k policy set, k = 1..K. Level 0 is exactly
  // the primitive action set.
  std::vector<std::vector<PolicySpec>> levels;
  // Optional initial-state distribution over state indices.
  SparseRow initial;

  int num_levels() const { return static_cast<int>(levels.size()); }  // K

  int num_policies(int k) const {
    return k == 0 ? actions.size() : static_cast<int>(levels[k - 1].size());
  }

  const PolicySpec& policy(int k, int p) const { return levels[k - 1][p]; }

  const std::string& policy_id(int k, int p) const {
    return k == 0 ? actions.names[p] : levels[k - 1][p].id;
  }

  int find_policy(int k, const std::string& id) const {
    if (k == 0) {
      auto it = actions.index.find(id);
      return it == actions.index.end() ? -1 : it->second;
    }
    auto it = policy_index_[k - 1].find(id);
    return it == policy_index_[k - 1].end() ? -1 : it->second;
  }

  int require_policy(int k, const std::string& id) const {
    int p = find_policy(k, id);
    if (p < 0) throw_usage("unknown level-" + std::to_string(k) + " policy '" + id + "'");
    return p;
  }

  // Pi^k(s): policies at level k applicable at s (actions for k = 0).
  const std::vector<int>& applicable(int k, int s) const {
    if (k < 0 || k > num_levels()) throw_usage("level out of range");
    if (s < 0 || s >= states.size()) throw_usage("state index out of range");
    return applicable_[k][s];
  }

  // Termination probability of policy p (level k) at state s. Top-level
  // policies never terminate as far as inference is concerned.
  double term_prob(int k, int p, int s) const {
    if (k >= num_levels()) return 0.0;
    const PolicySpec& spec = policy(k, p);
    return spec.is_destination(s) ? spec.beta(s) : 0.0;
  }

  // Builds id maps and per-state applicability indexes. Must be called once
  // after construction; the hierarchy is immutable afterwards.
  void finalize() {
    policy_index_.assign(levels.size(), {});
    for (size_t k = 0; k < levels.size(); ++k)
      for (size_t p = 0; p < levels[k].size(); ++p)
        policy_index_[k][levels[k][p].id] = static_cast<int>(p);

    applicable_.assign(num_levels() + 1, {});
    applicable_[0].assign(states.size(), {});
    for (int s = 0; s < states.size(); ++s)
      for (int a = 0; a < actions.size(); ++a)
        if (!actions.row(a, s).empty()) applicable_[0][s].push_back(a);
    for (int k = 1; k <= num_levels(); ++k) {
      applicable_[k].assign(states.size(), {});
      for (size_t p = 0; p < levels[k - 1].size(); ++p)
        for (int s : levels[k - 1][p].applicable)
          applicable_[k][s].push_back(static_cast<int>(p));
    }
  }

 private:
  std::vector<std::unordered_map<std::string, int>> policy_index_;
  std::vector<std::vector<std::vector<int>>> applicable_;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_row_normalized(const SparseRow& row, double tol, ValidationReport& report,
                                 ValidationIssue proto) {
  if (std::abs(sparse_sum(row) - 1.0) > tol) {
    proto.message = "distribution not normalized: " + proto.message;
    report.issues.push_back(std::move(proto));
  }
}

}  // namespace detail

// Violations are data, not failures: every breached invariant gets one entry.
inline ValidationReport validate(const Hierarchy& h) {
  ValidationReport report;
  const int n_states = h.states.size();

  // State space: neighbour references in range (loader already guards names).
  for (int s = 0; s < n_states; ++s)
    for (int t : h.states.neighbours[s])
      if (t < 0 || t >= n_states)
        report.issues.push_back({-1, "", h.states.names[s], "neighbour index out of range"});

  // Action model rows: normalised, support within neighbours(s) + {s}.
  for (int a = 0; a < h.actions.size(); ++a) {
    for (int s = 0; s < n_states; ++s) {
      const SparseRow& row = h.actions.row(a, s);
      if (row.empty()) continue;
      detail::check_row_normalized(row, kProbTol, report,
                                   {0, h.actions.names[a], h.states.names[s],
                                    "transition row"});
      for (const auto& [t, pr] : row) {
        if (pr < 0.0 || pr > 1.0)
          report.issues.push_back({0, h.actions.names[a], h.states.names[s],
                                   "transition probability out of range"});
        if (t != s && !h.states.is_neighbour(s, t))
          report.issues.push_back({0, h.actions.names[a], h.states.names[s],
                                   "transition support outside neighbour set"});
      }
    }
  }

  // Observation rows.
  for (int s = 0; s < n_states; ++s) {
    detail::check_row_normalized(h.observation.likelihood[s], kProbTol, report,
                                 {-1, "", h.states.names[s], "observation row"});
  }

  // Policy levels.
  for (int k = 1; k <= h.num_levels(); ++k) {
    for (int p = 0; p < h.num_policies(k); ++p) {
      const PolicySpec& spec = h.policy(k, p);
      ValidationIssue proto{k, spec.id, "", ""};

      if (spec.destinations.empty() && k < h.num_levels()) {
        proto.message = "policy below the top level can never terminate (empty destination set)";
        report.issues.push_back(proto);
      }

      for (int d : spec.destinations) {
        const double b = spec.beta(d);
        if (b <= 0.0 || b > 1.0) {
          report.issues.push_back({k, spec.id, h.states.names[d],
                                   "stopping probability out of (0,1]"});
        }
        if (!spec.applicable_at(d) && b < 1.0) {
          report.issues.push_back({k, spec.id, h.states.names[d],
                                   "non-terminal exterior destination"});
        }
      }

      // Def. 2 containment against the level below.
      for (int s : spec.applicable) {
        if (h.applicable(k - 1, s).empty()) {
          report.issues.push_back({k, spec.id, h.states.names[s],
                                   "no applicable child policy at an applicable state"});
        }
      }
      for (int d : spec.destinations) {
        bool covered = false;
        if (k == 1) {
          // Destinations of primitive actions: anywhere an action can land
          // or stop, i.e. any state in some transition support or domain.
          for (int a = 0; a < h.actions.size() && !covered; ++a)
            for (int s = 0; s < n_states && !covered; ++s)
              if (sparse_lookup(h.actions.row(a, s), d) > 0.0 ||
                  (!h.actions.row(a, d).empty()))
                covered = true;
        } else {
          for (int c = 0; c < h.num_policies(k - 1) && !covered; ++c)
            if (h.policy(k - 1, c).is_destination(d)) covered = true;
        }
        if (!covered)
          report.issues.push_back({k, spec.id, h.states.names[d],
                                   "destination not covered by any child destination set"});
      }

      // Selection rows: defined, normalised, support within applicable children.
      for (int s : spec.applicable) {
        const SparseRow* row = spec.select_row(s);
        if (row == nullptr || row->empty()) {
          report.issues.push_back({k, spec.id, h.states.names[s], "missing selection row"});
          continue;
        }
        detail::check_row_normalized(*row, kProbTol, report,
                                     {k, spec.id, h.states.names[s], "selection row"});
        const auto& legal = h.applicable(k - 1, s);
        for (const auto& [c, pr] : *row) {
          if (pr < 0.0 || pr > 1.0)
            report.issues.push_back({k, spec.id, h.states.names[s],
                                     "selection probability out of range"});
          if (pr > 0.0 && !std::binary_search(legal.begin(), legal.end(), c))
            report.issues.push_back({k, spec.id, h.states.names[s],
                                     "selection support outside applicable children"});
        }
      }
    }
  }

  // Non-terminal states used by any policy need neighbours to move through.
  for (int k = 1; k <= h.num_levels(); ++k)
    for (int p = 0; p < h.num_policies(k); ++p)
      for (int s : h.policy(k, p).applicable)
        if (h.states.neighbours[s].empty())
          report.issues.push_back({k, h.policy(k, p).id, h.states.names[s],
                                   "applicable state has no neighbours"});

  return report;
}

}  // namespace ahmm
