#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <sstream>
#include <vector>

#include "ahmm/hierarchy.hpp"
#include "ahmm/prob.hpp"

namespace ahmm {

// Conditional probability table between two adjacent chain nodes.
// Rows are indexed by parent values, columns by child values. Rows that can
// never be reached (zero marginal mass at reversal time) hold a uniform
// placeholder and are flagged.
struct Table {
  int rows = 0, cols = 0;
  std::vector<double> v;
  std::vector<uint8_t> row_unreachable;

  Table() = default;
  Table(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  std::span<double> row(int r) { return {v.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {v.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }
  void flag_unreachable(int r) {
    if (row_unreachable.empty()) row_unreachable.assign(rows, 0);
    row_unreachable[r] = 1;
  }
  bool unreachable(int r) const { return !row_unreachable.empty() && row_unreachable[r]; }
};

// Chain-structured joint over the current policies (levels 0..K) and,
// optionally, the one-step state node hanging below level 0.
//
// Node numbering: when the state node is present it is node 0 and level k
// sits at node k+1; otherwise level k is node k. Edge e joins nodes e and
// e+1; edges below the root point away from it (parent = node e+1), edges at
// or above the root point up (parent = node e).
struct BeliefChain {
  int K = 0;
  bool has_state = false;
  int root = 0;  // node index
  std::vector<std::vector<int>> domain;  // per node: global ids (states or per-level policies)
  std::vector<Table> edge;               // node_count() - 1 entries
  std::vector<double> root_marginal;
  std::vector<int> start_state;  // b^k per level 0..K
  std::vector<int> start_time;   // tau^k per level 0..K

  int node_count() const { return K + 1 + (has_state ? 1 : 0); }
  int node_of_level(int k) const { return k + (has_state ? 1 : 0); }
  int level_of_node(int n) const { return n - (has_state ? 1 : 0); }
  int root_level() const { return level_of_node(root); }

  // --- link reversal ------------------------------------------------------

  // Moves the root one node toward node 0. The edge below the root flips
  // from Pr(lower | upper) to Pr(upper | lower), preserving the joint.
  void reverse_down() {
    const int e = root - 1;
    const Table& m = edge[e];  // parent = node e+1 (the root)
    const int n_up = static_cast<int>(domain[e + 1].size());
    const int n_lo = static_cast<int>(domain[e].size());
    std::vector<double> marg(n_lo, 0.0);
    Table rev(n_lo, n_up);
    for (int u = 0; u < n_up; ++u) {
      const double pu = root_marginal[u];
      for (int l = 0; l < n_lo; ++l) {
        const double j = pu * m.at(u, l);
        marg[l] += j;
        rev.at(l, u) = j;
      }
    }
    for (int l = 0; l < n_lo; ++l) {
      if (marg[l] > 0.0) {
        for (int u = 0; u < n_up; ++u) rev.at(l, u) /= marg[l];
      } else {
        for (int u = 0; u < n_up; ++u) rev.at(l, u) = 1.0 / n_up;
        rev.flag_unreachable(l);
      }
    }
    normalize(marg);
    edge[e] = std::move(rev);
    root_marginal = std::move(marg);
    root = e;
  }

  // Moves the root one node away from node 0.
  void reverse_up() {
    const int e = root;
    const Table& m = edge[e];  // parent = node e (the root)
    const int n_lo = static_cast<int>(domain[e].size());
    const int n_up = static_cast<int>(domain[e + 1].size());
    std::vector<double> marg(n_up, 0.0);
    Table rev(n_up, n_lo);
    for (int l = 0; l < n_lo; ++l) {
      const double pl = root_marginal[l];
      for (int u = 0; u < n_up; ++u) {
        const double j = pl * m.at(l, u);
        marg[u] += j;
        rev.at(u, l) = j;
      }
    }
    for (int u = 0; u < n_up; ++u) {
      if (marg[u] > 0.0) {
        for (int l = 0; l < n_lo; ++l) rev.at(u, l) /= marg[u];
      } else {
        for (int l = 0; l < n_lo; ++l) rev.at(u, l) = 1.0 / n_lo;
        rev.flag_unreachable(u);
      }
    }
    normalize(marg);
    edge[e] = std::move(rev);
    root_marginal = std::move(marg);
    root = e + 1;
  }

  // Re-roots the chain at `node`; a no-op when already there. Returns the
  // number of single-link reversals performed.
  int set_root_node(int node) {
    int hops = 0;
    while (root > node) {
      reverse_down();
      ++hops;
    }
    while (root < node) {
      reverse_up();
      ++hops;
    }
    return hops;
  }

  int set_root(int level) { return set_root_node(node_of_level(level)); }

  // --- queries -------------------------------------------------------------

  // Exact marginal at a node, by message passing from the root.
  std::vector<double> node_marginal(int node) const {
    std::vector<double> m = root_marginal;
    if (node >= root) {
      for (int e = root; e < node; ++e) m = push(m, edge[e]);
    } else {
      for (int e = root - 1; e >= node; --e) m = push(m, edge[e]);
    }
    return m;
  }

  std::vector<double> level_marginal(int k) const { return node_marginal(node_of_level(k)); }
  std::vector<double> state_marginal() const { return node_marginal(0); }

  // Marginal scattered onto the full per-level policy space.
  std::vector<double> dense_level_marginal(int k, int level_size) const {
    std::vector<double> out(level_size, 0.0);
    const std::vector<double> m = level_marginal(k);
    const auto& dom = domain[node_of_level(k)];
    for (size_t i = 0; i < dom.size(); ++i) out[dom[i]] = m[i];
    return out;
  }

  // Full joint expansion; test support for small chains.
  std::vector<double> expand_joint() const {
    const int n = node_count();
    std::vector<size_t> stride(n, 1);
    size_t total = 1;
    for (int i = n - 1; i >= 0; --i) {
      stride[i] = total;
      total *= domain[i].size();
    }
    std::vector<double> joint(total, 1.0);
    std::vector<int> assign(n, 0);
    for (size_t idx = 0; idx < total; ++idx) {
      size_t rem = idx;
      for (int i = 0; i < n; ++i) {
        assign[i] = static_cast<int>(rem / stride[i]);
        rem %= stride[i];
      }
      double p = root_marginal[assign[root]];
      for (int e = 0; e < n - 1; ++e) {
        if (e >= root)
          p *= edge[e].at(assign[e], assign[e + 1]);
        else
          p *= edge[e].at(assign[e + 1], assign[e]);
      }
      joint[idx] = p;
    }
    return joint;
  }

 private:
  static std::vector<double> push(const std::vector<double>& m, const Table& t) {
    std::vector<double> out(t.cols, 0.0);
    for (int r = 0; r < t.rows; ++r) {
      if (m[r] == 0.0) continue;
      for (int c = 0; c < t.cols; ++c) out[c] += m[r] * t.at(r, c);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Chain construction and the filter-step primitives
// ---------------------------------------------------------------------------

namespace detail {

// sigma rows of the level-(k+1) parents over the level-k domain at state s.
inline Table selection_table(const Hierarchy& h, int k, std::span<const int> parents,
                             std::span<const int> child_domain, int s) {
  Table t(static_cast<int>(parents.size()), static_cast<int>(child_domain.size()));
  for (size_t r = 0; r < parents.size(); ++r) {
    const PolicySpec& spec = h.policy(k + 1, parents[r]);
    const SparseRow* row = spec.applicable_at(s) ? spec.select_row(s) : nullptr;
    if (row == nullptr || row->empty()) {
      for (int c = 0; c < t.cols; ++c) t.at(static_cast<int>(r), c) = 1.0 / t.cols;
      t.flag_unreachable(static_cast<int>(r));
      continue;
    }
    for (const auto& [child, p] : *row) {
      const auto it = std::lower_bound(child_domain.begin(), child_domain.end(), child);
      if (it == child_domain.end() || *it != child)
        throw_hierarchy("selection support of '" + spec.id + "' leaves the local domain at '" +
                        h.states.names[s] + "'");
      t.at(static_cast<int>(r), static_cast<int>(it - child_domain.begin())) = p;
    }
    normalize(t.row(static_cast<int>(r)));
  }
  return t;
}

// transition rows of the level-0 actions over the one-step state domain.
inline Table transition_table(const Hierarchy& h, std::span<const int> actions,
                              std::span<const int> state_domain, int s) {
  Table t(static_cast<int>(actions.size()), static_cast<int>(state_domain.size()));
  for (size_t r = 0; r < actions.size(); ++r) {
    const SparseRow& row = h.actions.row(actions[r], s);
    for (const auto& [s_new, p] : row) {
      const auto it = std::lower_bound(state_domain.begin(), state_domain.end(), s_new);
      if (it == state_domain.end() || *it != s_new)
        throw_hierarchy("transition support of '" + h.actions.names[actions[r]] +
                        "' leaves the neighbour domain at '" + h.states.names[s] + "'");
      t.at(static_cast<int>(r), static_cast<int>(it - state_domain.begin())) = p;
    }
    normalize(t.row(static_cast<int>(r)));
  }
  return t;
}

}  // namespace detail

// Policies-only time-1 chain: top prior at the root, selection links sampled
// at s0. `top_prior` is dense over the full top-level policy set and must be
// supported on policies applicable at s0.
inline BeliefChain init_policy_chain(const Hierarchy& h, std::span<const double> top_prior,
                                     int s0) {
  const int K = h.num_levels();
  if (static_cast<int>(top_prior.size()) != h.num_policies(K))
    throw_usage("top prior size does not match the top-level policy count");

  BeliefChain c;
  c.K = K;
  c.has_state = false;
  c.domain.resize(c.node_count());
  c.start_state.assign(K + 1, s0);
  c.start_time.assign(K + 1, 0);

  const auto& top_dom = h.applicable(K, s0);
  if (top_dom.empty()) throw_usage("no top-level policy applicable at s0");
  double kept = 0.0;
  for (int p : top_dom) kept += top_prior[p];
  for (int p = 0; p < h.num_policies(K); ++p)
    if (top_prior[p] > 0.0 && !h.policy(K, p).applicable_at(s0))
      throw_usage("top prior puts mass on '" + h.policy(K, p).id + "', not applicable at s0");
  if (kept <= 0.0) throw_usage("top prior has no mass on policies applicable at s0");

  c.domain[K] = top_dom;
  c.root = K;
  c.root_marginal.resize(top_dom.size());
  for (size_t i = 0; i < top_dom.size(); ++i) c.root_marginal[i] = top_prior[top_dom[i]] / kept;

  c.edge.resize(K);
  for (int k = K - 1; k >= 0; --k) {
    c.domain[k] = h.applicable(k, s0);
    c.edge[k] = detail::selection_table(h, k, c.domain[k + 1], c.domain[k], s0);
  }
  return c;
}

// Hangs a fresh one-step state node under level 0.
inline void attach_state_node(BeliefChain& c, const Hierarchy& h, int s_now) {
  if (c.has_state) throw_usage("chain already has a state node");
  std::vector<int> sdom = h.states.step_domain(s_now);
  Table trans = detail::transition_table(h, c.domain[0], sdom, s_now);
  c.domain.insert(c.domain.begin(), std::move(sdom));
  c.edge.insert(c.edge.begin(), std::move(trans));
  c.has_state = true;
  ++c.root;
}

// Time-1 chain with the state node attached (the exact filter's C_1).
inline BeliefChain init_chain(const Hierarchy& h, std::span<const double> top_prior, int s0) {
  BeliefChain c = init_policy_chain(h, top_prior, s0);
  attach_state_node(c, h, s0);
  return c;
}

// Instantiates the state node at s_obs: re-roots at the state node, reads
// off the conditional above it and drops the node. The chain becomes a
// policies-only chain rooted at level 0. Returns Pr(s = s_obs) under the
// chain; reversal hop count is accumulated into `touched` when given.
inline double absorb_state(BeliefChain& c, int s_obs, int* touched = nullptr) {
  if (!c.has_state) throw_usage("absorb_state on a chain without a state node");
  const int hops = c.set_root_node(0);
  if (touched != nullptr) *touched += hops;
  const auto& dom = c.domain[0];
  const auto it = std::lower_bound(dom.begin(), dom.end(), s_obs);
  if (it == dom.end() || *it != s_obs)
    throw ZeroEvidence("observed state outside the one-step domain");
  const int idx = static_cast<int>(it - dom.begin());
  const double lik = c.root_marginal[idx];
  if (lik <= 0.0) throw ZeroEvidence("observed state has zero probability");

  std::vector<double> marg(c.edge[0].row(idx).begin(), c.edge[0].row(idx).end());
  normalize(marg);
  c.domain.erase(c.domain.begin());
  c.edge.erase(c.edge.begin());
  c.has_state = false;
  c.root = 0;
  c.root_marginal = std::move(marg);
  return lik;
}

// Folds the termination evidence l_obs into a state-instantiated chain:
// walking k = 1..l_obs+1, reverse the link below level k and multiply in the
// ending-status likelihood at the known state (T below l_obs, F at l_obs+1;
// nothing above carries information). Ends rooted at level l_obs + 1.
// Returns log Pr(l = l_obs | s, past).
inline double absorb_termination(BeliefChain& c, const Hierarchy& h, int s_obs, int l_obs,
                                 int* touched = nullptr) {
  if (c.has_state || c.root != 0)
    throw_usage("absorb_termination expects a state-instantiated chain rooted at level 0");
  if (l_obs < 0 || l_obs >= c.K) throw_usage("termination level out of range");
  double loglik = 0.0;
  for (int k = 1; k <= l_obs + 1; ++k) {
    c.reverse_up();
    if (touched != nullptr) ++*touched;
    const bool obs_terminated = k <= l_obs;
    double z = 0.0;
    for (size_t i = 0; i < c.domain[k].size(); ++i) {
      const double p_term = h.term_prob(k, c.domain[k][i], s_obs);
      c.root_marginal[i] *= obs_terminated ? p_term : 1.0 - p_term;
      z += c.root_marginal[i];
    }
    if (z <= 0.0) throw ZeroEvidence("termination evidence has zero probability");
    for (double& p : c.root_marginal) p /= z;
    loglik += std::log(z);
  }
  return loglik;
}

// Rolls a posterior chain (rooted at l_now + 1) into the next time-slice at
// s_now: levels above l_now persist untouched; levels at or below are
// re-created from the selection tables at s_now. Root stays at l_now + 1.
inline void project_policies(BeliefChain& c, const Hierarchy& h, int s_now, int l_now, int t,
                             int* touched = nullptr) {
  if (c.has_state || c.root != l_now + 1)
    throw_usage("project expects a posterior chain rooted at l+1");
  for (int k = l_now; k >= 0; --k) {
    const auto& dom = h.applicable(k, s_now);
    if (dom.empty())
      throw_hierarchy("no applicable level-" + std::to_string(k) + " policy at '" +
                      h.states.names[s_now] + "'");
    c.domain[k] = dom;
    c.edge[k] = detail::selection_table(h, k, c.domain[k + 1], c.domain[k], s_now);
    c.start_state[k] = s_now;
    c.start_time[k] = t;
    if (touched != nullptr) ++*touched;
  }
}

// Full projection for flat-state chains: rebuild the lower levels and attach
// a fresh state node with the one-step transition at s_now.
inline void project(BeliefChain& c, const Hierarchy& h, int s_now, int l_now, int t,
                    int* touched = nullptr) {
  project_policies(c, h, s_now, l_now, t, touched);
  attach_state_node(c, h, s_now);
}

// ---------------------------------------------------------------------------
// Belief state and the exact filter
// ---------------------------------------------------------------------------

// A chain plus the termination model realised from the hierarchy's beta
// tables (term_prob); nothing else is stored.
struct BeliefState {
  BeliefChain chain;  // C_t, state node attached
  int cur_state = -1; // s_{t-1}
  int t = 1;          // index of the next evidence
};

inline BeliefState init_belief(const Hierarchy& h, std::span<const double> top_prior, int s0) {
  return BeliefState{init_chain(h, top_prior, s0), s0, 1};
}

struct ExactStep {
  BeliefChain posterior;  // B_{t+}: policies conditioned on (s_t, l_t)
  double log_lik = 0.0;   // log Pr(s_t, l_t | past)
  int touched = 0;        // reversals + rebuilt levels this step
};

// One roll of the exact filter: absorb (s_t, l_t), then project. The belief
// state advances to C_{t+1}; the returned chain is the posterior B_{t+}.
inline ExactStep exact_filter_step(BeliefState& bs, const Hierarchy& h, int s_obs, int l_obs) {
  ExactStep out;
  const double lik = absorb_state(bs.chain, s_obs, &out.touched);
  out.log_lik = std::log(lik);
  out.log_lik += absorb_termination(bs.chain, h, s_obs, l_obs, &out.touched);
  out.posterior = bs.chain;
  project(bs.chain, h, s_obs, l_obs, bs.t, &out.touched);
  bs.cur_state = s_obs;
  ++bs.t;
  return out;
}

// Structured text dump for golden-file comparisons.
inline void dump_chain(const BeliefChain& c, const Hierarchy& h, std::ostream& out) {
  auto name = [&](int node, int value) {
    const int k = c.level_of_node(node);
    return k < 0 ? h.states.names[c.domain[node][value]]
                 : h.policy_id(k, c.domain[node][value]);
  };
  out.precision(17);
  out << "chain root_level=" << c.root_level() << " has_state=" << (c.has_state ? 1 : 0) << "\n";
  for (int n = 0; n < c.node_count(); ++n) {
    out << "node " << (c.level_of_node(n) < 0 ? "state" : "level_" + std::to_string(c.level_of_node(n)))
        << " domain=[";
    for (size_t i = 0; i < c.domain[n].size(); ++i)
      out << (i ? " " : "") << name(n, static_cast<int>(i));
    out << "]\n";
    if (n == c.root) {
      out << "  marginal:";
      for (double p : c.root_marginal) out << " " << p;
      out << "\n";
    }
  }
  for (int e = 0; e < c.node_count() - 1; ++e) {
    const bool up = e >= c.root;
    out << "edge " << e << (up ? " up" : " down") << "\n";
    for (int r = 0; r < c.edge[e].rows; ++r) {
      out << " ";
      for (int cc = 0; cc < c.edge[e].cols; ++cc) out << " " << c.edge[e].at(r, cc);
      if (c.edge[e].unreachable(r)) out << "  # unreachable";
      out << "\n";
    }
  }
}

inline std::string dump_chain(const BeliefChain& c, const Hierarchy& h) {
  std::ostringstream ss;
  dump_chain(c, h, ss);
  return ss.str();
}

}  // namespace ahmm
