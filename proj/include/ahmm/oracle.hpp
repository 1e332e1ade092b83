#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "ahmm/hierarchy.hpp"

// Exhaustive-enumeration reference machinery. Everything here works on the
// raw hierarchy tables with plain summation over the full product space of
// (policy stack, state); none of the belief-chain code is involved, so these
// results can stand as an independent check of it.

namespace ahmm::oracle {

// Filtering over the full joint Pr(stack, state | evidence). The stack kept
// is the one that will produce the next transition; posterior_marginal below
// exposes the pre-reselection stack as well. The top level never terminates.
class JointFilter {
 public:
  JointFilter(const Hierarchy& h, std::span<const double> top_prior, int s0)
      : h_(h), n_states_(h.states.size()) {
    const int K = h_.num_levels();
    dims_.resize(K + 1);
    for (int k = 0; k <= K; ++k) dims_[k] = h_.num_policies(k);
    stack_space_ = 1;
    for (int d : dims_) stack_space_ *= d;

    belief_.assign(stack_space_ * n_states_, 0.0);
    mid_.assign(belief_.size(), 0.0);

    // Initial stacks sampled top-down at s0.
    std::vector<int> stack(K + 1, -1);
    std::function<void(int, double)> expand = [&](int k, double p) {
      if (k < 0) {
        belief_[index(stack, s0)] += p;
        return;
      }
      const SparseRow* row = h_.policy(k + 1, stack[k + 1]).select_row(s0);
      if (row == nullptr) throw_hierarchy("oracle: missing selection row during init");
      for (const auto& [c, pc] : *row) {
        stack[k] = c;
        expand(k - 1, p * pc);
      }
    };
    for (int top = 0; top < dims_[K]; ++top) {
      if (top_prior[top] <= 0.0) continue;
      stack[K] = top;
      expand(K - 1, top_prior[top]);
    }
  }

  // Rolls the belief one step and conditions on whichever of (state,
  // termination level, observation symbol) are given (-1 = unobserved).
  // Returns the log-likelihood of the new evidence.
  double step(int s_obs, int l_obs, int o_obs) {
    const int K = h_.num_levels();
    std::vector<double> next(belief_.size(), 0.0);
    std::fill(mid_.begin(), mid_.end(), 0.0);

    std::vector<int> stack(K + 1);
    std::vector<int> new_stack(K + 1);
    std::function<void(int, int, double)> scatter = [&](int k, int s_new, double w) {
      if (k < 0) {
        next[index(new_stack, s_new)] += w;
        return;
      }
      const SparseRow* row = h_.policy(k + 1, new_stack[k + 1]).select_row(s_new);
      if (row == nullptr) throw_hierarchy("oracle: missing selection row");
      for (const auto& [c, pc] : *row) {
        new_stack[k] = c;
        scatter(k - 1, s_new, w * pc);
      }
    };

    for (size_t idx = 0; idx < belief_.size(); ++idx) {
      const double p = belief_[idx];
      if (p <= 0.0) continue;
      decode(idx, stack);
      const int s = static_cast<int>(idx % n_states_);
      for (const auto& [s_new, ps] : h_.actions.row(stack[0], s)) {
        double w = p * ps;
        if (s_obs >= 0 && s_new != s_obs) continue;
        if (o_obs >= 0) w *= h_.observation.prob(s_new, o_obs);
        if (w <= 0.0) continue;
        // Termination cascade: P(l = j) peels off level by level.
        double alive = 1.0;
        for (int j = 0; j <= K && alive > 0.0; ++j) {
          const double pT = j < K ? h_.term_prob(j + 1, stack[j + 1], s_new) : 0.0;
          const double pl = alive * (1.0 - pT);
          if (pl > 0.0 && (l_obs < 0 || l_obs == j)) {
            const double wl = w * pl;
            mid_[index(stack, s_new)] += wl;
            new_stack = stack;
            scatter(j, s_new, wl);
          }
          alive *= pT;
        }
      }
    }

    double z = 0.0;
    for (double v : next) z += v;
    if (z <= 0.0) throw ZeroEvidence("oracle: evidence has probability zero");
    for (double& v : next) v /= z;
    for (double& v : mid_) v /= z;
    belief_ = std::move(next);
    return std::log(z);
  }

  // Pr(pi_{t+1}^k | evidence through t): marginal of the active stack.
  std::vector<double> marginal(int k) const { return stack_marginal(belief_, k); }

  // Pr(pi_t^k | evidence through t): marginal before re-selection.
  std::vector<double> posterior_marginal(int k) const { return stack_marginal(mid_, k); }

  // Pr(s_{t+1} | evidence through t): one predictive transition, no evidence.
  std::vector<double> state_marginal() const {
    const int K = h_.num_levels();
    std::vector<double> out(n_states_, 0.0);
    std::vector<int> stack(K + 1);
    for (size_t idx = 0; idx < belief_.size(); ++idx) {
      const double p = belief_[idx];
      if (p <= 0.0) continue;
      decode(idx, stack);
      const int s = static_cast<int>(idx % n_states_);
      for (const auto& [s_new, ps] : h_.actions.row(stack[0], s)) out[s_new] += p * ps;
    }
    return out;
  }

  const std::vector<double>& joint() const { return belief_; }
  size_t joint_size() const { return belief_.size(); }

 private:
  size_t index(const std::vector<int>& stack, int s) const {
    size_t idx = 0;
    for (int k = h_.num_levels(); k >= 0; --k) idx = idx * dims_[k] + stack[k];
    return idx * n_states_ + s;
  }

  void decode(size_t idx, std::vector<int>& stack) const {
    idx /= n_states_;
    for (int k = 0; k <= h_.num_levels(); ++k) {
      stack[k] = static_cast<int>(idx % dims_[k]);
      idx /= dims_[k];
    }
  }

  std::vector<double> stack_marginal(const std::vector<double>& joint, int k) const {
    std::vector<double> out(dims_[k], 0.0);
    size_t stride = n_states_;
    for (int j = 0; j < k; ++j) stride *= dims_[j];
    const size_t block = stride * dims_[k];
    for (size_t idx = 0; idx < joint.size(); ++idx) {
      if (joint[idx] == 0.0) continue;
      out[(idx % block) / stride] += joint[idx];
    }
    return out;
  }

  const Hierarchy& h_;
  std::vector<int> dims_;  // policies per level, level 0 first
  size_t stack_space_ = 0;
  int n_states_ = 0;
  std::vector<double> belief_;
  std::vector<double> mid_;
};

// ---------------------------------------------------------------------------
// Full history enumeration (for the conditional-independence witness and
// history-count bookkeeping). Walks every positive-probability execution of
// the non-terminating-top process up to the horizon and reports the final
// time-slice with its starting-time/state bookkeeping.
// ---------------------------------------------------------------------------

struct HistorySlice {
  double prob = 0.0;
  int state = -1;                 // s_T
  std::vector<int> stack;         // pi_T^k, levels 0..K
  std::vector<int> start_time;    // tau_T^k
  std::vector<int> start_state;   // b_T^k
};

inline void enumerate_histories(const Hierarchy& h, std::span<const double> top_prior, int s0,
                                int horizon,
                                const std::function<void(const HistorySlice&)>& emit) {
  const int K = h.num_levels();
  if (horizon < 1) throw_usage("history enumeration needs horizon >= 1");
  HistorySlice cur;
  cur.stack.assign(K + 1, -1);
  cur.start_time.assign(K + 1, 0);
  cur.start_state.assign(K + 1, s0);

  // The slice for time t pairs the stack that produced s_t with s_t itself,
  // so emission happens on arrival, before the cascade and re-selection.
  std::function<void(int, int, double)> advance;

  std::function<void(int, int, int, double)> reselect = [&](int k, int t_arr, int s_new, double p) {
    if (k < 0) {
      advance(t_arr, s_new, p);
      return;
    }
    const SparseRow* row = h.policy(k + 1, cur.stack[k + 1]).select_row(s_new);
    const int saved_pol = cur.stack[k];
    const int saved_t = cur.start_time[k];
    const int saved_b = cur.start_state[k];
    for (const auto& [c, pc] : *row) {
      cur.stack[k] = c;
      cur.start_time[k] = t_arr;
      cur.start_state[k] = s_new;
      reselect(k - 1, t_arr, s_new, p * pc);
    }
    cur.stack[k] = saved_pol;
    cur.start_time[k] = saved_t;
    cur.start_state[k] = saved_b;
  };

  // advance(t, s, p): stack is active at time t+1, s = s_t.
  advance = [&](int t, int s, double p) {
    for (const auto& [s_new, ps] : h.actions.row(cur.stack[0], s)) {
      if (t + 1 == horizon) {
        HistorySlice out = cur;
        out.prob = p * ps;
        out.state = s_new;
        emit(out);
        continue;
      }
      double alive = 1.0;
      for (int j = 0; j <= K && alive > 0.0; ++j) {
        const double pT = j < K ? h.term_prob(j + 1, cur.stack[j + 1], s_new) : 0.0;
        const double pl = alive * (1.0 - pT);
        if (pl > 0.0) reselect(j, t + 1, s_new, p * ps * pl);
        alive *= pT;
      }
    }
  };

  std::function<void(int, double)> init = [&](int k, double p) {
    if (k < 0) {
      advance(0, s0, p);
      return;
    }
    const SparseRow* row = h.policy(k + 1, cur.stack[k + 1]).select_row(s0);
    for (const auto& [c, pc] : *row) {
      cur.stack[k] = c;
      init(k - 1, p * pc);
    }
  };
  for (int top = 0; top < h.num_policies(K); ++top) {
    if (top_prior[top] <= 0.0) continue;
    cur.stack[K] = top;
    init(K - 1, top_prior[top]);
  }
}

// The theorem-style independence check: conditioned on (pi^k, b^k, tau^k),
// the levels above k must be independent of the state plus levels below.
// Returns the largest deviation |P(u,v) - P(u)P(v)| over all conditioning
// values at the given level.
inline double independence_deviation(const Hierarchy& h, std::span<const double> top_prior,
                                     int s0, int horizon, int level) {
  const int K = h.num_levels();
  struct Cell {
    std::map<std::pair<long long, long long>, double> joint;
    std::map<long long, double> upper, lower;
    double total = 0.0;
  };
  std::map<std::array<long long, 3>, Cell> cells;

  enumerate_histories(h, top_prior, s0, horizon, [&](const HistorySlice& hs) {
    long long upper = 0, lower = 0;
    for (int k = K; k > level; --k) upper = upper * h.num_policies(k) + hs.stack[k];
    for (int k = level - 1; k >= 0; --k) lower = lower * h.num_policies(k) + hs.stack[k];
    lower = lower * h.states.size() + hs.state;
    const std::array<long long, 3> key = {hs.stack[level],
                                          static_cast<long long>(hs.start_time[level]),
                                          static_cast<long long>(hs.start_state[level])};
    Cell& cell = cells[key];
    cell.joint[{upper, lower}] += hs.prob;
    cell.upper[upper] += hs.prob;
    cell.lower[lower] += hs.prob;
    cell.total += hs.prob;
  });

  double worst = 0.0;
  for (const auto& [key, cell] : cells) {
    if (cell.total <= 0.0) continue;
    for (const auto& [u, pu] : cell.upper) {
      for (const auto& [v, pv] : cell.lower) {
        auto it = cell.joint.find({u, v});
        const double puv = it == cell.joint.end() ? 0.0 : it->second;
        worst = std::max(worst, std::abs(puv / cell.total -
                                         (pu / cell.total) * (pv / cell.total)));
      }
    }
  }
  return worst;
}

inline size_t count_histories(const Hierarchy& h, std::span<const double> top_prior, int s0,
                              int horizon, double* total_prob = nullptr) {
  size_t n = 0;
  double mass = 0.0;
  enumerate_histories(h, top_prior, s0, horizon, [&](const HistorySlice& hs) {
    ++n;
    mass += hs.prob;
  });
  if (total_prob != nullptr) *total_prob = mass;
  return n;
}

}  // namespace ahmm::oracle
