#pragma once

#include <chrono>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ahmm/chain.hpp"
#include "ahmm/parallel.hpp"
#include "ahmm/particles.hpp"

namespace ahmm::factored {

// Fully-factored state: M components evolving independently per action and
// observed independently. Selection and termination tables stay keyed by the
// joint state (encoded with component 0 as the most significant digit); a
// flat joint view is materialised once at build time for them and for the
// flatten-equivalence checks, but the per-step evidence reversal and
// sampling only ever touch the per-component tables.
struct ComponentSpace {
  std::string name;
  std::vector<std::string> values;
};

struct Model {
  std::vector<ComponentSpace> components;
  std::vector<std::vector<std::string>> obs_symbols;              // [m]
  std::vector<std::vector<std::vector<SparseRow>>> transition;    // [a][m][value]
  std::vector<std::vector<SparseRow>> obs;                        // [m][value] over symbols
  Hierarchy flat;  // joint states; product transitions/observations

  int M() const { return static_cast<int>(components.size()); }
  int comp_size(int m) const { return static_cast<int>(components[m].values.size()); }
  int obs_size(int m) const { return static_cast<int>(obs_symbols[m].size()); }

  int joint_size() const {
    int n = 1;
    for (int m = 0; m < M(); ++m) n *= comp_size(m);
    return n;
  }

  int encode_state(std::span<const int> tuple) const {
    int id = 0;
    for (int m = 0; m < M(); ++m) id = id * comp_size(m) + tuple[m];
    return id;
  }
  void decode_state(int id, std::vector<int>& tuple) const {
    tuple.resize(M());
    for (int m = M() - 1; m >= 0; --m) {
      tuple[m] = id % comp_size(m);
      id /= comp_size(m);
    }
  }
  int encode_obs(std::span<const int> tuple) const {
    int id = 0;
    for (int m = 0; m < M(); ++m) id = id * obs_size(m) + tuple[m];
    return id;
  }
  void decode_obs(int id, std::vector<int>& tuple) const {
    tuple.resize(M());
    for (int m = M() - 1; m >= 0; --m) {
      tuple[m] = id % obs_size(m);
      id /= obs_size(m);
    }
  }
};

namespace detail {

// Product rows are accumulated in lexicographic order with left-to-right
// multiplication so that the flattened model reproduces the factored
// arithmetic bit-for-bit wherever a single product is involved.
inline void product_rows(const std::vector<const SparseRow*>& rows,
                         std::function<void(std::span<const int>, double)> emit) {
  const int m_count = static_cast<int>(rows.size());
  std::vector<int> tuple(m_count, 0);
  std::function<void(int, double)> rec = [&](int m, double p) {
    if (m == m_count) {
      emit(tuple, p);
      return;
    }
    for (const auto& [v, pv] : *rows[m]) {
      tuple[m] = v;
      rec(m + 1, p * pv);
    }
  };
  rec(0, 1.0);
}

}  // namespace detail

// Assembles the flat joint view (states, product transitions, product
// observations) around already-built policy levels over joint ids.
inline Model make_model(std::vector<ComponentSpace> components,
                        std::vector<std::string> action_names,
                        std::vector<std::vector<std::vector<SparseRow>>> transition,
                        std::vector<std::vector<std::string>> obs_symbols,
                        std::vector<std::vector<SparseRow>> obs,
                        std::vector<std::vector<PolicySpec>> levels,
                        SparseRow initial = {}) {
  Model fm;
  fm.components = std::move(components);
  fm.obs_symbols = std::move(obs_symbols);
  fm.transition = std::move(transition);
  fm.obs = std::move(obs);

  const int M = fm.M();
  const int n = fm.joint_size();
  std::vector<int> tuple;
  Hierarchy& h = fm.flat;
  for (int s = 0; s < n; ++s) {
    fm.decode_state(s, tuple);
    std::string name;
    for (int m = 0; m < M; ++m) {
      if (m) name += "|";
      name += fm.components[m].values[tuple[m]];
    }
    h.states.names.push_back(name);
    h.states.index[name] = s;
  }

  h.actions.names = std::move(action_names);
  for (int a = 0; a < static_cast<int>(h.actions.names.size()); ++a)
    h.actions.index[h.actions.names[a]] = a;
  h.actions.transition.assign(h.actions.size(), std::vector<SparseRow>(n));
  std::vector<const SparseRow*> rows(M);
  for (int a = 0; a < h.actions.size(); ++a) {
    for (int s = 0; s < n; ++s) {
      fm.decode_state(s, tuple);
      bool blocked = false;
      for (int m = 0; m < M; ++m) {
        rows[m] = &fm.transition[a][m][tuple[m]];
        if (rows[m]->empty()) blocked = true;
      }
      if (blocked) continue;
      SparseRow out;
      detail::product_rows(rows, [&](std::span<const int> next, double p) {
        out.emplace_back(fm.encode_state(next), p);
      });
      std::sort(out.begin(), out.end());
      h.actions.transition[a][s] = std::move(out);
    }
  }

  h.states.neighbours.assign(n, {});
  for (int a = 0; a < h.actions.size(); ++a)
    for (int s = 0; s < n; ++s)
      for (const auto& [t, p] : h.actions.transition[a][s])
        if (t != s) h.states.neighbours[s].push_back(t);
  for (int s = 0; s < n; ++s) {
    auto& nb = h.states.neighbours[s];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }

  // Joint observation symbols in the same mixed-radix order.
  int n_obs = 1;
  for (int m = 0; m < M; ++m) n_obs *= fm.obs_size(m);
  for (int o = 0; o < n_obs; ++o) {
    fm.decode_obs(o, tuple);
    std::string name;
    for (int m = 0; m < M; ++m) {
      if (m) name += "|";
      name += fm.obs_symbols[m][tuple[m]];
    }
    h.observation.symbols.push_back(name);
    h.observation.index[name] = o;
  }
  h.observation.likelihood.assign(n, {});
  for (int s = 0; s < n; ++s) {
    fm.decode_state(s, tuple);
    for (int m = 0; m < M; ++m) rows[m] = &fm.obs[m][tuple[m]];
    SparseRow out;
    detail::product_rows(rows, [&](std::span<const int> sym, double p) {
      out.emplace_back(fm.encode_obs(sym), p);
    });
    std::sort(out.begin(), out.end());
    h.observation.likelihood[s] = std::move(out);
  }

  h.levels = std::move(levels);
  h.initial = std::move(initial);
  h.finalize();
  return fm;
}

// The joint view as a 1-component factored model: same flat hierarchy, the
// single component's tables are the product tables. Running it through the
// factored machinery is the reference side of the flatten-equivalence check.
inline Model flatten(const Model& fm) {
  ComponentSpace joint;
  joint.name = "joint";
  joint.values = fm.flat.states.names;

  const int n = fm.joint_size();
  std::vector<std::vector<std::vector<SparseRow>>> transition(
      fm.flat.actions.size(), std::vector<std::vector<SparseRow>>(1, std::vector<SparseRow>(n)));
  for (int a = 0; a < fm.flat.actions.size(); ++a)
    for (int s = 0; s < n; ++s) transition[a][0][s] = fm.flat.actions.transition[a][s];

  std::vector<std::vector<SparseRow>> obs(1, std::vector<SparseRow>(n));
  for (int s = 0; s < n; ++s) obs[0][s] = fm.flat.observation.likelihood[s];

  return make_model({joint}, fm.flat.actions.names, std::move(transition),
                    {fm.flat.observation.symbols}, std::move(obs), fm.flat.levels,
                    fm.flat.initial);
}

// ---------------------------------------------------------------------------
// Factored belief state and the RB particle built on it
// ---------------------------------------------------------------------------

struct Belief {
  BeliefChain chain;           // policies only, rooted at l_prev + 1
  std::vector<Table> comp;     // per component: rows = level-0 domain, cols = values
  std::vector<int> cur_tuple;  // s_{t-1}
  int t = 1;
};

inline void rebuild_components(Belief& b, const Model& fm) {
  const auto& actions = b.chain.domain[0];
  b.comp.assign(fm.M(), Table());
  for (int m = 0; m < fm.M(); ++m) {
    Table t(static_cast<int>(actions.size()), fm.comp_size(m));
    for (size_t r = 0; r < actions.size(); ++r) {
      const SparseRow& row = fm.transition[actions[r]][m][b.cur_tuple[m]];
      for (const auto& [v, p] : row) t.at(static_cast<int>(r), v) = p;
    }
    b.comp[m] = std::move(t);
  }
}

inline Belief init_belief(const Model& fm, std::span<const double> top_prior, int s0_joint) {
  Belief b;
  b.chain = init_policy_chain(fm.flat, top_prior, s0_joint);
  b.chain.set_root(0);
  fm.decode_state(s0_joint, b.cur_tuple);
  rebuild_components(b, fm);
  return b;
}

// Evidence reversal with the root held at the action node: the per-action
// observation likelihood is a product of per-component sums, never a joint
// enumeration. Saves the pre-reversal action marginal for the later
// conditioning on the sampled state. Returns w_t (0 = dead).
inline double evidence_reversal(Belief& b, const Model& fm, std::span<const int> obs_tuple,
                                std::vector<double>& prior_actions) {
  b.chain.set_root(0);
  prior_actions = b.chain.root_marginal;
  const int n_act = static_cast<int>(b.chain.domain[0].size());
  std::vector<double> post(n_act);
  double w = 0.0;
  for (int a = 0; a < n_act; ++a) {
    double like = 1.0;
    for (int m = 0; m < fm.M(); ++m) {
      double sm = 0.0;
      const Table& t = b.comp[m];
      for (int v = 0; v < t.cols; ++v) {
        const double pv = t.at(a, v);
        if (pv > 0.0) sm += pv * sparse_lookup(fm.obs[m][v], obs_tuple[m]);
      }
      like *= sm;
    }
    post[a] = prior_actions[a] * like;
    w += post[a];
  }
  if (w <= 0.0) return 0.0;
  for (double& p : post) p /= w;
  b.chain.root_marginal = std::move(post);
  return w;
}

// Single-uniform inverse-CDF pick over an unnormalised row; rescales the
// uniform within the chosen bin so one draw drives a whole tuple. The
// flattened joint pick in lexicographic order is the same map.
inline int stick_pick(std::span<const double> w, double& u) {
  double total = 0.0;
  for (double x : w) total += x;
  double pos = u * total;
  double acc = 0.0;
  int last = 0;
  for (size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    last = static_cast<int>(i);
    if (pos < acc + w[i]) {
      u = (pos - acc) / w[i];
      return last;
    }
    acc += w[i];
  }
  u = 0.5;
  return last;
}

struct Sample {
  int action_local = 0;
  std::vector<int> tuple;
  int joint = 0;
  int level = 0;
};

// Action first, then each component from its reversed table, then the
// termination cascade upward exactly as in the flat sampler.
inline Sample sample(const Belief& b, const Model& fm, std::span<const int> obs_tuple,
                     RngStream& rng) {
  Sample out;
  out.action_local = rng.categorical(std::span<const double>(b.chain.root_marginal));

  double u = rng.uniform();
  out.tuple.resize(fm.M());
  std::vector<double> row;
  for (int m = 0; m < fm.M(); ++m) {
    const Table& t = b.comp[m];
    row.assign(t.cols, 0.0);
    for (int v = 0; v < t.cols; ++v) {
      const double pv = t.at(out.action_local, v);
      if (pv > 0.0) row[v] = pv * sparse_lookup(fm.obs[m][v], obs_tuple[m]);
    }
    out.tuple[m] = stick_pick(row, u);
  }
  out.joint = fm.encode_state(out.tuple);

  int idx = out.action_local;
  int l = 0;
  for (int k = 1; k <= b.chain.K; ++k) {
    idx = rng.categorical(b.chain.edge[k - 1].row(idx));
    const double p_term = fm.flat.term_prob(k, b.chain.domain[k][idx], out.joint);
    bool terminated;
    if (p_term <= 0.0)
      terminated = false;
    else if (p_term >= 1.0)
      terminated = true;
    else
      terminated = rng.bernoulli(p_term);
    if (!terminated) {
      l = k - 1;
      break;
    }
    l = k;
  }
  out.level = l;
  return out;
}

struct Particle {
  double log_weight = 0.0;
  bool dead = false;
  int state = -1;
  int level = 0;
  Belief belief;
};

inline void particle_step(Particle& p, const Model& fm, std::span<const int> obs_tuple,
                          RngStream& rng) {
  if (p.dead) return;
  std::vector<double> prior_actions;
  const double w = evidence_reversal(p.belief, fm, obs_tuple, prior_actions);
  if (w <= 0.0) {
    p.dead = true;
    p.log_weight = kDeadLogWeight;
    return;
  }
  p.log_weight += std::log(w);
  const Sample smp = sample(p.belief, fm, obs_tuple, rng);

  // Condition the chain on the sampled state: the observation is screened
  // off once the state is known, so the pre-reversal marginal is the prior.
  BeliefChain& c = p.belief.chain;
  double z = 0.0;
  for (size_t a = 0; a < c.domain[0].size(); ++a) {
    double like = prior_actions[a];
    for (int m = 0; m < fm.M(); ++m) like *= p.belief.comp[m].at(static_cast<int>(a), smp.tuple[m]);
    c.root_marginal[a] = like;
    z += like;
  }
  if (z <= 0.0) {
    p.dead = true;
    p.log_weight = kDeadLogWeight;
    return;
  }
  for (double& x : c.root_marginal) x /= z;

  absorb_termination(c, fm.flat, smp.joint, smp.level);
  project_policies(c, fm.flat, smp.joint, smp.level, p.belief.t);
  c.set_root(0);
  p.belief.cur_tuple = smp.tuple;
  rebuild_components(p.belief, fm);
  ++p.belief.t;
  p.state = smp.joint;
  p.level = smp.level;
}

class Filter {
 public:
  Filter(const Model& fm, std::span<const double> top_prior, int s0_joint, FilterConfig cfg)
      : fm_(fm), cfg_(std::move(cfg)) {
    if (cfg_.n_particles < 1) throw_usage("particle count must be >= 1");
    if (cfg_.query_levels.empty()) cfg_.query_levels = {fm.flat.num_levels()};
    Particle proto;
    proto.belief = init_belief(fm, top_prior, s0_joint);
    proto.state = s0_joint;
    set_.particles.assign(cfg_.n_particles, proto);
    set_.refresh();
  }

  void observe(std::span<const int> obs_tuple) {
    ++set_.t;
    parallel_for(static_cast<int>(set_.particles.size()), cfg_.threads, [&](int i) {
      RngStream rng(cfg_.seed, kSaltParticle, static_cast<uint64_t>(i),
                    static_cast<uint64_t>(set_.t));
      particle_step(set_.particles[i], fm_, obs_tuple, rng);
    });
    set_.refresh();
    if (set_.live == 0)
      throw Error(Errc::model_evidence, "model inconsistent with evidence: all particles dead");
    if (cfg_.resample_threshold > 0.0 &&
        set_.ess < cfg_.resample_threshold * static_cast<double>(set_.particles.size())) {
      RngStream rng(cfg_.seed, kSaltResample, static_cast<uint64_t>(set_.t));
      set_.resample(rng);
    }
  }

  std::vector<EstimateRecord> estimates_now() const {
    std::vector<EstimateRecord> out;
    for (int k : cfg_.query_levels) {
      EstimateRecord rec;
      rec.t = set_.t;
      rec.level = k;
      rec.kind = EstimateKind::next;
      rec.ess = set_.ess;
      rec.distribution = weighted_estimate(set_, fm_.flat.num_policies(k), [&](const Particle& p) {
        return p.belief.chain.dense_level_marginal(k, fm_.flat.num_policies(k));
      });
      out.push_back(std::move(rec));
    }
    return out;
  }

  const ParticleSet<Particle>& particles() const { return set_; }
  int t() const { return set_.t; }

 private:
  const Model& fm_;
  FilterConfig cfg_;
  ParticleSet<Particle> set_;
};

}  // namespace ahmm::factored
