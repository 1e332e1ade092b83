#pragma once

#include <chrono>
#include <cmath>
#include <span>
#include <vector>

#include "ahmm/hierarchy.hpp"
#include "ahmm/parallel.hpp"
#include "ahmm/particles.hpp"
#include "ahmm/simulate.hpp"

namespace ahmm::sis {

// Plain sequential importance sampler: every layer of the model is sampled.
// Evidence is reversed at the state node only; terminations and policy
// re-selections are forward-sampled from the model tables.
struct Particle {
  double log_weight = 0.0;
  bool dead = false;
  std::vector<int> stack;       // active stack, levels 0..K
  std::vector<int> prev_stack;  // stack before the last re-selection
  int state = -1;
  int level = 0;
};

inline Particle init_particle(const Hierarchy& h, std::span<const double> top_prior, int s0,
                              RngStream& rng) {
  const int K = h.num_levels();
  Particle p;
  p.stack.assign(K + 1, -1);
  p.state = s0;
  p.stack[K] = rng.categorical(top_prior);
  if (!h.policy(K, p.stack[K]).applicable_at(s0))
    throw_usage("top prior puts mass on a policy not applicable at s0");
  for (int k = K - 1; k >= 0; --k) {
    const SparseRow* row = h.policy(k + 1, p.stack[k + 1]).select_row(s0);
    if (row == nullptr || row->empty()) throw_hierarchy("missing selection row at init");
    p.stack[k] = sample_sparse(*row, rng);
  }
  p.prev_stack = p.stack;
  return p;
}

inline void sis_step(Particle& p, const Hierarchy& h, int o, RngStream& rng) {
  if (p.dead) return;
  const int K = h.num_levels();

  // State proposal with the observation folded in: q(s') prop to
  // transition(pi^0, s)(s') * omega(s', o); the weight is the mass of that
  // product.
  const SparseRow& trow = h.actions.row(p.stack[0], p.state);
  SparseRow post;
  double w = 0.0;
  for (const auto& [s_new, pt] : trow) {
    const double q = pt * h.observation.prob(s_new, o);
    if (q > 0.0) post.emplace_back(s_new, q);
    w += q;
  }
  if (w <= 0.0) {
    p.dead = true;
    p.log_weight = kDeadLogWeight;
    return;
  }
  p.log_weight += std::log(w);
  const int s_new = sample_sparse(post, rng);

  p.prev_stack = p.stack;

  // Termination cascade bottom-up with the previous stack, then top-down
  // re-selection of everything that ended.
  int l = 0;
  for (int k = 1; k <= K; ++k) {
    const double p_term = h.term_prob(k, p.stack[k], s_new);
    bool terminated;
    if (p_term <= 0.0)
      terminated = false;
    else if (p_term >= 1.0)
      terminated = true;
    else
      terminated = rng.bernoulli(p_term);
    if (!terminated) break;
    l = k;
  }
  for (int k = l; k >= 0; --k) {
    const SparseRow* row = h.policy(k + 1, p.stack[k + 1]).select_row(s_new);
    if (row == nullptr || row->empty())
      throw_hierarchy("missing selection row at '" + h.states.names[s_new] + "'");
    p.stack[k] = sample_sparse(*row, rng);
  }
  p.state = s_new;
  p.level = l;
}

class Filter {
 public:
  Filter(const Hierarchy& h, std::span<const double> top_prior, int s0, FilterConfig cfg)
      : h_(h), cfg_(std::move(cfg)) {
    if (cfg_.n_particles < 1) throw_usage("particle count must be >= 1");
    if (cfg_.query_levels.empty()) cfg_.query_levels = {h.num_levels()};
    set_.particles.reserve(cfg_.n_particles);
    for (int i = 0; i < cfg_.n_particles; ++i) {
      RngStream rng(cfg_.seed, kSaltParticle, static_cast<uint64_t>(i), 0);
      set_.particles.push_back(init_particle(h, top_prior, s0, rng));
    }
    set_.refresh();
  }

  void observe(int o) {
    ++set_.t;
    parallel_for(static_cast<int>(set_.particles.size()), cfg_.threads, [&](int i) {
      RngStream rng(cfg_.seed, kSaltParticle, static_cast<uint64_t>(i),
                    static_cast<uint64_t>(set_.t));
      sis_step(set_.particles[i], h_, o, rng);
    });
    set_.refresh();
    if (set_.live == 0)
      throw Error(Errc::model_evidence, "model inconsistent with evidence: all particles dead");
    resampled_last_ = false;
    if (cfg_.resample_threshold > 0.0 &&
        set_.ess < cfg_.resample_threshold * static_cast<double>(set_.particles.size())) {
      RngStream rng(cfg_.seed, kSaltResample, static_cast<uint64_t>(set_.t));
      set_.resample(rng);
      resampled_last_ = true;
    }
  }

  std::vector<EstimateRecord> estimates_now() const {
    std::vector<EstimateRecord> out;
    for (int k : cfg_.query_levels) {
      EstimateRecord rec;
      rec.t = set_.t;
      rec.level = k;
      rec.kind = set_.t == 0 ? EstimateKind::next : cfg_.kind;
      rec.ess = set_.ess;
      const bool posterior = rec.kind == EstimateKind::posterior;
      rec.distribution = weighted_estimate(set_, h_.num_policies(k), [&](const Particle& p) {
        std::vector<double> ind(h_.num_policies(k), 0.0);
        ind[posterior ? p.prev_stack[k] : p.stack[k]] = 1.0;
        return ind;
      });
      out.push_back(std::move(rec));
    }
    return out;
  }

  StepDiagnostics diagnostics_now(long long wall_ns) const {
    StepDiagnostics d;
    d.t = set_.t;
    d.ess = set_.ess;
    d.live = set_.live;
    d.dead = static_cast<int>(set_.particles.size()) - set_.live;
    d.resampled = resampled_last_;
    d.wall_ns = wall_ns;
    return d;
  }

  const ParticleSet<Particle>& particles() const { return set_; }
  int t() const { return set_.t; }

 private:
  const Hierarchy& h_;
  FilterConfig cfg_;
  ParticleSet<Particle> set_;
  bool resampled_last_ = false;
};

inline FilterResult filter_run(const Hierarchy& h, std::span<const double> top_prior, int s0,
                               std::span<const int> observations, const FilterConfig& cfg) {
  Filter f(h, top_prior, s0, cfg);
  FilterResult out;
  auto emit = [&](bool final_step) {
    const bool scheduled = cfg.estimate_every > 0 && f.t() % std::max(cfg.estimate_every, 1) == 0;
    if (scheduled || final_step || f.t() == 0) {
      auto recs = f.estimates_now();
      out.estimates.insert(out.estimates.end(), recs.begin(), recs.end());
    }
  };
  emit(observations.empty());
  for (size_t i = 0; i < observations.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    f.observe(observations[i]);
    const auto ns =
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start)
            .count();
    out.diagnostics.push_back(f.diagnostics_now(ns));
    emit(i + 1 == observations.size());
  }
  return out;
}

}  // namespace ahmm::sis
