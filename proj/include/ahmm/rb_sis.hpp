#pragma once

#include <chrono>
#include <cmath>
#include <span>
#include <vector>

#include "ahmm/chain.hpp"
#include "ahmm/parallel.hpp"
#include "ahmm/particles.hpp"
#include "ahmm/simulate.hpp"

namespace ahmm::rb {

// Rao-Blackwellised particle: the sampled pair (s_t, l_t) plus a private
// exact belief state carried alongside it.
struct Particle {
  double log_weight = 0.0;
  bool dead = false;
  int state = -1;
  int level = 0;
  BeliefState belief;
  // B_{t+} marginals captured during the step, one entry per query level,
  // only when the filter asks for posterior-kind estimates.
  std::vector<std::vector<double>> captured;
};

// Reverses the observation link: re-roots the chain at the state node and
// replaces the state marginal by its posterior given o. Returns the
// incremental weight Pr(o | past); 0 signals a dead particle, in which case
// the marginal is left untouched.
inline double evidence_reversal(BeliefChain& chain, const ObservationModel& om, int o) {
  chain.set_root_node(0);
  const auto& dom = chain.domain[0];
  std::vector<double> post(dom.size());
  double w = 0.0;
  for (size_t i = 0; i < dom.size(); ++i) {
    post[i] = chain.root_marginal[i] * om.prob(dom[i], o);
    w += post[i];
  }
  if (w <= 0.0) return 0.0;
  for (double& p : post) p /= w;
  chain.root_marginal = std::move(post);
  return w;
}

// Forward-samples the pair (s_t, l_t) from an evidence-reversed chain:
// state from the root marginal, then policies upward, stopping the cascade
// at the first level that keeps running. Policy samples along the way are
// discarded. Deterministic outcomes consume no randomness.
inline std::pair<int, int> sample_rb(const BeliefChain& chain, const Hierarchy& h,
                                     RngStream& rng) {
  const int s_idx = rng.categorical(std::span<const double>(chain.root_marginal));
  const int s = chain.domain[0][s_idx];
  int idx = s_idx;
  int l = 0;
  for (int k = 0; k <= chain.K; ++k) {
    idx = rng.categorical(chain.edge[k].row(idx));
    if (k == 0) continue;  // actions always terminate; e^0 carries nothing
    const double p_term = h.term_prob(k, chain.domain[k + 1][idx], s);
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
  return {s, l};
}

// One particle update: evidence reversal for the weight, sample (s, l),
// then the exact chain roll conditioned on the sample.
inline void particle_step(Particle& p, const Hierarchy& h, int o, RngStream& rng,
                          std::span<const int> capture_levels) {
  if (p.dead) return;
  const double w = evidence_reversal(p.belief.chain, h.observation, o);
  if (w <= 0.0) {
    p.dead = true;
    p.log_weight = kDeadLogWeight;
    return;
  }
  p.log_weight += std::log(w);
  const auto [s, l] = sample_rb(p.belief.chain, h, rng);
  absorb_state(p.belief.chain, s);
  absorb_termination(p.belief.chain, h, s, l);
  if (!capture_levels.empty()) {
    p.captured.clear();
    for (int k : capture_levels)
      p.captured.push_back(p.belief.chain.dense_level_marginal(k, h.num_policies(k)));
  }
  project(p.belief.chain, h, s, l, p.belief.t);
  p.belief.cur_state = s;
  ++p.belief.t;
  p.state = s;
  p.level = l;
}

class Filter {
 public:
  Filter(const Hierarchy& h, std::span<const double> top_prior, int s0, FilterConfig cfg)
      : h_(h), cfg_(std::move(cfg)) {
    if (cfg_.n_particles < 1) throw_usage("particle count must be >= 1");
    if (cfg_.query_levels.empty()) cfg_.query_levels = {h.num_levels()};
    Particle proto;
    proto.belief = init_belief(h, top_prior, s0);
    proto.state = s0;
    set_.particles.assign(cfg_.n_particles, proto);
    set_.refresh();
  }

  // Processes one observation; estimates are appended by the caller via
  // estimates_now so the record schedule stays in one place.
  void observe(int o) {
    ++set_.t;
    const bool capture = cfg_.kind == EstimateKind::posterior;
    const std::span<const int> levels =
        capture ? std::span<const int>(cfg_.query_levels) : std::span<const int>();
    parallel_for(static_cast<int>(set_.particles.size()), cfg_.threads, [&](int i) {
      RngStream rng(cfg_.seed, kSaltParticle, static_cast<uint64_t>(i),
                    static_cast<uint64_t>(set_.t));
      particle_step(set_.particles[i], h_, o, rng, levels);
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
    for (size_t qi = 0; qi < cfg_.query_levels.size(); ++qi) {
      const int k = cfg_.query_levels[qi];
      EstimateRecord rec;
      rec.t = set_.t;
      rec.level = k;
      rec.kind = set_.t == 0 ? EstimateKind::next : cfg_.kind;
      rec.ess = set_.ess;
      if (rec.kind == EstimateKind::posterior) {
        rec.distribution = weighted_estimate(set_, h_.num_policies(k),
                                             [&](const Particle& p) { return p.captured[qi]; });
      } else {
        rec.distribution = weighted_estimate(set_, h_.num_policies(k), [&](const Particle& p) {
          return p.belief.chain.dense_level_marginal(k, h_.num_policies(k));
        });
      }
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

// Runs the filter over a whole observation stream. Estimates are emitted at
// t = 0 (prior), every `estimate_every` steps, and at the final step.
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

}  // namespace ahmm::rb
