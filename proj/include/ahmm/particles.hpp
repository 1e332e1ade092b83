#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ahmm/prob.hpp"
#include "ahmm/rng.hpp"

namespace ahmm {

// Stream-salt labels for derived RNG streams. Particle streams are keyed by
// (seed, kSaltParticle, slot, step), so scheduling cannot change results and
// resampling offspring keep distinct streams via their slot.
inline constexpr uint64_t kSaltParticle = 0x70;
inline constexpr uint64_t kSaltResample = 0x7e;

enum class EstimateKind { next, posterior };

inline const char* to_string(EstimateKind k) {
  return k == EstimateKind::next ? "next" : "posterior";
}

struct EstimateRecord {
  int t = 0;
  int level = 0;
  EstimateKind kind = EstimateKind::next;
  std::vector<double> distribution;  // dense over the full level-k policy set
  double ess = 0.0;
};

struct StepDiagnostics {
  int t = 0;
  double ess = 0.0;
  int live = 0;
  int dead = 0;
  bool resampled = false;
  long long wall_ns = 0;
};

struct FilterConfig {
  int n_particles = 1000;
  uint64_t seed = 1;
  std::vector<int> query_levels;          // empty = top level only
  EstimateKind kind = EstimateKind::next;
  int estimate_every = 1;                 // 0 = final step only
  double resample_threshold = 0.5;        // resample when ESS < threshold * N
  int threads = 1;
};

struct FilterResult {
  std::vector<EstimateRecord> estimates;
  std::vector<StepDiagnostics> diagnostics;
};

// Weight bookkeeping shared by every sampler. P needs a `double log_weight`
// and a `bool dead` member and must be copyable (resampling clones).
template <class P>
struct ParticleSet {
  std::vector<P> particles;
  std::vector<double> norm_weights;
  int t = 0;
  int live = 0;
  double ess = 0.0;

  void refresh() {
    norm_weights.resize(particles.size());
    std::vector<double> logs(particles.size());
    for (size_t i = 0; i < particles.size(); ++i)
      logs[i] = particles[i].dead ? kDeadLogWeight : particles[i].log_weight;
    live = normalized_weights(logs, norm_weights);
    ess = live == 0 ? 0.0 : effective_sample_size(norm_weights);
  }

  // Systematic resampling over the current normalised weights; weights reset
  // to uniform. Caller decides the trigger.
  void resample(RngStream& rng) {
    const std::vector<int> picks = systematic_resample(norm_weights, rng);
    std::vector<P> next;
    next.reserve(particles.size());
    for (int p : picks) next.push_back(particles[p]);
    particles = std::move(next);
    for (P& p : particles) {
      p.log_weight = 0.0;
      p.dead = false;
    }
    refresh();
  }
};

// Weighted mixture of per-particle distributions, anchored at the first live
// particle so that identical particles reproduce their shared distribution
// bit-for-bit: est = h0 + sum_i w_i (h_i - h0).
template <class P, class MarginalFn>
std::vector<double> weighted_estimate(const ParticleSet<P>& ps, int size, MarginalFn&& marginal) {
  int anchor = -1;
  for (size_t i = 0; i < ps.particles.size(); ++i) {
    if (!ps.particles[i].dead) {
      anchor = static_cast<int>(i);
      break;
    }
  }
  if (anchor < 0) throw Error(Errc::model_evidence, "no live particles to estimate from");
  const std::vector<double> h0 = marginal(ps.particles[anchor]);
  std::vector<double> est = h0;
  est.resize(size, 0.0);
  for (size_t i = 0; i < ps.particles.size(); ++i) {
    if (ps.particles[i].dead || ps.norm_weights[i] == 0.0) continue;
    if (static_cast<int>(i) == anchor) continue;  // its term is exactly zero
    const std::vector<double> hi = marginal(ps.particles[i]);
    for (int j = 0; j < size; ++j) est[j] += ps.norm_weights[i] * (hi[j] - h0[j]);
  }
  return est;
}

}  // namespace ahmm
