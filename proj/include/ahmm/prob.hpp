#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "ahmm/error.hpp"
#include "ahmm/rng.hpp"

namespace ahmm {

// Normalisation checks distinguish float dust from authoring errors:
// kProbTol is what validated tables must satisfy, kRenormTol is the largest
// deviation a loader will silently repair.
inline constexpr double kProbTol = 1e-9;
inline constexpr double kRenormTol = 1e-6;

inline double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

inline void normalize(std::span<double> v) {
  double s = sum(v);
  if (s <= 0.0) throw ZeroEvidence("cannot normalize a zero-mass vector");
  for (double& x : v) x /= s;
}

inline bool sums_to_one(std::span<const double> v, double tol = kProbTol) {
  return std::abs(sum(v) - 1.0) <= tol;
}

inline double tv_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return 0.5 * d;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// ---------------------------------------------------------------------------
// Particle-weight arithmetic (log space, max-shift normalisation)
// ---------------------------------------------------------------------------

inline constexpr double kDeadLogWeight = -std::numeric_limits<double>::infinity();

// Normalised weights over live particles; dead entries get exactly 0.
// Returns the count of live particles.
inline int normalized_weights(std::span<const double> log_w, std::span<double> out) {
  double mx = kDeadLogWeight;
  for (double lw : log_w) mx = std::max(mx, lw);
  int live = 0;
  if (!std::isfinite(mx)) {
    for (double& w : out) w = 0.0;
    return 0;
  }
  double total = 0.0;
  for (size_t i = 0; i < log_w.size(); ++i) {
    if (std::isfinite(log_w[i])) {
      out[i] = std::exp(log_w[i] - mx);
      total += out[i];
      ++live;
    } else {
      out[i] = 0.0;
    }
  }
  for (double& w : out) w /= total;
  return live;
}

inline double effective_sample_size(std::span<const double> normalized) {
  double s2 = 0.0;
  for (double w : normalized) s2 += w * w;
  return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

// Systematic resampling: one uniform offset, N evenly spaced positions.
// With equal weights every particle is copied exactly once.
inline std::vector<int> systematic_resample(std::span<const double> normalized, RngStream& rng) {
  const int n = static_cast<int>(normalized.size());
  std::vector<int> picks(n);
  const double u = rng.uniform() / n;
  double acc = normalized[0];
  int i = 0;
  for (int j = 0; j < n; ++j) {
    const double pos = u + static_cast<double>(j) / n;
    while (pos > acc && i + 1 < n) {
      ++i;
      acc += normalized[i];
    }
    picks[j] = i;
  }
  return picks;
}

}  // namespace ahmm
