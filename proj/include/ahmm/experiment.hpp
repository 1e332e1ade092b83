#pragma once

#include <algorithm>
#include <cmath>
#include <ctime>
#include <ostream>
#include <span>
#include <vector>

#include "ahmm/parallel.hpp"
#include "ahmm/stream.hpp"

namespace ahmm {

struct ExperimentConfig {
  std::vector<FilterKind> kinds = {FilterKind::rb_sis, FilterKind::sis};
  std::vector<int> sample_sizes = {100, 1000, 10000};
  int repeats = 50;
  uint64_t seed = 1;
  int query_level = -1;  // -1 = top level
  double resample_threshold = 0.5;
  int threads = 1;  // cells in flight; each filter runs single-threaded
};

struct ProfilePoint {
  FilterKind kind = FilterKind::rb_sis;
  int n = 0;
  double sigma = 0.0;       // std-dev of the final-step true-policy estimate
  double t_step_ms = 0.0;   // mean per-step thread CPU time, warm-up excluded
  double eta = 0.0;         // sigma^2 * T
};

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  LineFit f;
  const double denom = n * sxx - sx * sx;
  f.slope = denom == 0.0 ? 0.0 : (n * sxy - sx * sy) / denom;
  f.intercept = (sy - f.slope * sx) / n;
  double ss_res = 0.0;
  const double mean_y = sy / n;
  double ss_tot = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += e * e;
    ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
  }
  f.r2 = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return f;
}

struct KindSummary {
  FilterKind kind;
  LineFit sigma_fit;   // log sigma vs log N
  double c_fixed;      // c from sigma = c / sqrt(N)
  LineFit time_fit;    // T vs N (affine)
  double eta_min = 0.0, eta_max = 0.0;
};

struct ProfileTable {
  std::vector<ProfilePoint> points;
  std::vector<KindSummary> summaries;
};

namespace detail {

inline double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

}  // namespace detail

// One filter run over the frozen evidence; returns the final-step estimate of
// the true top policy and the mean per-step CPU time (first step excluded).
inline std::pair<double, double> profile_run(const Hierarchy& h, std::span<const double> top_prior,
                                             const Trajectory& traj, FilterKind kind, int n,
                                             uint64_t seed, int level, int true_policy,
                                             double resample_threshold) {
  const int K = h.num_levels();
  std::vector<double> final_dist;
  double cpu_rest = 0.0;
  int steps = 0;

  if (kind == FilterKind::exact) {
    ExactRunner f(h, top_prior, traj.s0, {level}, EstimateKind::next);
    for (const auto& st : traj.steps) {
      if (st.l >= K) break;
      const double t0 = detail::thread_cpu_seconds();
      f.observe(st.s, st.l);
      const double dt = detail::thread_cpu_seconds() - t0;
      ++steps;
      if (steps > 1) cpu_rest += dt;
    }
    final_dist = f.estimates_now()[0].distribution;
  } else {
    FilterConfig cfg;
    cfg.n_particles = n;
    cfg.seed = seed;
    cfg.query_levels = {level};
    cfg.estimate_every = 0;
    cfg.resample_threshold = resample_threshold;
    cfg.threads = 1;
    if (kind == FilterKind::rb_sis) {
      rb::Filter f(h, top_prior, traj.s0, cfg);
      for (const auto& st : traj.steps) {
        const double t0 = detail::thread_cpu_seconds();
        f.observe(st.o);
        const double dt = detail::thread_cpu_seconds() - t0;
        ++steps;
        if (steps > 1) cpu_rest += dt;
      }
      final_dist = f.estimates_now()[0].distribution;
    } else {
      sis::Filter f(h, top_prior, traj.s0, cfg);
      for (const auto& st : traj.steps) {
        const double t0 = detail::thread_cpu_seconds();
        f.observe(st.o);
        const double dt = detail::thread_cpu_seconds() - t0;
        ++steps;
        if (steps > 1) cpu_rest += dt;
      }
      final_dist = f.estimates_now()[0].distribution;
    }
  }
  const double t_step = steps > 1 ? cpu_rest / (steps - 1) : 0.0;
  return {final_dist[true_policy], t_step * 1e3};
}

// sigma(N) / T(N) profiles over a shared observation stream: `repeats`
// independently seeded runs per cell, spread over worker threads (each run
// itself single-threaded so the CPU clock stays honest).
inline ProfileTable run_experiment(const Hierarchy& h, std::span<const double> top_prior,
                                   const Trajectory& traj, const ExperimentConfig& cfg) {
  const int K = h.num_levels();
  const int level = cfg.query_level < 0 ? K : cfg.query_level;
  const int true_policy = h.require_policy(K, traj.top_id);

  ProfileTable table;
  for (FilterKind kind : cfg.kinds) {
    std::vector<double> log_n, log_sigma, ns, ts, etas;
    for (int n : cfg.sample_sizes) {
      std::vector<double> estimates(cfg.repeats, 0.0);
      std::vector<double> times(cfg.repeats, 0.0);
      parallel_for(cfg.repeats, cfg.threads, [&](int r) {
        const uint64_t seed = RngStream::combine(
            RngStream::combine(RngStream::combine(cfg.seed, static_cast<uint64_t>(kind)),
                               static_cast<uint64_t>(n)),
            static_cast<uint64_t>(r));
        const auto [p_true, t_step] = profile_run(h, top_prior, traj, kind, n, seed, level,
                                                  true_policy, cfg.resample_threshold);
        estimates[r] = p_true;
        times[r] = t_step;
      });
      double mean = 0.0;
      for (double e : estimates) mean += e;
      mean /= cfg.repeats;
      double var = 0.0;
      for (double e : estimates) var += (e - mean) * (e - mean);
      var /= std::max(cfg.repeats - 1, 1);
      double t_mean = 0.0;
      for (double t : times) t_mean += t;
      t_mean /= cfg.repeats;

      ProfilePoint pt;
      pt.kind = kind;
      pt.n = n;
      pt.sigma = std::sqrt(var);
      pt.t_step_ms = t_mean;
      pt.eta = var * t_mean;
      table.points.push_back(pt);

      if (pt.sigma > 0.0) {
        log_n.push_back(std::log(static_cast<double>(n)));
        log_sigma.push_back(std::log(pt.sigma));
      }
      ns.push_back(static_cast<double>(n));
      ts.push_back(t_mean);
      etas.push_back(pt.eta);
    }
    KindSummary sum;
    sum.kind = kind;
    if (log_n.size() >= 2) {
      sum.sigma_fit = fit_line(log_n, log_sigma);
      double acc = 0.0;
      for (size_t i = 0; i < log_n.size(); ++i) acc += log_sigma[i] + 0.5 * log_n[i];
      sum.c_fixed = std::exp(acc / log_n.size());
    }
    sum.time_fit = fit_line(ns, ts);
    sum.eta_min = *std::min_element(etas.begin(), etas.end());
    sum.eta_max = *std::max_element(etas.begin(), etas.end());
    table.summaries.push_back(sum);
  }
  return table;
}

inline void write_profile_csv(const ProfileTable& table, std::ostream& out) {
  out << "filter,N,sigma,t_step_ms,eta\n";
  out.precision(12);
  for (const auto& pt : table.points)
    out << to_string(pt.kind) << "," << pt.n << "," << pt.sigma << "," << pt.t_step_ms << ","
        << pt.eta << "\n";
  for (const auto& s : table.summaries) {
    out << "# " << to_string(s.kind) << " sigma_exponent=" << s.sigma_fit.slope
        << " sigma_r2=" << s.sigma_fit.r2 << " c=" << s.c_fixed
        << " time_slope_ms_per_particle=" << s.time_fit.slope << " time_r2=" << s.time_fit.r2
        << " eta_min=" << s.eta_min << " eta_max=" << s.eta_max << "\n";
  }
}

}  // namespace ahmm
