#pragma once

#include <chrono>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "ahmm/chain.hpp"
#include "ahmm/records.hpp"
#include "ahmm/rb_sis.hpp"
#include "ahmm/simulate.hpp"
#include "ahmm/sis.hpp"

namespace ahmm {

enum class FilterKind { exact, rb_sis, sis };

inline FilterKind filter_kind_from_string(const std::string& s) {
  if (s == "exact") return FilterKind::exact;
  if (s == "rb_sis" || s == "rb-sis" || s == "rb") return FilterKind::rb_sis;
  if (s == "sis") return FilterKind::sis;
  throw_usage("unknown filter kind '" + s + "' (exact | rb_sis | sis)");
}

inline const char* to_string(FilterKind k) {
  switch (k) {
    case FilterKind::exact: return "exact";
    case FilterKind::rb_sis: return "rb_sis";
    default: return "sis";
  }
}

struct StreamOptions {
  FilterKind kind = FilterKind::rb_sis;
  FilterConfig filter;
  int s0 = -1;           // -1: expect an `# s0=...` header before the data
  bool strict = false;   // abort on malformed lines instead of skipping
  bool timing = false;   // adds wall_ns to emitted records
};

// Exact-filter wrapper that walks trajectory records; estimates mirror the
// sampler record format with ess = 1.
class ExactRunner {
 public:
  ExactRunner(const Hierarchy& h, std::span<const double> top_prior, int s0,
              std::vector<int> query_levels, EstimateKind kind)
      : h_(h), bs_(init_belief(h, top_prior, s0)), levels_(std::move(query_levels)), kind_(kind) {
    if (levels_.empty()) levels_ = {h.num_levels()};
  }

  void observe(int s_obs, int l_obs) {
    last_ = exact_filter_step(bs_, h_, s_obs, l_obs);
    ++t_;
  }

  std::vector<EstimateRecord> estimates_now() const {
    std::vector<EstimateRecord> out;
    for (int k : levels_) {
      EstimateRecord rec;
      rec.t = t_;
      rec.level = k;
      rec.kind = t_ == 0 ? EstimateKind::next : kind_;
      rec.ess = 1.0;
      if (rec.kind == EstimateKind::posterior)
        rec.distribution = last_->posterior.dense_level_marginal(k, h_.num_policies(k));
      else
        rec.distribution = bs_.chain.dense_level_marginal(k, h_.num_policies(k));
      out.push_back(std::move(rec));
    }
    return out;
  }

  const BeliefState& belief() const { return bs_; }
  double log_lik() const { return last_ ? last_->log_lik : 0.0; }
  int touched() const { return last_ ? last_->touched : 0; }
  int t() const { return t_; }

 private:
  const Hierarchy& h_;
  BeliefState bs_;
  std::vector<int> levels_;
  EstimateKind kind_;
  std::optional<ExactStep> last_;
  int t_ = 0;
};

// Line-by-line filtering: reads `t,o` records (or full trajectory records
// for the exact filter), emits one estimate record per queried level per
// step. Memory use is independent of the stream length. Malformed lines are
// reported to `err` and skipped unless strict mode is on.
inline void stream_filter(const Hierarchy& h, std::span<const double> top_prior,
                          std::istream& in, std::ostream& out, std::ostream& err,
                          const StreamOptions& opt, std::ostream* diag_out = nullptr) {
  out << kEstimatesHeader << "\n";
  const int K = h.num_levels();

  std::optional<ExactRunner> exact;
  std::optional<rb::Filter> rbf;
  std::optional<sis::Filter> sisf;
  int s0 = opt.s0;
  bool started = false;
  auto ensure_started = [&]() {
    if (started) return;
    if (s0 < 0) throw_usage("initial state unknown: pass --s0 or include an `# s0=` header");
    if (opt.kind == FilterKind::exact)
      exact.emplace(h, top_prior, s0, opt.filter.query_levels, opt.filter.kind);
    else if (opt.kind == FilterKind::rb_sis)
      rbf.emplace(h, top_prior, s0, opt.filter);
    else
      sisf.emplace(h, top_prior, s0, opt.filter);
    started = true;
  };

  std::string line;
  int lineno = 0;
  bool saw_column_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string tok;
      while (meta >> tok) {
        const auto eq = tok.find('=');
        if (eq != std::string::npos && tok.substr(0, eq) == "s0" && s0 < 0)
          s0 = h.states.require(tok.substr(eq + 1));
      }
      continue;
    }
    const auto cols = split_csv(line);
    if (!saw_column_header && !cols.empty() && cols[0] == "t") {
      saw_column_header = true;
      continue;
    }
    try {
      ensure_started();
      long long wall_ns = 0;
      if (opt.kind == FilterKind::exact) {
        if (static_cast<int>(cols.size()) < 4) throw_parse("expected trajectory record t,s,o,l,...");
        const int s_obs = h.states.require(cols[1]);
        const int l_obs = std::stoi(cols[3]);
        if (l_obs >= K) break;  // top-level termination ends the stream
        const auto t0 = std::chrono::steady_clock::now();
        exact->observe(s_obs, l_obs);
        wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
        if (diag_out != nullptr)
          *diag_out << nlohmann::json{{"t", exact->t()}, {"touched", exact->touched()},
                                      {"log_lik", exact->log_lik()}}
                    << "\n";
      } else {
        if (cols.size() < 2) throw_parse("expected observation record t,o");
        const auto oit = h.observation.index.find(cols[1]);
        if (oit == h.observation.index.end())
          throw_parse("unknown observation symbol '" + cols[1] + "'");
        const auto t0 = std::chrono::steady_clock::now();
        if (rbf)
          rbf->observe(oit->second);
        else
          sisf->observe(oit->second);
        wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
        if (diag_out != nullptr)
          *diag_out << diagnostics_to_json(
                           rbf ? rbf->diagnostics_now(wall_ns) : sisf->diagnostics_now(wall_ns),
                           opt.timing)
                    << "\n";
      }
      const int every = std::max(opt.filter.estimate_every, 1);
      const int t_now = rbf ? rbf->t() : (sisf ? sisf->t() : exact->t());
      if (opt.filter.estimate_every > 0 && t_now % every == 0) {
        const auto recs =
            rbf ? rbf->estimates_now() : (sisf ? sisf->estimates_now() : exact->estimates_now());
        for (const auto& rec : recs) out << estimate_to_json(rec, h, opt.timing, wall_ns) << "\n";
        out.flush();
      }
    } catch (const Error& e) {
      // Only malformed input is skippable; evidence/model failures propagate.
      if (e.code() != Errc::parse || opt.strict) throw;
      err << "line " << lineno << " skipped: " << e.what() << "\n";
    }
  }
  if (started) {
    const int t_end = rbf ? rbf->t() : (sisf ? sisf->t() : exact->t());
    if (opt.filter.estimate_every == 0 && t_end > 0) {
      const auto recs =
          rbf ? rbf->estimates_now() : (sisf ? sisf->estimates_now() : exact->estimates_now());
      for (const auto& rec : recs) out << estimate_to_json(rec, h, opt.timing, 0) << "\n";
    }
  }
}

}  // namespace ahmm
