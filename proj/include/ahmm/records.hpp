#pragma once

#include <ostream>
#include <string>

#include <json.hpp>

#include "ahmm/hierarchy.hpp"
#include "ahmm/particles.hpp"

namespace ahmm {

// Estimate records go out as one JSON object per line with alphabetically
// ordered keys, so equal runs produce equal bytes. Wall-clock fields are
// opt-in: they are the one thing that cannot be reproducible.
inline nlohmann::json estimate_to_json(const EstimateRecord& rec, const Hierarchy& h,
                                       bool timing = false, long long wall_ns = 0) {
  nlohmann::json dist = nlohmann::json::object();
  for (size_t p = 0; p < rec.distribution.size(); ++p)
    dist[h.policy_id(rec.level, static_cast<int>(p))] = rec.distribution[p];
  nlohmann::json j{{"t", rec.t},
                   {"level", rec.level},
                   {"kind", to_string(rec.kind)},
                   {"distribution", dist},
                   {"ess", rec.ess}};
  if (timing) j["wall_ns"] = wall_ns;
  return j;
}

inline nlohmann::json diagnostics_to_json(const StepDiagnostics& d, bool timing = false) {
  nlohmann::json j{{"t", d.t},
                   {"ess", d.ess},
                   {"live", d.live},
                   {"dead", d.dead},
                   {"resampled", d.resampled}};
  if (timing) j["wall_ns"] = d.wall_ns;
  return j;
}

inline constexpr const char* kEstimatesHeader = "# ahmm-estimates-v1";

}  // namespace ahmm
