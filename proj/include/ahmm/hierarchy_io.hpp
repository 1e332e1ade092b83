#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "ahmm/hierarchy.hpp"

namespace ahmm {

// Hierarchy file format (JSON):
//   states:      { names: [..], neighbours: {state: [state..]} }
//   actions:     { names: [..], transition: {action: {state: {state: p}}} }
//   observation: { symbols: [..], likelihood: {state: {symbol: p}} }
//   levels:      [ { policies: [ {id, applicable, destinations, beta,
//                                 select, select_default?} ] } ]   (k = 1..K)
//   initial:     {state: p}            (optional)
//   regions:     [ [[state..] per region] per partition level ]   (optional)
// Probabilities may be JSON numbers or decimal strings. Rows whose mass
// deviates from 1 by less than 1e-6 are renormalised on load; larger
// deviations are rejected as authoring errors.

namespace detail {

inline double parse_prob(const nlohmann::json& j, const std::string& where) {
  double p;
  if (j.is_number()) {
    p = j.get<double>();
  } else if (j.is_string()) {
    try {
      p = std::stod(j.get<std::string>());
    } catch (const std::exception&) {
      throw_parse(where + ": probability is not a number");
    }
  } else {
    throw_parse(where + ": probability is not a number");
  }
  if (p < 0.0 || p > 1.0) throw_parse(where + ": probability out of range");
  return p;
}

inline void renormalize_or_reject(SparseRow& row, const std::string& where) {
  const double s = sparse_sum(row);
  if (std::abs(s - 1.0) <= kRenormTol) {
    if (s > 0.0)
      for (auto& [k, p] : row) p /= s;
    return;
  }
  throw_parse(where + ": distribution mass " + std::to_string(s) +
              " deviates from 1 beyond tolerance");
}

template <typename Lookup>
inline SparseRow parse_row(const nlohmann::json& obj, const Lookup& lookup,
                           const std::string& where, bool renorm = true) {
  SparseRow row;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    row.emplace_back(lookup(it.key()), parse_prob(it.value(), where + " '" + it.key() + "'"));
  }
  std::sort(row.begin(), row.end());
  if (renorm && !row.empty()) renormalize_or_reject(row, where);
  return row;
}

}  // namespace detail

inline nlohmann::json hierarchy_to_json(const Hierarchy& h,
                                        const RegionPartition* regions = nullptr) {
  using nlohmann::json;
  json j;
  j["format"] = "ahmm-hierarchy-v1";

  json jystates;
  jystates["names"] = h.states.names;
  json nb = json::object();
  for (int s = 0; s < h.states.size(); ++s) {
    json arr = json::array();
    for (int t : h.states.neighbours[s]) arr.push_back(h.states.names[t]);
    nb[h.states.names[s]] = arr;
  }
  jystates["neighbours"] = nb;
  j["states"] = jystates;

  json jactions;
  jactions["names"] = h.actions.names;
  json tr = json::object();
  for (int a = 0; a < h.actions.size(); ++a) {
    json per_state = json::object();
    for (int s = 0; s < h.states.size(); ++s) {
      const SparseRow& row = h.actions.row(a, s);
      if (row.empty()) continue;
      json r = json::object();
      for (const auto& [t, p] : row) r[h.states.names[t]] = p;
      per_state[h.states.names[s]] = r;
    }
    tr[h.actions.names[a]] = per_state;
  }
  jactions["transition"] = tr;
  j["actions"] = jactions;

  json jobs;
  jobs["symbols"] = h.observation.symbols;
  json lik = json::object();
  for (int s = 0; s < h.states.size(); ++s) {
    json r = json::object();
    for (const auto& [o, p] : h.observation.likelihood[s]) r[h.observation.symbols[o]] = p;
    lik[h.states.names[s]] = r;
  }
  jobs["likelihood"] = lik;
  j["observation"] = jobs;

  json jlevels = json::array();
  for (int k = 1; k <= h.num_levels(); ++k) {
    json policies = json::array();
    for (int p = 0; p < h.num_policies(k); ++p) {
      const PolicySpec& spec = h.policy(k, p);
      json jp;
      jp["id"] = spec.id;
      json app = json::array();
      for (int s : spec.applicable) app.push_back(h.states.names[s]);
      jp["applicable"] = app;
      json dst = json::array();
      for (int s : spec.destinations) dst.push_back(h.states.names[s]);
      jp["destinations"] = dst;
      json beta = json::object();
      for (const auto& [d, b] : spec.stop_prob) beta[h.states.names[d]] = b;
      jp["beta"] = beta;
      auto child_name = [&](int c) { return h.policy_id(k - 1, c); };
      json sel = json::object();
      for (const auto& [s, row] : spec.select) {
        json r = json::object();
        for (const auto& [c, pr] : row) r[child_name(c)] = pr;
        sel[h.states.names[s]] = r;
      }
      jp["select"] = sel;
      if (spec.select_default) {
        json r = json::object();
        for (const auto& [c, pr] : *spec.select_default) r[child_name(c)] = pr;
        jp["select_default"] = r;
      }
      policies.push_back(jp);
    }
    jlevels.push_back(json{{"policies", policies}});
  }
  j["levels"] = jlevels;

  if (!h.initial.empty()) {
    json init = json::object();
    for (const auto& [s, p] : h.initial) init[h.states.names[s]] = p;
    j["initial"] = init;
  }

  if (regions != nullptr && regions->num_levels() > 0) {
    json jreg = json::array();
    for (const RegionLevel& lvl : regions->levels) {
      std::vector<std::vector<std::string>> groups(lvl.region_count);
      for (int s = 0; s < static_cast<int>(lvl.region_of.size()); ++s)
        groups[lvl.region_of[s]].push_back(h.states.names[s]);
      jreg.push_back(groups);
    }
    j["regions"] = jreg;
  }

  return j;
}

inline Hierarchy hierarchy_from_json(const nlohmann::json& j,
                                     RegionPartition* regions_out = nullptr) {
  using nlohmann::json;
  Hierarchy h;

  if (!j.contains("states") || !j.contains("actions") || !j.contains("levels"))
    throw_parse("hierarchy file: missing states/actions/levels section");

  const json& js = j.at("states");
  h.states.names = js.at("names").get<std::vector<std::string>>();
  for (int s = 0; s < h.states.size(); ++s) {
    if (h.states.index.count(h.states.names[s]))
      throw_parse("states: duplicate state id '" + h.states.names[s] + "'");
    h.states.index[h.states.names[s]] = s;
  }
  auto state_of = [&](const std::string& name) {
    auto it = h.states.index.find(name);
    if (it == h.states.index.end()) throw_parse("reference to unknown state '" + name + "'");
    return it->second;
  };
  h.states.neighbours.assign(h.states.size(), {});
  if (js.contains("neighbours")) {
    for (auto it = js.at("neighbours").begin(); it != js.at("neighbours").end(); ++it) {
      auto& nb = h.states.neighbours[state_of(it.key())];
      for (const auto& name : it.value()) nb.push_back(state_of(name.get<std::string>()));
      std::sort(nb.begin(), nb.end());
      nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }
  }

  const json& ja = j.at("actions");
  h.actions.names = ja.at("names").get<std::vector<std::string>>();
  for (int a = 0; a < h.actions.size(); ++a) h.actions.index[h.actions.names[a]] = a;
  h.actions.transition.assign(h.actions.size(), std::vector<SparseRow>(h.states.size()));
  for (auto it = ja.at("transition").begin(); it != ja.at("transition").end(); ++it) {
    auto ai = h.actions.index.find(it.key());
    if (ai == h.actions.index.end()) throw_parse("transition for unknown action '" + it.key() + "'");
    for (auto st = it.value().begin(); st != it.value().end(); ++st) {
      const int s = state_of(st.key());
      h.actions.transition[ai->second][s] = detail::parse_row(
          st.value(), state_of, "transition(" + it.key() + ", " + st.key() + ")");
    }
  }

  if (j.contains("observation")) {
    const json& jo = j.at("observation");
    h.observation.symbols = jo.at("symbols").get<std::vector<std::string>>();
    for (int o = 0; o < h.observation.size(); ++o) h.observation.index[h.observation.symbols[o]] = o;
    auto symbol_of = [&](const std::string& name) {
      auto it = h.observation.index.find(name);
      if (it == h.observation.index.end())
        throw_parse("reference to unknown observation symbol '" + name + "'");
      return it->second;
    };
    h.observation.likelihood.assign(h.states.size(), {});
    for (auto it = jo.at("likelihood").begin(); it != jo.at("likelihood").end(); ++it) {
      h.observation.likelihood[state_of(it.key())] =
          detail::parse_row(it.value(), symbol_of, "observation(" + it.key() + ")");
    }
  } else {
    h.observation.likelihood.assign(h.states.size(), {});
  }

  const json& jl = j.at("levels");
  h.levels.resize(jl.size());
  for (size_t k1 = 0; k1 < jl.size(); ++k1) {
    const int k = static_cast<int>(k1) + 1;
    // Children of level k live at level k-1; build the lookup lazily since
    // level k-1 policies are already parsed when we get here.
    auto child_of = [&](const std::string& name) {
      if (k == 1) {
        auto it = h.actions.index.find(name);
        if (it == h.actions.index.end())
          throw_parse("selection references unknown action '" + name + "'");
        return it->second;
      }
      for (size_t p = 0; p < h.levels[k - 2].size(); ++p)
        if (h.levels[k - 2][p].id == name) return static_cast<int>(p);
      throw_parse("selection references unknown level-" + std::to_string(k - 1) +
                  " policy '" + name + "'");
    };
    for (const json& jp : jl[k1].at("policies")) {
      PolicySpec spec;
      spec.id = jp.at("id").get<std::string>();
      spec.level = k;
      for (const auto& name : jp.at("applicable"))
        spec.applicable.push_back(state_of(name.get<std::string>()));
      std::sort(spec.applicable.begin(), spec.applicable.end());
      for (const auto& name : jp.at("destinations"))
        spec.destinations.push_back(state_of(name.get<std::string>()));
      std::sort(spec.destinations.begin(), spec.destinations.end());
      if (jp.contains("beta")) {
        for (auto it = jp.at("beta").begin(); it != jp.at("beta").end(); ++it) {
          const double b = detail::parse_prob(it.value(), "beta(" + spec.id + ")");
          spec.stop_prob[state_of(it.key())] = b;
        }
      }
      // Unlisted destinations stop deterministically.
      for (int d : spec.destinations)
        if (!spec.stop_prob.count(d)) spec.stop_prob[d] = 1.0;
      if (jp.contains("select")) {
        for (auto it = jp.at("select").begin(); it != jp.at("select").end(); ++it) {
          spec.select[state_of(it.key())] = detail::parse_row(
              it.value(), child_of, "select(" + spec.id + ", " + it.key() + ")");
        }
      }
      if (jp.contains("select_default")) {
        spec.select_default = detail::parse_row(jp.at("select_default"), child_of,
                                                "select_default(" + spec.id + ")");
      }
      h.levels[k1].push_back(std::move(spec));
    }
  }

  if (j.contains("initial")) {
    h.initial = detail::parse_row(j.at("initial"), state_of, "initial distribution");
  }

  if (regions_out != nullptr && j.contains("regions")) {
    regions_out->levels.clear();
    for (const json& jlvl : j.at("regions")) {
      RegionLevel lvl;
      lvl.region_of.assign(h.states.size(), -1);
      for (const json& group : jlvl) {
        for (const auto& name : group) lvl.region_of[state_of(name.get<std::string>())] = lvl.region_count;
        ++lvl.region_count;
      }
      for (int s = 0; s < h.states.size(); ++s)
        if (lvl.region_of[s] < 0)
          throw_parse("regions: state '" + h.states.names[s] + "' missing from a partition level");
      regions_out->levels.push_back(std::move(lvl));
    }
  }

  h.finalize();
  return h;
}

inline void save_hierarchy(const Hierarchy& h, const std::string& path,
                           const RegionPartition* regions = nullptr) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::parse, "cannot open '" + path + "' for writing");
  out << hierarchy_to_json(h, regions).dump(1) << "\n";
}

inline Hierarchy load_hierarchy(const std::string& path,
                                RegionPartition* regions_out = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::parse, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw_parse(std::string("hierarchy file: ") + e.what());
  }
  return hierarchy_from_json(j, regions_out);
}

}  // namespace ahmm
