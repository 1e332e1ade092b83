#pragma once

#include <array>
#include <cassert>
#include <string>
#include <vector>

#include "ahmm/hierarchy.hpp"

namespace ahmm {

struct BuildResult {
  Hierarchy h;
  RegionPartition regions;
};

// ---------------------------------------------------------------------------
// T4: four states in a line, K = 2. Small enough that every hidden history
// up to T = 6 can be enumerated, which is what the oracle tests lean on.
// ---------------------------------------------------------------------------

// shared_destinations: both level-1 policies stop at both endpoints, which
// makes the termination cascade a function of the state alone (the belief
// filters then degenerate to the exact filter under noiseless observation).
// identity_obs: observation symbols are the states themselves.
inline Hierarchy build_t4(bool shared_destinations = false, bool identity_obs = false) {
  Hierarchy h;
  h.states.names = {"w0", "w1", "w2", "w3"};
  for (int s = 0; s < 4; ++s) h.states.index[h.states.names[s]] = s;
  h.states.neighbours = {{1}, {0, 2}, {1, 3}, {2}};

  h.actions.names = {"L", "R", "Y"};
  for (int a = 0; a < 3; ++a) h.actions.index[h.actions.names[a]] = a;
  h.actions.transition.assign(3, std::vector<SparseRow>(4));
  for (int s = 0; s < 4; ++s) {
    if (s == 0)
      h.actions.transition[0][s] = {{0, 1.0}};
    else
      h.actions.transition[0][s] = {{s - 1, 0.9}, {s, 0.1}};
    if (s == 3)
      h.actions.transition[1][s] = {{3, 1.0}};
    else
      h.actions.transition[1][s] = {{s, 0.1}, {s + 1, 0.9}};
    h.actions.transition[2][s] = {{s, 1.0}};
  }

  if (identity_obs) {
    h.observation.symbols = h.states.names;
    for (int o = 0; o < 4; ++o) h.observation.index[h.observation.symbols[o]] = o;
    h.observation.likelihood.assign(4, {});
    for (int s = 0; s < 4; ++s) h.observation.likelihood[s] = {{s, 1.0}};
  } else {
    h.observation.symbols = {"lo", "hi"};
    h.observation.index = {{"lo", 0}, {"hi", 1}};
    h.observation.likelihood = {
        {{0, 0.9}, {1, 0.1}}, {{0, 0.7}, {1, 0.3}}, {{0, 0.3}, {1, 0.7}}, {{0, 0.1}, {1, 0.9}}};
  }

  const std::vector<int> all = {0, 1, 2, 3};

  PolicySpec left;
  left.id = "left";
  left.level = 1;
  left.applicable = all;
  left.destinations = shared_destinations ? std::vector<int>{0, 3} : std::vector<int>{0};
  for (int d : left.destinations) left.stop_prob[d] = 1.0;
  left.select_default = SparseRow{{0, 0.8}, {1, 0.1}, {2, 0.1}};

  PolicySpec right = left;
  right.id = "right";
  right.destinations = shared_destinations ? std::vector<int>{0, 3} : std::vector<int>{3};
  right.stop_prob.clear();
  for (int d : right.destinations) right.stop_prob[d] = 1.0;
  right.select_default = SparseRow{{0, 0.1}, {1, 0.8}, {2, 0.1}};

  PolicySpec alpha;
  alpha.id = "alpha";
  alpha.level = 2;
  alpha.applicable = all;
  alpha.destinations = {0, 3};
  alpha.stop_prob[0] = 0.3;
  alpha.stop_prob[3] = 0.3;
  alpha.select_default = SparseRow{{0, 0.7}, {1, 0.3}};

  PolicySpec beta = alpha;
  beta.id = "beta";
  beta.select_default = SparseRow{{0, 0.3}, {1, 0.7}};

  h.levels = {{left, right}, {alpha, beta}};
  h.initial = {{1, 1.0}};
  h.finalize();
  return h;
}

// ---------------------------------------------------------------------------
// The eight-room building: two wings of four rooms, K = 3.
//
// Rooms are g x g cell grids arranged two rows (north wing on top) by four
// columns. Adjacent rooms connect through a door at the centre of the shared
// wall; one centre door C joins the wings; four entrances N/W/S/E lead to
// outside pad states. Policy parameters are generated, not hand-tuned:
// level-1 selection puts 0.7 on moves that close the grid distance to the
// policy's target doorway, higher levels put 0.8 on the child headed for the
// parent's exit.
// ---------------------------------------------------------------------------

struct BuildingConfig {
  int grid_size = 5;       // cells per room side
  double obs_stay = 0.6;   // observation mass on the true cell; 1.0 = noiseless
  double move_prob = 0.85; // action outcome noise: rest of the mass stays put
};

namespace detail {

struct GridGeom {
  int g = 5;
  int rows = 0, cols = 0;
  std::vector<std::string> names;                   // cells then pads
  std::vector<std::pair<int, int>> coord;           // virtual coords incl. pads
  std::vector<std::vector<int>> move_to;            // [dir][state] -> target or -1
  int n_cells = 0;

  int cell(int r, int c) const { return r * cols + c; }
  bool in_grid(int r, int c) const { return r >= 0 && r < rows && c >= 0 && c < cols; }
};

// dirs: 0=N(up) 1=E(right) 2=S(down) 3=W(left)
inline constexpr std::array<std::pair<int, int>, 4> kDirDelta = {
    {{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};
inline constexpr std::array<const char*, 4> kDirName = {"N", "E", "S", "W"};

inline void add_movement_actions(Hierarchy& h, const GridGeom& geo, double move_prob) {
  h.actions.names = {"up", "right", "down", "left"};
  for (int a = 0; a < 4; ++a) h.actions.index[h.actions.names[a]] = a;
  h.actions.transition.assign(4, std::vector<SparseRow>(h.states.size()));
  for (int s = 0; s < geo.n_cells; ++s) {
    for (int d = 0; d < 4; ++d) {
      const int t = geo.move_to[d][s];
      if (t < 0) continue;  // blocked moves are simply not available
      SparseRow row;
      if (move_prob >= 1.0) {
        row = {{t, 1.0}};
      } else {
        row.emplace_back(t, move_prob);
        row.emplace_back(s, 1.0 - move_prob);
        std::sort(row.begin(), row.end());
      }
      h.actions.transition[d][s] = std::move(row);
    }
  }
}

inline void add_obs_noise(Hierarchy& h, const GridGeom& geo, double stay) {
  h.observation.symbols = h.states.names;
  for (int o = 0; o < static_cast<int>(h.observation.symbols.size()); ++o)
    h.observation.index[h.observation.symbols[o]] = o;
  h.observation.likelihood.assign(h.states.size(), {});
  for (int s = 0; s < h.states.size(); ++s) {
    if (s >= geo.n_cells || stay >= 1.0) {
      h.observation.likelihood[s] = {{s, 1.0}};
      continue;
    }
    // Displacement noise within the 8-neighbourhood, walls ignored.
    auto [r, c] = geo.coord[s];
    std::vector<int> nb8;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        if (geo.in_grid(r + dr, c + dc)) nb8.push_back(geo.cell(r + dr, c + dc));
      }
    SparseRow row;
    row.emplace_back(s, stay);
    for (int t : nb8) row.emplace_back(t, (1.0 - stay) / nb8.size());
    std::sort(row.begin(), row.end());
    h.observation.likelihood[s] = std::move(row);
  }
}

// Selection over primitive actions: 0.7 mass on legal moves that strictly
// reduce the Manhattan distance to `target`, 0.3 spread over the rest.
inline SparseRow biased_action_row(const Hierarchy& h, const GridGeom& geo, int s, int target) {
  const auto& legal = h.applicable(0, s);
  auto dist = [&](int x) {
    return std::abs(geo.coord[x].first - geo.coord[target].first) +
           std::abs(geo.coord[x].second - geo.coord[target].second);
  };
  const int d0 = dist(s);
  std::vector<int> reducing, other;
  for (int a : legal) {
    const int t = geo.move_to[a][s];  // intended landing cell
    (dist(t) < d0 ? reducing : other).push_back(a);
  }
  SparseRow row;
  if (reducing.empty() || other.empty()) {
    for (int a : legal) row.emplace_back(a, 1.0 / legal.size());
  } else {
    for (int a : reducing) row.emplace_back(a, 0.7 / reducing.size());
    for (int a : other) row.emplace_back(a, 0.3 / other.size());
  }
  std::sort(row.begin(), row.end());
  return row;
}

// 0.8 on the intended child, 0.2 spread over the other applicable children.
inline SparseRow biased_child_row(const std::vector<int>& children, int intended) {
  SparseRow row;
  if (children.size() == 1) {
    row.emplace_back(children[0], 1.0);
    return row;
  }
  for (int c : children)
    row.emplace_back(c, c == intended ? 0.8 : 0.2 / (children.size() - 1));
  std::sort(row.begin(), row.end());
  return row;
}

}  // namespace detail

inline BuildResult build_building(const BuildingConfig& cfg = {}) {
  using namespace detail;
  const int g = cfg.grid_size;
  if (g < 1) throw_usage("building grid size must be >= 1");
  const int m = g / 2;

  GridGeom geo;
  geo.g = g;
  geo.rows = 2 * g;
  geo.cols = 4 * g;
  geo.n_cells = geo.rows * geo.cols;

  Hierarchy h;
  for (int r = 0; r < geo.rows; ++r)
    for (int c = 0; c < geo.cols; ++c) {
      geo.names.push_back("c" + std::to_string(r) + "_" + std::to_string(c));
      geo.coord.emplace_back(r, c);
    }
  // Pads sit just beyond their entrance in virtual coordinates so that grid
  // distances extend to them naturally.
  const int pad_N = geo.n_cells + 0, pad_W = geo.n_cells + 1;
  const int pad_S = geo.n_cells + 2, pad_E = geo.n_cells + 3;
  geo.names.insert(geo.names.end(), {"out_N", "out_W", "out_S", "out_E"});
  geo.coord.emplace_back(-1, 2 * g);
  geo.coord.emplace_back(m, -1);
  geo.coord.emplace_back(2 * g, 2 * g - 1);
  geo.coord.emplace_back(g + m, 4 * g);

  h.states.names = geo.names;
  for (int s = 0; s < static_cast<int>(geo.names.size()); ++s) h.states.index[geo.names[s]] = s;

  auto room_of_cell = [&](int s) {
    auto [r, c] = geo.coord[s];
    return (r < g ? 0 : 4) + c / g;
  };

  // Doors as ordered (from, to) moves; intra-room moves are implicit.
  std::vector<std::array<int, 2>> doors;
  for (int i = 1; i <= 3; ++i) {
    doors.push_back({geo.cell(m, g * i - 1), geo.cell(m, g * i)});
    doors.push_back({geo.cell(g + m, g * i - 1), geo.cell(g + m, g * i)});
  }
  doors.push_back({geo.cell(g - 1, 2 * g), geo.cell(g, 2 * g)});  // centre door C
  const int ent_N = geo.cell(0, 2 * g), ent_W = geo.cell(m, 0);
  const int ent_S = geo.cell(2 * g - 1, 2 * g - 1), ent_E = geo.cell(g + m, 4 * g - 1);

  geo.move_to.assign(4, std::vector<int>(h.states.size(), -1));
  for (int s = 0; s < geo.n_cells; ++s) {
    auto [r, c] = geo.coord[s];
    for (int d = 0; d < 4; ++d) {
      const int rr = r + kDirDelta[d].first, cc = c + kDirDelta[d].second;
      if (geo.in_grid(rr, cc) && room_of_cell(s) == room_of_cell(geo.cell(rr, cc)))
        geo.move_to[d][s] = geo.cell(rr, cc);
    }
  }
  for (const auto& [a, b] : doors) {
    for (int d = 0; d < 4; ++d) {
      if (geo.coord[b].first - geo.coord[a].first == kDirDelta[d].first &&
          geo.coord[b].second - geo.coord[a].second == kDirDelta[d].second) {
        geo.move_to[d][a] = b;
        geo.move_to[(d + 2) % 4][b] = a;
      }
    }
  }
  geo.move_to[0][ent_N] = pad_N;
  geo.move_to[3][ent_W] = pad_W;
  geo.move_to[2][ent_S] = pad_S;
  geo.move_to[1][ent_E] = pad_E;

  h.states.neighbours.assign(h.states.size(), {});
  for (int s = 0; s < geo.n_cells; ++s) {
    for (int d = 0; d < 4; ++d)
      if (geo.move_to[d][s] >= 0) h.states.neighbours[s].push_back(geo.move_to[d][s]);
    std::sort(h.states.neighbours[s].begin(), h.states.neighbours[s].end());
  }

  h.actions.names = {"up", "right", "down", "left"};
  for (int a = 0; a < 4; ++a) h.actions.index[h.actions.names[a]] = a;
  h.actions.transition.assign(4, std::vector<SparseRow>(h.states.size()));
  for (int s = 0; s < geo.n_cells; ++s)
    for (int d = 0; d < 4; ++d)
      if (geo.move_to[d][s] >= 0) h.actions.transition[d][s] = {{geo.move_to[d][s], 1.0}};

  add_obs_noise(h, geo, cfg.obs_stay);

  // Region partitions: rooms / wings / whole space, pads pooled as "outside".
  RegionPartition regions;
  RegionLevel p1, p2, p3;
  p1.region_of.assign(h.states.size(), 8);
  p2.region_of.assign(h.states.size(), 2);
  p3.region_of.assign(h.states.size(), 0);
  for (int s = 0; s < geo.n_cells; ++s) {
    p1.region_of[s] = room_of_cell(s);
    p2.region_of[s] = geo.coord[s].first < g ? 0 : 1;
  }
  p1.region_count = 9;
  p2.region_count = 3;
  p3.region_count = 1;
  regions.levels = {p1, p2, p3};

  h.finalize();  // applicability over actions is needed while building sigma

  // Level 1: four exit policies per room. A direction without a real door
  // aliases to the nearest door of the room.
  std::vector<std::vector<int>> room_cells(8);
  for (int s = 0; s < geo.n_cells; ++s) room_cells[room_of_cell(s)].push_back(s);
  // (room, dir) -> doorway cell beyond the wall, or -1
  std::vector<std::array<int, 4>> room_door(8, {-1, -1, -1, -1});
  for (int room = 0; room < 8; ++room)
    for (int s : room_cells[room])
      for (int d = 0; d < 4; ++d) {
        const int t = geo.move_to[d][s];
        if (t >= 0 && (t >= geo.n_cells || room_of_cell(t) != room)) room_door[room][d] = t;
      }

  std::vector<PolicySpec> level1;
  const std::array<const char*, 8> room_name = {"n0", "n1", "n2", "n3", "s0", "s1", "s2", "s3"};
  auto wall_center = [&](int room, int d) -> std::pair<int, int> {
    const int wing_r = room < 4 ? 0 : g;
    const int base_c = (room % 4) * g;
    switch (d) {
      case 0: return {wing_r - 1, base_c + g / 2};
      case 1: return {wing_r + g / 2, base_c + g};
      case 2: return {wing_r + g, base_c + g / 2};
      default: return {wing_r + g / 2, base_c - 1};
    }
  };
  for (int room = 0; room < 8; ++room) {
    const std::vector<int> periphery = regions.periphery(h.states, 1, room_cells[room][0]);
    for (int d = 0; d < 4; ++d) {
      int target = room_door[room][d];
      if (target < 0) {
        // nearest real door to this wall's centre, first of N,E,S,W on ties
        auto [wr, wc] = wall_center(room, d);
        int best = -1, best_dist = 1 << 30;
        for (int dd = 0; dd < 4; ++dd) {
          const int t = room_door[room][dd];
          if (t < 0) continue;
          const int dist = std::abs(geo.coord[t].first - wr) + std::abs(geo.coord[t].second - wc);
          if (dist < best_dist) {
            best_dist = dist;
            best = t;
          }
        }
        target = best;
      }
      PolicySpec spec;
      spec.id = std::string(room_name[room]) + "_exit_" + kDirName[d];
      spec.level = 1;
      spec.applicable = room_cells[room];
      std::sort(spec.applicable.begin(), spec.applicable.end());
      spec.destinations = periphery;
      for (int dst : spec.destinations) spec.stop_prob[dst] = 1.0;
      for (int s : spec.applicable) spec.select[s] = biased_action_row(h, geo, s, target);
      level1.push_back(std::move(spec));
    }
  }
  h.levels.push_back(std::move(level1));
  h.finalize();

  // Level 2: three exit policies per wing (two entrances plus the C door).
  // The intended child in room R heads for the next door on the way to the
  // wing exit: the exit's own door when R holds it, otherwise east/west
  // along the room row.
  struct WingExit {
    const char* name;
    int door_cell;   // doorway cell beyond the wall
    int door_room;   // room whose wall carries the door
    int door_dir;
  };
  const std::array<std::vector<WingExit>, 2> wing_exits = {{
      {{"N", pad_N, 2, 0}, {"W", pad_W, 0, 3}, {"C", geo.cell(g, 2 * g), 2, 2}},
      {{"S", pad_S, 5, 2}, {"E", pad_E, 7, 1}, {"C", geo.cell(g - 1, 2 * g), 6, 0}},
  }};
  std::vector<PolicySpec> level2;
  for (int wing = 0; wing < 2; ++wing) {
    std::vector<int> wing_cells;
    for (int room = wing * 4; room < wing * 4 + 4; ++room)
      wing_cells.insert(wing_cells.end(), room_cells[room].begin(), room_cells[room].end());
    std::sort(wing_cells.begin(), wing_cells.end());
    const std::vector<int> periphery = regions.periphery(h.states, 2, wing_cells[0]);
    for (const WingExit& exit : wing_exits[wing]) {
      PolicySpec spec;
      spec.id = std::string(wing == 0 ? "north" : "south") + "_exit_" + exit.name;
      spec.level = 2;
      spec.applicable = wing_cells;
      spec.destinations = periphery;
      for (int dst : spec.destinations) spec.stop_prob[dst] = 1.0;
      for (int s : wing_cells) {
        const int room = room_of_cell(s);
        int intended_dir;
        if (room == exit.door_room)
          intended_dir = exit.door_dir;
        else
          intended_dir = (room % 4) < (exit.door_room % 4) ? 1 : 3;
        const int intended = h.require_policy(1, std::string(room_name[room]) + "_exit_" +
                                                     kDirName[intended_dir]);
        spec.select[s] = biased_child_row(h.applicable(1, s), intended);
      }
      level2.push_back(std::move(spec));
    }
  }
  h.levels.push_back(std::move(level2));
  h.finalize();

  // Level 3: leave the building via N/W/S/E.
  std::vector<int> all_cells(geo.n_cells);
  for (int s = 0; s < geo.n_cells; ++s) all_cells[s] = s;
  const std::vector<int> pads = {pad_N, pad_W, pad_S, pad_E};
  const std::array<std::pair<const char*, int>, 4> top_exits = {
      {{"N", 0}, {"W", 0}, {"S", 1}, {"E", 1}}};
  std::vector<PolicySpec> level3;
  for (const auto& [name, home_wing] : top_exits) {
    PolicySpec spec;
    spec.id = std::string("exit_") + name;
    spec.level = 3;
    spec.applicable = all_cells;
    spec.destinations = pads;
    for (int dst : pads) spec.stop_prob[dst] = 1.0;
    for (int s : all_cells) {
      const int wing = geo.coord[s].first < g ? 0 : 1;
      const std::string child_name = std::string(wing == 0 ? "north" : "south") + "_exit_" +
                                     (wing == home_wing ? name : "C");
      spec.select[s] = biased_child_row(h.applicable(2, s), h.require_policy(2, child_name));
    }
    level3.push_back(std::move(spec));
  }
  h.levels.push_back(std::move(level3));

  h.initial = {{ent_N, 0.25}, {ent_W, 0.25}, {ent_S, 0.25}, {ent_E, 0.25}};
  std::sort(h.initial.begin(), h.initial.end());
  h.finalize();
  return {std::move(h), std::move(regions)};
}

// ---------------------------------------------------------------------------
// Two-room slice of the building, K = 2. Same construction idiom, small
// enough for exhaustive joint enumeration.
// ---------------------------------------------------------------------------

inline BuildResult build_two_room(int g = 5, double obs_stay = 0.6) {
  using namespace detail;
  if (g < 1) throw_usage("room grid size must be >= 1");
  const int m = g / 2;

  GridGeom geo;
  geo.g = g;
  geo.rows = g;
  geo.cols = 2 * g;
  geo.n_cells = geo.rows * geo.cols;

  Hierarchy h;
  for (int r = 0; r < geo.rows; ++r)
    for (int c = 0; c < geo.cols; ++c) {
      geo.names.push_back("c" + std::to_string(r) + "_" + std::to_string(c));
      geo.coord.emplace_back(r, c);
    }
  const int pad_W = geo.n_cells, pad_E = geo.n_cells + 1;
  geo.names.insert(geo.names.end(), {"out_W", "out_E"});
  geo.coord.emplace_back(m, -1);
  geo.coord.emplace_back(m, 2 * g);

  h.states.names = geo.names;
  for (int s = 0; s < static_cast<int>(geo.names.size()); ++s) h.states.index[geo.names[s]] = s;

  auto room_of_cell = [&](int s) { return geo.coord[s].second / g; };

  geo.move_to.assign(4, std::vector<int>(h.states.size(), -1));
  for (int s = 0; s < geo.n_cells; ++s) {
    auto [r, c] = geo.coord[s];
    for (int d = 0; d < 4; ++d) {
      const int rr = r + kDirDelta[d].first, cc = c + kDirDelta[d].second;
      if (geo.in_grid(rr, cc) && room_of_cell(s) == room_of_cell(geo.cell(rr, cc)))
        geo.move_to[d][s] = geo.cell(rr, cc);
    }
  }
  geo.move_to[1][geo.cell(m, g - 1)] = geo.cell(m, g);
  geo.move_to[3][geo.cell(m, g)] = geo.cell(m, g - 1);
  geo.move_to[3][geo.cell(m, 0)] = pad_W;
  geo.move_to[1][geo.cell(m, 2 * g - 1)] = pad_E;

  h.states.neighbours.assign(h.states.size(), {});
  for (int s = 0; s < geo.n_cells; ++s) {
    for (int d = 0; d < 4; ++d)
      if (geo.move_to[d][s] >= 0) h.states.neighbours[s].push_back(geo.move_to[d][s]);
    std::sort(h.states.neighbours[s].begin(), h.states.neighbours[s].end());
  }

  h.actions.names = {"up", "right", "down", "left"};
  for (int a = 0; a < 4; ++a) h.actions.index[h.actions.names[a]] = a;
  h.actions.transition.assign(4, std::vector<SparseRow>(h.states.size()));
  for (int s = 0; s < geo.n_cells; ++s)
    for (int d = 0; d < 4; ++d)
      if (geo.move_to[d][s] >= 0) h.actions.transition[d][s] = {{geo.move_to[d][s], 1.0}};

  add_obs_noise(h, geo, obs_stay);

  RegionPartition regions;
  RegionLevel p1, p2;
  p1.region_of.assign(h.states.size(), 2);
  p2.region_of.assign(h.states.size(), 0);
  for (int s = 0; s < geo.n_cells; ++s) p1.region_of[s] = room_of_cell(s);
  p1.region_count = 3;
  p2.region_count = 1;
  regions.levels = {p1, p2};

  h.finalize();

  std::vector<std::vector<int>> room_cells(2);
  for (int s = 0; s < geo.n_cells; ++s) room_cells[room_of_cell(s)].push_back(s);
  std::vector<std::array<int, 4>> room_door(2, {-1, -1, -1, -1});
  for (int room = 0; room < 2; ++room)
    for (int s : room_cells[room])
      for (int d = 0; d < 4; ++d) {
        const int t = geo.move_to[d][s];
        if (t >= 0 && (t >= geo.n_cells || room_of_cell(t) != room)) room_door[room][d] = t;
      }

  std::vector<PolicySpec> level1;
  const std::array<const char*, 2> room_name = {"a", "b"};
  for (int room = 0; room < 2; ++room) {
    const std::vector<int> periphery = regions.periphery(h.states, 1, room_cells[room][0]);
    for (int d = 0; d < 4; ++d) {
      int target = room_door[room][d];
      if (target < 0) target = room_door[room][room == 0 ? 1 : 3];  // alias to inner door
      if (target < 0) target = room_door[room][room == 0 ? 3 : 1];
      PolicySpec spec;
      spec.id = std::string(room_name[room]) + "_exit_" + kDirName[d];
      spec.level = 1;
      spec.applicable = room_cells[room];
      spec.destinations = periphery;
      for (int dst : spec.destinations) spec.stop_prob[dst] = 1.0;
      for (int s : spec.applicable) spec.select[s] = biased_action_row(h, geo, s, target);
      level1.push_back(std::move(spec));
    }
  }
  h.levels.push_back(std::move(level1));
  h.finalize();

  std::vector<int> all_cells(geo.n_cells);
  for (int s = 0; s < geo.n_cells; ++s) all_cells[s] = s;
  std::vector<PolicySpec> level2;
  const std::array<std::tuple<const char*, int, int>, 2> exits = {
      {{"W", 0, 3}, {"E", 1, 1}}};  // name, door room, door dir
  for (const auto& [name, door_room, door_dir] : exits) {
    PolicySpec spec;
    spec.id = std::string("exit_") + name;
    spec.level = 2;
    spec.applicable = all_cells;
    spec.destinations = {pad_W, pad_E};
    spec.stop_prob[pad_W] = 1.0;
    spec.stop_prob[pad_E] = 1.0;
    for (int s : all_cells) {
      const int room = room_of_cell(s);
      const int intended_dir = room == door_room ? door_dir : (room < door_room ? 1 : 3);
      const int intended = h.require_policy(1, std::string(room_name[room]) + "_exit_" +
                                                   kDirName[intended_dir]);
      spec.select[s] = biased_child_row(h.applicable(1, s), intended);
    }
    level2.push_back(std::move(spec));
  }
  h.levels.push_back(std::move(level2));

  h.initial = {{geo.cell(m, 0), 0.5}, {geo.cell(m, 2 * g - 1), 0.5}};
  std::sort(h.initial.begin(), h.initial.end());
  h.finalize();
  return {std::move(h), std::move(regions)};
}

// ---------------------------------------------------------------------------
// Ring worlds: 2^K cells, dyadic block partitions, two exit policies per
// block. The per-level boundary-crossing rates are the same for every K,
// which is what the update-locality comparison needs. Top-level policies
// circulate forever (empty destination set).
// ---------------------------------------------------------------------------

inline BuildResult build_ring(int K) {
  using detail::biased_child_row;
  if (K < 2) throw_usage("ring scenario needs K >= 2");
  const int n = 1 << K;

  Hierarchy h;
  for (int s = 0; s < n; ++s) h.states.names.push_back("u" + std::to_string(s));
  for (int s = 0; s < n; ++s) h.states.index[h.states.names[s]] = s;
  h.states.neighbours.assign(n, {});
  for (int s = 0; s < n; ++s) {
    h.states.neighbours[s] = {(s + 1) % n, (s + n - 1) % n};
    std::sort(h.states.neighbours[s].begin(), h.states.neighbours[s].end());
  }

  h.actions.names = {"cw", "ccw", "stay"};
  for (int a = 0; a < 3; ++a) h.actions.index[h.actions.names[a]] = a;
  h.actions.transition.assign(3, std::vector<SparseRow>(n));
  for (int s = 0; s < n; ++s) {
    h.actions.transition[0][s] = {{(s + 1) % n, 1.0}};
    h.actions.transition[1][s] = {{(s + n - 1) % n, 1.0}};
    h.actions.transition[2][s] = {{s, 1.0}};
    std::sort(h.actions.transition[0][s].begin(), h.actions.transition[0][s].end());
    std::sort(h.actions.transition[1][s].begin(), h.actions.transition[1][s].end());
  }

  h.observation.symbols = h.states.names;
  for (int o = 0; o < n; ++o) h.observation.index[h.observation.symbols[o]] = o;
  h.observation.likelihood.assign(n, {});
  for (int s = 0; s < n; ++s) h.observation.likelihood[s] = {{s, 1.0}};

  RegionPartition regions;
  for (int k = 1; k <= K; ++k) {
    RegionLevel lvl;
    lvl.region_of.assign(n, 0);
    for (int s = 0; s < n; ++s) lvl.region_of[s] = s >> k;
    lvl.region_count = n >> k;
    regions.levels.push_back(std::move(lvl));
  }

  h.finalize();
  for (int k = 1; k <= K; ++k) {
    const int block = 1 << k;
    const int n_blocks = n >> k;
    std::vector<PolicySpec> level;
    for (int j = 0; j < std::max(n_blocks, 1); ++j) {
      for (int dir = 0; dir < 2; ++dir) {  // 0 = cw, 1 = ccw
        PolicySpec spec;
        spec.id = "b" + std::to_string(k) + "_" + std::to_string(j) + (dir == 0 ? "_cw" : "_ccw");
        spec.level = k;
        for (int s = j * block; s < (j + 1) * block; ++s) spec.applicable.push_back(s);
        if (k < K) {
          spec.destinations = {(j * block + n - 1) % n, ((j + 1) * block) % n};
          std::sort(spec.destinations.begin(), spec.destinations.end());
          for (int d : spec.destinations) spec.stop_prob[d] = 1.0;
        }
        if (k == 1) {
          spec.select_default =
              dir == 0 ? SparseRow{{0, 0.8}, {1, 0.1}, {2, 0.1}} : SparseRow{{0, 0.1}, {1, 0.8}, {2, 0.1}};
        } else {
          for (int s : spec.applicable) {
            const int sub = s >> (k - 1);
            const int intended = h.require_policy(
                k - 1, "b" + std::to_string(k - 1) + "_" + std::to_string(sub) +
                           (dir == 0 ? "_cw" : "_ccw"));
            spec.select[s] = biased_child_row(h.applicable(k - 1, s), intended);
          }
        }
        level.push_back(std::move(spec));
      }
    }
    h.levels.push_back(std::move(level));
    h.finalize();
  }

  h.initial.clear();
  for (int s = 0; s < n; ++s) h.initial.emplace_back(s, 1.0 / n);
  h.finalize();
  return {std::move(h), std::move(regions)};
}

}  // namespace ahmm
