#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cnp/core.hpp"
#include "cnp/protocol.hpp"

namespace cnp {

struct Cell {
    int x = 0;
    int y = 0;

    bool operator==(const Cell&) const = default;
    auto operator<=>(const Cell&) const = default;
};

inline int manhattan(Cell a, Cell b) {
    return std::abs(a.x - b.x) + std::abs(a.y - b.y);
}

/// Bounded grid with walls, pursuing predators and evading preys. All
/// iteration is over ordered maps and all movement rules are tie-broken
/// lexically (N, E, S, W, stay), so stepping is fully deterministic.
/// N is +y and E is +x.
class GridWorld {
public:
    struct Prey {
        Cell cell;
        bool dangerous = false;
        std::optional<Cell> goal_cell;
        bool captured = false;
        bool escaped = false;

        bool alive() const { return !captured && !escaped; }
    };

    struct StepEvents {
        std::vector<std::pair<std::string, AgentId>> captures;  // (prey, predator)
        std::vector<std::string> escapes;
    };

    GridWorld(int width, int height, std::uint64_t rng_seed)
        : width_(width), height_(height), rng_seed_(rng_seed) {
        if (width < 2 || height < 2) {
            throw ConfigError("grid must be at least 2x2, got " + std::to_string(width) + "x" +
                              std::to_string(height));
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::uint64_t rng_seed() const { return rng_seed_; }

    bool in_bounds(Cell c) const {
        return c.x >= 0 && c.x < width_ && c.y >= 0 && c.y < height_;
    }

    void add_predator(const AgentId& id, Cell at) {
        require_in_bounds(at, "predator spawn");
        predators_[id] = at;
    }

    void add_prey(const std::string& id, Cell at, bool dangerous = false,
                  std::optional<Cell> goal = std::nullopt) {
        require_in_bounds(at, "prey spawn");
        if (goal) require_in_bounds(*goal, "prey goal");
        preys_[id] = Prey{at, dangerous, goal, false, false};
    }

    /// Points a predator at a prey. Reassigning replaces the old pursuit.
    void assign(const AgentId& predator, const std::string& prey) {
        if (!predators_.contains(predator)) {
            throw std::invalid_argument("assign: unknown predator '" + predator + "'");
        }
        if (!preys_.contains(prey)) {
            throw std::invalid_argument("assign: unknown prey '" + prey + "'");
        }
        assignments_[predator] = prey;
    }

    void unassign(const AgentId& predator) { assignments_.erase(predator); }

    std::optional<std::string> assignment(const AgentId& predator) const {
        auto it = assignments_.find(predator);
        if (it == assignments_.end()) return std::nullopt;
        return it->second;
    }

    Cell predator_cell(const AgentId& id) const { return predators_.at(id); }
    bool has_predator(const AgentId& id) const { return predators_.contains(id); }
    const Prey& prey(const std::string& id) const { return preys_.at(id); }
    bool has_prey(const std::string& id) const { return preys_.contains(id); }
    bool prey_alive(const std::string& id) const {
        auto it = preys_.find(id);
        return it != preys_.end() && it->second.alive();
    }
    const std::map<std::string, Prey>& preys() const { return preys_; }
    const std::map<AgentId, Cell>& predators() const { return predators_; }

    int step_count() const { return steps_; }

    /// Preys move once every this many steps; predators move every step.
    void set_prey_move_period(int period) {
        if (period < 1) throw ConfigError("prey move period must be >= 1");
        prey_move_period_ = period;
    }
    int prey_move_period() const { return prey_move_period_; }

    /// Advances one tick: assigned predators step toward their prey, then
    /// captures land, then (on its movement beat) each surviving prey steps.
    /// A prey reaching its goal cell escapes. Captured or escaped preys
    /// never reappear.
    StepEvents step() {
        StepEvents events;

        for (auto& [pid, cell] : predators_) {
            auto target = assignments_.find(pid);
            if (target == assignments_.end()) continue;
            auto prey_it = preys_.find(target->second);
            if (prey_it == preys_.end() || !prey_it->second.alive()) continue;
            cell = greedy_step(cell, prey_it->second.cell);
            if (cell == prey_it->second.cell) {
                prey_it->second.captured = true;
                events.captures.emplace_back(target->second, pid);
            }
        }

        steps_ += 1;
        if (steps_ % prey_move_period_ == 0) {
            for (auto& [qid, prey] : preys_) {
                if (!prey.alive()) continue;
                if (prey.goal_cell) {
                    prey.cell = goal_step(qid, prey);
                    if (prey.cell == *prey.goal_cell) {
                        prey.escaped = true;
                        events.escapes.push_back(qid);
                    }
                } else {
                    prey.cell = evade_step(qid, prey);
                }
            }
        }
        return events;
    }

private:
    void require_in_bounds(Cell c, std::string_view what) const {
        if (!in_bounds(c)) {
            throw ConfigError(std::string(what) + " (" + std::to_string(c.x) + "," +
                              std::to_string(c.y) + ") is outside the " + std::to_string(width_) +
                              "x" + std::to_string(height_) + " grid");
        }
    }

    static constexpr Cell kDirections[4] = {{0, 1}, {1, 0}, {0, -1}, {-1, 0}};  // N, E, S, W

    /// One greedy predator step: the first of N, E, S, W that strictly
    /// shrinks the distance. Walls only matter at the boundary and a
    /// shrinking move never leaves the grid.
    Cell greedy_step(Cell from, Cell to) const {
        int best = manhattan(from, to);
        if (best == 0) return from;
        for (Cell d : kDirections) {
            Cell next{from.x + d.x, from.y + d.y};
            if (!in_bounds(next)) continue;
            if (manhattan(next, to) < best) return next;
        }
        return from;
    }

    bool occupied_by_other_prey(const std::string& self, Cell c) const {
        for (const auto& [qid, prey] : preys_) {
            if (qid != self && prey.alive() && prey.cell == c) return true;
        }
        return false;
    }

    Cell goal_step(const std::string& self, const Prey& prey) const {
        int best = manhattan(prey.cell, *prey.goal_cell);
        for (Cell d : kDirections) {
            Cell next{prey.cell.x + d.x, prey.cell.y + d.y};
            if (!in_bounds(next) || occupied_by_other_prey(self, next)) continue;
            if (manhattan(next, *prey.goal_cell) < best) return next;
        }
        return prey.cell;
    }

    int min_predator_distance(Cell c) const {
        int best = width_ + height_;  // larger than any reachable distance
        for (const auto& [pid, cell] : predators_) {
            best = std::min(best, manhattan(c, cell));
        }
        return best;
    }

    /// Evasion: among N, E, S, W, stay (in that preference order) pick the
    /// move maximizing the distance to the nearest predator.
    Cell evade_step(const std::string& self, const Prey& prey) const {
        Cell best_cell = prey.cell;
        int best_score = -1;
        for (Cell d : kDirections) {
            Cell next{prey.cell.x + d.x, prey.cell.y + d.y};
            if (!in_bounds(next) || occupied_by_other_prey(self, next)) continue;
            int score = min_predator_distance(next);
            if (score > best_score) {
                best_score = score;
                best_cell = next;
            }
        }
        if (min_predator_distance(prey.cell) > best_score) best_cell = prey.cell;
        return best_cell;
    }

    int width_;
    int height_;
    std::uint64_t rng_seed_;
    int prey_move_period_ = 2;
    int steps_ = 0;
    std::map<AgentId, Cell> predators_;
    std::map<std::string, Prey> preys_;
    std::map<AgentId, std::string> assignments_;
};

/// Bid cost for chasing from one cell to another: plain Manhattan distance.
inline double bid_cost(const GridWorld& world, Cell predator, Cell prey) {
    if (!world.in_bounds(predator) || !world.in_bounds(prey)) {
        throw std::out_of_range("bid_cost: cell outside the grid");
    }
    return static_cast<double>(manhattan(predator, prey));
}

// ---------------------------------------------------------------------------
// Task targets name a prey and the cell it occupied when the task was
// (re)issued: "prey-2@7,9". Bids are priced against the stamped cell so
// every bidder prices the same information.
// ---------------------------------------------------------------------------

inline std::string make_target(const std::string& prey, Cell at) {
    return prey + "@" + std::to_string(at.x) + "," + std::to_string(at.y);
}

struct TargetRef {
    std::string prey;
    Cell cell;
};

inline TargetRef parse_target(std::string_view target) {
    std::size_t at = target.rfind('@');
    std::size_t comma = target.find(',', at == std::string_view::npos ? 0 : at);
    if (at == std::string_view::npos || comma == std::string_view::npos) {
        throw ParseError("malformed target '" + std::string(target) + "'");
    }
    TargetRef ref;
    ref.prey = std::string(target.substr(0, at));
    ref.cell.x = static_cast<int>(parse_u64(target.substr(at + 1, comma - at - 1), "target x"));
    ref.cell.y = static_cast<int>(parse_u64(target.substr(comma + 1), "target y"));
    return ref;
}

// ---------------------------------------------------------------------------
// Experiment scenario construction
// ---------------------------------------------------------------------------

struct ScenarioParams {
    int tasks = 5;
    int changes = 2;
    int contractors = 4;
    int grid_width = 10;
    int grid_height = 10;
    std::uint64_t seed = 42;
    /// Minimum spawn distance between any hunter and any prey. Placement
    /// relaxes it one cell at a time if the grid cannot honor it.
    int min_prey_distance = 10;
};

/// A planned mid-execution change: after the task has run for delay ticks,
/// retarget it (preferring the dangerous prey).
struct ChangeInjection {
    int task_index = 0;
    LogicalTime delay = 1;
};

struct ScenarioBuild {
    GridWorld world;
    AgentId manager_id;
    std::vector<AgentId> contractor_ids;
    std::vector<TaskSpec> tasks;            // targets name the prey; cells stamped at announce
    std::vector<std::string> task_preys;    // prey id per task
    std::vector<ChangeInjection> change_plan;  // ascending task_index, at most one per task
    std::string dangerous_prey;
};

namespace detail {

inline std::vector<Cell> cells_by_corner_distance(int width, int height) {
    std::vector<Cell> cells;
    cells.reserve(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) cells.push_back({x, y});
    }
    std::sort(cells.begin(), cells.end(), [](Cell a, Cell b) {
        int da = a.x + a.y, db = b.x + b.y;
        if (da != db) return da < db;
        if (a.x != b.x) return a.x < b.x;
        return a.y < b.y;
    });
    return cells;
}

}  // namespace detail

/// Builds the pursuit scenario: the manager sits in the origin corner, the
/// contractor pack spawns near it, preys spawn far away, and one prey per
/// task wants chasing. Prey 0 is the dangerous one changes point at. All
/// randomness comes from the seed.
inline ScenarioBuild build_experiment(const ScenarioParams& params) {
    if (params.tasks < 0) throw ConfigError("tasks must be >= 0");
    if (params.contractors < 0) throw ConfigError("contractors must be >= 0");
    if (params.changes < 0) throw ConfigError("changes must be >= 0");
    if (params.changes > params.tasks) {
        throw ConfigError("changes (" + std::to_string(params.changes) +
                          ") cannot exceed tasks (" + std::to_string(params.tasks) + ")");
    }

    ScenarioBuild build{GridWorld(params.grid_width, params.grid_height, params.seed),
                        "m0", {}, {}, {}, {}, "prey-0"};
    Rng rng(params.seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<Cell> ordered = detail::cells_by_corner_distance(params.grid_width,
                                                                 params.grid_height);
    if (ordered.size() < static_cast<std::size_t>(params.contractors) + 1) {
        throw ConfigError("grid too small for " + std::to_string(params.contractors) +
                          " contractors");
    }

    build.world.add_predator(build.manager_id, ordered.front());

    // Contractor pack: a seeded pick from the cells nearest the origin.
    std::size_t pool_size = std::min(ordered.size() - 1,
                                     std::max<std::size_t>(static_cast<std::size_t>(params.contractors) * 2, 8));
    std::vector<Cell> pool(ordered.begin() + 1, ordered.begin() + 1 + static_cast<long>(pool_size));
    rng.shuffle(pool);
    for (int i = 0; i < params.contractors; ++i) {
        AgentId id = "c" + std::to_string(i + 1);
        build.world.add_predator(id, pool[static_cast<std::size_t>(i)]);
        build.contractor_ids.push_back(id);
    }

    // Prey region: cells far from every hunter. Relax the distance floor
    // until there is room for every prey.
    std::vector<Cell> prey_cells;
    int d_min = params.min_prey_distance;
    while (true) {
        prey_cells.clear();
        for (auto it = ordered.rbegin(); it != ordered.rend(); ++it) {
            int nearest = params.grid_width + params.grid_height;
            for (const auto& [pid, cell] : build.world.predators()) {
                nearest = std::min(nearest, manhattan(*it, cell));
            }
            if (nearest >= d_min) prey_cells.push_back(*it);
        }
        if (prey_cells.size() >= static_cast<std::size_t>(params.tasks) || d_min <= 1) break;
        d_min -= 1;
    }
    if (prey_cells.size() < static_cast<std::size_t>(params.tasks)) {
        throw ConfigError("grid too small for " + std::to_string(params.tasks) + " preys");
    }
    rng.shuffle(prey_cells);

    int id_width = params.tasks >= 100 ? 3 : (params.tasks >= 10 ? 2 : 1);
    for (int k = 0; k < params.tasks; ++k) {
        std::string prey_id = "prey-" + std::to_string(k);
        build.world.add_prey(prey_id, prey_cells[static_cast<std::size_t>(k)], k == 0);

        std::string index = std::to_string(k + 1);
        while (static_cast<int>(index.size()) < id_width) index.insert(index.begin(), '0');
        TaskSpec task;
        task.task_id = "t" + index;
        task.name = "pursue-" + prey_id;
        task.abstraction = "chase " + prey_id + " until caught";
        task.bid_spec.required_capabilities = {"chase"};
        task.target = prey_id;  // cell stamped when announced
        build.tasks.push_back(std::move(task));
        build.task_preys.push_back(prey_id);
    }

    // Change plan: seeded distinct task indices, preferring tasks that do
    // not already chase the dangerous prey.
    std::vector<int> candidates;
    for (int k = 1; k < params.tasks; ++k) candidates.push_back(k);
    rng.shuffle(candidates);
    if (params.changes == params.tasks && params.tasks > 0) candidates.push_back(0);
    std::vector<int> chosen(candidates.begin(), candidates.begin() + params.changes);
    std::sort(chosen.begin(), chosen.end());
    for (int index : chosen) {
        ChangeInjection injection;
        injection.task_index = index;
        injection.delay = 1 + rng.below(3);
        build.change_plan.push_back(injection);
    }
    return build;
}

}  // namespace cnp
