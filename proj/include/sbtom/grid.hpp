#pragma once

// Two-agent person-following gridworld.
//
// A leader walks greedily (shortest path, uniform tie-breaking) toward a goal
// cell hidden from the follower; with probability leader_noise it instead
// takes a uniformly chosen legal move. The follower moves after the leader.
// A follower move is blocked, and counts as a collision, when it would leave
// the grid, enter a wall, or enter the leader's new cell (cells in the goal
// set are exempt, so the follower can always join the leader on the goal).
//
// Cell indices are row-major: index = y * width + x, with y growing downward.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sbtom/belief.hpp"
#include "sbtom/ialm.hpp"

namespace sbtom::grid {

enum Action : std::size_t { kStay = 0, kUp = 1, kDown = 2, kLeft = 3, kRight = 4 };
inline constexpr std::size_t kNumActions = 5;

const char* action_name(std::size_t a);
ActionSpace action_space();

struct Cell {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

Cell moved(Cell c, std::size_t action);
int manhattan(Cell a, Cell b);
int chebyshev(Cell a, Cell b);

struct RewardWeights {
  double proximity = 0.05;
  double visibility = 0.02;
  double goal = 1.0;
  double collision = 0.1;
};

struct GridConfig {
  int width = 7;
  int height = 7;
  std::vector<Cell> walls;
  /// Candidate goal cells; each episode draws one uniformly.
  std::vector<Cell> goals{{0, 0}, {6, 0}, {0, 6}, {6, 6}};
  Cell leader_start{3, 3};
  Cell follower_start{3, 4};
  int view_radius = 2;
  RewardWeights weights;
  int proximity_distance = 2;
  int far_distance = 4;
  int far_patience = 8;
  int max_length = 100;
  /// Episode ends once this many collisions have occurred; 0 disables.
  int collision_limit = 10;
  double leader_noise = 0.1;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument on any violated invariant.
  void validate() const;

  std::size_t num_cells() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  bool is_wall(Cell c) const;
  bool is_free(Cell c) const { return in_bounds(c) && !is_wall(c); }
  bool is_goal_candidate(Cell c) const;
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y * width + c.x); }
  Cell cell(std::size_t index) const {
    return {static_cast<int>(index % static_cast<std::size_t>(width)),
            static_cast<int>(index / static_cast<std::size_t>(width))};
  }
};

enum class Termination { None, Goal, CollisionLimit, TruncatedFar, TruncatedLength };
const char* termination_name(Termination t);

struct GridState {
  Cell leader;
  Cell follower;
  /// Index into GridConfig::goals.
  std::size_t goal = 0;
  int step = 0;
  int far_count = 0;
  int collisions = 0;
  Termination cause = Termination::None;

  bool done() const { return cause != Termination::None; }
  friend bool operator==(const GridState&, const GridState&) = default;
};

enum class Occupancy : std::uint8_t { Free = 0, Wall = 1, Leader = 2, OutOfBounds = 3 };

struct Offset {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

struct Observation {
  int radius = 0;
  /// (2r+1)^2 codes, row-major, centered on the follower.
  std::vector<Occupancy> window;
  bool leader_visible = false;
  /// Leader position minus follower position; present iff visible.
  std::optional<Offset> offset;

  friend bool operator==(const Observation&, const Observation&) = default;
};

Observation observe(const GridConfig& config, const GridState& state);
bool leader_visible(const GridConfig& config, Cell follower, Cell leader);

/// Shortest-path distances to `target` over free cells; -1 marks unreachable.
std::vector<int> distance_map(const GridConfig& config, Cell target);

/// Leader move distribution for (leader cell, goal): probability of each action.
/// Blocked directions never receive mass.
std::vector<double> leader_action_probs(const GridConfig& config, const std::vector<int>& goal_distance,
                                        Cell leader);

struct StepResult {
  GridState state;
  Observation observation;
  double reward = 0.0;
  bool done = false;
  Termination cause = Termination::None;
  bool collision = false;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

/// Precomputed per-config tables (goal distance maps).
class World {
 public:
  explicit World(GridConfig config);

  const GridConfig& config() const noexcept { return config_; }
  const std::vector<int>& goal_distance(std::size_t goal) const { return goal_distance_.at(goal); }

  GridState initial_state(std::size_t goal) const;
  GridState reset(std::mt19937_64& rng) const;

  /// Leader then follower move, without counters or termination.
  /// Returns whether the follower's move was blocked.
  bool transition(GridState& state, std::size_t action, std::mt19937_64& rng) const;

  /// One episode step. Throws UsageError on a finished episode.
  StepResult step(const GridState& state, std::size_t action, std::mt19937_64& rng) const;

  /// Reward of the move prev -> next under `action`; collisions are inferred
  /// from an unchanged follower cell under a non-STAY action.
  double reward(const GridState& prev, std::size_t action, const GridState& next) const;

 private:
  GridConfig config_;
  std::vector<std::vector<int>> goal_distance_;
};

/// Exact global model: factors goal (nonlocal, only with several candidate
/// goals), leader (influence source), follower (local).
struct Dynamics {
  ialm::GlobalModel model;
  ialm::Policies policies;
};
inline constexpr std::size_t kMaxTabularCells = 64;
Dynamics tabular_dynamics(const GridConfig& config);

/// Global state index of a GridState within tabular_dynamics(config).
std::size_t global_index(const GridConfig& config, const GridState& state);

/// Delta at the leader's true cell.
Belief true_other_belief(const GridState& state, const GridConfig& config);

struct StepRecord {
  Observation observation;
  std::size_t action = 0;
  double reward = 0.0;
  GridState state;
};

struct EpisodeRecord {
  GridState initial;
  std::vector<StepRecord> steps;
  Termination cause = Termination::None;
  double total_return = 0.0;
};

/// Header line describing the columns written by write_episode.
std::string episode_columns();
/// One line per step: episode step action reward fx fy lx ly goal far collisions visible dx dy cause.
void write_episode(std::ostream& os, std::size_t episode, const EpisodeRecord& record);

/// Character dump: '#' wall, 'L' leader, 'F' follower, 'G' goal, '.' free.
std::string render(const GridConfig& config, const GridState& state);

}  // namespace sbtom::grid
