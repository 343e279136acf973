#include "sbtom/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <ostream>
#include <set>

namespace sbtom::grid {
namespace {

constexpr std::size_t kMoves[] = {kUp, kDown, kLeft, kRight};

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument("grid config: " + what);
}

std::vector<std::size_t> legal_actions(const GridConfig& c, Cell from) {
  std::vector<std::size_t> out{kStay};
  for (std::size_t a : kMoves) {
    if (c.is_free(moved(from, a))) out.push_back(a);
  }
  return out;
}

std::vector<std::size_t> greedy_actions(const GridConfig& c, const std::vector<int>& dist, Cell from) {
  const auto legal = legal_actions(c, from);
  int best = -1;
  std::vector<std::size_t> out;
  for (std::size_t a : legal) {
    const int d = dist[c.index(moved(from, a))];
    if (d < 0) continue;
    if (best < 0 || d < best) {
      best = d;
      out.clear();
    }
    if (d == best) out.push_back(a);
  }
  return out.empty() ? legal : out;
}

std::size_t pick(const std::vector<std::size_t>& options, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, options.size() - 1);
  return options[d(rng)];
}

bool follower_blocked(const GridConfig& c, Cell target, Cell leader_next) {
  if (!c.is_free(target)) return true;
  return target == leader_next && !c.is_goal_candidate(target);
}

}  // namespace

const char* action_name(std::size_t a) {
  static const char* names[] = {"STAY", "UP", "DOWN", "LEFT", "RIGHT"};
  return a < kNumActions ? names[a] : "?";
}

ActionSpace action_space() { return ActionSpace({"STAY", "UP", "DOWN", "LEFT", "RIGHT"}); }

Cell moved(Cell c, std::size_t action) {
  switch (action) {
    case kUp:
      return {c.x, c.y - 1};
    case kDown:
      return {c.x, c.y + 1};
    case kLeft:
      return {c.x - 1, c.y};
    case kRight:
      return {c.x + 1, c.y};
    default:
      return c;
  }
}

int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }
int chebyshev(Cell a, Cell b) { return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)); }

bool GridConfig::is_wall(Cell c) const { return std::find(walls.begin(), walls.end(), c) != walls.end(); }

bool GridConfig::is_goal_candidate(Cell c) const {
  return std::find(goals.begin(), goals.end(), c) != goals.end();
}

void GridConfig::validate() const {
  require(width > 0 && height > 0, "width and height must be positive");
  for (Cell w : walls) require(in_bounds(w), "wall outside the grid");
  require(!goals.empty(), "at least one goal cell is required");
  require(std::set<Cell>(goals.begin(), goals.end()).size() == goals.size(), "goal cells must be distinct");
  require(is_free(leader_start), "leader start must be a free in-bounds cell");
  require(is_free(follower_start), "follower start must be a free in-bounds cell");
  require(leader_start != follower_start, "leader and follower must start apart");
  for (Cell g : goals) {
    require(is_free(g), "goal must be a free in-bounds cell");
    require(g != leader_start && g != follower_start, "goal must differ from the start cells");
  }
  require(view_radius >= 0, "view radius must be non-negative");
  require(proximity_distance > 0 && far_distance > 0 && far_patience > 0 && max_length > 0,
          "thresholds must be positive");
  require(collision_limit >= 0, "collision limit must be non-negative");
  require(std::isfinite(weights.proximity) && std::isfinite(weights.visibility) && std::isfinite(weights.goal) &&
              std::isfinite(weights.collision),
          "reward weights must be finite");
  require(leader_noise >= 0.0 && leader_noise <= 1.0, "leader noise must lie in [0, 1]");
  for (Cell g : goals) {
    require(distance_map(*this, g)[index(leader_start)] >= 0, "every goal must be reachable by the leader");
  }
}

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::None:
      return "NONE";
    case Termination::Goal:
      return "GOAL";
    case Termination::CollisionLimit:
      return "COLLISION_LIMIT";
    case Termination::TruncatedFar:
      return "TRUNCATED_FAR";
    case Termination::TruncatedLength:
      return "TRUNCATED_LENGTH";
  }
  return "?";
}

bool leader_visible(const GridConfig& config, Cell follower, Cell leader) {
  return chebyshev(follower, leader) <= config.view_radius;
}

Observation observe(const GridConfig& config, const GridState& state) {
  Observation o;
  const int r = config.view_radius;
  o.radius = r;
  o.window.reserve(static_cast<std::size_t>((2 * r + 1) * (2 * r + 1)));
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const Cell c{state.follower.x + dx, state.follower.y + dy};
      if (!config.in_bounds(c)) {
        o.window.push_back(Occupancy::OutOfBounds);
      } else if (c == state.leader) {
        o.window.push_back(Occupancy::Leader);
      } else if (config.is_wall(c)) {
        o.window.push_back(Occupancy::Wall);
      } else {
        o.window.push_back(Occupancy::Free);
      }
    }
  }
  o.leader_visible = leader_visible(config, state.follower, state.leader);
  if (o.leader_visible) o.offset = Offset{state.leader.x - state.follower.x, state.leader.y - state.follower.y};
  return o;
}

std::vector<int> distance_map(const GridConfig& config, Cell target) {
  std::vector<int> dist(config.num_cells(), -1);
  if (!config.is_free(target)) return dist;
  std::deque<Cell> queue{target};
  dist[config.index(target)] = 0;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (std::size_t a : kMoves) {
      const Cell n = moved(c, a);
      if (!config.is_free(n) || dist[config.index(n)] >= 0) continue;
      dist[config.index(n)] = dist[config.index(c)] + 1;
      queue.push_back(n);
    }
  }
  return dist;
}

std::vector<double> leader_action_probs(const GridConfig& config, const std::vector<int>& goal_distance,
                                        Cell leader) {
  std::vector<double> p(kNumActions, 0.0);
  const auto legal = legal_actions(config, leader);
  const auto greedy = greedy_actions(config, goal_distance, leader);
  const double eps = config.leader_noise;
  for (std::size_t a : legal) p[a] += eps / static_cast<double>(legal.size());
  for (std::size_t a : greedy) p[a] += (1.0 - eps) / static_cast<double>(greedy.size());
  return p;
}

World::World(GridConfig config) : config_(std::move(config)) {
  config_.validate();
  for (Cell g : config_.goals) goal_distance_.push_back(distance_map(config_, g));
}

GridState World::initial_state(std::size_t goal) const {
  if (goal >= config_.goals.size()) throw InvalidArgument("goal index out of range");
  GridState s;
  s.leader = config_.leader_start;
  s.follower = config_.follower_start;
  s.goal = goal;
  return s;
}

GridState World::reset(std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> d(0, config_.goals.size() - 1);
  return initial_state(d(rng));
}

bool World::transition(GridState& state, std::size_t action, std::mt19937_64& rng) const {
  if (action >= kNumActions) throw InvalidArgument("follower action out of range");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double draw = u(rng);
  const std::size_t la = draw < config_.leader_noise
                             ? pick(legal_actions(config_, state.leader), rng)
                             : pick(greedy_actions(config_, goal_distance_[state.goal], state.leader), rng);
  state.leader = moved(state.leader, la);

  if (action == kStay) return false;
  const Cell target = moved(state.follower, action);
  if (follower_blocked(config_, target, state.leader)) return true;
  state.follower = target;
  return false;
}

double World::reward(const GridState& prev, std::size_t action, const GridState& next) const {
  const auto& w = config_.weights;
  const bool collided = action != kStay && next.follower == prev.follower;
  double r = 0.0;
  if (manhattan(next.follower, next.leader) <= config_.proximity_distance) r += w.proximity;
  if (leader_visible(config_, next.follower, next.leader)) r += w.visibility;
  if (collided) r -= w.collision;
  if (next.follower == config_.goals[next.goal]) r += w.goal;
  return r;
}

StepResult World::step(const GridState& state, std::size_t action, std::mt19937_64& rng) const {
  if (state.done()) throw UsageError("step() called on a finished episode");
  StepResult out;
  out.state = state;
  GridState& s = out.state;
  out.collision = transition(s, action, rng);
  s.step += 1;
  if (out.collision) s.collisions += 1;
  s.far_count = manhattan(s.follower, s.leader) > config_.far_distance ? s.far_count + 1 : 0;
  out.reward = reward(state, action, s);

  if (s.follower == config_.goals[s.goal]) {
    s.cause = Termination::Goal;
  } else if (config_.collision_limit > 0 && s.collisions >= config_.collision_limit) {
    s.cause = Termination::CollisionLimit;
  } else if (s.far_count >= config_.far_patience) {
    s.cause = Termination::TruncatedFar;
  } else if (s.step >= config_.max_length) {
    s.cause = Termination::TruncatedLength;
  }
  out.cause = s.cause;
  out.done = s.done();
  out.observation = observe(config_, s);
  return out;
}

Dynamics tabular_dynamics(const GridConfig& config) {
  config.validate();
  const std::size_t n = config.num_cells();
  if (n > kMaxTabularCells) {
    throw ialm::ModelTooLarge("grid has " + std::to_string(n) + " cells; tabular dynamics support at most " +
                              std::to_string(kMaxTabularCells));
  }
  using namespace ialm;
  const std::size_t ng = config.goals.size();
  const bool with_goal = ng > 1;
  std::vector<Factor> factors;
  std::vector<std::vector<double>> initial;

  if (with_goal) {
    Factor g;
    g.name = "goal";
    g.cardinality = ng;
    g.role = Role::NonLocal;
    g.parents = {0};
    g.cpt = Matrix::identity(ng);
    factors.push_back(std::move(g));
    initial.emplace_back(ng, 1.0 / static_cast<double>(ng));
  }
  const std::size_t li = factors.size();

  Factor leader;
  leader.name = "leader";
  leader.cardinality = n;
  leader.role = Role::InfluenceSource;
  leader.parents = {li};
  leader.agent_parents = {0};
  leader.cpt = Matrix(n * kNumActions, n);
  for (std::size_t c = 0; c < n; ++c) {
    const Cell from = config.cell(c);
    for (std::size_t a = 0; a < kNumActions; ++a) {
      const Cell to = moved(from, a);
      leader.cpt(c * kNumActions + a, config.is_free(to) && config.is_free(from) ? config.index(to) : c) = 1.0;
    }
  }
  factors.push_back(std::move(leader));
  std::vector<double> lstart(n, 0.0);
  lstart[config.index(config.leader_start)] = 1.0;
  initial.push_back(std::move(lstart));

  Factor follower;
  follower.name = "follower";
  follower.cardinality = n;
  follower.role = Role::Local;
  follower.parents = {li + 1};
  follower.next_parents = {li};
  follower.uses_action = true;
  follower.cpt = Matrix(n * n * kNumActions, n);
  for (std::size_t f = 0; f < n; ++f) {
    const Cell from = config.cell(f);
    for (std::size_t l = 0; l < n; ++l) {
      for (std::size_t a = 0; a < kNumActions; ++a) {
        std::size_t to = f;
        if (a != kStay && config.is_free(from)) {
          const Cell target = moved(from, a);
          if (!follower_blocked(config, target, config.cell(l))) to = config.index(target);
        }
        follower.cpt((f * n + l) * kNumActions + a, to) = 1.0;
      }
    }
  }
  factors.push_back(std::move(follower));
  std::vector<double> fstart(n, 0.0);
  fstart[config.index(config.follower_start)] = 1.0;
  initial.push_back(std::move(fstart));

  ExternalAgent agent{"leader_policy", kNumActions, with_goal ? std::vector<std::size_t>{li, 0}
                                                              : std::vector<std::size_t>{li}};
  Matrix policy(n * ng, kNumActions);
  for (std::size_t g = 0; g < ng; ++g) {
    const auto dist = distance_map(config, config.goals[g]);
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t row = with_goal ? c * ng + g : c;
      const Cell from = config.cell(c);
      if (!config.is_free(from)) {
        policy(row, kStay) = 1.0;
        continue;
      }
      const auto p = leader_action_probs(config, dist, from);
      for (std::size_t a = 0; a < kNumActions; ++a) policy(row, a) = p[a];
    }
  }
  GlobalModel model(std::move(factors), action_space(), {agent}, std::move(initial));
  return {std::move(model), {std::move(policy)}};
}

std::size_t global_index(const GridConfig& config, const GridState& state) {
  const std::size_t n = config.num_cells();
  const std::size_t l = config.index(state.leader);
  const std::size_t f = config.index(state.follower);
  if (config.goals.size() > 1) return (state.goal * n + l) * n + f;
  return l * n + f;
}

Belief true_other_belief(const GridState& state, const GridConfig& config) {
  return Belief::delta(StateSpace(config.num_cells()), config.index(state.leader));
}

std::string episode_columns() {
  return "# episode step action reward follower_x follower_y leader_x leader_y goal far_count collisions "
         "leader_visible offset_dx offset_dy cause";
}

void write_episode(std::ostream& os, std::size_t episode, const EpisodeRecord& record) {
  char buf[64];
  for (std::size_t t = 0; t < record.steps.size(); ++t) {
    const StepRecord& r = record.steps[t];
    const GridState& s = r.state;
    std::snprintf(buf, sizeof buf, "%.17g", r.reward);
    os << episode << ' ' << t << ' ' << action_name(r.action) << ' ' << buf << ' ' << s.follower.x << ' '
       << s.follower.y << ' ' << s.leader.x << ' ' << s.leader.y << ' ' << s.goal << ' ' << s.far_count << ' '
       << s.collisions << ' ' << (r.observation.leader_visible ? 1 : 0) << ' ';
    if (r.observation.offset) {
      os << r.observation.offset->dx << ' ' << r.observation.offset->dy;
    } else {
      os << "- -";
    }
    os << ' ' << termination_name(s.cause) << '\n';
  }
}

std::string render(const GridConfig& config, const GridState& state) {
  std::string out;
  const Cell goal = config.goals[state.goal];
  for (int y = 0; y < config.height; ++y) {
    for (int x = 0; x < config.width; ++x) {
      const Cell c{x, y};
      char ch = '.';
      if (config.is_wall(c)) ch = '#';
      if (c == goal) ch = 'G';
      if (c == state.leader) ch = 'L';
      if (c == state.follower) ch = c == state.leader ? '*' : 'F';
      out += ch;
    }
    out += '\n';
  }
  return out;
}

}  // namespace sbtom::grid
