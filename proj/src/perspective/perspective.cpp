#include "sbtom/perspective.hpp"

#include <algorithm>
#include <cmath>

#include "sbtom/ialm.hpp"

namespace sbtom::perspective {
namespace {

constexpr double kTieTolerance = 1e-12;

Belief rollout(const PerspectiveRequest& r) {
  return multi_step_pushforward(r.ego_belief, r.reference, r.hypothesized_actions);
}

Belief read_output(const bridge::BridgeSolution& s, const PerspectiveRequest& r) {
  if (r.output == OutputMode::Marginal) return s.marginals.at(r.output_index);
  const std::size_t n = s.marginals.size() - 1;
  std::vector<double> w(r.ego_belief.size(), 0.0);
  for (std::size_t t = 1; t <= n; ++t) {
    for (std::size_t x = 0; x < w.size(); ++x) w[x] += s.marginals[t][x] / static_cast<double>(n);
  }
  return Belief::from_weights(r.ego_belief.space(), std::move(w));
}

}  // namespace

const char* estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::SbBridge:
      return "SB_BRIDGE";
    case EstimatorKind::PerfectInfo:
      return "PERFECT_INFO";
    case EstimatorKind::NoInfo:
      return "NO_INFO";
    case EstimatorKind::ReferenceRollout:
      return "REFERENCE_ROLLOUT";
  }
  return "?";
}

std::optional<EstimatorKind> parse_estimator(const std::string& name) {
  for (EstimatorKind k : kAllEstimators) {
    if (name == estimator_name(k)) return k;
  }
  return std::nullopt;
}

void PerspectiveRequest::validate() const {
  const std::size_t nx = reference.num_states();
  if (ego_belief.size() != nx) throw DimensionMismatch("ego belief and reference kernel sizes differ");
  if (endpoint_anchor && endpoint_anchor->size() != nx) {
    throw DimensionMismatch("endpoint anchor and reference kernel sizes differ");
  }
  if (observed_other && *observed_other >= nx) throw InvalidArgument("observed state out of range");
  if (hypothesized_actions.empty()) throw InvalidArgument("at least one hypothesized action is required");
  for (std::size_t a : hypothesized_actions) {
    if (a >= reference.num_actions()) throw InvalidArgument("hypothesized action out of range");
  }
  if (!(endpoint_smoothing >= 0.0 && endpoint_smoothing < 1.0)) {
    throw InvalidArgument("endpoint smoothing must lie in [0, 1)");
  }
  if (output_index > hypothesized_actions.size()) throw InvalidArgument("output index exceeds the horizon");
  if (max_iters == 0 || !(tolerance > 0.0)) throw InvalidArgument("solver budget must be positive");
}

Belief smoothed_endpoint(const Belief& anchor, const Belief& ego, const Kernel& reference,
                         std::span<const std::size_t> actions, double smoothing) {
  std::vector<double> w(anchor.size());
  if (smoothing > 0.0) {
    const Belief image = multi_step_pushforward(ego, reference, actions);
    const auto support = image.support();
    for (std::size_t x : support) w[x] = smoothing / static_cast<double>(support.size());
  }
  for (std::size_t x = 0; x < w.size(); ++x) w[x] += (1.0 - smoothing) * anchor[x];
  return Belief::from_weights(anchor.space(), std::move(w));
}

std::optional<double> next_smoothing(double smoothing) {
  if (smoothing >= kMaxSmoothing) return std::nullopt;
  if (smoothing <= 0.0) return kDefaultSmoothing;
  return std::min(smoothing * 10.0, kMaxSmoothing);
}

ShiftResult shift_detailed(const PerspectiveRequest& request) {
  request.validate();
  std::optional<Belief> anchor;
  if (request.observed_other) {
    anchor = Belief::delta(request.ego_belief.space(), *request.observed_other);
  } else if (request.endpoint_anchor) {
    anchor = request.endpoint_anchor;
  }
  ShiftResult out{rollout(request), std::nullopt, true, request.endpoint_smoothing, 0, 0};
  if (!anchor) return out;

  std::optional<double> eps = request.endpoint_smoothing;
  while (eps) {
    ++out.attempts;
    bridge::BridgeProblem p{request.reference, request.hypothesized_actions, request.ego_belief,
                            smoothed_endpoint(*anchor, request.ego_belief, request.reference,
                                              request.hypothesized_actions, *eps),
                            request.max_iters, request.tolerance};
    try {
      const bridge::BridgeSolution s = bridge::solve_bridge(p);
      out.belief = read_output(s, request);
      out.endpoint = std::move(p.end);
      out.fell_back = false;
      out.smoothing_used = *eps;
      out.iterations = s.iterations_used;
      return out;
    } catch (const bridge::UnreachableEndpoint&) {
    } catch (const bridge::NoConvergence&) {
    } catch (const bridge::InconsistentPotentials&) {
    }
    out.smoothing_used = *eps;
    eps = next_smoothing(*eps);
  }
  return out;
}

Belief shift(const PerspectiveRequest& request) { return shift_detailed(request).belief; }

std::vector<std::size_t> propose_actions(const Belief& ego, std::optional<std::size_t> observed, std::size_t n,
                                         const Kernel& reference, std::span<const double> cost) {
  const std::size_t nx = reference.num_states();
  if (n == 0) throw InvalidArgument("proposal horizon must be at least one");
  if (ego.size() != nx || cost.size() != nx) throw DimensionMismatch("proposal inputs disagree in size");
  if (observed && *observed >= nx) throw InvalidArgument("observed state out of range");
  std::size_t s = observed ? *observed : ego.argmax();
  std::vector<std::size_t> plan;
  plan.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::size_t best = 0;
    double best_cost = 0.0;
    for (std::size_t a = 0; a < reference.num_actions(); ++a) {
      double c = 0.0;
      for (std::size_t y = 0; y < nx; ++y) {
        const double p = reference(a, s, y);
        if (p > 0.0) c += p * cost[y];
      }
      if (a == 0 || c < best_cost - kTieTolerance * std::max(1.0, std::abs(best_cost))) {
        best = a;
        best_cost = c;
      }
    }
    plan.push_back(best);
    const auto row = reference.matrix(best).row(s);
    s = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return plan;
}

Estimate estimate(EstimatorKind kind, const PerspectiveRequest& request, const grid::GridState& truth,
                  const grid::GridConfig& config) {
  switch (kind) {
    case EstimatorKind::SbBridge: {
      ShiftResult r = shift_detailed(request);
      return {std::move(r.belief), r.fell_back};
    }
    case EstimatorKind::PerfectInfo:
      return {grid::true_other_belief(truth, config), false};
    case EstimatorKind::NoInfo:
      return {Belief::uniform(request.ego_belief.space()), false};
    case EstimatorKind::ReferenceRollout:
      request.validate();
      return {rollout(request), false};
  }
  throw InvalidArgument("unknown estimator kind");
}

Kernel action_averaged(const Kernel& reference) {
  const std::size_t nx = reference.num_states();
  Matrix m(nx, nx);
  const double w = 1.0 / static_cast<double>(reference.num_actions());
  for (std::size_t a = 0; a < reference.num_actions(); ++a) {
    for (std::size_t x = 0; x < nx; ++x) {
      for (std::size_t y = 0; y < nx; ++y) m(x, y) += w * reference(a, x, y);
    }
  }
  return Kernel(reference.space(), ActionSpace({"any"}), {std::move(m)});
}

GoalPosterior::GoalPosterior(const grid::World& world) : world_(&world) { reset(); }

void GoalPosterior::reset() {
  const std::size_t g = world_->config().goals.size();
  probs_.assign(g, 1.0 / static_cast<double>(g));
}

void GoalPosterior::observe_move(grid::Cell from, grid::Cell to) {
  const grid::GridConfig& c = world_->config();
  std::vector<double> w(probs_.size());
  double total = 0.0;
  for (std::size_t g = 0; g < probs_.size(); ++g) {
    const auto p = grid::leader_action_probs(c, world_->goal_distance(g), from);
    double like = 0.0;
    for (std::size_t a = 0; a < grid::kNumActions; ++a) {
      if (grid::moved(from, a) == to) like += p[a];
    }
    w[g] = probs_[g] * like;
    total += w[g];
  }
  if (!(total > 0.0)) return;
  for (std::size_t g = 0; g < w.size(); ++g) probs_[g] = w[g] / total;
}

std::size_t GoalPosterior::map_goal() const {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

std::vector<double> GoalPosterior::cost() const {
  const auto& d = world_->goal_distance(map_goal());
  const double unreachable = 2.0 * static_cast<double>(d.size());
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] < 0 ? unreachable : static_cast<double>(d[i]);
  return out;
}

Kernel grid_reference(const grid::GridConfig& config) {
  const grid::Dynamics d = grid::tabular_dynamics(config);
  const Kernel local = ialm::local_reference_from_global(d.model, d.policies,
                                                         static_cast<std::size_t>(config.max_length));
  std::vector<Matrix> table;
  for (std::size_t a = 0; a < local.num_actions(); ++a) table.push_back(local.matrix(a));
  return Kernel(StateSpace(config.num_cells()), grid::action_space(), std::move(table));
}

OtherTracker::OtherTracker(const grid::World& world, Kernel reference, TrackerSettings settings)
    : world_(&world),
      reference_(std::move(reference)),
      averaged_(action_averaged(reference_)),
      settings_(settings),
      ego_(Belief::uniform(reference_.space())),
      goals_(world) {
  if (reference_.num_states() != world.config().num_cells()) {
    throw DimensionMismatch("reference kernel does not cover the grid cells");
  }
  if (settings_.horizon == 0) throw InvalidArgument("perspective horizon must be at least one");
  if (settings_.output_index > settings_.horizon) throw InvalidArgument("output index exceeds the horizon");
  if (!(settings_.endpoint_smoothing >= 0.0 && settings_.endpoint_smoothing < 1.0)) {
    throw InvalidArgument("endpoint smoothing must lie in [0, 1)");
  }
}

void OtherTracker::condition(grid::Cell follower, const grid::Observation& observation) {
  const grid::GridConfig& c = world_->config();
  std::vector<double> w(ego_.size());
  double total = 0.0;
  for (std::size_t x = 0; x < w.size(); ++x) {
    const grid::Cell cell = c.cell(x);
    const bool seen = grid::leader_visible(c, follower, cell);
    double like;
    if (observation.leader_visible) {
      like = c.index({follower.x + observation.offset->dx, follower.y + observation.offset->dy}) == x ? 1.0 : 0.0;
    } else {
      like = seen ? 0.0 : 1.0;
    }
    w[x] = ego_[x] * like;
    total += w[x];
  }
  if (!(total > 0.0)) {
    // The motion prior ruled the observation out; restart from the observation alone.
    for (std::size_t x = 0; x < w.size(); ++x) {
      const grid::Cell cell = c.cell(x);
      if (observation.leader_visible) {
        w[x] = c.index({follower.x + observation.offset->dx, follower.y + observation.offset->dy}) == x;
      } else {
        w[x] = c.is_free(cell) && !grid::leader_visible(c, follower, cell);
      }
    }
  }
  ego_ = Belief::from_weights(ego_.space(), std::move(w));

  const std::optional<std::size_t> before = observed_;
  if (observation.leader_visible) {
    const grid::Cell leader{follower.x + observation.offset->dx, follower.y + observation.offset->dy};
    if (before && since_seen_ == 0) goals_.observe_move(c.cell(*before), leader);
    observed_ = c.index(leader);
    last_seen_ = leader;
    anchor_.reset();
    since_seen_ = 0;
  } else {
    observed_.reset();
    if (last_seen_) {
      ++since_seen_;
      anchor_ = push_forward(anchor_ ? *anchor_ : Belief::delta(ego_.space(), c.index(*last_seen_)), averaged_, 0);
    }
  }
}

void OtherTracker::reset(const grid::GridState& initial) {
  const grid::GridConfig& c = world_->config();
  std::vector<double> w(c.num_cells(), 0.0);
  for (std::size_t x = 0; x < w.size(); ++x) w[x] = c.is_free(c.cell(x)) ? 1.0 : 0.0;
  ego_ = Belief::from_weights(StateSpace(c.num_cells()), std::move(w));
  goals_.reset();
  observed_.reset();
  last_seen_.reset();
  anchor_.reset();
  since_seen_ = 0;
  condition(initial.follower, grid::observe(c, initial));
}

void OtherTracker::update(const grid::GridState& now, const grid::Observation& observation) {
  ego_ = push_forward(ego_, averaged_, 0);
  condition(now.follower, observation);
}

PerspectiveRequest OtherTracker::request() const {
  PerspectiveRequest r{ego_,
                       observed_,
                       std::nullopt,
                       propose_actions(ego_, observed_, settings_.horizon, reference_, goals_.cost()),
                       reference_,
                       settings_.endpoint_smoothing,
                       settings_.output_index,
                       settings_.output,
                       settings_.max_iters,
                       settings_.tolerance};
  if (!observed_ && anchor_ && since_seen_ <= settings_.anchor_patience) r.endpoint_anchor = anchor_;
  return r;
}

Estimate OtherTracker::estimate(EstimatorKind kind, const grid::GridState& truth) const {
  switch (kind) {
    case EstimatorKind::PerfectInfo:
      return {grid::true_other_belief(truth, world_->config()), false};
    case EstimatorKind::NoInfo:
      return {Belief::uniform(ego_.space()), false};
    default:
      return perspective::estimate(kind, request(), truth, world_->config());
  }
}

}  // namespace sbtom::perspective
