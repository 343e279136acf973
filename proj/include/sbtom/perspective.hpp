#pragma once

// Other-agent belief estimates b_i for the follower policy.
//
// shift() bridges the follower's belief b_0 about the leader to an endpoint
// built around the observed leader state and reads off one bridge marginal.
// The baselines are the true leader cell, a uniform belief, and an open-loop
// pushforward of b_0 under the hypothesized leader actions.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sbtom/belief.hpp"
#include "sbtom/bridge.hpp"
#include "sbtom/grid.hpp"

namespace sbtom::perspective {

enum class EstimatorKind { SbBridge, PerfectInfo, NoInfo, ReferenceRollout };
inline constexpr EstimatorKind kAllEstimators[] = {EstimatorKind::SbBridge, EstimatorKind::PerfectInfo,
                                                   EstimatorKind::NoInfo, EstimatorKind::ReferenceRollout};

/// SB_BRIDGE, PERFECT_INFO, NO_INFO, REFERENCE_ROLLOUT.
const char* estimator_name(EstimatorKind kind);
std::optional<EstimatorKind> parse_estimator(const std::string& name);

enum class OutputMode {
  /// The bridge marginal p_k.
  Marginal,
  /// Mean of p_1..p_n.
  Average,
};

inline constexpr double kDefaultSmoothing = 1e-3;
inline constexpr double kMaxSmoothing = 0.5;
inline constexpr std::size_t kDefaultHorizon = 4;
inline constexpr std::size_t kDefaultOutputIndex = 1;

struct PerspectiveRequest {
  Belief ego_belief;
  std::optional<std::size_t> observed_other;
  /// Endpoint centre used when observed_other is absent (an aged last sighting).
  std::optional<Belief> endpoint_anchor;
  std::vector<std::size_t> hypothesized_actions;
  Kernel reference;
  double endpoint_smoothing = kDefaultSmoothing;
  std::size_t output_index = kDefaultOutputIndex;
  OutputMode output = OutputMode::Marginal;
  std::size_t max_iters = bridge::kDefaultMaxIters;
  double tolerance = bridge::kDefaultTolerance;

  /// Throws InvalidArgument / DimensionMismatch.
  void validate() const;
};

struct ShiftResult {
  Belief belief;
  /// The endpoint of the last successful solve (empty on fallback).
  std::optional<Belief> endpoint;
  /// True when the estimate is the reference rollout instead of a bridge marginal.
  bool fell_back = false;
  double smoothing_used = 0.0;
  std::size_t attempts = 0;
  std::size_t iterations = 0;
};

/// (1 - eps) anchor + eps Uniform(image), where image is the support of the
/// n-step pushforward of b_0.
Belief smoothed_endpoint(const Belief& anchor, const Belief& ego, const Kernel& reference,
                         std::span<const std::size_t> actions, double smoothing);

/// Next rung of the smoothing ladder, or nullopt once the cap was tried.
std::optional<double> next_smoothing(double smoothing);

ShiftResult shift_detailed(const PerspectiveRequest& request);
Belief shift(const PerspectiveRequest& request);

/// Greedy lookahead: from the observed state (else argmax of ego), pick the
/// action minimizing expected cost under the reference, move to the argmax
/// successor, repeat n times. Lower action index wins ties.
std::vector<std::size_t> propose_actions(const Belief& ego, std::optional<std::size_t> observed, std::size_t n,
                                         const Kernel& reference, std::span<const double> cost);

struct Estimate {
  Belief belief;
  bool fell_back = false;
};

/// PERFECT_INFO reads the true leader cell from `truth`.
Estimate estimate(EstimatorKind kind, const PerspectiveRequest& request, const grid::GridState& truth,
                  const grid::GridConfig& config);

/// Reference kernel averaged over actions, as a one-action kernel.
Kernel action_averaged(const Kernel& reference);

/// Posterior over the configured goal candidates from observed leader moves,
/// assuming the leader's noisy greedy policy.
class GoalPosterior {
 public:
  explicit GoalPosterior(const grid::World& world);

  void reset();
  /// Leader seen at `from` then at `to` one step later.
  void observe_move(grid::Cell from, grid::Cell to);
  std::span<const double> probs() const noexcept { return probs_; }
  /// Most likely goal; the lowest index wins ties.
  std::size_t map_goal() const;
  /// Path distance to the most likely goal, per cell; walls and unreachable cells get a large cost.
  std::vector<double> cost() const;

 private:
  const grid::World* world_;
  std::vector<double> probs_;
};

struct TrackerSettings {
  std::size_t horizon = kDefaultHorizon;
  std::size_t output_index = kDefaultOutputIndex;
  OutputMode output = OutputMode::Marginal;
  double endpoint_smoothing = kDefaultSmoothing;
  /// Steps a last sighting remains usable as an endpoint.
  std::size_t anchor_patience = 8;
  std::size_t max_iters = bridge::kDefaultMaxIters;
  double tolerance = bridge::kDefaultTolerance;
};

/// Follower-side bookkeeping for one episode: the filtered belief b_0 over the
/// leader cell, the goal posterior, and the last sighting.
class OtherTracker {
 public:
  OtherTracker(const grid::World& world, Kernel reference, TrackerSettings settings);

  void reset(const grid::GridState& initial);
  /// Filter update after a step; only the follower cell and the observation are read.
  void update(const grid::GridState& now, const grid::Observation& observation);

  PerspectiveRequest request() const;
  Estimate estimate(EstimatorKind kind, const grid::GridState& truth) const;

  const Belief& ego_belief() const noexcept { return ego_; }
  const GoalPosterior& goals() const noexcept { return goals_; }
  std::optional<std::size_t> observed() const noexcept { return observed_; }
  std::size_t steps_since_seen() const noexcept { return since_seen_; }

 private:
  void condition(grid::Cell follower, const grid::Observation& observation);

  const grid::World* world_;
  Kernel reference_;
  Kernel averaged_;
  TrackerSettings settings_;
  Belief ego_;
  GoalPosterior goals_;
  std::optional<std::size_t> observed_;
  std::optional<grid::Cell> last_seen_;
  std::optional<Belief> anchor_;
  std::size_t since_seen_ = 0;
};

/// Leader-cell reference kernel for a grid: the follower's own local
/// reference dynamics, reused for the leader.
Kernel grid_reference(const grid::GridConfig& config);

}  // namespace sbtom::perspective
