#pragma once

// Finite state spaces, beliefs and action-conditioned Markov kernels.
//
// Everything here is immutable after construction. Probabilities live in
// linear space; every operation that yields a Belief renormalizes it and
// raises ConsistencyError if the pre-normalization mass drifted by more than
// kDriftTolerance.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sbtom/errors.hpp"
#include "sbtom/matrix.hpp"

namespace sbtom {

inline constexpr double kStochasticTolerance = 1e-12;
inline constexpr double kDriftTolerance = 1e-9;

class StateSpace {
 public:
  StateSpace() = default;
  explicit StateSpace(std::size_t size);
  /// Factored space; |X| is the product of the factor cardinalities.
  static StateSpace factored(std::vector<std::size_t> factor_sizes);

  std::size_t size() const noexcept { return size_; }
  bool is_factored() const noexcept { return !factors_.empty(); }
  std::span<const std::size_t> factor_sizes() const noexcept { return factors_; }

  /// Row-major: the last factor varies fastest.
  std::size_t flatten(std::span<const std::size_t> values) const;
  std::vector<std::size_t> unflatten(std::size_t index) const;

  std::string describe() const;

  friend bool operator==(const StateSpace&, const StateSpace&) = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::size_t> factors_;
};

class ActionSpace {
 public:
  ActionSpace() = default;
  explicit ActionSpace(std::vector<std::string> labels);
  /// Labels "a0", "a1", ...
  static ActionSpace anonymous(std::size_t size);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::string& label(std::size_t a) const { return labels_.at(a); }
  std::span<const std::string> labels() const noexcept { return labels_; }
  std::optional<std::size_t> index_of(const std::string& label) const;

  friend bool operator==(const ActionSpace&, const ActionSpace&) = default;

 private:
  std::vector<std::string> labels_;
};

class Belief {
 public:
  /// Validates non-negativity and |sum - 1| <= kDriftTolerance, then renormalizes.
  Belief(StateSpace space, std::vector<double> probs);

  /// Normalizes arbitrary non-negative weights with positive total mass.
  static Belief from_weights(StateSpace space, std::vector<double> weights);
  static Belief uniform(StateSpace space);
  static Belief delta(StateSpace space, std::size_t state);

  const StateSpace& space() const noexcept { return space_; }
  std::size_t size() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t x) const { return probs_[x]; }

  /// Most probable state; the lowest index wins ties.
  std::size_t argmax() const;
  double max_prob() const;
  std::vector<std::size_t> support() const;

 private:
  Belief(StateSpace space, std::vector<double> probs, bool /*trusted*/);

  StateSpace space_;
  std::vector<double> probs_;
};

double total_variation(std::span<const double> p, std::span<const double> q);
double total_variation(const Belief& p, const Belief& q);

/// Action-conditioned row-stochastic transition table, entry [a](x, x') = Pr(x'|x,a).
/// Copies share the (immutable) table storage.
class Kernel {
 public:
  Kernel(StateSpace space, ActionSpace actions, std::vector<Matrix> table);

  const StateSpace& space() const noexcept { return space_; }
  const ActionSpace& actions() const noexcept { return actions_; }
  std::size_t num_states() const noexcept { return space_.size(); }
  std::size_t num_actions() const noexcept { return actions_.size(); }

  const Matrix& matrix(std::size_t a) const;
  double operator()(std::size_t a, std::size_t x, std::size_t next) const {
    return (*table_)[a](x, next);
  }

 private:
  StateSpace space_;
  ActionSpace actions_;
  std::shared_ptr<const std::vector<Matrix>> table_;
};

/// An ordered list of per-step row-stochastic matrices with actions already bound.
class TimeVaryingKernel {
 public:
  TimeVaryingKernel() = default;
  TimeVaryingKernel(StateSpace space, std::vector<Matrix> steps);

  const StateSpace& space() const noexcept { return space_; }
  std::size_t horizon() const noexcept { return steps_.size(); }
  const Matrix& step(std::size_t t) const { return steps_.at(t); }
  std::span<const Matrix> steps() const noexcept { return steps_; }

 private:
  StateSpace space_;
  std::vector<Matrix> steps_;
};

/// Binds a kernel to an action sequence.
TimeVaryingKernel bind_actions(const Kernel& kernel, std::span<const std::size_t> actions);

/// Observation likelihoods [a](x', o) = O(o | a, x'). A model with a single
/// matrix is action-independent and applies to every action.
class ObservationModel {
 public:
  ObservationModel(StateSpace space, std::size_t num_observations, std::vector<Matrix> table);

  const StateSpace& space() const noexcept { return space_; }
  std::size_t num_observations() const noexcept { return num_obs_; }
  double likelihood(std::size_t a, std::size_t next, std::size_t o) const;

 private:
  StateSpace space_;
  std::size_t num_obs_;
  std::vector<Matrix> table_;
};

Belief push_forward(const Belief& b, const Kernel& k, std::size_t a);
Belief multi_step_pushforward(const Belief& b, const Kernel& k, std::span<const std::size_t> actions);
Belief bayes_filter(const Belief& b, const Kernel& k, std::size_t a, const ObservationModel& obs,
                    std::size_t o);

/// KL(p || q) in nats; +infinity when support(p) is not inside support(q).
double kl_divergence(const Belief& p, const Belief& q);

}  // namespace sbtom
