#pragma once

// Influence-augmented local models.
//
// A GlobalModel is a two-slice dynamic Bayesian network over factored state
// s = (s_1, ..., s_k). Each factor carries a role: LOCAL factors form the
// local state x, INFLUENCE_SOURCE factors form u, NONLOCAL factors the rest.
// The local agent picks action a; external agents pick their own actions from
// fixed policy tables conditioned on the time-t values of their scope.
//
// A factor's conditional table has one row per joint assignment of
//   (parents at t, next_parents at t+1, local action if used, agent actions)
// in that order, mixed radix with the last component varying fastest.
//
// Structural rules that keep the local model exact:
//   - LOCAL factors condition at time t on LOCAL factors only, and at t+1 on
//     LOCAL or INFLUENCE_SOURCE factors; they never read external actions.
//   - INFLUENCE_SOURCE and NONLOCAL factors never read the local action and
//     never read LOCAL factors at t+1.
//   - next_parents must be declared before the factor that reads them.

#include <atomic>
#include <compare>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sbtom/belief.hpp"

namespace sbtom::ialm {

inline constexpr std::size_t kPad = std::numeric_limits<std::size_t>::max();
inline constexpr std::size_t kMaxJointStates = 1000000;
inline constexpr std::size_t kDefaultWindow = 2;

enum class Role { Local, InfluenceSource, NonLocal };

const char* role_name(Role r);

class ModelTooLarge : public Error {
 public:
  using Error::Error;
};

struct Factor {
  std::string name;
  std::size_t cardinality = 0;
  Role role = Role::NonLocal;
  std::vector<std::size_t> parents;
  std::vector<std::size_t> next_parents;
  bool uses_action = false;
  std::vector<std::size_t> agent_parents;
  Matrix cpt;
};

struct ExternalAgent {
  std::string name;
  std::size_t num_actions = 0;
  /// Factors whose time-t values the agent's policy conditions on.
  std::vector<std::size_t> scope;
};

/// One table per external agent: rows index the scope assignment (mixed
/// radix, last fastest), columns the agent's actions.
using Policies = std::vector<Matrix>;

class GlobalModel {
 public:
  GlobalModel(std::vector<Factor> factors, ActionSpace actions, std::vector<ExternalAgent> agents,
              std::vector<std::vector<double>> initial);

  const StateSpace& space() const noexcept { return space_; }
  const ActionSpace& actions() const noexcept { return actions_; }
  std::span<const Factor> factors() const noexcept { return factors_; }
  std::span<const ExternalAgent> agents() const noexcept { return agents_; }
  /// Per-factor initial marginals; the initial state law is their product.
  std::span<const std::vector<double>> initial() const noexcept { return initial_; }

  const StateSpace& local_space() const noexcept { return local_space_; }
  const StateSpace& influence_space() const noexcept { return influence_space_; }
  std::span<const std::size_t> local_factors() const noexcept { return local_; }
  std::span<const std::size_t> influence_factors() const noexcept { return influence_; }

  std::size_t local_index(std::span<const std::size_t> values) const;
  std::size_t influence_index(std::span<const std::size_t> values) const;
  std::optional<std::size_t> factor_index(const std::string& name) const;

  /// Initial joint law over S.
  std::vector<double> initial_joint() const;

  /// Calls emit(s', p) for every successor with p > 0. Successors may repeat.
  void successors(std::size_t s, std::size_t a, const Policies& policies,
                  const std::function<void(std::size_t, double)>& emit) const;

  /// Throws DimensionMismatch / InvalidArgument when tables do not fit the agents.
  void validate_policies(const Policies& policies) const;

 private:
  std::vector<Factor> factors_;
  ActionSpace actions_;
  std::vector<ExternalAgent> agents_;
  std::vector<std::vector<double>> initial_;
  StateSpace space_;
  StateSpace local_space_;
  StateSpace influence_space_;
  std::vector<std::size_t> local_;
  std::vector<std::size_t> influence_;
};

/// Local agent behaviour used while enumerating: uniform over actions, or a
/// fixed open-loop sequence (the action at step t is sequence[t]).
struct LocalPolicy {
  std::vector<std::size_t> open_loop;

  double prob(std::size_t t, std::size_t a, std::size_t num_actions) const;
};

/// Exact global marginals over S for t = 0..horizon.
std::vector<std::vector<double>> forward_marginals(const GlobalModel& model, const Policies& policies,
                                                   std::size_t horizon, const LocalPolicy& policy = {});

/// x-marginals of forward_marginals.
std::vector<std::vector<double>> local_marginals(const GlobalModel& model,
                                                 std::span<const std::vector<double>> joint);

/// <x_1, a_1, ..., a_{t-1}, x_t>.
struct History {
  std::vector<std::size_t> states;
  std::vector<std::size_t> actions;

  History() = default;
  History(std::vector<std::size_t> states, std::vector<std::size_t> actions);
};

/// Last `window` (state, action) pairs followed by the current state,
/// oldest first, PAD-extended on the left for short histories.
struct DSet {
  std::vector<std::size_t> values;
  std::size_t window = 0;

  std::size_t current_state() const { return values.back(); }
  friend auto operator<=>(const DSet&, const DSet&) = default;
};

DSet d_update(const History& h, std::size_t window = kDefaultWindow);
/// d_update of h extended by (a, next_state), computed from d_update(h).
DSet advance(const DSet& d, std::size_t action, std::size_t next_state);
DSet initial_dset(std::size_t state, std::size_t window);

/// I(u_{t+1} | D_{t+1} = d(h_t)) as a dense table over the joint influence space.
class InfluenceModel {
 public:
  InfluenceModel(std::size_t num_influence, std::size_t window,
                 std::map<DSet, std::vector<double>> table);
  InfluenceModel(const InfluenceModel& other);
  InfluenceModel& operator=(const InfluenceModel& other);

  struct Lookup {
    std::span<const double> distribution;
    bool fallback;
  };

  /// Absent entries resolve to the uniform distribution and bump the fallback counter.
  Lookup lookup(const DSet& d) const;

  std::size_t num_influence() const noexcept { return num_u_; }
  std::size_t window() const noexcept { return window_; }
  std::size_t size() const noexcept { return table_.size(); }
  const std::map<DSet, std::vector<double>>& table() const noexcept { return table_; }
  std::size_t fallback_count() const noexcept { return fallbacks_.load(std::memory_order_relaxed); }

 private:
  std::size_t num_u_;
  std::size_t window_;
  std::map<DSet, std::vector<double>> table_;
  std::vector<double> uniform_;
  mutable std::atomic<std::size_t> fallbacks_{0};
};

/// I(u_{t+1} | d(h_t)) by exact enumeration of the joint law of (d(h_t), s_t),
/// pooled over t = 1..horizon with probability weights.
InfluenceModel exact_influence(const GlobalModel& model, const Policies& policies, std::size_t horizon,
                               std::size_t window = kDefaultWindow, const LocalPolicy& policy = {});

/// Pr(x_{t+1} | x_t, a_t, u_{t+1}).
class LocalCPT {
 public:
  LocalCPT(std::size_t num_local, std::size_t num_actions, std::size_t num_influence,
           std::vector<double> data);

  std::size_t num_local() const noexcept { return nx_; }
  std::size_t num_actions() const noexcept { return na_; }
  std::size_t num_influence() const noexcept { return nu_; }
  double operator()(std::size_t x, std::size_t a, std::size_t u, std::size_t next) const {
    return data_[((x * na_ + a) * nu_ + u) * nx_ + next];
  }
  std::span<const double> row(std::size_t x, std::size_t a, std::size_t u) const {
    return {data_.data() + ((x * na_ + a) * nu_ + u) * nx_, nx_};
  }

 private:
  std::size_t nx_;
  std::size_t na_;
  std::size_t nu_;
  std::vector<double> data_;
};

LocalCPT local_cpt(const GlobalModel& model);

/// sum_u Pr(x'|x,a,u) w(u) into out (length |X|).
void mix_row(const LocalCPT& cpt, std::size_t x, std::size_t a, std::span<const double> weights,
             std::span<double> out);

/// Tbar(x'|x,a) = sum_u Pr(x'|x,a,u) I(u|d) for every x and a.
Kernel ialm_transition(const LocalCPT& cpt, const InfluenceModel& influence, const DSet& d,
                       const StateSpace& local_space, const ActionSpace& actions);
Kernel ialm_transition(const GlobalModel& model, const LocalCPT& cpt, const InfluenceModel& influence,
                       const DSet& d);

/// Time-averaged marginal of u_{t+1}, t = 0..horizon-1, or the stationary
/// u-marginal of the global chain when `stationary` is set.
std::vector<double> average_influence(const GlobalModel& model, const Policies& policies,
                                      std::size_t horizon, bool stationary,
                                      const LocalPolicy& policy = {});

/// Influence-naive local kernel sum_u Pr(x'|x,a,u) Ibar(u).
Kernel local_reference_from_global(const GlobalModel& model, const Policies& policies,
                                   std::size_t horizon, bool stationary = false,
                                   const LocalPolicy& policy = {});

/// x-marginals of the IALM driven by exact_influence, t = 0..horizon.
std::vector<std::vector<double>> ialm_local_marginals(const GlobalModel& model, const LocalCPT& cpt,
                                                      const InfluenceModel& influence,
                                                      std::size_t horizon,
                                                      const LocalPolicy& policy = {});

}  // namespace sbtom::ialm
