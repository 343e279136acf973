#pragma once

// Discrete Schrödinger bridges between two beliefs over a reference Markov
// chain with a fixed action sequence.
//
// The two-endpoint path problem is solved through its static reduction: a
// log-domain Sinkhorn scaling of the n-step reference kernel yields the
// endpoint potentials (phi_0, psi_n); psi is then propagated backward and phi
// forward through the per-step reference matrices,
//
//   psi_t(x)      = sum_x' T_t(x'|x) psi_{t+1}(x')
//   phi_{t+1}(x') = sum_x  phi_t(x) T_t(x'|x)
//   p_t           = phi_t * psi_t,
//
// and the bridge kernels are the Doob transforms
//   Tbar_t(x'|x) = T_t(x'|x) psi_{t+1}(x') / psi_t(x).
//
// phi_0 is expressed relative to the counting measure, so p_0 = phi_0 psi_0
// holds without a separate initial density.

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sbtom/belief.hpp"

namespace sbtom::bridge {

inline constexpr double kDefaultTolerance = 1e-9;
inline constexpr std::size_t kDefaultMaxIters = 10000;

class UnreachableEndpoint : public Error {
 public:
  UnreachableEndpoint(std::vector<std::size_t> end_states, std::vector<std::size_t> start_states);

  /// End states with mass that no supported start state reaches in n steps.
  std::span<const std::size_t> end_states() const noexcept { return end_states_; }
  /// Supported start states from which no supported end state is reachable.
  std::span<const std::size_t> start_states() const noexcept { return start_states_; }

 private:
  std::vector<std::size_t> end_states_;
  std::vector<std::size_t> start_states_;
};

class NoConvergence : public Error {
 public:
  NoConvergence(double residual, std::size_t iterations);
  double residual() const noexcept { return residual_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  std::size_t iterations_;
};

/// n = 0 requests are rejected rather than returning an empty bridge.
class DegenerateHorizon : public Error {
 public:
  DegenerateHorizon() : Error("bridge horizon must be at least one action") {}
};

class InconsistentPotentials : public Error {
 public:
  using Error::Error;
};

/// Space-time potentials phi_0..phi_n, psi_0..psi_n, stored as logs.
/// A value of -infinity is a masked (zero) potential.
struct Potentials {
  std::vector<std::vector<double>> log_phi;
  std::vector<std::vector<double>> log_psi;

  std::size_t horizon() const noexcept { return log_phi.empty() ? 0 : log_phi.size() - 1; }
  std::vector<double> phi(std::size_t t) const;
  std::vector<double> psi(std::size_t t) const;

  /// All-ones potentials for a horizon-n bridge on |X| states.
  static Potentials unit(std::size_t n, std::size_t num_states);
};

struct BridgeProblem {
  Kernel reference;
  std::vector<std::size_t> actions;
  Belief start;
  Belief end;
  std::size_t max_iters = kDefaultMaxIters;
  /// Endpoint total-variation target.
  double tolerance = kDefaultTolerance;
};

struct BridgeSolution {
  Potentials potentials;
  /// Reference matrices bound to the action sequence.
  TimeVaryingKernel reference_steps;
  TimeVaryingKernel tilted;
  /// p_0..p_n.
  std::vector<Belief> marginals;
  std::size_t iterations_used = 0;
  double endpoint_error = 0.0;

  std::size_t horizon() const noexcept { return tilted.horizon(); }
};

/// Product of the per-step reference matrices.
Matrix n_step_kernel(const Kernel& reference, std::span<const std::size_t> actions);

BridgeSolution solve_bridge(const BridgeProblem& problem);

/// Doob transform of one reference step. psi_t must satisfy the backward
/// recursion for the result to be stochastic; rows with psi_t(x) = 0 are
/// never visited by the bridge and keep the reference row.
/// Throws InconsistentPotentials when a row sum misses 1 by more than 1e-8.
Matrix doob_tilt(const Matrix& reference_step, std::span<const double> psi_t,
                 std::span<const double> psi_next);
Matrix doob_tilt_log(const Matrix& reference_step, std::span<const double> log_psi_t,
                     std::span<const double> log_psi_next);

/// log P(x_0..x_n) with P ∝ phi_0(x_0) mu0(x_0) [prod_t T_t(x_{t+1}|x_t)] psi_n(x_n).
/// The normalizer sums over endpoints through the n-step kernel.
/// Returns -infinity for paths of zero probability.
double path_log_prob(const BridgeSolution& solution, std::span<const std::size_t> path,
                     const Belief& mu0);

/// Pathwise KL(P_bridge || P_reference) via the Markov chain rule,
/// sum_t sum_x p_t(x) KL(Tbar_t(.|x) || T_t(.|x)). +infinity on support violation.
double kl_path(const BridgeSolution& solution, const BridgeProblem& problem);

/// Numerically stable log(sum(exp(v))); -infinity for empty or all -infinity input.
double log_sum_exp(std::span<const double> v);

}  // namespace sbtom::bridge
