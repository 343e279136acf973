#include "sbtom/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sbtom::bridge {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kUnderflowGuard = 1e-280;
constexpr double kTiltRowTolerance = 1e-8;

std::string join_states(std::span<const std::size_t> states) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < states.size(); ++i) os << (i ? "," : "") << states[i];
  os << '}';
  return os.str();
}

double safe_log(double v) { return v > 0.0 ? std::log(v) : kNegInf; }

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  }
  return t;
}

// out_i = log sum_j a(i, j) exp(l_j), a >= 0.
//
// Factors out max(l) so each row costs one multiply-add per entry. Rows whose
// rescaled sum falls into the subnormal range are recomputed with a full
// per-entry log-sum-exp, so very negative log-potentials are never lost.
void log_matvec(const Matrix& a, std::span<const double> l, std::span<double> out) {
  double top = kNegInf;
  for (double v : l) top = std::max(top, v);
  if (top == kNegInf) {
    std::fill(out.begin(), out.end(), kNegInf);
    return;
  }
  std::vector<double> e(l.size());
  for (std::size_t j = 0; j < l.size(); ++j) e[j] = l[j] == kNegInf ? 0.0 : std::exp(l[j] - top);
  std::vector<double> terms;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * e[j];
    if (s > kUnderflowGuard) {
      out[i] = top + std::log(s);
      continue;
    }
    terms.clear();
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] > 0.0 && l[j] != kNegInf) terms.push_back(std::log(row[j]) + l[j]);
    }
    out[i] = log_sum_exp(terms);
  }
}

std::vector<double> exp_sum(std::span<const double> la, std::span<const double> lb) {
  std::vector<double> out(la.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    const double s = la[i] + lb[i];
    out[i] = std::isnan(s) ? 0.0 : std::exp(s);
  }
  return out;
}

struct Support {
  std::vector<std::size_t> states;
  std::vector<double> log_mass;
};

Support support_of(const Belief& b) {
  Support s;
  for (std::size_t x = 0; x < b.size(); ++x) {
    if (b[x] > 0.0) {
      s.states.push_back(x);
      s.log_mass.push_back(std::log(b[x]));
    }
  }
  return s;
}

void validate(const BridgeProblem& p) {
  if (p.actions.empty()) throw DegenerateHorizon();
  const StateSpace& space = p.reference.space();
  if (!(p.start.space() == space) || !(p.end.space() == space)) {
    throw DimensionMismatch("bridge endpoints live on " + p.start.space().describe() + " / " +
                            p.end.space().describe() + " but the reference kernel is on " +
                            space.describe());
  }
  for (std::size_t a : p.actions) {
    if (a >= p.reference.num_actions()) {
      throw InvalidArgument("bridge action index " + std::to_string(a) + " out of range");
    }
  }
  if (!(p.tolerance > 0.0)) throw InvalidArgument("bridge tolerance must be positive");
  if (p.max_iters == 0) throw InvalidArgument("bridge max_iters must be positive");
}

}  // namespace

UnreachableEndpoint::UnreachableEndpoint(std::vector<std::size_t> end_states,
                                         std::vector<std::size_t> start_states)
    : Error("unreachable endpoint: end states " + join_states(end_states) +
            " are outside the n-step image of the start support; start states " +
            join_states(start_states) + " reach no end state"),
      end_states_(std::move(end_states)),
      start_states_(std::move(start_states)) {}

NoConvergence::NoConvergence(double residual, std::size_t iterations)
    : Error("no convergence: endpoint error " + std::to_string(residual) + " after " +
            std::to_string(iterations) + " iterations"),
      residual_(residual),
      iterations_(iterations) {}

double log_sum_exp(std::span<const double> v) {
  double top = kNegInf;
  for (double x : v) top = std::max(top, x);
  if (top == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

std::vector<double> Potentials::phi(std::size_t t) const {
  std::vector<double> out(log_phi.at(t).size());
  std::transform(log_phi[t].begin(), log_phi[t].end(), out.begin(), [](double v) { return std::exp(v); });
  return out;
}

std::vector<double> Potentials::psi(std::size_t t) const {
  std::vector<double> out(log_psi.at(t).size());
  std::transform(log_psi[t].begin(), log_psi[t].end(), out.begin(), [](double v) { return std::exp(v); });
  return out;
}

Potentials Potentials::unit(std::size_t n, std::size_t num_states) {
  Potentials p;
  p.log_phi.assign(n + 1, std::vector<double>(num_states, 0.0));
  p.log_psi.assign(n + 1, std::vector<double>(num_states, 0.0));
  return p;
}

Matrix n_step_kernel(const Kernel& reference, std::span<const std::size_t> actions) {
  Matrix out = Matrix::identity(reference.num_states());
  for (std::size_t a : actions) out = multiply(out, reference.matrix(a));
  return out;
}

Matrix doob_tilt_log(const Matrix& reference_step, std::span<const double> log_psi_t,
                     std::span<const double> log_psi_next) {
  const std::size_t n = reference_step.rows();
  if (log_psi_t.size() != n || log_psi_next.size() != reference_step.cols()) {
    throw DimensionMismatch("doob_tilt: potential sizes do not match the reference step");
  }
  Matrix out(n, reference_step.cols());
  for (std::size_t x = 0; x < n; ++x) {
    auto src = reference_step.row(x);
    auto dst = out.row(x);
    if (log_psi_t[x] == kNegInf) {
      std::copy(src.begin(), src.end(), dst.begin());
      continue;
    }
    double sum = 0.0;
    for (std::size_t y = 0; y < dst.size(); ++y) {
      dst[y] = (src[y] > 0.0 && log_psi_next[y] != kNegInf)
                   ? src[y] * std::exp(log_psi_next[y] - log_psi_t[x])
                   : 0.0;
      sum += dst[y];
    }
    if (!(std::abs(sum - 1.0) <= kTiltRowTolerance)) {
      throw InconsistentPotentials("inconsistent potentials: tilted row " + std::to_string(x) +
                                   " sums to " + std::to_string(sum));
    }
    for (double& v : dst) v /= sum;
  }
  return out;
}

Matrix doob_tilt(const Matrix& reference_step, std::span<const double> psi_t,
                 std::span<const double> psi_next) {
  std::vector<double> lt(psi_t.size());
  std::vector<double> ln(psi_next.size());
  std::transform(psi_t.begin(), psi_t.end(), lt.begin(), safe_log);
  std::transform(psi_next.begin(), psi_next.end(), ln.begin(), safe_log);
  return doob_tilt_log(reference_step, lt, ln);
}

BridgeSolution solve_bridge(const BridgeProblem& problem) {
  validate(problem);
  const std::size_t n = problem.actions.size();
  const std::size_t nx = problem.reference.num_states();
  const StateSpace& space = problem.reference.space();

  TimeVaryingKernel steps = bind_actions(problem.reference, problem.actions);
  const Support src = support_of(problem.start);
  const Support dst = support_of(problem.end);

  // n-step kernel rows restricted to the start support, columns to the end support.
  Matrix kernel(src.states.size(), dst.states.size());
  for (std::size_t i = 0; i < src.states.size(); ++i) {
    std::vector<double> row(nx, 0.0);
    row[src.states[i]] = 1.0;
    for (const Matrix& m : steps.steps()) row = vec_mat(row, m);
    for (std::size_t j = 0; j < dst.states.size(); ++j) kernel(i, j) = row[dst.states[j]];
  }

  std::vector<std::size_t> bad_end;
  std::vector<std::size_t> bad_start;
  for (std::size_t j = 0; j < dst.states.size(); ++j) {
    bool hit = false;
    for (std::size_t i = 0; i < src.states.size() && !hit; ++i) hit = kernel(i, j) > 0.0;
    if (!hit) bad_end.push_back(dst.states[j]);
  }
  for (std::size_t i = 0; i < src.states.size(); ++i) {
    bool hit = false;
    for (std::size_t j = 0; j < dst.states.size() && !hit; ++j) hit = kernel(i, j) > 0.0;
    if (!hit) bad_start.push_back(src.states[i]);
  }
  if (!bad_end.empty() || !bad_start.empty()) {
    throw UnreachableEndpoint(std::move(bad_end), std::move(bad_start));
  }

  // Static Sinkhorn: coupling(i, j) = exp(la_i) K(i, j) exp(lb_j).
  const Matrix kernel_t = transpose(kernel);
  std::vector<double> la(src.states.size(), 0.0);
  std::vector<double> lb(dst.states.size(), 0.0);
  std::vector<double> row_lse(src.states.size());
  std::vector<double> col_lse(dst.states.size());
  std::size_t iters = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (true) {
    log_matvec(kernel, lb, row_lse);
    if (iters > 0) {
      double err = 0.0;
      for (std::size_t i = 0; i < la.size(); ++i) {
        err += std::abs(std::exp(la[i] + row_lse[i]) - std::exp(src.log_mass[i]));
      }
      residual = 0.5 * err;
      if (residual <= problem.tolerance || iters >= problem.max_iters) break;
    }
    for (std::size_t i = 0; i < la.size(); ++i) la[i] = src.log_mass[i] - row_lse[i];
    log_matvec(kernel_t, la, col_lse);
    for (std::size_t j = 0; j < lb.size(); ++j) lb[j] = dst.log_mass[j] - col_lse[j];
    ++iters;
  }
  if (!(residual <= problem.tolerance)) throw NoConvergence(residual, iters);

  // Gauge: max log psi_n = 0.
  const double gauge = *std::max_element(lb.begin(), lb.end());
  Potentials pot;
  pot.log_phi.assign(n + 1, std::vector<double>(nx, kNegInf));
  pot.log_psi.assign(n + 1, std::vector<double>(nx, kNegInf));
  for (std::size_t j = 0; j < dst.states.size(); ++j) pot.log_psi[n][dst.states[j]] = lb[j] - gauge;
  for (std::size_t i = 0; i < src.states.size(); ++i) pot.log_phi[0][src.states[i]] = la[i] + gauge;

  for (std::size_t t = n; t-- > 0;) log_matvec(steps.step(t), pot.log_psi[t + 1], pot.log_psi[t]);
  for (std::size_t t = 0; t < n; ++t) {
    log_matvec(transpose(steps.step(t)), pot.log_phi[t], pot.log_phi[t + 1]);
  }

  std::vector<Matrix> tilted;
  tilted.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    tilted.push_back(doob_tilt_log(steps.step(t), pot.log_psi[t], pot.log_psi[t + 1]));
  }

  BridgeSolution sol;
  std::vector<std::vector<double>> raw;
  for (std::size_t t = 0; t <= n; ++t) raw.push_back(exp_sum(pot.log_phi[t], pot.log_psi[t]));
  sol.endpoint_error = std::max(total_variation(raw.front(), problem.start.probs()),
                                total_variation(raw.back(), problem.end.probs()));
  if (!(sol.endpoint_error <= problem.tolerance)) throw NoConvergence(sol.endpoint_error, iters);
  for (auto& p : raw) sol.marginals.push_back(Belief::from_weights(space, std::move(p)));
  sol.potentials = std::move(pot);
  sol.tilted = TimeVaryingKernel(space, std::move(tilted));
  sol.reference_steps = std::move(steps);
  sol.iterations_used = iters;
  return sol;
}

double path_log_prob(const BridgeSolution& solution, std::span<const std::size_t> path,
                     const Belief& mu0) {
  const std::size_t n = solution.horizon();
  if (path.size() != n + 1) {
    throw InvalidArgument("path must have n+1 = " + std::to_string(n + 1) + " states");
  }
  const auto& lphi0 = solution.potentials.log_phi.front();
  const auto& lpsin = solution.potentials.log_psi.back();
  if (mu0.size() != lphi0.size()) throw DimensionMismatch("mu0 size does not match the bridge");
  for (std::size_t x : path) {
    if (x >= mu0.size()) throw InvalidArgument("path state out of range");
  }

  double lp = lphi0[path[0]] + safe_log(mu0[path[0]]) + lpsin[path[n]];
  for (std::size_t t = 0; t < n; ++t) lp += safe_log(solution.reference_steps.step(t)(path[t], path[t + 1]));
  if (lp == kNegInf || std::isnan(lp)) return kNegInf;

  Matrix k = Matrix::identity(mu0.size());
  for (const Matrix& m : solution.reference_steps.steps()) k = multiply(k, m);
  std::vector<double> terms;
  for (std::size_t x0 = 0; x0 < mu0.size(); ++x0) {
    if (mu0[x0] == 0.0 || lphi0[x0] == kNegInf) continue;
    for (std::size_t xn = 0; xn < mu0.size(); ++xn) {
      if (k(x0, xn) > 0.0 && lpsin[xn] != kNegInf) {
        terms.push_back(lphi0[x0] + std::log(mu0[x0]) + std::log(k(x0, xn)) + lpsin[xn]);
      }
    }
  }
  return lp - log_sum_exp(terms);
}

double kl_path(const BridgeSolution& solution, const BridgeProblem& problem) {
  const TimeVaryingKernel ref = bind_actions(problem.reference, problem.actions);
  if (ref.horizon() != solution.horizon()) {
    throw DimensionMismatch("solution horizon does not match the problem");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < ref.horizon(); ++t) {
    const Matrix& bar = solution.tilted.step(t);
    const Matrix& base = ref.step(t);
    const Belief& p = solution.marginals[t];
    for (std::size_t x = 0; x < p.size(); ++x) {
      if (p[x] == 0.0) continue;
      double row_kl = 0.0;
      for (std::size_t y = 0; y < bar.cols(); ++y) {
        const double q = bar(x, y);
        if (q == 0.0) continue;
        if (base(x, y) == 0.0) return std::numeric_limits<double>::infinity();
        row_kl += q * std::log(q / base(x, y));
      }
      total += p[x] * row_kl;
    }
  }
  return std::max(total, 0.0);
}

}  // namespace sbtom::bridge
