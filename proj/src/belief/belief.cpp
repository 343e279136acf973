#include "sbtom/belief.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace sbtom {
namespace {

void require_same_space(const StateSpace& a, const StateSpace& b, const char* what) {
  if (!(a == b)) {
    throw DimensionMismatch(std::string(what) + ": state space " + a.describe() +
                            " does not match " + b.describe());
  }
}

void require_action(const Kernel& k, std::size_t a) {
  if (a >= k.num_actions()) {
    throw InvalidArgument("action index " + std::to_string(a) + " out of range for " +
                          std::to_string(k.num_actions()) + " actions");
  }
}

double checked_mass(std::span<const double> v) {
  double s = 0.0;
  for (double p : v) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw InvalidArgument("probability entries must be finite and non-negative");
    }
    s += p;
  }
  return s;
}

}  // namespace

StateSpace::StateSpace(std::size_t size) : size_(size) {
  if (size == 0) throw InvalidArgument("state space must have at least one state");
}

StateSpace StateSpace::factored(std::vector<std::size_t> factor_sizes) {
  if (factor_sizes.empty()) throw InvalidArgument("factored space needs at least one factor");
  std::size_t prod = 1;
  for (std::size_t k : factor_sizes) {
    if (k == 0) throw InvalidArgument("factor cardinality must be positive");
    prod *= k;
  }
  StateSpace s(prod);
  s.factors_ = std::move(factor_sizes);
  return s;
}

std::size_t StateSpace::flatten(std::span<const std::size_t> values) const {
  if (!is_factored()) {
    if (values.size() != 1 || values[0] >= size_) throw InvalidArgument("bad flat state index");
    return values[0];
  }
  if (values.size() != factors_.size()) {
    throw DimensionMismatch("expected " + std::to_string(factors_.size()) + " factor values");
  }
  std::size_t idx = 0;
  for (std::size_t j = 0; j < factors_.size(); ++j) {
    if (values[j] >= factors_[j]) throw InvalidArgument("factor value out of range");
    idx = idx * factors_[j] + values[j];
  }
  return idx;
}

std::vector<std::size_t> StateSpace::unflatten(std::size_t index) const {
  if (index >= size_) throw InvalidArgument("state index out of range");
  if (!is_factored()) return {index};
  std::vector<std::size_t> out(factors_.size());
  for (std::size_t j = factors_.size(); j-- > 0;) {
    out[j] = index % factors_[j];
    index /= factors_[j];
  }
  return out;
}

std::string StateSpace::describe() const {
  std::ostringstream os;
  os << "|X|=" << size_;
  if (is_factored()) {
    os << " (";
    for (std::size_t j = 0; j < factors_.size(); ++j) os << (j ? "x" : "") << factors_[j];
    os << ")";
  }
  return os.str();
}

ActionSpace::ActionSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw InvalidArgument("action space must have at least one action");
  std::set<std::string> seen(labels_.begin(), labels_.end());
  if (seen.size() != labels_.size()) throw InvalidArgument("action labels must be unique");
}

ActionSpace ActionSpace::anonymous(std::size_t size) {
  std::vector<std::string> labels;
  for (std::size_t a = 0; a < size; ++a) labels.push_back("a" + std::to_string(a));
  return ActionSpace(std::move(labels));
}

std::optional<std::size_t> ActionSpace::index_of(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

Belief::Belief(StateSpace space, std::vector<double> probs)
    : space_(std::move(space)), probs_(std::move(probs)) {
  if (probs_.size() != space_.size()) {
    throw DimensionMismatch("belief has " + std::to_string(probs_.size()) + " entries for " +
                            space_.describe());
  }
  const double mass = checked_mass(probs_);
  if (std::abs(mass - 1.0) > kDriftTolerance) {
    throw ConsistencyError("belief mass drifted to " + std::to_string(mass));
  }
  for (double& p : probs_) p /= mass;
}

Belief::Belief(StateSpace space, std::vector<double> probs, bool)
    : space_(std::move(space)), probs_(std::move(probs)) {}

Belief Belief::from_weights(StateSpace space, std::vector<double> weights) {
  if (weights.size() != space.size()) throw DimensionMismatch("weight vector size mismatch");
  const double mass = checked_mass(weights);
  if (!(mass > 0.0)) throw InvalidArgument("weights have zero total mass");
  for (double& w : weights) w /= mass;
  return Belief(std::move(space), std::move(weights), true);
}

Belief Belief::uniform(StateSpace space) {
  const std::size_t n = space.size();
  return Belief(std::move(space), std::vector<double>(n, 1.0 / static_cast<double>(n)), true);
}

Belief Belief::delta(StateSpace space, std::size_t state) {
  if (state >= space.size()) throw InvalidArgument("delta state out of range");
  std::vector<double> p(space.size(), 0.0);
  p[state] = 1.0;
  return Belief(std::move(space), std::move(p), true);
}

std::size_t Belief::argmax() const {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

double Belief::max_prob() const { return *std::max_element(probs_.begin(), probs_.end()); }

std::vector<std::size_t> Belief::support() const {
  std::vector<std::size_t> out;
  for (std::size_t x = 0; x < probs_.size(); ++x) {
    if (probs_[x] > 0.0) out.push_back(x);
  }
  return out;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionMismatch("total variation of different sizes");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double total_variation(const Belief& p, const Belief& q) {
  require_same_space(p.space(), q.space(), "total_variation");
  return total_variation(p.probs(), q.probs());
}

Kernel::Kernel(StateSpace space, ActionSpace actions, std::vector<Matrix> table)
    : space_(std::move(space)), actions_(std::move(actions)) {
  if (table.size() != actions_.size()) {
    throw DimensionMismatch("kernel has " + std::to_string(table.size()) + " matrices for " +
                            std::to_string(actions_.size()) + " actions");
  }
  for (std::size_t a = 0; a < table.size(); ++a) {
    Matrix& m = table[a];
    if (m.rows() != space_.size() || m.cols() != space_.size()) {
      throw DimensionMismatch("kernel matrix for action " + std::to_string(a) +
                              " is not |X|x|X| for " + space_.describe());
    }
    if (!is_row_stochastic(m, kStochasticTolerance)) {
      throw InvalidArgument("kernel matrix for action " + actions_.label(a) +
                            " is not row-stochastic (max deviation " +
                            std::to_string(max_row_sum_deviation(m)) + ")");
    }
    for (std::size_t r = 0; r < m.rows(); ++r) {
      auto row = m.row(r);
      const double s = std::accumulate(row.begin(), row.end(), 0.0);
      for (double& v : row) v /= s;
    }
  }
  table_ = std::make_shared<const std::vector<Matrix>>(std::move(table));
}

const Matrix& Kernel::matrix(std::size_t a) const {
  if (a >= table_->size()) {
    throw InvalidArgument("action index " + std::to_string(a) + " out of range");
  }
  return (*table_)[a];
}

TimeVaryingKernel::TimeVaryingKernel(StateSpace space, std::vector<Matrix> steps)
    : space_(std::move(space)), steps_(std::move(steps)) {
  for (std::size_t t = 0; t < steps_.size(); ++t) {
    const Matrix& m = steps_[t];
    if (m.rows() != space_.size() || m.cols() != space_.size()) {
      throw DimensionMismatch("time-varying step " + std::to_string(t) + " has wrong shape");
    }
    if (!is_row_stochastic(m, kStochasticTolerance)) {
      throw InvalidArgument("time-varying step " + std::to_string(t) + " is not row-stochastic");
    }
  }
}

TimeVaryingKernel bind_actions(const Kernel& kernel, std::span<const std::size_t> actions) {
  std::vector<Matrix> steps;
  steps.reserve(actions.size());
  for (std::size_t a : actions) {
    require_action(kernel, a);
    steps.push_back(kernel.matrix(a));
  }
  return TimeVaryingKernel(kernel.space(), std::move(steps));
}

ObservationModel::ObservationModel(StateSpace space, std::size_t num_observations,
                                   std::vector<Matrix> table)
    : space_(std::move(space)), num_obs_(num_observations), table_(std::move(table)) {
  if (table_.empty()) throw InvalidArgument("observation model needs at least one matrix");
  for (const Matrix& m : table_) {
    if (m.rows() != space_.size() || m.cols() != num_obs_) {
      throw DimensionMismatch("observation matrix must be |X| x |O|");
    }
    if (!is_row_stochastic(m, kStochasticTolerance)) {
      throw InvalidArgument("observation rows must be distributions over o");
    }
  }
}

double ObservationModel::likelihood(std::size_t a, std::size_t next, std::size_t o) const {
  const Matrix& m = table_.size() == 1 ? table_.front() : table_.at(a);
  return m(next, o);
}

Belief push_forward(const Belief& b, const Kernel& k, std::size_t a) {
  require_same_space(b.space(), k.space(), "push_forward");
  require_action(k, a);
  return Belief(b.space(), vec_mat(b.probs(), k.matrix(a)));
}

Belief multi_step_pushforward(const Belief& b, const Kernel& k,
                              std::span<const std::size_t> actions) {
  require_same_space(b.space(), k.space(), "multi_step_pushforward");
  Belief cur = b;
  for (std::size_t a : actions) cur = push_forward(cur, k, a);
  return cur;
}

Belief bayes_filter(const Belief& b, const Kernel& k, std::size_t a, const ObservationModel& obs,
                    std::size_t o) {
  require_same_space(b.space(), obs.space(), "bayes_filter");
  if (o >= obs.num_observations()) throw InvalidArgument("observation index out of range");
  const Belief predicted = push_forward(b, k, a);
  std::vector<double> w(predicted.size());
  double total = 0.0;
  for (std::size_t x = 0; x < w.size(); ++x) {
    w[x] = predicted[x] * obs.likelihood(a, x, o);
    total += w[x];
  }
  if (!(total > 0.0)) throw ImpossibleObservation(a, o);
  return Belief::from_weights(b.space(), std::move(w));
}

double kl_divergence(const Belief& p, const Belief& q) {
  require_same_space(p.space(), q.space(), "kl_divergence");
  double s = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) {
    if (p[x] == 0.0) continue;
    if (q[x] == 0.0) return std::numeric_limits<double>::infinity();
    s += p[x] * std::log(p[x] / q[x]);
  }
  return std::max(s, 0.0);
}

}  // namespace sbtom
