#include "sbtom/ialm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace sbtom::ialm {
namespace {

std::size_t checked_product(std::span<const std::size_t> cards, const char* what) {
  std::size_t prod = 1;
  for (std::size_t c : cards) {
    if (c != 0 && prod > kMaxJointStates / c) {
      throw ModelTooLarge(std::string(what) + " exceeds " + std::to_string(kMaxJointStates) +
                          " joint assignments");
    }
    prod *= c;
  }
  return prod;
}

StateSpace sub_space(std::span<const std::size_t> cards) {
  if (cards.empty()) return StateSpace(1);
  if (cards.size() == 1) return StateSpace(cards[0]);
  return StateSpace::factored({cards.begin(), cards.end()});
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

// Row of a factor's table given the full time-t values, the partially filled
// t+1 values, the local action and the external actions.
std::size_t cpt_row(const Factor& f, std::span<const Factor> factors,
                    std::span<const ExternalAgent> agents, std::span<const std::size_t> now,
                    std::span<const std::size_t> next, std::size_t a, std::size_t num_actions,
                    std::span<const std::size_t> agent_actions) {
  std::size_t r = 0;
  for (std::size_t p : f.parents) r = r * factors[p].cardinality + now[p];
  for (std::size_t p : f.next_parents) r = r * factors[p].cardinality + next[p];
  if (f.uses_action) r = r * num_actions + a;
  for (std::size_t g : f.agent_parents) r = r * agents[g].num_actions + agent_actions[g];
  return r;
}

std::size_t expected_rows(const Factor& f, std::span<const Factor> factors,
                          std::span<const ExternalAgent> agents, std::size_t num_actions) {
  std::size_t rows = 1;
  for (std::size_t p : f.parents) rows *= factors[p].cardinality;
  for (std::size_t p : f.next_parents) rows *= factors[p].cardinality;
  if (f.uses_action) rows *= num_actions;
  for (std::size_t g : f.agent_parents) rows *= agents[g].num_actions;
  return rows;
}

std::size_t scope_row(const ExternalAgent& g, std::span<const Factor> factors,
                      std::span<const std::size_t> now) {
  std::size_t r = 0;
  for (std::size_t p : g.scope) r = r * factors[p].cardinality + now[p];
  return r;
}

struct Projections {
  std::vector<std::size_t> local;
  std::vector<std::size_t> influence;
};

Projections project_all(const GlobalModel& m) {
  const std::size_t n = m.space().size();
  Projections p;
  p.local.resize(n);
  p.influence.resize(n);
  std::vector<std::size_t> vals;
  std::vector<std::size_t> sub;
  for (std::size_t s = 0; s < n; ++s) {
    vals = m.space().unflatten(s);
    sub.clear();
    for (std::size_t i : m.local_factors()) sub.push_back(vals[i]);
    p.local[s] = m.local_index(sub);
    sub.clear();
    for (std::size_t i : m.influence_factors()) sub.push_back(vals[i]);
    p.influence[s] = m.influence_index(sub);
  }
  return p;
}

std::vector<double> step_joint(const GlobalModel& m, const Policies& policies, const LocalPolicy& lp,
                               std::size_t t, std::span<const double> cur) {
  std::vector<double> next(cur.size(), 0.0);
  const std::size_t na = m.actions().size();
  for (std::size_t s = 0; s < cur.size(); ++s) {
    if (cur[s] == 0.0) continue;
    for (std::size_t a = 0; a < na; ++a) {
      const double pa = lp.prob(t, a, na);
      if (pa == 0.0) continue;
      const double w = cur[s] * pa;
      m.successors(s, a, policies, [&](std::size_t sn, double p) { next[sn] += w * p; });
    }
  }
  return next;
}

}  // namespace

const char* role_name(Role r) {
  switch (r) {
    case Role::Local:
      return "local";
    case Role::InfluenceSource:
      return "influence";
    case Role::NonLocal:
      return "nonlocal";
  }
  return "?";
}

GlobalModel::GlobalModel(std::vector<Factor> factors, ActionSpace actions,
                         std::vector<ExternalAgent> agents, std::vector<std::vector<double>> initial)
    : factors_(std::move(factors)),
      actions_(std::move(actions)),
      agents_(std::move(agents)),
      initial_(std::move(initial)) {
  require(!factors_.empty(), "global model needs at least one factor");
  require(actions_.size() > 0, "global model needs at least one local action");

  std::set<std::string> names;
  for (const auto& g : agents_) {
    require(!g.name.empty() && names.insert(g.name).second, "agent names must be unique and non-empty");
    require(g.num_actions > 0, "agent '" + g.name + "' needs at least one action");
    for (std::size_t p : g.scope) require(p < factors_.size(), "agent '" + g.name + "' scope out of range");
  }
  names.clear();
  std::vector<std::size_t> cards;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    Factor& f = factors_[i];
    const std::string who = "factor '" + f.name + "'";
    require(!f.name.empty() && names.insert(f.name).second, "factor names must be unique and non-empty");
    require(f.cardinality > 0, who + " needs a positive cardinality");
    cards.push_back(f.cardinality);
    for (std::size_t p : f.parents) require(p < factors_.size(), who + ": parent out of range");
    for (std::size_t p : f.next_parents) {
      require(p < i, who + ": next-slice parents must be declared earlier");
    }
    for (std::size_t g : f.agent_parents) require(g < agents_.size(), who + ": agent out of range");

    if (f.role == Role::Local) {
      for (std::size_t p : f.parents) {
        require(factors_[p].role == Role::Local, who + ": local factors may only read local factors at t");
      }
      for (std::size_t p : f.next_parents) {
        require(factors_[p].role != Role::NonLocal,
                who + ": local factors may only read local or influence factors at t+1");
      }
      require(f.agent_parents.empty(), who + ": local factors may not read external actions");
    } else {
      require(!f.uses_action, who + ": only local factors may read the local action");
      for (std::size_t p : f.next_parents) {
        require(factors_[p].role != Role::Local, who + ": non-local factors may not read local factors at t+1");
      }
    }
  }
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    Factor& f = factors_[i];
    const std::size_t rows = expected_rows(f, factors_, agents_, actions_.size());
    if (f.cpt.rows() != rows || f.cpt.cols() != f.cardinality) {
      throw DimensionMismatch("factor '" + f.name + "': table is " + std::to_string(f.cpt.rows()) + "x" +
                              std::to_string(f.cpt.cols()) + ", expected " + std::to_string(rows) + "x" +
                              std::to_string(f.cardinality));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (double& v : f.cpt.row(r)) {
        require(v >= 0.0 && std::isfinite(v), "factor '" + f.name + "': negative or non-finite entry");
        s += v;
      }
      require(std::abs(s - 1.0) <= kStochasticTolerance,
              "factor '" + f.name + "': row " + std::to_string(r) + " sums to " + std::to_string(s));
      for (double& v : f.cpt.row(r)) v /= s;
    }
  }

  if (initial_.size() != factors_.size()) throw DimensionMismatch("one initial marginal per factor");
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (initial_[i].size() != factors_[i].cardinality) {
      throw DimensionMismatch("factor '" + factors_[i].name + "': initial marginal has wrong length");
    }
    const Belief b(StateSpace(factors_[i].cardinality), initial_[i]);
    initial_[i].assign(b.probs().begin(), b.probs().end());
  }

  checked_product(cards, "global state space");
  space_ = factors_.size() == 1 ? StateSpace(cards[0]) : StateSpace::factored(cards);

  std::vector<std::size_t> lc;
  std::vector<std::size_t> uc;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (factors_[i].role == Role::Local) {
      local_.push_back(i);
      lc.push_back(factors_[i].cardinality);
    } else if (factors_[i].role == Role::InfluenceSource) {
      influence_.push_back(i);
      uc.push_back(factors_[i].cardinality);
    }
  }
  require(!local_.empty(), "global model needs at least one local factor");
  local_space_ = sub_space(lc);
  influence_space_ = sub_space(uc);
}

std::size_t GlobalModel::local_index(std::span<const std::size_t> values) const {
  std::size_t r = 0;
  for (std::size_t j = 0; j < local_.size(); ++j) r = r * factors_[local_[j]].cardinality + values[j];
  return r;
}

std::size_t GlobalModel::influence_index(std::span<const std::size_t> values) const {
  std::size_t r = 0;
  for (std::size_t j = 0; j < influence_.size(); ++j) {
    r = r * factors_[influence_[j]].cardinality + values[j];
  }
  return r;
}

std::optional<std::size_t> GlobalModel::factor_index(const std::string& name) const {
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (factors_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<double> GlobalModel::initial_joint() const {
  std::vector<double> out(space_.size());
  for (std::size_t s = 0; s < out.size(); ++s) {
    const auto vals = space_.unflatten(s);
    double p = 1.0;
    for (std::size_t i = 0; i < factors_.size() && p > 0.0; ++i) p *= initial_[i][vals[i]];
    out[s] = p;
  }
  return out;
}

void GlobalModel::validate_policies(const Policies& policies) const {
  if (policies.size() != agents_.size()) {
    throw DimensionMismatch("expected " + std::to_string(agents_.size()) + " policy tables, got " +
                            std::to_string(policies.size()));
  }
  for (std::size_t g = 0; g < agents_.size(); ++g) {
    std::size_t rows = 1;
    for (std::size_t p : agents_[g].scope) rows *= factors_[p].cardinality;
    if (policies[g].rows() != rows || policies[g].cols() != agents_[g].num_actions) {
      throw DimensionMismatch("policy for agent '" + agents_[g].name + "' has the wrong shape");
    }
    if (!is_row_stochastic(policies[g], kStochasticTolerance)) {
      throw InvalidArgument("policy for agent '" + agents_[g].name + "' is not row-stochastic");
    }
  }
}

void GlobalModel::successors(std::size_t s, std::size_t a, const Policies& policies,
                             const std::function<void(std::size_t, double)>& emit) const {
  const std::vector<std::size_t> now = space_.unflatten(s);
  const std::size_t k = factors_.size();
  std::vector<std::size_t> acts(agents_.size(), 0);
  std::vector<std::size_t> next(k, 0);

  std::function<void(std::size_t, double)> expand = [&](std::size_t i, double p) {
    if (i == k) {
      emit(space_.flatten(next), p);
      return;
    }
    const Factor& f = factors_[i];
    auto row = f.cpt.row(cpt_row(f, factors_, agents_, now, next, a, actions_.size(), acts));
    for (std::size_t v = 0; v < f.cardinality; ++v) {
      if (row[v] == 0.0) continue;
      next[i] = v;
      expand(i + 1, p * row[v]);
    }
  };
  std::function<void(std::size_t, double)> choose = [&](std::size_t g, double p) {
    if (g == agents_.size()) {
      expand(0, p);
      return;
    }
    auto row = policies[g].row(scope_row(agents_[g], factors_, now));
    for (std::size_t b = 0; b < row.size(); ++b) {
      if (row[b] == 0.0) continue;
      acts[g] = b;
      choose(g + 1, p * row[b]);
    }
  };
  choose(0, 1.0);
}

double LocalPolicy::prob(std::size_t t, std::size_t a, std::size_t num_actions) const {
  if (t < open_loop.size()) return open_loop[t] == a ? 1.0 : 0.0;
  return 1.0 / static_cast<double>(num_actions);
}

std::vector<std::vector<double>> forward_marginals(const GlobalModel& model, const Policies& policies,
                                                   std::size_t horizon, const LocalPolicy& policy) {
  model.validate_policies(policies);
  std::vector<std::vector<double>> out;
  out.push_back(model.initial_joint());
  for (std::size_t t = 0; t < horizon; ++t) out.push_back(step_joint(model, policies, policy, t, out.back()));
  return out;
}

std::vector<std::vector<double>> local_marginals(const GlobalModel& model,
                                                 std::span<const std::vector<double>> joint) {
  const Projections proj = project_all(model);
  std::vector<std::vector<double>> out;
  for (const auto& p : joint) {
    std::vector<double> x(model.local_space().size(), 0.0);
    for (std::size_t s = 0; s < p.size(); ++s) x[proj.local[s]] += p[s];
    out.push_back(std::move(x));
  }
  return out;
}

History::History(std::vector<std::size_t> s, std::vector<std::size_t> a)
    : states(std::move(s)), actions(std::move(a)) {
  require(!states.empty(), "a history starts with a state");
  require(states.size() == actions.size() + 1, "a history alternates states and actions and ends with a state");
}

DSet initial_dset(std::size_t state, std::size_t window) {
  DSet d;
  d.window = window;
  d.values.assign(2 * window, kPad);
  d.values.push_back(state);
  return d;
}

DSet d_update(const History& h, std::size_t window) {
  require(!h.states.empty() && h.states.size() == h.actions.size() + 1, "malformed history");
  DSet d;
  d.window = window;
  d.values.assign(2 * window + 1, kPad);
  d.values.back() = h.states.back();
  const std::size_t pairs = h.actions.size();
  for (std::size_t j = 0; j < window && j < pairs; ++j) {
    // j-th most recent pair sits just left of the current state.
    const std::size_t src = pairs - 1 - j;
    const std::size_t dst = 2 * (window - 1 - j);
    d.values[dst] = h.states[src];
    d.values[dst + 1] = h.actions[src];
  }
  return d;
}

DSet advance(const DSet& d, std::size_t action, std::size_t next_state) {
  DSet out;
  out.window = d.window;
  out.values.reserve(d.values.size());
  if (d.window == 0) {
    out.values.push_back(next_state);
    return out;
  }
  out.values.assign(d.values.begin() + 2, d.values.end());
  out.values.push_back(action);
  out.values.push_back(next_state);
  return out;
}

InfluenceModel::InfluenceModel(std::size_t num_influence, std::size_t window,
                               std::map<DSet, std::vector<double>> table)
    : num_u_(num_influence), window_(window), table_(std::move(table)) {
  require(num_u_ > 0, "influence space must be non-empty");
  uniform_.assign(num_u_, 1.0 / static_cast<double>(num_u_));
  for (auto& [key, dist] : table_) {
    if (key.window != window_) throw DimensionMismatch("d-set window does not match the influence model");
    if (dist.size() != num_u_) throw DimensionMismatch("influence distribution has the wrong length");
    const Belief b(StateSpace(num_u_), dist);
    dist.assign(b.probs().begin(), b.probs().end());
  }
}

InfluenceModel::InfluenceModel(const InfluenceModel& other)
    : num_u_(other.num_u_),
      window_(other.window_),
      table_(other.table_),
      uniform_(other.uniform_),
      fallbacks_(other.fallback_count()) {}

InfluenceModel& InfluenceModel::operator=(const InfluenceModel& other) {
  if (this != &other) {
    num_u_ = other.num_u_;
    window_ = other.window_;
    table_ = other.table_;
    uniform_ = other.uniform_;
    fallbacks_.store(other.fallback_count(), std::memory_order_relaxed);
  }
  return *this;
}

InfluenceModel::Lookup InfluenceModel::lookup(const DSet& d) const {
  auto it = table_.find(d);
  if (it != table_.end()) return {it->second, false};
  fallbacks_.fetch_add(1, std::memory_order_relaxed);
  return {uniform_, true};
}

InfluenceModel exact_influence(const GlobalModel& model, const Policies& policies, std::size_t horizon,
                               std::size_t window, const LocalPolicy& policy) {
  model.validate_policies(policies);
  const Projections proj = project_all(model);
  const std::size_t ns = model.space().size();
  const std::size_t nu = model.influence_space().size();
  const std::size_t na = model.actions().size();

  using Joint = std::map<DSet, std::vector<double>>;
  Joint cur;
  const auto init = model.initial_joint();
  for (std::size_t s = 0; s < ns; ++s) {
    if (init[s] == 0.0) continue;
    auto& v = cur[initial_dset(proj.local[s], window)];
    if (v.empty()) v.assign(ns, 0.0);
    v[s] += init[s];
  }

  std::map<DSet, std::vector<double>> numer;
  for (std::size_t t = 0; t < horizon; ++t) {
    Joint next;
    std::size_t cells = 0;
    for (const auto& [key, dist] : cur) {
      auto& num = numer[key];
      if (num.empty()) num.assign(nu, 0.0);
      for (std::size_t s = 0; s < ns; ++s) {
        if (dist[s] == 0.0) continue;
        for (std::size_t a = 0; a < na; ++a) {
          const double pa = policy.prob(t, a, na);
          if (pa == 0.0) continue;
          const double w = dist[s] * pa;
          model.successors(s, a, policies, [&](std::size_t sn, double p) {
            const double m = w * p;
            num[proj.influence[sn]] += m;
            auto& v = next[advance(key, a, proj.local[sn])];
            if (v.empty()) {
              v.assign(ns, 0.0);
              cells += ns;
              if (cells > 50 * kMaxJointStates) {
                throw ModelTooLarge("d-set enumeration exceeds the desk-scale budget");
              }
            }
            v[sn] += m;
          });
        }
      }
    }
    cur = std::move(next);
  }

  std::map<DSet, std::vector<double>> table;
  for (auto& [key, num] : numer) {
    double mass = 0.0;
    for (double v : num) mass += v;
    if (mass <= 0.0) continue;
    for (double& v : num) v /= mass;
    table.emplace(key, std::move(num));
  }
  return InfluenceModel(nu, window, std::move(table));
}

LocalCPT::LocalCPT(std::size_t num_local, std::size_t num_actions, std::size_t num_influence,
                   std::vector<double> data)
    : nx_(num_local), na_(num_actions), nu_(num_influence), data_(std::move(data)) {
  if (data_.size() != nx_ * na_ * nu_ * nx_) throw DimensionMismatch("local CPT has the wrong size");
  for (std::size_t r = 0; r < nx_ * na_ * nu_; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < nx_; ++j) {
      const double v = data_[r * nx_ + j];
      require(v >= 0.0 && std::isfinite(v), "local CPT entries must be finite and non-negative");
      s += v;
    }
    require(std::abs(s - 1.0) <= kStochasticTolerance, "local CPT row is not stochastic");
    for (std::size_t j = 0; j < nx_; ++j) data_[r * nx_ + j] /= s;
  }
}

LocalCPT local_cpt(const GlobalModel& model) {
  const auto factors = model.factors();
  const auto locals = model.local_factors();
  const auto infl = model.influence_factors();
  const std::size_t nx = model.local_space().size();
  const std::size_t nu = model.influence_space().size();
  const std::size_t na = model.actions().size();
  const StateSpace& xs = model.local_space();
  const StateSpace& us = model.influence_space();

  std::vector<double> data(nx * na * nu * nx, 0.0);
  std::vector<std::size_t> now(factors.size(), 0);
  std::vector<std::size_t> next(factors.size(), 0);
  std::vector<std::size_t> sub(locals.size());
  const std::vector<std::size_t> no_agents(model.agents().size(), 0);

  for (std::size_t x = 0; x < nx; ++x) {
    const auto xv = xs.unflatten(x);
    for (std::size_t j = 0; j < locals.size(); ++j) now[locals[j]] = xv[j];
    for (std::size_t u = 0; u < nu; ++u) {
      if (!infl.empty()) {
        const auto uv = us.unflatten(u);
        for (std::size_t j = 0; j < infl.size(); ++j) next[infl[j]] = uv[j];
      }
      for (std::size_t a = 0; a < na; ++a) {
        double* out = &data[((x * na + a) * nu + u) * nx];
        std::function<void(std::size_t, double)> expand = [&](std::size_t j, double p) {
          if (j == locals.size()) {
            for (std::size_t q = 0; q < locals.size(); ++q) sub[q] = next[locals[q]];
            out[model.local_index(sub)] += p;
            return;
          }
          const Factor& f = factors[locals[j]];
          auto row = f.cpt.row(cpt_row(f, factors, model.agents(), now, next, a, na, no_agents));
          for (std::size_t v = 0; v < f.cardinality; ++v) {
            if (row[v] == 0.0) continue;
            next[locals[j]] = v;
            expand(j + 1, p * row[v]);
          }
        };
        expand(0, 1.0);
      }
    }
  }
  return LocalCPT(nx, na, nu, std::move(data));
}

void mix_row(const LocalCPT& cpt, std::size_t x, std::size_t a, std::span<const double> weights,
             std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t u = 0; u < cpt.num_influence(); ++u) {
    const double w = weights[u];
    if (w == 0.0) continue;
    auto row = cpt.row(x, a, u);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * row[j];
  }
}

Kernel ialm_transition(const LocalCPT& cpt, const InfluenceModel& influence, const DSet& d,
                       const StateSpace& local_space, const ActionSpace& actions) {
  if (influence.num_influence() != cpt.num_influence() || local_space.size() != cpt.num_local() ||
      actions.size() != cpt.num_actions()) {
    throw DimensionMismatch("influence model, local CPT and spaces disagree");
  }
  const auto weights = influence.lookup(d).distribution;
  std::vector<Matrix> table;
  for (std::size_t a = 0; a < cpt.num_actions(); ++a) {
    Matrix m(cpt.num_local(), cpt.num_local());
    for (std::size_t x = 0; x < cpt.num_local(); ++x) mix_row(cpt, x, a, weights, m.row(x));
    table.push_back(std::move(m));
  }
  return Kernel(local_space, actions, std::move(table));
}

Kernel ialm_transition(const GlobalModel& model, const LocalCPT& cpt, const InfluenceModel& influence,
                       const DSet& d) {
  return ialm_transition(cpt, influence, d, model.local_space(), model.actions());
}

std::vector<double> average_influence(const GlobalModel& model, const Policies& policies,
                                      std::size_t horizon, bool stationary, const LocalPolicy& policy) {
  model.validate_policies(policies);
  const Projections proj = project_all(model);
  const std::size_t nu = model.influence_space().size();
  std::vector<double> out(nu, 0.0);

  if (!stationary) {
    require(horizon > 0, "averaging the influence needs a positive horizon");
    const auto joint = forward_marginals(model, policies, horizon, policy);
    for (std::size_t t = 1; t <= horizon; ++t) {
      for (std::size_t s = 0; s < joint[t].size(); ++s) out[proj.influence[s]] += joint[t][s];
    }
    for (double& v : out) v /= static_cast<double>(horizon);
  } else {
    // Lazy chain: same stationary law, but aperiodic.
    std::vector<double> cur = model.initial_joint();
    const LocalPolicy uniform;
    constexpr std::size_t kMaxSweeps = 200000;
    std::size_t sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
      const auto stepped = step_joint(model, policies, uniform, 0, cur);
      double change = 0.0;
      for (std::size_t s = 0; s < cur.size(); ++s) {
        const double v = 0.5 * cur[s] + 0.5 * stepped[s];
        change += std::abs(v - cur[s]);
        cur[s] = v;
      }
      if (change < 1e-13) break;
    }
    if (sweep == kMaxSweeps) throw ConsistencyError("stationary influence did not converge");
    for (std::size_t s = 0; s < cur.size(); ++s) out[proj.influence[s]] += cur[s];
  }
  double mass = 0.0;
  for (double v : out) mass += v;
  for (double& v : out) v /= mass;
  return out;
}

Kernel local_reference_from_global(const GlobalModel& model, const Policies& policies,
                                   std::size_t horizon, bool stationary, const LocalPolicy& policy) {
  const auto bar = average_influence(model, policies, horizon, stationary, policy);
  const LocalCPT cpt = local_cpt(model);
  std::vector<Matrix> table;
  for (std::size_t a = 0; a < cpt.num_actions(); ++a) {
    Matrix m(cpt.num_local(), cpt.num_local());
    for (std::size_t x = 0; x < cpt.num_local(); ++x) mix_row(cpt, x, a, bar, m.row(x));
    table.push_back(std::move(m));
  }
  return Kernel(model.local_space(), model.actions(), std::move(table));
}

std::vector<std::vector<double>> ialm_local_marginals(const GlobalModel& model, const LocalCPT& cpt,
                                                      const InfluenceModel& influence,
                                                      std::size_t horizon, const LocalPolicy& policy) {
  const std::size_t nx = cpt.num_local();
  const std::size_t na = cpt.num_actions();
  const auto x0 = local_marginals(model, std::vector<std::vector<double>>{model.initial_joint()}).front();

  std::map<DSet, double> cur;
  for (std::size_t x = 0; x < nx; ++x) {
    if (x0[x] > 0.0) cur[initial_dset(x, influence.window())] += x0[x];
  }
  std::vector<std::vector<double>> out{x0};
  std::vector<double> row(nx);
  for (std::size_t t = 0; t < horizon; ++t) {
    std::map<DSet, double> next;
    std::vector<double> marg(nx, 0.0);
    for (const auto& [key, mass] : cur) {
      const auto weights = influence.lookup(key).distribution;
      const std::size_t x = key.current_state();
      for (std::size_t a = 0; a < na; ++a) {
        const double pa = policy.prob(t, a, na);
        if (pa == 0.0) continue;
        mix_row(cpt, x, a, weights, row);
        for (std::size_t xn = 0; xn < nx; ++xn) {
          if (row[xn] == 0.0) continue;
          const double m = mass * pa * row[xn];
          next[advance(key, a, xn)] += m;
          marg[xn] += m;
        }
      }
    }
    out.push_back(std::move(marg));
    cur = std::move(next);
  }
  return out;
}

}  // namespace sbtom::ialm
