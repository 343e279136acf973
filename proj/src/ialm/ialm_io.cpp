#include "sbtom/ialm_io.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>

#include "sbtom/belief_io.hpp"

namespace sbtom::ialm::io {
namespace {

using sbtom::io::TokenReader;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_row(std::ostream& os, std::span<const double> v) {
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << fmt(v[i]);
  os << '\n';
}

Role parse_role(TokenReader& in) {
  const std::string tok = in.next();
  if (tok == "local") return Role::Local;
  if (tok == "influence") return Role::InfluenceSource;
  if (tok == "nonlocal") return Role::NonLocal;
  in.fail("unknown role '" + tok + "'");
}

std::vector<std::size_t> read_names(TokenReader& in, const std::map<std::string, std::size_t>& index,
                                    const char* what) {
  const std::size_t k = in.next_size();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) {
    const std::string name = in.next();
    auto it = index.find(name);
    if (it == index.end()) in.fail(std::string("unknown ") + what + " '" + name + "'");
    out.push_back(it->second);
  }
  return out;
}

Matrix read_rows(TokenReader& in, std::size_t rows, std::size_t cols) {
  std::vector<double> data(rows * cols);
  for (double& v : data) v = in.next_double();
  return Matrix(rows, cols, std::move(data));
}

}  // namespace

ModelFile read_model(std::istream& is) {
  TokenReader in(is);
  in.expect("ialm-model");
  in.expect("v1");
  in.expect("actions");
  const std::size_t na = in.next_size();
  std::vector<std::string> labels;
  for (std::size_t a = 0; a < na; ++a) labels.push_back(in.next());

  std::vector<Factor> factors;
  std::map<std::string, std::size_t> factor_index;
  while (in.peek() == "factor") {
    in.next();
    Factor f;
    f.name = in.next();
    f.cardinality = in.next_size();
    f.role = parse_role(in);
    if (!factor_index.emplace(f.name, factors.size()).second) in.fail("duplicate factor '" + f.name + "'");
    factors.push_back(std::move(f));
  }
  if (factors.empty()) in.fail("no factors declared");

  std::vector<ExternalAgent> agents;
  std::map<std::string, std::size_t> agent_index;
  while (in.peek() == "agent") {
    in.next();
    ExternalAgent g;
    g.name = in.next();
    g.num_actions = in.next_size();
    in.expect("scope");
    g.scope = read_names(in, factor_index, "factor");
    if (!agent_index.emplace(g.name, agents.size()).second) in.fail("duplicate agent '" + g.name + "'");
    agents.push_back(std::move(g));
  }

  std::vector<bool> have_cpt(factors.size(), false);
  std::vector<std::optional<std::vector<double>>> initial(factors.size());
  std::vector<std::optional<Matrix>> policies(agents.size());

  while (true) {
    const std::string key = in.next();
    if (key == "end") break;
    if (key == "initial") {
      const std::string name = in.next();
      auto it = factor_index.find(name);
      if (it == factor_index.end()) in.fail("unknown factor '" + name + "'");
      if (initial[it->second]) in.fail("duplicate initial block for '" + name + "'");
      std::vector<double> v(factors[it->second].cardinality);
      for (double& p : v) p = in.next_double();
      initial[it->second] = std::move(v);
    } else if (key == "table") {
      const std::string name = in.next();
      auto it = factor_index.find(name);
      if (it == factor_index.end()) in.fail("unknown factor '" + name + "'");
      if (have_cpt[it->second]) in.fail("duplicate table for '" + name + "'");
      Factor& f = factors[it->second];
      in.expect("parents");
      f.parents = read_names(in, factor_index, "factor");
      in.expect("next");
      f.next_parents = read_names(in, factor_index, "factor");
      in.expect("action");
      f.uses_action = in.next_size() != 0;
      in.expect("agents");
      f.agent_parents = read_names(in, agent_index, "agent");
      in.expect("rows");
      const std::size_t rows = in.next_size();
      f.cpt = read_rows(in, rows, f.cardinality);
      have_cpt[it->second] = true;
    } else if (key == "policy") {
      const std::string name = in.next();
      auto it = agent_index.find(name);
      if (it == agent_index.end()) in.fail("unknown agent '" + name + "'");
      if (policies[it->second]) in.fail("duplicate policy for '" + name + "'");
      in.expect("rows");
      const std::size_t rows = in.next_size();
      policies[it->second] = read_rows(in, rows, agents[it->second].num_actions);
    } else {
      in.fail("unknown block '" + key + "'");
    }
  }

  std::vector<std::vector<double>> init;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (!have_cpt[i]) in.fail("factor '" + factors[i].name + "' has no table");
    if (!initial[i]) in.fail("factor '" + factors[i].name + "' has no initial block");
    init.push_back(std::move(*initial[i]));
  }
  Policies pol;
  for (std::size_t g = 0; g < agents.size(); ++g) {
    if (!policies[g]) in.fail("agent '" + agents[g].name + "' has no policy");
    pol.push_back(std::move(*policies[g]));
  }
  GlobalModel model(std::move(factors), ActionSpace(std::move(labels)), std::move(agents), std::move(init));
  model.validate_policies(pol);
  return {std::move(model), std::move(pol)};
}

ModelFile load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open model file '" + path + "'");
  try {
    return read_model(f);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_model(std::ostream& os, const GlobalModel& model, const Policies& policies) {
  model.validate_policies(policies);
  const auto factors = model.factors();
  const auto agents = model.agents();
  auto names = [&](std::span<const std::size_t> idx, bool agent) {
    std::string s = std::to_string(idx.size());
    for (std::size_t i : idx) s += ' ' + (agent ? agents[i].name : factors[i].name);
    return s;
  };
  os << "ialm-model v1\n";
  os << "actions " << model.actions().size();
  for (const auto& l : model.actions().labels()) os << ' ' << l;
  os << '\n';
  for (const auto& f : factors) os << "factor " << f.name << ' ' << f.cardinality << ' ' << role_name(f.role) << '\n';
  for (const auto& g : agents) os << "agent " << g.name << ' ' << g.num_actions << " scope " << names(g.scope, false) << '\n';
  for (const auto& f : factors) {
    os << "table " << f.name << " parents " << names(f.parents, false) << " next " << names(f.next_parents, false)
       << " action " << (f.uses_action ? 1 : 0) << " agents " << names(f.agent_parents, true) << " rows "
       << f.cpt.rows() << '\n';
    for (std::size_t r = 0; r < f.cpt.rows(); ++r) write_row(os, f.cpt.row(r));
  }
  for (std::size_t i = 0; i < factors.size(); ++i) {
    os << "initial " << factors[i].name << ' ';
    write_row(os, model.initial()[i]);
  }
  for (std::size_t g = 0; g < agents.size(); ++g) {
    os << "policy " << agents[g].name << " rows " << policies[g].rows() << '\n';
    for (std::size_t r = 0; r < policies[g].rows(); ++r) write_row(os, policies[g].row(r));
  }
  os << "end\n";
}

}  // namespace sbtom::ialm::io
