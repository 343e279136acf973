#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "sbtom/experiment.hpp"

namespace sbtom::experiment {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"grid",
       {"width", "height", "walls", "goals", "leader_start", "follower_start", "view_radius", "r_prox", "r_vis",
        "r_goal", "c_collision", "d_prox", "d_far", "k_far", "max_length", "collision_limit", "leader_noise",
        "seed"}},
      {"perspective",
       {"estimators", "horizon", "output_index", "output", "endpoint_smoothing", "anchor_patience", "max_iters",
        "tolerance"}},
      {"learner", {"alpha", "gamma", "epsilon_start", "epsilon_end", "epsilon_decay_episodes", "bins"}},
      {"experiment",
       {"seeds", "episodes", "eval_interval", "eval_episodes", "bootstrap_resamples", "output_dir",
        "record_episodes", "plot", "threads"}},
  };
  return keys;
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw ParseError("config key '" + key + "': " + what);
}

grid::Cell parse_cell(const std::string& key, const std::string& text) {
  std::string t = text;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream is(t);
  grid::Cell c;
  std::string rest;
  if (!(is >> c.x >> c.y) || (is >> rest)) bad(key, "expected a cell 'x,y', got '" + text + "'");
  return c;
}

std::vector<grid::Cell> parse_cells(const std::string& key, const std::string& text) {
  std::vector<grid::Cell> out;
  std::istringstream is(text);
  for (std::string item; std::getline(is, item, ';');) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_cell(key, item));
  }
  return out;
}

template <class T>
T get(const pt::ptree& tree, const std::string& path, T fallback) {
  const auto node = tree.get_child_optional(path);
  if (!node) return fallback;
  try {
    return node->get_value<T>();
  } catch (const pt::ptree_bad_data&) {
    bad(path, "cannot parse '" + node->data() + "'");
  }
}

bool get_bool(const pt::ptree& tree, const std::string& path, bool fallback) {
  const auto v = tree.get_optional<std::string>(path);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  bad(path, "expected true or false, got '" + *v + "'");
}

std::size_t get_size(const pt::ptree& tree, const std::string& path, std::size_t fallback) {
  const auto v = tree.get_optional<std::string>(path);
  if (!v) return fallback;
  std::istringstream is(*v);
  long long n = 0;
  std::string rest;
  if (!(is >> n) || (is >> rest) || n < 0) bad(path, "expected a non-negative integer, got '" + *v + "'");
  return static_cast<std::size_t>(n);
}

}  // namespace

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

void ExperimentConfig::validate() const {
  grid.validate();
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("experiment config: " + what);
  };
  require(!estimators.empty(), "at least one estimator is required");
  require(std::set(estimators.begin(), estimators.end()).size() == estimators.size(), "estimators must be distinct");
  require(!seeds.empty(), "seeds must be non-empty");
  require(std::set(seeds.begin(), seeds.end()).size() == seeds.size(), "seeds must be distinct");
  require(learner.alpha > 0.0 && learner.alpha <= 1.0, "alpha must lie in (0, 1]");
  require(learner.gamma >= 0.0 && learner.gamma < 1.0, "gamma must lie in [0, 1)");
  require(learner.bins >= 1, "bins must be at least 1");
  require(learner.epsilon_start >= 0.0 && learner.epsilon_start <= 1.0 && learner.epsilon_end >= 0.0 &&
              learner.epsilon_end <= 1.0,
          "exploration rates must lie in [0, 1]");
  require(episodes >= 1, "episodes must be positive");
  require(eval_interval >= 1 && eval_episodes >= 1, "evaluation interval and size must be positive");
  require(bootstrap_resamples >= 1, "bootstrap resamples must be positive");
  require(perspective.horizon >= 1, "perspective horizon must be at least 1");
  require(perspective.output_index <= perspective.horizon, "output index must not exceed the horizon");
  require(perspective.endpoint_smoothing >= 0.0 && perspective.endpoint_smoothing < 1.0,
          "endpoint smoothing must lie in [0, 1)");
  require(perspective.max_iters >= 1 && perspective.tolerance > 0.0, "solver budget must be positive");
}

std::size_t ExperimentConfig::decay_episodes() const {
  return learner.epsilon_decay_episodes > 0 ? learner.epsilon_decay_episodes : std::max<std::size_t>(1, episodes / 2);
}

std::vector<std::size_t> ExperimentConfig::evaluation_points() const {
  std::vector<std::size_t> out;
  for (std::size_t e = eval_interval; e <= episodes; e += eval_interval) out.push_back(e);
  if (out.empty() || out.back() != episodes) out.push_back(episodes);
  return out;
}

ExperimentConfig parse_config(std::istream& is) {
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) throw ParseError("config: unknown section [" + section + "]");
    if (body.empty() && !body.data().empty()) throw ParseError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ParseError("config: unknown key '" + key + "' in [" + section + "]");
    }
  }

  ExperimentConfig c;
  grid::GridConfig& g = c.grid;
  g.width = get<int>(tree, "grid.width", g.width);
  g.height = get<int>(tree, "grid.height", g.height);
  if (auto v = tree.get_optional<std::string>("grid.walls")) g.walls = parse_cells("grid.walls", *v);
  if (auto v = tree.get_optional<std::string>("grid.goals")) g.goals = parse_cells("grid.goals", *v);
  if (auto v = tree.get_optional<std::string>("grid.leader_start")) {
    g.leader_start = parse_cell("grid.leader_start", *v);
  }
  if (auto v = tree.get_optional<std::string>("grid.follower_start")) {
    g.follower_start = parse_cell("grid.follower_start", *v);
  }
  g.view_radius = get<int>(tree, "grid.view_radius", g.view_radius);
  g.weights.proximity = get<double>(tree, "grid.r_prox", g.weights.proximity);
  g.weights.visibility = get<double>(tree, "grid.r_vis", g.weights.visibility);
  g.weights.goal = get<double>(tree, "grid.r_goal", g.weights.goal);
  g.weights.collision = get<double>(tree, "grid.c_collision", g.weights.collision);
  g.proximity_distance = get<int>(tree, "grid.d_prox", g.proximity_distance);
  g.far_distance = get<int>(tree, "grid.d_far", g.far_distance);
  g.far_patience = get<int>(tree, "grid.k_far", g.far_patience);
  g.max_length = get<int>(tree, "grid.max_length", g.max_length);
  g.collision_limit = get<int>(tree, "grid.collision_limit", g.collision_limit);
  g.leader_noise = get<double>(tree, "grid.leader_noise", g.leader_noise);
  g.seed = get<std::uint64_t>(tree, "grid.seed", g.seed);

  if (auto v = tree.get_optional<std::string>("perspective.estimators")) {
    c.estimators.clear();
    std::string t = *v;
    std::replace(t.begin(), t.end(), ',', ' ');
    std::istringstream ls(t);
    for (std::string name; ls >> name;) {
      const auto k = perspective::parse_estimator(name);
      if (!k) bad("perspective.estimators", "unknown estimator '" + name + "'");
      c.estimators.push_back(*k);
    }
  }
  auto& p = c.perspective;
  p.horizon = get_size(tree, "perspective.horizon", p.horizon);
  p.output_index = get_size(tree, "perspective.output_index", p.output_index);
  if (auto v = tree.get_optional<std::string>("perspective.output")) {
    if (*v == "marginal") {
      p.output = perspective::OutputMode::Marginal;
    } else if (*v == "average") {
      p.output = perspective::OutputMode::Average;
    } else {
      bad("perspective.output", "expected marginal or average, got '" + *v + "'");
    }
  }
  p.endpoint_smoothing = get<double>(tree, "perspective.endpoint_smoothing", p.endpoint_smoothing);
  p.anchor_patience =
      get_size(tree, "perspective.anchor_patience", static_cast<std::size_t>(std::max(0, g.far_patience)));
  p.max_iters = get_size(tree, "perspective.max_iters", p.max_iters);
  p.tolerance = get<double>(tree, "perspective.tolerance", p.tolerance);

  auto& l = c.learner;
  l.alpha = get<double>(tree, "learner.alpha", l.alpha);
  l.gamma = get<double>(tree, "learner.gamma", l.gamma);
  l.epsilon_start = get<double>(tree, "learner.epsilon_start", l.epsilon_start);
  l.epsilon_end = get<double>(tree, "learner.epsilon_end", l.epsilon_end);
  l.epsilon_decay_episodes = get_size(tree, "learner.epsilon_decay_episodes", l.epsilon_decay_episodes);
  l.bins = get_size(tree, "learner.bins", l.bins);

  if (auto v = tree.get_optional<std::string>("experiment.seeds")) {
    c.seeds.clear();
    std::string t = *v;
    std::replace(t.begin(), t.end(), ',', ' ');
    std::istringstream ls(t);
    for (std::string s; ls >> s;) {
      std::size_t used = 0;
      try {
        c.seeds.push_back(std::stoull(s, &used));
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != s.size()) bad("experiment.seeds", "not an integer: '" + s + "'");
    }
  }
  c.episodes = get_size(tree, "experiment.episodes", c.episodes);
  c.eval_interval = get_size(tree, "experiment.eval_interval", c.eval_interval);
  c.eval_episodes = get_size(tree, "experiment.eval_episodes", c.eval_episodes);
  c.bootstrap_resamples = get_size(tree, "experiment.bootstrap_resamples", c.bootstrap_resamples);
  if (auto v = tree.get_optional<std::string>("experiment.output_dir")) c.output_dir = *v;
  c.record_episodes = get_bool(tree, "experiment.record_episodes", c.record_episodes);
  c.plot = get_bool(tree, "experiment.plot", c.plot);
  c.threads = get_size(tree, "experiment.threads", c.threads);

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  try {
    return parse_config(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace sbtom::experiment
