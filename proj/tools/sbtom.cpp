#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>

#include "sbtom/belief_io.hpp"
#include "sbtom/bridge.hpp"
#include "sbtom/bridge_io.hpp"
#include "sbtom/experiment.hpp"
#include "sbtom/grid.hpp"
#include "sbtom/perspective.hpp"
#include "sbtom/perspective_io.hpp"

namespace {

using namespace sbtom;
using perspective::EstimatorKind;

constexpr int kExitError = 1;
constexpr int kExitUnreachable = 2;
constexpr int kExitNoConvergence = 3;

/// Output file or stdout when the path is empty or "-".
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw IoError("cannot write '" + path + "'");
  }
  std::ostream& get() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

EstimatorKind estimator_arg(const std::string& name) {
  const auto k = perspective::parse_estimator(name);
  if (!k) throw InvalidArgument("unknown estimator '" + name + "'");
  return *k;
}

struct TrainArgs {
  std::string config;
  std::string output_dir;
  std::size_t threads = 0;
  bool threads_set = false;
};

int train(const TrainArgs& args) {
  experiment::ExperimentConfig cfg = experiment::load_config(args.config);
  if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
  if (args.threads_set) cfg.threads = args.threads;
  const auto t0 = std::chrono::steady_clock::now();
  const experiment::ReturnsTable table = experiment::run_experiment(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::cout << "estimator final_median ci_low ci_high episodes_to_80pct fallback_rate\n";
  for (EstimatorKind k : cfg.estimators) {
    const auto curve = table.curve(k);
    const auto& last = *curve.back();
    const auto reach = experiment::episodes_to_fraction(table, k, 0.8);
    std::size_t fallbacks = 0, decisions = 0;
    for (const auto& s : table.seeds) {
      if (s.estimator != k) continue;
      fallbacks += s.fallbacks;
      decisions += s.decisions;
    }
    std::cout << perspective::estimator_name(k) << ' ' << fixed(last.ci.median) << ' ' << fixed(last.ci.lower) << ' '
              << fixed(last.ci.upper) << ' ' << (reach ? std::to_string(*reach) : "never") << ' '
              << fixed(decisions ? static_cast<double>(fallbacks) / static_cast<double>(decisions) : 0.0) << '\n';
  }
  std::cout << "wrote " << cfg.output_dir.string() << " in " << fixed(secs) << " s\n";
  return 0;
}

struct EvalArgs {
  std::string config;
  std::string qtable;
  std::string estimator;
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t point = 0;
};

int eval(const EvalArgs& args) {
  const experiment::ExperimentConfig cfg = experiment::load_config(args.config);
  const EstimatorKind kind = args.estimator.empty() ? cfg.estimators.front() : estimator_arg(args.estimator);
  const experiment::QTable table = experiment::QTable::load(std::filesystem::path(args.qtable));
  const experiment::Context ctx(cfg);
  const std::uint64_t seed = args.seed_set ? args.seed : cfg.seeds.front();
  const std::size_t n = args.episodes ? args.episodes : cfg.eval_episodes;
  const std::vector<double> returns = experiment::evaluate(ctx, kind, table, seed, args.point, n);
  const experiment::MedianCI ci = experiment::bootstrap_ci_median(returns, cfg.bootstrap_resamples, 0.95, seed);
  std::cout << "estimator " << perspective::estimator_name(kind) << '\n';
  std::cout << "episodes " << n << '\n';
  std::cout << "median " << fixed(ci.median) << '\n';
  std::cout << "ci95 " << fixed(ci.lower) << ' ' << fixed(ci.upper) << '\n';
  std::cout << "returns";
  for (double r : returns) std::cout << ' ' << fixed(r);
  std::cout << '\n';
  return 0;
}

struct SolveArgs {
  std::string problem;
  std::string output;
};

int bridge_solve(const SolveArgs& args) {
  const bridge::BridgeProblem problem = bridge::io::load_problem(args.problem);
  try {
    const bridge::BridgeSolution s = bridge::solve_bridge(problem);
    Sink out(args.output);
    bridge::io::write_solution(out.get(), s, bridge::kl_path(s, problem));
    return 0;
  } catch (const bridge::UnreachableEndpoint& e) {
    std::cerr << "unreachable endpoint: " << e.what() << '\n';
    return kExitUnreachable;
  } catch (const bridge::NoConvergence& e) {
    std::cerr << "no convergence: " << e.what() << '\n';
    return kExitNoConvergence;
  }
}

struct RolloutArgs {
  std::string config;
  std::string policy = "random";
  std::size_t episodes = 1;
  std::uint64_t seed = 0;
  std::string output;
  bool render = false;
};

/// Walks the shortest path toward the last leader sighting; stays when adjacent or with no sighting.
class ScriptedFollower {
 public:
  explicit ScriptedFollower(const grid::GridConfig& config) : config_(config) {}

  void reset(const grid::GridState& s) { target_ = s.leader; }

  std::size_t act(const grid::GridState& s, const grid::Observation& obs) {
    if (obs.leader_visible) target_ = s.leader;
    if (!target_ || grid::manhattan(s.follower, *target_) <= 1) return grid::kStay;
    const std::vector<int> dist = grid::distance_map(config_, *target_);
    std::size_t best = grid::kStay;
    int best_d = dist[config_.index(s.follower)];
    for (std::size_t a = 0; a < grid::kNumActions; ++a) {
      const grid::Cell c = grid::moved(s.follower, a);
      if (!config_.in_bounds(c) || config_.is_wall(c)) continue;
      const int d = dist[config_.index(c)];
      if (d >= 0 && (best_d < 0 || d < best_d)) {
        best = a;
        best_d = d;
      }
    }
    return best;
  }

 private:
  const grid::GridConfig& config_;
  std::optional<grid::Cell> target_;
};

int rollout(const RolloutArgs& args) {
  const experiment::ExperimentConfig cfg = experiment::load_config(args.config);
  if (args.policy != "random" && args.policy != "scripted") {
    throw InvalidArgument("policy must be random or scripted, got '" + args.policy + "'");
  }
  const grid::World world(cfg.grid);
  Sink out(args.output);
  out.get() << grid::episode_columns() << '\n';
  ScriptedFollower scripted(cfg.grid);
  std::uniform_int_distribution<std::size_t> any(0, grid::kNumActions - 1);
  for (std::size_t e = 0; e < args.episodes; ++e) {
    std::mt19937_64 env = experiment::make_rng(args.seed, experiment::kEnvStream, e);
    std::mt19937_64 pick = experiment::make_rng(args.seed, experiment::kExploreStream, e);
    grid::EpisodeRecord rec;
    grid::GridState s = world.reset(env);
    rec.initial = s;
    scripted.reset(s);
    grid::Observation obs = grid::observe(cfg.grid, s);
    while (!s.done()) {
      const std::size_t a = args.policy == "random" ? any(pick) : scripted.act(s, obs);
      const grid::StepResult r = world.step(s, a, env);
      rec.steps.push_back({r.observation, a, r.reward, r.state});
      rec.total_return += r.reward;
      s = r.state;
      obs = r.observation;
    }
    rec.cause = s.cause;
    grid::write_episode(out.get(), e, rec);
    if (args.render) std::cerr << "episode " << e << " return " << fixed(rec.total_return) << " cause "
                               << grid::termination_name(rec.cause) << '\n'
                               << grid::render(cfg.grid, s) << '\n';
  }
  return 0;
}

struct ShiftArgs {
  std::string request;
  std::string output;
};

int perspective_shift(const ShiftArgs& args) {
  const perspective::PerspectiveRequest req = perspective::io::load_request(args.request);
  Sink out(args.output);
  perspective::io::write_result(out.get(), perspective::shift_detailed(req));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Belief bridging for other-agent estimates on a person-following grid"};
  app.require_subcommand(1);

  TrainArgs targs;
  auto* train_cmd = app.add_subcommand("train", "Train every (estimator, seed) pair and write CSVs");
  train_cmd->add_option("--config", targs.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--output-dir", targs.output_dir, "Override [experiment] output_dir");
  auto* threads_opt = train_cmd->add_option("--threads", targs.threads, "Worker threads (0 = hardware)");

  EvalArgs eargs;
  auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of a saved Q-table");
  eval_cmd->add_option("--config", eargs.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--qtable", eargs.qtable, "Q-table file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--estimator", eargs.estimator, "Estimator (default: first in config)");
  eval_cmd->add_option("--episodes", eargs.episodes, "Episodes (default: eval_episodes)");
  auto* seed_opt = eval_cmd->add_option("--seed", eargs.seed, "Evaluation seed (default: first seed)");
  eval_cmd->add_option("--point", eargs.point, "Evaluation stream index");

  SolveArgs sargs;
  auto* bridge_cmd = app.add_subcommand("bridge", "Schroedinger bridge tools");
  bridge_cmd->require_subcommand(1);
  auto* solve_cmd = bridge_cmd->add_subcommand("solve", "Solve a bridge problem file");
  solve_cmd->add_option("problem", sargs.problem, "Problem file")->required()->check(CLI::ExistingFile);
  solve_cmd->add_option("-o,--output", sargs.output, "Solution file (default: stdout)");

  RolloutArgs rargs;
  auto* rollout_cmd = app.add_subcommand("rollout", "Run episodes under a fixed follower policy");
  rollout_cmd->add_option("--config", rargs.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  rollout_cmd->add_option("--policy", rargs.policy, "random or scripted")
      ->check(CLI::IsMember({"random", "scripted"}));
  rollout_cmd->add_option("-n,--episodes", rargs.episodes, "Episode count");
  rollout_cmd->add_option("--seed", rargs.seed, "RNG seed");
  rollout_cmd->add_option("-o,--output", rargs.output, "Output file (default: stdout)");
  rollout_cmd->add_flag("--render", rargs.render, "Print final grids to stderr");

  ShiftArgs pargs;
  auto* persp_cmd = app.add_subcommand("perspective", "Other-agent belief tools");
  persp_cmd->require_subcommand(1);
  auto* shift_cmd = persp_cmd->add_subcommand("shift", "Run one perspective request and print the estimate");
  shift_cmd->add_option("request", pargs.request, "Request file")->required()->check(CLI::ExistingFile);
  shift_cmd->add_option("-o,--output", pargs.output, "Output file (default: stdout)");

  CLI11_PARSE(app, argc, argv);
  targs.threads_set = threads_opt->count() > 0;
  eargs.seed_set = seed_opt->count() > 0;

  try {
    if (*train_cmd) return train(targs);
    if (*eval_cmd) return eval(eargs);
    if (*solve_cmd) return bridge_solve(sargs);
    if (*rollout_cmd) return rollout(rargs);
    if (*shift_cmd) return perspective_shift(pargs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
