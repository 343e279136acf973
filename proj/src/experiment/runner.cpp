#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <ostream>
#include <thread>

#include "sbtom/experiment.hpp"

namespace sbtom::experiment {
namespace {

using perspective::EstimatorKind;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Belief own_belief(const grid::GridConfig& c, const grid::GridState& s) {
  return Belief::delta(StateSpace(c.num_cells()), c.index(s.follower));
}

EpisodeTrace play(const Context& ctx, EstimatorKind kind, const QTable& policy, QTable* learn, double epsilon,
                  std::mt19937_64& env, std::mt19937_64* explore) {
  const ExperimentConfig& cfg = ctx.config;
  const grid::GridConfig& g = cfg.grid;
  perspective::OtherTracker tracker(ctx.world, ctx.reference, cfg.perspective);
  EpisodeTrace trace;
  grid::GridState s = ctx.world.reset(env);
  trace.record.initial = s;
  tracker.reset(s);

  auto key_of = [&](const grid::GridState& st) {
    const perspective::Estimate e = tracker.estimate(kind, st);
    trace.fallbacks += e.fell_back;
    return featurize(own_belief(g, st), e.belief, cfg.learner.bins);
  };
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any(0, grid::kNumActions - 1);

  FeatureKey key = key_of(s);
  while (!s.done()) {
    trace.ego.push_back(tracker.ego_belief());
    std::size_t a = policy.greedy(key);
    if (explore && coin(*explore) < epsilon) a = any(*explore);
    const grid::StepResult r = ctx.world.step(s, a, env);
    tracker.update(r.state, r.observation);
    const FeatureKey next = r.done ? key : key_of(r.state);
    if (learn) q_update(*learn, key, a, r.reward, next, r.done, cfg.learner.alpha, cfg.learner.gamma);
    trace.record.steps.push_back({r.observation, a, r.reward, r.state});
    trace.record.total_return += r.reward;
    s = r.state;
    key = next;
  }
  trace.record.cause = s.cause;
  return trace;
}

}  // namespace

Context::Context(const ExperimentConfig& c) : Context(c, perspective::grid_reference(c.grid)) {}

Context::Context(const ExperimentConfig& c, Kernel ref) : config(c), world(c.grid), reference(std::move(ref)) {
  config.validate();
  if (reference.num_states() != config.grid.num_cells() || reference.num_actions() != grid::kNumActions) {
    throw DimensionMismatch("reference kernel does not match the grid");
  }
}

EpisodeTrace run_episode(const Context& ctx, EstimatorKind kind, QTable& table, double epsilon,
                         std::mt19937_64& env, std::mt19937_64& explore) {
  return play(ctx, kind, table, &table, epsilon, env, &explore);
}

EpisodeTrace run_greedy_episode(const Context& ctx, EstimatorKind kind, const QTable& table, std::mt19937_64& env) {
  return play(ctx, kind, table, nullptr, 0.0, env, nullptr);
}

double exploration_rate(const ExperimentConfig& config, std::size_t episode) {
  const auto& l = config.learner;
  const double frac = std::min(1.0, static_cast<double>(episode) / static_cast<double>(config.decay_episodes()));
  return l.epsilon_start + frac * (l.epsilon_end - l.epsilon_start);
}

std::vector<double> evaluate(const Context& ctx, EstimatorKind kind, const QTable& table, std::uint64_t seed,
                             std::size_t point_index, std::size_t episodes) {
  std::mt19937_64 env = make_rng(seed, kEvalStream, point_index);
  std::vector<double> out;
  for (std::size_t e = 0; e < episodes; ++e) out.push_back(run_greedy_episode(ctx, kind, table, env).record.total_return);
  return out;
}

SeedResult run_seed(const Context& ctx, EstimatorKind kind, std::uint64_t seed, std::ostream* episodes) {
  const ExperimentConfig& cfg = ctx.config;
  SeedResult r;
  r.estimator = kind;
  r.seed = seed;
  r.evaluation_points = cfg.evaluation_points();
  std::mt19937_64 env = make_rng(seed, kEnvStream);
  std::mt19937_64 explore = make_rng(seed, kExploreStream);
  if (episodes) *episodes << grid::episode_columns() << '\n';
  std::size_t p = 0;
  for (std::size_t e = 1; e <= cfg.episodes; ++e) {
    const EpisodeTrace t = run_episode(ctx, kind, r.table, exploration_rate(cfg, e - 1), env, explore);
    r.train_returns.push_back(t.record.total_return);
    r.fallbacks += t.fallbacks;
    r.decisions += t.record.steps.size() + 1;
    if (episodes) grid::write_episode(*episodes, e - 1, t.record);
    if (p < r.evaluation_points.size() && e == r.evaluation_points[p]) {
      r.eval_medians.push_back(median(evaluate(ctx, kind, r.table, seed, p, cfg.eval_episodes)));
      ++p;
    }
  }
  return r;
}

std::vector<double> ReturnsTable::samples(EstimatorKind kind, std::size_t p) const {
  std::vector<double> out;
  for (const SeedResult& s : seeds) {
    if (s.estimator == kind) out.push_back(s.eval_medians.at(p));
  }
  return out;
}

std::vector<const AggregateRow*> ReturnsTable::curve(EstimatorKind kind) const {
  std::vector<const AggregateRow*> out;
  for (const AggregateRow& row : aggregate) {
    if (row.estimator == kind) out.push_back(&row);
  }
  return out;
}

ReturnsTable aggregate(std::vector<SeedResult> seeds, const ExperimentConfig& config) {
  ReturnsTable t;
  t.seeds = std::move(seeds);
  const auto points = config.evaluation_points();
  for (EstimatorKind k : config.estimators) {
    for (std::size_t p = 0; p < points.size(); ++p) {
      const auto xs = t.samples(k, p);
      if (xs.empty()) continue;
      const std::uint64_t bseed = config.seeds.front() ^ (0x9E3779B97F4A7C15ULL * (p + 1));
      t.aggregate.push_back({k, points[p], bootstrap_ci_median(xs, config.bootstrap_resamples, 0.95, bseed)});
    }
  }
  return t;
}

void write_seed_csv(std::ostream& os, const SeedResult& r) {
  os << "# sbtom-returns v1 estimator=" << perspective::estimator_name(r.estimator) << "\n";
  os << "seed,episode_index,eval_return_median_over_E\n";
  for (std::size_t p = 0; p < r.eval_medians.size(); ++p) {
    os << r.seed << ',' << r.evaluation_points[p] << ',' << num(r.eval_medians[p]) << '\n';
  }
}

void write_aggregate_csv(std::ostream& os, const ReturnsTable& table) {
  os << "# sbtom-aggregate v1\n";
  os << "estimator,evaluation_point,median,ci_low,ci_high\n";
  for (const AggregateRow& row : table.aggregate) {
    os << perspective::estimator_name(row.estimator) << ',' << row.evaluation_point << ',' << num(row.ci.median)
       << ',' << num(row.ci.lower) << ',' << num(row.ci.upper) << '\n';
  }
}

void write_plot_svg(std::ostream& os, const ReturnsTable& table) {
  constexpr double W = 760, H = 440, L = 70, R = 190, T = 30, B = 50;
  double xmax = 1, ymin = 0, ymax = 0;
  bool first = true;
  for (const AggregateRow& row : table.aggregate) {
    xmax = std::max(xmax, static_cast<double>(row.evaluation_point));
    if (first) ymin = row.ci.lower, ymax = row.ci.upper, first = false;
    ymin = std::min(ymin, row.ci.lower);
    ymax = std::max(ymax, row.ci.upper);
  }
  if (ymax - ymin < 1e-9) ymax = ymin + 1.0;
  auto px = [&](double x) { return L + (W - L - R) * x / xmax; };
  auto py = [&](double y) { return T + (H - T - B) * (1.0 - (y - ymin) / (ymax - ymin)); };
  auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  static const char* colors[] = {"#1b6ca8", "#2e8b57", "#c0392b", "#8e44ad"};

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x=\"" << L - 8 << "\" y=\"" << f(py(y) + 4) << "\" font-size=\"11\" text-anchor=\"end\">" << f(y)
       << "</text>\n";
    const double x = xmax * i / 4.0;
    os << "<text x=\"" << f(px(x)) << "\" y=\"" << H - B + 18 << "\" font-size=\"11\" text-anchor=\"middle\">"
       << static_cast<long long>(std::lround(x)) << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10
     << "\" font-size=\"12\" text-anchor=\"middle\">training episodes</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (T + H - B) / 2 << ")\">median return (95% CI)</text>\n";

  int idx = 0;
  for (EstimatorKind k : perspective::kAllEstimators) {
    const auto rows = table.curve(k);
    if (rows.empty()) continue;
    const char* color = colors[idx % 4];
    os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
    for (const AggregateRow* r : rows) os << f(px(static_cast<double>(r->evaluation_point))) << ',' << f(py(r->ci.upper)) << ' ';
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
      os << f(px(static_cast<double>((*it)->evaluation_point))) << ',' << f(py((*it)->ci.lower)) << ' ';
    }
    os << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const AggregateRow* r : rows) os << f(px(static_cast<double>(r->evaluation_point))) << ',' << f(py(r->ci.median)) << ' ';
    os << "\"/>\n";
    const double ly = T + 20.0 * idx;
    os << "<line x1=\"" << W - R + 15 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 40 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 46 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << perspective::estimator_name(k)
       << "</text>\n";
    ++idx;
  }
  os << "</svg>\n";
}

std::optional<std::size_t> episodes_to_fraction(const ReturnsTable& table, EstimatorKind kind, double fraction) {
  const auto rows = table.curve(kind);
  if (rows.empty()) return std::nullopt;
  const double final_value = rows.back()->ci.median;
  const double target = final_value - (1.0 - fraction) * std::abs(final_value);
  for (const AggregateRow* r : rows) {
    if (r->ci.median >= target) return r->evaluation_point;
  }
  return std::nullopt;
}

ReturnsTable run_experiment(const ExperimentConfig& config) {
  config.validate();
  return run_experiment(Context(config));
}

ReturnsTable run_experiment(const Context& ctx) {
  const ExperimentConfig& cfg = ctx.config;
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.output_dir.string() + ": " + ec.message());
  for (EstimatorKind k : cfg.estimators) {
    fs::create_directories(cfg.output_dir / perspective::estimator_name(k), ec);
    if (ec) throw IoError("cannot create output directory " + (cfg.output_dir / perspective::estimator_name(k)).string());
  }

  struct Job {
    EstimatorKind kind;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (EstimatorKind k : cfg.estimators) {
    for (std::uint64_t s : cfg.seeds) jobs.push_back({k, s});
  }
  std::vector<SeedResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (std::size_t j; (j = cursor.fetch_add(1)) < jobs.size();) {
      try {
        const fs::path dir = cfg.output_dir / perspective::estimator_name(jobs[j].kind);
        const std::string stem = "seed_" + std::to_string(jobs[j].seed);
        std::ofstream ep;
        if (cfg.record_episodes) {
          ep.open(dir / (stem + "_episodes.txt"));
          if (!ep) throw IoError("cannot write " + (dir / (stem + "_episodes.txt")).string());
        }
        results[j] = run_seed(ctx, jobs[j].kind, jobs[j].seed, cfg.record_episodes ? &ep : nullptr);
        std::ofstream csv(dir / (stem + ".csv"));
        if (!csv) throw IoError("cannot write " + (dir / (stem + ".csv")).string());
        write_seed_csv(csv, results[j]);
        results[j].table.save(dir / (stem + ".qtable"));
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  std::size_t n = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  n = std::min(n, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (!errors[j]) continue;
    try {
      std::rethrow_exception(errors[j]);
    } catch (const std::exception& e) {
      throw Error(std::string(perspective::estimator_name(jobs[j].kind)) + " seed " +
                  std::to_string(jobs[j].seed) + ": " + e.what());
    }
  }

  ReturnsTable table = aggregate(std::move(results), cfg);
  std::ofstream agg(cfg.output_dir / "aggregate.csv");
  if (!agg) throw IoError("cannot write " + (cfg.output_dir / "aggregate.csv").string());
  write_aggregate_csv(agg, table);
  if (cfg.plot) {
    std::ofstream svg(cfg.output_dir / "returns.svg");
    if (!svg) throw IoError("cannot write " + (cfg.output_dir / "returns.svg").string());
    write_plot_svg(svg, table);
  }
  return table;
}

}  // namespace sbtom::experiment
