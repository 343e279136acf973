#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sbtom/experiment.hpp"
#include "support/oracles.hpp"

using namespace sbtom;
using namespace sbtom::experiment;
using perspective::EstimatorKind;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.grid.width = 4;
  c.grid.height = 4;
  c.grid.goals = {{0, 0}, {3, 3}};
  c.grid.leader_start = {1, 1};
  c.grid.follower_start = {1, 2};
  c.grid.far_distance = 3;
  c.grid.far_patience = 4;
  c.grid.max_length = 20;
  c.perspective.horizon = 3;
  c.perspective.anchor_patience = 4;
  c.seeds = {1};
  c.episodes = 30;
  c.eval_interval = 10;
  c.eval_episodes = 5;
  c.bootstrap_resamples = 1000;
  c.threads = 1;
  return c;
}

const Context& small_context() {
  static const Context ctx(small_config());
  return ctx;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sbtom_experiment_test_" + name);
  fs::remove_all(p);
  return p;
}

// Exact bootstrap distribution of the median by enumerating every resample.
std::vector<std::pair<double, double>> exact_median_distribution(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::map<double, double> mass;
  const double w = std::pow(static_cast<double>(n), -static_cast<double>(n));
  for (const sbtom::testing::Path& idx : sbtom::testing::all_paths(n, n - 1)) {
    std::vector<double> draw;
    for (std::size_t i : idx) draw.push_back(xs[i]);
    std::sort(draw.begin(), draw.end());
    const double m = n % 2 ? draw[n / 2] : 0.5 * (draw[n / 2 - 1] + draw[n / 2]);
    mass[m] += w;
  }
  return {mass.begin(), mass.end()};
}

double exact_quantile(const std::vector<std::pair<double, double>>& dist, double q) {
  double acc = 0.0;
  for (const auto& [v, p] : dist) {
    acc += p;
    if (acc >= q - 1e-12) return v;
  }
  return dist.back().first;
}

}  // namespace

TEST_CASE("featurize reads argmaxes and a clamped confidence bucket") {
  const StateSpace s(9);
  const FeatureKey k = featurize(Belief::delta(s, 2), Belief::delta(s, 7), 4);
  CHECK(k.own == 2);
  CHECK(k.other == 7);
  CHECK(k.bucket == 3);

  CHECK(featurize(Belief::delta(s, 0), Belief::uniform(s), 4).bucket == 0);
  CHECK(featurize(Belief::delta(s, 0), Belief(s, {0, 0, 0.5, 0.5, 0, 0, 0, 0, 0}), 4).bucket == 2);
  CHECK(featurize(Belief::delta(s, 0), Belief::delta(s, 3), 1).bucket == 0);
  CHECK_THROWS_AS(featurize(Belief::delta(s, 0), Belief::delta(s, 3), 0), InvalidArgument);
}

TEST_CASE("featurize commutes with a state permutation") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Belief own = sbtom::testing::random_belief(6, rng);
    const Belief other = sbtom::testing::random_belief(6, rng);
    std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> po(6), pt(6);
    for (std::size_t i = 0; i < 6; ++i) {
      po[perm[i]] = own[i];
      pt[perm[i]] = other[i];
    }
    const FeatureKey a = featurize(own, other, 4);
    const FeatureKey b = featurize(Belief(own.space(), po), Belief(own.space(), pt), 4);
    CHECK(b.own == perm[a.own]);
    CHECK(b.other == perm[a.other]);
    CHECK(b.bucket == a.bucket);
  }
}

TEST_CASE("q_update follows the one-step rule") {
  QTable t;
  const FeatureKey a{0, 0, 0}, b{1, 0, 0};
  q_update(t, a, 2, 1.0, b, true, 0.5, 0.9);
  CHECK(t.values(a)[2] == doctest::Approx(0.5));
  CHECK(t.entries().at(a).count == 1);

  QTable z;
  q_update(z, a, 1, 0.0, b, false, 0.5, 0.9);
  CHECK(z.values(a) == QTable::Values{});

  QTable u;
  u.entry(b).values = {0, 2, 0, 0, 0};
  q_update(u, a, 0, 1.0, b, false, 0.5, 0.9);
  CHECK(u.values(a)[0] == doctest::Approx(0.5 * (1.0 + 0.9 * 2.0)));
  q_update(u, a, 0, 1.0, b, true, 0.5, 0.9);
  CHECK(u.values(a)[0] == doctest::Approx(1.4 + 0.5 * (1.0 - 1.4)));

  CHECK_THROWS_AS(q_update(u, a, 0, 1.0, b, true, 0.0, 0.9), InvalidArgument);
  CHECK_THROWS_AS(q_update(u, a, 5, 1.0, b, true, 0.5, 0.9), InvalidArgument);
}

TEST_CASE("q_update on a two-state chain reaches the discounted return") {
  // s0 -> s1 with reward r0, s1 -> terminal with reward r1.
  const double r0 = 0.25, r1 = 1.0, gamma = 0.9, alpha = 0.3;
  QTable t;
  const FeatureKey s0{0, 0, 0}, s1{1, 0, 0};
  for (int i = 0; i < 400; ++i) {
    q_update(t, s0, 0, r0, s1, false, alpha, gamma);
    q_update(t, s1, 0, r1, s1, true, alpha, gamma);
  }
  CHECK(t.values(s1)[0] == doctest::Approx(r1).epsilon(1e-12));
  CHECK(t.values(s0)[0] == doctest::Approx(r0 + gamma * r1).epsilon(1e-12));
  CHECK(t.greedy(s0) == 0);
}

TEST_CASE("greedy picks the lowest index among ties") {
  QTable t;
  const FeatureKey k{3, 1, 2};
  CHECK(t.greedy(k) == 0);
  t.entry(k).values = {0.1, 0.5, 0.5, -1.0, 0.2};
  CHECK(t.greedy(k) == 1);
  CHECK(t.max_value(k) == 0.5);
}

TEST_CASE("median of odd and even samples") {
  CHECK(median({3.0}) == 3.0);
  CHECK(median({5.0, 1.0, 3.0}) == 3.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK(median({-1.0, -1.0}) == -1.0);
  CHECK_THROWS_AS(median({}), InvalidArgument);
}

TEST_CASE("bootstrap of constant and single samples is degenerate") {
  const MedianCI c = bootstrap_ci_median({2.5, 2.5, 2.5, 2.5}, 10000, 0.95, 7);
  CHECK(c.lower == 2.5);
  CHECK(c.median == 2.5);
  CHECK(c.upper == 2.5);
  const MedianCI s = bootstrap_ci_median({-4.0}, 1000, 0.95, 7);
  CHECK(s.lower == -4.0);
  CHECK(s.median == -4.0);
  CHECK(s.upper == -4.0);
}

TEST_CASE("bootstrap of 1..5 matches the exact resampling distribution") {
  const std::vector<double> xs{1, 2, 3, 4, 5};
  const auto dist = exact_median_distribution(xs);
  const MedianCI ci = bootstrap_ci_median(xs, 10000, 0.95, 2024);
  CHECK(ci.median == 3.0);
  CHECK(ci.lower == exact_quantile(dist, 0.025));
  CHECK(ci.upper == exact_quantile(dist, 0.975));
  CHECK(ci.lower >= 1.0);
  CHECK(ci.upper <= 5.0);
  CHECK(ci.lower <= 3.0);
  CHECK(ci.upper >= 3.0);

  const MedianCI again = bootstrap_ci_median(xs, 10000, 0.95, 2024);
  CHECK(again.lower == ci.lower);
  CHECK(again.upper == ci.upper);
}

TEST_CASE("bootstrap interval on a skewed sample matches the exact quantiles") {
  const std::vector<double> xs{0.0, 0.1, 0.1, 3.0, 7.0, 7.0};
  const auto dist = exact_median_distribution(xs);
  const MedianCI ci = bootstrap_ci_median(xs, 20000, 0.9, 5);
  CHECK(ci.median == doctest::Approx(1.55));
  CHECK(ci.lower == exact_quantile(dist, 0.05));
  CHECK(ci.upper == exact_quantile(dist, 0.95));
}

TEST_CASE("bootstrap rejects bad inputs") {
  CHECK_THROWS_AS(bootstrap_ci_median({}, 100, 0.95, 1), InvalidArgument);
  CHECK_THROWS_AS(bootstrap_ci_median({1.0}, 0, 0.95, 1), InvalidArgument);
  CHECK_THROWS_AS(bootstrap_ci_median({1.0}, 10, 1.0, 1), InvalidArgument);
}

TEST_CASE("rng streams are reproducible and distinct") {
  auto a = make_rng(3, kEnvStream);
  auto b = make_rng(3, kEnvStream);
  auto c = make_rng(3, kExploreStream);
  auto d = make_rng(4, kEnvStream);
  auto e = make_rng(3, kEvalStream, 1);
  auto f = make_rng(3, kEvalStream, 2);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
  CHECK(e() != f());
}

TEST_CASE("exploration decays linearly then holds") {
  ExperimentConfig c;
  c.episodes = 100;
  CHECK(c.decay_episodes() == 50);
  CHECK(exploration_rate(c, 0) == doctest::Approx(1.0));
  CHECK(exploration_rate(c, 25) == doctest::Approx(0.525));
  CHECK(exploration_rate(c, 50) == doctest::Approx(0.05));
  CHECK(exploration_rate(c, 99) == doctest::Approx(0.05));
  c.learner.epsilon_decay_episodes = 10;
  CHECK(exploration_rate(c, 5) == doctest::Approx(0.525));
  c.episodes = 1;
  c.learner.epsilon_decay_episodes = 0;
  CHECK(c.decay_episodes() == 1);
}

TEST_CASE("evaluation points include the final episode") {
  ExperimentConfig c;
  c.episodes = 120;
  c.eval_interval = 50;
  CHECK(c.evaluation_points() == std::vector<std::size_t>{50, 100, 120});
  c.episodes = 100;
  CHECK(c.evaluation_points() == std::vector<std::size_t>{50, 100});
  c.episodes = 1;
  CHECK(c.evaluation_points() == std::vector<std::size_t>{1});
  CHECK(ExperimentConfig{}.evaluation_points().size() == 40);
}

TEST_CASE("config parses every section") {
  std::istringstream in(R"(
# comment
[grid]
width = 5
height = 4
walls = 2,1; 2,2
goals = 0,0; 4,3
leader_start = 1,1
follower_start = 1,2
view_radius = 1
r_prox = 0.5
c_collision = 0.25
k_far = 5
max_length = 30
leader_noise = 0.2

[perspective]
estimators = SB_BRIDGE, NO_INFO
horizon = 3
output_index = 2
output = average
endpoint_smoothing = 0.01

[learner]
alpha = 0.2
gamma = 0.9
epsilon_decay_episodes = 7
bins = 3

[experiment]
seeds = 4 5 6
episodes = 12
eval_interval = 4
eval_episodes = 3
bootstrap_resamples = 500
output_dir = out/here
record_episodes = false
plot = no
threads = 2
)");
  const ExperimentConfig c = parse_config(in);
  CHECK(c.grid.width == 5);
  CHECK(c.grid.height == 4);
  CHECK(c.grid.walls == std::vector<grid::Cell>{{2, 1}, {2, 2}});
  CHECK(c.grid.goals == std::vector<grid::Cell>{{0, 0}, {4, 3}});
  CHECK(c.grid.leader_start == grid::Cell{1, 1});
  CHECK(c.grid.view_radius == 1);
  CHECK(c.grid.weights.proximity == 0.5);
  CHECK(c.grid.weights.visibility == 0.02);
  CHECK(c.grid.weights.collision == 0.25);
  CHECK(c.grid.far_patience == 5);
  CHECK(c.grid.leader_noise == 0.2);
  CHECK(c.estimators == std::vector<EstimatorKind>{EstimatorKind::SbBridge, EstimatorKind::NoInfo});
  CHECK(c.perspective.horizon == 3);
  CHECK(c.perspective.output_index == 2);
  CHECK(c.perspective.output == perspective::OutputMode::Average);
  CHECK(c.perspective.endpoint_smoothing == 0.01);
  CHECK(c.perspective.anchor_patience == 5);
  CHECK(c.learner.alpha == 0.2);
  CHECK(c.learner.gamma == 0.9);
  CHECK(c.learner.epsilon_start == 1.0);
  CHECK(c.learner.epsilon_decay_episodes == 7);
  CHECK(c.learner.bins == 3);
  CHECK(c.seeds == std::vector<std::uint64_t>{4, 5, 6});
  CHECK(c.episodes == 12);
  CHECK(c.eval_interval == 4);
  CHECK(c.eval_episodes == 3);
  CHECK(c.bootstrap_resamples == 500);
  CHECK(c.output_dir == fs::path("out/here"));
  CHECK_FALSE(c.record_episodes);
  CHECK_FALSE(c.plot);
  CHECK(c.threads == 2);
}

TEST_CASE("empty config gives the defaults") {
  std::istringstream in("");
  const ExperimentConfig c = parse_config(in);
  CHECK(c.grid.width == 7);
  CHECK(c.grid.goals.size() == 4);
  CHECK(c.seeds.size() == 5);
  CHECK(c.episodes == 2000);
  CHECK(c.eval_interval == 50);
  CHECK(c.eval_episodes == 20);
  CHECK(c.bootstrap_resamples == 10000);
  CHECK(c.learner.alpha == 0.1);
  CHECK(c.learner.gamma == 0.95);
  CHECK(c.learner.epsilon_end == 0.05);
  CHECK(c.learner.bins == 4);
  CHECK(c.perspective.horizon == 4);
  CHECK(c.perspective.anchor_patience == 8);
}

TEST_CASE("shipped default config spells out the built-in defaults") {
  const ExperimentConfig c = load_config(fs::path(SBTOM_SOURCE_DIR) / "configs" / "default.ini");
  std::istringstream empty("");
  const ExperimentConfig d = parse_config(empty);
  const grid::GridConfig &g = c.grid, &h = d.grid;
  CHECK(g.width == h.width);
  CHECK(g.height == h.height);
  CHECK(g.walls == h.walls);
  CHECK(g.goals == h.goals);
  CHECK(g.leader_start == h.leader_start);
  CHECK(g.follower_start == h.follower_start);
  CHECK(g.view_radius == h.view_radius);
  CHECK(g.weights.proximity == h.weights.proximity);
  CHECK(g.weights.visibility == h.weights.visibility);
  CHECK(g.weights.goal == h.weights.goal);
  CHECK(g.weights.collision == h.weights.collision);
  CHECK(g.proximity_distance == h.proximity_distance);
  CHECK(g.far_distance == h.far_distance);
  CHECK(g.far_patience == h.far_patience);
  CHECK(g.max_length == h.max_length);
  CHECK(g.collision_limit == h.collision_limit);
  CHECK(g.leader_noise == h.leader_noise);
  CHECK(g.seed == h.seed);
  CHECK(c.estimators == std::vector<EstimatorKind>(std::begin(perspective::kAllEstimators),
                                                   std::end(perspective::kAllEstimators)));
  CHECK(c.perspective.horizon == d.perspective.horizon);
  CHECK(c.perspective.output_index == d.perspective.output_index);
  CHECK(c.perspective.output == d.perspective.output);
  CHECK(c.perspective.endpoint_smoothing == d.perspective.endpoint_smoothing);
  CHECK(c.perspective.anchor_patience == d.perspective.anchor_patience);
  CHECK(c.perspective.max_iters == d.perspective.max_iters);
  CHECK(c.perspective.tolerance == d.perspective.tolerance);
  CHECK(c.learner.alpha == d.learner.alpha);
  CHECK(c.learner.gamma == d.learner.gamma);
  CHECK(c.learner.epsilon_start == d.learner.epsilon_start);
  CHECK(c.learner.epsilon_end == d.learner.epsilon_end);
  CHECK(c.learner.epsilon_decay_episodes == d.learner.epsilon_decay_episodes);
  CHECK(c.learner.bins == d.learner.bins);
  CHECK(c.seeds == d.seeds);
  CHECK(c.episodes == d.episodes);
  CHECK(c.eval_interval == d.eval_interval);
  CHECK(c.eval_episodes == d.eval_episodes);
  CHECK(c.bootstrap_resamples == d.bootstrap_resamples);
  CHECK(c.output_dir == d.output_dir);
  CHECK(c.record_episodes == d.record_episodes);
  CHECK(c.plot == d.plot);
  CHECK(c.threads == d.threads);
}

TEST_CASE("config errors") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
  };
  CHECK_THROWS_AS(parse("[grid]\nwidht = 3\n"), ParseError);
  CHECK_THROWS_AS(parse("[gird]\nwidth = 3\n"), ParseError);
  CHECK_THROWS_AS(parse("[grid]\nwidth = three\n"), ParseError);
  CHECK_THROWS_AS(parse("[grid]\ngoals = 1;2\n"), ParseError);
  CHECK_THROWS_AS(parse("[perspective]\nestimators = ORACLE\n"), ParseError);
  CHECK_THROWS_AS(parse("[perspective]\noutput = mean\n"), ParseError);
  CHECK_THROWS_AS(parse("[experiment]\nseeds = 1 x\n"), ParseError);
  CHECK_THROWS_AS(parse("[experiment]\nepisodes = -3\n"), ParseError);
  CHECK_THROWS_AS(parse("[experiment]\nplot = maybe\n"), ParseError);
  CHECK_THROWS_AS(parse("[grid\nwidth = 3\n"), ParseError);
  CHECK_THROWS_AS(parse("[experiment]\nseeds = 1 1\n"), InvalidArgument);
  CHECK_THROWS_AS(parse("[experiment]\nseeds =\n"), InvalidArgument);
  CHECK_THROWS_AS(parse("[learner]\nalpha = 0\n"), InvalidArgument);
  CHECK_THROWS_AS(parse("[learner]\ngamma = 1\n"), InvalidArgument);
  CHECK_THROWS_AS(parse("[learner]\nbins = 0\n"), InvalidArgument);
  CHECK_THROWS_AS(parse("[grid]\nleader_start = 9,9\n"), InvalidArgument);
  CHECK_THROWS_AS(parse("[perspective]\nestimators = NO_INFO NO_INFO\n"), InvalidArgument);
  CHECK_THROWS_AS(load_config("/nonexistent/sbtom.ini"), IoError);
}

TEST_CASE("q-table round-trips exactly") {
  QTable t;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (std::size_t i = 0; i < 50; ++i) {
    auto& e = t.entry({i % 7, i % 5, i % 3});
    for (double& v : e.values) v = n(rng) * 1e3;
    e.count = i + 1;
  }
  std::stringstream ss;
  t.save(ss);
  const QTable back = QTable::load(ss);
  CHECK(back == t);
  CHECK(back.size() == t.size());
}

TEST_CASE("q-table parse errors") {
  auto load = [](const std::string& text) {
    std::istringstream in(text);
    return QTable::load(in);
  };
  CHECK_THROWS_AS(load(""), ParseError);
  CHECK_THROWS_AS(load("qtable v2\n"), ParseError);
  CHECK_THROWS_AS(load("sbtom-qtable v1\nactions 4\nentries 0\n"), ParseError);
  CHECK_THROWS_AS(load("sbtom-qtable v1\nactions 5\nentries 1\n"), ParseError);
  CHECK_THROWS_AS(load("sbtom-qtable v1\nactions 5\nentries 1\n0 0 0 1 1 2 3 4\n"), ParseError);
  CHECK_THROWS_AS(load("sbtom-qtable v1\nactions 5\nentries 1\n0 0 0 1 1 2 3 4 nan\n"), ParseError);
  CHECK_THROWS_AS(load("sbtom-qtable v1\nactions 5\nentries 1\n0 0 0 1 1 2 3 4 5 6\n"), ParseError);
  CHECK_THROWS_AS(load("sbtom-qtable v1\nactions 5\nentries 2\n0 0 0 1 1 2 3 4 5\n0 0 0 1 1 2 3 4 5\n"),
                  ParseError);
  CHECK(load("sbtom-qtable v1\nactions 5\nentries 0\n").size() == 0);
  CHECK_THROWS_AS(QTable::load(fs::path("/nonexistent/q.qtable")), IoError);
}

TEST_CASE("context rejects a mismatched reference kernel") {
  const ExperimentConfig c = small_config();
  const Kernel wrong(StateSpace(3), grid::action_space(), std::vector<Matrix>(grid::kNumActions, Matrix::identity(3)));
  CHECK_THROWS_AS(Context(c, wrong), DimensionMismatch);
}

TEST_CASE("smoke run writes one episode file and one returns row") {
  ExperimentConfig c = small_config();
  c.episodes = 1;
  c.output_dir = scratch("smoke");
  const ReturnsTable t = run_experiment(Context(c, small_context().reference));
  REQUIRE(t.seeds.size() == 1);
  CHECK(t.seeds[0].eval_medians.size() == 1);
  CHECK(t.aggregate.size() == 1);

  const fs::path dir = c.output_dir / "SB_BRIDGE";
  CHECK(fs::exists(dir / "seed_1_episodes.txt"));
  CHECK(fs::exists(dir / "seed_1.qtable"));
  CHECK(fs::exists(c.output_dir / "returns.svg"));

  std::istringstream csv(slurp(dir / "seed_1.csv"));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "# sbtom-returns v1 estimator=SB_BRIDGE");
  CHECK(lines[1] == "seed,episode_index,eval_return_median_over_E");
  CHECK(lines[2].rfind("1,1,", 0) == 0);

  std::istringstream eps(slurp(dir / "seed_1_episodes.txt"));
  std::getline(eps, line);
  CHECK(line == grid::episode_columns());
  std::size_t steps = 0;
  while (std::getline(eps, line)) {
    CHECK(line.rfind("0 ", 0) == 0);
    ++steps;
  }
  CHECK(steps >= 1);
  CHECK(static_cast<int>(steps) <= c.grid.max_length);
  fs::remove_all(c.output_dir);
}

TEST_CASE("identical configs produce byte-identical outputs") {
  ExperimentConfig c = small_config();
  c.estimators = {EstimatorKind::SbBridge, EstimatorKind::ReferenceRollout};
  c.seeds = {3, 8};
  c.threads = 2;
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  c.output_dir = a;
  run_experiment(Context(c, small_context().reference));
  c.output_dir = b;
  c.threads = 1;
  run_experiment(Context(c, small_context().reference));
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    CHECK_MESSAGE(slurp(entry.path()) == slurp(b / rel), rel.string());
    ++compared;
  }
  CHECK(compared == 2 * 2 * 3 + 2);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("run_seed is deterministic and records the schedule") {
  const Context& ctx = small_context();
  const SeedResult a = run_seed(ctx, EstimatorKind::PerfectInfo, 9);
  const SeedResult b = run_seed(ctx, EstimatorKind::PerfectInfo, 9);
  CHECK(a.eval_medians == b.eval_medians);
  CHECK(a.train_returns == b.train_returns);
  CHECK(a.table == b.table);
  CHECK(a.evaluation_points == std::vector<std::size_t>{10, 20, 30});
  CHECK(a.train_returns.size() == 30);
  CHECK(a.fallbacks == 0);
  for (const auto& [k, e] : a.table.entries()) {
    for (double v : e.values) CHECK(std::isfinite(v));
    const bool touched = std::any_of(e.values.begin(), e.values.end(), [](double v) { return v != 0.0; });
    if (touched) CHECK(e.count >= 1);
  }
}

TEST_CASE("swapping estimators leaves the ego trace intact until actions diverge") {
  const Context& ctx = small_context();
  std::map<EstimatorKind, std::vector<EpisodeTrace>> traces;
  for (EstimatorKind k : perspective::kAllEstimators) {
    QTable table;
    auto env = make_rng(21, kEnvStream);
    auto explore = make_rng(21, kExploreStream);
    for (int e = 0; e < 15; ++e) traces[k].push_back(run_episode(ctx, k, table, 0.3, env, explore));
  }
  const auto& base = traces[EstimatorKind::SbBridge];
  for (EstimatorKind k : perspective::kAllEstimators) {
    const auto& other = traces[k];
    std::size_t e = 0;
    for (; e < base.size(); ++e) {
      const auto& x = base[e].record.steps;
      const auto& y = other[e].record.steps;
      std::size_t t = 0;
      while (t < x.size() && t < y.size() && x[t].action == y[t].action && x[t].state == y[t].state) ++t;
      // Traces agree on every decision up to and including the first differing action.
      const std::size_t upto = std::min({t + 1, base[e].ego.size(), other[e].ego.size()});
      for (std::size_t i = 0; i < upto; ++i) {
        const auto p = base[e].ego[i].probs(), q = other[e].ego[i].probs();
        REQUIRE(std::equal(p.begin(), p.end(), q.begin(), q.end()));
      }
      if (t < x.size() || t < y.size()) break;
    }
    if (k == EstimatorKind::SbBridge) CHECK(e == base.size());
  }
}

TEST_CASE("greedy episodes leave the table untouched") {
  const Context& ctx = small_context();
  QTable table;
  auto env = make_rng(2, kEnvStream);
  auto explore = make_rng(2, kExploreStream);
  for (int e = 0; e < 5; ++e) run_episode(ctx, EstimatorKind::NoInfo, table, 0.5, env, explore);
  const QTable before = table;
  auto eval = make_rng(2, kEvalStream);
  const EpisodeTrace t = run_greedy_episode(ctx, EstimatorKind::NoInfo, table, eval);
  CHECK(table == before);
  double total = 0.0;
  for (const auto& s : t.record.steps) total += s.reward;
  CHECK(t.record.total_return == doctest::Approx(total));
  CHECK(t.record.cause != grid::Termination::None);
}

TEST_CASE("aggregate keeps the CI ordering at every point") {
  ExperimentConfig c = small_config();
  c.estimators = {EstimatorKind::NoInfo};
  c.seeds = {1, 2, 3, 4};
  c.episodes = 20;
  std::vector<SeedResult> seeds;
  for (std::uint64_t s : c.seeds) seeds.push_back(run_seed(small_context(), EstimatorKind::NoInfo, s));
  const ReturnsTable t = aggregate(seeds, c);
  REQUIRE(t.aggregate.size() == 2);
  for (const AggregateRow& row : t.aggregate) {
    CHECK(row.ci.lower <= row.ci.median);
    CHECK(row.ci.median <= row.ci.upper);
  }
  CHECK(t.samples(EstimatorKind::NoInfo, 1).size() == 4);
  CHECK(t.aggregate[0].ci.median == median(t.samples(EstimatorKind::NoInfo, 0)));
  CHECK(t.curve(EstimatorKind::SbBridge).empty());
}

TEST_CASE("episodes_to_fraction finds the first point at the target") {
  ReturnsTable t;
  const EstimatorKind k = EstimatorKind::SbBridge;
  const double medians[] = {0.1, 0.5, 0.85, 0.7, 1.0};
  for (std::size_t p = 0; p < 5; ++p) t.aggregate.push_back({k, 10 * (p + 1), {medians[p], medians[p], medians[p]}});
  CHECK(episodes_to_fraction(t, k, 0.8) == std::optional<std::size_t>(30));
  CHECK(episodes_to_fraction(t, k, 1.0) == std::optional<std::size_t>(50));
  CHECK(episodes_to_fraction(t, k, 0.0) == std::optional<std::size_t>(10));
  CHECK_FALSE(episodes_to_fraction(t, EstimatorKind::NoInfo, 0.8));

  ReturnsTable neg;
  for (std::size_t p = 0; p < 3; ++p) neg.aggregate.push_back({k, p + 1, {-3.0 + p, -3.0 + p, -3.0 + p}});
  // Final -1; 80% of a negative final value is -1.2.
  CHECK(episodes_to_fraction(neg, k, 0.8) == std::optional<std::size_t>(3));
}

TEST_CASE("run_experiment surfaces output errors with the path") {
  ExperimentConfig c = small_config();
  c.episodes = 1;
  const fs::path blocker = scratch("blocker");
  std::ofstream(blocker) << "x";
  c.output_dir = blocker / "sub";
  try {
    run_experiment(Context(c, small_context().reference));
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(blocker.string()) != std::string::npos);
  }
  fs::remove(blocker);
}
