#pragma once

// Tabular Q-learning harness comparing other-belief estimators on the
// person-following grid.
//
// Randomness: every (seed, stream) pair seeds its own mt19937_64 through
// std::seed_seq{seed, stream, ...}. Streams: env 1, exploration 2,
// bootstrap 3, evaluation 4.

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sbtom/belief.hpp"
#include "sbtom/grid.hpp"
#include "sbtom/perspective.hpp"

namespace sbtom::experiment {

enum Stream : std::uint64_t { kEnvStream = 1, kExploreStream = 2, kBootstrapStream = 3, kEvalStream = 4 };

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

struct LearnerSettings {
  double alpha = 0.1;
  double gamma = 0.95;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  /// 0 means half of the episodes.
  std::size_t epsilon_decay_episodes = 0;
  std::size_t bins = 4;
};

struct ExperimentConfig {
  grid::GridConfig grid;
  std::vector<perspective::EstimatorKind> estimators{perspective::EstimatorKind::SbBridge};
  perspective::TrackerSettings perspective;
  LearnerSettings learner;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t episodes = 2000;
  std::size_t eval_interval = 50;
  std::size_t eval_episodes = 20;
  std::size_t bootstrap_resamples = 10000;
  std::filesystem::path output_dir = "results";
  bool record_episodes = true;
  bool plot = true;
  /// 0 picks std::thread::hardware_concurrency().
  std::size_t threads = 0;

  /// Throws InvalidArgument on any violated invariant.
  void validate() const;
  std::size_t decay_episodes() const;
  /// Episodes after which the greedy policy is evaluated (1-based counts).
  std::vector<std::size_t> evaluation_points() const;
};

/// INI-style sections [grid], [perspective], [learner], [experiment].
/// Unknown keys are rejected. Cells are written "x,y"; lists are separated by
/// whitespace, cell lists by ';'.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::filesystem::path& path);

struct FeatureKey {
  std::size_t own = 0;
  std::size_t other = 0;
  std::size_t bucket = 0;
  friend auto operator<=>(const FeatureKey&, const FeatureKey&) = default;
};

/// (argmax b_own, argmax b_other, floor(m * max b_other) clamped to m - 1).
FeatureKey featurize(const Belief& own, const Belief& other, std::size_t bins);

class QTable {
 public:
  static constexpr std::size_t kActions = grid::kNumActions;
  using Values = std::array<double, kActions>;

  struct Entry {
    Values values{};
    std::size_t count = 0;
  };

  /// Zeros for unseen keys.
  Values values(const FeatureKey& key) const;
  double max_value(const FeatureKey& key) const;
  /// Lowest action index among the maxima.
  std::size_t greedy(const FeatureKey& key) const;
  Entry& entry(const FeatureKey& key) { return table_[key]; }
  const std::map<FeatureKey, Entry>& entries() const noexcept { return table_; }
  std::size_t size() const noexcept { return table_.size(); }

  void save(std::ostream& os) const;
  static QTable load(std::istream& is);
  void save(const std::filesystem::path& path) const;
  static QTable load(const std::filesystem::path& path);

  friend bool operator==(const QTable&, const QTable&);

 private:
  std::map<FeatureKey, Entry> table_;
};

bool operator==(const QTable::Entry& a, const QTable::Entry& b);

/// Q(key,a) += alpha (reward + gamma max_a' Q(next,a') [not done] - Q(key,a)).
void q_update(QTable& table, const FeatureKey& key, std::size_t action, double reward, const FeatureKey& next,
              bool done, double alpha, double gamma);

/// Median; the two middle values are averaged for even sizes.
double median(std::vector<double> values);

struct MedianCI {
  double lower = 0.0;
  double median = 0.0;
  double upper = 0.0;
};

/// Percentile bootstrap of the median with nearest-rank quantiles. The
/// interval is widened to contain the sample median when resampling misses it.
MedianCI bootstrap_ci_median(const std::vector<double>& samples, std::size_t resamples, double level,
                             std::uint64_t seed);

/// Read-only inputs shared by all workers.
struct Context {
  explicit Context(const ExperimentConfig& config);
  Context(const ExperimentConfig& config, Kernel reference);

  ExperimentConfig config;
  grid::World world;
  Kernel reference;
};

struct EpisodeTrace {
  grid::EpisodeRecord record;
  /// Filtered leader beliefs b_0 before each decision.
  std::vector<Belief> ego;
  std::size_t fallbacks = 0;
};

/// One training episode: explores with `epsilon` and updates `table`.
EpisodeTrace run_episode(const Context& ctx, perspective::EstimatorKind kind, QTable& table, double epsilon,
                         std::mt19937_64& env, std::mt19937_64& explore);
/// One greedy episode; `table` is left untouched.
EpisodeTrace run_greedy_episode(const Context& ctx, perspective::EstimatorKind kind, const QTable& table,
                                std::mt19937_64& env);

/// Linear decay from epsilon_start to epsilon_end over the decay episodes.
double exploration_rate(const ExperimentConfig& config, std::size_t episode);

struct SeedResult {
  perspective::EstimatorKind estimator;
  std::uint64_t seed = 0;
  std::vector<std::size_t> evaluation_points;
  std::vector<double> eval_medians;
  std::vector<double> train_returns;
  QTable table;
  std::size_t fallbacks = 0;
  std::size_t decisions = 0;
};

/// Returns under greedy play at one evaluation point.
std::vector<double> evaluate(const Context& ctx, perspective::EstimatorKind kind, const QTable& table,
                             std::uint64_t seed, std::size_t point_index, std::size_t episodes);

/// Episode records are appended to `episodes` when given.
SeedResult run_seed(const Context& ctx, perspective::EstimatorKind kind, std::uint64_t seed,
                    std::ostream* episodes = nullptr);

struct AggregateRow {
  perspective::EstimatorKind estimator;
  std::size_t evaluation_point = 0;
  MedianCI ci;
};

struct ReturnsTable {
  std::vector<SeedResult> seeds;
  std::vector<AggregateRow> aggregate;

  /// Per-seed medians at evaluation point index p for one estimator.
  std::vector<double> samples(perspective::EstimatorKind kind, std::size_t p) const;
  std::vector<const AggregateRow*> curve(perspective::EstimatorKind kind) const;
};

ReturnsTable aggregate(std::vector<SeedResult> seeds, const ExperimentConfig& config);

/// Trains every (estimator, seed) pair on worker threads and writes:
///   <out>/<ESTIMATOR>/seed_<s>.csv, seed_<s>.qtable[, seed_<s>_episodes.txt]
///   <out>/aggregate.csv[, <out>/returns.svg]
ReturnsTable run_experiment(const ExperimentConfig& config);
ReturnsTable run_experiment(const Context& ctx);

void write_seed_csv(std::ostream& os, const SeedResult& r);
void write_aggregate_csv(std::ostream& os, const ReturnsTable& table);
void write_plot_svg(std::ostream& os, const ReturnsTable& table);

/// Episodes needed for the aggregate median to first reach `fraction` of its
/// final value; nullopt if it never does.
std::optional<std::size_t> episodes_to_fraction(const ReturnsTable& table, perspective::EstimatorKind kind,
                                                double fraction);

}  // namespace sbtom::experiment
