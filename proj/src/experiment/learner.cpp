#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sbtom/experiment.hpp"

namespace sbtom::experiment {

FeatureKey featurize(const Belief& own, const Belief& other, std::size_t bins) {
  if (bins == 0) throw InvalidArgument("featurize needs at least one bin");
  const double top = other.max_prob();
  const auto bucket = static_cast<std::size_t>(std::floor(static_cast<double>(bins) * top));
  return {own.argmax(), other.argmax(), std::min(bucket, bins - 1)};
}

QTable::Values QTable::values(const FeatureKey& key) const {
  const auto it = table_.find(key);
  return it == table_.end() ? Values{} : it->second.values;
}

double QTable::max_value(const FeatureKey& key) const {
  const Values v = values(key);
  return *std::max_element(v.begin(), v.end());
}

std::size_t QTable::greedy(const FeatureKey& key) const {
  const Values v = values(key);
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

bool operator==(const QTable::Entry& a, const QTable::Entry& b) {
  return a.values == b.values && a.count == b.count;
}

bool operator==(const QTable& a, const QTable& b) { return a.table_ == b.table_; }

void QTable::save(std::ostream& os) const {
  os << "sbtom-qtable v1\n";
  os << "actions " << kActions << "\n";
  os << "entries " << table_.size() << "\n";
  char buf[32];
  for (const auto& [k, e] : table_) {
    os << k.own << ' ' << k.other << ' ' << k.bucket << ' ' << e.count;
    for (double v : e.values) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      os << buf;
    }
    os << '\n';
  }
}

QTable QTable::load(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(is, line)) throw ParseError(std::string("q-table: missing ") + what);
    ++line_no;
    return std::istringstream(line);
  };
  auto fail = [&](const std::string& what) -> void {
    throw ParseError("q-table line " + std::to_string(line_no) + ": " + what);
  };
  if (next_line("header").str() != "sbtom-qtable v1") fail("expected 'sbtom-qtable v1'");
  std::string word;
  std::size_t actions = 0, entries = 0;
  {
    auto ls = next_line("action count");
    if (!(ls >> word >> actions) || word != "actions") fail("expected 'actions <n>'");
    if (actions != kActions) fail("action count " + std::to_string(actions) + " does not match " +
                                  std::to_string(kActions));
  }
  {
    auto ls = next_line("entry count");
    if (!(ls >> word >> entries) || word != "entries") fail("expected 'entries <n>'");
  }
  QTable t;
  for (std::size_t i = 0; i < entries; ++i) {
    auto ls = next_line("entry");
    FeatureKey k;
    Entry e;
    if (!(ls >> k.own >> k.other >> k.bucket >> e.count)) fail("expected 'own other bucket count values...'");
    for (double& v : e.values) {
      if (!(ls >> v) || !std::isfinite(v)) fail("expected " + std::to_string(kActions) + " finite values");
    }
    std::string extra;
    if (ls >> extra) fail("trailing token '" + extra + "'");
    if (!t.table_.emplace(k, e).second) fail("duplicate key");
  }
  return t;
}

void QTable::save(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write q-table " + path.string());
  save(f);
  if (!f) throw IoError("write failed for q-table " + path.string());
}

QTable QTable::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open q-table " + path.string());
  try {
    return load(f);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void q_update(QTable& table, const FeatureKey& key, std::size_t action, double reward, const FeatureKey& next,
              bool done, double alpha, double gamma) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
  if (action >= QTable::kActions) throw InvalidArgument("action out of range");
  const double bootstrap = done ? 0.0 : gamma * table.max_value(next);
  QTable::Entry& e = table.entry(key);
  e.values[action] += alpha * (reward + bootstrap - e.values[action]);
  ++e.count;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty sample");
  const std::size_t n = values.size();
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n / 2), values.end());
  const double hi = values[n / 2];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n / 2));
  return 0.5 * (lo + hi);
}

MedianCI bootstrap_ci_median(const std::vector<double>& samples, std::size_t resamples, double level,
                             std::uint64_t seed) {
  if (samples.empty()) throw InvalidArgument("bootstrap of an empty sample");
  if (resamples == 0) throw InvalidArgument("bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence level must lie in (0, 1)");
  MedianCI ci;
  ci.median = median(samples);
  std::mt19937_64 rng = make_rng(seed, kBootstrapStream);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  std::vector<double> meds(resamples), draw(samples.size());
  for (std::size_t b = 0; b < resamples; ++b) {
    for (double& d : draw) d = samples[pick(rng)];
    meds[b] = median(draw);
  }
  std::sort(meds.begin(), meds.end());
  auto rank = [&](double q) {
    const auto r = static_cast<std::size_t>(std::ceil(q * static_cast<double>(resamples)));
    return meds[std::clamp<std::size_t>(r, 1, resamples) - 1];
  };
  const double tail = 0.5 * (1.0 - level);
  ci.lower = std::min(rank(tail), ci.median);
  ci.upper = std::max(rank(1.0 - tail), ci.median);
  return ci;
}

}  // namespace sbtom::experiment
