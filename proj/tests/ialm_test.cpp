#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sbtom/ialm.hpp"
#include "sbtom/ialm_io.hpp"
#include "support/models.hpp"

using namespace sbtom;
using namespace sbtom::ialm;
namespace st = sbtom::testing;

namespace {

struct Trajectory {
  std::vector<std::size_t> xs;
  std::vector<std::size_t> as;
  std::vector<std::size_t> us;
  double p;
};

// All corridor trajectories up to `horizon` steps from the coded dynamics.
std::vector<Trajectory> enumerate(const st::Corridor& c, std::size_t horizon,
                                  const std::vector<std::size_t>& open_loop) {
  std::vector<Trajectory> out;
  for (std::size_t f = 0; f < c.length; ++f) {
    for (std::size_t l = 0; l < c.length; ++l) {
      const double p = c.follower_start[f] * c.leader_start[l];
      if (p > 0.0) out.push_back({{f}, {}, {l}, p});
    }
  }
  for (std::size_t t = 0; t < horizon; ++t) {
    std::vector<Trajectory> next;
    for (const auto& tr : out) {
      for (std::size_t a = 0; a < 3; ++a) {
        const double pa = t < open_loop.size() ? (open_loop[t] == a ? 1.0 : 0.0) : 1.0 / 3.0;
        if (pa == 0.0) continue;
        for (std::size_t g = 0; g < 3; ++g) {
          const double pg = c.leader_policy(tr.us.back(), g);
          if (pg == 0.0) continue;
          Trajectory n = tr;
          const std::size_t ln = st::corridor_move(tr.us.back(), g, c.length);
          n.as.push_back(a);
          n.us.push_back(ln);
          n.xs.push_back(st::corridor_follower(tr.xs.back(), a, ln, c.length));
          n.p *= pa * pg;
          next.push_back(std::move(n));
        }
      }
    }
    out = std::move(next);
  }
  return out;
}

// P(u_{t+1} | d(h_t)) pooled over t from explicit trajectories.
std::map<DSet, std::vector<double>> brute_influence(const st::Corridor& c, std::size_t horizon,
                                                  std::size_t window,
                                                  const std::vector<std::size_t>& open_loop) {
  std::map<DSet, std::vector<double>> num;
  for (const auto& tr : enumerate(c, horizon, open_loop)) {
    for (std::size_t t = 0; t < horizon; ++t) {
      const History h({tr.xs.begin(), tr.xs.begin() + t + 1}, {tr.as.begin(), tr.as.begin() + t});
      auto& v = num[d_update(h, window)];
      if (v.empty()) v.assign(c.length, 0.0);
      v[tr.us[t + 1]] += tr.p;
    }
  }
  for (auto& [k, v] : num) {
    double s = 0.0;
    for (double x : v) s += x;
    for (double& x : v) x /= s;
  }
  return num;
}

Factor simple_factor(std::string name, std::size_t card, Role role, Matrix cpt) {
  Factor f;
  f.name = std::move(name);
  f.cardinality = card;
  f.role = role;
  f.cpt = std::move(cpt);
  return f;
}

}  // namespace

TEST_CASE("d_update examples") {
  const std::size_t P = kPad;
  CHECK(d_update(History({7}, {}), 2).values == std::vector<std::size_t>{P, P, P, P, 7});
  CHECK(d_update(History({1, 2, 3}, {10, 20}), 2).values == std::vector<std::size_t>{1, 10, 2, 20, 3});
  CHECK(d_update(History({1, 2, 3, 4}, {10, 20, 30}), 2).values ==
        std::vector<std::size_t>{2, 20, 3, 30, 4});
  CHECK(d_update(History({1, 2}, {10}), 0).values == std::vector<std::size_t>{2});
  CHECK_THROWS_AS(History({1, 2}, {}), InvalidArgument);
}

TEST_CASE("d_update is prefix consistent") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> d(0, 4);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t w = rep % 4;
    std::vector<std::size_t> xs{d(rng)};
    std::vector<std::size_t> as;
    DSet running = d_update(History(xs, as), w);
    for (int t = 0; t < 6; ++t) {
      as.push_back(d(rng));
      xs.push_back(d(rng));
      running = advance(running, as.back(), xs.back());
      const DSet direct = d_update(History(xs, as), w);
      CHECK(running == direct);
      CHECK(d_update(History(xs, as), w) == direct);
    }
  }
}

TEST_CASE("global model validation") {
  const Matrix flat{{1.0}};
  SUBCASE("local factor may not read a non-local factor") {
    Factor y = simple_factor("y", 1, Role::NonLocal, flat);
    Factor x = simple_factor("x", 1, Role::Local, flat);
    x.parents = {0};
    CHECK_THROWS_AS(GlobalModel({y, x}, ActionSpace::anonymous(1), {}, {{1.0}, {1.0}}), InvalidArgument);
  }
  SUBCASE("next-slice parents must come first") {
    Factor x = simple_factor("x", 1, Role::Local, flat);
    x.next_parents = {1};
    Factor u = simple_factor("u", 1, Role::InfluenceSource, flat);
    CHECK_THROWS_AS(GlobalModel({x, u}, ActionSpace::anonymous(1), {}, {{1.0}, {1.0}}), InvalidArgument);
  }
  SUBCASE("table shape") {
    Factor x = simple_factor("x", 2, Role::Local, Matrix{{0.5, 0.5}});
    x.uses_action = true;
    CHECK_THROWS_AS(GlobalModel({x}, ActionSpace::anonymous(2), {}, {{1.0, 0.0}}), DimensionMismatch);
  }
  SUBCASE("row stochastic") {
    Factor x = simple_factor("x", 2, Role::Local, Matrix{{0.5, 0.6}});
    CHECK_THROWS_AS(GlobalModel({x}, ActionSpace::anonymous(1), {}, {{1.0, 0.0}}), InvalidArgument);
  }
  SUBCASE("size guard") {
    std::vector<Factor> fs;
    std::vector<std::vector<double>> init;
    for (int i = 0; i < 3; ++i) {
      fs.push_back(simple_factor("f" + std::to_string(i), 200, i == 0 ? Role::Local : Role::NonLocal,
                                 Matrix(1, 200, 1.0 / 200)));
      init.emplace_back(200, 1.0 / 200);
    }
    CHECK_THROWS_AS(GlobalModel(fs, ActionSpace::anonymous(1), {}, init), ModelTooLarge);
  }
}

TEST_CASE("exact_influence with history-independent sources is constant") {
  // u is iid each step; x ignores u, so no history carries information.
  Factor u = simple_factor("u", 2, Role::InfluenceSource, Matrix{{0.3, 0.7}});
  Factor x = simple_factor("x", 3, Role::Local, Matrix(9, 3));
  x.parents = {1};
  x.uses_action = true;
  for (std::size_t v = 0; v < 3; ++v) {
    for (std::size_t a = 0; a < 3; ++a) x.cpt(v * 3 + a, (v + a) % 3) = 1.0;
  }
  const GlobalModel m({u, x}, ActionSpace::anonymous(3), {}, {{0.5, 0.5}, {1.0, 0.0, 0.0}});
  const InfluenceModel inf = exact_influence(m, {}, 4, 2);
  CHECK(inf.size() > 10);
  for (const auto& [key, dist] : inf.table()) {
    CHECK(dist[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(dist[1] == doctest::Approx(0.7).epsilon(1e-12));
  }
}

TEST_CASE("exact_influence on a two-cell corridor with a deterministic leader") {
  st::Corridor c = st::default_corridor(2);
  for (std::size_t x = 0; x < 2; ++x) {
    c.leader_policy(x, 0) = 0.0;
    c.leader_policy(x, 1) = 0.0;
    c.leader_policy(x, 2) = 1.0;
  }
  c.leader_start = {1.0, 0.0};
  c.follower_start = {0.0, 1.0};
  const auto file = st::corridor_model(c);
  const InfluenceModel inf = exact_influence(file.model, file.policies, 5, 2);
  for (const auto& [key, dist] : inf.table()) {
    CHECK(dist[0] == 0.0);
    CHECK(dist[1] == 1.0);
  }
}

TEST_CASE("exact_influence with a half stay, half move leader") {
  st::Corridor c = st::default_corridor(3);
  for (std::size_t x = 0; x < 3; ++x) {
    c.leader_policy(x, 0) = 0.5;
    c.leader_policy(x, 1) = 0.0;
    c.leader_policy(x, 2) = 0.5;
  }
  c.leader_start = {1.0, 0.0, 0.0};
  c.follower_start = {0.0, 0.0, 1.0};
  const auto file = st::corridor_model(c);
  const InfluenceModel inf = exact_influence(file.model, file.policies, 3, 2);
  const auto oracle = brute_influence(c, 3, 2, {});
  const auto first = inf.lookup(initial_dset(2, 2));
  CHECK_FALSE(first.fallback);
  CHECK(first.distribution[0] == doctest::Approx(0.5));
  CHECK(first.distribution[1] == doctest::Approx(0.5));
  REQUIRE(oracle.size() == inf.size());
  for (const auto& [key, dist] : oracle) {
    const auto got = inf.lookup(key);
    REQUIRE_FALSE(got.fallback);
    for (std::size_t u = 0; u < dist.size(); ++u) CHECK(std::abs(got.distribution[u] - dist[u]) < 1e-12);
  }
}

TEST_CASE("exact_influence matches trajectory enumeration on random corridors") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const st::Corridor c = st::random_corridor(3 + rep % 2, rng);
    const std::size_t w = rep % 3;
    const auto file = st::corridor_model(c);
    const auto inf = exact_influence(file.model, file.policies, 3, w);
    const auto oracle = brute_influence(c, 3, w, {});
    CHECK(oracle.size() == inf.size());
    for (const auto& [key, dist] : oracle) {
      const auto got = inf.lookup(key);
      REQUIRE_FALSE(got.fallback);
      for (std::size_t u = 0; u < dist.size(); ++u) CHECK(std::abs(got.distribution[u] - dist[u]) < 1e-12);
    }
  }
}

TEST_CASE("influence lookup falls back to uniform and counts") {
  const InfluenceModel inf(4, 1, {});
  const auto r = inf.lookup(initial_dset(0, 1));
  CHECK(r.fallback);
  CHECK(r.distribution[2] == 0.25);
  inf.lookup(initial_dset(1, 1));
  CHECK(inf.fallback_count() == 2);
  CHECK_THROWS_AS(InfluenceModel(2, 1, {{initial_dset(0, 2), {0.5, 0.5}}}), DimensionMismatch);
}

TEST_CASE("ialm_transition examples") {
  const StateSpace xs(2);
  const ActionSpace acts = ActionSpace::anonymous(1);
  const DSet d = initial_dset(0, 1);

  SUBCASE("u-independent CPT collapses") {
    const LocalCPT cpt(2, 1, 2, {0.9, 0.1, 0.9, 0.1, 0.4, 0.6, 0.4, 0.6});
    const InfluenceModel inf(2, 1, {{d, {0.8, 0.2}}});
    const Kernel k = ialm_transition(cpt, inf, d, xs, acts);
    CHECK(k(0, 0, 0) == doctest::Approx(0.9));
    CHECK(k(0, 1, 1) == doctest::Approx(0.6));
  }
  SUBCASE("hand marginalization") {
    // row x=0: u=0 -> (0.8, 0.2), u=1 -> (0.4, 0.6)
    const LocalCPT cpt(2, 1, 2, {0.8, 0.2, 0.4, 0.6, 1.0, 0.0, 1.0, 0.0});
    const InfluenceModel inf(2, 1, {{d, {0.25, 0.75}}});
    const Kernel k = ialm_transition(cpt, inf, d, xs, acts);
    CHECK(k(0, 0, 1) == doctest::Approx(0.25 * 0.2 + 0.75 * 0.6).epsilon(1e-15));
    CHECK(k(0, 0, 1) == doctest::Approx(0.5));
  }
  SUBCASE("delta influence selects a slice") {
    const LocalCPT cpt(2, 1, 2, {0.8, 0.2, 0.4, 0.6, 0.3, 0.7, 0.1, 0.9});
    const InfluenceModel inf(2, 1, {{d, {0.0, 1.0}}});
    const Kernel k = ialm_transition(cpt, inf, d, xs, acts);
    CHECK(k(0, 0, 0) == 0.4);
    CHECK(k(0, 1, 1) == 0.9);
  }
}

TEST_CASE("local_reference_from_global examples") {
  SUBCASE("no influence sources") {
    Factor x = simple_factor("x", 2, Role::Local, Matrix{{0.9, 0.1}, {0.2, 0.8}, {0.5, 0.5}, {0.0, 1.0}});
    x.parents = {0};
    x.uses_action = true;
    const GlobalModel m({x}, ActionSpace::anonymous(2), {}, {{1.0, 0.0}});
    const Kernel k = local_reference_from_global(m, {}, 5);
    const LocalCPT cpt = local_cpt(m);
    for (std::size_t xv = 0; xv < 2; ++xv) {
      for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t n = 0; n < 2; ++n) CHECK(k(a, xv, n) == cpt(xv, a, 0, n));
      }
    }
    CHECK(k(0, 0, 1) == 0.1);
  }
  SUBCASE("uniform influence mixes two kernels evenly") {
    const Matrix A{{0.9, 0.1}, {0.3, 0.7}};
    const Matrix B{{0.1, 0.9}, {0.5, 0.5}};
    Factor u = simple_factor("u", 2, Role::InfluenceSource, Matrix{{0.5, 0.5}});
    Factor x = simple_factor("x", 2, Role::Local, Matrix(4, 2));
    x.parents = {1};
    x.next_parents = {0};
    for (std::size_t xv = 0; xv < 2; ++xv) {
      for (std::size_t n = 0; n < 2; ++n) {
        x.cpt(xv * 2 + 0, n) = A(xv, n);
        x.cpt(xv * 2 + 1, n) = B(xv, n);
      }
    }
    const GlobalModel m({u, x}, ActionSpace::anonymous(1), {}, {{0.5, 0.5}, {1.0, 0.0}});
    for (bool stationary : {false, true}) {
      const Kernel k = local_reference_from_global(m, {}, 6, stationary);
      for (std::size_t xv = 0; xv < 2; ++xv) {
        for (std::size_t n = 0; n < 2; ++n) CHECK(k(0, xv, n) == doctest::Approx((A(xv, n) + B(xv, n)) / 2));
      }
    }
  }
}

TEST_CASE("IALM with full-history d-sets reproduces global x-marginals") {
  const st::Corridor c = st::default_corridor(5);
  const auto file = st::corridor_model(c);
  const std::vector<std::size_t> plan{2, 2, 0, 1, 2, 2, 1, 0, 2, 2};
  const LocalPolicy lp{plan};
  const std::size_t H = plan.size();
  const auto inf = exact_influence(file.model, file.policies, H, H, lp);
  const auto ialm = ialm_local_marginals(file.model, local_cpt(file.model), inf, H, lp);
  const auto global = local_marginals(file.model, forward_marginals(file.model, file.policies, H, lp));
  const auto direct = st::corridor_follower_marginals(c, H, plan);
  for (std::size_t t = 0; t <= H; ++t) {
    CHECK(total_variation(ialm[t], global[t]) < 1e-8);
    CHECK(total_variation(global[t], direct[t]) < 1e-12);
  }
  CHECK(inf.fallback_count() == 0);
}

TEST_CASE("model file round-trip") {
  const auto file = st::corridor_model(st::default_corridor(4));
  std::stringstream ss;
  io::write_model(ss, file.model, file.policies);
  const std::string first = ss.str();
  const auto back = io::read_model(ss);
  std::stringstream again;
  io::write_model(again, back.model, back.policies);
  CHECK(again.str() == first);
  CHECK(back.model.factors()[1].next_parents == std::vector<std::size_t>{0});

  std::stringstream bad("ialm-model v2\n");
  CHECK_THROWS_AS(io::read_model(bad), ParseError);
  std::stringstream missing("ialm-model v1\nactions 1 go\nfactor x 2 local\nend\n");
  CHECK_THROWS_AS(io::read_model(missing), ParseError);
}
