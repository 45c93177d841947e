#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <unordered_set>

#include "test_util.hpp"

using namespace tccp;

namespace {

constexpr Timestamp S = 1'700'000'000;
const Horizon kH{S, S + days(200)};

Profile profile(const std::string& id) { return {id, 30, Gender::female, 3, S - days(100), 2}; }

// `n` logins of `user` spread over the days before `t`.
void add_logins(std::vector<Event>& ev, const std::string& user, Timestamp t, int n, int span_days = 30) {
  for (int i = 0; i < n; ++i)
    ev.push_back({user, t - days(span_days) + (days(span_days) * i) / std::max(1, n) + 7, EventKind::login,
                  std::nullopt});
}

std::vector<Profile> profiles_for(std::initializer_list<const char*> ids) {
  std::vector<Profile> out;
  for (auto id : ids) out.push_back(profile(id));
  return out;
}

}  // namespace

TEST(Candidates, TwelveIncludedThirteenExcluded) {
  const Timestamp t = S + days(60);
  std::vector<Event> ev;
  add_logins(ev, "twelve", t, 12);
  add_logins(ev, "thirteen", t, 13);
  add_logins(ev, "one", t, 1);
  const EventLog log(ev, kH);
  const EventIndex idx(log);
  const auto profiles = profiles_for({"twelve", "thirteen", "one", "idle"});
  EXPECT_EQ(select_candidates(idx, profiles, t), (std::vector<std::string>{"one", "twelve"}));
}

TEST(Candidates, NeedsThirtyDaysOfHistory) {
  const EventLog log({}, kH);
  const EventIndex idx(log);
  const auto profiles = profiles_for({"a"});
  EXPECT_THROW(select_candidates(idx, profiles, S + days(29)), DataError);
  EXPECT_NO_THROW(select_candidates(idx, profiles, S + days(30)));
}

TEST(Candidates, MatchBruteForceCount) {
  const auto sim = simulate(testutil::small_sim(50, 8));
  const EventIndex idx(sim.log);
  const Timestamp t = sim.config.t_start + days(90);
  std::map<std::string, int> counts;
  for (const auto& e : sim.log.events())
    if (e.kind == EventKind::login && e.ts >= t - days(30) && e.ts < t) ++counts[e.user_id];
  std::vector<std::string> expect;
  for (const auto& [u, n] : counts)
    if (n >= 1 && n <= 12) expect.push_back(u);
  EXPECT_EQ(select_candidates(idx, sim.population.profiles, t), expect);
}

TEST(Labeling, PnWhenOpCoversCpAndPuOtherwise) {
  const auto sim = simulate(testutil::small_sim(600, 2));
  const EventIndex idx(sim.log);
  const FeatureLayout layout({7, 15, 30}, 4096);
  WindowSpec w{sim.config.t_start + days(120), 90, 90, {7, 15, 30}};
  const auto pn = build_window(idx, sim.population.profiles, w, layout);
  EXPECT_TRUE(pn.U.empty());
  EXPECT_FALSE(pn.N.empty());
  w.op_days = 15;
  const auto pu = build_window(idx, sim.population.profiles, w, layout);
  EXPECT_TRUE(pu.N.empty());
  EXPECT_FALSE(pu.U.empty());
}

TEST(Labeling, NestedWindowsAreMonotone) {
  const auto sim = simulate(testutil::small_sim(1500, 3));
  const EventIndex idx(sim.log);
  const Timestamp t = sim.config.t_start + days(120);
  const auto& profiles = sim.population.profiles;
  WindowSpec w7{t, 7, 90, {7, 15, 30}}, w15{t, 15, 90, {7, 15, 30}};
  const auto c7 = select_candidates(idx, profiles, w7.op_start());
  const auto c15 = select_candidates(idx, profiles, w15.op_start());
  std::vector<std::string> both;
  std::set_intersection(c7.begin(), c7.end(), c15.begin(), c15.end(), std::back_inserter(both));
  ASSERT_FALSE(both.empty());
  const auto l7 = label_users(idx, both, w7);
  const auto l15 = label_users(idx, both, w15);
  const std::set<std::string> p15(l15.P.begin(), l15.P.end());
  for (const auto& u : l7.P) EXPECT_TRUE(p15.count(u)) << u;
}

TEST(Labeling, EmptyCandidatesGiveEmptySet) {
  const EventLog log({}, kH);
  const EventIndex idx(log);
  const WindowSpec w{S + days(100), 15, 90, {7, 15, 30}};
  const auto s = label_window(idx, {}, w, {}, 100);
  EXPECT_EQ(s.size(), 0u);
}

TEST(WindowSpec, Validation) {
  EXPECT_THROW(validate(WindowSpec{0, 0, 90, {7}}), ConfigError);
  EXPECT_THROW(validate(WindowSpec{0, 15, 90, {15, 7}}), ConfigError);
  EXPECT_NO_THROW(validate(WindowSpec{0, 120, 90, {7, 15, 30}}));
}

TEST(Features, EmptyHistoryUsesNeverBucket) {
  const EventLog log({}, kH);
  const EventIndex idx(log);
  const FeatureLayout layout({7, 15, 30}, 2048);
  const auto stats = behavior_stats(idx, "ghost", S + days(60), layout.lookbacks());
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(stats.logins[i], 0u);
    EXPECT_EQ(stats.pays[i], 0u);
    EXPECT_EQ(stats.amount[i], 0.0);
  }
  EXPECT_FALSE(stats.days_since_last_login);
  const auto fv = featurize_user(layout, profile("ghost"), stats, S + days(60));
  EXPECT_GT(fv.value_at(layout.recency_offset() + buckets::kRecencyNever), 0.0);
  EXPECT_EQ(fv.value_at(layout.login_raw(0)), 0.0);
  EXPECT_GT(fv.value_at(layout.login_bucket(0, 0)), 0.0);
}

TEST(Features, ThreeLoginsInLastSevenDays) {
  const Timestamp t = S + days(60);
  std::vector<Event> ev;
  for (int d : {1, 3, 5}) ev.push_back({"u", t - days(d), EventKind::login, std::nullopt});
  const EventLog log(ev, kH);
  const EventIndex idx(log);
  const FeatureLayout layout({7, 15, 30}, 2048);
  const auto stats = behavior_stats(idx, "u", t, layout.lookbacks());
  EXPECT_EQ(stats.logins[0], 3u);
  EXPECT_EQ(*stats.days_since_last_login, 1);
  const auto fv = featurize_user(layout, profile("u"), stats, t);
  EXPECT_GT(fv.value_at(layout.login_bucket(0, buckets::count(3))), 0.0);
  EXPECT_GT(fv.value_at(layout.login_raw(0)), 0.0);
}

TEST(Features, UnitNorm) {
  const auto sim = simulate(testutil::small_sim(200, 4));
  const EventIndex idx(sim.log);
  const FeatureLayout layout({7, 15, 30}, FeatureLayout::default_dim(std::vector<int>{7, 15, 30}));
  const Timestamp t = sim.config.t_start + days(80);
  const auto cands = select_candidates(idx, sim.population.profiles, t);
  const auto fm = extract_features(idx, profile_lookup(sim.population.profiles), cands, t, layout);
  for (const auto& [u, fv] : fm) {
    double sq = 0;
    for (const auto& [j, v] : fv.entries()) sq += v * v;
    EXPECT_NEAR(sq, 1.0, 1e-12);
  }
}

// Every raw count feature equals an exhaustive scan of the log.
TEST(Features, CountsMatchBruteForceScan) {
  const auto sim = simulate(testutil::small_sim(150, 6));
  const EventIndex idx(sim.log);
  const std::vector<int> lbs{7, 15, 30};
  const FeatureLayout layout(lbs, 4096);
  const Timestamp t = sim.config.t_start + days(75);
  const auto lookup = profile_lookup(sim.population.profiles);
  for (const auto& p : sim.population.profiles) {
    const auto stats = behavior_stats(idx, p.user_id, t, lbs);
    std::vector<double> raw;
    for (std::size_t i = 0; i < lbs.size(); ++i) {
      std::size_t logins = 0, pays = 0;
      double amount = 0.0;
      for (const auto& e : sim.log.events()) {
        if (e.user_id != p.user_id || e.ts < t - days(lbs[i]) || e.ts >= t) continue;
        if (e.kind == EventKind::login)
          ++logins;
        else {
          ++pays;
          amount += *e.amount;
        }
      }
      ASSERT_EQ(stats.logins[i], logins);
      ASSERT_EQ(stats.pays[i], pays);
      ASSERT_NEAR(stats.amount[i], amount, 1e-9);
      raw.push_back(logins ? std::min(1.0, std::log1p(double(logins)) / std::log1p(64.0)) : 0.0);
    }
    // scaled values keep their ratios after normalization
    const auto fv = featurize_user(layout, p, stats, t);
    if (raw[0] > 0 && raw[2] > 0) {
      EXPECT_NEAR(fv.value_at(layout.login_raw(0)) / fv.value_at(layout.login_raw(2)), raw[0] / raw[2], 1e-12);
    }
  }
}

TEST(Features, MissingProfileIsAnError) {
  const auto sim = simulate(testutil::small_sim(20));
  const EventIndex idx(sim.log);
  const FeatureLayout layout({7, 15, 30}, 2048);
  std::vector<std::string> who{"nobody"};
  EXPECT_THROW(extract_features(idx, profile_lookup(sim.population.profiles), who, sim.config.t_start + days(40),
                                layout),
               DataError);
}

// Events inside the observation window never reach the features.
TEST(Features, NoLeakFromObservationWindow) {
  const auto sim = simulate(testutil::small_sim(500, 12));
  const WindowSpec w{sim.config.t_start + days(120), 15, 90, {7, 15, 30}};
  const FeatureLayout layout(w.lookbacks, 8192);
  const EventIndex idx(sim.log);
  const auto base = build_window(idx, sim.population.profiles, w, layout);

  auto events = sim.log.events();
  std::mt19937_64 rng(1);
  for (const auto& p : sim.population.profiles)
    for (int k = 0; k < 3; ++k)
      events.push_back({p.user_id, w.op_start() + static_cast<Timestamp>(rng() % days(15)), EventKind::pay, 99.0});
  const EventLog perturbed(events, sim.log.horizon());
  const EventIndex pidx(perturbed);
  const auto cands = select_candidates(pidx, sim.population.profiles, w.op_start());
  const auto feats = extract_features(pidx, profile_lookup(sim.population.profiles), cands, w.op_start(), layout);
  for (const auto* part : {&base.P, &base.U})
    for (const auto& s : *part) EXPECT_EQ(feats.at(s.user_id), s.features) << s.user_id;
}

TEST(Cross, DeterministicAndValueSensitive) {
  const FeatureLayout layout({7, 15, 30}, 1u << 18);
  const Categorical age{kAgeId, 3};
  const auto a = layout.cross_index(age, {kLoginBucketId + 7, 2});
  EXPECT_EQ(a, layout.cross_index(age, {kLoginBucketId + 7, 2}));
  EXPECT_NE(a, layout.cross_index(age, {kLoginBucketId + 7, 3}));
  EXPECT_GE(a, layout.cross_begin());
  EXPECT_LT(a, layout.dim());
}

// Occupied slots after n uniform draws into m cells: m (1 - (1 - 1/m)^n).
TEST(Cross, CollisionRateNearBirthdayBound) {
  const std::uint32_t m = 1u << 18;
  const int n = 10000;
  std::mt19937_64 rng(77);
  std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t>> inputs;
  std::unordered_set<std::uint32_t> slots;
  while (static_cast<int>(inputs.size()) < n) {
    const Categorical a{static_cast<std::uint32_t>(rng() % 1000), static_cast<std::uint32_t>(rng() % 1000)};
    const Categorical b{static_cast<std::uint32_t>(rng() % 1000), static_cast<std::uint32_t>(rng() % 1000)};
    if (!inputs.emplace(a.id, a.value, b.id, b.value).second) continue;
    slots.insert(cross(a, b, 0, m));
  }
  const double expected_collisions = n - m * (1.0 - std::pow(1.0 - 1.0 / m, n));
  const double observed = n - static_cast<double>(slots.size());
  // collisions are close to Poisson
  EXPECT_NEAR(observed, expected_collisions, 5.0 * std::sqrt(expected_collisions));
}

TEST(Layout, RejectsDimWithoutCrossRegion) {
  EXPECT_THROW(FeatureLayout({7, 15, 30}, 20), ConfigError);
}

TEST(Buckets, Edges) {
  EXPECT_EQ(buckets::count(0), 0);
  EXPECT_EQ(buckets::count(2), 2);
  EXPECT_EQ(buckets::count(4), 3);
  EXPECT_EQ(buckets::count(17), 6);
  EXPECT_EQ(buckets::recency(1), 0);
  EXPECT_EQ(buckets::recency(3), 1);
  EXPECT_EQ(buckets::recency(30), 4);
  EXPECT_EQ(buckets::recency(std::nullopt), buckets::kRecencyNever);
}
