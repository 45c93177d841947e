#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tccp/data_model.hpp"
#include "tccp/hashing.hpp"

namespace tccp {

struct SimConfig {
  std::size_t n_users = 50000;
  Timestamp t_start = 1451606400;  // 2016-01-01T00:00:00Z
  Timestamp t_end = 1451606400 + days(240);
  // Engagement (expected logins per day) is log-normal with this median and sigma.
  double login_rate_median = 0.09;
  double login_rate_sigma = 0.7;
  double pay_prob = 0.3;
  double drift_strength = 2.0;
  // Daily churn probability of a median-engagement user with neutral profile.
  double hazard_base = 0.004;
  // Hazard multiplies by engagement^(-hazard_engagement).
  double hazard_engagement = 0.0;
  // Scale of the drifting profile- and pay-affinity-driven log-hazard terms.
  double hazard_profile = 1.2;
  // Scale of the time-invariant age and user-level log-hazard term.
  double hazard_stable = 4.0;
  int n_cities = 24;
  std::uint64_t seed = 7;

  int horizon_days() const { return static_cast<int>((t_end - t_start) / kSecondsPerDay); }
  Horizon horizon() const { return {t_start, t_end}; }
};

inline void validate(const SimConfig& c) {
  if (c.t_start >= c.t_end) throw ConfigError("simulation requires t_start < t_end");
  if ((c.t_end - c.t_start) % kSecondsPerDay != 0)
    throw ConfigError("simulation horizon must span whole days");
  if (!(c.login_rate_median >= 0.0) || !(c.login_rate_sigma >= 0.0))
    throw ConfigError("login rate parameters must be nonnegative");
  if (!(c.pay_prob >= 0.0 && c.pay_prob <= 1.0)) throw ConfigError("pay_prob must lie in [0, 1]");
  if (!(c.drift_strength >= 0.0)) throw ConfigError("drift_strength must be nonnegative");
  if (!(c.hazard_base >= 0.0 && c.hazard_base <= 1.0))
    throw ConfigError("hazard_base must lie in [0, 1]");
  if (!(c.hazard_engagement >= 0.0) || !(c.hazard_profile >= 0.0) || !(c.hazard_stable >= 0.0))
    throw ConfigError("hazard scales must be nonnegative");
  if (c.n_cities < 1) throw ConfigError("n_cities must be at least 1");
}

struct UserTruth {
  std::string user_id;
  double engagement = 0.0;
  double pay_affinity = 1.0;
  std::optional<Timestamp> churn_ts;

  bool operator==(const UserTruth&) const = default;
};

inline std::string user_id_for(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "u%07zu", i);
  return buf;
}

// Per-city and per-gender log-hazard loadings. Each attribute carries an
// "early" and a "late" loading; drift rotates the hazard from one to the other.
class HazardModel {
 public:
  explicit HazardModel(const SimConfig& cfg) : cfg_(cfg) {
    std::mt19937_64 rng(hashing::combine(cfg.seed, hashing::fnv1a("hazard-loadings")));
    std::normal_distribution<double> unit(0.0, 1.0);
    city_early_.resize(cfg.n_cities);
    city_late_.resize(cfg.n_cities);
    for (int c = 0; c < cfg.n_cities; ++c) {
      city_early_[c] = 0.6 * unit(rng);
      city_late_[c] = 0.6 * unit(rng);
    }
  }

  // Rotation angle of the drifting hazard terms on day `day` since t_start.
  double phase(int day) const {
    return cfg_.drift_strength * 0.5 * std::numbers::pi * day / std::max(1, cfg_.horizon_days());
  }

  double log_multiplier(const Profile& p, const UserTruth& u, int day) const {
    const double theta = phase(day);
    const double early = std::cos(theta), late = std::sin(theta);
    const double pay_z = std::log(u.pay_affinity) / 0.5;
    const int city = ((p.city % cfg_.n_cities) + cfg_.n_cities) % cfg_.n_cities;
    const double rotating = early * (city_early_[city] - 0.35 * pay_z + gender_early(p.gender)) +
                            late * (city_late_[city] + 0.35 * pay_z + gender_late(p.gender));
    const double trend = 0.3 * cfg_.drift_strength * day / std::max(1, cfg_.horizon_days());
    double eng = 0.0;
    if (u.engagement > 0.0 && cfg_.login_rate_median > 0.0)
      eng = std::log(u.engagement / cfg_.login_rate_median);
    return -cfg_.hazard_engagement * eng + cfg_.hazard_stable * stable(p) + cfg_.hazard_profile * rotating + trend;
  }

  double daily(const Profile& p, const UserTruth& u, int day) const {
    if (cfg_.hazard_base <= 0.0) return 0.0;
    return std::min(0.5, cfg_.hazard_base * std::exp(log_multiplier(p, u, day)));
  }

 private:
  static double stable(const Profile& p) {
    double age = 0.0;
    if (p.age < 25)
      age = 0.4;
    else if (p.age < 35)
      age = 0.15;
    else if (p.age >= 50)
      age = -0.2;
    return age + 0.3 - 0.15 * p.user_level;
  }
  static double gender_early(Gender g) { return g == Gender::male ? 0.2 : (g == Gender::female ? -0.2 : 0.0); }
  static double gender_late(Gender g) { return g == Gender::male ? -0.2 : (g == Gender::female ? 0.2 : 0.0); }

  SimConfig cfg_;
  std::vector<double> city_early_;
  std::vector<double> city_late_;
};

// Activity multiplier applied to every user's login rate on `day`.
inline double activity_multiplier(const SimConfig& cfg, int day) {
  return std::exp(0.25 * cfg.drift_strength * day / std::max(1, cfg.horizon_days()));
}

struct Population {
  std::vector<Profile> profiles;
  std::vector<UserTruth> truths;
};

namespace detail {

inline std::mt19937_64 user_rng(const SimConfig& cfg, const std::string& user_id, std::string_view stream) {
  return std::mt19937_64(
      hashing::combine(hashing::combine(cfg.seed, hashing::fnv1a(user_id)), hashing::fnv1a(stream)));
}

}  // namespace detail

inline Population generate_population(const SimConfig& cfg) {
  validate(cfg);
  Population pop;
  pop.profiles.reserve(cfg.n_users);
  pop.truths.reserve(cfg.n_users);
  const HazardModel hazard(cfg);
  const int n_days = cfg.horizon_days();

  for (std::size_t i = 0; i < cfg.n_users; ++i) {
    Profile p;
    UserTruth u;
    p.user_id = u.user_id = user_id_for(i);
    auto rng = detail::user_rng(cfg, p.user_id, "population");
    std::normal_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    u.engagement = cfg.login_rate_median * std::exp(cfg.login_rate_sigma * unit(rng));
    u.pay_affinity = std::exp(0.5 * unit(rng));

    p.age = std::min(80, 18 + static_cast<int>(std::abs(unit(rng)) * 18.0));
    const double g = uni(rng);
    p.gender = g < 0.48 ? Gender::male : (g < 0.96 ? Gender::female : Gender::unknown);
    p.city = std::uniform_int_distribution<int>(0, cfg.n_cities - 1)(rng);
    p.register_ts = cfg.t_start - days(std::uniform_int_distribution<int>(1, 3 * 365)(rng));
    double eng_z = 0.0;
    if (cfg.login_rate_sigma > 0.0 && cfg.login_rate_median > 0.0)
      eng_z = std::log(u.engagement / cfg.login_rate_median) / cfg.login_rate_sigma;
    p.user_level = std::clamp(static_cast<int>(std::floor(2.5 + 0.8 * eng_z + 0.8 * unit(rng))), 0, 4);

    for (int d = 0; d < n_days; ++d) {
      if (uni(rng) < hazard.daily(p, u, d)) {
        u.churn_ts = cfg.t_start + days(d);
        break;
      }
    }
    pop.profiles.push_back(std::move(p));
    pop.truths.push_back(std::move(u));
  }
  return pop;
}

inline EventLog simulate_events(const Population& pop, const SimConfig& cfg) {
  validate(cfg);
  if (pop.profiles.size() != pop.truths.size())
    throw DataError("population profiles and truths are not aligned");
  const int n_days = cfg.horizon_days();
  std::vector<Event> events;
  for (std::size_t i = 0; i < pop.truths.size(); ++i) {
    const auto& u = pop.truths[i];
    if (pop.profiles[i].user_id != u.user_id)
      throw DataError("population profiles and truths are not aligned at '" + u.user_id + "'");
    auto rng = detail::user_rng(cfg, u.user_id, "events");
    std::uniform_int_distribution<Timestamp> second(0, kSecondsPerDay - 1);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::lognormal_distribution<double> amount(3.0, 1.0);
    const double pay_p = std::min(1.0, cfg.pay_prob * u.pay_affinity);

    int last_day = n_days;
    if (u.churn_ts) last_day = static_cast<int>((*u.churn_ts - cfg.t_start) / kSecondsPerDay);
    for (int d = 0; d < last_day; ++d) {
      const double rate = u.engagement * activity_multiplier(cfg, d);
      const int n = rate > 0.0 ? std::poisson_distribution<int>(rate)(rng) : 0;
      for (int k = 0; k < n; ++k) {
        const Timestamp ts = cfg.t_start + days(d) + second(rng);
        events.push_back({u.user_id, ts, EventKind::login, std::nullopt});
        if (pay_p > 0.0 && uni(rng) < pay_p) {
          const double amt = std::round(amount(rng) * 100.0) / 100.0;
          events.push_back({u.user_id, ts, EventKind::pay, amt});
        }
      }
    }
  }
  return EventLog(std::move(events), cfg.horizon());
}

enum class ChurnLabel { retained, churned };

// Churned iff the user had churned by t, or shows no login in [t, t + cp).
inline std::map<std::string, ChurnLabel> ground_truth_labels(std::span<const UserTruth> truths,
                                                             const EventIndex& index, Timestamp t,
                                                             Timestamp cp) {
  const Horizon& h = index.horizon();
  if (t < h.t_start || t + cp > h.t_end)
    throw DataError("ground-truth window [t, t + cp) leaves the simulated horizon");
  std::map<std::string, ChurnLabel> labels;
  for (const auto& u : truths) {
    const bool churned = (u.churn_ts && *u.churn_ts <= t) || index.logins_in(u.user_id, t, t + cp) == 0;
    labels.emplace(u.user_id, churned ? ChurnLabel::churned : ChurnLabel::retained);
  }
  return labels;
}

struct Simulation {
  SimConfig config;
  Population population;
  EventLog log;
};

inline Simulation simulate(const SimConfig& cfg) {
  Simulation sim{cfg, generate_population(cfg), {}};
  sim.log = simulate_events(sim.population, cfg);
  return sim;
}

// Truth file: {"user_id", "churn_ts": int|null} per line.
inline void write_truth(const std::string& path, std::span<const UserTruth> truths) {
  auto out = detail::open_out(path);
  for (const auto& u : truths) {
    OrderedJson j;
    j["user_id"] = u.user_id;
    j["churn_ts"] = u.churn_ts ? OrderedJson(*u.churn_ts) : OrderedJson(nullptr);
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline std::vector<UserTruth> read_truth(const std::string& path) {
  std::vector<UserTruth> truths;
  detail::for_each_json_line(path, [&](const Json& j, std::size_t) {
    UserTruth u;
    u.user_id = detail::field<std::string>(j, "user_id");
    const auto& c = j.at("churn_ts");
    if (!c.is_null()) u.churn_ts = c.get<Timestamp>();
    truths.push_back(std::move(u));
  });
  return truths;
}

}  // namespace tccp
