#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tccp/data_model.hpp"
#include "tccp/simulator.hpp"

namespace tccp {

inline constexpr int kActivityWindowDays = 30;
inline constexpr std::size_t kMaxCandidateLogins = 12;

struct WindowSpec {
  Timestamp ref_time = 0;  // common end of the observation period
  int op_days = 15;
  int cp_days = 90;
  std::vector<int> lookbacks{7, 15, 30};

  Timestamp op_start() const { return ref_time - days(op_days); }
  bool unlabeled_regime() const { return op_days < cp_days; }
};

inline void validate(const WindowSpec& w) {
  if (w.op_days < 1) throw ConfigError("observation period must be at least one day");
  if (w.cp_days < 1) throw ConfigError("churn period must be at least one day");
  if (w.lookbacks.empty()) throw ConfigError("at least one lookback window is required");
  for (std::size_t i = 0; i < w.lookbacks.size(); ++i) {
    if (w.lookbacks[i] < 1) throw ConfigError("lookback windows must be positive");
    if (i > 0 && w.lookbacks[i] <= w.lookbacks[i - 1])
      throw ConfigError("lookback windows must be strictly increasing");
  }
}

// Active users at op_start: between 1 and 12 logins in the preceding 30 days.
inline std::vector<std::string> select_candidates(const EventIndex& index, std::span<const Profile> profiles,
                                                  Timestamp op_start) {
  const Timestamp from = op_start - days(kActivityWindowDays);
  if (from < index.horizon().t_start || op_start > index.horizon().t_end)
    throw DataError("candidate selection needs 30 days of history inside the log horizon");
  std::vector<std::string> out;
  for (const auto& p : profiles) {
    const auto n = index.logins_in(p.user_id, from, op_start);
    if (n >= 1 && n <= kMaxCandidateLogins) out.push_back(p.user_id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct WindowLabels {
  std::vector<std::string> P;
  std::vector<std::string> U;
  std::vector<std::string> N;
};

// Candidates with a login in [t - op, t) are positive; the rest are unlabeled
// when op < cp and negative otherwise.
inline WindowLabels label_users(const EventIndex& index, std::span<const std::string> candidates,
                                const WindowSpec& spec) {
  validate(spec);
  const Timestamp from = spec.op_start();
  if (from < index.horizon().t_start || spec.ref_time > index.horizon().t_end)
    throw DataError("observation period lies outside the log horizon");
  WindowLabels out;
  for (const auto& user : candidates) {
    if (index.logins_in(user, from, spec.ref_time) > 0)
      out.P.push_back(user);
    else if (spec.unlabeled_regime())
      out.U.push_back(user);
    else
      out.N.push_back(user);
  }
  return out;
}

using FeatureMap = std::unordered_map<std::string, FeatureVector>;

inline SampleSet label_window(const EventIndex& index, std::span<const std::string> candidates,
                              const WindowSpec& spec, const FeatureMap& features, std::uint32_t dim) {
  const auto labels = label_users(index, candidates, spec);
  SampleSet set;
  set.dim = dim;
  set.ref_time = spec.ref_time;
  auto fill = [&](const std::vector<std::string>& users, std::vector<Sample>& dst) {
    dst.reserve(users.size());
    for (const auto& u : users) {
      auto it = features.find(u);
      if (it == features.end()) throw DataError("no feature vector for candidate '" + u + "'");
      dst.push_back({u, it->second});
    }
  };
  fill(labels.P, set.P);
  fill(labels.U, set.U);
  fill(labels.N, set.N);
  validate(set);
  return set;
}

// ---------------------------------------------------------------------------
// Feature space: [static | behavioral | cross region].

struct Categorical {
  std::uint32_t id = 0;
  std::uint32_t value = 0;
};

// Index of the (a, b) cross inside [region_begin, region_begin + region_size).
inline std::uint32_t cross(Categorical a, Categorical b, std::uint32_t region_begin, std::uint32_t region_size) {
  std::uint64_t h = 0x7ccf9d3b1f8a5e21ULL;
  for (std::uint64_t v : {std::uint64_t{a.id}, std::uint64_t{a.value}, std::uint64_t{b.id}, std::uint64_t{b.value}})
    h = hashing::combine(h, v);
  return region_begin + static_cast<std::uint32_t>(h % region_size);
}

namespace buckets {

inline constexpr int kAge = 5;
inline constexpr int kGender = 3;
inline constexpr int kCitySlots = 32;
inline constexpr int kRegisterAge = 5;
inline constexpr int kUserLevel = 8;
inline constexpr int kCount = 7;
inline constexpr int kRecency = 6;
inline constexpr int kRecencyNever = kRecency - 1;

inline int age(int years) {
  if (years < 25) return 0;
  if (years < 35) return 1;
  if (years < 45) return 2;
  if (years < 55) return 3;
  return 4;
}

inline int register_age(Timestamp since_register) {
  const auto d = since_register / kSecondsPerDay;
  if (d < 90) return 0;
  if (d < 180) return 1;
  if (d < 365) return 2;
  if (d < 730) return 3;
  return 4;
}

// 0, 1, 2, 3-4, 5-8, 9-16, 17+
inline int count(std::size_t n) {
  if (n <= 2) return static_cast<int>(n);
  if (n <= 4) return 3;
  if (n <= 8) return 4;
  if (n <= 16) return 5;
  return 6;
}

// {0-1, 2-3, 4-7, 8-15, 16-30, never}
inline int recency(std::optional<std::int64_t> days_since) {
  if (!days_since) return kRecencyNever;
  const auto d = *days_since;
  if (d <= 1) return 0;
  if (d <= 3) return 1;
  if (d <= 7) return 2;
  if (d <= 15) return 3;
  if (d <= 30) return 4;
  return kRecencyNever;
}

inline int gender(Gender g) { return static_cast<int>(g); }

}  // namespace buckets

// Categorical ids fed to the cross hash.
enum CategoricalId : std::uint32_t {
  kAgeId = 1,
  kGenderId = 2,
  kCityId = 3,
  kRegisterAgeId = 4,
  kUserLevelId = 5,
  kRecencyId = 6,
  kLoginBucketId = 100,  // + lookback days
  kPayBucketId = 200,    // + lookback days
};

class FeatureLayout {
 public:
  static constexpr std::uint32_t kPerLookback = 3 + buckets::kCount;
  static constexpr std::uint32_t kDefaultCrossRegion = 1u << 14;

  FeatureLayout(std::vector<int> lookbacks, std::uint32_t dim) : lookbacks_(std::move(lookbacks)), dim_(dim) {
    WindowSpec probe;
    probe.lookbacks = lookbacks_;
    validate(probe);
    if (dim_ <= cross_begin())
      throw ConfigError("feature dim " + std::to_string(dim_) + " leaves no cross region (need > " +
                        std::to_string(cross_begin()) + ")");
  }

  static std::uint32_t default_dim(std::span<const int> lookbacks) {
    return base_size(lookbacks.size()) + kDefaultCrossRegion;
  }

  std::uint32_t dim() const { return dim_; }
  const std::vector<int>& lookbacks() const { return lookbacks_; }

  static constexpr std::uint32_t age_offset() { return 0; }
  static constexpr std::uint32_t gender_offset() { return age_offset() + buckets::kAge; }
  static constexpr std::uint32_t city_offset() { return gender_offset() + buckets::kGender; }
  static constexpr std::uint32_t register_offset() { return city_offset() + buckets::kCitySlots; }
  static constexpr std::uint32_t level_offset() { return register_offset() + buckets::kRegisterAge; }
  static constexpr std::uint32_t static_size() { return level_offset() + buckets::kUserLevel; }

  // Within lookback slot i: login, pay count, pay amount (scaled), then login-count buckets.
  std::uint32_t lookback_offset(std::size_t i) const {
    return static_size() + static_cast<std::uint32_t>(i) * kPerLookback;
  }
  std::uint32_t login_raw(std::size_t i) const { return lookback_offset(i); }
  std::uint32_t pay_raw(std::size_t i) const { return lookback_offset(i) + 1; }
  std::uint32_t amount_raw(std::size_t i) const { return lookback_offset(i) + 2; }
  std::uint32_t login_bucket(std::size_t i, int b) const { return lookback_offset(i) + 3 + b; }
  std::uint32_t recency_offset() const { return lookback_offset(lookbacks_.size()); }
  std::uint32_t cross_begin() const { return base_size(lookbacks_.size()); }
  std::uint32_t cross_size() const { return dim_ - cross_begin(); }

  std::uint32_t cross_index(Categorical a, Categorical b) const { return cross(a, b, cross_begin(), cross_size()); }

 private:
  static std::uint32_t base_size(std::size_t n_lookbacks) {
    return static_size() + static_cast<std::uint32_t>(n_lookbacks) * kPerLookback + buckets::kRecency;
  }

  std::vector<int> lookbacks_;
  std::uint32_t dim_;
};

// Raw window statistics of one user at time t.
struct BehaviorStats {
  std::vector<std::size_t> logins;  // per lookback
  std::vector<std::size_t> pays;
  std::vector<double> amount;
  std::optional<std::int64_t> days_since_last_login;  // within the longest lookback
};

inline BehaviorStats behavior_stats(const EventIndex& index, const std::string& user, Timestamp t,
                                    std::span<const int> lookbacks) {
  BehaviorStats s;
  for (int L : lookbacks) {
    const Timestamp from = t - days(L);
    s.logins.push_back(index.logins_in(user, from, t));
    s.pays.push_back(index.pays_in(user, from, t));
    s.amount.push_back(index.pay_amount_in(user, from, t));
  }
  if (auto last = index.last_login_before(user, t); last && *last >= t - days(lookbacks.back()))
    s.days_since_last_login = (t - *last) / kSecondsPerDay;
  return s;
}

// Numeric values enter on a log scale squashed into [0, 1] so that plain SGD
// stays stable at the default step size.
inline constexpr double kCountCap = 64.0;
inline constexpr double kAmountCap = 10000.0;
inline double scaled_count(double n) { return std::min(1.0, std::log1p(n) / std::log1p(kCountCap)); }
inline double scaled_amount(double a) { return std::min(1.0, std::log1p(a) / std::log1p(kAmountCap)); }

// Unit L2 norm per instance.
inline FeatureVector normalized(const FeatureVector& x) {
  double sq = 0.0;
  for (const auto& [j, v] : x.entries()) sq += v * v;
  if (sq == 0.0) return x;
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<FeatureVector::Entry> e(x.entries().begin(), x.entries().end());
  for (auto& [j, v] : e) v *= inv;
  return FeatureVector(x.dim(), std::move(e));
}

inline FeatureVector featurize_user(const FeatureLayout& layout, const Profile& p, const BehaviorStats& s,
                                    Timestamp t) {
  std::vector<FeatureVector::Entry> e;
  e.reserve(64);
  const int age_b = buckets::age(p.age);
  const int gender_b = buckets::gender(p.gender);
  const int city_slot = ((p.city % buckets::kCitySlots) + buckets::kCitySlots) % buckets::kCitySlots;
  const int reg_b = buckets::register_age(t - p.register_ts);
  const int level_b = std::clamp(p.user_level, 0, buckets::kUserLevel - 1);
  e.emplace_back(layout.age_offset() + age_b, 1.0);
  e.emplace_back(layout.gender_offset() + gender_b, 1.0);
  e.emplace_back(layout.city_offset() + city_slot, 1.0);
  e.emplace_back(layout.register_offset() + reg_b, 1.0);
  e.emplace_back(layout.level_offset() + level_b, 1.0);

  const auto& lbs = layout.lookbacks();
  for (std::size_t i = 0; i < lbs.size(); ++i) {
    if (s.logins[i] > 0) e.emplace_back(layout.login_raw(i), scaled_count(static_cast<double>(s.logins[i])));
    if (s.pays[i] > 0) e.emplace_back(layout.pay_raw(i), scaled_count(static_cast<double>(s.pays[i])));
    if (s.amount[i] > 0.0) e.emplace_back(layout.amount_raw(i), scaled_amount(s.amount[i]));
    e.emplace_back(layout.login_bucket(i, buckets::count(s.logins[i])), 1.0);
  }
  const int rec_b = buckets::recency(s.days_since_last_login);
  e.emplace_back(layout.recency_offset() + rec_b, 1.0);

  const Categorical age{kAgeId, static_cast<std::uint32_t>(age_b)};
  const Categorical gender{kGenderId, static_cast<std::uint32_t>(gender_b)};
  const Categorical city{kCityId, static_cast<std::uint32_t>(city_slot)};
  const Categorical reg{kRegisterAgeId, static_cast<std::uint32_t>(reg_b)};
  const Categorical level{kUserLevelId, static_cast<std::uint32_t>(level_b)};
  const Categorical recency{kRecencyId, static_cast<std::uint32_t>(rec_b)};
  auto login_cat = [&](std::size_t i) {
    return Categorical{kLoginBucketId + static_cast<std::uint32_t>(lbs[i]),
                       static_cast<std::uint32_t>(buckets::count(s.logins[i]))};
  };
  const std::size_t last = lbs.size() - 1;
  for (std::size_t i = 0; i < lbs.size(); ++i) e.emplace_back(layout.cross_index(age, login_cat(i)), 1.0);
  const Categorical pay_last{kPayBucketId + static_cast<std::uint32_t>(lbs[last]),
                             static_cast<std::uint32_t>(buckets::count(s.pays[last]))};
  e.emplace_back(layout.cross_index(gender, pay_last), 1.0);
  e.emplace_back(layout.cross_index(city, recency), 1.0);
  e.emplace_back(layout.cross_index(level, login_cat(0)), 1.0);
  e.emplace_back(layout.cross_index(reg, recency), 1.0);
  auto fv = FeatureVector::from_unsorted(layout.dim(), std::move(e));
  return normalized(fv);
}

// Features at time t, reading only events strictly before t.
inline FeatureMap extract_features(const EventIndex& index, const std::unordered_map<std::string, const Profile*>& profiles,
                                   std::span<const std::string> candidates, Timestamp t, const FeatureLayout& layout) {
  if (t - days(layout.lookbacks().back()) < index.horizon().t_start || t > index.horizon().t_end)
    throw DataError("feature lookback windows leave the log horizon");
  FeatureMap out;
  out.reserve(candidates.size());
  for (const auto& user : candidates) {
    auto it = profiles.find(user);
    if (it == profiles.end()) throw DataError("missing profile for user '" + user + "'");
    out.emplace(user, featurize_user(layout, *it->second, behavior_stats(index, user, t, layout.lookbacks()), t));
  }
  return out;
}

inline std::unordered_map<std::string, const Profile*> profile_lookup(std::span<const Profile> profiles) {
  std::unordered_map<std::string, const Profile*> out;
  out.reserve(profiles.size());
  for (const auto& p : profiles) out.emplace(p.user_id, &p);
  return out;
}

// Candidates at t - op, features at t - op, labels from [t - op, t).
inline SampleSet build_window(const EventIndex& index, std::span<const Profile> profiles, const WindowSpec& spec,
                              const FeatureLayout& layout) {
  validate(spec);
  const Timestamp sel = spec.op_start();
  const auto candidates = select_candidates(index, profiles, sel);
  const auto features = extract_features(index, profile_lookup(profiles), candidates, sel, layout);
  return label_window(index, candidates, spec, features, layout.dim());
}

}  // namespace tccp
