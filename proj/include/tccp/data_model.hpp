#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tccp/error.hpp"

namespace tccp {

using Timestamp = std::int64_t;
using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

inline constexpr Timestamp kSecondsPerDay = 86400;

constexpr Timestamp days(std::int64_t n) { return n * kSecondsPerDay; }

enum class EventKind { login, pay };

inline const char* to_string(EventKind k) { return k == EventKind::login ? "login" : "pay"; }

struct Event {
  std::string user_id;
  Timestamp ts = 0;
  EventKind kind = EventKind::login;
  std::optional<double> amount;

  bool operator==(const Event&) const = default;
};

// Canonical log order: (ts, user_id), then login before pay.
inline bool event_before(const Event& a, const Event& b) {
  return std::tie(a.ts, a.user_id, a.kind) < std::tie(b.ts, b.user_id, b.kind);
}

enum class Gender { male, female, unknown };

inline const char* to_string(Gender g) {
  switch (g) {
    case Gender::male:
      return "m";
    case Gender::female:
      return "f";
    default:
      return "u";
  }
}

inline Gender parse_gender(const std::string& s) {
  if (s == "m") return Gender::male;
  if (s == "f") return Gender::female;
  if (s == "u") return Gender::unknown;
  throw DataError("unknown gender '" + s + "'");
}

struct Profile {
  std::string user_id;
  int age = 0;
  Gender gender = Gender::unknown;
  int city = 0;
  Timestamp register_ts = 0;
  int user_level = 0;

  bool operator==(const Profile&) const = default;
};

// Half-open [t_start, t_end).
struct Horizon {
  Timestamp t_start = 0;
  Timestamp t_end = 0;

  bool contains(Timestamp t) const { return t >= t_start && t < t_end; }
  bool operator==(const Horizon&) const = default;
};

class EventLog {
 public:
  EventLog() = default;

  // Sorts into canonical order and validates every event against the horizon.
  EventLog(std::vector<Event> events, Horizon horizon)
      : events_(std::move(events)), horizon_(horizon) {
    if (horizon_.t_start >= horizon_.t_end) throw DataError("event log horizon is empty");
    for (const auto& e : events_) check(e);
    std::stable_sort(events_.begin(), events_.end(), event_before);
  }

  const std::vector<Event>& events() const { return events_; }
  const Horizon& horizon() const { return horizon_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

 private:
  void check(const Event& e) const {
    if (!horizon_.contains(e.ts))
      throw DataError("event of user '" + e.user_id + "' at ts " + std::to_string(e.ts) +
                      " lies outside the log horizon");
    if (e.kind == EventKind::login && e.amount)
      throw DataError("login event of user '" + e.user_id + "' carries an amount");
    if (e.kind == EventKind::pay) {
      if (!e.amount) throw DataError("pay event of user '" + e.user_id + "' has no amount");
      if (!(*e.amount >= 0.0) || !std::isfinite(*e.amount))
        throw DataError("pay event of user '" + e.user_id + "' has a negative amount");
    }
  }

  std::vector<Event> events_;
  Horizon horizon_;
};

class FeatureVector {
 public:
  using Entry = std::pair<std::uint32_t, double>;

  FeatureVector() = default;

  // Entries must already be strictly increasing by index.
  FeatureVector(std::uint32_t dim, std::vector<Entry> entries)
      : dim_(dim), entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].first >= dim_)
        throw DataError("feature index " + std::to_string(entries_[i].first) +
                        " out of range for dim " + std::to_string(dim_));
      if (i > 0 && entries_[i].first <= entries_[i - 1].first)
        throw DataError("feature indices must be strictly increasing");
      if (!std::isfinite(entries_[i].second)) throw DataError("non-finite feature value");
    }
  }

  // Sorts and sums values that share an index.
  static FeatureVector from_unsorted(std::uint32_t dim, std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.first < b.first; });
    std::vector<Entry> merged;
    merged.reserve(entries.size());
    for (const auto& e : entries) {
      if (!merged.empty() && merged.back().first == e.first)
        merged.back().second += e.second;
      else
        merged.push_back(e);
    }
    return FeatureVector(dim, std::move(merged));
  }

  std::uint32_t dim() const { return dim_; }
  std::span<const Entry> entries() const { return entries_; }
  std::size_t nnz() const { return entries_.size(); }

  double value_at(std::uint32_t index) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const Entry& e, std::uint32_t i) { return e.first < i; });
    return (it != entries_.end() && it->first == index) ? it->second : 0.0;
  }

  bool operator==(const FeatureVector&) const = default;

 private:
  std::uint32_t dim_ = 0;
  std::vector<Entry> entries_;
};

struct WeightedInstance {
  FeatureVector features;
  int label = 0;
  double weight = 1.0;

  bool operator==(const WeightedInstance&) const = default;
};

// One candidate user's feature row; its label follows from the set it sits in.
struct Sample {
  std::string user_id;
  FeatureVector features;

  bool operator==(const Sample&) const = default;
};

enum class SetRole { positive, unlabeled, negative };

inline const char* to_string(SetRole r) {
  switch (r) {
    case SetRole::positive:
      return "P";
    case SetRole::unlabeled:
      return "U";
    default:
      return "N";
  }
}

inline SetRole parse_set_role(const std::string& s) {
  if (s == "P") return SetRole::positive;
  if (s == "U") return SetRole::unlabeled;
  if (s == "N") return SetRole::negative;
  throw DataError("unknown sample set '" + s + "'");
}

struct SampleSet {
  std::uint32_t dim = 0;
  Timestamp ref_time = 0;
  std::vector<Sample> P;
  std::vector<Sample> U;
  std::vector<Sample> N;

  bool fully_labeled() const { return U.empty(); }
  std::size_t size() const { return P.size() + U.size() + N.size(); }
  bool operator==(const SampleSet&) const = default;
};

inline void validate(const SampleSet& s) {
  if (!s.N.empty() && !s.U.empty())
    throw DataError("sample set holds both negative and unlabeled samples");
  std::unordered_set<std::string> seen;
  for (const auto* part : {&s.P, &s.U, &s.N}) {
    for (const auto& sample : *part) {
      if (!seen.insert(sample.user_id).second)
        throw DataError("user '" + sample.user_id + "' appears twice in the sample set");
      if (sample.features.dim() != s.dim)
        throw DataError("sample of user '" + sample.user_id + "' has dim " +
                        std::to_string(sample.features.dim()) + ", expected " +
                        std::to_string(s.dim));
    }
  }
}

// Per-user sorted login and pay timelines for window queries.
class EventIndex {
 public:
  struct Timeline {
    std::vector<Timestamp> logins;
    std::vector<Timestamp> pay_ts;
    std::vector<double> pay_amount;
  };

  EventIndex() = default;
  explicit EventIndex(const EventLog& log) : horizon_(log.horizon()) {
    for (const auto& e : log.events()) {
      auto [it, inserted] = slot_.try_emplace(e.user_id, timelines_.size());
      if (inserted) timelines_.emplace_back();
      auto& tl = timelines_[it->second];
      if (e.kind == EventKind::login) {
        tl.logins.push_back(e.ts);
      } else {
        tl.pay_ts.push_back(e.ts);
        tl.pay_amount.push_back(*e.amount);
      }
    }
  }

  const Horizon& horizon() const { return horizon_; }

  const Timeline* find(const std::string& user_id) const {
    auto it = slot_.find(user_id);
    return it == slot_.end() ? nullptr : &timelines_[it->second];
  }

  std::size_t logins_in(const std::string& user_id, Timestamp from, Timestamp to) const {
    const auto* tl = find(user_id);
    return tl ? count_in(tl->logins, from, to) : 0;
  }

  std::size_t pays_in(const std::string& user_id, Timestamp from, Timestamp to) const {
    const auto* tl = find(user_id);
    return tl ? count_in(tl->pay_ts, from, to) : 0;
  }

  double pay_amount_in(const std::string& user_id, Timestamp from, Timestamp to) const {
    const auto* tl = find(user_id);
    if (!tl) return 0.0;
    auto lo = std::lower_bound(tl->pay_ts.begin(), tl->pay_ts.end(), from);
    auto hi = std::lower_bound(tl->pay_ts.begin(), tl->pay_ts.end(), to);
    double sum = 0.0;
    for (auto it = lo; it != hi; ++it) sum += tl->pay_amount[it - tl->pay_ts.begin()];
    return sum;
  }

  // Most recent login strictly before t, if any.
  std::optional<Timestamp> last_login_before(const std::string& user_id, Timestamp t) const {
    const auto* tl = find(user_id);
    if (!tl) return std::nullopt;
    auto it = std::lower_bound(tl->logins.begin(), tl->logins.end(), t);
    if (it == tl->logins.begin()) return std::nullopt;
    return *std::prev(it);
  }

 private:
  static std::size_t count_in(const std::vector<Timestamp>& ts, Timestamp from, Timestamp to) {
    if (to <= from) return 0;
    auto lo = std::lower_bound(ts.begin(), ts.end(), from);
    auto hi = std::lower_bound(lo, ts.end(), to);
    return static_cast<std::size_t>(hi - lo);
  }

  Horizon horizon_;
  std::unordered_map<std::string, std::size_t> slot_;
  std::vector<Timeline> timelines_;
};

// ---------------------------------------------------------------------------
// File formats (JSON lines).

namespace detail {

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

inline bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

template <typename T>
T field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
  return it->get<T>();
}

// Runs `fn(json, line_number)` on every non-blank line, tagging errors with the line.
template <typename Fn>
void for_each_json_line(const std::string& path, Fn&& fn) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      fn(Json::parse(line), lineno);
    } catch (const Json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline OrderedJson features_to_json(const FeatureVector& fv) {
  OrderedJson arr = OrderedJson::array();
  for (const auto& [i, v] : fv.entries()) arr.push_back(OrderedJson::array({i, v}));
  return arr;
}

inline FeatureVector features_from_json(const Json& arr, std::uint32_t dim) {
  std::vector<FeatureVector::Entry> entries;
  entries.reserve(arr.size());
  for (const auto& pair : arr) {
    if (!pair.is_array() || pair.size() != 2) throw DataError("feature entry must be [index, value]");
    entries.emplace_back(pair[0].get<std::uint32_t>(), pair[1].get<double>());
  }
  return FeatureVector(dim, std::move(entries));
}

}  // namespace detail

inline constexpr int kFileVersion = 1;

// An optional first line {"horizon": [t_start, t_end]} declares the horizon;
// otherwise `declared` must be supplied.
inline EventLog read_event_log(const std::string& path, std::optional<Horizon> declared = std::nullopt) {
  std::vector<Event> events;
  std::optional<Horizon> horizon = declared;
  bool first = true;
  detail::for_each_json_line(path, [&](const Json& j, std::size_t lineno) {
    if (first && j.contains("horizon")) {
      first = false;
      const auto& h = j.at("horizon");
      Horizon from_file{h.at(0).get<Timestamp>(), h.at(1).get<Timestamp>()};
      if (!horizon) horizon = from_file;
      return;
    }
    first = false;
    Event e;
    e.user_id = detail::field<std::string>(j, "user_id");
    e.ts = detail::field<Timestamp>(j, "ts");
    const auto kind = detail::field<std::string>(j, "kind");
    if (kind == "login")
      e.kind = EventKind::login;
    else if (kind == "pay")
      e.kind = EventKind::pay;
    else
      throw DataError("unknown event kind '" + kind + "'");
    if (auto it = j.find("amount"); it != j.end() && !it->is_null()) e.amount = it->get<double>();
    if (e.kind == EventKind::pay && e.amount && *e.amount < 0.0)
      throw DataError("negative pay amount");
    if (horizon && !horizon->contains(e.ts))
      throw DataError("ts " + std::to_string(e.ts) + " outside the declared horizon");
    (void)lineno;
    events.push_back(std::move(e));
  });
  if (!horizon) throw DataError(path + ": no horizon declared for the event log");
  return EventLog(std::move(events), *horizon);
}

inline void write_event_log(const std::string& path, const EventLog& log) {
  auto out = detail::open_out(path);
  OrderedJson header;
  header["horizon"] = {log.horizon().t_start, log.horizon().t_end};
  out << header.dump() << '\n';
  for (const auto& e : log.events()) {
    OrderedJson j;
    j["user_id"] = e.user_id;
    j["ts"] = e.ts;
    j["kind"] = to_string(e.kind);
    if (e.amount) j["amount"] = *e.amount;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline std::vector<Profile> read_profiles(const std::string& path) {
  std::vector<Profile> profiles;
  detail::for_each_json_line(path, [&](const Json& j, std::size_t) {
    Profile p;
    p.user_id = detail::field<std::string>(j, "user_id");
    p.age = detail::field<int>(j, "age");
    if (p.age < 0) throw DataError("negative age");
    p.gender = parse_gender(detail::field<std::string>(j, "gender"));
    p.city = detail::field<int>(j, "city");
    p.register_ts = detail::field<Timestamp>(j, "register_ts");
    p.user_level = detail::field<int>(j, "user_level");
    profiles.push_back(std::move(p));
  });
  return profiles;
}

inline void write_profiles(const std::string& path, std::span<const Profile> profiles) {
  auto out = detail::open_out(path);
  for (const auto& p : profiles) {
    OrderedJson j;
    j["user_id"] = p.user_id;
    j["age"] = p.age;
    j["gender"] = to_string(p.gender);
    j["city"] = p.city;
    j["register_ts"] = p.register_ts;
    j["user_level"] = p.user_level;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline void write_sample_set(const std::string& path, const SampleSet& set) {
  validate(set);
  auto out = detail::open_out(path);
  OrderedJson header;
  header["version"] = kFileVersion;
  header["dim"] = set.dim;
  header["ref_time"] = set.ref_time;
  out << header.dump() << '\n';
  auto emit = [&](const std::vector<Sample>& part, SetRole role) {
    for (const auto& s : part) {
      OrderedJson j;
      j["user_id"] = s.user_id;
      j["set"] = to_string(role);
      j["features"] = detail::features_to_json(s.features);
      out << j.dump() << '\n';
    }
  };
  emit(set.P, SetRole::positive);
  emit(set.U, SetRole::unlabeled);
  emit(set.N, SetRole::negative);
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline SampleSet read_sample_set(const std::string& path) {
  SampleSet set;
  bool have_header = false;
  detail::for_each_json_line(path, [&](const Json& j, std::size_t) {
    if (!have_header) {
      const int version = detail::field<int>(j, "version");
      if (version != kFileVersion)
        throw DataError("unsupported sample set version " + std::to_string(version) +
                        " (expected " + std::to_string(kFileVersion) + ")");
      set.dim = detail::field<std::uint32_t>(j, "dim");
      set.ref_time = detail::field<Timestamp>(j, "ref_time");
      have_header = true;
      return;
    }
    Sample s;
    s.user_id = detail::field<std::string>(j, "user_id");
    s.features = detail::features_from_json(j.at("features"), set.dim);
    switch (parse_set_role(detail::field<std::string>(j, "set"))) {
      case SetRole::positive:
        set.P.push_back(std::move(s));
        break;
      case SetRole::unlabeled:
        set.U.push_back(std::move(s));
        break;
      case SetRole::negative:
        set.N.push_back(std::move(s));
        break;
    }
  });
  if (!have_header) throw DataError(path + ": missing sample set header");
  validate(set);
  return set;
}

}  // namespace tccp
