#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tccp/pipeline.hpp"

namespace tccp {

// Everything a command may need, filled from defaults, then a key=value file,
// then command-line flags.
struct Config {
  SimConfig sim;
  RunConfig run;
  std::uint64_t seed = 7;
  std::string data_dir = "data";

  Config() { run.out_dir = "out"; }

  // The single seed drives both simulation and training.
  void set_seed(std::uint64_t s) {
    seed = s;
    sim.seed = s;
    run.train.seed = s;
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] inline void mismatch(const std::string& key, const char* type, const std::string& value) {
  throw ConfigError("key '" + key + "': expected " + type + ", got '" + value + "'");
}

template <class T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) mismatch(key, "integer", v);
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) mismatch(key, "real", v);
    return d;
  } catch (const std::logic_error&) {
    mismatch(key, "real", v);
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  mismatch(key, "boolean", v);
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<int>(key, trim(item)));
  if (out.empty()) mismatch(key, "comma-separated integers", v);
  return out;
}

inline std::string real_text(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

inline std::string int_list_text(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Key {
  std::string name;
  std::string doc;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

#define TCCP_INT_KEY(name, type, field, doc)                                                          \
  Key {                                                                                               \
    name, doc, [](Config& c, const std::string& v) { c.field = parse_int<type>(name, v); },          \
        [](const Config& c) { return std::to_string(c.field); }                                       \
  }
#define TCCP_REAL_KEY(name, field, doc)                                                                \
  Key {                                                                                                \
    name, doc, [](Config& c, const std::string& v) { c.field = parse_real(name, v); },                \
        [](const Config& c) { return real_text(c.field); }                                             \
  }

inline const std::vector<Key>& keys() {
  static const std::vector<Key> k{
      Key{"seed", "seed for simulation and training",
          [](Config& c, const std::string& v) { c.set_seed(parse_int<std::uint64_t>("seed", v)); },
          [](const Config& c) { return std::to_string(c.seed); }},
      Key{"data_dir", "directory of events.jsonl, profiles.jsonl, truth.jsonl",
          [](Config& c, const std::string& v) { c.data_dir = v; }, [](const Config& c) { return c.data_dir; }},
      Key{"out_dir", "output directory for models, intermediates and reports",
          [](Config& c, const std::string& v) { c.run.out_dir = v; },
          [](const Config& c) { return c.run.out_dir; }},
      // simulator
      TCCP_INT_KEY("users", std::size_t, sim.n_users, "number of simulated users"),
      Key{"t_start", "log start, seconds since epoch",
          [](Config& c, const std::string& v) {
            const auto span = c.sim.t_end - c.sim.t_start;
            c.sim.t_start = parse_int<Timestamp>("t_start", v);
            c.sim.t_end = c.sim.t_start + span;
          },
          [](const Config& c) { return std::to_string(c.sim.t_start); }},
      Key{"horizon_days", "simulated days",
          [](Config& c, const std::string& v) {
            c.sim.t_end = c.sim.t_start + days(parse_int<int>("horizon_days", v));
          },
          [](const Config& c) { return std::to_string(c.sim.horizon_days()); }},
      TCCP_REAL_KEY("login_rate_median", sim.login_rate_median, "median logins per day"),
      TCCP_REAL_KEY("login_rate_sigma", sim.login_rate_sigma, "log-normal sigma of login rates"),
      TCCP_REAL_KEY("pay_prob", sim.pay_prob, "probability that a login carries a payment"),
      TCCP_REAL_KEY("drift_strength", sim.drift_strength, "speed of the drifting churn hazard (0 disables drift)"),
      TCCP_REAL_KEY("hazard_base", sim.hazard_base, "baseline daily churn probability"),
      TCCP_REAL_KEY("hazard_engagement", sim.hazard_engagement, "engagement exponent of the hazard"),
      TCCP_REAL_KEY("hazard_profile", sim.hazard_profile, "scale of the drifting hazard terms"),
      TCCP_REAL_KEY("hazard_stable", sim.hazard_stable, "scale of the time-invariant hazard terms"),
      TCCP_INT_KEY("n_cities", int, sim.n_cities, "number of cities"),
      // run
      Key{"mode", "tccp | supervised_lr | supervised_fm | rule_recency | rule_frequency",
          [](Config& c, const std::string& v) { c.run.mode = parse_mode(v); },
          [](const Config& c) { return std::string(to_string(c.run.mode)); }},
      TCCP_INT_KEY("anchor_day", int, run.anchor_day, "day (after log start) where training windows end and the test window starts"),
      TCCP_INT_KEY("op", int, run.op_days, "observation period in days"),
      TCCP_INT_KEY("cp", int, run.cp_days, "churn period in days"),
      Key{"lookbacks", "behavior lookback windows in days",
          [](Config& c, const std::string& v) { c.run.lookbacks = parse_int_list("lookbacks", v); },
          [](const Config& c) { return int_list_text(c.run.lookbacks); }},
      TCCP_INT_KEY("dim", std::uint32_t, run.dim, "feature dimension (0: default)"),
      Key{"c_method", "e1 | e2 | e3 | historical",
          [](Config& c, const std::string& v) { c.run.c_method = parse_c_method(v); },
          [](const Config& c) { return std::string(to_string(c.run.c_method)); }},
      TCCP_REAL_KEY("holdout_fraction", run.holdout_fraction, "validation share for e1/e2/e3"),
      Key{"platt", "calibrate g' with Platt scaling",
          [](Config& c, const std::string& v) { c.run.platt = parse_bool("platt", v); },
          [](const Config& c) { return std::string(c.run.platt ? "true" : "false"); }},
      TCCP_INT_KEY("rule_L", int, run.rule_L, "recency rule threshold L (days)"),
      TCCP_INT_KEY("rule_M", int, run.rule_M, "frequency rule threshold M (logins)"),
      TCCP_INT_KEY("rule_D", int, run.rule_D, "frequency rule window D (days)"),
      // training
      TCCP_REAL_KEY("learning_rate", run.train.learning_rate, "SGD step size"),
      TCCP_INT_KEY("epochs", int, run.train.epochs, "SGD passes"),
      TCCP_REAL_KEY("l2_linear", run.train.l2_linear, "l2 penalty on linear weights"),
      TCCP_REAL_KEY("l2_factor", run.train.l2_factor, "l2 penalty on FM factors"),
      TCCP_INT_KEY("k", int, run.train.k, "FM factor dimension"),
      TCCP_REAL_KEY("init_scale", run.train.init_scale, "stddev of FM factor initialization"),
      Key{"shuffle", "reshuffle rows every epoch",
          [](Config& c, const std::string& v) { c.run.train.shuffle = parse_bool("shuffle", v); },
          [](const Config& c) { return std::string(c.run.train.shuffle ? "true" : "false"); }},
  };
  return k;
}

#undef TCCP_INT_KEY
#undef TCCP_REAL_KEY

inline const Key& find_key(const std::string& name) {
  for (const auto& k : keys())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

}  // namespace config_detail

inline void set_config_value(Config& c, const std::string& key, const std::string& value) {
  config_detail::find_key(key).set(c, value);
}

inline std::string get_config_value(const Config& c, const std::string& key) {
  return config_detail::find_key(key).get(c);
}

inline void validate(const Config& c) {
  validate(c.sim);
  validate(c.run);
}

// Applies `text` on top of `base`. Lines are `key = value`; '#' starts a comment.
inline Config parse_config_text(const std::string& text, Config base = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = config_detail::trim(line.substr(0, eq));
    const auto value = config_detail::trim(line.substr(eq + 1));
    try {
      set_config_value(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline Config parse_config(const std::string& path, Config base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  auto c = parse_config_text(ss.str(), std::move(base));
  validate(c);
  return c;
}

// Precedence: overrides (command-line flags) > file > defaults.
inline Config resolve_config(const std::string& file, const std::vector<std::pair<std::string, std::string>>& overrides) {
  Config c;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file '" + file + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    c = parse_config_text(ss.str(), std::move(c));
  }
  for (const auto& [k, v] : overrides) set_config_value(c, k, v);
  validate(c);
  return c;
}

inline std::string dump_config(const Config& c) {
  std::string out;
  for (const auto& k : config_detail::keys()) out += k.name + " = " + k.get(c) + "\n";
  return out;
}

// One line per key: name, default, description.
inline std::string describe_config() {
  const Config defaults;
  std::string out;
  for (const auto& k : config_detail::keys())
    out += "  " + k.name + " (default " + k.get(defaults) + "): " + k.doc + "\n";
  return out;
}

inline bool operator==(const Config& a, const Config& b) { return dump_config(a) == dump_config(b); }

}  // namespace tccp
