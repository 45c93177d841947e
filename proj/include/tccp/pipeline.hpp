#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tccp/data_model.hpp"
#include "tccp/eval.hpp"
#include "tccp/featurize.hpp"
#include "tccp/hashing.hpp"
#include "tccp/models.hpp"
#include "tccp/pu_core.hpp"
#include "tccp/simulator.hpp"

namespace tccp {

enum class Mode { tccp, supervised_lr, supervised_fm, rule_recency, rule_frequency };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::tccp:
      return "tccp";
    case Mode::supervised_lr:
      return "supervised_lr";
    case Mode::supervised_fm:
      return "supervised_fm";
    case Mode::rule_recency:
      return "rule_recency";
    default:
      return "rule_frequency";
  }
}

inline Mode parse_mode(const std::string& s) {
  if (s == "tccp") return Mode::tccp;
  if (s == "supervised_lr" || s == "lr") return Mode::supervised_lr;
  if (s == "supervised_fm" || s == "fm") return Mode::supervised_fm;
  if (s == "rule_recency") return Mode::rule_recency;
  if (s == "rule_frequency") return Mode::rule_frequency;
  throw ConfigError("unknown mode '" + s + "'");
}

struct RunConfig {
  Mode mode = Mode::tccp;
  // Training windows end here and the test window starts here, in days after the log start.
  int anchor_day = 120;
  int op_days = 15;
  int cp_days = 90;
  std::vector<int> lookbacks{7, 15, 30};
  std::uint32_t dim = 0;  // 0: default size for the lookbacks
  CMethod c_method = CMethod::historical;
  double holdout_fraction = 0.2;
  bool platt = false;
  TrainConfig train;
  int rule_L = 7;
  int rule_M = 1;
  int rule_D = kFrequencyWindowDays;
  std::string out_dir;  // empty: keep intermediates in memory only

  std::uint32_t feature_dim() const { return dim ? dim : FeatureLayout::default_dim(lookbacks); }
  FeatureLayout layout() const { return FeatureLayout(lookbacks, feature_dim()); }
  WindowSpec window(const Horizon& h) const { return {h.t_start + days(anchor_day), op_days, cp_days, lookbacks}; }
};

inline void validate(const RunConfig& c) {
  validate(c.train);
  WindowSpec w{0, c.op_days, c.cp_days, c.lookbacks};
  validate(w);
  (void)c.layout();
  if (c.anchor_day < 0) throw ConfigError("anchor_day must be nonnegative");
  if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0))
    throw ConfigError("holdout_fraction must lie in (0, 1)");
  if (c.rule_L < 0 || c.rule_M < 0 || c.rule_D < 1) throw ConfigError("rule parameters must be nonnegative");
  if (c.mode == Mode::tccp && c.op_days >= c.cp_days)
    throw ConfigError("tccp mode requires op < cp (op=" + std::to_string(c.op_days) + ", cp=" +
                      std::to_string(c.cp_days) + "); use mode supervised_lr or supervised_fm for op >= cp");
}

// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<Profile> profiles;
  std::vector<UserTruth> truths;
  EventLog log;
  EventIndex index;
};

inline Dataset make_dataset(Simulation sim) {
  Dataset d;
  d.profiles = std::move(sim.population.profiles);
  d.truths = std::move(sim.population.truths);
  d.log = std::move(sim.log);
  d.index = EventIndex(d.log);
  return d;
}

namespace files {
inline constexpr const char* kEvents = "events.jsonl";
inline constexpr const char* kProfiles = "profiles.jsonl";
inline constexpr const char* kTruth = "truth.jsonl";
}  // namespace files

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

inline void write_dataset(const std::string& dir, const Dataset& d) {
  ensure_dir(dir);
  write_event_log(join_path(dir, files::kEvents), d.log);
  write_profiles(join_path(dir, files::kProfiles), d.profiles);
  write_truth(join_path(dir, files::kTruth), d.truths);
}

inline Dataset read_dataset(const std::string& dir) {
  Dataset d;
  d.log = read_event_log(join_path(dir, files::kEvents));
  d.profiles = read_profiles(join_path(dir, files::kProfiles));
  d.truths = read_truth(join_path(dir, files::kTruth));
  d.index = EventIndex(d.log);
  return d;
}

// ---------------------------------------------------------------------------

inline const char* method_name(Mode m) {
  switch (m) {
    case Mode::tccp:
      return "TCCP";
    case Mode::supervised_lr:
      return "LR";
    case Mode::supervised_fm:
      return "FM";
    case Mode::rule_recency:
      return "Recency rule";
    default:
      return "Frequency rule";
  }
}

inline TestSet make_test_set(const Dataset& d, const RunConfig& cfg) {
  try {
    return build_test_set(d.index, d.profiles, d.truths, d.log.horizon().t_start + days(cfg.anchor_day),
                          cfg.cp_days, cfg.layout());
  } catch (const Error& e) {
    rethrow_in_stage("test set", e);
  }
}

inline Scorer model_scorer(const ModelFile& mf) {
  return [&mf](const Sample& s) { return mf.probability(s.features); };
}

inline std::string model_params(const RunConfig& cfg, Mode m) {
  switch (m) {
    case Mode::tccp:
      return "OP=" + std::to_string(cfg.op_days) + ", CP=" + std::to_string(cfg.cp_days);
    default:
      return "OP=CP=" + std::to_string(cfg.cp_days);
  }
}

// Deterministic holdout membership for the e1/e2/e3 validation set.
inline bool in_holdout(const std::string& user_id, std::uint64_t seed, double fraction) {
  const auto h = hashing::combine(hashing::combine(seed, hashing::fnv1a("holdout")), hashing::fnv1a(user_id));
  return static_cast<double>(h >> 11) * 0x1.0p-53 < fraction;
}

// Ratio of short-window to full-period positives on the cohort selected at
// ref - cp, using the same candidate filter as training.
inline LabelFrequency historical_label_frequency(const EventIndex& index, std::span<const Profile> profiles,
                                                 const WindowSpec& w) {
  const Timestamp t0 = w.ref_time - days(w.cp_days);
  const auto cohort = select_candidates(index, profiles, t0);
  std::size_t p_short = 0, p_full = 0;
  for (const auto& u : cohort) {
    if (index.logins_in(u, t0, t0 + days(w.op_days)) > 0) ++p_short;
    if (index.logins_in(u, t0, t0 + days(w.cp_days)) > 0) ++p_full;
  }
  return estimate_c_historical(p_short, p_full);
}

struct GPrime {
  ModelFile model;
  std::unordered_map<std::string, double> score;  // g' per user in P and U
  std::vector<double> val_labeled;               // holdout P scores
  std::vector<double> val_all;                   // holdout P and U scores
};

inline GPrime fit_g_prime(const SampleSet& w, const RunConfig& cfg) {
  const bool holdout = cfg.c_method != CMethod::historical;
  std::vector<WeightedInstance> rows;
  std::vector<const Sample*> val_p, val_u;
  for (const auto& s : w.P) {
    if (holdout && in_holdout(s.user_id, cfg.train.seed, cfg.holdout_fraction))
      val_p.push_back(&s);
    else
      rows.push_back({s.features, 1, 1.0});
  }
  for (const auto& s : w.U) {
    if (holdout && in_holdout(s.user_id, cfg.train.seed, cfg.holdout_fraction))
      val_u.push_back(&s);
    else
      rows.push_back({s.features, 0, 1.0});
  }
  GPrime g;
  const auto lr = lr_train(rows, w.dim, cfg.train);
  g.model.model = lr;
  g.model.cfg = cfg.train;
  if (cfg.platt) {
    std::vector<double> margins;
    std::vector<int> labels;
    for (const auto& r : rows) {
      margins.push_back(lr_margin(lr, r.features));
      labels.push_back(r.label);
    }
    g.model.platt = platt_fit(margins, labels);
  }
  for (const auto& s : w.P) g.score[s.user_id] = g.model.probability(s.features);
  for (const auto& s : w.U) g.score[s.user_id] = g.model.probability(s.features);
  for (const Sample* s : val_p) {
    g.val_labeled.push_back(g.score.at(s->user_id));
    g.val_all.push_back(g.score.at(s->user_id));
  }
  for (const Sample* s : val_u) g.val_all.push_back(g.score.at(s->user_id));
  return g;
}

inline LabelFrequency estimate_label_frequency(const Dataset& d, const WindowSpec& w, const GPrime& g,
                                               CMethod method) {
  switch (method) {
    case CMethod::e1:
      return estimate_c_e1(g.val_labeled);
    case CMethod::e2:
      return estimate_c_e2(g.val_labeled, g.val_all);
    case CMethod::e3:
      return estimate_c_e3(g.val_all);
    default:
      return historical_label_frequency(d.index, d.profiles, w);
  }
}

inline void write_label_frequency(const std::string& path, const LabelFrequency& c) {
  OrderedJson j;
  j["version"] = kFileVersion;
  j["c"] = c.c;
  j["method"] = to_string(c.method);
  j["support"] = c.support;
  auto out = detail::open_out(path);
  out << j.dump() << '\n';
}

inline LabelFrequency read_label_frequency(const std::string& path) {
  auto in = detail::open_in(path);
  try {
    Json j;
    in >> j;
    return {j.at("c").get<double>(), parse_c_method(j.at("method").get<std::string>()),
            j.at("support").get<std::size_t>()};
  } catch (const Json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

struct TccpResult {
  ModelFile g_prime;
  LabelFrequency c;
  ModelFile f;
  ReportRow row;
};

// Stages up to the final classifier; evaluation happens only when `test` is given.
inline TccpResult train_tccp(const Dataset& d, const RunConfig& cfg, const TestSet* test = nullptr) {
  validate(cfg);
  if (cfg.mode != Mode::tccp) throw ConfigError("run_tccp needs mode tccp");
  const auto layout = cfg.layout();
  const auto spec = cfg.window(d.log.horizon());
  const bool persist = !cfg.out_dir.empty();
  if (persist) ensure_dir(cfg.out_dir);
  auto path = [&](const char* name) { return join_path(cfg.out_dir, name); };

  std::string stage = "window";
  try {
    const auto window = build_window(d.index, d.profiles, spec, layout);
    if (window.P.empty() || window.U.empty()) throw DataError("window has an empty P or U set");
    if (persist) write_sample_set(path("window.jsonl"), window);

    stage = "g_prime";
    auto g = fit_g_prime(window, cfg);
    if (persist) write_model(path("g_prime.json"), g.model);

    stage = "c_estimate";
    TccpResult r;
    r.g_prime = std::move(g.model);
    r.c = estimate_label_frequency(d, spec, g, cfg.c_method);
    if (persist) write_label_frequency(path("c.json"), r.c);

    stage = "weighting";
    const auto weighted = build_weighted_training_set(window.P, window.U, g.score, r.c, window.dim);
    if (persist) write_weighted_set(path("weighted.jsonl"), weighted);

    stage = "train_f";
    r.f.model = fm_train(weighted, cfg.train);
    r.f.cfg = cfg.train;
    r.f.c = r.c.c;
    if (persist) write_model(path("f_model.json"), r.f);

    if (test) {
      stage = "evaluate";
      r.row = evaluate(model_scorer(r.f), *test, method_name(Mode::tccp), model_params(cfg, Mode::tccp));
    }
    return r;
  } catch (const Error& e) {
    rethrow_in_stage(stage, e);
  }
}

inline TccpResult run_tccp(const Dataset& d, const RunConfig& cfg, const TestSet& test) {
  return train_tccp(d, cfg, &test);
}

struct SupervisedResult {
  ModelFile model;
  ReportRow row;
};

// Full-label window (op = cp) ending at the anchor.
inline SupervisedResult train_supervised(const Dataset& d, const RunConfig& cfg, const TestSet* test = nullptr) {
  validate(cfg);
  if (cfg.mode != Mode::supervised_lr && cfg.mode != Mode::supervised_fm)
    throw ConfigError("run_supervised needs mode supervised_lr or supervised_fm");
  auto spec = cfg.window(d.log.horizon());
  spec.op_days = cfg.cp_days;
  const bool persist = !cfg.out_dir.empty();
  if (persist) ensure_dir(cfg.out_dir);
  const std::string tag = cfg.mode == Mode::supervised_lr ? "lr" : "fm";

  std::string stage = "window";
  try {
    const auto window = build_window(d.index, d.profiles, spec, cfg.layout());
    if (window.N.empty()) throw DataError("full-label window has no negatives; check op/cp and anchor");
    if (window.P.empty()) throw DataError("full-label window has no positives");
    if (persist) write_sample_set(join_path(cfg.out_dir, "window_" + tag + ".jsonl"), window);

    stage = "train";
    const auto set = supervised_training_set(window);
    SupervisedResult r;
    r.model.cfg = cfg.train;
    if (cfg.mode == Mode::supervised_lr)
      r.model.model = lr_train(set, cfg.train);
    else
      r.model.model = fm_train(set, cfg.train);
    if (persist) write_model(join_path(cfg.out_dir, "model_" + tag + ".json"), r.model);

    if (test) {
      stage = "evaluate";
      r.row = evaluate(model_scorer(r.model), *test, method_name(cfg.mode), model_params(cfg, cfg.mode));
    }
    return r;
  } catch (const Error& e) {
    rethrow_in_stage(stage, e);
  }
}

inline SupervisedResult run_supervised(const Dataset& d, const RunConfig& cfg, const TestSet& test) {
  return train_supervised(d, cfg, &test);
}

inline ReportRow run_rule(const Dataset& d, const RunConfig& cfg, const TestSet& test) {
  validate(cfg);
  try {
    const auto stats = rule_stats(d.index, test, cfg.rule_D);
    std::vector<int> pred;
    if (cfg.mode == Mode::rule_recency)
      for (auto v : stats.days_since) pred.push_back(recency_predict(v, cfg.rule_L));
    else if (cfg.mode == Mode::rule_frequency)
      for (auto v : stats.logins_in_d) pred.push_back(frequency_predict(v, cfg.rule_M));
    else
      throw ConfigError("run_rule needs mode rule_recency or rule_frequency");
    if (std::adjacent_find(pred.begin(), pred.end(), std::not_equal_to<>()) == pred.end())
      throw DataError("AUC is undefined: the rule predicts the same class for every test user");
    std::vector<double> score;
    for (int p : pred) score.push_back(1.0 - p);
    const std::string params =
        cfg.mode == Mode::rule_recency ? recency_params(cfg.rule_L) : frequency_params(cfg.rule_M, cfg.rule_D);
    return {method_name(cfg.mode), params, auc(score, test.labels), test.samples.P.size(), test.samples.N.size()};
  } catch (const Error& e) {
    rethrow_in_stage("rule", e);
  }
}

struct SweepPoint {
  int value = 0;
  double auc = 0.5;
};

// TCCP per observation period; op >= cp degenerates to supervised FM on the full window.
inline std::vector<SweepPoint> sweep_op(const Dataset& d, const RunConfig& base, std::span<const int> ops,
                                        const TestSet& test) {
  std::vector<SweepPoint> out;
  for (int op : ops) {
    RunConfig cfg = base;
    cfg.op_days = op;
    cfg.out_dir.clear();
    if (op < cfg.cp_days) {
      cfg.mode = Mode::tccp;
      out.push_back({op, run_tccp(d, cfg, test).row.auc});
    } else {
      cfg.mode = Mode::supervised_fm;
      cfg.op_days = cfg.cp_days;
      out.push_back({op, run_supervised(d, cfg, test).row.auc});
    }
  }
  return out;
}

inline std::vector<SweepPoint> sweep_recency(const Dataset& d, const TestSet& test, std::span<const int> grid) {
  const auto stats = rule_stats(d.index, test, kFrequencyWindowDays);
  std::vector<SweepPoint> out;
  for (int L : grid) out.push_back({L, recency_rule_auc(stats, test, L)});
  return out;
}

inline std::vector<SweepPoint> sweep_frequency(const Dataset& d, const TestSet& test, std::span<const int> grid,
                                               int d_days) {
  const auto stats = rule_stats(d.index, test, d_days);
  std::vector<SweepPoint> out;
  for (int M : grid) out.push_back({M, frequency_rule_auc(stats, test, M)});
  return out;
}

inline const SweepPoint& best_point(const std::vector<SweepPoint>& pts) {
  if (pts.empty()) throw DataError("empty sweep");
  // first maximum, so ties resolve toward the smaller parameter
  return *std::max_element(pts.begin(), pts.end(),
                           [](const SweepPoint& a, const SweepPoint& b) { return a.auc < b.auc; });
}

inline void write_sweep_csv(const std::string& path, const char* column, const std::vector<SweepPoint>& pts) {
  auto out = detail::open_out(path);
  out << column << ",auc\n";
  for (const auto& p : pts) out << p.value << ',' << format_auc(p.auc) << '\n';
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline void write_report(const std::string& dir, const EvalReport& r) {
  ensure_dir(dir);
  {
    auto out = detail::open_out(join_path(dir, "report.txt"));
    out << format_table(r);
  }
  auto out = detail::open_out(join_path(dir, "report.json"));
  OrderedJson j;
  j["ref"] = r.ref;
  j["rows"] = report_to_json(r);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// The full comparison: rules at their best grid setting, supervised LR and FM
// on the full-label window, TCCP, and the observation-period sweep.

struct Experiment {
  EvalReport report;
  std::vector<SweepPoint> op_sweep;
  std::vector<SweepPoint> recency_sweep;
  std::vector<SweepPoint> frequency_sweep;
  LabelFrequency c;
};

inline const std::vector<int> kOpGrid{3, 7, 15, 30, 60, 90};

inline Experiment run_experiment(const Dataset& d, const RunConfig& base, std::span<const int> ops) {
  Experiment ex;
  const auto test = make_test_set(d, base);
  ex.report.ref = "anchor_day=" + std::to_string(base.anchor_day) + ", cp=" + std::to_string(base.cp_days) +
                  ", n_pos=" + std::to_string(test.samples.P.size()) +
                  ", n_neg=" + std::to_string(test.samples.N.size());
  auto sub = [&](const char* name) { return base.out_dir.empty() ? std::string() : join_path(base.out_dir, name); };

  ex.recency_sweep = sweep_recency(d, test, kRecencyGrid);
  ex.frequency_sweep = sweep_frequency(d, test, kFrequencyGrid, base.rule_D);
  {
    RunConfig cfg = base;
    cfg.mode = Mode::rule_recency;
    cfg.rule_L = best_point(ex.recency_sweep).value;
    ex.report.rows.push_back(run_rule(d, cfg, test));
    cfg.mode = Mode::rule_frequency;
    cfg.rule_M = best_point(ex.frequency_sweep).value;
    ex.report.rows.push_back(run_rule(d, cfg, test));
  }
  for (Mode m : {Mode::supervised_lr, Mode::supervised_fm}) {
    RunConfig cfg = base;
    cfg.mode = m;
    cfg.out_dir = sub("supervised");
    ex.report.rows.push_back(run_supervised(d, cfg, test).row);
  }
  {
    RunConfig cfg = base;
    cfg.mode = Mode::tccp;
    cfg.out_dir = sub("tccp");
    auto r = run_tccp(d, cfg, test);
    ex.c = r.c;
    ex.report.rows.push_back(r.row);
  }
  if (!ops.empty()) ex.op_sweep = sweep_op(d, base, ops, test);
  return ex;
}

inline void write_experiment(const std::string& dir, const Experiment& ex) {
  write_report(dir, ex.report);
  if (!ex.op_sweep.empty()) write_sweep_csv(join_path(dir, "op_sweep.csv"), "op", ex.op_sweep);
  write_sweep_csv(join_path(dir, "recency_sweep.csv"), "L", ex.recency_sweep);
  write_sweep_csv(join_path(dir, "frequency_sweep.csv"), "M", ex.frequency_sweep);
}

}  // namespace tccp
