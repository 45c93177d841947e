#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tccp/data_model.hpp"
#include "tccp/featurize.hpp"
#include "tccp/simulator.hpp"

namespace tccp {

// Mann-Whitney statistic with average ranks, so tied pairs count one half.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("auc: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("auc: labels must be 0 or 1");
    n_pos += (y == 1);
  }
  const std::size_t n = labels.size();
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("AUC is undefined: only one class present");
  for (double s : scores)
    if (std::isnan(s)) throw DataError("auc: NaN score");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive ranks, doubled to stay in integers until the final division.
  std::uint64_t rank_sum2 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) pos_in_group += (labels[order[j++]] == 1);
    // ranks i+1 .. j share the average (i + 1 + j) / 2
    rank_sum2 += pos_in_group * (i + 1 + j);
    i = j;
  }
  const double u = (static_cast<double>(rank_sum2) - static_cast<double>(n_pos) * (n_pos + 1)) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// 1 = predicted churn.
inline int recency_predict(std::int64_t days_since_last_login, int L) {
  if (days_since_last_login < 0 || L < 0) throw DataError("recency rule inputs must be nonnegative");
  return days_since_last_login >= L ? 1 : 0;
}

inline int frequency_predict(std::int64_t login_count, int M) {
  if (login_count < 0 || M < 0) throw DataError("frequency rule inputs must be nonnegative");
  return login_count < M ? 1 : 0;
}

inline const std::vector<int> kRecencyGrid{1, 3, 7, 15, 30};
inline const std::vector<int> kFrequencyGrid{1, 2, 3, 5, 8};
inline constexpr int kFrequencyWindowDays = 15;

struct ReportRow {
  std::string method;
  std::string params;
  double auc = 0.5;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;

  bool operator==(const ReportRow&) const = default;
};

struct EvalReport {
  std::string ref;
  std::vector<ReportRow> rows;

  bool operator==(const EvalReport&) const = default;
};

// Evaluation set: retained users are P (label 1), churned users are N.
struct TestSet {
  SampleSet samples;
  std::vector<std::string> user_ids;  // P then N, matches labels
  std::vector<int> labels;
};

// Candidates active at the anchor, features at the anchor, and labels from
// ground truth over [anchor, anchor + cp).
inline TestSet build_test_set(const EventIndex& index, std::span<const Profile> profiles,
                              std::span<const UserTruth> truths, Timestamp anchor, int cp_days,
                              const FeatureLayout& layout) {
  const auto candidates = select_candidates(index, profiles, anchor);
  const auto features = extract_features(index, profile_lookup(profiles), candidates, anchor, layout);
  const auto truth = ground_truth_labels(truths, index, anchor, days(cp_days));
  TestSet t;
  t.samples.dim = layout.dim();
  t.samples.ref_time = anchor;
  for (const auto& u : candidates) {
    auto it = truth.find(u);
    if (it == truth.end()) throw DataError("no ground truth for candidate '" + u + "'");
    auto& dst = it->second == ChurnLabel::retained ? t.samples.P : t.samples.N;
    dst.push_back({u, features.at(u)});
  }
  validate(t.samples);
  for (const auto& s : t.samples.P) {
    t.user_ids.push_back(s.user_id);
    t.labels.push_back(1);
  }
  for (const auto& s : t.samples.N) {
    t.user_ids.push_back(s.user_id);
    t.labels.push_back(0);
  }
  return t;
}

using Scorer = std::function<double(const Sample&)>;

inline ReportRow evaluate(const Scorer& score, const TestSet& test, std::string method, std::string params) {
  std::vector<double> s;
  s.reserve(test.labels.size());
  for (const auto& x : test.samples.P) s.push_back(score(x));
  for (const auto& x : test.samples.N) s.push_back(score(x));
  return {std::move(method), std::move(params), auc(s, test.labels), test.samples.P.size(), test.samples.N.size()};
}

// Per-user rule statistics at the anchor.
struct RuleStats {
  std::vector<std::int64_t> days_since;  // no login before the anchor: max value
  std::vector<std::int64_t> logins_in_d;
};

inline RuleStats rule_stats(const EventIndex& index, const TestSet& test, int d_days) {
  const Timestamp t = test.samples.ref_time;
  RuleStats r;
  for (const auto& u : test.user_ids) {
    const auto last = index.last_login_before(u, t);
    r.days_since.push_back(last ? (t - *last) / kSecondsPerDay : std::numeric_limits<std::int64_t>::max());
    r.logins_in_d.push_back(static_cast<std::int64_t>(index.logins_in(u, t - days(d_days), t)));
  }
  return r;
}

// Rules predict churn, so the retention score is 1 - prediction.
inline double recency_rule_auc(const RuleStats& r, const TestSet& test, int L) {
  std::vector<double> s;
  for (auto d : r.days_since) s.push_back(1.0 - recency_predict(d, L));
  return auc(s, test.labels);
}

inline double frequency_rule_auc(const RuleStats& r, const TestSet& test, int M) {
  std::vector<double> s;
  for (auto n : r.logins_in_d) s.push_back(1.0 - frequency_predict(n, M));
  return auc(s, test.labels);
}

inline std::string recency_params(int L) { return "L=" + std::to_string(L); }
inline std::string frequency_params(int M, int D) { return "M=" + std::to_string(M) + ", D=" + std::to_string(D); }

// ---------------------------------------------------------------------------
// Output.

inline std::string format_auc(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::string format_table(const EvalReport& r) {
  std::size_t wm = 6, wp = 10;
  for (const auto& row : r.rows) {
    wm = std::max(wm, row.method.size());
    wp = std::max(wp, row.params.size());
  }
  std::ostringstream out;
  auto line = [&](const std::string& a, const std::string& b, const std::string& c) {
    out << a << std::string(wm - a.size(), ' ') << " | " << b << std::string(wp - b.size(), ' ') << " | " << c
        << '\n';
  };
  line("Method", "Parameters", "AUC");
  out << std::string(wm, '-') << "-+-" << std::string(wp, '-') << "-+-------\n";
  for (const auto& row : r.rows) line(row.method, row.params, format_auc(row.auc));
  return out.str();
}

inline OrderedJson report_to_json(const EvalReport& r) {
  OrderedJson rows = OrderedJson::array();
  for (const auto& row : r.rows) {
    OrderedJson j;
    j["method"] = row.method;
    j["params"] = row.params;
    j["auc"] = row.auc;
    j["n_pos"] = row.n_pos;
    j["n_neg"] = row.n_neg;
    rows.push_back(std::move(j));
  }
  return rows;
}

inline EvalReport report_from_json(const Json& j, std::string ref = {}) {
  EvalReport r;
  r.ref = std::move(ref);
  for (const auto& row : j) {
    r.rows.push_back({row.at("method").get<std::string>(), row.at("params").get<std::string>(),
                      row.at("auc").get<double>(), row.at("n_pos").get<std::size_t>(),
                      row.at("n_neg").get<std::size_t>()});
  }
  return r;
}

}  // namespace tccp
