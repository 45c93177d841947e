#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tccp/data_model.hpp"

namespace tccp {

enum class CMethod { e1, e2, e3, historical };

inline const char* to_string(CMethod m) {
  switch (m) {
    case CMethod::e1:
      return "e1";
    case CMethod::e2:
      return "e2";
    case CMethod::e3:
      return "e3";
    default:
      return "historical";
  }
}

inline CMethod parse_c_method(const std::string& s) {
  if (s == "e1") return CMethod::e1;
  if (s == "e2") return CMethod::e2;
  if (s == "e3") return CMethod::e3;
  if (s == "historical") return CMethod::historical;
  throw ConfigError("unknown c estimator '" + s + "' (expected e1, e2, e3 or historical)");
}

inline constexpr double kMinLabelFrequency = 0.01;

// c = p(s = 1 | y = 1), the probability that a true positive is labeled.
struct LabelFrequency {
  double c = 1.0;
  CMethod method = CMethod::historical;
  std::size_t support = 0;

  bool operator==(const LabelFrequency&) const = default;
};

// Raw estimates above 1 indicate a cohort bug and are rejected; tiny ones are
// floored at kMinLabelFrequency.
inline LabelFrequency make_label_frequency(double raw, CMethod method, std::size_t support) {
  if (!std::isfinite(raw)) throw DataError("label frequency estimate is not finite");
  if (raw > 1.0 + 1e-12)
    throw DataError("label frequency estimate " + std::to_string(raw) + " exceeds 1");
  return {std::clamp(raw, kMinLabelFrequency, 1.0), method, support};
}

// p(y = 1 | x, s = 0) with g = c * g_prime, in the closed form
// (1 - c) g' / (1 - c g'), which stays in [0, 1] on the whole domain.
inline double compute_weight(double g_prime, const LabelFrequency& c) {
  if (!(g_prime >= 0.0 && g_prime <= 1.0)) throw DataError("score g' must lie in [0, 1]");
  if (!(c.c > 0.0 && c.c <= 1.0)) throw DataError("label frequency must lie in (0, 1]");
  if (c.c == 1.0) return 0.0;
  return (1.0 - c.c) * g_prime / (1.0 - c.c * g_prime);
}

// The same weight through the odds form ((1 - c) / c) * g / (1 - g).
inline double weight_odds_form(double g_prime, double c) {
  const double g = c * g_prime;
  return ((1.0 - c) / c) * (g / (1.0 - g));
}

inline LabelFrequency estimate_c_e1(std::span<const double> g_labeled) {
  if (g_labeled.empty()) throw DataError("e1 needs at least one labeled validation score");
  const double sum = std::accumulate(g_labeled.begin(), g_labeled.end(), 0.0);
  return make_label_frequency(sum / static_cast<double>(g_labeled.size()), CMethod::e1, g_labeled.size());
}

inline LabelFrequency estimate_c_e2(std::span<const double> g_labeled, std::span<const double> g_validation) {
  const double num = std::accumulate(g_labeled.begin(), g_labeled.end(), 0.0);
  const double den = std::accumulate(g_validation.begin(), g_validation.end(), 0.0);
  if (!(den > 0.0)) throw DataError("e2 is undefined: validation scores sum to zero");
  return make_label_frequency(num / den, CMethod::e2, g_validation.size());
}

inline LabelFrequency estimate_c_e3(std::span<const double> g_validation) {
  if (g_validation.empty()) throw DataError("e3 needs at least one validation score");
  return make_label_frequency(*std::max_element(g_validation.begin(), g_validation.end()), CMethod::e3,
                              g_validation.size());
}

// Ratio of a past cohort's short-window positives to its full-churn-period positives.
inline LabelFrequency estimate_c_historical(std::size_t p_short, std::size_t p_full) {
  if (p_full == 0) throw DataError("historical c needs a cohort with at least one full-period positive");
  if (p_short > p_full)
    throw DataError("inconsistent cohort: " + std::to_string(p_short) + " short-window positives exceed " +
                    std::to_string(p_full) + " full-period positives");
  return make_label_frequency(static_cast<double>(p_short) / static_cast<double>(p_full), CMethod::historical,
                              p_full);
}

enum class Provenance { positive, unlabeled_as_positive, unlabeled_as_negative, negative };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::positive:
      return "positive";
    case Provenance::unlabeled_as_positive:
      return "unlabeled-as-positive";
    case Provenance::unlabeled_as_negative:
      return "unlabeled-as-negative";
    default:
      return "negative";
  }
}

inline Provenance parse_provenance(const std::string& s) {
  if (s == "positive") return Provenance::positive;
  if (s == "unlabeled-as-positive") return Provenance::unlabeled_as_positive;
  if (s == "unlabeled-as-negative") return Provenance::unlabeled_as_negative;
  if (s == "negative") return Provenance::negative;
  throw DataError("unknown provenance '" + s + "'");
}

struct WeightedTrainingSet {
  std::uint32_t dim = 0;
  LabelFrequency c;
  std::vector<WeightedInstance> rows;
  std::vector<Provenance> provenance;
  std::vector<std::string> user_ids;

  bool operator==(const WeightedTrainingSet&) const = default;
};

// g' is clamped to this band before weighting.
inline constexpr double kScoreClamp = 1e-6;

// P rows first with unit weight, then each U sample (in user_id order) as a
// positive copy weighted w and a negative copy weighted 1 - w.
inline WeightedTrainingSet build_weighted_training_set(std::span<const Sample> P, std::span<const Sample> U,
                                                       const std::unordered_map<std::string, double>& g_prime,
                                                       const LabelFrequency& c, std::uint32_t dim) {
  WeightedTrainingSet out;
  out.dim = dim;
  out.c = c;
  out.rows.reserve(P.size() + 2 * U.size());
  for (const auto& s : P) {
    out.rows.push_back({s.features, 1, 1.0});
    out.provenance.push_back(Provenance::positive);
    out.user_ids.push_back(s.user_id);
  }
  std::vector<const Sample*> unl;
  unl.reserve(U.size());
  for (const auto& s : U) unl.push_back(&s);
  std::sort(unl.begin(), unl.end(), [](const Sample* a, const Sample* b) { return a->user_id < b->user_id; });
  for (const Sample* s : unl) {
    auto it = g_prime.find(s->user_id);
    if (it == g_prime.end()) throw DataError("incomplete scores: no g' for unlabeled user '" + s->user_id + "'");
    const double g = std::clamp(it->second, kScoreClamp, 1.0 - kScoreClamp);
    const double w = compute_weight(g, c);
    out.rows.push_back({s->features, 1, w});
    out.provenance.push_back(Provenance::unlabeled_as_positive);
    out.user_ids.push_back(s->user_id);
    out.rows.push_back({s->features, 0, 1.0 - w});
    out.provenance.push_back(Provenance::unlabeled_as_negative);
    out.user_ids.push_back(s->user_id);
  }
  return out;
}

// Fully labeled rows with unit weights (P -> 1, N -> 0).
inline WeightedTrainingSet supervised_training_set(const SampleSet& set) {
  if (!set.U.empty()) throw DataError("supervised training needs a fully labeled sample set");
  WeightedTrainingSet out;
  out.dim = set.dim;
  out.c = {1.0, CMethod::historical, set.P.size()};
  for (const auto& s : set.P) {
    out.rows.push_back({s.features, 1, 1.0});
    out.provenance.push_back(Provenance::positive);
    out.user_ids.push_back(s.user_id);
  }
  for (const auto& s : set.N) {
    out.rows.push_back({s.features, 0, 1.0});
    out.provenance.push_back(Provenance::negative);
    out.user_ids.push_back(s.user_id);
  }
  return out;
}

// P rows labeled 1 and U rows labeled 0, all at unit weight: the input of g'.
inline WeightedTrainingSet positive_unlabeled_rows(std::span<const Sample> P, std::span<const Sample> U,
                                                   std::uint32_t dim) {
  WeightedTrainingSet out;
  out.dim = dim;
  for (const auto& s : P) {
    out.rows.push_back({s.features, 1, 1.0});
    out.provenance.push_back(Provenance::positive);
    out.user_ids.push_back(s.user_id);
  }
  for (const auto& s : U) {
    out.rows.push_back({s.features, 0, 1.0});
    out.provenance.push_back(Provenance::unlabeled_as_negative);
    out.user_ids.push_back(s.user_id);
  }
  return out;
}

inline void write_weighted_set(const std::string& path, const WeightedTrainingSet& set) {
  auto out = detail::open_out(path);
  OrderedJson header;
  header["version"] = kFileVersion;
  header["c"] = set.c.c;
  header["c_method"] = to_string(set.c.method);
  header["dim"] = set.dim;
  header["c_support"] = set.c.support;
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < set.rows.size(); ++i) {
    OrderedJson j;
    j["user_id"] = set.user_ids[i];
    j["label"] = set.rows[i].label;
    j["weight"] = set.rows[i].weight;
    j["provenance"] = to_string(set.provenance[i]);
    j["features"] = detail::features_to_json(set.rows[i].features);
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline WeightedTrainingSet read_weighted_set(const std::string& path) {
  WeightedTrainingSet set;
  bool have_header = false;
  detail::for_each_json_line(path, [&](const Json& j, std::size_t) {
    if (!have_header) {
      const int version = detail::field<int>(j, "version");
      if (version != kFileVersion)
        throw DataError("unsupported weighted set version " + std::to_string(version));
      set.c.c = detail::field<double>(j, "c");
      set.c.method = parse_c_method(detail::field<std::string>(j, "c_method"));
      set.dim = detail::field<std::uint32_t>(j, "dim");
      set.c.support = j.value("c_support", std::size_t{0});
      have_header = true;
      return;
    }
    WeightedInstance row;
    row.label = detail::field<int>(j, "label");
    row.weight = detail::field<double>(j, "weight");
    if (row.label != 0 && row.label != 1) throw DataError("label must be 0 or 1");
    if (!(row.weight >= 0.0 && row.weight <= 1.0)) throw DataError("weight must lie in [0, 1]");
    row.features = detail::features_from_json(j.at("features"), set.dim);
    set.user_ids.push_back(detail::field<std::string>(j, "user_id"));
    set.provenance.push_back(parse_provenance(detail::field<std::string>(j, "provenance")));
    set.rows.push_back(std::move(row));
  });
  if (!have_header) throw DataError(path + ": missing weighted set header");
  return set;
}

}  // namespace tccp
