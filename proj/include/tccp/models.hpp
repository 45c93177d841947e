#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tccp/data_model.hpp"
#include "tccp/hashing.hpp"
#include "tccp/pu_core.hpp"

namespace tccp {

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 20;
  double l2_linear = 1e-6;
  double l2_factor = 1e-5;
  int k = 8;
  double init_scale = 0.01;
  std::uint64_t seed = 7;
  bool shuffle = true;

  bool operator==(const TrainConfig&) const = default;
};

inline void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (c.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(c.l2_linear >= 0.0) || !(c.l2_factor >= 0.0)) throw ConfigError("l2 penalties must be nonnegative");
  if (c.k < 1) throw ConfigError("factorization dimension k must be at least 1");
  if (!(c.init_scale >= 0.0)) throw ConfigError("init_scale must be nonnegative");
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Negative log-likelihood of `label` under margin z.
inline double log_loss(double z, int label) { return label == 1 ? softplus(-z) : softplus(z); }

struct LogisticModel {
  double bias = 0.0;
  std::vector<double> weights;

  std::uint32_t dim() const { return static_cast<std::uint32_t>(weights.size()); }
  bool operator==(const LogisticModel&) const = default;
};

struct FMModel {
  double w0 = 0.0;
  std::vector<double> w;
  std::vector<double> V;  // row-major dim x k
  int k = 1;

  FMModel() = default;
  FMModel(std::uint32_t dim, int factors) : w(dim, 0.0), V(static_cast<std::size_t>(dim) * factors, 0.0), k(factors) {}

  std::uint32_t dim() const { return static_cast<std::uint32_t>(w.size()); }
  double v(std::uint32_t j, int f) const { return V[static_cast<std::size_t>(j) * k + f]; }
  double& v(std::uint32_t j, int f) { return V[static_cast<std::size_t>(j) * k + f]; }
  bool operator==(const FMModel&) const = default;
};

namespace detail {

inline void check_dim(std::uint32_t model_dim, const FeatureVector& x) {
  if (x.dim() != model_dim)
    throw DataError("feature dim " + std::to_string(x.dim()) + " does not match model dim " +
                    std::to_string(model_dim));
}

}  // namespace detail

inline double lr_margin(const LogisticModel& m, const FeatureVector& x) {
  detail::check_dim(m.dim(), x);
  double z = m.bias;
  for (const auto& [j, xj] : x.entries()) z += m.weights[j] * xj;
  return z;
}

inline double lr_predict(const LogisticModel& m, const FeatureVector& x) { return sigmoid(lr_margin(m, x)); }

// w0 + sum_j w_j x_j + 0.5 * sum_f [(sum_j v_jf x_j)^2 - sum_j v_jf^2 x_j^2]
inline double fm_predict(const FMModel& m, const FeatureVector& x) {
  detail::check_dim(m.dim(), x);
  double lin = m.w0;
  for (const auto& [j, xj] : x.entries()) lin += m.w[j] * xj;
  double inter = 0.0;
  for (int f = 0; f < m.k; ++f) {
    double s = 0.0, q = 0.0;
    for (const auto& [j, xj] : x.entries()) {
      const double t = m.v(j, f) * xj;
      s += t;
      q += t * t;
    }
    inter += s * s - q;
  }
  return lin + 0.5 * inter;
}

inline double fm_probability(const FMModel& m, const FeatureVector& x) { return sigmoid(fm_predict(m, x)); }

// ---------------------------------------------------------------------------
// Objectives: sum_i weight_i * logloss_i + l2_linear/2 |w|^2 (+ l2_factor/2 |V|^2).
// Biases are not penalized.

inline double lr_objective(const LogisticModel& m, std::span<const WeightedInstance> data, const TrainConfig& cfg) {
  double loss = 0.0;
  for (const auto& row : data) loss += row.weight * log_loss(lr_margin(m, row.features), row.label);
  double reg = 0.0;
  for (double w : m.weights) reg += w * w;
  return loss + 0.5 * cfg.l2_linear * reg;
}

inline LogisticModel lr_gradient(const LogisticModel& m, std::span<const WeightedInstance> data,
                                 const TrainConfig& cfg) {
  LogisticModel g;
  g.weights.assign(m.weights.size(), 0.0);
  for (const auto& row : data) {
    const double r = row.weight * (sigmoid(lr_margin(m, row.features)) - row.label);
    g.bias += r;
    for (const auto& [j, xj] : row.features.entries()) g.weights[j] += r * xj;
  }
  for (std::size_t j = 0; j < m.weights.size(); ++j) g.weights[j] += cfg.l2_linear * m.weights[j];
  return g;
}

inline double fm_objective(const FMModel& m, std::span<const WeightedInstance> data, const TrainConfig& cfg) {
  double loss = 0.0;
  for (const auto& row : data) loss += row.weight * log_loss(fm_predict(m, row.features), row.label);
  double rw = 0.0, rv = 0.0;
  for (double w : m.w) rw += w * w;
  for (double v : m.V) rv += v * v;
  return loss + 0.5 * cfg.l2_linear * rw + 0.5 * cfg.l2_factor * rv;
}

inline FMModel fm_gradient(const FMModel& m, std::span<const WeightedInstance> data, const TrainConfig& cfg) {
  FMModel g(m.dim(), m.k);
  std::vector<double> sums(m.k);
  for (const auto& row : data) {
    const double r = row.weight * (sigmoid(fm_predict(m, row.features)) - row.label);
    for (int f = 0; f < m.k; ++f) {
      sums[f] = 0.0;
      for (const auto& [j, xj] : row.features.entries()) sums[f] += m.v(j, f) * xj;
    }
    g.w0 += r;
    for (const auto& [j, xj] : row.features.entries()) {
      g.w[j] += r * xj;
      for (int f = 0; f < m.k; ++f) g.v(j, f) += r * xj * (sums[f] - m.v(j, f) * xj);
    }
  }
  for (std::size_t j = 0; j < m.w.size(); ++j) g.w[j] += cfg.l2_linear * m.w[j];
  for (std::size_t i = 0; i < m.V.size(); ++i) g.V[i] += cfg.l2_factor * m.V[i];
  return g;
}

// ---------------------------------------------------------------------------
// Sequential SGD.

struct TrainStats {
  std::vector<double> epoch_loss;  // weighted mean log loss seen during each pass
};

namespace detail {

struct TrainRow {
  const FeatureVector* x;
  int label;
  double weight;
};

// Drops zero-weight rows and merges runs of identical (features, label) rows
// into one row carrying the summed weight.
inline std::vector<TrainRow> prepare_rows(std::span<const WeightedInstance> data, std::uint32_t dim) {
  std::vector<TrainRow> rows;
  rows.reserve(data.size());
  for (const auto& d : data) {
    check_dim(dim, d.features);
    if (d.label != 0 && d.label != 1) throw DataError("labels must be 0 or 1");
    if (!(d.weight >= 0.0) || !std::isfinite(d.weight)) throw DataError("weights must be finite and nonnegative");
    if (d.weight == 0.0) continue;
    if (!rows.empty() && rows.back().label == d.label &&
        (rows.back().x == &d.features || *rows.back().x == d.features)) {
      rows.back().weight += d.weight;
      continue;
    }
    rows.push_back({&d.features, d.label, d.weight});
  }
  if (rows.empty()) throw DataError("training data has no rows with positive weight");
  return rows;
}

inline std::mt19937_64 shuffle_rng(const TrainConfig& cfg) {
  return std::mt19937_64(hashing::combine(cfg.seed, hashing::fnv1a("sgd-shuffle")));
}

inline std::mt19937_64 init_rng(const TrainConfig& cfg) {
  return std::mt19937_64(hashing::combine(cfg.seed, hashing::fnv1a("fm-init")));
}

inline void finish_epoch(int epoch, double loss, double total_weight, TrainStats* stats) {
  const double mean = loss / total_weight;
  if (!std::isfinite(mean))
    throw DivergenceError("training diverged: non-finite loss in epoch " + std::to_string(epoch + 1), epoch + 1);
  if (stats) stats->epoch_loss.push_back(mean);
}

}  // namespace detail

inline LogisticModel lr_train(std::span<const WeightedInstance> data, std::uint32_t dim, const TrainConfig& cfg,
                              TrainStats* stats = nullptr) {
  validate(cfg);
  const auto rows = detail::prepare_rows(data, dim);
  LogisticModel m;
  m.weights.assign(dim, 0.0);
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = detail::shuffle_rng(cfg);
  double total_weight = 0.0;
  for (const auto& r : rows) total_weight += r.weight;
  const double lr = cfg.learning_rate;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double loss = 0.0;
    for (std::size_t idx : order) {
      const auto& row = rows[idx];
      double z = m.bias;
      for (const auto& [j, xj] : row.x->entries()) z += m.weights[j] * xj;
      loss += row.weight * log_loss(z, row.label);
      const double g = row.weight * (sigmoid(z) - row.label);
      m.bias -= lr * g;
      for (const auto& [j, xj] : row.x->entries()) m.weights[j] -= lr * (g * xj + cfg.l2_linear * m.weights[j]);
    }
    detail::finish_epoch(epoch, loss, total_weight, stats);
  }
  return m;
}

inline LogisticModel lr_train(const WeightedTrainingSet& set, const TrainConfig& cfg, TrainStats* stats = nullptr) {
  return lr_train(set.rows, set.dim, cfg, stats);
}

inline FMModel fm_train(std::span<const WeightedInstance> data, std::uint32_t dim, const TrainConfig& cfg,
                        TrainStats* stats = nullptr) {
  validate(cfg);
  const auto rows = detail::prepare_rows(data, dim);
  FMModel m(dim, cfg.k);
  if (cfg.init_scale > 0.0) {
    auto init = detail::init_rng(cfg);
    std::normal_distribution<double> normal(0.0, cfg.init_scale);
    for (auto& v : m.V) v = normal(init);
  }
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = detail::shuffle_rng(cfg);
  double total_weight = 0.0;
  for (const auto& r : rows) total_weight += r.weight;
  const double lr = cfg.learning_rate;
  const int k = m.k;
  std::vector<double> sums(k);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double loss = 0.0;
    for (std::size_t idx : order) {
      const auto& row = rows[idx];
      const auto entries = row.x->entries();
      double lin = m.w0;
      for (const auto& [j, xj] : entries) lin += m.w[j] * xj;
      double inter = 0.0;
      for (int f = 0; f < k; ++f) {
        double s = 0.0, q = 0.0;
        for (const auto& [j, xj] : entries) {
          const double t = m.v(j, f) * xj;
          s += t;
          q += t * t;
        }
        sums[f] = s;
        inter += s * s - q;
      }
      const double y = lin + 0.5 * inter;
      loss += row.weight * log_loss(y, row.label);
      const double g = row.weight * (sigmoid(y) - row.label);
      m.w0 -= lr * g;
      for (const auto& [j, xj] : entries) {
        m.w[j] -= lr * (g * xj + cfg.l2_linear * m.w[j]);
        double* vj = &m.V[static_cast<std::size_t>(j) * k];
        for (int f = 0; f < k; ++f) vj[f] -= lr * (g * xj * (sums[f] - vj[f] * xj) + cfg.l2_factor * vj[f]);
      }
    }
    detail::finish_epoch(epoch, loss, total_weight, stats);
  }
  return m;
}

inline FMModel fm_train(const WeightedTrainingSet& set, const TrainConfig& cfg, TrainStats* stats = nullptr) {
  return fm_train(set.rows, set.dim, cfg, stats);
}

// ---------------------------------------------------------------------------

enum class PosteriorMode { raw, divide_by_c };

// raw: the score itself; divide_by_c: min(1, score / c).
inline double predict_posterior(double score, const LabelFrequency& c, PosteriorMode mode) {
  if (mode == PosteriorMode::raw) return score;
  return std::min(1.0, score / c.c);
}

// Platt scaling: p = 1 / (1 + exp(A * s + B)).
struct PlattParams {
  double A = 0.0;
  double B = 0.0;

  bool operator==(const PlattParams&) const = default;
};

inline double platt_apply(const PlattParams& p, double score) { return sigmoid(-(p.A * score + p.B)); }

// Newton's method with backtracking on the regularized-target log loss.
inline PlattParams platt_fit(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("platt_fit: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += (y == 1);
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("degenerate calibration: labels contain a single class");

  const double hi = (n_pos + 1.0) / (n_pos + 2.0);
  const double lo = 1.0 / (n_neg + 2.0);
  std::vector<double> t(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) t[i] = labels[i] == 1 ? hi : lo;

  auto objective = [&](double A, double B) {
    double f = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double z = scores[i] * A + B;
      f += z >= 0.0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };

  double A = 0.0, B = std::log((n_neg + 1.0) / (n_pos + 1.0));
  double fval = objective(A, B);
  constexpr int kMaxIter = 100;
  constexpr double kMinStep = 1e-10, kSigma = 1e-12, kEps = 1e-5;
  for (int it = 0; it < kMaxIter; ++it) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double z = scores[i] * A + B;
      double p, q;
      if (z >= 0.0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += scores[i] * scores[i] * d2;
      h22 += d2;
      h21 += scores[i] * d2;
      const double d1 = t[i] - p;
      g1 += scores[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;
    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;
    double step = 1.0;
    while (step >= kMinStep) {
      const double nA = A + step * dA, nB = B + step * dB;
      const double nf = objective(nA, nB);
      if (nf < fval + 1e-4 * step * gd) {
        A = nA;
        B = nB;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  if (!std::isfinite(A) || !std::isfinite(B)) throw DivergenceError("platt_fit produced non-finite parameters", 0);
  return {A, B};
}

// ---------------------------------------------------------------------------
// Model files.

struct ModelFile {
  std::variant<LogisticModel, FMModel> model;
  TrainConfig cfg;
  std::optional<double> c;
  std::optional<PlattParams> platt;

  bool is_fm() const { return std::holds_alternative<FMModel>(model); }
  std::uint32_t dim() const {
    return std::visit([](const auto& m) { return m.dim(); }, model);
  }

  // Probability of the positive class (retained customer).
  double probability(const FeatureVector& x) const {
    const double raw = is_fm() ? fm_predict(std::get<FMModel>(model), x) : lr_margin(std::get<LogisticModel>(model), x);
    return platt ? platt_apply(*platt, raw) : sigmoid(raw);
  }
};

inline OrderedJson train_config_to_json(const TrainConfig& c) {
  OrderedJson j;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["l2_linear"] = c.l2_linear;
  j["l2_factor"] = c.l2_factor;
  j["k"] = c.k;
  j["init_scale"] = c.init_scale;
  j["seed"] = c.seed;
  j["shuffle"] = c.shuffle;
  return j;
}

inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.l2_linear = j.at("l2_linear").get<double>();
  c.l2_factor = j.at("l2_factor").get<double>();
  c.k = j.at("k").get<int>();
  c.init_scale = j.at("init_scale").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.shuffle = j.at("shuffle").get<bool>();
  return c;
}

inline void write_model(const std::string& path, const ModelFile& mf) {
  OrderedJson j;
  j["version"] = kFileVersion;
  j["type"] = mf.is_fm() ? "fm" : "lr";
  j["dim"] = mf.dim();
  if (mf.is_fm()) j["k"] = std::get<FMModel>(mf.model).k;
  if (mf.c) j["c"] = *mf.c;
  j["cfg"] = train_config_to_json(mf.cfg);
  if (mf.platt) j["platt"] = {{"A", mf.platt->A}, {"B", mf.platt->B}};
  if (mf.is_fm()) {
    const auto& m = std::get<FMModel>(mf.model);
    j["w0"] = m.w0;
    j["w"] = m.w;
    OrderedJson rows = OrderedJson::array();
    for (std::uint32_t r = 0; r < m.dim(); ++r)
      rows.push_back(std::vector<double>(m.V.begin() + static_cast<std::ptrdiff_t>(r) * m.k,
                                         m.V.begin() + static_cast<std::ptrdiff_t>(r + 1) * m.k));
    j["V"] = std::move(rows);
  } else {
    const auto& m = std::get<LogisticModel>(mf.model);
    j["w0"] = m.bias;
    j["w"] = m.weights;
  }
  auto out = detail::open_out(path);
  out << j.dump() << '\n';
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline ModelFile read_model(const std::string& path) {
  auto in = detail::open_in(path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  try {
    if (j.at("version").get<int>() != kFileVersion) throw DataError("unsupported model file version");
    ModelFile mf;
    mf.cfg = train_config_from_json(j.at("cfg"));
    if (j.contains("c")) mf.c = j.at("c").get<double>();
    if (j.contains("platt")) mf.platt = PlattParams{j["platt"].at("A").get<double>(), j["platt"].at("B").get<double>()};
    const auto type = j.at("type").get<std::string>();
    const auto dim = j.at("dim").get<std::uint32_t>();
    if (type == "fm") {
      FMModel m(dim, j.at("k").get<int>());
      m.w0 = j.at("w0").get<double>();
      m.w = j.at("w").get<std::vector<double>>();
      const auto& rows = j.at("V");
      if (m.w.size() != dim || rows.size() != dim) throw DataError("fm parameter shapes do not match dim");
      for (std::uint32_t r = 0; r < dim; ++r) {
        const auto row = rows[r].get<std::vector<double>>();
        if (row.size() != static_cast<std::size_t>(m.k)) throw DataError("fm factor row has wrong length");
        std::copy(row.begin(), row.end(), m.V.begin() + static_cast<std::ptrdiff_t>(r) * m.k);
      }
      mf.model = std::move(m);
    } else if (type == "lr") {
      LogisticModel m;
      m.bias = j.at("w0").get<double>();
      m.weights = j.at("w").get<std::vector<double>>();
      if (m.weights.size() != dim) throw DataError("lr weight vector does not match dim");
      mf.model = std::move(m);
    } else {
      throw DataError("unknown model type '" + type + "'");
    }
    return mf;
  } catch (const Json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace tccp
