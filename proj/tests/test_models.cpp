#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace tccp;

namespace {

FeatureVector dense(std::vector<double> v) {
  std::vector<FeatureVector::Entry> e;
  for (std::uint32_t j = 0; j < v.size(); ++j)
    if (v[j] != 0.0) e.emplace_back(j, v[j]);
  return FeatureVector(static_cast<std::uint32_t>(v.size()), std::move(e));
}

// Four XOR patterns over two binary features, interleaved so no two
// consecutive rows coincide.
std::vector<WeightedInstance> xor_rows(int reps) {
  std::vector<WeightedInstance> rows;
  for (int r = 0; r < reps; ++r) {
    rows.push_back({dense({0, 0}), 0, 1.0});
    rows.push_back({dense({1, 0}), 1, 1.0});
    rows.push_back({dense({0, 1}), 1, 1.0});
    rows.push_back({dense({1, 1}), 0, 1.0});
  }
  return rows;
}

template <typename Predict>
double training_auc(const std::vector<WeightedInstance>& rows, Predict predict) {
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& r : rows) {
    s.push_back(predict(r.features));
    y.push_back(r.label);
  }
  return auc(s, y);
}

}  // namespace

TEST(LrPredict, Examples) {
  LogisticModel zero{0.0, std::vector<double>(4, 0.0)};
  EXPECT_EQ(lr_predict(zero, dense({1, 2, 3, 4})), 0.5);
  LogisticModel sat{30.0, std::vector<double>(4, 0.0)};
  EXPECT_GE(lr_predict(sat, dense({0, 1, 0, 0})), 1.0 - 1e-9);
  EXPECT_THROW(lr_predict(zero, dense({1, 2})), DataError);
}

TEST(LrPredict, MatchesDenseOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto m = oracle::random_lr(rng, 30);
    const auto x = testutil::random_vector(rng, 30, 6);
    EXPECT_NEAR(lr_predict(m, x), oracle::lr_naive(m, x), 1e-14);
  }
}

TEST(FmPredict, Examples) {
  FMModel m(3, 2);
  EXPECT_EQ(fm_predict(m, dense({1, 1, 1})), 0.0);
  m.w0 = 0.5;
  EXPECT_EQ(fm_predict(m, dense({1, 1, 1})), 0.5);

  FMModel p(2, 1);
  p.w0 = 0.5;
  p.w = {1, 2};
  p.v(0, 0) = 0.5;
  p.v(1, 0) = 2;
  EXPECT_DOUBLE_EQ(fm_predict(p, dense({1, 1})), 4.5);
  EXPECT_DOUBLE_EQ(oracle::fm_naive(p, dense({1, 1})), 4.5);
  EXPECT_THROW(fm_predict(p, dense({1, 1, 1})), DataError);
}

TEST(FmPredict, FactoredEqualsNaivePairs) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto dim = 1 + static_cast<std::uint32_t>(rng() % 50);
    const int k = 1 + static_cast<int>(rng() % 8);
    const auto m = oracle::random_fm(rng, dim, k);
    const auto x = testutil::random_vector(rng, dim, static_cast<int>(rng() % (dim + 1)));
    EXPECT_LE(std::abs(fm_predict(m, x) - oracle::fm_naive(m, x)), 1e-9);
  }
}

TEST(FmPredict, ZeroFactorsIsLinear) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    auto fm = oracle::random_fm(rng, 20, 4);
    std::fill(fm.V.begin(), fm.V.end(), 0.0);
    const LogisticModel lr{fm.w0, fm.w};
    const auto x = testutil::random_vector(rng, 20, 5);
    EXPECT_EQ(fm_predict(fm, x), lr_margin(lr, x));
  }
}

TEST(Gradients, LrMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  TrainConfig cfg;
  cfg.l2_linear = 0.3;
  for (int t = 0; t < 50; ++t) {
    const auto rows = oracle::random_rows(rng, 8, 12);
    const auto m = oracle::random_lr(rng, 8);
    const std::function<double(const LogisticModel&)> f = [&](const LogisticModel& p) {
      return lr_objective(p, rows, cfg);
    };
    EXPECT_LT(oracle::gradient_error(m, lr_gradient(m, rows, cfg), f), 1e-4) << "point " << t;
  }
}

TEST(Gradients, FmMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  TrainConfig cfg;
  cfg.l2_linear = 0.2;
  cfg.l2_factor = 0.4;
  for (int t = 0; t < 50; ++t) {
    const auto rows = oracle::random_rows(rng, 8, 12);
    const auto m = oracle::random_fm(rng, 8, 3);
    const std::function<double(const FMModel&)> f = [&](const FMModel& p) { return fm_objective(p, rows, cfg); };
    EXPECT_LT(oracle::gradient_error(m, fm_gradient(m, rows, cfg), f), 1e-4) << "point " << t;
  }
}

TEST(Objective, WeightScalingScalesDataTerm) {
  std::mt19937_64 rng(6);
  auto rows = oracle::random_rows(rng, 10, 30);
  const auto m = oracle::random_fm(rng, 10, 2);
  TrainConfig cfg;
  cfg.l2_linear = cfg.l2_factor = 0.0;
  const double base = fm_objective(m, rows, cfg);
  for (auto& r : rows) r.weight *= 3.0;
  EXPECT_NEAR(fm_objective(m, rows, cfg), 3.0 * base, 1e-12 * base);
}

TEST(Training, DeterministicForFixedSeed) {
  std::mt19937_64 rng(7);
  const auto rows = oracle::random_rows(rng, 12, 200);
  TrainConfig cfg;
  EXPECT_EQ(lr_train(rows, 12, cfg), lr_train(rows, 12, cfg));
  EXPECT_EQ(fm_train(rows, 12, cfg), fm_train(rows, 12, cfg));
  cfg.seed = 8;
  EXPECT_NE(fm_train(rows, 12, cfg), fm_train(rows, 12, TrainConfig{}));
}

TEST(Training, SplitDuplicateEqualsSingleRow) {
  std::mt19937_64 rng(9);
  auto rows = oracle::random_rows(rng, 10, 50);
  for (auto& r : rows) r.weight = 1.0;
  std::vector<WeightedInstance> split;
  for (const auto& r : rows) {
    split.push_back({r.features, r.label, 0.5});
    split.push_back({r.features, r.label, 0.5});
  }
  TrainConfig cfg;
  EXPECT_EQ(lr_train(rows, 10, cfg), lr_train(split, 10, cfg));
  EXPECT_EQ(fm_train(rows, 10, cfg), fm_train(split, 10, cfg));
}

TEST(Training, ZeroWeightRowsHaveNoEffect) {
  std::mt19937_64 rng(10);
  const auto rows = oracle::random_rows(rng, 10, 80);
  auto padded = rows;
  for (const auto& r : oracle::random_rows(rng, 10, 40)) padded.push_back({r.features, r.label, 0.0});
  std::shuffle(padded.begin(), padded.end(), rng);
  // the nonzero rows must stay in their original order
  std::vector<WeightedInstance> mixed;
  std::size_t next = 0;
  for (const auto& r : padded) {
    if (r.weight == 0.0)
      mixed.push_back(r);
    else
      mixed.push_back(rows[next++]);
  }
  TrainConfig cfg;
  EXPECT_EQ(lr_train(rows, 10, cfg), lr_train(mixed, 10, cfg));
  EXPECT_EQ(fm_train(rows, 10, cfg), fm_train(mixed, 10, cfg));
}

TEST(Training, ZeroInitFmReproducesLr) {
  std::mt19937_64 rng(11);
  const auto rows = oracle::random_rows(rng, 15, 300);
  TrainConfig cfg;
  cfg.init_scale = 0.0;
  const auto fm = fm_train(rows, 15, cfg);
  const auto lr = lr_train(rows, 15, cfg);
  for (double v : fm.V) EXPECT_EQ(v, 0.0);
  for (const auto& r : rows) EXPECT_EQ(fm_probability(fm, r.features), lr_predict(lr, r.features));
}

TEST(Training, FmLearnsXorButLrCannot) {
  const auto rows = xor_rows(100);
  TrainConfig cfg;
  cfg.init_scale = 0.1;
  cfg.learning_rate = 0.05;
  cfg.epochs = 100;
  cfg.k = 4;
  cfg.l2_linear = cfg.l2_factor = 0.0;
  const auto fm = fm_train(rows, 2, cfg);
  const auto lr = lr_train(rows, 2, cfg);
  EXPECT_GT(training_auc(rows, [&](const FeatureVector& x) { return fm_predict(fm, x); }), 0.95);
  EXPECT_NEAR(training_auc(rows, [&](const FeatureVector& x) { return lr_margin(lr, x); }), 0.5, 0.1);
}

TEST(Training, SeparableSetReachesPerfectAuc) {
  std::vector<WeightedInstance> rows;
  for (int i = 0; i < 20; ++i) {
    const double t = 0.05 * (i + 1);
    rows.push_back({dense({t, 1.0 - t}), t > 0.5 ? 1 : 0, 1.0});
  }
  TrainConfig cfg;
  cfg.epochs = 50;
  const auto lr = lr_train(rows, 2, cfg);
  EXPECT_EQ(training_auc(rows, [&](const FeatureVector& x) { return lr_predict(lr, x); }), 1.0);
}

TEST(Training, OneClassLimit) {
  std::mt19937_64 rng(12);
  auto rows = oracle::random_rows(rng, 6, 50);
  for (auto& r : rows) {
    r.label = 1;
    r.weight = 1.0;
  }
  TrainConfig cfg;
  cfg.l2_linear = 0.0;
  cfg.epochs = 100;
  const auto lr = lr_train(rows, 6, cfg);
  for (const auto& r : rows) EXPECT_GE(lr_predict(lr, r.features), 0.9);
}

TEST(Training, LastEpochLossNotAboveFirst) {
  std::mt19937_64 rng(13);
  const auto rows = oracle::random_rows(rng, 20, 400);
  TrainStats a, b;
  lr_train(rows, 20, TrainConfig{}, &a);
  fm_train(rows, 20, TrainConfig{}, &b);
  ASSERT_EQ(a.epoch_loss.size(), 20u);
  EXPECT_LE(a.epoch_loss.back(), a.epoch_loss.front());
  EXPECT_LE(b.epoch_loss.back(), b.epoch_loss.front());
}

TEST(Training, ExplodingStepRaisesDivergence) {
  std::vector<WeightedInstance> rows{{dense({1e150, 0}), 1, 1.0}, {dense({0, 1e150}), 0, 1.0}};
  TrainConfig cfg;
  cfg.learning_rate = 1e200;
  try {
    lr_train(rows, 2, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.epoch(), 1);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
  EXPECT_THROW(fm_train(rows, 2, cfg), DivergenceError);
}

TEST(Training, RejectsBadInput) {
  EXPECT_THROW(lr_train(std::vector<WeightedInstance>{}, 3, TrainConfig{}), DataError);
  std::vector<WeightedInstance> rows{{dense({1, 0, 0}), 1, 1.0}};
  EXPECT_THROW(lr_train(rows, 4, TrainConfig{}), DataError);
  TrainConfig bad;
  bad.k = 0;
  EXPECT_THROW(fm_train(rows, 3, bad), ConfigError);
}

TEST(Posterior, Examples) {
  const auto c6 = make_label_frequency(0.6, CMethod::e1, 1);
  const auto c5 = make_label_frequency(0.5, CMethod::e1, 1);
  EXPECT_NEAR(predict_posterior(0.3, c6, PosteriorMode::divide_by_c), 0.5, 1e-15);
  EXPECT_EQ(predict_posterior(0.9, c5, PosteriorMode::divide_by_c), 1.0);
  EXPECT_EQ(predict_posterior(0.9, c5, PosteriorMode::raw), 0.9);
}

// Scores are log-odds of the true probability, so perfect calibration is
// A = -1, B = 0 and the fitted map should return the probability back.
TEST(Platt, RecoversCalibratedScores) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> prob(0.05, 0.95), u(0.0, 1.0);
  std::vector<double> p, s;
  std::vector<int> y;
  for (int i = 0; i < 1000; ++i) {
    p.push_back(prob(rng));
    s.push_back(std::log(p.back() / (1 - p.back())));
    y.push_back(u(rng) < p.back() ? 1 : 0);
  }
  const auto pp = platt_fit(s, y);
  EXPECT_LE(pp.A, 0.0);
  double err = 0;
  for (std::size_t i = 0; i < p.size(); ++i) err += std::abs(platt_apply(pp, s[i]) - p[i]);
  EXPECT_LE(err / p.size(), 0.02);
}

TEST(Platt, MonotoneAndDegenerate) {
  const std::vector<double> s{-2, -1, 0, 1, 2, 3};
  const std::vector<int> y{0, 0, 1, 0, 1, 1};
  const auto pp = platt_fit(s, y);
  for (double a = -5; a < 5; a += 0.25) EXPECT_LE(platt_apply(pp, a), platt_apply(pp, a + 0.25));
  const std::vector<int> ones(6, 1);
  EXPECT_THROW(platt_fit(s, ones), DataError);
}

TEST(ModelFile, RoundTripIsExact) {
  testutil::TempDir dir;
  std::mt19937_64 rng(15);
  ModelFile fm;
  fm.model = oracle::random_fm(rng, 9, 3);
  fm.cfg.seed = 99;
  fm.c = 0.123456789012345;
  fm.platt = PlattParams{-1.25, 0.1};
  write_model(dir.file("fm.json"), fm);
  const auto back = read_model(dir.file("fm.json"));
  EXPECT_TRUE(back.is_fm());
  EXPECT_EQ(std::get<FMModel>(back.model), std::get<FMModel>(fm.model));
  EXPECT_EQ(back.cfg, fm.cfg);
  EXPECT_EQ(back.c, fm.c);
  EXPECT_EQ(back.platt, fm.platt);

  ModelFile lr;
  lr.model = oracle::random_lr(rng, 7);
  write_model(dir.file("lr.json"), lr);
  const auto lb = read_model(dir.file("lr.json"));
  EXPECT_FALSE(lb.is_fm());
  EXPECT_EQ(std::get<LogisticModel>(lb.model), std::get<LogisticModel>(lr.model));
  EXPECT_FALSE(lb.c.has_value());
}

TEST(ModelFile, BadFilesAreDataErrors) {
  testutil::TempDir dir;
  testutil::write_text(dir.file("a.json"), "{\"version\":1,\"type\":\"svm\"}");
  EXPECT_THROW(read_model(dir.file("a.json")), DataError);
  testutil::write_text(dir.file("b.json"), "not json");
  EXPECT_THROW(read_model(dir.file("b.json")), DataError);
}
