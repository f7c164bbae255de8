#include <gtest/gtest.h>

#include <random>

#include "madllm/errors.hpp"
#include "madllm/metrics.hpp"
#include "oracles.hpp"

using namespace madllm;
using namespace madllm::metrics;

namespace {

Labels random_labels(std::size_t n, std::mt19937_64& rng, unsigned one_in = 3) {
  Labels l(n);
  for (auto& v : l) v = rng() % one_in == 0;
  return l;
}

}  // namespace

TEST(Auc, EqualsBruteForcePairCountingExactly) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> level(0, 30);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    std::vector<double> s(n);
    for (double& v : s) v = trial % 2 ? level(rng) / 3.0 : std::uniform_real_distribution<double>(0, 1)(rng);
    Labels l = random_labels(n, rng);
    l[0] = 1;
    l[1] = 0;
    EXPECT_EQ(roc_auc(s, l), madllm::testing::brute_force_auc(s, l)) << "trial " << trial;
  }
}

TEST(Auc, KnownValuesAndUndefinedCases) {
  EXPECT_EQ(roc_auc(std::vector<double>{0.1, 0.9}, Labels{0, 1}), 1.0);
  EXPECT_EQ(roc_auc(std::vector<double>{0.9, 0.1}, Labels{0, 1}), 0.0);
  EXPECT_EQ(roc_auc(std::vector<double>{0.5, 0.5}, Labels{0, 1}), 0.5);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, Labels{1, 1}), UndefinedMetricError);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, Labels{0, 0}), UndefinedMetricError);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1}, Labels{0, 1}), DimensionError);
}

TEST(F1, MatchesConfusionArithmetic) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 100;
    const Labels p = random_labels(n, rng), l = random_labels(n, rng);
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += p[i] && l[i];
      fp += p[i] && !l[i];
      fn += !p[i] && l[i];
      tn += !p[i] && !l[i];
    }
    const F1Result r = f1_score(p, l);
    EXPECT_EQ(r.counts, (Confusion{tp, fp, tn, fn}));
    const double prec = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    EXPECT_EQ(r.precision, prec);
    EXPECT_EQ(r.recall, rec);
    EXPECT_EQ(r.f1, prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0);
  }
}

TEST(F1, ZeroDenominators) {
  const F1Result none = f1_score(Labels{0, 0}, Labels{0, 0});
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_TRUE(none.degenerate);
  const F1Result missed = f1_score(Labels{0, 0}, Labels{1, 0});
  EXPECT_EQ(missed.precision, 0.0);
  EXPECT_EQ(missed.f1, 0.0);
  EXPECT_FALSE(missed.degenerate);
  EXPECT_THROW(f1_score(Labels{0}, Labels{0, 1}), DimensionError);
}

TEST(PointAdjust, ExpandsHitSegmentsOnly) {
  const Labels l{0, 1, 1, 1, 0, 1, 1, 0};
  const Labels p{1, 0, 1, 0, 0, 0, 0, 0};
  EXPECT_EQ(point_adjust(p, l), (Labels{1, 1, 1, 1, 0, 0, 0, 0}));
}

TEST(PointAdjust, NeverLowersF1OnFuzzedCases) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 80;
    Labels l(n);
    bool on = false;
    for (auto& v : l) {
      if (rng() % 6 == 0) on = !on;
      v = on;
    }
    const Labels p = random_labels(n, rng, 4);
    const Labels adj = point_adjust(p, l);
    for (std::size_t i = 0; i < n; ++i)
      if (p[i]) {
        EXPECT_EQ(adj[i], 1);
      }
    EXPECT_GE(f1_score(adj, l).f1, f1_score(p, l).f1);
  }
}

TEST(Report, KeyValueIsSortedAndRuntimeOptional) {
  MetricsReport r;
  r.f1 = 0.5;
  r.auc = 0.75;
  r.runtime_seconds = 1.25;
  r.info["seed"] = "3";
  const std::string with = r.to_key_value(true), without = r.to_key_value(false);
  EXPECT_NE(with.find("runtime_seconds=1.25\n"), std::string::npos);
  EXPECT_EQ(without.find("runtime_seconds"), std::string::npos);
  EXPECT_NE(with.find("info.seed=3\n"), std::string::npos);
  std::vector<std::string> keys;
  std::size_t start = 0;
  while (start < with.size()) {
    const auto eq = with.find('=', start), nl = with.find('\n', start);
    keys.push_back(with.substr(start, eq - start));
    start = nl + 1;
  }
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
  EXPECT_EQ(r.to_json(false).count("runtime_seconds"), 0u);
  EXPECT_EQ(r.to_json()["auc"].get<double>(), 0.75);
}

TEST(Evaluate, WithAndWithoutLabels) {
  const std::vector<double> s{0.1, 0.9, 0.2, 0.8};
  const Labels l{0, 1, 0, 0};
  const MetricsReport r = evaluate(s, 0.5, &l, false);
  EXPECT_EQ(r.counts, (Confusion{1, 1, 2, 0}));
  EXPECT_DOUBLE_EQ(r.f1, 2.0 / 3.0);
  ASSERT_TRUE(r.auc);
  EXPECT_DOUBLE_EQ(*r.auc, 1.0);
  const MetricsReport u = evaluate(s, 0.5, nullptr, false);
  EXPECT_FALSE(u.auc);
  EXPECT_FALSE(u.auc_note.empty());
  EXPECT_EQ(u.info.at("predicted_anomalies"), "2");
  const Labels single{0, 0, 0, 0};
  const MetricsReport one = evaluate(s, 0.5, &single, false);
  EXPECT_FALSE(one.auc);
  EXPECT_FALSE(one.auc_note.empty());
}
