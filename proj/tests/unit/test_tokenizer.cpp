#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "madllm/errors.hpp"
#include "madllm/tokenizer.hpp"

using namespace madllm;

namespace {

// Value encodes (t, j) so every patch is distinguishable.
SeriesWindow coded_window(std::size_t timestamps, std::size_t features) {
  SeriesWindow w;
  w.timestamps = timestamps;
  w.features = features;
  for (std::size_t t = 0; t < timestamps; ++t)
    for (std::size_t j = 0; j < features; ++j) w.values.push_back(1000.0 * static_cast<double>(j) + t);
  return w;
}

TimeSeries series_of(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  TimeSeries s{rows, cols, {}};
  std::normal_distribution<double> n(3.0, 2.0);
  for (std::size_t i = 0; i < rows * cols; ++i) s.values.push_back(n(rng));
  return s;
}

}  // namespace

TEST(Tokenizer, PatchifyIsFeatureMajor) {
  const auto w = coded_window(6, 2);
  const TokenSeries s = patchify(w, 3);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s.order, TokenOrder::FeatureMajor);
  EXPECT_EQ(s.patches[0].feature, 0u);
  EXPECT_EQ(s.patches[1].index, 1u);
  EXPECT_EQ(s.patches[2].feature, 1u);
  EXPECT_EQ(s.patches[3].values, (std::vector<double>{1003, 1004, 1005}));
}

TEST(Tokenizer, PatchifyRejectsRaggedWindow) {
  EXPECT_THROW(patchify(coded_window(7, 2), 3), WindowSizeError);
}

TEST(Tokenizer, SkipReorderMatchesClosedFormForAllSmallShapes) {
  for (std::size_t p = 1; p <= 8; ++p)
    for (std::size_t m = 1; m <= 8; ++m) {
      const TokenSeries fm = patchify(coded_window(p * 2, m), 2);
      const TokenSeries tm = skip_reorder(fm);
      EXPECT_EQ(tm.order, TokenOrder::TimeMajor);
      for (std::size_t j = 1; j <= m; ++j)
        for (std::size_t i = 1; i <= p; ++i) {
          // one-based: feature-major (j-1)P+i goes to time-major (i-1)M+j
          const auto& src = fm.patches[(j - 1) * p + i - 1];
          const auto& dst = tm.patches[(i - 1) * m + j - 1];
          EXPECT_EQ(src.feature, dst.feature);
          EXPECT_EQ(src.index, dst.index);
          EXPECT_EQ(src.values, dst.values);
        }
      const TokenSeries back = inverse_reorder(tm);
      ASSERT_EQ(back.size(), fm.size());
      for (std::size_t k = 0; k < fm.size(); ++k) {
        EXPECT_EQ(back.patches[k].feature, fm.patches[k].feature);
        EXPECT_EQ(back.patches[k].index, fm.patches[k].index);
        EXPECT_EQ(back.patches[k].values, fm.patches[k].values);
      }
    }
}

TEST(Tokenizer, ReorderRejectsWrongOrder) {
  const TokenSeries fm = patchify(coded_window(4, 2), 2);
  EXPECT_THROW(inverse_reorder(fm), ContractError);
  EXPECT_THROW(skip_reorder(skip_reorder(fm)), ContractError);
}

TEST(Tokenizer, ReassembleInvertsPatchifyInBothOrders) {
  const auto w = coded_window(12, 3);
  const TokenSeries fm = patchify(w, 4);
  EXPECT_EQ(reassemble(fm), w.values);
  EXPECT_EQ(reassemble(skip_reorder(fm)), w.values);
}

TEST(Tokenizer, PositionHelpers) {
  EXPECT_EQ(feature_major_position(2, 3, 8), 19u);
  EXPECT_EQ(time_major_position(2, 3, 6), 20u);
  const TokenSeries fm = patchify(coded_window(6, 2), 2);
  EXPECT_EQ(fm.position_of(1, 2), 5u);
  EXPECT_EQ(skip_reorder(fm).position_of(1, 2), 5u);
  EXPECT_EQ(skip_reorder(fm).position_of(0, 2), 4u);
}

TEST(Normalization, FitAndApply) {
  std::mt19937_64 rng(1);
  TimeSeries s = series_of(64, 3, rng);
  for (std::size_t t = 0; t < 64; ++t) s.at(t, 2) = 4.0;
  const auto stats = NormalizationStats::fit(s);
  EXPECT_TRUE(stats.constant[2]);
  EXPECT_FALSE(stats.constant[0]);
  const SeriesWindow w = normalize_window(s.values, 64, stats, 16);
  for (std::size_t j = 0; j < 2; ++j) {
    double m = 0, v = 0;
    for (std::size_t t = 0; t < 64; ++t) m += w.at(t, j);
    m /= 64;
    for (std::size_t t = 0; t < 64; ++t) v += (w.at(t, j) - m) * (w.at(t, j) - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 64, 1.0, 1e-12);
  }
  for (std::size_t t = 0; t < 64; ++t) EXPECT_EQ(w.at(t, 2), 0.0);
  const auto back = denormalize(w, stats);
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(back[i], s.values[i], 1e-12);
}

TEST(Normalization, RejectsNonFiniteAndRaggedInput) {
  std::mt19937_64 rng(2);
  TimeSeries s = series_of(32, 2, rng);
  const auto stats = NormalizationStats::fit(s);
  EXPECT_THROW(normalize_window(std::span<const double>(s.values).first(30 * 2), 30, stats, 16), WindowSizeError);
  s.values[5] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(normalize_window(s.values, 32, stats, 16), DataError);
}

TEST(Tiling, CoversPrefixAndReportsDroppedTail) {
  std::mt19937_64 rng(3);
  const TimeSeries s = series_of(100, 2, rng);
  Labels labels(100, 0);
  labels[40] = 1;
  const auto stats = NormalizationStats::fit(s);
  const auto tiling = tile_windows(s, stats, 32, 16, &labels);
  ASSERT_EQ(tiling.windows.size(), 3u);
  EXPECT_EQ(tiling.dropped_tail, 4u);
  EXPECT_EQ(tiling.windows[1].start_time, 32u);
  ASSERT_TRUE(tiling.windows[1].labels);
  EXPECT_EQ((*tiling.windows[1].labels)[8], 1);
  EXPECT_NEAR(tiling.windows[2].at(0, 1), (s.at(64, 1) - stats.mean[1]) / stats.stddev[1], 1e-12);
}
