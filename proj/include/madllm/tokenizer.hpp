#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "madllm/series.hpp"

namespace madllm {

// Per-feature z-score statistics fitted on the training split.
struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;  // zero spread; normalizes to 0

  static NormalizationStats fit(const TimeSeries& train);
  std::size_t features() const { return mean.size(); }
};

// A normalized slice of a series: T timestamps x M features, row-major.
struct SeriesWindow {
  std::size_t timestamps = 0;
  std::size_t features = 0;
  std::size_t start_time = 0;  // offset into the parent series
  std::vector<double> values;
  std::optional<Labels> labels;

  double at(std::size_t t, std::size_t j) const { return values[t * features + j]; }
};

// raw is T x M row-major. Throws WindowSizeError unless T is a positive
// multiple of patch_len, DataError on non-finite input.
SeriesWindow normalize_window(std::span<const double> raw, std::size_t timestamps,
                              const NormalizationStats& stats, std::size_t patch_len,
                              std::size_t start_time = 0, std::optional<Labels> labels = {});
// Inverse of normalize_window; constant features come back as their mean.
std::vector<double> denormalize(const SeriesWindow& window, const NormalizationStats& stats);

// One token: values [index*L, (index+1)*L) of feature `feature`. Both indices
// are zero-based, so Patch{j, i} is the patch written s_{i+1}^{j+1} in the
// usual one-based notation.
struct Patch {
  std::size_t feature = 0;
  std::size_t index = 0;
  std::vector<double> values;
};

enum class TokenOrder {
  FeatureMajor,  // all patches of feature 0, then feature 1, ...
  TimeMajor,     // all features' patch 0, then every feature's patch 1, ...
};

struct TokenSeries {
  TokenOrder order = TokenOrder::FeatureMajor;
  std::size_t features = 0;             // M
  std::size_t patches_per_feature = 0;  // P
  std::size_t patch_len = 0;            // L
  std::vector<Patch> patches;

  std::size_t size() const { return patches.size(); }
  std::size_t position_of(std::size_t feature, std::size_t index) const;
  const Patch& patch(std::size_t feature, std::size_t index) const {
    return patches[position_of(feature, index)];
  }
};

constexpr std::size_t feature_major_position(std::size_t feature, std::size_t index,
                                             std::size_t patches_per_feature) {
  return feature * patches_per_feature + index;
}

constexpr std::size_t time_major_position(std::size_t feature, std::size_t index,
                                          std::size_t features) {
  return index * features + feature;
}

TokenSeries patchify(const SeriesWindow& window, std::size_t patch_len);
// FeatureMajor -> TimeMajor. Patch values are moved bitwise, never modified.
TokenSeries skip_reorder(const TokenSeries& series);
// TimeMajor -> FeatureMajor.
TokenSeries inverse_reorder(const TokenSeries& series);
// Rebuilds the T x M row-major window values from patches in either order.
std::vector<double> reassemble(const TokenSeries& series);

struct WindowTiling {
  std::vector<SeriesWindow> windows;
  std::size_t dropped_tail = 0;  // trailing timestamps that did not fill a window
};

// Non-overlapping windows of window_len timestamps covering the series from t = 0.
WindowTiling tile_windows(const TimeSeries& series, const NormalizationStats& stats,
                          std::size_t window_len, std::size_t patch_len,
                          const Labels* labels = nullptr);

}  // namespace madllm
