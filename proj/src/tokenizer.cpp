#include "madllm/tokenizer.hpp"

#include <cmath>
#include <string>

#include "madllm/errors.hpp"

namespace madllm {

std::vector<double> TimeSeries::column(std::size_t j) const {
  std::vector<double> out(rows);
  for (std::size_t t = 0; t < rows; ++t) out[t] = at(t, j);
  return out;
}

TimeSeries TimeSeries::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows) throw DimensionError("TimeSeries::slice out of range");
  TimeSeries out;
  out.rows = end - begin;
  out.cols = cols;
  out.values.assign(values.begin() + static_cast<long>(begin * cols),
                    values.begin() + static_cast<long>(end * cols));
  return out;
}

NormalizationStats NormalizationStats::fit(const TimeSeries& train) {
  if (train.rows == 0 || train.cols == 0) throw InsufficientDataError("cannot fit statistics on an empty series");
  NormalizationStats s;
  s.mean.assign(train.cols, 0.0);
  s.stddev.assign(train.cols, 0.0);
  s.constant.assign(train.cols, false);
  const double n = static_cast<double>(train.rows);
  for (std::size_t t = 0; t < train.rows; ++t)
    for (std::size_t j = 0; j < train.cols; ++j) s.mean[j] += train.at(t, j);
  for (double& m : s.mean) m /= n;
  for (std::size_t t = 0; t < train.rows; ++t)
    for (std::size_t j = 0; j < train.cols; ++j) {
      const double d = train.at(t, j) - s.mean[j];
      s.stddev[j] += d * d;
    }
  for (std::size_t j = 0; j < train.cols; ++j) {
    s.stddev[j] = std::sqrt(s.stddev[j] / n);
    // relative tolerance: a column of identical values may still show rounding spread
    s.constant[j] = s.stddev[j] <= 1e-12 * (1.0 + std::abs(s.mean[j]));
  }
  return s;
}

SeriesWindow normalize_window(std::span<const double> raw, std::size_t timestamps,
                              const NormalizationStats& stats, std::size_t patch_len,
                              std::size_t start_time, std::optional<Labels> labels) {
  const std::size_t m = stats.features();
  if (patch_len == 0) throw WindowSizeError("patch length must be positive");
  if (timestamps == 0 || timestamps % patch_len != 0) {
    throw WindowSizeError("window of " + std::to_string(timestamps) +
                          " timestamps is not a positive multiple of patch length " +
                          std::to_string(patch_len));
  }
  if (raw.size() != timestamps * m) {
    throw DimensionError("window holds " + std::to_string(raw.size()) + " values, expected " +
                         std::to_string(timestamps) + " x " + std::to_string(m));
  }
  if (labels && labels->size() != timestamps) throw DimensionError("window labels misaligned");
  SeriesWindow w;
  w.timestamps = timestamps;
  w.features = m;
  w.start_time = start_time;
  w.values.resize(raw.size());
  for (std::size_t t = 0; t < timestamps; ++t)
    for (std::size_t j = 0; j < m; ++j) {
      const double x = raw[t * m + j];
      if (!std::isfinite(x)) {
        throw DataError("non-finite raw value at timestamp " + std::to_string(start_time + t) +
                        ", feature " + std::to_string(j));
      }
      w.values[t * m + j] = stats.constant[j] ? 0.0 : (x - stats.mean[j]) / stats.stddev[j];
    }
  w.labels = std::move(labels);
  return w;
}

std::vector<double> denormalize(const SeriesWindow& window, const NormalizationStats& stats) {
  std::vector<double> raw(window.values.size());
  for (std::size_t t = 0; t < window.timestamps; ++t)
    for (std::size_t j = 0; j < window.features; ++j) {
      const double z = window.at(t, j);
      raw[t * window.features + j] =
          stats.constant[j] ? stats.mean[j] : z * stats.stddev[j] + stats.mean[j];
    }
  return raw;
}

std::size_t TokenSeries::position_of(std::size_t feature, std::size_t index) const {
  if (feature >= features || index >= patches_per_feature) {
    throw DimensionError("patch (" + std::to_string(feature) + ", " + std::to_string(index) +
                         ") outside " + std::to_string(features) + " features x " +
                         std::to_string(patches_per_feature) + " patches");
  }
  return order == TokenOrder::FeatureMajor
             ? feature_major_position(feature, index, patches_per_feature)
             : time_major_position(feature, index, features);
}

TokenSeries patchify(const SeriesWindow& window, std::size_t patch_len) {
  if (patch_len == 0 || window.timestamps % patch_len != 0) {
    throw WindowSizeError("window of " + std::to_string(window.timestamps) +
                          " timestamps cannot be split into patches of " + std::to_string(patch_len));
  }
  TokenSeries s;
  s.order = TokenOrder::FeatureMajor;
  s.features = window.features;
  s.patches_per_feature = window.timestamps / patch_len;
  s.patch_len = patch_len;
  s.patches.reserve(s.features * s.patches_per_feature);
  for (std::size_t j = 0; j < s.features; ++j)
    for (std::size_t i = 0; i < s.patches_per_feature; ++i) {
      Patch p{j, i, std::vector<double>(patch_len)};
      for (std::size_t k = 0; k < patch_len; ++k) p.values[k] = window.at(i * patch_len + k, j);
      s.patches.push_back(std::move(p));
    }
  return s;
}

namespace {

TokenSeries permute(const TokenSeries& in, TokenOrder target) {
  TokenSeries out;
  out.order = target;
  out.features = in.features;
  out.patches_per_feature = in.patches_per_feature;
  out.patch_len = in.patch_len;
  out.patches.resize(in.patches.size());
  for (const Patch& p : in.patches) out.patches[out.position_of(p.feature, p.index)] = p;
  return out;
}

}  // namespace

TokenSeries skip_reorder(const TokenSeries& series) {
  if (series.order != TokenOrder::FeatureMajor) {
    throw ContractError("skip_reorder expects a feature-major token series");
  }
  return permute(series, TokenOrder::TimeMajor);
}

TokenSeries inverse_reorder(const TokenSeries& series) {
  if (series.order != TokenOrder::TimeMajor) {
    throw ContractError("inverse_reorder expects a time-major token series");
  }
  return permute(series, TokenOrder::FeatureMajor);
}

std::vector<double> reassemble(const TokenSeries& series) {
  const std::size_t m = series.features;
  std::vector<double> values(series.patches_per_feature * series.patch_len * m);
  for (const Patch& p : series.patches)
    for (std::size_t k = 0; k < series.patch_len; ++k)
      values[(p.index * series.patch_len + k) * m + p.feature] = p.values[k];
  return values;
}

WindowTiling tile_windows(const TimeSeries& series, const NormalizationStats& stats,
                          std::size_t window_len, std::size_t patch_len, const Labels* labels) {
  if (window_len == 0) throw WindowSizeError("window length must be positive");
  if (series.cols != stats.features()) {
    throw DimensionError("series has " + std::to_string(series.cols) + " features, statistics " +
                         std::to_string(stats.features()));
  }
  if (labels && labels->size() != series.rows) throw DimensionError("labels misaligned with series");
  WindowTiling tiling;
  const std::size_t count = series.rows / window_len;
  tiling.dropped_tail = series.rows - count * window_len;
  tiling.windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t begin = w * window_len;
    std::span<const double> raw(series.values.data() + begin * series.cols, window_len * series.cols);
    std::optional<Labels> lab;
    if (labels) lab = Labels(labels->begin() + static_cast<long>(begin),
                             labels->begin() + static_cast<long>(begin + window_len));
    tiling.windows.push_back(normalize_window(raw, window_len, stats, patch_len, begin, std::move(lab)));
  }
  return tiling;
}

}  // namespace madllm
