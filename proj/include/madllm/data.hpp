#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "madllm/series.hpp"

namespace madllm::data {

// Headerless, comma-separated, one row per timestamp. Blank trailing lines
// and surrounding spaces or a trailing '\r' are tolerated; anything else
// that is not a finite number raises DataError naming the line and column.
TimeSeries read_csv(const std::filesystem::path& path);
TimeSeries parse_csv(const std::string& text, const std::string& origin = "<memory>");
// Single column of 0/1.
Labels read_labels(const std::filesystem::path& path);
Labels parse_labels(const std::string& text, const std::string& origin = "<memory>");

// Values are written with 17 significant digits so reading them back is exact.
void write_csv(const std::filesystem::path& path, const TimeSeries& series);
void write_labels(const std::filesystem::path& path, const Labels& labels);

struct SubsetFiles {
  std::string name;
  std::filesystem::path train, test, labels;
};

struct DatasetManifest {
  std::string name;
  std::size_t features = 0;
  std::optional<std::size_t> train_rows;  // totals over all subsets
  std::optional<std::size_t> test_rows;
  std::optional<double> anomaly_ratio_percent;
  // Either one set of files or a list of subsets.
  std::vector<SubsetFiles> subsets;

  // Relative paths resolve against base_dir. Throws ConfigError on a
  // malformed manifest.
  static DatasetManifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static DatasetManifest load(const std::filesystem::path& path);
};

struct DatasetPart {
  std::string name;
  TimeSeries train;
  TimeSeries test;
  std::optional<Labels> labels;
};

struct Dataset {
  std::string name;
  std::optional<double> anomaly_ratio_percent;
  std::vector<DatasetPart> parts;

  std::size_t train_rows() const;
  std::size_t test_rows() const;
};

// Reads every file and checks it against the manifest. Any disagreement
// (column count, row totals, label length or values, unparsable cell) raises
// ManifestViolation listing expected and found values.
Dataset load_dataset(const DatasetManifest& manifest);

// Joins all parts into one part named after the dataset.
DatasetPart concatenate(const Dataset& dataset);

// First ceil(fraction * rows) rows. Throws ParameterError unless fraction is in (0, 1].
std::size_t subsample_length(std::size_t rows, double fraction);
TimeSeries subsample_training(const TimeSeries& train, double fraction);

enum class EventKind { Confounder, Anomaly };

struct SyntheticEvent {
  EventKind kind;
  std::size_t begin;
  std::size_t end;  // exclusive
};

struct SyntheticSpec {
  std::size_t features = 6;
  std::size_t length = 20000;
  std::vector<double> periods;  // one per feature; empty picks 12 * 1.45^j
  double confounder_rate = 0.02;
  double anomaly_rate = 0.01;
  double noise_std = 0.1;
  double spike_amplitude = 3.0;
  std::size_t min_event = 8;
  std::size_t max_event = 24;
  std::vector<std::size_t> confounder_group;  // empty picks the single feature 1
  std::uint64_t seed = 0;

  std::vector<double> resolved_periods() const;
  std::vector<std::size_t> resolved_group() const;
  // Throws ParameterError describing the first problem found.
  void validate() const;

  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

struct SyntheticSeries {
  TimeSeries series;
  Labels labels;
  std::vector<SyntheticEvent> events;
};

// Per-feature sinusoids plus Gaussian noise. Events are rectangular spikes
// of spike_amplitude: confounders raise the confounder group only and stay
// labeled normal, anomalies raise every feature and are labeled 1. The series
// is cut into equal slots, one event per slot at a random offset, with event
// kinds interleaved in proportion to the two rates.
SyntheticSeries generate_synthetic(const SyntheticSpec& spec);

// Train = first half, test = second half with labels.
Dataset synthetic_dataset(const SyntheticSpec& spec);

}  // namespace madllm::data
