#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "madllm/series.hpp"

namespace madllm::metrics {

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  bool operator==(const Confusion&) const = default;
};

// Throws DimensionError on length mismatch.
Confusion confusion(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels);

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Confusion counts;
  // No positive labels and no positive predictions: every ratio is 0/0.
  bool degenerate = false;
};

// Zero denominators give 0.
F1Result f1_score(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels);

// Mann-Whitney ROC AUC with ties worth one half. Throws UndefinedMetricError
// unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Any hit inside a contiguous labeled segment marks the whole segment detected.
Labels point_adjust(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels);

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;
  std::string auc_note;  // why auc is absent
  bool f1_degenerate = false;
  double threshold = 0.0;
  Confusion counts;
  bool point_adjusted = false;
  double runtime_seconds = 0.0;
  std::map<std::string, std::string> info;  // dataset, policy, seed, ...

  // One "key=value" line per field, sorted keys. Runtime is left out when
  // include_runtime is false so two runs can be compared byte for byte.
  std::string to_key_value(bool include_runtime = true) const;
  nlohmann::json to_json(bool include_runtime = true) const;
};

// Builds a report from scores, predictions and (optional) labels. Without
// labels only the threshold and prediction counts are filled.
MetricsReport evaluate(std::span<const double> scores, double threshold, const Labels* labels,
                       bool point_adjusted);

}  // namespace madllm::metrics
