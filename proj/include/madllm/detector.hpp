#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "madllm/backbone.hpp"
#include "madllm/contrastive.hpp"
#include "madllm/parameter_store.hpp"
#include "madllm/random.hpp"
#include "madllm/series.hpp"
#include "madllm/tokenizer.hpp"

namespace madllm::detector {

// Adds head.weight [d_model x L] and head.bias [L], trainable.
void add_head_params(ParameterStore& store, std::size_t d_model, std::size_t patch_len, Rng& rng);

// [n x d_model] hidden states -> [n x L] patch reconstructions.
Tensor reconstruct(const Tensor& hidden, const ParameterStore& params);

struct AnomalyScores {
  std::size_t start_time = 0;
  std::vector<double> scores;  // one per timestamp of the window
};

// Per timestamp t: mean over features of (reconstructed - actual)^2.
// `reconstruction` is [P*M x L] in time-major token order.
AnomalyScores scores_from_reconstruction(const SeriesWindow& window, const Tensor& reconstruction,
                                         std::size_t patch_len);

struct DetectorModel {
  contrastive::EncoderConfig encoder_config;
  backbone::ModelConfig model_config;
  ParameterStore encoder;
  ParameterStore model;
};

AnomalyScores score_window(const SeriesWindow& window, const DetectorModel& model);

enum class ThresholdKind { Quantile, BestF1 };

struct ThresholdPolicy {
  ThresholdKind kind = ThresholdKind::Quantile;
  double q = 0.99;
  // Throws ParameterError unless q lies in (0, 1).
  void validate() const;
};

// Linear interpolation between order statistics: position q*(n-1) in the
// sorted scores. Throws ContractError on empty input.
double quantile(std::span<const double> scores, double q);

// Scans thresholds at the midpoints between consecutive distinct scores
// (plus one below the minimum) and returns the one with the highest F1
// under the rule score > threshold. Ties keep the highest threshold.
double best_f1_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Quantile policy uses `scores`; best-F1 needs `labels` aligned with them.
double resolve_threshold(std::span<const double> scores, const ThresholdPolicy& policy,
                         std::optional<std::span<const std::uint8_t>> labels = std::nullopt);

// prediction[t] = scores[t] > threshold. Throws ParameterError on a non-finite threshold.
Labels detect(std::span<const double> scores, double threshold);

}  // namespace madllm::detector
