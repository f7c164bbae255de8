#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "madllm/backbone.hpp"
#include "madllm/contrastive.hpp"
#include "madllm/data.hpp"
#include "madllm/detector.hpp"
#include "madllm/metrics.hpp"
#include "madllm/tokenizer.hpp"

namespace madllm::pipeline {

enum class Aggregation { Concat, Mean };

struct RunConfig {
  std::size_t patch_len = 16;
  std::size_t patches = 8;  // per feature per window
  contrastive::EncoderConfig encoder;
  backbone::BackboneConfig backbone;
  embedding::EmbeddingOptions embedding;

  std::size_t negatives = 4;
  std::size_t encoder_epochs = 5;
  double encoder_lr = 1e-3;
  std::size_t pretrain_steps = 1500;
  std::uint64_t pretrain_seed = 0;  // the stub stands in for fixed pretrained weights, shared across run seeds
  std::size_t finetune_epochs = 5;
  double finetune_lr = 1e-3;

  detector::ThresholdKind threshold = detector::ThresholdKind::Quantile;
  std::optional<double> quantile;  // unset: 1 - anomaly ratio of the dataset, else 0.99
  bool point_adjust = false;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  Aggregation aggregation = Aggregation::Concat;

  std::string dataset = "synthetic";  // manifest path or "synthetic"
  data::SyntheticSpec synthetic;
  std::string out;

  std::size_t window_len() const { return patch_len * patches; }
  // Throws ConfigError describing the first invalid field.
  void validate() const;
  nlohmann::json to_json() const;
  // Keys absent from j keep the values already in base. Unknown keys throw ConfigError.
  static RunConfig from_json(const nlohmann::json& j, RunConfig base);
  static RunConfig from_json(const nlohmann::json& j);
};

// Dataset named by the config. Synthetic data are generated with config.seed.
data::Dataset load(const RunConfig& cfg);

struct Prepared {
  NormalizationStats stats;
  std::vector<SeriesWindow> windows;
  std::vector<TokenSeries> tokens;
  std::size_t dropped_tail = 0;
};

// Fits statistics on the (subsampled) training split and tiles it.
Prepared prepare_training(const TimeSeries& train, const RunConfig& cfg);
Prepared prepare_windows(const TimeSeries& series, const NormalizationStats& stats, const RunConfig& cfg,
                         const Labels* labels = nullptr);

backbone::ModelConfig model_config(const RunConfig& cfg, std::size_t features);

struct TrainedPipeline {
  NormalizationStats stats;
  detector::DetectorModel model;
  std::vector<double> encoder_losses;
  bool replacement_sampling = false;
  std::vector<double> finetune_losses;
  double pretrain_initial_loss = 0.0;
  double pretrain_final_loss = 0.0;
  ParameterStore initial_model;  // assembled model before fine-tuning
  std::vector<double> train_scores;
  std::size_t train_rows = 0;
  double encoder_seconds = 0.0;
  double finetune_seconds = 0.0;
};

// Pretraining stub for this configuration, computed once per process and
// returned as a deep copy.
backbone::PretrainResult pretrained_backbone(const RunConfig& cfg, std::size_t features);

contrastive::EncoderTrainingResult train_encoder_stage(const Prepared& prepared, const RunConfig& cfg);

struct TrainOptions {
  std::optional<ParameterStore> encoder;      // used as is, encoder training skipped
  std::optional<ParameterStore> start_model;  // replaces the pretraining stub
  backbone::EpochCallback on_epoch;
};

// Encoder, pretraining stub, fine-tuning, then training-split scores for the threshold.
TrainedPipeline train(const TimeSeries& train_series, const RunConfig& cfg, const TrainOptions& options = {});

std::vector<double> score_series(const Prepared& prepared, const detector::DetectorModel& model);

struct Evaluation {
  metrics::MetricsReport report;
  std::vector<double> scores;  // scored timestamps only (tail dropped)
  Labels predictions;
  std::optional<Labels> labels;
  std::size_t dropped_tail = 0;
};

// q follows the config or the dataset's declared anomaly ratio.
detector::ThresholdPolicy threshold_policy(const RunConfig& cfg, std::optional<double> anomaly_ratio_percent);

Evaluation evaluate(const TrainedPipeline& trained, const data::DatasetPart& part, const RunConfig& cfg,
                    std::optional<double> anomaly_ratio_percent);

struct RunResult {
  Evaluation evaluation;
  std::vector<TrainedPipeline> trained;  // one per evaluated part
  double seconds = 0.0;
};

// Train and evaluate on the configured dataset. With Aggregation::Mean every
// subset runs separately and precision, recall, F1 and AUC are averaged.
RunResult run(const RunConfig& cfg, const TrainOptions& options = {});
RunResult run(const RunConfig& cfg, const data::Dataset& dataset, const TrainOptions& options = {});

}  // namespace madllm::pipeline
