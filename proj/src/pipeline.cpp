#include "madllm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>

#include "madllm/errors.hpp"
#include "madllm/log.hpp"
#include "madllm/random.hpp"

namespace madllm::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

const char* threshold_name(detector::ThresholdKind k) {
  return k == detector::ThresholdKind::Quantile ? "quantile" : "best-f1";
}

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (patch_len == 0) fail("patch_len must be positive");
  if (patches < 2) fail("patches must be at least 2 (triplet sampling needs two patches per feature)");
  try {
    encoder.validate(0);
    backbone.validate();
    synthetic.validate();
  } catch (const ParameterError& e) {
    fail(e.what());
  }
  if (negatives == 0) fail("n-negatives must be at least 1");
  if (!(encoder_lr > 0.0) || !(finetune_lr > 0.0)) fail("learning rates must be positive");
  if (quantile && !(*quantile > 0.0 && *quantile < 1.0)) fail("quantile must lie in (0, 1)");
  if (!(fraction > 0.0 && fraction <= 1.0)) fail("fraction must lie in (0, 1]");
  if (dataset.empty()) fail("dataset path is required");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["patch_len"] = patch_len;
  j["patches"] = patches;
  j["encoder"] = {{"blocks", encoder.blocks},
                  {"channels", encoder.channels},
                  {"kernel", encoder.kernel},
                  {"repr_dim", encoder.repr_dim}};
  j["backbone"] = {{"layers", backbone.layers},
                   {"heads", backbone.heads},
                   {"d_model", backbone.d_model},
                   {"d_ff", backbone.d_ff},
                   {"max_seq", backbone.max_seq}};
  j["skip_embedding"] = embedding.skip_term;
  j["feature_embedding"] = embedding.feature_term;
  j["n_negatives"] = negatives;
  j["encoder_epochs"] = encoder_epochs;
  j["encoder_lr"] = encoder_lr;
  j["pretrain_steps"] = pretrain_steps;
  j["pretrain_seed"] = pretrain_seed;
  j["finetune_epochs"] = finetune_epochs;
  j["finetune_lr"] = finetune_lr;
  j["threshold_policy"] = threshold_name(threshold);
  j["quantile"] = quantile ? nlohmann::json(*quantile) : nlohmann::json(nullptr);
  j["point_adjust"] = point_adjust;
  j["fraction"] = fraction;
  j["seed"] = seed;
  j["aggregation"] = aggregation == Aggregation::Concat ? "concat" : "mean";
  j["dataset"] = dataset;
  j["synthetic"] = synthetic.to_json();
  j["synthetic"].erase("seed");
  j["out"] = out;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "patch_len") c.patch_len = get_as<std::size_t>(v, key);
    else if (key == "patches") c.patches = get_as<std::size_t>(v, key);
    else if (key == "encoder") {
      for (const auto& [k, e] : v.items()) {
        if (k == "blocks") c.encoder.blocks = get_as<std::size_t>(e, key + "." + k);
        else if (k == "channels") c.encoder.channels = get_as<std::size_t>(e, key + "." + k);
        else if (k == "kernel") c.encoder.kernel = get_as<std::size_t>(e, key + "." + k);
        else if (k == "repr_dim") c.encoder.repr_dim = get_as<std::size_t>(e, key + "." + k);
        else throw ConfigError("unknown config key 'encoder." + k + "'");
      }
    } else if (key == "backbone") {
      for (const auto& [k, e] : v.items()) {
        if (k == "layers") c.backbone.layers = get_as<std::size_t>(e, key + "." + k);
        else if (k == "heads") c.backbone.heads = get_as<std::size_t>(e, key + "." + k);
        else if (k == "d_model") c.backbone.d_model = get_as<std::size_t>(e, key + "." + k);
        else if (k == "d_ff") c.backbone.d_ff = get_as<std::size_t>(e, key + "." + k);
        else if (k == "max_seq") c.backbone.max_seq = get_as<std::size_t>(e, key + "." + k);
        else throw ConfigError("unknown config key 'backbone." + k + "'");
      }
    } else if (key == "skip_embedding") c.embedding.skip_term = get_as<bool>(v, key);
    else if (key == "feature_embedding") c.embedding.feature_term = get_as<bool>(v, key);
    else if (key == "n_negatives") c.negatives = get_as<std::size_t>(v, key);
    else if (key == "encoder_epochs") c.encoder_epochs = get_as<std::size_t>(v, key);
    else if (key == "encoder_lr") c.encoder_lr = get_as<double>(v, key);
    else if (key == "pretrain_steps") c.pretrain_steps = get_as<std::size_t>(v, key);
    else if (key == "pretrain_seed") c.pretrain_seed = get_as<std::uint64_t>(v, key);
    else if (key == "finetune_epochs") c.finetune_epochs = get_as<std::size_t>(v, key);
    else if (key == "finetune_lr") c.finetune_lr = get_as<double>(v, key);
    else if (key == "threshold_policy") {
      const auto s = get_as<std::string>(v, key);
      if (s == "quantile") c.threshold = detector::ThresholdKind::Quantile;
      else if (s == "best-f1") c.threshold = detector::ThresholdKind::BestF1;
      else throw ConfigError("threshold_policy must be 'quantile' or 'best-f1', got '" + s + "'");
    } else if (key == "quantile") {
      if (v.is_null()) c.quantile.reset();
      else c.quantile = get_as<double>(v, key);
    } else if (key == "point_adjust") c.point_adjust = get_as<bool>(v, key);
    else if (key == "fraction") c.fraction = get_as<double>(v, key);
    else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
    else if (key == "aggregation") {
      const auto s = get_as<std::string>(v, key);
      if (s == "concat") c.aggregation = Aggregation::Concat;
      else if (s == "mean") c.aggregation = Aggregation::Mean;
      else throw ConfigError("aggregation must be 'concat' or 'mean', got '" + s + "'");
    } else if (key == "dataset") c.dataset = get_as<std::string>(v, key);
    else if (key == "synthetic") {
      if (v.contains("seed")) throw ConfigError("synthetic data follow the top-level seed; remove 'synthetic.seed'");
      try {
        c.synthetic = data::SyntheticSpec::from_json(v);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid synthetic block: ") + e.what());
      }
    } else if (key == "out") c.out = get_as<std::string>(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  return c;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) { return from_json(j, RunConfig{}); }

data::Dataset load(const RunConfig& cfg) {
  if (cfg.dataset == "synthetic") {
    data::SyntheticSpec spec = cfg.synthetic;
    spec.seed = cfg.seed;
    return data::synthetic_dataset(spec);
  }
  return data::load_dataset(data::DatasetManifest::load(cfg.dataset));
}

Prepared prepare_windows(const TimeSeries& series, const NormalizationStats& stats, const RunConfig& cfg,
                         const Labels* labels) {
  Prepared p;
  p.stats = stats;
  WindowTiling tiling = tile_windows(series, stats, cfg.window_len(), cfg.patch_len, labels);
  p.dropped_tail = tiling.dropped_tail;
  p.windows = std::move(tiling.windows);
  p.tokens.reserve(p.windows.size());
  for (const auto& w : p.windows) p.tokens.push_back(patchify(w, cfg.patch_len));
  return p;
}

Prepared prepare_training(const TimeSeries& train, const RunConfig& cfg) {
  const TimeSeries prefix = data::subsample_training(train, cfg.fraction);
  if (prefix.rows < cfg.window_len()) {
    throw InsufficientDataError("training prefix of " + std::to_string(prefix.rows) +
                                " rows is shorter than one window of " + std::to_string(cfg.window_len()));
  }
  return prepare_windows(prefix, NormalizationStats::fit(prefix), cfg);
}

backbone::ModelConfig model_config(const RunConfig& cfg, std::size_t features) {
  backbone::ModelConfig mc;
  mc.backbone = cfg.backbone;
  mc.embedding = cfg.embedding;
  mc.patch_len = cfg.patch_len;
  mc.repr_dim = cfg.encoder.repr_dim;
  const std::size_t tokens = cfg.patches * features;
  if (tokens > mc.backbone.max_seq) {
    throw ConfigError(std::to_string(features) + " features x " + std::to_string(cfg.patches) +
                      " patches exceed backbone max_seq " + std::to_string(mc.backbone.max_seq));
  }
  return mc;
}

backbone::PretrainResult pretrained_backbone(const RunConfig& cfg, std::size_t features) {
  backbone::PretrainCorpus corpus;
  corpus.features = features;
  corpus.patches = cfg.patches;
  corpus.patch_len = cfg.patch_len;
  corpus.steps = cfg.pretrain_steps;
  corpus.windows = std::max<std::size_t>(1, cfg.pretrain_steps);

  static std::mutex mutex;
  static std::map<std::string, backbone::PretrainResult> cache;
  const nlohmann::json key = {{"backbone", cfg.to_json()["backbone"]}, {"features", features},
                              {"patches", cfg.patches},              {"patch_len", cfg.patch_len},
                              {"steps", cfg.pretrain_steps},         {"seed", cfg.pretrain_seed}};
  const std::lock_guard lock(mutex);
  auto it = cache.find(key.dump());
  if (it == cache.end()) {
    log_info("pretraining backbone stub for " + std::to_string(corpus.steps) + " steps");
    it = cache.emplace(key.dump(), backbone::pretrain_stub(cfg.backbone, cfg.pretrain_seed, corpus)).first;
  }
  backbone::PretrainResult copy;
  copy.params = it->second.params.clone();
  copy.adapters = it->second.adapters.clone();
  copy.initial_loss = it->second.initial_loss;
  copy.final_loss = it->second.final_loss;
  return copy;
}

contrastive::EncoderTrainingResult train_encoder_stage(const Prepared& prepared, const RunConfig& cfg) {
  contrastive::EncoderTrainingOptions opt;
  opt.negatives = cfg.negatives;
  opt.epochs = cfg.encoder_epochs;
  opt.lr = cfg.encoder_lr;
  opt.seed = derive_seed(cfg.seed, 1);
  return contrastive::train_encoder(prepared.tokens, cfg.encoder, opt);
}

std::vector<double> score_series(const Prepared& prepared, const detector::DetectorModel& model) {
  std::vector<double> scores;
  for (const auto& w : prepared.windows) {
    const auto s = detector::score_window(w, model);
    scores.insert(scores.end(), s.scores.begin(), s.scores.end());
  }
  return scores;
}

TrainedPipeline train(const TimeSeries& train_series, const RunConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  const Prepared prepared = prepare_training(train_series, cfg);
  TrainedPipeline out;
  out.stats = prepared.stats;
  out.train_rows = prepared.windows.size() * cfg.window_len();
  out.model.encoder_config = cfg.encoder;
  out.model.model_config = model_config(cfg, train_series.cols);

  auto t0 = Clock::now();
  if (options.encoder) {
    out.model.encoder = options.encoder->clone();
  } else if (cfg.embedding.feature_term) {
    auto enc = train_encoder_stage(prepared, cfg);
    out.model.encoder = std::move(enc.params);
    out.encoder_losses = std::move(enc.epoch_losses);
    out.replacement_sampling = enc.used_replacement_sampling;
  } else {
    out.model.encoder = contrastive::init_encoder(cfg.encoder, derive_seed(cfg.seed, 1));
  }
  out.encoder_seconds = since(t0);

  ParameterStore model;
  if (options.start_model) {
    model = options.start_model->clone();
    backbone::apply_freeze_mask(model);
  } else {
    auto stub = pretrained_backbone(cfg, train_series.cols);
    out.pretrain_initial_loss = stub.initial_loss;
    out.pretrain_final_loss = stub.final_loss;
    model = backbone::assemble_model(out.model.model_config, std::move(stub.params), derive_seed(cfg.seed, 3),
                                    &stub.adapters);
  }
  out.initial_model = model.clone();

  backbone::FinetuneOptions fo;
  fo.epochs = cfg.finetune_epochs;
  fo.lr = cfg.finetune_lr;
  fo.seed = derive_seed(cfg.seed, 4);
  auto ft = backbone::finetune(std::move(model), prepared.tokens, out.model.encoder, cfg.encoder,
                               out.model.model_config, fo, options.on_epoch);
  out.model.model = std::move(ft.params);
  out.finetune_losses = std::move(ft.epoch_losses);
  out.finetune_seconds = ft.seconds;

  out.train_scores = score_series(prepared, out.model);
  return out;
}

detector::ThresholdPolicy threshold_policy(const RunConfig& cfg, std::optional<double> anomaly_ratio_percent) {
  detector::ThresholdPolicy p;
  p.kind = cfg.threshold;
  if (cfg.quantile) p.q = *cfg.quantile;
  else if (anomaly_ratio_percent && *anomaly_ratio_percent > 0.0) p.q = 1.0 - *anomaly_ratio_percent / 100.0;
  else p.q = 0.99;
  return p;
}

Evaluation evaluate(const TrainedPipeline& trained, const data::DatasetPart& part, const RunConfig& cfg,
                    std::optional<double> anomaly_ratio_percent) {
  if (part.test.cols != trained.stats.features()) {
    throw DataError("test split has " + std::to_string(part.test.cols) + " features, model was trained on " +
                    std::to_string(trained.stats.features()));
  }
  const Labels* labels = part.labels ? &*part.labels : nullptr;
  const Prepared test = prepare_windows(part.test, trained.stats, cfg, labels);
  Evaluation ev;
  ev.dropped_tail = test.dropped_tail;
  ev.scores = score_series(test, trained.model);
  const std::size_t scored = ev.scores.size();
  if (labels) ev.labels = Labels(labels->begin(), labels->begin() + static_cast<long>(scored));

  const auto policy = threshold_policy(cfg, anomaly_ratio_percent);
  double threshold = 0.0;
  if (policy.kind == detector::ThresholdKind::Quantile) {
    threshold = detector::resolve_threshold(trained.train_scores, policy);
  } else {
    if (!ev.labels) throw DataError("best-f1 threshold policy needs test labels");
    threshold = detector::resolve_threshold(ev.scores, policy, std::span<const std::uint8_t>(*ev.labels));
  }
  ev.report = metrics::evaluate(ev.scores, threshold, ev.labels ? &*ev.labels : nullptr, cfg.point_adjust);
  ev.predictions = detector::detect(ev.scores, threshold);
  if (cfg.point_adjust && ev.labels) ev.predictions = metrics::point_adjust(ev.predictions, *ev.labels);

  auto& info = ev.report.info;
  info["dataset"] = part.name;
  info["threshold_policy"] = threshold_name(policy.kind);
  if (policy.kind == detector::ThresholdKind::Quantile) info["quantile"] = std::to_string(policy.q);
  info["scored_timestamps"] = std::to_string(scored);
  info["dropped_tail"] = std::to_string(ev.dropped_tail);
  info["train_rows_used"] = std::to_string(trained.train_rows);
  info["seed"] = std::to_string(cfg.seed);
  info["fraction"] = std::to_string(cfg.fraction);
  info["n_negatives"] = std::to_string(cfg.negatives);
  info["skip_embedding"] = cfg.embedding.skip_term ? "on" : "off";
  info["feature_embedding"] = cfg.embedding.feature_term ? "on" : "off";
  info["replacement_sampling"] = trained.replacement_sampling ? "true" : "false";
  return ev;
}

RunResult run(const RunConfig& cfg, const TrainOptions& options) { return run(cfg, load(cfg), options); }

RunResult run(const RunConfig& cfg, const data::Dataset& dataset, const TrainOptions& options) {
  cfg.validate();
  const auto started = Clock::now();
  RunResult result;
  std::vector<data::DatasetPart> parts;
  if (cfg.aggregation == Aggregation::Concat || dataset.parts.size() == 1) {
    parts.push_back(dataset.parts.size() == 1 ? dataset.parts.front() : data::concatenate(dataset));
  } else {
    parts = dataset.parts;
  }

  std::vector<Evaluation> evals;
  for (const auto& part : parts) {
    result.trained.push_back(train(part.train, cfg, options));
    evals.push_back(evaluate(result.trained.back(), part, cfg, dataset.anomaly_ratio_percent));
  }

  if (evals.size() == 1) {
    result.evaluation = std::move(evals.front());
  } else {
    Evaluation& agg = result.evaluation;
    agg.report = evals.front().report;
    agg.labels.emplace();
    double p = 0, r = 0, f = 0, auc = 0;
    std::size_t auc_parts = 0;
    agg.report.counts = {};
    agg.report.f1_degenerate = false;
    for (auto& e : evals) {
      p += e.report.precision;
      r += e.report.recall;
      f += e.report.f1;
      if (e.report.auc) {
        auc += *e.report.auc;
        ++auc_parts;
      }
      agg.report.counts.tp += e.report.counts.tp;
      agg.report.counts.fp += e.report.counts.fp;
      agg.report.counts.tn += e.report.counts.tn;
      agg.report.counts.fn += e.report.counts.fn;
      agg.report.f1_degenerate = agg.report.f1_degenerate || e.report.f1_degenerate;
      agg.scores.insert(agg.scores.end(), e.scores.begin(), e.scores.end());
      agg.predictions.insert(agg.predictions.end(), e.predictions.begin(), e.predictions.end());
      if (agg.labels && e.labels) agg.labels->insert(agg.labels->end(), e.labels->begin(), e.labels->end());
      else agg.labels.reset();
      agg.dropped_tail += e.dropped_tail;
    }
    const double n = static_cast<double>(evals.size());
    agg.report.precision = p / n;
    agg.report.recall = r / n;
    agg.report.f1 = f / n;
    agg.report.auc = auc_parts ? std::optional<double>(auc / static_cast<double>(auc_parts)) : std::nullopt;
    agg.report.auc_note = auc_parts == evals.size() ? "" : "AUC averaged over " + std::to_string(auc_parts) + " of " +
                                                               std::to_string(evals.size()) + " subsets";
    agg.report.info["dataset"] = dataset.name;
    agg.report.info["dropped_tail"] = std::to_string(agg.dropped_tail);
    agg.report.info["scored_timestamps"] = std::to_string(agg.scores.size());
    agg.report.info.erase("train_rows_used");
  }
  result.evaluation.report.info["aggregation"] = parts.size() == 1 && dataset.parts.size() > 1
                                                     ? "concat"
                                                     : (parts.size() > 1 ? "mean" : "single");
  result.evaluation.report.info["subsets"] = std::to_string(dataset.parts.size());
  result.seconds = since(started);
  double training = 0.0;
  for (const auto& t : result.trained) training += t.encoder_seconds + t.finetune_seconds;
  result.evaluation.report.runtime_seconds = training;
  return result;
}

}  // namespace madllm::pipeline
