#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "madllm/checkpoint.hpp"
#include "madllm/errors.hpp"
#include "madllm/log.hpp"
#include "madllm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace madllm;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct Flags {
  std::string config;
  std::optional<std::string> dataset;
  std::optional<double> fraction;
  std::optional<std::size_t> negatives;
  std::optional<std::string> threshold_policy;
  std::optional<double> quantile;
  bool point_adjust = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> aggregation;
  std::optional<std::size_t> encoder_epochs;
  std::optional<std::size_t> finetune_epochs;
  std::optional<std::size_t> pretrain_steps;
  bool overwrite = false;
  bool quiet = false;
  bool verbose = false;
  std::string encoder_ckpt;
  std::string model_ckpt;
  bool withhold_labels = false;
  std::vector<std::size_t> n_list{1, 2, 3, 4, 5};
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::string loss_csv(const std::vector<double>& losses) {
  std::string s;
  for (std::size_t i = 0; i < losses.size(); ++i) s += std::to_string(i + 1) + "," + fmt(losses[i]) + "\n";
  return s;
}

std::string key_values(const std::map<std::string, std::string>& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
  return s;
}

pipeline::RunConfig resolve_config(const Flags& f) {
  pipeline::RunConfig cfg;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ConfigError("cannot open config file '" + f.config + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file '" + f.config + "' is not valid JSON: " + e.what());
    }
    cfg = pipeline::RunConfig::from_json(j);
    if (cfg.dataset != "synthetic" && fs::path(cfg.dataset).is_relative()) {
      cfg.dataset = (fs::path(f.config).parent_path() / cfg.dataset).lexically_normal().string();
    }
  }
  json overlay = json::object();
  if (f.dataset) overlay["dataset"] = *f.dataset;
  if (f.fraction) overlay["fraction"] = *f.fraction;
  if (f.negatives) overlay["n_negatives"] = *f.negatives;
  if (f.threshold_policy) overlay["threshold_policy"] = *f.threshold_policy;
  if (f.quantile) overlay["quantile"] = *f.quantile;
  if (f.point_adjust) overlay["point_adjust"] = true;
  if (f.seed) overlay["seed"] = *f.seed;
  if (f.out) overlay["out"] = *f.out;
  if (f.aggregation) overlay["aggregation"] = *f.aggregation;
  if (f.encoder_epochs) overlay["encoder_epochs"] = *f.encoder_epochs;
  if (f.finetune_epochs) overlay["finetune_epochs"] = *f.finetune_epochs;
  if (f.pretrain_steps) overlay["pretrain_steps"] = *f.pretrain_steps;
  cfg = pipeline::RunConfig::from_json(overlay, cfg);

  cfg.validate();
  if (cfg.out.empty()) throw ConfigError("no output directory: pass --out or set 'out' in the config");
  if (cfg.dataset != "synthetic") {
    if (!fs::is_regular_file(cfg.dataset)) throw ConfigError("dataset manifest '" + cfg.dataset + "' does not exist");
    const auto manifest = data::DatasetManifest::load(cfg.dataset);
    pipeline::model_config(cfg, manifest.features);
  } else {
    cfg.synthetic.validate();
    pipeline::model_config(cfg, cfg.synthetic.features);
  }
  if (!f.encoder_ckpt.empty() && !fs::is_regular_file(f.encoder_ckpt)) {
    throw ConfigError("encoder checkpoint '" + f.encoder_ckpt + "' does not exist");
  }
  if (!f.model_ckpt.empty() && !fs::is_regular_file(f.model_ckpt)) {
    throw ConfigError("model checkpoint '" + f.model_ckpt + "' does not exist");
  }
  return cfg;
}

// Outputs are written to a staging directory and moved into place only when
// the command succeeds.
class OutputDir {
 public:
  OutputDir(const fs::path& target, bool overwrite) : target_(target), staging_(target.string() + ".partial") {
    if (fs::exists(target_)) {
      const bool empty = fs::is_directory(target_) && fs::is_empty(target_);
      if (!empty && !overwrite) {
        throw ConfigError("output directory '" + target_.string() + "' exists; pass --overwrite to replace it");
      }
      if (!empty && !fs::exists(target_ / "config.json")) {
        throw ConfigError("refusing to overwrite '" + target_.string() + "': it does not look like a previous run");
      }
    }
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  ~OutputDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }
  fs::path path(const std::string& name) const { return staging_ / name; }
  void commit() {
    fs::remove_all(target_);
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_, staging_;
  bool committed_ = false;
};

void echo_config(const OutputDir& out, const pipeline::RunConfig& cfg, const std::string& command) {
  json j = cfg.to_json();
  j["command"] = command;
  write_text(out.path("config.json"), j.dump(2) + "\n");
}

data::DatasetPart training_part(const pipeline::RunConfig& cfg) {
  const data::Dataset ds = pipeline::load(cfg);
  return ds.parts.size() == 1 ? ds.parts.front() : data::concatenate(ds);
}

pipeline::TrainOptions train_options(const Flags& f) {
  pipeline::TrainOptions opt;
  if (!f.encoder_ckpt.empty()) opt.encoder = load_checkpoint(f.encoder_ckpt, "encoder");
  if (!f.model_ckpt.empty()) opt.start_model = load_checkpoint(f.model_ckpt, "model");
  return opt;
}

void write_scores(const fs::path& path, const pipeline::Evaluation& ev) {
  std::string s = "t,score,prediction,label\n";
  for (std::size_t t = 0; t < ev.scores.size(); ++t) {
    s += std::to_string(t) + "," + fmt(ev.scores[t]) + "," + std::to_string(ev.predictions[t]) + ",";
    s += ev.labels ? std::to_string((*ev.labels)[t]) : "NA";
    s += "\n";
  }
  write_text(path, s);
}

void write_report(const OutputDir& out, const metrics::MetricsReport& report) {
  write_text(out.path("report.txt"), report.to_key_value());
  write_text(out.path("report.json"), report.to_json().dump(2) + "\n");
}

std::string opt_auc(const metrics::MetricsReport& r) { return r.auc ? fmt(*r.auc) : "NA"; }

int cmd_train_encoder(const Flags& f) {
  const auto cfg = resolve_config(f);
  OutputDir out(cfg.out, f.overwrite);
  echo_config(out, cfg, "train-encoder");
  const auto part = training_part(cfg);
  const auto prepared = pipeline::prepare_training(part.train, cfg);
  const auto started = std::chrono::steady_clock::now();
  const auto result = pipeline::train_encoder_stage(prepared, cfg);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  save_checkpoint(out.path("encoder.ckpt"), result.params, "encoder");
  write_text(out.path("encoder_loss.csv"), loss_csv(result.epoch_losses));
  char digest[32];
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(result.params.digest()));
  write_text(out.path("report.txt"),
             key_values({{"dataset", part.name},
                         {"digest", digest},
                         {"epochs", std::to_string(result.epoch_losses.size())},
                         {"final_loss", result.epoch_losses.empty() ? "NA" : fmt(result.epoch_losses.back())},
                         {"replacement_sampling", result.used_replacement_sampling ? "true" : "false"},
                         {"runtime_seconds", fmt(seconds)},
                         {"windows", std::to_string(prepared.windows.size())}}));
  out.commit();
  std::cout << "encoder trained on " << prepared.windows.size() << " windows, digest " << digest << "\n";
  return kOk;
}

int cmd_finetune(const Flags& f) {
  const auto cfg = resolve_config(f);
  OutputDir out(cfg.out, f.overwrite);
  echo_config(out, cfg, "finetune");
  const auto part = training_part(cfg);
  auto opt = train_options(f);
  fs::create_directories(out.path("checkpoints"));
  opt.on_epoch = [&](std::size_t epoch, const ParameterStore& params) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", epoch + 1);
    save_checkpoint(out.path("checkpoints") / name, params, "model");
  };
  const auto trained = pipeline::train(part.train, cfg, opt);
  if (trained.model.model.frozen_digest() != trained.initial_model.frozen_digest()) {
    throw ContractError("frozen tensors changed during fine-tuning");
  }
  save_checkpoint(out.path("encoder.ckpt"), trained.model.encoder, "encoder");
  save_checkpoint(out.path("initial_model.ckpt"), trained.initial_model, "model");
  save_checkpoint(out.path("model.ckpt"), trained.model.model, "model");
  write_text(out.path("encoder_loss.csv"), loss_csv(trained.encoder_losses));
  write_text(out.path("finetune_loss.csv"), loss_csv(trained.finetune_losses));
  char digest[32];
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(trained.model.model.frozen_digest()));
  write_text(out.path("report.txt"),
             key_values({{"dataset", part.name},
                         {"epochs", std::to_string(trained.finetune_losses.size())},
                         {"final_loss", trained.finetune_losses.empty() ? "NA" : fmt(trained.finetune_losses.back())},
                         {"frozen_digest", digest},
                         {"pretrain_initial_loss", fmt(trained.pretrain_initial_loss)},
                         {"pretrain_final_loss", fmt(trained.pretrain_final_loss)},
                         {"encoder_seconds", fmt(trained.encoder_seconds)},
                         {"runtime_seconds", fmt(trained.finetune_seconds)}}));
  out.commit();
  std::cout << "fine-tuned " << trained.finetune_losses.size() << " epochs in " << trained.finetune_seconds
            << " s, frozen digest " << digest << "\n";
  return kOk;
}

int cmd_eval(const Flags& f) {
  const auto cfg = resolve_config(f);
  OutputDir out(cfg.out, f.overwrite);
  echo_config(out, cfg, "eval");
  data::Dataset ds = pipeline::load(cfg);
  if (f.withhold_labels) {
    for (auto& p : ds.parts) p.labels.reset();
  }
  const auto result = pipeline::run(cfg, ds, train_options(f));
  const auto& report = result.evaluation.report;
  write_report(out, report);
  write_scores(out.path("scores.csv"), result.evaluation);
  if (result.trained.size() == 1) {
    save_checkpoint(out.path("encoder.ckpt"), result.trained.front().model.encoder, "encoder");
    save_checkpoint(out.path("model.ckpt"), result.trained.front().model.model, "model");
  }
  out.commit();
  std::cout << "f1=" << fmt(report.f1) << " auc=" << opt_auc(report);
  if (!report.auc_note.empty()) std::cout << " (" << report.auc_note << ")";
  std::cout << " runtime_seconds=" << fmt(report.runtime_seconds) << "\n";
  return kOk;
}

int cmd_ablate(const Flags& f) {
  const auto cfg = resolve_config(f);
  OutputDir out(cfg.out, f.overwrite);
  echo_config(out, cfg, "ablate");
  const data::Dataset ds = pipeline::load(cfg);
  struct Variant {
    const char* name;
    bool skip, feature;
  };
  const Variant variants[] = {{"full", true, true}, {"no-skip", false, true}, {"no-feature", true, false}};
  std::string csv = "variant,f1,auc,precision,recall,runtime_seconds\n";
  std::string table;
  for (const auto& v : variants) {
    auto vc = cfg;
    vc.embedding.skip_term = v.skip;
    vc.embedding.feature_term = v.feature;
    const auto result = pipeline::run(vc, ds);
    const auto& r = result.evaluation.report;
    fs::create_directories(out.path(v.name));
    write_text(out.path(v.name) / "report.txt", r.to_key_value());
    write_text(out.path(v.name) / "report.json", r.to_json().dump(2) + "\n");
    csv += std::string(v.name) + "," + fmt(r.f1) + "," + opt_auc(r) + "," + fmt(r.precision) + "," + fmt(r.recall) +
           "," + fmt(r.runtime_seconds) + "\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-12s f1=%.4f auc=%s\n", v.name, r.f1,
                  r.auc ? std::to_string(*r.auc).c_str() : "NA");
    table += line;
  }
  write_text(out.path("ablation.csv"), csv);
  out.commit();
  std::cout << table;
  return kOk;
}

int cmd_sweep_n(const Flags& f) {
  const auto cfg = resolve_config(f);
  if (f.n_list.empty()) throw ConfigError("--n-list must name at least one value");
  for (std::size_t n : f.n_list) {
    if (n == 0) throw ConfigError("--n-list values must be positive");
  }
  OutputDir out(cfg.out, f.overwrite);
  echo_config(out, cfg, "sweep-n");
  const data::Dataset ds = pipeline::load(cfg);
  std::string csv = "n,f1,auc,replacement_sampling\n";
  for (std::size_t n : f.n_list) {
    auto nc = cfg;
    nc.negatives = n;
    const auto result = pipeline::run(nc, ds);
    const auto& r = result.evaluation.report;
    bool replacement = false;
    for (const auto& t : result.trained) replacement = replacement || t.replacement_sampling;
    csv += std::to_string(n) + "," + fmt(r.f1) + "," + opt_auc(r) + "," + (replacement ? "true" : "false") + "\n";
    std::cout << "n=" << n << " f1=" << fmt(r.f1) << " auc=" << opt_auc(r)
              << (replacement ? " (replacement sampling)" : "") << "\n";
  }
  write_text(out.path("sweep_n.csv"), csv);
  out.commit();
  return kOk;
}

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON run configuration");
  app->add_option("--dataset", f.dataset, "dataset manifest path or 'synthetic'");
  app->add_option("--fraction", f.fraction, "training prefix fraction in (0, 1]");
  app->add_option("--n-negatives", f.negatives, "negatives per anchor");
  app->add_option("--threshold-policy", f.threshold_policy, "quantile or best-f1");
  app->add_option("--quantile", f.quantile, "quantile level for the quantile policy");
  app->add_flag("--point-adjust", f.point_adjust, "apply point adjustment before scoring");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--aggregation", f.aggregation, "concat or mean over dataset subsets");
  app->add_option("--encoder-epochs", f.encoder_epochs, "contrastive training epochs");
  app->add_option("--epochs", f.finetune_epochs, "fine-tuning epochs");
  app->add_option("--pretrain-steps", f.pretrain_steps, "pretraining stub steps");
  app->add_flag("--overwrite", f.overwrite, "replace an existing output directory");
  app->add_flag("--quiet", f.quiet, "suppress warnings");
  app->add_flag("--verbose", f.verbose, "log progress");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multivariate time-series anomaly detection with a partially frozen transformer"};
  app.require_subcommand(1);
  Flags f;
  std::function<int()> action;

  auto* enc = app.add_subcommand("train-encoder", "train the contrastive feature encoder");
  add_common(enc, f);
  enc->callback([&] { action = [&] { return cmd_train_encoder(f); }; });

  auto* ft = app.add_subcommand("finetune", "fine-tune the non-frozen tensors of the model");
  add_common(ft, f);
  ft->add_option("--encoder", f.encoder_ckpt, "encoder checkpoint to reuse");
  ft->add_option("--model", f.model_ckpt, "model checkpoint to start from instead of the pretraining stub");
  ft->callback([&] { action = [&] { return cmd_finetune(f); }; });

  auto* ev = app.add_subcommand("eval", "train, score the test split and report metrics");
  add_common(ev, f);
  ev->add_option("--encoder", f.encoder_ckpt, "encoder checkpoint to reuse");
  ev->add_option("--model", f.model_ckpt, "model checkpoint to start from instead of the pretraining stub");
  ev->add_flag("--withhold-labels", f.withhold_labels, "score without test labels");
  ev->callback([&] { action = [&] { return cmd_eval(f); }; });

  auto* ab = app.add_subcommand("ablate", "compare full, no-skip and no-feature variants");
  add_common(ab, f);
  ab->callback([&] { action = [&] { return cmd_ablate(f); }; });

  auto* sw = app.add_subcommand("sweep-n", "repeat training and evaluation for several negative counts");
  add_common(sw, f);
  sw->add_option("--n-list", f.n_list, "negative counts")->delimiter(',');
  sw->callback([&] { action = [&] { return cmd_sweep_n(f); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  set_log_level(f.quiet ? LogLevel::Quiet : (f.verbose ? LogLevel::Info : LogLevel::Warning));
  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const InsufficientDataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}
