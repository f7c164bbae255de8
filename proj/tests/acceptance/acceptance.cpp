#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gradient_cases.hpp"
#include "madllm/backbone.hpp"
#include "madllm/contrastive.hpp"
#include "madllm/data.hpp"
#include "madllm/embedding.hpp"
#include "madllm/log.hpp"
#include "madllm/metrics.hpp"
#include "madllm/pipeline.hpp"
#include "madllm/tokenizer.hpp"
#include "oracles.hpp"

using namespace madllm;
namespace fs = std::filesystem;

namespace {

constexpr int kSeeds = 5;
constexpr int kRequiredSeeds = 4;
constexpr double kClosedFormTolerance = 1e-12;
constexpr double kGradientTolerance = 1e-4;
constexpr double kSeparationMargin = 0.1;
constexpr double kMinF1 = 0.8;
constexpr double kMinAuc = 0.9;
constexpr double kMinFewShotF1 = 0.7;
constexpr double kFewShotFraction = 0.2;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

enum class Variant { Full, NoFeature, NoSkip, FewShot };

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoFeature: return "no-feature";
    case Variant::NoSkip: return "no-skip";
    case Variant::FewShot: return "20%-prefix";
  }
  return "?";
}

pipeline::RunConfig synthetic_config(int seed, Variant v) {
  pipeline::RunConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.synthetic.features = 6;
  cfg.synthetic.length = 20000;
  cfg.synthetic.confounder_rate = 0.02;
  cfg.synthetic.anomaly_rate = 0.01;
  if (v == Variant::NoFeature) cfg.embedding.feature_term = false;
  if (v == Variant::NoSkip) cfg.embedding.skip_term = false;
  if (v == Variant::FewShot) cfg.fraction = kFewShotFraction;
  return cfg;
}

struct RunRecord {
  pipeline::RunResult result;
  std::string report;  // key=value text without runtime
  double separation = 0.0;
};

double representation_separation(const pipeline::RunConfig& cfg, const pipeline::TrainedPipeline& trained) {
  const auto part = pipeline::load(cfg).parts.front();
  const auto test = pipeline::prepare_windows(part.test, trained.stats, cfg);
  const std::size_t windows = std::min<std::size_t>(20, test.tokens.size());
  std::vector<std::vector<double>> unit;
  std::vector<std::size_t> feature;
  for (std::size_t w = 0; w < windows; ++w) {
    const TokenSeries& fm = test.tokens[w];
    const Tensor reprs = embedding::feature_representations(fm, trained.model.encoder, trained.model.encoder_config);
    const std::size_t r = reprs.shape()[1];
    for (std::size_t row = 0; row < reprs.shape()[0]; ++row) {
      std::vector<double> v(r);
      double norm = 0.0;
      for (std::size_t c = 0; c < r; ++c) norm += (v[c] = reprs.at(row, c)) * v[c];
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
      unit.push_back(std::move(v));
      feature.push_back(row % fm.features);
    }
  }
  double within = 0.0, cross = 0.0;
  std::size_t n_within = 0, n_cross = 0;
  for (std::size_t a = 0; a < unit.size(); ++a)
    for (std::size_t b = a + 1; b < unit.size(); ++b) {
      double dot = 0.0;
      for (std::size_t c = 0; c < unit[a].size(); ++c) dot += unit[a][c] * unit[b][c];
      if (feature[a] == feature[b]) {
        within += dot;
        ++n_within;
      } else {
        cross += dot;
        ++n_cross;
      }
    }
  return within / static_cast<double>(n_within) - cross / static_cast<double>(n_cross);
}

RunRecord execute(int seed, Variant v) {
  const auto cfg = synthetic_config(seed, v);
  RunRecord r;
  r.result = pipeline::run(cfg);
  r.report = r.result.evaluation.report.to_key_value(false);
  if (v == Variant::Full) r.separation = representation_separation(cfg, r.result.trained.front());
  return r;
}

std::map<std::pair<int, Variant>, RunRecord>& run_cache() {
  static std::map<std::pair<int, Variant>, RunRecord> cache;
  return cache;
}

const RunRecord& cached_run(int seed, Variant v) {
  auto& cache = run_cache();
  auto it = cache.find({seed, v});
  if (it == cache.end()) {
    std::fprintf(stderr, "  running seed %d %s\n", seed, variant_name(v));
    it = cache.emplace(std::make_pair(seed, v), execute(seed, v)).first;
  }
  return it->second;
}

// 1
Outcome permutation_correctness() {
  for (std::size_t p = 1; p <= 8; ++p)
    for (std::size_t m = 1; m <= 8; ++m) {
      SeriesWindow w;
      w.timestamps = 2 * p;
      w.features = m;
      for (std::size_t t = 0; t < w.timestamps; ++t)
        for (std::size_t j = 0; j < m; ++j) w.values.push_back(1000.0 * static_cast<double>(j) + static_cast<double>(t));
      const TokenSeries fm = patchify(w, 2);
      const TokenSeries tm = skip_reorder(fm);
      for (std::size_t j = 1; j <= m; ++j)
        for (std::size_t i = 1; i <= p; ++i) {
          const Patch& src = fm.patches[(j - 1) * p + i - 1];
          const Patch& dst = tm.patches[(i - 1) * m + j - 1];
          if (src.feature != dst.feature || src.index != dst.index || src.values != dst.values) {
            return {false, "position map broken at P=" + std::to_string(p) + " M=" + std::to_string(m)};
          }
        }
      const TokenSeries back = inverse_reorder(tm);
      for (std::size_t k = 0; k < fm.size(); ++k)
        if (back.patches[k].values != fm.patches[k].values || back.patches[k].feature != fm.patches[k].feature) {
          return {false, "inverse is not the identity at P=" + std::to_string(p) + " M=" + std::to_string(m)};
        }
    }
  return {true, "64 shapes, closed-form map and inverse exact"};
}

// 2
Outcome loss_correctness() {
  auto basis = [](std::size_t k) {
    std::vector<double> v(5, 0.0);
    v[k] = 1.0;
    return Tensor::vector(v);
  };
  const std::vector<Tensor> zero_negs{basis(2), basis(3), basis(4)};
  const double log4 = contrastive::triplet_loss(basis(0), basis(1), zero_negs).item();
  const Tensor a = Tensor::vector({0.6, -0.8, 0.0});
  const std::vector<Tensor> opposite{ops::scale(a, -1.0)};
  const double two = contrastive::triplet_loss(a, a, opposite).item();
  const double e1 = std::abs(log4 - std::log(4.0)), e2 = std::abs(two - std::log(1.0 + std::exp(-2.0)));
  if (e1 > kClosedFormTolerance || e2 > kClosedFormTolerance) {
    return {false, "closed-form errors " + sci(e1) + ", " + sci(e2)};
  }
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto loss = [](double pos, const std::vector<double>& negs) {
    std::vector<Tensor> n;
    for (double v : negs) n.push_back(Tensor::scalar(v));
    return contrastive::info_nce(Tensor::scalar(pos), n).item();
  };
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> negs(1 + rng() % 8);
    for (double& v : negs) v = u(rng);
    const double pos = u(rng);
    const double base = loss(pos, negs);
    auto raised = negs;
    raised[rng() % raised.size()] += 0.05;
    if (!(base > 0.0) || !(loss(pos + 0.05, negs) < base) || !(loss(pos, raised) > base)) {
      return {false, "positivity or monotonicity violated on fuzz case " + std::to_string(trial)};
    }
  }
  return {true, "closed forms within " + sci(std::max(e1, e2)) + ", 10000 fuzz cases"};
}

// 3
Outcome gradient_suite() {
  double worst = 0.0;
  std::string worst_name;
  std::size_t cases = 0;
  for (std::uint64_t seed : {11u, 12u}) {
    for (auto& c : testing::gradient_cases(seed)) {
      const auto check = testing::finite_difference_check(c.inputs, c.f);
      ++cases;
      if (check.max_rel_error > worst) {
        worst = check.max_rel_error;
        worst_name = c.name;
      }
      if (check.checked == 0) return {false, c.name + " checked no entries"};
    }
  }
  const bool pass = worst < kGradientTolerance;
  return {pass, std::to_string(cases) + " cases, worst relative error " + sci(worst) + " (" + worst_name + ")"};
}

// 4
Outcome freeze_contract() {
  pipeline::RunConfig cfg;
  cfg.patch_len = 8;
  cfg.patches = 4;
  cfg.encoder = {2, 8, 3, 8};
  cfg.backbone = {2, 2, 16, 32, 64};
  cfg.synthetic.length = 4000;
  const auto part = pipeline::load(cfg).parts.front();
  const auto prepared = pipeline::prepare_training(part.train, cfg);
  const auto mc = pipeline::model_config(cfg, part.train.cols);
  const ParameterStore encoder = contrastive::init_encoder(cfg.encoder, 1);
  const ParameterStore start = backbone::assemble_model(mc, backbone::init_backbone(mc.backbone, 2), 3);
  const std::vector<TokenSeries> windows(prepared.tokens.begin(), prepared.tokens.begin() + 40);
  int runs = 0;
  for (std::uint64_t seed : {1u, 2u, 3u})
    for (std::size_t epochs : {1u, 3u}) {
      backbone::FinetuneOptions opt;
      opt.epochs = epochs;
      opt.seed = seed;
      const auto r = backbone::finetune(start, windows, encoder, cfg.encoder, mc, opt);
      if (r.params.frozen_digest() != start.frozen_digest()) {
        return {false, "frozen checksum changed (seed " + std::to_string(seed) + ")"};
      }
      bool changed = false;
      for (const auto& e : r.params.entries()) {
        if (e.frozen) continue;
        const auto before = start.get(e.name).data(), after = e.value.data();
        changed = changed || !std::equal(before.begin(), before.end(), after.begin());
      }
      if (!changed) return {false, "no trainable tensor changed (seed " + std::to_string(seed) + ")"};
      ++runs;
    }
  return {true, std::to_string(runs) + " fine-tune runs, frozen checksums identical, trainable tensors moved"};
}

// 5
Outcome causality() {
  const contrastive::EncoderConfig enc_cfg;
  const ParameterStore enc = contrastive::init_encoder(enc_cfg, 5);
  std::mt19937_64 rng(6);
  const std::size_t len = 16;
  const Tensor x = testing::random_tensor({1, len}, rng);
  const Tensor base = contrastive::encoder_feature_map(x, enc, enc_cfg);
  for (std::size_t t = 0; t < len; ++t) {
    Tensor y = x.clone();
    y.mutable_data()[t] += 1.0;
    const Tensor out = contrastive::encoder_feature_map(y, enc, enc_cfg);
    bool changed = false;
    for (std::size_t c = 0; c < enc_cfg.channels; ++c) {
      for (std::size_t u = 0; u < t; ++u)
        if (out[c * len + u] != base[c * len + u]) return {false, "encoder map leaks from step " + std::to_string(t)};
      changed = changed || out[c * len + t] != base[c * len + t];
    }
    if (!changed) return {false, "encoder map ignores step " + std::to_string(t)};
  }

  const backbone::BackboneConfig bb;
  const ParameterStore p = backbone::init_backbone(bb, 7);
  const std::size_t n = 48;
  const Tensor h = testing::random_tensor({n, bb.d_model}, rng);
  const Tensor hb = backbone::forward(h, p, bb);
  for (std::size_t t = 0; t < n; ++t) {
    Tensor y = h.clone();
    for (std::size_t c = 0; c < bb.d_model; ++c) y.mutable_data()[t * bb.d_model + c] += 0.5;
    const Tensor out = backbone::forward(y, p, bb);
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t c = 0; c < bb.d_model; ++c)
        if (out.at(r, c) != hb.at(r, c)) return {false, "backbone leaks from position " + std::to_string(t)};
  }
  return {true, "encoder: 16 positions, backbone: 48 positions, no leakage"};
}

// 6
Outcome metric_oracles() {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    std::vector<double> s(n);
    Labels l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = trial % 2 ? static_cast<double>(rng() % 20) : std::uniform_real_distribution<double>(0, 1)(rng);
      l[i] = rng() % 3 == 0;
    }
    l[0] = 1;
    l[1] = 0;
    if (metrics::roc_auc(s, l) != testing::brute_force_auc(s, l)) return {false, "AUC differs on instance " + std::to_string(trial)};
  }
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 100;
    Labels p(n), l(n);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng() % 2;
      l[i] = rng() % 3 == 0;
      tp += p[i] && l[i];
      fp += p[i] && !l[i];
      fn += !p[i] && l[i];
    }
    const double prec = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    if (metrics::f1_score(p, l).f1 != f1) return {false, "F1 differs on instance " + std::to_string(trial)};
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 80;
    Labels l(n), p(n);
    bool on = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (rng() % 6 == 0) on = !on;
      l[i] = on;
      p[i] = rng() % 4 == 0;
    }
    if (metrics::f1_score(metrics::point_adjust(p, l), l).f1 < metrics::f1_score(p, l).f1) {
      return {false, "point adjustment lowered F1 on case " + std::to_string(trial)};
    }
  }
  return {true, "AUC exact on 500, F1 exact on 500, point adjustment monotone on 1000"};
}

// 7
Outcome representation_separation_criterion() {
  int ok = 0;
  std::string values;
  for (int s = 0; s < kSeeds; ++s) {
    const double sep = cached_run(s, Variant::Full).separation;
    ok += sep >= kSeparationMargin;
    values += (s ? ", " : "") + fmt(sep, 3);
  }
  return {ok >= kRequiredSeeds,
          "within minus cross cosine [" + values + "], " + std::to_string(ok) + "/5 seeds >= " + fmt(kSeparationMargin, 1)};
}

// 8
Outcome end_to_end_detection() {
  int ok = 0;
  std::string values;
  for (int s = 0; s < kSeeds; ++s) {
    const auto& rep = cached_run(s, Variant::Full).result.evaluation.report;
    const double auc = rep.auc.value_or(0.0);
    ok += rep.f1 >= kMinF1 && auc >= kMinAuc;
    values += (s ? ", " : "") + fmt(rep.f1, 3) + "/" + fmt(auc, 3);
  }
  return {ok >= kRequiredSeeds, "F1/AUC [" + values + "], " + std::to_string(ok) + "/5 seeds pass"};
}

// 9
Outcome directional_ablation() {
  int feat = 0, skip = 0;
  std::string values;
  for (int s = 0; s < kSeeds; ++s) {
    const double full = cached_run(s, Variant::Full).result.evaluation.report.f1;
    const double nf = cached_run(s, Variant::NoFeature).result.evaluation.report.f1;
    const double ns = cached_run(s, Variant::NoSkip).result.evaluation.report.f1;
    feat += full >= nf;
    skip += full >= ns;
    values += (s ? "; " : "") + fmt(full, 3) + " vs " + fmt(nf, 3) + " / " + fmt(ns, 3);
  }
  return {feat >= kRequiredSeeds && skip >= kRequiredSeeds,
          "full vs no-feature / no-skip F1 [" + values + "], full >= no-feature in " + std::to_string(feat) +
              "/5, full >= no-skip in " + std::to_string(skip) + "/5"};
}

// 10
Outcome few_shot() {
  int ok = 0;
  double drop = 0.0;
  std::string values;
  for (int s = 0; s < kSeeds; ++s) {
    const double full = cached_run(s, Variant::Full).result.evaluation.report.f1;
    const double few = cached_run(s, Variant::FewShot).result.evaluation.report.f1;
    ok += few >= kMinFewShotF1;
    drop += (full - few) / kSeeds;
    values += (s ? ", " : "") + fmt(few, 3);
  }
  return {ok >= kRequiredSeeds, "20% prefix F1 [" + values + "], " + std::to_string(ok) +
                                    "/5 seeds >= 0.7, mean F1 drop from the full run " + fmt(drop, 4)};
}

int run_cli(const std::string& args, std::string* output) {
  const fs::path log = fs::temp_directory_path() / ("madllm_acceptance_cli_" + std::to_string(::getpid()) + ".txt");
  const std::string cmd = std::string(MADLLM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  if (output) *output = ss.str();
  fs::remove(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 11
Outcome benchmark_hook() {
  const auto shipped = data::DatasetManifest::load(fs::path(MADLLM_DATASETS_DIR) / "smd.json");
  if (shipped.train_rows != 708405u || shipped.test_rows != 708420u || shipped.features != 38 ||
      shipped.subsets.size() != 28) {
    return {false, "shipped SMD manifest does not carry 708405/708420/38 over 28 subsets"};
  }
  const fs::path work = fs::temp_directory_path() / ("madllm_acceptance_smd_" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);
  const char* user_manifest = std::getenv("MADLLM_SMD_MANIFEST");
  std::string manifest_path, extra, what;
  if (user_manifest && *user_manifest) {
    try {
      const auto d = data::load_dataset(data::DatasetManifest::load(user_manifest));
      if (d.train_rows() != 708405u || d.test_rows() != 708420u || d.parts.front().train.cols != 38) {
        return {false, "user SMD files load but do not match 708405/708420/38"};
      }
    } catch (const std::exception& e) {
      return {false, std::string("user SMD files rejected: ") + e.what()};
    }
    manifest_path = user_manifest;
    what = "user-supplied SMD files validated exactly (708405/708420/38)";
  } else {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> noise(0.0, 0.1);
    nlohmann::json subsets = nlohmann::json::array();
    for (const char* name : {"machine-1-1", "machine-1-2"}) {
      for (const char* split : {"train", "test", "test_label"}) fs::create_directories(work / "SMD" / split);
      for (const char* split : {"train", "test"}) {
        TimeSeries s{240, 38, {}};
        for (std::size_t t = 0; t < 240; ++t)
          for (std::size_t j = 0; j < 38; ++j) s.values.push_back(std::sin(0.1 * (j + 1) * t) + noise(rng));
        data::write_csv(work / "SMD" / split / (std::string(name) + ".csv"), s);
      }
      Labels l(240, 0);
      std::fill(l.begin() + 100, l.begin() + 110, 1);
      data::write_labels(work / "SMD" / "test_label" / (std::string(name) + ".csv"), l);
      subsets.push_back({{"name", name},
                         {"train", "SMD/train/" + std::string(name) + ".csv"},
                         {"test", "SMD/test/" + std::string(name) + ".csv"},
                         {"labels", "SMD/test_label/" + std::string(name) + ".csv"}});
    }
    const nlohmann::json m = {{"name", "SMD"},       {"features", 38},    {"train_rows", 480},
                              {"test_rows", 480},    {"subsets", subsets}, {"anomaly_ratio_percent", 4.16}};
    std::ofstream(work / "smd_fixture.json") << m.dump(2);
    manifest_path = (work / "smd_fixture.json").string();
    extra = " --encoder-epochs 1 --epochs 1 --pretrain-steps 20";
    const nlohmann::json tiny = {{"patch_len", 8},
                                 {"patches", 4},
                                 {"backbone", {{"layers", 1}, {"heads", 2}, {"d_model", 16}, {"d_ff", 32}, {"max_seq", 256}}},
                                 {"encoder", {{"blocks", 1}, {"channels", 8}, {"kernel", 3}, {"repr_dim", 8}}}};
    std::ofstream(work / "tiny.json") << tiny.dump(2);
    extra += " --config " + (work / "tiny.json").string();
    what = "SMD files not supplied (set MADLLM_SMD_MANIFEST); shipped manifest counts verified, eval ran on an "
           "SMD-layout fixture";
  }
  std::string output;
  const int code = run_cli("eval --dataset " + manifest_path + " --out " + (work / "out").string() + extra, &output);
  bool emitted = false;
  if (code == 0) {
    std::ifstream in(work / "out" / "report.json");
    const auto report = nlohmann::json::parse(in);
    emitted = report.contains("f1") && report.contains("auc");
  }
  fs::remove_all(work);
  if (code != 0) return {false, "eval exited with " + std::to_string(code) + ": " + output};
  if (!emitted) return {false, "eval report lacks F1 or AUC"};
  std::string metrics_line;
  std::istringstream lines(output);
  for (std::string line; std::getline(lines, line);)
    if (line.find("f1=") != std::string::npos) metrics_line = line;
  return {true, what + "; eval printed: " + metrics_line};
}

// 12
Outcome determinism() {
  std::vector<std::string> mismatches;
  for (Variant v : {Variant::Full, Variant::NoFeature, Variant::NoSkip, Variant::FewShot}) {
    const RunRecord& first = cached_run(0, v);
    const RunRecord again = execute(0, v);
    if (again.report != first.report || again.result.evaluation.scores != first.result.evaluation.scores ||
        again.separation != first.separation) {
      mismatches.push_back(variant_name(v));
    }
  }
  const auto cfg = synthetic_config(0, Variant::Full);
  backbone::PretrainCorpus corpus;
  corpus.features = cfg.synthetic.features;
  corpus.patches = cfg.patches;
  corpus.patch_len = cfg.patch_len;
  corpus.steps = cfg.pretrain_steps;
  corpus.windows = cfg.pretrain_steps;
  const auto fresh = backbone::pretrain_stub(cfg.backbone, cfg.pretrain_seed, corpus);
  const auto cached = pipeline::pretrained_backbone(cfg, cfg.synthetic.features);
  if (!bitwise_equal(fresh.params, cached.params) || !bitwise_equal(fresh.adapters, cached.adapters)) {
    mismatches.push_back("pretraining stub");
  }
  if (!mismatches.empty()) {
    std::string list;
    for (const auto& m : mismatches) list += (list.empty() ? "" : ", ") + m;
    return {false, "reruns differ: " + list};
  }
  return {true, "seed-0 reruns of all four variants and a fresh pretraining stub are bitwise identical"};
}

}  // namespace

int main() {
  set_log_level(LogLevel::Quiet);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"permutation correctness", permutation_correctness},
      {"loss correctness", loss_correctness},
      {"gradient suite", gradient_suite},
      {"freeze contract", freeze_contract},
      {"causality", causality},
      {"metric oracles", metric_oracles},
      {"representation separation", representation_separation_criterion},
      {"end-to-end detection", end_to_end_detection},
      {"directional ablation", directional_ablation},
      {"few-shot mode", few_shot},
      {"benchmark hook", benchmark_hook},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto started = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    failed += !o.pass;
    std::printf("criterion %2zu %-26s %s  %s (%.1fs)\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
