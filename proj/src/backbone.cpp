#include "madllm/backbone.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "madllm/detector.hpp"
#include "madllm/errors.hpp"
#include "madllm/log.hpp"
#include "madllm/ops.hpp"
#include "madllm/optim.hpp"
#include "madllm/random.hpp"

namespace madllm::backbone {

namespace {

std::string layer_name(std::size_t l, const char* what) {
  return "backbone.layer" + std::to_string(l) + "." + what;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ops::add(ops::matmul(x, w), b);
}

Tensor attention(const Tensor& x, const ParameterStore& p, std::size_t l, const BackboneConfig& cfg,
                 std::vector<Tensor>* trace) {
  const Tensor q = linear(x, p.get(layer_name(l, "attn.wq")), p.get(layer_name(l, "attn.bq")));
  const Tensor k = linear(x, p.get(layer_name(l, "attn.wk")), p.get(layer_name(l, "attn.bk")));
  const Tensor v = linear(x, p.get(layer_name(l, "attn.wv")), p.get(layer_name(l, "attn.bv")));
  const std::size_t dh = cfg.d_model / cfg.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::size_t b = h * dh, e = b + dh;
    Tensor scores = ops::scale(ops::matmul(ops::slice_cols(q, b, e), ops::transpose(ops::slice_cols(k, b, e))),
                               inv_sqrt);
    Tensor weights = ops::causal_softmax(scores);
    if (trace) trace->push_back(weights.detach());
    heads.push_back(ops::matmul(weights, ops::slice_cols(v, b, e)));
  }
  return linear(ops::concat_cols(heads), p.get(layer_name(l, "attn.wo")), p.get(layer_name(l, "attn.bo")));
}

Tensor feed_forward(const Tensor& x, const ParameterStore& p, std::size_t l) {
  Tensor h = ops::gelu(linear(x, p.get(layer_name(l, "ff.w1")), p.get(layer_name(l, "ff.b1"))));
  return linear(h, p.get(layer_name(l, "ff.w2")), p.get(layer_name(l, "ff.b2")));
}

Tensor time_major_targets(const TokenSeries& feature_major) {
  const TokenSeries tm = skip_reorder(feature_major);
  std::vector<double> values;
  values.reserve(tm.size() * tm.patch_len);
  for (const Patch& p : tm.patches) values.insert(values.end(), p.values.begin(), p.values.end());
  return Tensor::matrix(tm.size(), tm.patch_len, std::move(values));
}

}  // namespace

void BackboneConfig::validate() const {
  if (layers == 0 || heads == 0 || d_model == 0 || d_ff == 0 || max_seq == 0) {
    throw ParameterError("backbone layers, heads, d_model, d_ff and max_seq must be positive");
  }
  if (d_model % 2 != 0) throw ParameterError("d_model must be even");
  if (d_model % heads != 0) {
    throw ParameterError("d_model " + std::to_string(d_model) + " is not divisible by " +
                         std::to_string(heads) + " heads");
  }
}

void BackboneConfig::validate(std::size_t tokens) const {
  validate();
  if (tokens > max_seq) {
    throw ContractError("sequence of " + std::to_string(tokens) + " tokens exceeds max_seq " +
                        std::to_string(max_seq));
  }
}

bool is_frozen_name(std::string_view name) {
  return name.starts_with("backbone.") &&
         (name.find(".attn.") != std::string_view::npos || name.find(".ff.") != std::string_view::npos);
}

void apply_freeze_mask(ParameterStore& store) {
  for (const auto& e : store.entries()) store.set_frozen(e.name, is_frozen_name(e.name));
}

ParameterStore init_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0xB0B));
  const std::size_t d = cfg.d_model;
  const double std_in = 0.02;
  const double std_out = 0.02 / std::sqrt(2.0 * static_cast<double>(std::max<std::size_t>(cfg.layers, 1)));
  ParameterStore store;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    store.add(layer_name(l, "ln1.gain"), Tensor::constant({d}, 1.0));
    store.add(layer_name(l, "ln1.bias"), Tensor::zeros({d}));
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv"}) store.add(layer_name(l, w), normal_tensor({d, d}, std_in, rng));
    store.add(layer_name(l, "attn.wo"), normal_tensor({d, d}, std_out, rng));
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) store.add(layer_name(l, b), Tensor::zeros({d}));
    store.add(layer_name(l, "ln2.gain"), Tensor::constant({d}, 1.0));
    store.add(layer_name(l, "ln2.bias"), Tensor::zeros({d}));
    store.add(layer_name(l, "ff.w1"), normal_tensor({d, cfg.d_ff}, std_in, rng));
    store.add(layer_name(l, "ff.b1"), Tensor::zeros({cfg.d_ff}));
    store.add(layer_name(l, "ff.w2"), normal_tensor({cfg.d_ff, d}, std_out, rng));
    store.add(layer_name(l, "ff.b2"), Tensor::zeros({d}));
  }
  store.add("backbone.final_ln.gain", Tensor::constant({d}, 1.0));
  store.add("backbone.final_ln.bias", Tensor::zeros({d}));
  apply_freeze_mask(store);
  return store;
}

Tensor forward(const Tensor& tokens, const ParameterStore& params, const BackboneConfig& cfg,
               AttentionTrace* trace) {
  if (tokens.rank() != 2 || tokens.dim(1) != cfg.d_model) {
    throw DimensionError("backbone expects [n x " + std::to_string(cfg.d_model) + "] tokens, got " +
                         shape_str(tokens.shape()));
  }
  cfg.validate(tokens.dim(0));
  if (trace) trace->weights.assign(cfg.layers, {});
  Tensor x = tokens;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Tensor a = ops::layer_norm(x, params.get(layer_name(l, "ln1.gain")), params.get(layer_name(l, "ln1.bias")));
    x = ops::add(x, attention(a, params, l, cfg, trace ? &trace->weights[l] : nullptr));
    Tensor b = ops::layer_norm(x, params.get(layer_name(l, "ln2.gain")), params.get(layer_name(l, "ln2.bias")));
    x = ops::add(x, feed_forward(b, params, l));
  }
  return ops::layer_norm(x, params.get("backbone.final_ln.gain"), params.get("backbone.final_ln.bias"));
}

PretrainResult pretrain_stub(const BackboneConfig& cfg, std::uint64_t seed, const PretrainCorpus& corpus) {
  if (corpus.features == 0 || corpus.patches == 0 || corpus.patch_len == 0 || corpus.windows == 0) {
    throw ParameterError("pretraining corpus needs positive features, patches, patch_len and windows");
  }
  cfg.validate(corpus.features * corpus.patches);
  Rng rng(derive_seed(seed, 0x57AB));
  const std::size_t m = corpus.features, t_len = corpus.patches * corpus.patch_len;

  std::normal_distribution<double> noise(0.0, 1.0);
  auto make_window = [&](Rng& r) {
    SeriesWindow win;
    win.timestamps = t_len;
    win.features = m;
    win.values.resize(t_len * m);
    for (std::size_t j = 0; j < m; ++j) {
      const double period = std::exp(uniform_real(std::log(8.0), std::log(128.0), r));
      const double phase = uniform_real(0.0, 2.0 * M_PI, r);
      const double amp = uniform_real(0.5, 1.5, r);
      for (std::size_t t = 0; t < t_len; ++t) {
        win.values[t * m + j] = amp * std::sin(2.0 * M_PI * static_cast<double>(t) / period + phase) +
                                corpus.noise_std * noise(r);
      }
    }
    return patchify(win, corpus.patch_len);
  };
  std::vector<TokenSeries> windows, held_out;
  windows.reserve(corpus.windows);
  for (std::size_t w = 0; w < corpus.windows; ++w) windows.push_back(make_window(rng));
  Rng eval_rng(derive_seed(seed, 0xE7A1));
  for (std::size_t w = 0; w < corpus.eval_windows; ++w) held_out.push_back(make_window(eval_rng));

  ModelConfig mc;
  mc.backbone = cfg;
  mc.embedding.feature_term = false;
  mc.patch_len = corpus.patch_len;
  mc.shifted_content = corpus.shifted_content;

  ParameterStore params = init_backbone(cfg, seed);
  params.set_all_frozen(false);
  ParameterStore all;
  all.add("embed.value_proj",
          normal_tensor({corpus.patch_len, cfg.d_model}, 1.0 / std::sqrt(static_cast<double>(corpus.patch_len)), rng));
  all.merge(params);
  detector::add_head_params(all, cfg.d_model, corpus.patch_len, rng);

  const Tensor no_reprs;
  auto loss_on = [&](const TokenSeries& w) {
    return ops::mse(reconstruct_series(w, no_reprs, all, mc), time_major_targets(w));
  };
  const auto& eval_set = held_out.empty() ? windows : held_out;
  auto corpus_loss = [&] {
    NoGradGuard no_grad;
    double total = 0.0;
    for (const auto& w : eval_set) total += loss_on(w).item();
    return total / static_cast<double>(eval_set.size());
  };

  PretrainResult result;
  result.initial_loss = corpus_loss();
  Adam adam(Adam::Options{.lr = corpus.lr});
  for (std::size_t step = 0; step < corpus.steps; ++step) {
    TapeScope scope;
    try {
      backward(loss_on(windows[step % windows.size()]));
      clip_grad_norm(all, 1.0);
      adam.step(all);
    } catch (const NumericError& e) {
      throw NumericError("backbone pretraining diverged at step " + std::to_string(step) + ": " + e.what());
    }
    all.zero_grad();
  }
  result.final_loss = corpus_loss();
  apply_freeze_mask(params);
  result.params = std::move(params);
  for (const auto& e : all.entries())
    if (!e.name.starts_with("backbone.")) result.adapters.add(e.name, e.value.detach());
  return result;
}

ParameterStore assemble_model(const ModelConfig& cfg, ParameterStore backbone_params, std::uint64_t seed,
                              const ParameterStore* adapters) {
  cfg.backbone.validate();
  Rng rng(derive_seed(seed, 0xE3B));
  ParameterStore model;
  embedding::add_embedding_params(model, cfg.patch_len, cfg.repr_dim, cfg.backbone.d_model, rng);
  model.merge(backbone_params.clone());
  detector::add_head_params(model, cfg.backbone.d_model, cfg.patch_len, rng);
  for (double& v : model.get("embed.feature_proj").mutable_data()) v = 0.0;
  if (adapters) {
    for (const auto& e : adapters->entries()) {
      if (!model.contains(e.name) || model.get(e.name).shape() != e.value.shape()) continue;
      const auto src = e.value.data();
      auto dst = model.get(e.name).mutable_data();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  apply_freeze_mask(model);
  return model;
}

Tensor backbone_input(const embedding::TokenTerms& terms, const ModelConfig& cfg) {
  if (!cfg.shifted_content) return ops::add(terms.content, terms.codes);
  const std::size_t n = terms.content.dim(0), d = terms.content.dim(1);
  const Tensor parts[] = {Tensor::zeros({1, d}), ops::slice_rows(terms.content, 0, n - 1)};
  return ops::add(ops::concat_rows(parts), terms.codes);
}

Tensor reconstruct_series(const TokenSeries& feature_major, const Tensor& reprs,
                          const ParameterStore& model, const ModelConfig& cfg) {
  const auto terms = embedding::token_terms(feature_major, reprs, model, cfg.embedding);
  return detector::reconstruct(forward(backbone_input(terms, cfg), model, cfg.backbone), model);
}

FinetuneResult finetune(ParameterStore model, std::span<const TokenSeries> windows,
                        const ParameterStore& encoder, const contrastive::EncoderConfig& encoder_cfg,
                        const ModelConfig& cfg, const FinetuneOptions& options, const EpochCallback& on_epoch) {
  const auto started = std::chrono::steady_clock::now();
  FinetuneResult result;
  result.params = model.clone();
  if (options.epochs == 0) return result;
  if (windows.empty()) throw InsufficientDataError("fine-tuning needs at least one window");
  for (const TokenSeries& w : windows) cfg.backbone.validate(w.size());

  const std::uint64_t frozen_before = result.params.frozen_digest();

  std::vector<Tensor> reprs(windows.size()), targets(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    if (cfg.embedding.feature_term) reprs[w] = embedding::feature_representations(windows[w], encoder, encoder_cfg);
    targets[w] = time_major_targets(windows[w]);
  }

  Rng rng(derive_seed(options.seed, 0xF17E));
  Adam adam(Adam::Options{.lr = options.lr});
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t per_epoch = options.max_windows_per_epoch == 0
                                    ? windows.size()
                                    : std::min(options.max_windows_per_epoch, windows.size());

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t s = 0; s < per_epoch; ++s) {
      const std::size_t w = order[s];
      TapeScope scope;
      try {
        Tensor loss = ops::mse(reconstruct_series(windows[w], reprs[w], result.params, cfg), targets[w]);
        result.step_losses.push_back(loss.item());
        total += loss.item();
        backward(loss);
        clip_grad_norm(result.params, options.clip_norm);
        adam.step(result.params);
      } catch (const NumericError& e) {
        throw NumericError("fine-tuning diverged at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(s) + ": " + e.what());
      }
      result.params.zero_grad();
    }
    result.epoch_losses.push_back(total / static_cast<double>(per_epoch));
    log_info("fine-tune epoch " + std::to_string(epoch) + " loss " + std::to_string(result.epoch_losses.back()));
    if (on_epoch) on_epoch(epoch, result.params);
  }

  if (result.params.frozen_digest() != frozen_before) {
    throw ContractError("frozen tensors changed during fine-tuning");
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace madllm::backbone
