#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "madllm/contrastive.hpp"
#include "madllm/embedding.hpp"
#include "madllm/parameter_store.hpp"
#include "madllm/tensor.hpp"
#include "madllm/tokenizer.hpp"

namespace madllm::backbone {

struct BackboneConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t d_model = 128;
  std::size_t d_ff = 256;
  std::size_t max_seq = 512;

  // Throws ParameterError on zero sizes, odd d_model or d_model % heads != 0.
  void validate() const;
  // Additionally requires tokens <= max_seq.
  void validate(std::size_t tokens) const;
};

// Attention and feed-forward tensors are frozen; everything else trains.
bool is_frozen_name(std::string_view name);
void apply_freeze_mask(ParameterStore& store);

// Parameter names:
//   backbone.layer<l>.ln1.gain/bias, .attn.wq/.wk/.wv/.wo, .attn.bq/.bk/.bv/.bo,
//   backbone.layer<l>.ln2.gain/bias, .ff.w1/.ff.b1/.ff.w2/.ff.b2,
//   backbone.final_ln.gain/bias
// Returned with the freeze mask applied.
ParameterStore init_backbone(const BackboneConfig& cfg, std::uint64_t seed);

// Per layer, per head: [n x n] causal attention weights.
struct AttentionTrace {
  std::vector<std::vector<Tensor>> weights;
};

// Pre-norm causal transformer: [n x d_model] -> [n x d_model].
// Throws ContractError when n exceeds max_seq.
Tensor forward(const Tensor& tokens, const ParameterStore& params, const BackboneConfig& cfg,
               AttentionTrace* trace = nullptr);

// Everything needed to turn a feature-major token series into a reconstruction.
struct ModelConfig {
  BackboneConfig backbone;
  embedding::EmbeddingOptions embedding;
  std::size_t patch_len = 16;
  std::size_t repr_dim = 64;
  // Move each token's content term one row down before the backbone, so the
  // hidden state of row r has seen the codes of r but only the content of
  // rows < r. Off: the backbone reads the token embeddings unchanged.
  bool shifted_content = true;
};

// Multichannel sinusoids with random periods and phases, tiled into windows
// with the same token layout the fine-tuned model uses.
struct PretrainCorpus {
  std::size_t features = 6;
  std::size_t patches = 8;
  std::size_t patch_len = 16;
  std::size_t windows = 1500;  // one fresh window per step at the default step count
  std::size_t eval_windows = 32;  // held out; initial and final loss are measured here
  double noise_std = 0.05;
  bool shifted_content = true;
  std::size_t steps = 1500;
  double lr = 1e-3;
};

struct PretrainResult {
  ParameterStore params;    // backbone.* only, freeze mask applied
  ParameterStore adapters;  // embed.value_proj and head.* trained alongside
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Trains every backbone tensor together with a value projection and head on
// next-token regression over random multi-sinusoid windows, then applies the
// freeze mask. Throws NumericError on divergence.
PretrainResult pretrain_stub(const BackboneConfig& cfg, std::uint64_t seed,
                             const PretrainCorpus& corpus = {});

// Model store = embed.* + backbone.* + head.* (see detector::add_head_params).
// Adapter tensors whose name and shape match replace the fresh ones.
// embed.feature_proj starts at zero, so the model initially computes what
// the pretrained pathway computes and the feature term grows from there.
ParameterStore assemble_model(const ModelConfig& cfg, ParameterStore backbone_params, std::uint64_t seed,
                              const ParameterStore* adapters = nullptr);

// Backbone input for one window: content (shifted when configured) plus codes.
Tensor backbone_input(const embedding::TokenTerms& terms, const ModelConfig& cfg);

// Token embedding -> backbone -> head. Output [P*M x L] in time-major order.
// `reprs` are the encoder representations (see embedding::feature_representations).
Tensor reconstruct_series(const TokenSeries& feature_major, const Tensor& reprs,
                          const ParameterStore& model, const ModelConfig& cfg);

struct FinetuneOptions {
  std::size_t epochs = 5;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;
  std::size_t max_windows_per_epoch = 0;  // 0 = every window
};

struct FinetuneResult {
  ParameterStore params;
  std::vector<double> epoch_losses;  // mean reconstruction MSE per epoch
  std::vector<double> step_losses;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(std::size_t epoch, const ParameterStore&)>;

// Reconstruction-MSE fine-tuning of the non-frozen tensors. The encoder is
// only read. Frozen tensors are verified bitwise unchanged on exit.
FinetuneResult finetune(ParameterStore model, std::span<const TokenSeries> windows,
                        const ParameterStore& encoder, const contrastive::EncoderConfig& encoder_cfg,
                        const ModelConfig& cfg, const FinetuneOptions& options,
                        const EpochCallback& on_epoch = {});

}  // namespace madllm::backbone
