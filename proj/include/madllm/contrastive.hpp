#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "madllm/parameter_store.hpp"
#include "madllm/tensor.hpp"
#include "madllm/tokenizer.hpp"

namespace madllm::contrastive {

// Dilated causal convolution encoder. Block k uses dilation 2^k; the first
// block lifts the single input channel to `channels`, later blocks add a
// residual connection.
struct EncoderConfig {
  std::size_t blocks = 3;
  std::size_t channels = 32;
  std::size_t kernel = 3;
  std::size_t repr_dim = 64;

  std::vector<int> dilations() const;
  std::size_t receptive_field() const;
  // Throws ParameterError on zero sizes. Warns (once per call) when the
  // receptive field is shorter than patch_len.
  void validate(std::size_t patch_len) const;
};

inline constexpr double kEncoderLeakySlope = 0.01;

// Parameter names: encoder.block<k>.weight/bias, encoder.head.weight/bias.
ParameterStore init_encoder(const EncoderConfig& cfg, std::uint64_t seed);

// [B x L] patch values -> [B x channels x L] activations after the last block.
Tensor encoder_feature_map(const Tensor& patches, const ParameterStore& params,
                           const EncoderConfig& cfg);
// [B x L] -> [B x repr_dim]: feature map, max-pool over time, linear head.
Tensor encode_batch(const Tensor& patches, const ParameterStore& params, const EncoderConfig& cfg);
// Single patch, no gradient tracking. Throws ContractError when the patch
// length differs from expected_len.
std::vector<double> encode_patch(const Patch& patch, std::size_t expected_len,
                                 const ParameterStore& params, const EncoderConfig& cfg);

// u.v / (|u| |v|). Throws DegenerateVectorError if either norm is zero.
double cosine_similarity(std::span<const double> u, std::span<const double> v);
Tensor cosine_similarity(const Tensor& u, const Tensor& v);

struct PatchId {
  std::size_t feature = 0;
  std::size_t index = 0;
  bool operator==(const PatchId&) const = default;
};

struct Triplet {
  PatchId anchor;
  PatchId positive;                // same feature, different index
  std::vector<PatchId> negatives;  // each from a feature other than the anchor's
};

struct TripletBatch {
  std::vector<Triplet> triplets;  // one per feature, in feature order
  bool with_replacement = false;  // negatives > M-1 forced sampling features with replacement
};

// Throws InsufficientDataError when P < 2 or M < 2, ParameterError when
// negatives == 0. Negative features are distinct while negatives <= M-1.
TripletBatch sample_triplets(const TokenSeries& series, std::size_t negatives, std::mt19937_64& rng);

// -log( e^{f+} / (e^{f+} + sum_j e^{f-_j}) ) computed from similarities.
Tensor info_nce(const Tensor& positive_similarity, std::span<const Tensor> negative_similarities);
// info_nce over cosine similarities of representation vectors.
Tensor triplet_loss(const Tensor& anchor, const Tensor& positive, std::span<const Tensor> negatives);

// Mean of the per-feature triplet losses for one token series. Encodes every
// sampled patch in a single batch.
Tensor epoch_loss(const TokenSeries& series, const ParameterStore& params, const EncoderConfig& cfg,
                  std::size_t negatives, std::mt19937_64& rng, TripletBatch* sampled = nullptr);

struct EncoderTrainingOptions {
  std::size_t negatives = 4;
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;
  std::size_t max_windows_per_epoch = 0;  // 0 = every window
};

struct EncoderTrainingResult {
  ParameterStore params;
  std::vector<double> epoch_losses;  // mean loss per epoch
  bool used_replacement_sampling = false;
};

// Trains a freshly initialized encoder (seeded by options.seed) on the given
// token series. Only encoder parameters are read or written.
EncoderTrainingResult train_encoder(std::span<const TokenSeries> windows, const EncoderConfig& cfg,
                                    const EncoderTrainingOptions& options);

// Same, continuing from existing parameters.
EncoderTrainingResult train_encoder(std::span<const TokenSeries> windows, const EncoderConfig& cfg,
                                    const EncoderTrainingOptions& options, ParameterStore initial);

}  // namespace madllm::contrastive
