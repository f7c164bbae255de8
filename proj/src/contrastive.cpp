#include "madllm/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "madllm/errors.hpp"
#include "madllm/log.hpp"
#include "madllm/ops.hpp"
#include "madllm/optim.hpp"
#include "madllm/random.hpp"

namespace madllm::contrastive {

namespace {

std::string block_name(std::size_t k, const char* what) {
  return "encoder.block" + std::to_string(k) + "." + what;
}

}  // namespace

std::vector<int> EncoderConfig::dilations() const {
  std::vector<int> d(blocks);
  for (std::size_t k = 0; k < blocks; ++k) d[k] = 1 << k;
  return d;
}

std::size_t EncoderConfig::receptive_field() const {
  std::size_t total = 0;
  for (int d : dilations()) total += static_cast<std::size_t>(d);
  return 1 + (kernel - 1) * total;
}

void EncoderConfig::validate(std::size_t patch_len) const {
  if (blocks == 0 || channels == 0 || kernel == 0 || repr_dim == 0) {
    throw ParameterError("encoder blocks, channels, kernel and repr_dim must be positive");
  }
  if (blocks > 16) throw ParameterError("encoder supports at most 16 blocks");
  if (receptive_field() < patch_len) {
    log_warning("encoder receptive field " + std::to_string(receptive_field()) +
                " is shorter than patch length " + std::to_string(patch_len));
  }
}

ParameterStore init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate(0);
  Rng rng(derive_seed(seed, 0xE1C0DE));
  ParameterStore store;
  std::size_t cin = 1;
  for (std::size_t k = 0; k < cfg.blocks; ++k) {
    const double he = std::sqrt(2.0 / static_cast<double>(cin * cfg.kernel));
    store.add(block_name(k, "weight"), normal_tensor({cfg.channels, cin, cfg.kernel}, he, rng));
    store.add(block_name(k, "bias"), Tensor::zeros({cfg.channels}));
    cin = cfg.channels;
  }
  store.add("encoder.head.weight",
            normal_tensor({cfg.channels, cfg.repr_dim}, 1.0 / std::sqrt(static_cast<double>(cfg.channels)), rng));
  store.add("encoder.head.bias", Tensor::zeros({cfg.repr_dim}));
  return store;
}

Tensor encoder_feature_map(const Tensor& patches, const ParameterStore& params,
                           const EncoderConfig& cfg) {
  if (patches.rank() != 2) {
    throw DimensionError("encoder expects [B x L] patches, got " + shape_str(patches.shape()));
  }
  Tensor h = ops::reshape(patches, {patches.dim(0), 1, patches.dim(1)});
  const auto dil = cfg.dilations();
  for (std::size_t k = 0; k < cfg.blocks; ++k) {
    Tensor z = ops::conv1d_causal(h, params.get(block_name(k, "weight")),
                                  params.get(block_name(k, "bias")), dil[k]);
    z = ops::leaky_relu(z, kEncoderLeakySlope);
    h = (k == 0) ? z : ops::add(z, h);
  }
  return h;
}

Tensor encode_batch(const Tensor& patches, const ParameterStore& params, const EncoderConfig& cfg) {
  Tensor pooled = ops::max_pool_over_time(encoder_feature_map(patches, params, cfg));
  Tensor repr = ops::matmul(pooled, params.get("encoder.head.weight"));
  return ops::add(repr, params.get("encoder.head.bias"));
}

std::vector<double> encode_patch(const Patch& patch, std::size_t expected_len,
                                 const ParameterStore& params, const EncoderConfig& cfg) {
  if (patch.values.size() != expected_len) {
    throw ContractError("patch has " + std::to_string(patch.values.size()) + " values, expected " +
                        std::to_string(expected_len));
  }
  NoGradGuard no_grad;
  Tensor batch = Tensor::matrix(1, expected_len, patch.values);
  return encode_batch(batch, params, cfg).to_vector();
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionError("cosine_similarity: length mismatch");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw DegenerateVectorError("cosine_similarity of a zero-norm vector");
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
  if (u.rank() != 1) throw DimensionError("cosine_similarity expects vectors");
  Tensor nu = ops::l2_norm(u);
  Tensor nv = ops::l2_norm(v);
  if (nu.item() == 0.0 || nv.item() == 0.0) {
    throw DegenerateVectorError("cosine_similarity of a zero-norm vector");
  }
  return ops::div(ops::dot(u, v), ops::mul(nu, nv));
}

TripletBatch sample_triplets(const TokenSeries& series, std::size_t negatives, std::mt19937_64& rng) {
  const std::size_t m = series.features;
  const std::size_t p = series.patches_per_feature;
  if (p < 2) throw InsufficientDataError("triplet sampling needs at least 2 patches per feature");
  if (m < 2) throw InsufficientDataError("triplet sampling needs at least 2 features");
  if (negatives == 0) throw ParameterError("number of negatives must be at least 1");

  TripletBatch batch;
  batch.with_replacement = negatives > m - 1;
  std::vector<std::size_t> others(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    Triplet t;
    t.anchor = {i, uniform_index(p, rng)};
    std::size_t q = uniform_index(p - 1, rng);
    if (q >= t.anchor.index) ++q;
    t.positive = {i, q};

    std::size_t fill = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) others[fill++] = j;
    }
    t.negatives.reserve(negatives);
    if (!batch.with_replacement) {
      // partial Fisher-Yates: the first `negatives` slots become a uniform sample without replacement
      for (std::size_t k = 0; k < negatives; ++k) {
        const std::size_t pick = k + uniform_index(others.size() - k, rng);
        std::swap(others[k], others[pick]);
        t.negatives.push_back({others[k], uniform_index(p, rng)});
      }
    } else {
      for (std::size_t k = 0; k < negatives; ++k) {
        t.negatives.push_back({others[uniform_index(others.size(), rng)], uniform_index(p, rng)});
      }
    }
    batch.triplets.push_back(std::move(t));
  }
  return batch;
}

Tensor info_nce(const Tensor& positive_similarity, std::span<const Tensor> negative_similarities) {
  std::vector<Tensor> logits;
  logits.reserve(negative_similarities.size() + 1);
  logits.push_back(positive_similarity);
  logits.insert(logits.end(), negative_similarities.begin(), negative_similarities.end());
  return ops::sub(ops::logsumexp(ops::stack(logits)), positive_similarity);
}

Tensor triplet_loss(const Tensor& anchor, const Tensor& positive, std::span<const Tensor> negatives) {
  Tensor pos = cosine_similarity(anchor, positive);
  std::vector<Tensor> neg;
  neg.reserve(negatives.size());
  for (const Tensor& n : negatives) neg.push_back(cosine_similarity(anchor, n));
  return info_nce(pos, neg);
}

Tensor epoch_loss(const TokenSeries& series, const ParameterStore& params, const EncoderConfig& cfg,
                  std::size_t negatives, std::mt19937_64& rng, TripletBatch* sampled) {
  TripletBatch batch = sample_triplets(series, negatives, rng);
  const std::size_t per = 2 + negatives;
  const std::size_t len = series.patch_len;
  std::vector<double> values;
  values.reserve(batch.triplets.size() * per * len);
  auto push = [&](const PatchId& id) {
    const Patch& p = series.patch(id.feature, id.index);
    if (p.values.size() != len) throw ContractError("patch length differs from token series patch_len");
    values.insert(values.end(), p.values.begin(), p.values.end());
  };
  for (const Triplet& t : batch.triplets) {
    push(t.anchor);
    push(t.positive);
    for (const PatchId& n : t.negatives) push(n);
  }
  const std::size_t rows = batch.triplets.size() * per;
  Tensor reprs = encode_batch(Tensor::matrix(rows, len, std::move(values)), params, cfg);

  std::vector<Tensor> losses;
  losses.reserve(batch.triplets.size());
  for (std::size_t f = 0; f < batch.triplets.size(); ++f) {
    const std::size_t base = f * per;
    std::vector<Tensor> neg;
    neg.reserve(negatives);
    for (std::size_t k = 0; k < negatives; ++k) neg.push_back(ops::select(reprs, base + 2 + k));
    losses.push_back(triplet_loss(ops::select(reprs, base), ops::select(reprs, base + 1), neg));
  }
  if (sampled) *sampled = std::move(batch);
  return ops::mean(ops::stack(losses));
}

EncoderTrainingResult train_encoder(std::span<const TokenSeries> windows, const EncoderConfig& cfg,
                                    const EncoderTrainingOptions& options) {
  return train_encoder(windows, cfg, options, init_encoder(cfg, options.seed));
}

EncoderTrainingResult train_encoder(std::span<const TokenSeries> windows, const EncoderConfig& cfg,
                                    const EncoderTrainingOptions& options, ParameterStore initial) {
  if (windows.empty()) throw InsufficientDataError("encoder training needs at least one window");
  cfg.validate(windows.front().patch_len);
  EncoderTrainingResult result;
  result.params = std::move(initial);
  if (options.epochs == 0) return result;

  Rng rng(derive_seed(options.seed, 0x7219));
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
      TapeScope scope;
      TripletBatch batch;
      try {
        Tensor loss = epoch_loss(windows[order[s]], result.params, cfg, options.negatives, rng, &batch);
        total += loss.item();
        backward(loss);
        clip_grad_norm(result.params, options.clip_norm);
        adam.step(result.params);
      } catch (const NumericError& e) {
        throw NumericError("encoder training diverged at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(s) + ": " + e.what());
      }
      result.params.zero_grad();
      if (batch.with_replacement && !result.used_replacement_sampling) {
        log_warning("requested " + std::to_string(options.negatives) + " negatives but only " +
                    std::to_string(windows.front().features - 1) +
                    " other features exist; sampling negative features with replacement");
        result.used_replacement_sampling = true;
      }
    }
    result.epoch_losses.push_back(total / static_cast<double>(per_epoch));
  }
  return result;
}

}  // namespace madllm::contrastive
