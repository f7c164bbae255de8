#include "madllm/embedding.hpp"

#include <cmath>
#include <string>

#include "madllm/errors.hpp"
#include "madllm/ops.hpp"

namespace madllm::embedding {

std::vector<double> positional_code(std::size_t position, std::size_t d_model, PositionFamily family) {
  if (d_model == 0 || d_model % 2 != 0) throw ParameterError("d_model must be positive and even");
  std::vector<double> code(d_model);
  const double pos = static_cast<double>(position);
  const double d = static_cast<double>(d_model);
  for (std::size_t k = 0; k < d_model / 2; ++k) {
    const double kk = static_cast<double>(k);
    const double angle = family == PositionFamily::PatchOrder
                             ? pos / std::pow(10000.0, 2.0 * kk / d)
                             : pos / std::pow(1000.0, (2.0 * kk + 1.0) / d);
    code[2 * k] = std::sin(angle);
    code[2 * k + 1] = std::cos(angle);
  }
  return code;
}

void add_embedding_params(ParameterStore& store, std::size_t patch_len, std::size_t repr_dim,
                          std::size_t d_model, Rng& rng) {
  store.add("embed.value_proj",
            normal_tensor({patch_len, d_model}, 1.0 / std::sqrt(static_cast<double>(patch_len)), rng));
  store.add("embed.feature_proj",
            normal_tensor({repr_dim, d_model}, 1.0 / std::sqrt(static_cast<double>(repr_dim)), rng));
}

Tensor value_projection(const Tensor& patch_values, const Tensor& projection) {
  return ops::matmul(patch_values, projection);
}

std::vector<double> value_projection(const Patch& patch, const Tensor& projection) {
  NoGradGuard no_grad;
  return ops::matmul(Tensor::matrix(1, patch.values.size(), patch.values), projection).to_vector();
}

namespace {

Tensor time_major_values(const TokenSeries& time_major) {
  const std::size_t n = time_major.size(), len = time_major.patch_len;
  std::vector<double> values;
  values.reserve(n * len);
  for (const Patch& p : time_major.patches) values.insert(values.end(), p.values.begin(), p.values.end());
  return Tensor::matrix(n, len, std::move(values));
}

}  // namespace

Tensor feature_representations(const TokenSeries& feature_major, const ParameterStore& encoder,
                               const contrastive::EncoderConfig& encoder_cfg) {
  NoGradGuard no_grad;
  const TokenSeries tm = skip_reorder(feature_major);
  return contrastive::encode_batch(time_major_values(tm), encoder, encoder_cfg);
}

TokenTerms token_terms(const TokenSeries& feature_major, const Tensor& reprs, const ParameterStore& model,
                       const EmbeddingOptions& options) {
  const TokenSeries tm = skip_reorder(feature_major);
  const std::size_t n = tm.size();
  const std::size_t m = tm.features, p = tm.patches_per_feature;
  const Tensor& value_proj = model.get("embed.value_proj");
  if (value_proj.dim(0) != tm.patch_len) {
    throw DimensionError("embed.value_proj expects patches of " + std::to_string(value_proj.dim(0)) +
                         ", got " + std::to_string(tm.patch_len));
  }
  const std::size_t d = value_proj.dim(1);

  TokenTerms terms;
  terms.features = m;
  terms.patches_per_feature = p;
  terms.provenance.reserve(n);

  std::vector<double> codes(n * d, 0.0);
  for (std::size_t row = 0; row < n; ++row) {
    const Patch& patch = tm.patches[row];
    terms.provenance.push_back({patch.feature, patch.index});
    const auto a = positional_code(feature_major_position(patch.feature, patch.index, p), d,
                                   PositionFamily::PatchOrder);
    for (std::size_t c = 0; c < d; ++c) codes[row * d + c] = a[c];
    if (options.skip_term) {
      const auto b = positional_code(time_major_position(patch.feature, patch.index, m), d,
                                     PositionFamily::SkipOrder);
      for (std::size_t c = 0; c < d; ++c) codes[row * d + c] += b[c];
    }
  }
  terms.codes = Tensor::matrix(n, d, std::move(codes));

  terms.content = value_projection(time_major_values(tm), value_proj);
  if (options.feature_term) {
    if (!reprs.valid() || reprs.rank() != 2 || reprs.dim(0) != n) {
      throw DimensionError("feature representations must be [" + std::to_string(n) + " x repr]");
    }
    terms.content = ops::add(terms.content, ops::matmul(reprs, model.get("embed.feature_proj")));
  }
  return terms;
}

EmbeddingSequence compose_token_embeddings(const TokenSeries& feature_major, const Tensor& reprs,
                                           const ParameterStore& model, const EmbeddingOptions& options) {
  TokenTerms terms = token_terms(feature_major, reprs, model, options);
  EmbeddingSequence seq;
  seq.vectors = ops::add(terms.content, terms.codes);
  seq.provenance = std::move(terms.provenance);
  seq.features = terms.features;
  seq.patches_per_feature = terms.patches_per_feature;
  return seq;
}

EmbeddingSequence compose_token_embeddings(const TokenSeries& feature_major,
                                           const ParameterStore& encoder,
                                           const contrastive::EncoderConfig& encoder_cfg,
                                           const ParameterStore& model, const EmbeddingOptions& options) {
  Tensor reprs;
  if (options.feature_term) reprs = feature_representations(feature_major, encoder, encoder_cfg);
  return compose_token_embeddings(feature_major, reprs, model, options);
}

}  // namespace madllm::embedding
