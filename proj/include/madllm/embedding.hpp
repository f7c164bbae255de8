#pragma once

#include <cstddef>
#include <vector>

#include "madllm/contrastive.hpp"
#include "madllm/parameter_store.hpp"
#include "madllm/random.hpp"
#include "madllm/tokenizer.hpp"

namespace madllm::embedding {

// Two sinusoidal families so the patch-order and skip-order codes are not
// copies of each other:
//   PatchOrder: angle_k = pos / 10000^(2k/d)
//   SkipOrder:  angle_k = pos / 1000^((2k+1)/d)
// Coordinates 2k and 2k+1 hold sin(angle_k) and cos(angle_k).
enum class PositionFamily { PatchOrder, SkipOrder };

// Throws ParameterError if d_model is zero or odd.
std::vector<double> positional_code(std::size_t position, std::size_t d_model,
                                    PositionFamily family = PositionFamily::PatchOrder);

// Which additive terms enter the token embedding. The value projection and
// the patch-order code are always present.
struct EmbeddingOptions {
  bool skip_term = true;
  bool feature_term = true;
};

// Adds embed.value_proj [L x d] and embed.feature_proj [repr x d], both trainable, no bias.
void add_embedding_params(ParameterStore& store, std::size_t patch_len, std::size_t repr_dim,
                          std::size_t d_model, Rng& rng);

// [n x L] patch values -> [n x d].
Tensor value_projection(const Tensor& patch_values, const Tensor& projection);
std::vector<double> value_projection(const Patch& patch, const Tensor& projection);

// Token vectors in time-major order: row i*M + j is patch (feature j, index i).
struct EmbeddingSequence {
  Tensor vectors;  // [P*M x d]
  std::vector<contrastive::PatchId> provenance;
  std::size_t features = 0;
  std::size_t patches_per_feature = 0;
};

// Encoder representations of every patch of a feature-major series, in
// time-major row order, without gradient tracking: [P*M x repr].
Tensor feature_representations(const TokenSeries& feature_major, const ParameterStore& encoder,
                               const contrastive::EncoderConfig& encoder_cfg);

// The two halves of a token embedding, both [P*M x d] in time-major order:
// content = value_proj(s) + feature_proj(repr(s)), codes = both positional codes.
struct TokenTerms {
  Tensor content;
  Tensor codes;
  std::vector<contrastive::PatchId> provenance;
  std::size_t features = 0;
  std::size_t patches_per_feature = 0;
};

TokenTerms token_terms(const TokenSeries& feature_major, const Tensor& reprs, const ParameterStore& model,
                       const EmbeddingOptions& options);

// token(j, i) = value_proj(s) + code_A((j)*P + i) + code_B(i*M + j) + feature_proj(repr(s))
// with code_B and the feature term dropped when switched off. `reprs` is
// the output of feature_representations() and may be empty when the feature
// term is off.
EmbeddingSequence compose_token_embeddings(const TokenSeries& feature_major, const Tensor& reprs,
                                           const ParameterStore& model, const EmbeddingOptions& options);

EmbeddingSequence compose_token_embeddings(const TokenSeries& feature_major,
                                           const ParameterStore& encoder,
                                           const contrastive::EncoderConfig& encoder_cfg,
                                           const ParameterStore& model, const EmbeddingOptions& options);

}  // namespace madllm::embedding
