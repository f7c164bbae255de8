#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "madllm/backbone.hpp"
#include "madllm/contrastive.hpp"
#include "madllm/detector.hpp"
#include "madllm/embedding.hpp"
#include "madllm/ops.hpp"
#include "madllm/parameter_store.hpp"
#include "madllm/random.hpp"
#include "madllm/tokenizer.hpp"
#include "oracles.hpp"

namespace madllm::testing {

struct GradientCase {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Tensor(const std::vector<Tensor>&)> f;
};

// Weighted sum with fixed random weights, so every output element carries a
// distinct upstream gradient.
inline Tensor probe(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ops::sum(ops::mul(y, random_tensor(y.shape(), rng)));
}

inline TokenSeries random_token_series(std::size_t features, std::size_t patches, std::size_t patch_len,
                                       std::mt19937_64& rng) {
  SeriesWindow w;
  w.timestamps = patches * patch_len;
  w.features = features;
  std::normal_distribution<double> n(0.0, 1.0);
  w.values.resize(w.timestamps * features);
  for (double& v : w.values) v = n(rng);
  return patchify(w, patch_len);
}

inline std::vector<Tensor> all_trainable(ParameterStore& store) {
  store.set_all_frozen(false);
  std::vector<Tensor> out;
  for (const auto& e : store.entries()) out.push_back(e.value);
  return out;
}

inline std::vector<GradientCase> gradient_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto rt = [&](Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(std::move(s), rng, lo, hi, true); };
  // Keeps entries away from the kinks of relu-type functions.
  auto away_from_zero = [&](Shape s) {
    Tensor t = rt(std::move(s));
    for (double& v : t.mutable_data()) v = v < 0 ? v - 0.1 : v + 0.1;
    return t;
  };
  std::vector<GradientCase> c;
  auto unary = [&](std::string name, Tensor x, std::function<Tensor(const Tensor&)> op) {
    const std::uint64_t s = rng();
    c.push_back({std::move(name), {x}, [op, s](const std::vector<Tensor>& in) { return probe(op(in[0]), s); }});
  };
  auto binary = [&](std::string name, Tensor a, Tensor b, std::function<Tensor(const Tensor&, const Tensor&)> op) {
    const std::uint64_t s = rng();
    c.push_back({std::move(name), {a, b}, [op, s](const std::vector<Tensor>& in) { return probe(op(in[0], in[1]), s); }});
  };

  binary("add", rt({3, 4}), rt({3, 4}), ops::add);
  binary("add_broadcast", rt({3, 4}), rt({4}), ops::add);
  binary("mul", rt({3, 4}), rt({3, 4}), ops::mul);
  binary("mul_broadcast", rt({2, 3, 4}), rt({4}), ops::mul);
  binary("sub", rt({5}), rt({5}), ops::sub);
  binary("div", rt({2, 3}), rt({2, 3}, 0.5, 2.0), ops::div);
  unary("scale", rt({4}), [](const Tensor& x) { return ops::scale(x, -2.5); });
  binary("matmul", rt({3, 4}), rt({4, 5}), ops::matmul);
  unary("transpose", rt({3, 5}), ops::transpose);
  unary("exp", rt({6}), ops::exp);
  unary("log", rt({6}, 0.2, 3.0), ops::log);
  unary("gelu", rt({8}, -3.0, 3.0), ops::gelu);
  unary("relu", away_from_zero({8}), ops::relu);
  unary("leaky_relu", away_from_zero({8}), [](const Tensor& x) { return ops::leaky_relu(x, 0.01); });
  unary("softmax", rt({3, 5}, -2.0, 2.0), ops::softmax);
  unary("causal_softmax", rt({2, 4, 4}, -2.0, 2.0), ops::causal_softmax);
  unary("logsumexp", rt({7}, -3.0, 3.0), ops::logsumexp);
  unary("sum", rt({2, 3}), ops::sum);
  unary("mean", rt({2, 3}), ops::mean);
  binary("dot", rt({6}), rt({6}), ops::dot);
  unary("l2_norm", rt({6}), ops::l2_norm);
  binary("mse", rt({3, 4}), rt({3, 4}), ops::mse);
  {
    // distinct values so the maximum is unique
    Tensor x = rt({3, 6});
    auto d = x.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += 0.05 * static_cast<double>(i % 6);
    unary("max_pool_over_time", x, ops::max_pool_over_time);
  }
  unary("reshape", rt({2, 6}), [](const Tensor& x) { return ops::reshape(x, {3, 4}); });
  unary("slice_rows", rt({5, 3}), [](const Tensor& x) { return ops::slice_rows(x, 1, 4); });
  unary("slice_cols", rt({3, 5}), [](const Tensor& x) { return ops::slice_cols(x, 2, 5); });
  binary("concat_rows", rt({2, 3}), rt({4, 3}), [](const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return ops::concat_rows(parts);
  });
  binary("concat_cols", rt({3, 2}), rt({3, 4}), [](const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return ops::concat_cols(parts);
  });
  binary("stack", rt({2, 3}), rt({2, 3}), [](const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return ops::stack(parts);
  });
  unary("select", rt({3, 2, 4}), [](const Tensor& x) { return ops::select(x, 1); });
  unary("embedding_lookup", rt({5, 3}), [](const Tensor& t) {
    const std::size_t ids[] = {4, 0, 4, 2};
    return ops::embedding_lookup(t, ids);
  });
  {
    const std::uint64_t s = rng();
    c.push_back({"layer_norm", {rt({3, 6}, -2.0, 2.0), rt({6}, 0.5, 1.5), rt({6})},
                 [s](const std::vector<Tensor>& in) { return probe(ops::layer_norm(in[0], in[1], in[2]), s); }});
  }
  {
    const std::uint64_t s = rng();
    c.push_back({"conv1d_causal", {rt({2, 9}), rt({3, 2, 3}), rt({3})}, [s](const std::vector<Tensor>& in) {
                   return probe(ops::conv1d_causal(in[0], in[1], in[2], 2), s);
                 }});
    const std::uint64_t s2 = rng();
    c.push_back({"conv1d_causal_batched", {rt({2, 2, 7}), rt({2, 2, 2})}, [s2](const std::vector<Tensor>& in) {
                   return probe(ops::conv1d_causal(in[0], in[1], 3), s2);
                 }});
  }
  binary("cosine_similarity", rt({5}), rt({5}), [](const Tensor& a, const Tensor& b) {
    return contrastive::cosine_similarity(a, b);
  });
  c.push_back({"info_nce", {rt({}, -1.0, 1.0), rt({}, -1.0, 1.0), rt({}, -1.0, 1.0)},
               [](const std::vector<Tensor>& in) {
                 const Tensor negs[] = {in[1], in[2]};
                 return contrastive::info_nce(in[0], negs);
               }});
  c.push_back({"triplet_loss", {rt({4}), rt({4}), rt({4}), rt({4})}, [](const std::vector<Tensor>& in) {
                 const Tensor negs[] = {in[2], in[3]};
                 return contrastive::triplet_loss(in[0], in[1], negs);
               }});

  {
    contrastive::EncoderConfig ec{2, 3, 2, 4};
    auto enc = std::make_shared<ParameterStore>(contrastive::init_encoder(ec, rng()));
    auto inputs = all_trainable(*enc);
    const TokenSeries series = random_token_series(3, 3, 6, rng);
    const std::uint64_t sample_seed = rng();
    c.push_back({"epoch_loss", inputs, [enc, ec, series, sample_seed](const std::vector<Tensor>&) {
                   std::mt19937_64 r(sample_seed);
                   return contrastive::epoch_loss(series, *enc, ec, 2, r);
                 }});
    const std::uint64_t s = rng();
    Tensor patches = random_tensor({2, 6}, rng);
    c.push_back({"encode_batch", inputs, [enc, ec, patches, s](const std::vector<Tensor>&) {
                   return probe(contrastive::encode_batch(patches, *enc, ec), s);
                 }});
  }
  {
    backbone::BackboneConfig bc{1, 2, 8, 12, 16};
    auto model = std::make_shared<ParameterStore>(backbone::init_backbone(bc, rng()));
    auto inputs = all_trainable(*model);
    Tensor x = rt({5, 8});
    inputs.push_back(x);
    const std::uint64_t s = rng();
    c.push_back({"backbone_forward", inputs, [model, bc, s](const std::vector<Tensor>& in) {
                   return probe(backbone::forward(in.back(), *model, bc), s);
                 }});
  }
  {
    backbone::ModelConfig mc;
    mc.backbone = {1, 2, 8, 12, 32};
    mc.patch_len = 4;
    mc.repr_dim = 3;
    auto model = std::make_shared<ParameterStore>(backbone::assemble_model(mc, backbone::init_backbone(mc.backbone, rng()), rng()));
    auto inputs = all_trainable(*model);
    const TokenSeries series = random_token_series(2, 3, 4, rng);
    Tensor reprs = random_tensor({6, 3}, rng);
    Tensor target = random_tensor({6, 4}, rng);
    c.push_back({"reconstruction_loss", inputs, [model, mc, series, reprs, target](const std::vector<Tensor>&) {
                   return ops::mse(backbone::reconstruct_series(series, reprs, *model, mc), target);
                 }});
  }
  return c;
}

}  // namespace madllm::testing
