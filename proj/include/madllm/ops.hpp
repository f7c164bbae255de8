#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "madllm/tensor.hpp"

// Differentiable primitives. Every op records itself on the current thread's
// tape when an input requires grad and grad mode is on. Every op throws
// NumericError if it would produce a non-finite value from finite input.
namespace madllm::ops {

// Elementwise with suffix broadcasting: b's shape must equal a's shape or a
// trailing part of it (e.g. [n x d] + [d]).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Same shape only.
Tensor sub(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// Tanh approximation, as used by GPT-2.
Tensor gelu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double negative_slope = 0.01);

// Softmax over the last axis.
Tensor softmax(const Tensor& a);
// Softmax over the last axis of a square [.. x n x n] tensor where row r only
// sees columns 0..r. Masked entries are exactly zero.
Tensor causal_softmax(const Tensor& a);
// log(sum(exp(a))) over every element, computed stably.
Tensor logsumexp(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor l2_norm(const Tensor& a);
Tensor mse(const Tensor& prediction, const Tensor& target);

// [C x T] -> [C] or [B x C x T] -> [B x C]. Ties route the gradient to the
// first maximal position.
Tensor max_pool_over_time(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
// a[index] with the leading axis dropped.
Tensor select(const Tensor& a, std::size_t index);
// Rows of table [V x d] picked by ids -> [ids.size() x d].
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids);

// Normalizes each row over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Causal dilated 1-D convolution. input is [C_in x T] or [B x C_in x T],
// weight is [C_out x C_in x K]. The input is left-padded with (K-1)*dilation
// zeros, so the last kernel tap sees the current step:
//   out[o, t] = sum_c sum_k w[o, c, k] * x[c, t - (K-1-k) * dilation]
Tensor conv1d_causal(const Tensor& input, const Tensor& weight, int dilation);
Tensor conv1d_causal(const Tensor& input, const Tensor& weight, const Tensor& bias,
                     int dilation);

}  // namespace madllm::ops
