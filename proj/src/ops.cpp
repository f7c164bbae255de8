#include "madllm/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numbers>
#include <string>

#include "madllm/errors.hpp"

namespace madllm::ops {

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

bool needs_grad(std::initializer_list<Tensor> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

void check_finite(const std::vector<double>& values, std::string_view op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by " + std::string(op));
    }
  }
}

void require_valid(const Tensor& t, std::string_view op) {
  if (!t.valid()) throw ContractError(std::string(op) + ": empty tensor operand");
}

// Builds the output tensor and, if needed, records make_backward(out_node) on the tape.
template <class MakeBackward>
Tensor emit(std::string_view op, Shape shape, std::vector<double> values,
            std::initializer_list<Tensor> inputs, MakeBackward&& make_backward) {
  check_finite(values, op);
  Tensor out(std::move(shape), std::move(values));
  if (needs_grad(inputs)) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<Node>> in;
    in.reserve(inputs.size());
    for (const Tensor& t : inputs) in.push_back(t.node_ptr());
    Tape::current().record(op, std::move(in), out.node_ptr(), make_backward(out.node()));
  }
  return out;
}

Tensor emit_list(std::string_view op, Shape shape, std::vector<double> values,
                 std::span<const Tensor> inputs, std::function<Tape::BackwardFn(Node*)> make) {
  check_finite(values, op);
  Tensor out(std::move(shape), std::move(values));
  bool any = false;
  if (grad_enabled()) {
    for (const Tensor& t : inputs) any = any || t.requires_grad();
  }
  if (any) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<Node>> in;
    for (const Tensor& t : inputs) in.push_back(t.node_ptr());
    Tape::current().record(op, std::move(in), out.node_ptr(), make(out.node()));
  }
  return out;
}

bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.begin(), suffix.end(), full.end() - static_cast<long>(suffix.size()));
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  require_valid(a, op);
  require_valid(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_broadcastable(const Tensor& a, const Tensor& b, std::string_view op) {
  require_valid(a, op);
  require_valid(b, op);
  if (!is_suffix(a.shape(), b.shape())) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) +
                         " onto " + shape_str(a.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, std::string_view op) {
  require_valid(a, op);
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
  }
}

template <class F>
std::vector<double> map_values(std::string_view op, const Tensor& a, F&& f) {
  require_valid(a, op);
  auto x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_broadcastable(a, b, "add");
  auto x = a.data();
  auto z = b.data();
  const std::size_t inner = z.size();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + z[i % inner];
  return emit("add", a.shape(), std::move(y), {a, b}, [an = a.node(), bn = b.node(), inner](Node* o) {
    return [an, bn, o, inner] {
      if (an->requires_grad) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < o->grad.size(); ++i) g[i % inner] += o->grad[i];
      }
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_broadcastable(a, b, "mul");
  auto x = a.data();
  auto z = b.data();
  const std::size_t inner = z.size();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * z[i % inner];
  return emit("mul", a.shape(), std::move(y), {a, b}, [an = a.node(), bn = b.node(), inner](Node* o) {
    return [an, bn, o, inner] {
      if (an->requires_grad) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * bn->value[i % inner];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < o->grad.size(); ++i) g[i % inner] += o->grad[i] * an->value[i];
      }
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto x = a.data();
  auto z = b.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - z[i];
  return emit("sub", a.shape(), std::move(y), {a, b}, [an = a.node(), bn = b.node()](Node* o) {
    return [an, bn, o] {
      if (an->requires_grad) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
      }
    };
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  auto x = a.data();
  auto z = b.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (z[i] == 0.0) throw NumericError("div: division by zero");
    y[i] = x[i] / z[i];
  }
  return emit("div", a.shape(), std::move(y), {a, b}, [an = a.node(), bn = b.node()](Node* o) {
    return [an, bn, o] {
      if (an->requires_grad) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] / bn->value[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double d = bn->value[i];
          g[i] -= o->grad[i] * an->value[i] / (d * d);
        }
      }
    };
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> y = map_values("scale", a, [factor](double v) { return v * factor; });
  return emit("scale", a.shape(), std::move(y), {a}, [an = a.node(), factor](Node* o) {
    return [an, o, factor] {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * factor;
    };
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> y(m * n, 0.0);
  {
    ConstMatMap A(a.data().data(), static_cast<long>(m), static_cast<long>(k));
    ConstMatMap B(b.data().data(), static_cast<long>(k), static_cast<long>(n));
    MatMap C(y.data(), static_cast<long>(m), static_cast<long>(n));
    C.noalias() = A * B;
  }
  return emit("matmul", Shape{m, n}, std::move(y), {a, b},
              [an = a.node(), bn = b.node(), m, k, n](Node* o) {
                return [an, bn, o, m, k, n] {
                  const long M = static_cast<long>(m), K = static_cast<long>(k),
                             N = static_cast<long>(n);
                  ConstMatMap dC(o->grad.data(), M, N);
                  if (an->requires_grad) {
                    MatMap dA(an->grad_buffer().data(), M, K);
                    ConstMatMap B(bn->value.data(), K, N);
                    dA.noalias() += dC * B.transpose();
                  }
                  if (bn->requires_grad) {
                    MatMap dB(bn->grad_buffer().data(), K, N);
                    ConstMatMap A(an->value.data(), M, K);
                    dB.noalias() += A.transpose() * dC;
                  }
                };
              });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  auto x = a.data();
  std::vector<double> y(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  return emit("transpose", Shape{c, r}, std::move(y), {a}, [an = a.node(), r, c](Node* o) {
    return [an, o, r, c] {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o->grad[j * r + i];
    };
  });
}

Tensor exp(const Tensor& a) {
  std::vector<double> y = map_values("exp", a, [](double v) { return std::exp(v); });
  return emit("exp", a.shape(), std::move(y), {a}, [an = a.node()](Node* o) {
    return [an, o] {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * o->value[i];
    };
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> y = map_values("log", a, [](double v) {
    if (!(v > 0.0)) throw NumericError("log: non-positive argument");
    return std::log(v);
  });
  return emit("log", a.shape(), std::move(y), {a}, [an = a.node()](Node* o) {
    return [an, o] {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] / an->value[i];
    };
  });
}

Tensor gelu(const Tensor& a) {
  std::vector<double> y = map_values("gelu", a, [](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
  });
  return emit("gelu", a.shape(), std::move(y), {a}, [an = a.node()](Node* o) {
    return [an, o] {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = an->value[i];
        const double u = kGeluC * (x + 0.044715 * x * x * x);
        const double t = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
        g[i] += o->grad[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
      }
    };
  });
}

Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

Tensor leaky_relu(const Tensor& a, double negative_slope) {
  std::vector<double> y = map_values("leaky_relu", a, [negative_slope](double x) {
    return x > 0.0 ? x : negative_slope * x;
  });
  return emit("leaky_relu", a.shape(), std::move(y), {a},
              [an = a.node(), negative_slope](Node* o) {
                return [an, o, negative_slope] {
                  auto& g = an->grad_buffer();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] += o->grad[i] * (an->value[i] > 0.0 ? 1.0 : negative_slope);
                  }
                };
              });
}

namespace {

// Row-wise softmax; when causal, row r of each trailing [n x n] block covers columns 0..r.
Tensor softmax_impl(const Tensor& a, bool causal, std::string_view op) {
  require_valid(a, op);
  if (a.rank() < 1) throw DimensionError(std::string(op) + ": needs rank >= 1");
  const std::size_t cols = a.shape().back();
  if (cols == 0) throw DimensionError(std::string(op) + ": empty last axis");
  std::size_t block_rows = 0;
  if (causal) {
    if (a.rank() < 2 || a.shape()[a.rank() - 2] != cols) {
      throw DimensionError(std::string(op) + ": needs square trailing block, got " +
                           shape_str(a.shape()));
    }
    block_rows = cols;
  }
  const std::size_t rows = a.numel() / cols;
  auto x = a.data();
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t width = causal ? (r % block_rows) + 1 : cols;
    const double* xr = x.data() + r * cols;
    double* yr = y.data() + r * cols;
    double mx = xr[0];
    for (std::size_t c = 1; c < width; ++c) mx = std::max(mx, xr[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      total += yr[c];
    }
    for (std::size_t c = 0; c < width; ++c) yr[c] /= total;
  }
  return emit(op, a.shape(), std::move(y), {a}, [an = a.node(), rows, cols](Node* o) {
    return [an, o, rows, cols] {
      auto& g = an->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = o->value.data() + r * cols;
        const double* dy = o->grad.data() + r * cols;
        double inner = 0.0;
        for (std::size_t c = 0; c < cols; ++c) inner += dy[c] * yr[c];
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += yr[c] * (dy[c] - inner);
      }
    };
  });
}

}  // namespace

Tensor softmax(const Tensor& a) { return softmax_impl(a, false, "softmax"); }

Tensor causal_softmax(const Tensor& a) { return softmax_impl(a, true, "causal_softmax"); }

Tensor logsumexp(const Tensor& a) {
  require_valid(a, "logsumexp");
  auto x = a.data();
  if (x.empty()) throw DimensionError("logsumexp: empty tensor");
  const double mx = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (double v : x) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  return emit("logsumexp", Shape{}, {lse}, {a}, [an = a.node()](Node* o) {
    return [an, o] {
      auto& g = an->grad_buffer();
      const double lse_v = o->value[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[0] * std::exp(an->value[i] - lse_v);
    };
  });
}

Tensor sum(const Tensor& a) {
  require_valid(a, "sum");
  double total = 0.0;
  for (double v : a.data()) total += v;
  return emit("sum", Shape{}, {total}, {a}, [an = a.node()](Node* o) {
    return [an, o] {
      auto& g = an->grad_buffer();
      for (double& v : g) v += o->grad[0];
    };
  });
}

Tensor mean(const Tensor& a) {
  require_valid(a, "mean");
  const std::size_t n = a.numel();
  if (n == 0) throw DimensionError("mean: empty tensor");
  double total = 0.0;
  for (double v : a.data()) total += v;
  return emit("mean", Shape{}, {total / static_cast<double>(n)}, {a}, [an = a.node(), n](Node* o) {
    return [an, o, n] {
      auto& g = an->grad_buffer();
      const double share = o->grad[0] / static_cast<double>(n);
      for (double& v : g) v += share;
    };
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_rank(a, 1, "dot");
  require_same_shape(a, b, "dot");
  auto x = a.data();
  auto z = b.data();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += x[i] * z[i];
  return emit("dot", Shape{}, {total}, {a, b}, [an = a.node(), bn = b.node()](Node* o) {
    return [an, bn, o] {
      const double up = o->grad[0];
      if (an->requires_grad) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * bn->value[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * an->value[i];
      }
    };
  });
}

Tensor l2_norm(const Tensor& a) {
  require_valid(a, "l2_norm");
  double sq = 0.0;
  for (double v : a.data()) sq += v * v;
  return emit("l2_norm", Shape{}, {std::sqrt(sq)}, {a}, [an = a.node()](Node* o) {
    return [an, o] {
      const double norm = o->value[0];
      if (norm == 0.0) return;  // subgradient 0 at the origin
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[0] * an->value[i] / norm;
    };
  });
}

Tensor mse(const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction, target, "mse");
  const std::size_t n = prediction.numel();
  if (n == 0) throw DimensionError("mse: empty tensor");
  auto p = prediction.data();
  auto t = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = p[i] - t[i];
    total += d * d;
  }
  return emit("mse", Shape{}, {total / static_cast<double>(n)}, {prediction, target},
              [pn = prediction.node(), tn = target.node(), n](Node* o) {
                return [pn, tn, o, n] {
                  const double k = 2.0 * o->grad[0] / static_cast<double>(n);
                  if (pn->requires_grad) {
                    auto& g = pn->grad_buffer();
                    for (std::size_t i = 0; i < n; ++i) g[i] += k * (pn->value[i] - tn->value[i]);
                  }
                  if (tn->requires_grad) {
                    auto& g = tn->grad_buffer();
                    for (std::size_t i = 0; i < n; ++i) g[i] -= k * (pn->value[i] - tn->value[i]);
                  }
                };
              });
}

Tensor max_pool_over_time(const Tensor& a) {
  require_valid(a, "max_pool_over_time");
  if (a.rank() != 2 && a.rank() != 3) {
    throw DimensionError("max_pool_over_time: expected [C x T] or [B x C x T], got " +
                         shape_str(a.shape()));
  }
  const std::size_t steps = a.shape().back();
  if (steps == 0) throw DimensionError("max_pool_over_time: empty time axis");
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  const std::size_t rows = shape_numel(out_shape);
  auto x = a.data();
  std::vector<double> y(rows);
  std::vector<std::size_t> arg(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < steps; ++t) {
      if (x[r * steps + t] > x[r * steps + best]) best = t;
    }
    arg[r] = r * steps + best;
    y[r] = x[arg[r]];
  }
  return emit("max_pool_over_time", std::move(out_shape), std::move(y), {a},
              [an = a.node(), arg = std::move(arg)](Node* o) mutable {
                return [an, o, arg = std::move(arg)] {
                  auto& g = an->grad_buffer();
                  for (std::size_t r = 0; r < arg.size(); ++r) g[arg[r]] += o->grad[r];
                };
              });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_valid(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return emit("reshape", std::move(shape), a.to_vector(), {a}, [an = a.node()](Node* o) {
    return [an, o] {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    };
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_valid(a, "slice_rows");
  if (a.rank() < 1 || begin > end || end > a.dim(0)) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " + shape_str(a.shape()));
  }
  const std::size_t stride = a.numel() / std::max<std::size_t>(a.dim(0), 1);
  Shape shape = a.shape();
  shape[0] = end - begin;
  auto x = a.data();
  std::vector<double> y(x.begin() + static_cast<long>(begin * stride),
                        x.begin() + static_cast<long>(end * stride));
  const std::size_t offset = begin * stride;
  return emit("slice_rows", std::move(shape), std::move(y), {a}, [an = a.node(), offset](Node* o) {
    return [an, o, offset] {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < o->grad.size(); ++i) g[offset + i] += o->grad[i];
    };
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (begin > end || end > cols) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " + shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  auto x = a.data();
  std::vector<double> y(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < w; ++c) y[r * w + c] = x[r * cols + begin + c];
  return emit("slice_cols", Shape{rows, w}, std::move(y), {a},
              [an = a.node(), rows, cols, begin, w](Node* o) {
                return [an, o, rows, cols, begin, w] {
                  auto& g = an->grad_buffer();
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < w; ++c) g[r * cols + begin + c] += o->grad[r * w + c];
                };
              });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  for (const Tensor& p : parts) require_valid(p, "concat_rows");
  const Shape& first = parts[0].shape();
  if (first.empty()) throw DimensionError("concat_rows: scalars have no rows");
  Shape shape = first;
  shape[0] = 0;
  std::vector<double> y;
  for (const Tensor& p : parts) {
    if (p.rank() != first.size() || !std::equal(first.begin() + 1, first.end(), p.shape().begin() + 1)) {
      throw DimensionError("concat_rows: incompatible " + shape_str(p.shape()) + " vs " +
                           shape_str(first));
    }
    shape[0] += p.dim(0);
    auto d = p.data();
    y.insert(y.end(), d.begin(), d.end());
  }
  std::vector<Node*> nodes;
  for (const Tensor& p : parts) nodes.push_back(p.node());
  return emit_list("concat_rows", std::move(shape), std::move(y), parts, [nodes](Node* o) {
    return [nodes, o] {
      std::size_t offset = 0;
      for (Node* n : nodes) {
        const std::size_t len = n->value.size();
        if (n->requires_grad) {
          auto& g = n->grad_buffer();
          for (std::size_t i = 0; i < len; ++i) g[i] += o->grad[offset + i];
        }
        offset += len;
      }
    };
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  for (const Tensor& p : parts) require_rank(p, 2, "concat_cols");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  for (const Tensor& p : parts) {
    if (p.dim(0) != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.dim(1);
  }
  std::vector<double> y(rows * cols);
  std::size_t c0 = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.dim(1);
    auto d = p.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) y[r * cols + c0 + c] = d[r * w + c];
    c0 += w;
  }
  std::vector<Node*> nodes;
  for (const Tensor& p : parts) nodes.push_back(p.node());
  return emit_list("concat_cols", Shape{rows, cols}, std::move(y), parts, [nodes, rows, cols](Node* o) {
    return [nodes, o, rows, cols] {
      std::size_t start = 0;
      for (Node* n : nodes) {
        const std::size_t w = n->shape[1];
        if (n->requires_grad) {
          auto& g = n->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) g[r * w + c] += o->grad[r * cols + start + c];
        }
        start += w;
      }
    };
  });
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  for (const Tensor& p : parts) require_valid(p, "stack");
  const Shape& first = parts[0].shape();
  Shape shape{parts.size()};
  shape.insert(shape.end(), first.begin(), first.end());
  std::vector<double> y;
  y.reserve(shape_numel(shape));
  for (const Tensor& p : parts) {
    if (p.shape() != first) {
      throw DimensionError("stack: " + shape_str(p.shape()) + " vs " + shape_str(first));
    }
    auto d = p.data();
    y.insert(y.end(), d.begin(), d.end());
  }
  std::vector<Node*> nodes;
  for (const Tensor& p : parts) nodes.push_back(p.node());
  return emit_list("stack", std::move(shape), std::move(y), parts, [nodes](Node* o) {
    return [nodes, o] {
      std::size_t offset = 0;
      for (Node* n : nodes) {
        const std::size_t len = n->value.size();
        if (n->requires_grad) {
          auto& g = n->grad_buffer();
          for (std::size_t i = 0; i < len; ++i) g[i] += o->grad[offset + i];
        }
        offset += len;
      }
    };
  });
}

Tensor select(const Tensor& a, std::size_t index) {
  require_valid(a, "select");
  if (a.rank() < 1 || index >= a.dim(0)) {
    throw DimensionError("select: index " + std::to_string(index) + " out of range for " +
                         shape_str(a.shape()));
  }
  Shape shape(a.shape().begin() + 1, a.shape().end());
  const std::size_t stride = shape_numel(shape);
  auto x = a.data();
  std::vector<double> y(x.begin() + static_cast<long>(index * stride),
                        x.begin() + static_cast<long>((index + 1) * stride));
  const std::size_t offset = index * stride;
  return emit("select", std::move(shape), std::move(y), {a}, [an = a.node(), offset](Node* o) {
    return [an, o, offset] {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < o->grad.size(); ++i) g[offset + i] += o->grad[i];
    };
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank(table, 2, "embedding_lookup");
  const std::size_t vocab = table.dim(0), width = table.dim(1);
  auto x = table.data();
  std::vector<double> y(ids.size() * width);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= vocab) {
      throw DimensionError("embedding_lookup: id " + std::to_string(ids[r]) + " >= " +
                           std::to_string(vocab));
    }
    std::copy_n(x.begin() + static_cast<long>(ids[r] * width), width, y.begin() + static_cast<long>(r * width));
  }
  std::vector<std::size_t> saved(ids.begin(), ids.end());
  return emit("embedding_lookup", Shape{ids.size(), width}, std::move(y), {table},
              [tn = table.node(), saved = std::move(saved), width](Node* o) mutable {
                return [tn, o, saved = std::move(saved), width] {
                  auto& g = tn->grad_buffer();
                  for (std::size_t r = 0; r < saved.size(); ++r)
                    for (std::size_t c = 0; c < width; ++c) g[saved[r] * width + c] += o->grad[r * width + c];
                };
              });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_valid(x, "layer_norm");
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  if (x.rank() < 1) throw DimensionError("layer_norm: needs rank >= 1");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(d) + "]");
  }
  const std::size_t rows = x.numel() / d;
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  std::vector<double> y(xv.size()), xhat(xv.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xr[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (xr[c] - mu) * inv_std[r];
      y[r * d + c] = gv[c] * xhat[r * d + c] + bv[c];
    }
  }
  return emit("layer_norm", x.shape(), std::move(y), {x, gain, bias},
              [xn = x.node(), gn = gain.node(), bn = bias.node(), xhat = std::move(xhat),
               inv_std = std::move(inv_std), rows, d](Node* o) mutable {
                return [xn, gn, bn, o, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d] {
                  const double* dy = o->grad.data();
                  if (gn->requires_grad) {
                    auto& g = gn->grad_buffer();
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < d; ++c) g[c] += dy[r * d + c] * xhat[r * d + c];
                  }
                  if (bn->requires_grad) {
                    auto& g = bn->grad_buffer();
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < d; ++c) g[c] += dy[r * d + c];
                  }
                  if (xn->requires_grad) {
                    auto& g = xn->grad_buffer();
                    const double inv_d = 1.0 / static_cast<double>(d);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t c = 0; c < d; ++c) {
                        const double dxh = dy[r * d + c] * gn->value[c];
                        m1 += dxh;
                        m2 += dxh * xhat[r * d + c];
                      }
                      m1 *= inv_d;
                      m2 *= inv_d;
                      for (std::size_t c = 0; c < d; ++c) {
                        const double dxh = dy[r * d + c] * gn->value[c];
                        g[r * d + c] += inv_std[r] * (dxh - m1 - xhat[r * d + c] * m2);
                      }
                    }
                  }
                };
              });
}

namespace {

Tensor conv_impl(const Tensor& input, const Tensor& weight, const Tensor* bias, int dilation) {
  require_valid(input, "conv1d_causal");
  require_rank(weight, 3, "conv1d_causal");
  if (dilation < 1) throw ParameterError("conv1d_causal: dilation must be >= 1");
  if (input.rank() != 2 && input.rank() != 3) {
    throw DimensionError("conv1d_causal: input must be [C x T] or [B x C x T], got " +
                         shape_str(input.shape()));
  }
  const bool batched = input.rank() == 3;
  const std::size_t batch = batched ? input.dim(0) : 1;
  const std::size_t cin = input.dim(batched ? 1 : 0);
  const std::size_t steps = input.dim(batched ? 2 : 1);
  const std::size_t cout = weight.dim(0);
  const std::size_t kernel = weight.dim(2);
  if (kernel < 1) throw ParameterError("conv1d_causal: kernel must be >= 1");
  if (weight.dim(1) != cin) {
    throw DimensionError("conv1d_causal: weight expects " + std::to_string(weight.dim(1)) +
                         " input channels, input has " + std::to_string(cin));
  }
  if (bias && bias->shape() != Shape{cout}) {
    throw DimensionError("conv1d_causal: bias must be [" + std::to_string(cout) + "]");
  }
  const std::size_t dil = static_cast<std::size_t>(dilation);
  const std::size_t width = batch * steps;
  const std::size_t depth = cin * kernel;

  // cols[c*K + k, b*T + t] = x[b, c, t - (K-1-k)*d], zero when out of range
  std::vector<double> cols(depth * width, 0.0);
  auto x = input.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t k = 0; k < kernel; ++k) {
        const std::size_t shift = (kernel - 1 - k) * dil;
        double* row = cols.data() + (c * kernel + k) * width + b * steps;
        const double* src = x.data() + (b * cin + c) * steps;
        for (std::size_t t = shift; t < steps; ++t) row[t] = src[t - shift];
      }

  std::vector<double> flat(cout * width);
  {
    ConstMatMap W(weight.data().data(), static_cast<long>(cout), static_cast<long>(depth));
    ConstMatMap C(cols.data(), static_cast<long>(depth), static_cast<long>(width));
    MatMap Y(flat.data(), static_cast<long>(cout), static_cast<long>(width));
    Y.noalias() = W * C;
  }
  std::vector<double> y(batch * cout * steps);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < cout; ++o) {
      const double add = bias ? bias->data()[o] : 0.0;
      for (std::size_t t = 0; t < steps; ++t)
        y[(b * cout + o) * steps + t] = flat[o * width + b * steps + t] + add;
    }
  Shape shape = batched ? Shape{batch, cout, steps} : Shape{cout, steps};

  auto make = [xn = input.node(), wn = weight.node(), bn = bias ? bias->node() : nullptr,
               cols = std::move(cols), batch, cin, steps, cout, kernel, dil, width,
               depth](Node* o) mutable {
    return [xn, wn, bn, o, cols = std::move(cols), batch, cin, steps, cout, kernel, dil, width,
            depth] {
      std::vector<double> dflat(cout * width);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t oc = 0; oc < cout; ++oc)
          for (std::size_t t = 0; t < steps; ++t)
            dflat[oc * width + b * steps + t] = o->grad[(b * cout + oc) * steps + t];
      ConstMatMap dY(dflat.data(), static_cast<long>(cout), static_cast<long>(width));
      if (wn->requires_grad) {
        MatMap dW(wn->grad_buffer().data(), static_cast<long>(cout), static_cast<long>(depth));
        ConstMatMap C(cols.data(), static_cast<long>(depth), static_cast<long>(width));
        dW.noalias() += dY * C.transpose();
      }
      if (bn && bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t oc = 0; oc < cout; ++oc) g[oc] += dY.row(static_cast<long>(oc)).sum();
      }
      if (xn->requires_grad) {
        std::vector<double> dcols(depth * width);
        ConstMatMap W(wn->value.data(), static_cast<long>(cout), static_cast<long>(depth));
        MatMap dC(dcols.data(), static_cast<long>(depth), static_cast<long>(width));
        dC.noalias() = W.transpose() * dY;
        auto& g = xn->grad_buffer();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t k = 0; k < kernel; ++k) {
              const std::size_t shift = (kernel - 1 - k) * dil;
              const double* row = dcols.data() + (c * kernel + k) * width + b * steps;
              double* dst = g.data() + (b * cin + c) * steps;
              for (std::size_t t = shift; t < steps; ++t) dst[t - shift] += row[t];
            }
      }
    };
  };
  if (bias) return emit("conv1d_causal", std::move(shape), std::move(y), {input, weight, *bias}, make);
  return emit("conv1d_causal", std::move(shape), std::move(y), {input, weight}, make);
}

}  // namespace

Tensor conv1d_causal(const Tensor& input, const Tensor& weight, int dilation) {
  return conv_impl(input, weight, nullptr, dilation);
}

Tensor conv1d_causal(const Tensor& input, const Tensor& weight, const Tensor& bias, int dilation) {
  return conv_impl(input, weight, &bias, dilation);
}

}  // namespace madllm::ops
