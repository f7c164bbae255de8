#include "madllm/optim.hpp"

#include <cmath>

#include "madllm/errors.hpp"

namespace madllm {

namespace {

void guard_frozen(const ParameterStore::Entry& e) {
  if (!e.value.has_grad()) return;
  for (double g : e.value.grad()) {
    if (g != 0.0) {
      throw ContractError("optimizer reached frozen tensor '" + e.name + "' with a gradient");
    }
  }
}

void check_updated(const ParameterStore::Entry& e) {
  for (double v : e.value.data()) {
    if (!std::isfinite(v)) throw NumericError("optimizer step diverged on '" + e.name + "'");
  }
}

}  // namespace

Sgd::Sgd(double lr) : lr_(lr) {
  if (!(lr > 0.0)) throw ParameterError("SGD learning rate must be positive");
}

void Sgd::step(ParameterStore& params) {
  for (const auto& e : params.entries()) {
    if (e.frozen) {
      guard_frozen(e);
      continue;
    }
    if (!e.value.has_grad()) continue;
    Tensor t = e.value;
    auto w = t.mutable_data();
    auto g = t.grad();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
    check_updated(e);
  }
}

Adam::Adam(Options options) : options_(options) {
  if (!(options_.lr > 0.0)) throw ParameterError("Adam learning rate must be positive");
}

void Adam::step(ParameterStore& params) {
  ++steps_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (const auto& e : params.entries()) {
    if (e.frozen) {
      guard_frozen(e);
      continue;
    }
    if (!e.value.has_grad()) continue;
    Tensor t = e.value;
    auto w = t.mutable_data();
    auto g = t.grad();
    Moments& mo = moments_[e.name];
    if (mo.m.size() != w.size()) {
      mo.m.assign(w.size(), 0.0);
      mo.v.assign(w.size(), 0.0);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      mo.m[i] = options_.beta1 * mo.m[i] + (1.0 - options_.beta1) * g[i];
      mo.v[i] = options_.beta2 * mo.v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      const double mhat = mo.m[i] / c1;
      const double vhat = mo.v[i] / c2;
      w[i] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
    check_updated(e);
  }
}

double clip_grad_norm(ParameterStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& e : params.entries()) {
    if (!e.value.has_grad()) continue;
    for (double g : e.value.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("gradient norm is not finite");
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (const auto& e : params.entries()) {
      if (!e.value.has_grad()) continue;
      Tensor t = e.value;
      for (double& g : t.mutable_grad()) g *= k;
    }
  }
  return norm;
}

}  // namespace madllm
