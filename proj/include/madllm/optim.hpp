#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "madllm/parameter_store.hpp"

namespace madllm {

// Both optimizers update only non-frozen entries that hold a gradient. A
// frozen entry carrying a gradient is an internal error (ContractError): the
// freeze contract guarantees it cannot happen. Updates that produce a
// non-finite value raise NumericError.

class Sgd {
 public:
  explicit Sgd(double lr);
  void step(ParameterStore& params);

 private:
  double lr_;
};

class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() : Adam(Options{}) {}
  explicit Adam(Options options);
  void step(ParameterStore& params);
  std::size_t steps() const { return steps_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  Options options_;
  std::size_t steps_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(ParameterStore& params, double max_norm);

}  // namespace madllm
