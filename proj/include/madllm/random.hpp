#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "madllm/tensor.hpp"

namespace madllm {

using Rng = std::mt19937_64;

// Derives an independent stream for a named purpose from a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

Tensor normal_tensor(Shape shape, double stddev, Rng& rng);
std::size_t uniform_index(std::size_t n, Rng& rng);
double uniform_real(double lo, double hi, Rng& rng);

}  // namespace madllm
