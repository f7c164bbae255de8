#include "madllm/random.hpp"

#include "madllm/errors.hpp"

namespace madllm {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values));
}

std::size_t uniform_index(std::size_t n, Rng& rng) {
  if (n == 0) throw ParameterError("uniform_index over an empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double uniform_real(double lo, double hi, Rng& rng) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace madllm
