#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace madllm {

// Row-major timestamps x features matrix in raw units.
struct TimeSeries {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t t, std::size_t j) const { return values[t * cols + j]; }
  double& at(std::size_t t, std::size_t j) { return values[t * cols + j]; }
  std::vector<double> column(std::size_t j) const;
  // Rows [begin, end).
  TimeSeries slice(std::size_t begin, std::size_t end) const;
};

using Labels = std::vector<std::uint8_t>;

}  // namespace madllm
