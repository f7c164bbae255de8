#pragma once

#include <stdexcept>
#include <string>

namespace madllm {

// Shape or dimension mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Window length not a multiple of the patch length.
class WindowSizeError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};

// Invalid hyperparameter or operation argument (nonpositive dilation, q outside (0,1), ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller broke an API contract (wrong token order, non-scalar loss, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Overflow, NaN, divergence or a degenerate vector during computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateVectorError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Not enough patches or features to form a triplet, empty score sets, ...
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Metric undefined for the given labels (e.g. AUC with a single class).
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input files that are unreadable, malformed, or disagree with their manifest.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ManifestViolation : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace madllm
