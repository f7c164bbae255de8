#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace madllm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;

  std::vector<double>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major float64 tensor. Copies share storage; use clone() for a
// deep copy. A default-constructed tensor is empty and invalid.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor constant(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const;
  // Direct write access. Only initializers and optimizer steps use this.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;

  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Fresh storage, no gradient history.
  Tensor detach() const;
  // Fresh storage that keeps the requires_grad flag.
  Tensor clone() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend class Tape;

  std::shared_ptr<detail::Node> node_;
};

// Ordered record of differentiable operations for one thread. Records are
// appended in execution order, so the list is already topologically sorted.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Record {
    std::string_view op;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    std::shared_ptr<detail::Node> output;
    BackwardFn backward;
  };

  static Tape& current();

  void record(std::string_view op, std::vector<std::shared_ptr<detail::Node>> inputs,
              std::shared_ptr<detail::Node> output, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1, runs every record once in reverse order and
  // clears the tape. Leaves accumulate into their grad buffers.
  void backward(const Tensor& loss);
  void clear() { records_.clear(); }
  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

 private:
  std::vector<Record> records_;
};

void backward(const Tensor& loss);

bool grad_enabled();

// Disables recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Clears the current thread's tape on scope exit, so an exception thrown
// mid-forward never leaks records into the next step.
class TapeScope {
 public:
  TapeScope() { Tape::current().clear(); }
  ~TapeScope() { Tape::current().clear(); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
};

}  // namespace madllm
