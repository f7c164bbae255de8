#include "madllm/tensor.hpp"

#include <sstream>

#include "madllm/errors.hpp"

namespace madllm {

namespace {
thread_local bool t_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return constant(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::constant(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of an empty tensor");
  return node_->shape;
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw DimensionError("axis out of range for " + shape_str(s));
  return s[axis];
}

std::span<const double> Tensor::data() const {
  if (!node_) throw ContractError("use of an empty tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw ContractError("use of an empty tensor");
  return node_->value;
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) needs a matrix, got " + shape_str(shape()));
  return node_->value[row * node_->shape[1] + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("use of an empty tensor");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw ContractError("use of an empty tensor");
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(shape(), to_vector(), false); }

Tensor Tensor::clone() const { return Tensor(shape(), to_vector(), requires_grad()); }

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(std::string_view op, std::vector<std::shared_ptr<detail::Node>> inputs,
                  std::shared_ptr<detail::Node> output, BackwardFn backward) {
  records_.push_back(Record{op, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.valid() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss");
  }
  bool on_tape = false;
  for (const Record& r : records_) {
    if (r.output.get() == loss.node()) {
      on_tape = true;
      break;
    }
  }
  if (!on_tape) throw ContractError("backward(): loss was not produced on the current tape");

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward();
  }
  records_.clear();
}

void backward(const Tensor& loss) { Tape::current().backward(loss); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

}  // namespace madllm
