#include "clarify/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clarify/errors.hpp"

namespace clarify {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor() : Tensor(Shape{0}, {}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::TensorNode>()) {
  if (shape_size(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t n_rows = rows.size();
  const std::size_t n_cols = n_rows == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(n_rows * n_cols);
  for (const auto& row : rows) {
    if (row.size() != n_cols) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{n_rows, n_cols}, std::move(data), requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return Tensor(Shape{values.size()}, std::vector<double>(values), requires_grad);
}

std::size_t Tensor::rows() const {
  return rank() <= 1 ? 1 : node_->shape.front();
}

std::size_t Tensor::cols() const {
  return rank() == 0 ? 1 : node_->shape.back();
}

double Tensor::item() const {
  if (size() != 1) {
    throw UsageError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->data[0];
}

std::span<double> Tensor::mutable_grad() {
  return autograd::grad_sink(*this);
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  return Tensor(node_->shape, node_->data, false);
}

namespace {
thread_local GradientTape* g_active_tape = nullptr;
}

GradientTape::GradientTape() : parent_(g_active_tape) {
  g_active_tape = this;
}

GradientTape::~GradientTape() {
  g_active_tape = parent_;
}

GradientTape* GradientTape::active() {
  return g_active_tape;
}

void GradientTape::record(std::shared_ptr<detail::TensorNode> output, BackwardFn backward) {
  entries_.push_back({std::move(output), std::move(backward)});
}

void GradientTape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (entries_.empty()) {
    throw UsageError("backward() on an empty tape");
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward() on a loss that does not depend on any parameter");
  }
  autograd::grad_sink(loss)[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not on a path to the loss
    it->backward(it->output->grad);
  }
  entries_.clear();
}

namespace autograd {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (GradientTape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

Tensor make_result(std::string_view op, Shape shape, std::vector<double> values, bool track,
                   GradientTape::BackwardFn backward) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by " + std::string(op));
    }
  }
  Tensor out(std::move(shape), std::move(values), track);
  if (track) {
    GradientTape::active()->record(out.node(), std::move(backward));
  }
  return out;
}

std::span<double> grad_sink(const Tensor& t) {
  auto& node = *t.node();
  if (node.grad.empty() && !node.data.empty()) node.grad.assign(node.data.size(), 0.0);
  return node.grad;
}

}  // namespace autograd

void ParameterSet::add(std::string name, Tensor tensor) {
  if (contains(name)) throw UsageError("duplicate parameter name: " + name);
  items_.push_back({std::move(name), std::move(tensor)});
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(items_.begin(), items_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

const Tensor& ParameterSet::get(std::string_view name) const {
  for (const auto& p : items_) {
    if (p.name == name) return p.tensor;
  }
  throw UsageError("unknown parameter: " + std::string(name));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.size();
  return n;
}

void ParameterSet::zero_grad() const {
  for (const auto& p : items_) {
    auto t = p.tensor;
    t.zero_grad();
  }
}

void ParameterSet::append(const ParameterSet& other) {
  for (const auto& p : other.items_) add(p.name, p.tensor);
}

}  // namespace clarify
