#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clarify {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major float64 array with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage. Values are
/// treated as immutable once an op has consumed them; only optimizers write
/// parameter values in place, between tapes.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Builds a rows x cols matrix from nested initializer rows.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  /// Leading extent; for a rank-1 tensor this is 1 (a row vector).
  std::size_t rows() const;
  /// Trailing extent.
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t row, std::size_t col) const { return node_->data[row * cols() + col]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  /// Independent copy of the values (no gradient, no aliasing).
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Records differentiable ops executed on the current thread while alive.
///
/// Tapes nest; ops record onto the innermost one. With no tape alive, ops
/// run in inference mode and results never require gradients.
class GradientTape {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  static GradientTape* active();

  void record(std::shared_ptr<detail::TensorNode> output, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, accumulating
  /// into every tensor that requires a gradient. Consumes the tape.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::shared_ptr<detail::TensorNode> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  GradientTape* parent_;
};

namespace autograd {

/// True when a tape is active and at least one input requires a gradient.
bool should_record(std::initializer_list<const Tensor*> inputs);

/// Wraps freshly computed values into a tensor, checks they are finite and,
/// when `track` is set, records `backward` on the active tape.
Tensor make_result(std::string_view op, Shape shape, std::vector<double> values, bool track,
                   GradientTape::BackwardFn backward);

/// Gradient buffer of `t`, allocated (zero-filled) on first use.
std::span<double> grad_sink(const Tensor& t);

}  // namespace autograd

/// A named learnable tensor.
struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Ordered collection of parameters with unique names.
class ParameterSet {
 public:
  void add(std::string name, Tensor tensor);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  const std::vector<Parameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;
  void zero_grad() const;
  void append(const ParameterSet& other);

 private:
  std::vector<Parameter> items_;
};

}  // namespace clarify
