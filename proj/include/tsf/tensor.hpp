#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsf {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is produced
  bool requires_grad = false;
  // Tape generation that produced this tensor; 0 for leaves.
  std::uint64_t tape_epoch = 0;

  void accumulate_grad(std::size_t i, double g) { grad[i] += g; }
  std::span<double> ensure_grad();
};

}  // namespace detail

/// Dense row-major f64 array. Copies share storage (handle semantics); use
/// clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  /// Negative indices count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  /// Direct write access, for parameter updates and tests. Never mutate a
  /// tensor that is already part of a recorded graph.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  /// Fresh leaf tensor with copied values and no graph history.
  Tensor clone() const;
  Tensor detach() const { return clone(); }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// One recorded primitive application.
struct GraphNode {
  std::string op;
  std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
  std::shared_ptr<detail::TensorImpl> output;
  std::function<void(GraphNode&)> backward;
};

/// Thread-local tape of primitive applications in execution order, so every
/// node's inputs precede it. backward() walks it once in reverse and then
/// clears it.
class ComputeGraph {
 public:
  static ComputeGraph& current();

  bool grad_enabled() const { return grad_enabled_; }
  std::uint64_t epoch() const { return epoch_; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<GraphNode>& nodes() const { return nodes_; }

  /// Drop every recorded node without computing gradients.
  void reset();

  void record(GraphNode node);
  void run_backward(const Tensor& loss);

  // Fault injection for verifying the gradient checker: the named op's
  // backward rule receives a scaled upstream gradient.
  void set_fault(std::string op, double factor = 1.5) {
    fault_op_ = std::move(op);
    fault_factor_ = factor;
  }
  void clear_fault() { fault_op_.clear(); }

 private:
  friend class NoGradGuard;
  std::vector<GraphNode> nodes_;
  std::uint64_t epoch_ = 1;
  bool grad_enabled_ = true;
  std::string fault_op_;
  double fault_factor_ = 1.0;
};

/// Disables recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(ComputeGraph::current().grad_enabled_) {
    ComputeGraph::current().grad_enabled_ = false;
  }
  ~NoGradGuard() { ComputeGraph::current().grad_enabled_ = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Reverse-mode pass from a scalar loss. Gradients accumulate into every
/// tensor with requires_grad reachable on the tape; the tape is consumed.
void backward(const Tensor& loss);

/// Names under which primitives are recorded on the tape.
const std::vector<std::string>& primitive_ops();

// ---------------------------------------------------------------------------
// Primitives. Binary elementwise ops accept equal shapes, a scalar operand, or
// an operand whose shape is a suffix of the other's (leading-batch broadcast).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

/// (.., m, k) x (.., k, p). Either side may be 2-D (shared across the other's
/// batch), otherwise leading dimensions must match.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, int axis);
/// Softmax over the last axis where `allowed` (Lq x Lk, row-major) marks the
/// positions that may receive weight; masked positions get exactly zero.
Tensor masked_softmax(const Tensor& x, const std::vector<bool>& allowed);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
/// Swaps two axes (materialized copy).
Tensor transpose(const Tensor& x, int axis_a, int axis_b);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
/// Standardize over the last axis, then apply per-feature gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace tsf
