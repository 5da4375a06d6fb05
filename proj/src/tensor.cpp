#include "tsf/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tsf {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::span<double> detail::TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (tsf::numel(shape) != data.size()) {
    throw ShapeError("shape " + to_string(shape) + " needs " + std::to_string(tsf::numel(shape)) +
                     " values, got " + std::to_string(data.size()));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = tsf::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

std::size_t Tensor::dim(int axis) const {
  const int n = static_cast<int>(ndim());
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  return impl_->shape[static_cast<std::size_t>(a)];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, impl_->requires_grad); }

// ---------------------------------------------------------------------------
// Tape

ComputeGraph& ComputeGraph::current() {
  thread_local ComputeGraph graph;
  return graph;
}

void ComputeGraph::reset() {
  nodes_.clear();
  ++epoch_;
}

void ComputeGraph::record(GraphNode node) { nodes_.push_back(std::move(node)); }

void ComputeGraph::run_backward(const Tensor& loss) {
  if (!loss.defined()) throw GraphError("backward on undefined tensor");
  if (loss.numel() != 1) throw GraphError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  const auto& root = loss.impl();
  if (!root->requires_grad) throw GraphError("loss does not require grad; nothing to differentiate");
  if (root->tape_epoch != 0 && root->tape_epoch != epoch_) {
    throw GraphError("graph already consumed: backward was called on this graph before");
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    if (!fault_op_.empty() && it->op == fault_op_) {
      for (auto& g : it->output->grad) g *= fault_factor_;
    }
    it->backward(*it);
  }
  for (auto& node : nodes_) {
    for (auto& in : node.inputs) {
      if (in->requires_grad && in->tape_epoch == 0) in->ensure_grad();
    }
  }
  nodes_.clear();
  ++epoch_;
}

void backward(const Tensor& loss) { ComputeGraph::current().run_backward(loss); }

const std::vector<std::string>& primitive_ops() {
  static const std::vector<std::string> ops{"add",      "sub",  "mul",     "scale",     "tanh",  "sigmoid",
                                            "relu",     "matmul", "softmax", "masked_softmax", "sum", "mean",
                                            "reshape",  "transpose", "concat", "slice", "layer_norm"};
  return ops;
}

namespace {

using ImplPtr = std::shared_ptr<detail::TensorImpl>;
using BackwardFn = std::function<void(GraphNode&)>;

Tensor make_result(Shape shape, std::vector<double> data, std::vector<ImplPtr> inputs, const char* op,
                   BackwardFn fn) {
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  auto& graph = ComputeGraph::current();
  const bool track =
      graph.grad_enabled() && std::any_of(inputs.begin(), inputs.end(), [](const ImplPtr& p) { return p->requires_grad; });
  if (track) {
    out->requires_grad = true;
    out->tape_epoch = graph.epoch();
    graph.record(GraphNode{op, std::move(inputs), out, std::move(fn)});
  }
  return Tensor(out);
}

void require(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.numel() == 1 && b.ndim() <= a.ndim()) return a.shape();
  if (a.numel() == 1 && a.ndim() <= b.ndim()) return b.shape();
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a.shape()) + " with " + to_string(b.shape()));
}

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, BackwardFn fn) {
  require(a, op);
  require(b, op);
  Shape shape = broadcast_shape(a, b, op);
  const auto n = tsf::numel(shape);
  const auto na = a.numel();
  const auto nb = b.numel();
  std::vector<double> out(n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  if (na == n && nb == n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(pa[i], pb[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(pa[i % na], pb[i % nb]);
  }
  return make_result(std::move(shape), std::move(out), {a.impl(), b.impl()}, op, std::move(fn));
}

template <class F, class D>
Tensor unary(const Tensor& x, const char* op, F f, D dfdx_from_y_x) {
  require(x, op);
  const auto n = x.numel();
  std::vector<double> out(n);
  const double* px = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(px[i]);
  return make_result(x.shape(), std::move(out), {x.impl()}, op, [dfdx_from_y_x](GraphNode& node) {
    auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    auto gx = in->ensure_grad();
    const auto& g = node.output->grad;
    const auto& y = node.output->data;
    const auto& xv = in->data;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx_from_y_x(y[i], xv[i]);
  });
}

std::size_t norm_axis(int axis, std::size_t ndim, const char* op) {
  const int n = static_cast<int>(ndim);
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range");
  return static_cast<std::size_t>(a);
}

// Splits shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; }, [](GraphNode& node) {
    const auto& g = node.output->grad;
    for (auto& in : node.inputs) {
      if (!in->requires_grad) continue;
      auto gi = in->ensure_grad();
      const auto ni = gi.size();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i % ni] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; }, [](GraphNode& node) {
    const auto& g = node.output->grad;
    for (std::size_t k = 0; k < 2; ++k) {
      auto& in = node.inputs[k];
      if (!in->requires_grad) continue;
      auto gi = in->ensure_grad();
      const auto ni = gi.size();
      const double sign = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i) gi[i % ni] += sign * g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; }, [](GraphNode& node) {
    const auto& g = node.output->grad;
    auto& ia = node.inputs[0];
    auto& ib = node.inputs[1];
    const auto na = ia->data.size();
    const auto nb = ib->data.size();
    if (ia->requires_grad) {
      auto ga = ia->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i % na] += g[i] * ib->data[i % nb];
    }
    if (ib->requires_grad) {
      auto gb = ib->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i] * ia->data[i % na];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, "scale", [factor](double v) { return factor * v; }, [factor](double, double) { return factor; });
}

Tensor tanh(const Tensor& x) {
  return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double y, double) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double y, double) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(x, "relu", [](double v) { return v > 0 ? v : 0.0; }, [](double, double v) { return v > 0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a, "matmul");
  require(b, "matmul");
  auto mismatch = [&] {
    return ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  };
  if (a.ndim() < 2 || b.ndim() < 2) throw mismatch();
  const std::size_t m = a.dim(-2), k = a.dim(-1), kb = b.dim(-2), p = b.dim(-1);
  if (k != kb) throw mismatch();

  const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  enum class Mode { SharedB, SharedA, Batched } mode;
  Shape batch;
  if (b_batch.empty()) {
    mode = Mode::SharedB;
    batch = a_batch;
  } else if (a_batch.empty()) {
    mode = Mode::SharedA;
    batch = b_batch;
  } else if (a_batch == b_batch) {
    mode = Mode::Batched;
    batch = a_batch;
  } else {
    throw mismatch();
  }
  const std::size_t nbatch = tsf::numel(batch);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(p);

  std::vector<double> out(nbatch * m * p);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  if (mode == Mode::SharedB) {
    // Fold the batch into rows: one GEMM.
    MutMap(out.data(), nbatch * m, p).noalias() = ConstMap(pa, nbatch * m, k) * ConstMap(pb, k, p);
  } else {
    const std::size_t sa = mode == Mode::SharedA ? 0 : m * k;
    for (std::size_t i = 0; i < nbatch; ++i) {
      MutMap(out.data() + i * m * p, m, p).noalias() = ConstMap(pa + i * sa, m, k) * ConstMap(pb + i * k * p, k, p);
    }
  }

  return make_result(std::move(out_shape), std::move(out), {a.impl(), b.impl()}, "matmul",
                     [mode, nbatch, m, k, p](GraphNode& node) {
                       auto& ia = node.inputs[0];
                       auto& ib = node.inputs[1];
                       const double* g = node.output->grad.data();
                       if (mode == Mode::SharedB) {
                         ConstMap dc(g, nbatch * m, p);
                         if (ia->requires_grad) {
                           MutMap(ia->ensure_grad().data(), nbatch * m, k).noalias() +=
                               dc * ConstMap(ib->data.data(), k, p).transpose();
                         }
                         if (ib->requires_grad) {
                           MutMap(ib->ensure_grad().data(), k, p).noalias() +=
                               ConstMap(ia->data.data(), nbatch * m, k).transpose() * dc;
                         }
                         return;
                       }
                       const std::size_t sa = mode == Mode::SharedA ? 0 : m * k;
                       double* ga = ia->requires_grad ? ia->ensure_grad().data() : nullptr;
                       double* gb = ib->requires_grad ? ib->ensure_grad().data() : nullptr;
                       for (std::size_t i = 0; i < nbatch; ++i) {
                         ConstMap dc(g + i * m * p, m, p);
                         if (ga) {
                           MutMap(ga + i * sa, m, k).noalias() +=
                               dc * ConstMap(ib->data.data() + i * k * p, k, p).transpose();
                         }
                         if (gb) {
                           MutMap(gb + i * k * p, k, p).noalias() +=
                               ConstMap(ia->data.data() + i * sa, m, k).transpose() * dc;
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// softmax

namespace {

void softmax_backward(GraphNode& node, AxisSplit s) {
  auto& in = node.inputs[0];
  if (!in->requires_grad) return;
  auto gx = in->ensure_grad();
  const auto& g = node.output->grad;
  const auto& y = node.output->data;
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t q = 0; q < s.inner; ++q) {
      const std::size_t base = o * s.extent * s.inner + q;
      double dot = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) dot += g[base + j * s.inner] * y[base + j * s.inner];
      for (std::size_t j = 0; j < s.extent; ++j) {
        const auto idx = base + j * s.inner;
        gx[idx] += y[idx] * (g[idx] - dot);
      }
    }
  }
}

void check_finite(const Tensor& x, const char* op) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw std::domain_error(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  require(x, "softmax");
  check_finite(x, "softmax");
  const auto ax = norm_axis(axis, x.ndim(), "softmax");
  const AxisSplit s = split_at(x.shape(), ax);
  std::vector<double> out(x.numel());
  const double* px = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t q = 0; q < s.inner; ++q) {
      const std::size_t base = o * s.extent * s.inner + q;
      double mx = px[base];
      for (std::size_t j = 1; j < s.extent; ++j) mx = std::max(mx, px[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) {
        const auto idx = base + j * s.inner;
        out[idx] = std::exp(px[idx] - mx);
        total += out[idx];
      }
      for (std::size_t j = 0; j < s.extent; ++j) out[base + j * s.inner] /= total;
    }
  }
  return make_result(x.shape(), std::move(out), {x.impl()}, "softmax",
                     [s](GraphNode& node) { softmax_backward(node, s); });
}

Tensor masked_softmax(const Tensor& x, const std::vector<bool>& allowed) {
  require(x, "masked_softmax");
  check_finite(x, "masked_softmax");
  if (x.ndim() < 2) throw ShapeError("masked_softmax: need at least 2 dims, got " + to_string(x.shape()));
  const std::size_t lq = x.dim(-2), lk = x.dim(-1);
  if (allowed.size() != lq * lk) {
    throw ShapeError("masked_softmax: mask has " + std::to_string(allowed.size()) + " entries, scores are " +
                     std::to_string(lq) + "x" + std::to_string(lk));
  }
  const std::size_t rows = x.numel() / lk;
  std::vector<double> out(x.numel(), 0.0);
  const double* px = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t q = r % lq;
    const double* row = px + r * lk;
    double* dst = out.data() + r * lk;
    double mx = 0.0;
    bool any = false;
    for (std::size_t j = 0; j < lk; ++j) {
      if (!allowed[q * lk + j]) continue;
      mx = any ? std::max(mx, row[j]) : row[j];
      any = true;
    }
    if (!any) throw std::invalid_argument("masked_softmax: query row " + std::to_string(q) + " has no allowed key");
    double total = 0.0;
    for (std::size_t j = 0; j < lk; ++j) {
      if (!allowed[q * lk + j]) continue;
      dst[j] = std::exp(row[j] - mx);
      total += dst[j];
    }
    for (std::size_t j = 0; j < lk; ++j) dst[j] /= total;
  }
  const AxisSplit s{rows, lk, 1};
  return make_result(x.shape(), std::move(out), {x.impl()}, "masked_softmax",
                     [s](GraphNode& node) { softmax_backward(node, s); });
}

// ---------------------------------------------------------------------------
// Reductions and data movement

Tensor sum(const Tensor& x) {
  require(x, "sum");
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({}, {total}, {x.impl()}, "sum", [](GraphNode& node) {
    auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    const double g = node.output->grad[0];
    for (auto& gi : in->ensure_grad()) gi += g;
  });
}

Tensor mean(const Tensor& x) {
  require(x, "mean");
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double n = static_cast<double>(x.numel());
  return make_result({}, {total / n}, {x.impl()}, "mean", [n](GraphNode& node) {
    auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    const double g = node.output->grad[0] / n;
    for (auto& gi : in->ensure_grad()) gi += g;
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(x, "reshape");
  if (tsf::numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  return make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), {x.impl()}, "reshape",
                     [](GraphNode& node) {
                       auto& in = node.inputs[0];
                       if (!in->requires_grad) return;
                       auto gi = in->ensure_grad();
                       const auto& g = node.output->grad;
                       for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                     });
}

namespace {

// Visits every element of `shape` in row-major order, reporting the flat index
// of the same element in a tensor whose axes a and b are swapped.
template <class F>
void for_each_swapped(const Shape& shape, std::size_t a, std::size_t b, F f) {
  const std::size_t nd = shape.size();
  Shape swapped = shape;
  std::swap(swapped[a], swapped[b]);
  std::vector<std::size_t> stride_out(nd, 1);
  for (std::size_t i = nd - 1; i > 0; --i) stride_out[i - 1] = stride_out[i] * swapped[i];
  // Stride in the swapped tensor for stepping along each source axis.
  std::vector<std::size_t> step = stride_out;
  std::swap(step[a], step[b]);
  std::vector<std::size_t> idx(nd, 0);
  const std::size_t n = tsf::numel(shape);
  std::size_t dst = 0;
  for (std::size_t src = 0; src < n; ++src) {
    f(src, dst);
    for (std::size_t d = nd; d-- > 0;) {
      if (++idx[d] < shape[d]) {
        dst += step[d];
        break;
      }
      dst -= step[d] * (shape[d] - 1);
      idx[d] = 0;
    }
  }
}

}  // namespace

Tensor transpose(const Tensor& x, int axis_a, int axis_b) {
  require(x, "transpose");
  const auto a = norm_axis(axis_a, x.ndim(), "transpose");
  const auto b = norm_axis(axis_b, x.ndim(), "transpose");
  Shape shape = x.shape();
  std::swap(shape[a], shape[b]);
  std::vector<double> out(x.numel());
  const double* px = x.data().data();
  for_each_swapped(x.shape(), a, b, [&](std::size_t src, std::size_t dst) { out[dst] = px[src]; });
  const Shape in_shape = x.shape();
  return make_result(std::move(shape), std::move(out), {x.impl()}, "transpose", [in_shape, a, b](GraphNode& node) {
    auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    auto gi = in->ensure_grad();
    const auto& g = node.output->grad;
    for_each_swapped(in_shape, a, b, [&](std::size_t src, std::size_t dst) { gi[src] += g[dst]; });
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  for (const auto& p : parts) require(p, "concat");
  const auto ax = norm_axis(axis, parts[0].ndim(), "concat");
  Shape ref = parts[0].shape();
  ref[ax] = 0;
  Shape shape = ref;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() == ref.size()) probe[ax] = 0;
    if (probe != ref) {
      throw ShapeError("concat: " + to_string(p.shape()) + " incompatible with " + to_string(parts[0].shape()));
    }
    shape[ax] += p.shape()[ax];
  }
  const AxisSplit s = split_at(shape, ax);
  std::vector<double> out(tsf::numel(shape));
  std::vector<std::size_t> widths;
  std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(static_cast<int>(ax)) * s.inner;
    const double* src = p.data().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(src + o * w, w, out.data() + o * s.extent * s.inner + offset);
    }
    offset += w;
    widths.push_back(w);
    inputs.push_back(p.impl());
  }
  const std::size_t row = s.extent * s.inner;
  const std::size_t outer = s.outer;
  return make_result(std::move(shape), std::move(out), std::move(inputs), "concat",
                     [widths, row, outer](GraphNode& node) {
                       const auto& g = node.output->grad;
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         auto& in = node.inputs[k];
                         const std::size_t w = widths[k];
                         if (in->requires_grad) {
                           auto gi = in->ensure_grad();
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t j = 0; j < w; ++j) gi[o * w + j] += g[o * row + off + j];
                           }
                         }
                         off += w;
                       }
                     });
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  require(x, "slice");
  const auto ax = norm_axis(axis, x.ndim(), "slice");
  if (length == 0 || start + length > x.shape()[ax]) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range for axis " + std::to_string(ax) + " of " + to_string(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), ax);
  Shape shape = x.shape();
  shape[ax] = length;
  const std::size_t w = length * s.inner;
  const std::size_t row = s.extent * s.inner;
  const std::size_t off = start * s.inner;
  std::vector<double> out(s.outer * w);
  const double* px = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) std::copy_n(px + o * row + off, w, out.data() + o * w);
  const std::size_t outer = s.outer;
  return make_result(std::move(shape), std::move(out), {x.impl()}, "slice", [outer, w, row, off](GraphNode& node) {
    auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    auto gi = in->ensure_grad();
    const auto& g = node.output->grad;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < w; ++j) gi[o * row + off + j] += g[o * w + j];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require(x, "layer_norm");
  const std::size_t d = x.dim(-1);
  if (d < 2) throw ShapeError("layer_norm: normalized axis needs at least 2 features");
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gain/bias must be (" + std::to_string(d) + "), got " + to_string(gain.shape()) +
                     " and " + to_string(bias.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> rstd(rows);
  const double* px = x.data().data();
  const double* pg = gain.data().data();
  const double* pb = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = px + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const auto idx = r * d + j;
      xhat[idx] = (row[j] - mu) * rstd[r];
      out[idx] = xhat[idx] * pg[j] + pb[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x.impl(), gain.impl(), bias.impl()}, "layer_norm",
                     [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](GraphNode& node) {
                       auto& ix = node.inputs[0];
                       auto& ig = node.inputs[1];
                       auto& ib = node.inputs[2];
                       const auto& g = node.output->grad;
                       const double* gain_v = ig->data.data();
                       double* gg = ig->requires_grad ? ig->ensure_grad().data() : nullptr;
                       double* gb = ib->requires_grad ? ib->ensure_grad().data() : nullptr;
                       double* gx = ix->requires_grad ? ix->ensure_grad().data() : nullptr;
                       std::vector<double> dxhat(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double m1 = 0.0, m2 = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const auto idx = r * d + j;
                           if (gg) gg[j] += g[idx] * xhat[idx];
                           if (gb) gb[j] += g[idx];
                           dxhat[j] = g[idx] * gain_v[j];
                           m1 += dxhat[j];
                           m2 += dxhat[j] * xhat[idx];
                         }
                         if (!gx) continue;
                         m1 /= static_cast<double>(d);
                         m2 /= static_cast<double>(d);
                         for (std::size_t j = 0; j < d; ++j) {
                           const auto idx = r * d + j;
                           gx[idx] += rstd[r] * (dxhat[j] - m1 - xhat[idx] * m2);
                         }
                       }
                     });
}

}  // namespace tsf
