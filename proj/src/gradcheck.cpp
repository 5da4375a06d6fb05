#include "tsf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tsf/layers.hpp"
#include "tsf/model.hpp"
#include "tsf/train.hpp"

namespace tsf {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

Tensor probe_loss(const Tensor& y) {
  std::vector<double> w(y.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 + 1.618 * static_cast<double>(i));
  return sum(mul(y, Tensor(y.shape(), std::move(w))));
}

double max_gradient_error(const std::function<Tensor()>& loss, std::vector<Tensor> wrt, double step,
                          std::size_t* checked) {
  auto& graph = ComputeGraph::current();
  graph.reset();
  for (auto& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  backward(loss());
  std::vector<std::vector<double>> analytic;
  for (const auto& t : wrt) {
    analytic.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                       : std::vector<double>(t.numel(), 0.0));
  }

  NoGradGuard guard;
  double worst = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto data = wrt[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double v = data[i];
      data[i] = v + step;
      const double up = loss().item();
      data[i] = v - step;
      const double down = loss().item();
      data[i] = v;
      worst = std::max(worst, relative_error(analytic[k][i], (up - down) / (2.0 * step)));
      ++n;
    }
  }
  for (auto& t : wrt) t.zero_grad();
  if (checked) *checked = n;
  return worst;
}

namespace {

struct Suite {
  const GradCheckOptions& opt;
  Rng rng;
  std::vector<GradCheckResult> results;

  Tensor rand(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor(std::move(shape), std::move(v));
  }

  // Values bounded away from zero, for kinked functions.
  Tensor rand_away(Shape shape) {
    auto t = rand(std::move(shape));
    for (auto& x : t.mutable_data()) x = x < 0 ? x - 0.1 : x + 0.1;
    return t;
  }

  // One named entry; the worst error over all its variants.
  void check(const std::string& name, const std::string& group,
             const std::vector<std::pair<std::function<Tensor()>, std::vector<Tensor>>>& variants) {
    GradCheckResult r;
    r.name = name;
    r.group = group;
    for (const auto& [f, wrt] : variants) {
      std::size_t n = 0;
      r.max_rel_error = std::max(r.max_rel_error, max_gradient_error(f, wrt, opt.step, &n));
      r.checked += n;
    }
    r.passed = r.max_rel_error < opt.tolerance;
    results.push_back(r);
  }

  static std::vector<Tensor> with_params(std::vector<Tensor> inputs, const ParameterStore& store) {
    for (const auto& [name, t] : store.entries()) inputs.push_back(t);
    return inputs;
  }

  void primitives() {
    const Shape s{2, 3, 4};
    auto binary = [&](const std::string& name, Tensor (*op)(const Tensor&, const Tensor&)) {
      auto a = rand(s), b = rand(s), c = rand({4}), d = rand({}), e = rand({3, 4});
      check(name, "primitive",
            {{[=] { return probe_loss(op(a, b)); }, {a, b}},
             {[=] { return probe_loss(op(a, c)); }, {a, c}},
             {[=] { return probe_loss(op(e, a)); }, {e, a}},
             {[=] { return probe_loss(op(a, d)); }, {a, d}}});
    };
    binary("add", add);
    binary("sub", sub);
    binary("mul", mul);
    {
      auto x = rand(s);
      check("scale", "primitive", {{[=] { return probe_loss(scale(x, -1.7)); }, {x}}});
    }
    {
      auto x = rand(s, -2.0, 2.0);
      check("tanh", "primitive", {{[=] { return probe_loss(tsf::tanh(x)); }, {x}}});
    }
    {
      auto x = rand(s, -3.0, 3.0);
      check("sigmoid", "primitive", {{[=] { return probe_loss(sigmoid(x)); }, {x}}});
    }
    {
      auto x = rand_away(s);
      check("relu", "primitive", {{[=] { return probe_loss(relu(x)); }, {x}}});
    }
    {
      auto a = rand({2, 3, 4}), b2 = rand({4, 5}), a2 = rand({3, 4}), b3 = rand({2, 4, 5}), m = rand({3, 4}),
           n = rand({4, 2});
      check("matmul", "primitive",
            {{[=] { return probe_loss(matmul(m, n)); }, {m, n}},
             {[=] { return probe_loss(matmul(a, b2)); }, {a, b2}},
             {[=] { return probe_loss(matmul(a2, b3)); }, {a2, b3}},
             {[=] { return probe_loss(matmul(a, b3)); }, {a, b3}}});
    }
    {
      auto x = rand(s, -2.0, 2.0);
      check("softmax", "primitive",
            {{[=] { return probe_loss(softmax(x, -1)); }, {x}}, {[=] { return probe_loss(softmax(x, 1)); }, {x}}});
    }
    {
      auto x = rand({2, 4, 4}, -2.0, 2.0);
      const auto mask = causal_mask(4, 4);
      check("masked_softmax", "primitive", {{[=] { return probe_loss(masked_softmax(x, mask)); }, {x}}});
    }
    {
      auto x = rand(s);
      check("sum", "primitive", {{[=] { return sum(mul(x, x)); }, {x}}, {[=] { return sum(x); }, {x}}});
    }
    {
      auto x = rand(s);
      check("mean", "primitive", {{[=] { return mean(mul(x, x)); }, {x}}});
    }
    {
      auto x = rand(s);
      check("reshape", "primitive", {{[=] { return probe_loss(reshape(x, {6, 4})); }, {x}}});
    }
    {
      auto x = rand(s);
      check("transpose", "primitive",
            {{[=] { return probe_loss(transpose(x, 0, 2)); }, {x}},
             {[=] { return probe_loss(transpose(x, 1, 2)); }, {x}}});
    }
    {
      auto a = rand({2, 3, 4}), b = rand({2, 1, 4}), c = rand({2, 3, 2});
      check("concat", "primitive",
            {{[=] { return probe_loss(concat({a, b}, 1)); }, {a, b}},
             {[=] { return probe_loss(concat({a, c}, -1)); }, {a, c}}});
    }
    {
      auto x = rand(s);
      check("slice", "primitive",
            {{[=] { return probe_loss(slice(x, 1, 1, 2)); }, {x}}, {[=] { return probe_loss(slice(x, 2, 3, 1)); }, {x}}});
    }
    {
      auto x = rand(s, -2.0, 2.0), g = rand({4}, 0.5, 1.5), b = rand({4});
      check("layer_norm", "primitive", {{[=] { return probe_loss(layer_norm(x, g, b)); }, {x, g, b}}});
    }
  }

  void layers() {
    const std::size_t B = 2, L = 4, D = 8, heads = 2;
    {
      ParameterStore store;
      Linear lin(store, "lin", 3, 5, rng);
      auto x = rand({B, L, 3});
      check("linear", "layer", {{[=] { return probe_loss(lin.forward(x)); }, with_params({x}, store)}});
    }
    {
      ParameterStore store;
      Linear embed(store, "embed", 3, D, rng);
      const auto pe = positional_encoding(L, D);
      auto x = rand({B, L, 3});
      check("embedding_positional", "layer",
            {{[=] { return probe_loss(add(embed.forward(x), pe)); }, with_params({x}, store)}});
    }
    {
      auto q = rand({B, 3, 4}), k = rand({B, 5, 4}), v = rand({B, 5, 3});
      auto qs = rand({B, 4, 4}), ks = rand({B, 4, 4}), vs = rand({B, 4, 3});
      const auto mask = causal_mask(4, 4);
      check("attention_head", "layer",
            {{[=] { return probe_loss(scaled_dot_attention(q, k, v).output); }, {q, k, v}},
             {[=] { return probe_loss(scaled_dot_attention(qs, ks, vs, &mask).output); }, {qs, ks, vs}}});
    }
    {
      ParameterStore store;
      MultiHeadAttention mha(store, "mha", D, heads, rng);
      auto x = rand({B, L, D}), mem = rand({B, L + 2, D});
      const auto mask = causal_mask(L, L);
      check("multi_head_self_attention", "layer",
            {{[=] { return probe_loss(mha.forward(x, x)); }, with_params({x}, store)}});
      check("multi_head_masked_self_attention", "layer",
            {{[=] { return probe_loss(mha.forward(x, x, &mask)); }, with_params({x}, store)}});
      check("multi_head_cross_attention", "layer",
            {{[=] { return probe_loss(mha.forward(x, mem)); }, with_params({x, mem}, store)}});
    }
    {
      ParameterStore store;
      FeedForward ffn(store, "ffn", D, 6, rng);
      auto x = rand({B, L, D});
      check("feed_forward", "layer", {{[=] { return probe_loss(ffn.forward(x)); }, with_params({x}, store)}});
    }
    {
      ParameterStore store;
      LayerNorm norm(store, "norm", D);
      // Move gain and bias off their unit/zero initialization.
      std::uniform_real_distribution<double> jitter(-0.3, 0.3);
      for (auto& [name, t] : store.entries()) {
        for (auto& v : t.mutable_data()) v += jitter(rng);
      }
      auto x = rand({B, L, D}, -2.0, 2.0);
      check("layer_norm_layer", "layer", {{[=] { return probe_loss(norm.forward(x)); }, with_params({x}, store)}});
    }
    {
      ParameterStore store;
      Lstm cell(store, "cell", 3, 5, 1, rng);
      auto x = rand({B, 1, 3}), h = rand({B, 5}), c = rand({B, 5});
      check("lstm_cell", "layer",
            {{[=] {
                const auto out = cell.forward(x, {LstmState{h, c}});
                return add(probe_loss(out.final[0].h), scale(probe_loss(out.final[0].c), 0.5));
              },
              with_params({x, h, c}, store)}});
    }
    {
      ParameterStore store;
      Lstm stack(store, "stack", 3, 4, 2, rng);
      auto x = rand({B, L, 3});
      check("lstm_stack", "layer",
            {{[=] {
                const auto out = stack.forward(x);
                return add(probe_loss(out.sequence), probe_loss(out.final[0].c));
              },
              with_params({x}, store)}});
    }
    {
      auto p = rand({B, 3, 2}), t = rand({B, 3, 2});
      check("mse_loss", "layer", {{[=] { return mse_loss(p, t); }, {p, t}}});
    }
  }

  void models() {
    for (const auto kind : kAllKinds) {
      ModelSpec spec;
      spec.kind = kind;
      spec.n_encoders = 1;
      spec.n_decoders = 1;
      spec.n_heads = 2;
      spec.d_model = 4;
      spec.ffn_width = 4;
      spec.lstm_layers = 2;
      spec.input_features = 3;
      spec.output_features = 2;
      spec.window = 4;
      spec.horizon = 3;
      Model model(spec, opt.seed);
      auto x = rand({2, spec.window, spec.input_features});
      auto teacher = rand({2, spec.horizon, spec.output_features});
      auto y = rand({2, spec.horizon, spec.output_features});
      const Model* m = &model;
      check("model_" + to_string(kind), "model",
            {{[=] { return mse_loss(m->forward(x, &teacher, Mode::Train), y); },
              with_params({x, teacher}, model.parameters())}});
    }
  }
};

}  // namespace

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options) {
  auto& graph = ComputeGraph::current();
  if (options.fault_op) graph.set_fault(*options.fault_op, options.fault_factor);
  Suite suite{options, Rng(options.seed), {}};
  try {
    suite.primitives();
    suite.layers();
    suite.models();
  } catch (...) {
    graph.clear_fault();
    graph.reset();
    throw;
  }
  graph.clear_fault();
  return std::move(suite.results);
}

}  // namespace tsf
