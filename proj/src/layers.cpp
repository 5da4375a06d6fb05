#include "tsf/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace tsf {

Tensor& ParameterStore::add(std::string name, Tensor value) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  entries_.emplace_back(std::move(name), std::move(value));
  return entries_.back().second;
}

const Tensor* ParameterStore::find(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::size_t ParameterStore::count() const {
  std::size_t total = 0;
  for (const auto& entry : entries_) total += entry.second.numel();
  return total;
}

void ParameterStore::zero_grad() {
  for (auto& entry : entries_) entry.second.zero_grad();
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data));
}

Tensor positional_encoding(std::size_t seq_len, std::size_t d_model) {
  if (d_model % 2 != 0) throw std::invalid_argument("positional encoding needs an even d_model, got " + std::to_string(d_model));
  std::vector<double> pe(seq_len * d_model);
  for (std::size_t pos = 0; pos < seq_len; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe[pos * d_model + 2 * i] = std::sin(angle);
      pe[pos * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor({seq_len, d_model}, std::move(pe));
}

std::vector<bool> causal_mask(std::size_t lq, std::size_t lk) {
  std::vector<bool> mask(lq * lk, false);
  for (std::size_t q = 0; q < lq; ++q) {
    for (std::size_t k = 0; k <= q && k < lk; ++k) mask[q * lk + k] = true;
  }
  return mask;
}

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const std::vector<bool>* mask) {
  if (q.ndim() < 2 || k.ndim() != q.ndim() || v.ndim() != q.ndim() || q.dim(-1) != k.dim(-1) ||
      k.dim(-2) != v.dim(-2)) {
    throw ShapeError("attention: incompatible Q " + to_string(q.shape()) + ", K " + to_string(k.shape()) + ", V " +
                     to_string(v.shape()));
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.dim(-1)));
  Tensor scores = scale(matmul(q, transpose(k, -2, -1)), inv_sqrt_dk);
  Tensor weights = mask ? masked_softmax(scores, *mask) : softmax(scores, -1);
  return {matmul(weights, v), weights};
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
               bool with_bias) {
  weight_ = store.add(name + ".weight", xavier_uniform({in, out}, in, out, rng));
  if (with_bias) bias_ = store.add(name + ".bias", Tensor::zeros({out}));
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, weight_);
  return bias_.defined() ? add(y, bias_) : y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim) {
  gain_ = store.add(name + ".gain", Tensor::full({dim}, 1.0));
  bias_ = store.add(name + ".bias", Tensor::zeros({dim}));
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t width,
                         Rng& rng)
    : first_(store, name + ".fc1", d_model, width, rng), second_(store, name + ".fc2", width, d_model, rng) {}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t d_model,
                                       std::size_t heads, Rng& rng)
    : d_model_(d_model), heads_(heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw std::invalid_argument("d_model " + std::to_string(d_model) + " not divisible by " + std::to_string(heads) +
                                " heads");
  }
  wq_ = Linear(store, name + ".wq", d_model, d_model, rng);
  wk_ = Linear(store, name + ".wk", d_model, d_model, rng);
  wv_ = Linear(store, name + ".wv", d_model, d_model, rng);
  wo_ = Linear(store, name + ".wo", d_model, d_model, rng);
}

// (B, L, d_model) -> (B, heads, L, d_model / heads)
Tensor MultiHeadAttention::split_heads(const Tensor& x) const {
  const std::size_t b = x.dim(0), l = x.dim(1);
  return transpose(reshape(x, {b, l, heads_, d_model_ / heads_}), 1, 2);
}

AttentionResult MultiHeadAttention::forward_detailed(const Tensor& x_q, const Tensor& x_kv,
                                                     const std::vector<bool>* mask) const {
  if (x_q.ndim() != 3 || x_kv.ndim() != 3 || x_q.dim(-1) != d_model_ || x_kv.dim(-1) != d_model_ ||
      x_q.dim(0) != x_kv.dim(0)) {
    throw ShapeError("multi-head attention expects (B, L, " + std::to_string(d_model_) + ") inputs, got " +
                     to_string(x_q.shape()) + " and " + to_string(x_kv.shape()));
  }
  const std::size_t b = x_q.dim(0), lq = x_q.dim(1);
  Tensor q = split_heads(wq_.forward(x_q));
  Tensor k = split_heads(wk_.forward(x_kv));
  Tensor v = split_heads(wv_.forward(x_kv));
  AttentionResult heads = scaled_dot_attention(q, k, v, mask);
  Tensor merged = reshape(transpose(heads.output, 1, 2), {b, lq, d_model_});
  return {wo_.forward(merged), heads.weights};
}

Tensor MultiHeadAttention::forward(const Tensor& x_q, const Tensor& x_kv, const std::vector<bool>* mask) const {
  return forward_detailed(x_q, x_kv, mask).output;
}

Lstm::Lstm(ParameterStore& store, const std::string& name, std::size_t input_size, std::size_t hidden,
           std::size_t layers, Rng& rng)
    : hidden_(hidden) {
  if (layers == 0 || hidden == 0) throw std::invalid_argument("LSTM needs at least one layer and unit");
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = name + "." + std::to_string(l);
    const std::size_t in = l == 0 ? input_size : hidden;
    w_ih_.push_back(store.add(p + ".w_ih", xavier_uniform({in, 4 * hidden}, in, hidden, rng)));
    w_hh_.push_back(store.add(p + ".w_hh", xavier_uniform({hidden, 4 * hidden}, hidden, hidden, rng)));
    std::vector<double> b(4 * hidden, 0.0);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;
    bias_.push_back(store.add(p + ".bias", Tensor({4 * hidden}, std::move(b))));
  }
}

LstmOutput Lstm::forward(const Tensor& x, const std::vector<LstmState>& initial) const {
  if (x.ndim() != 3 || x.dim(-1) != w_ih_[0].dim(0)) {
    throw ShapeError("LSTM expects (B, L, " + std::to_string(w_ih_[0].dim(0)) + "), got " + to_string(x.shape()));
  }
  if (!initial.empty() && initial.size() != layers()) {
    throw std::invalid_argument("LSTM initial state needs one entry per layer");
  }
  const std::size_t batch = x.dim(0), len = x.dim(1), hs = hidden_;
  LstmOutput result;
  Tensor input = x;
  for (std::size_t l = 0; l < layers(); ++l) {
    Tensor h = initial.empty() ? Tensor::zeros({batch, hs}) : initial[l].h;
    Tensor c = initial.empty() ? Tensor::zeros({batch, hs}) : initial[l].c;
    const Tensor projected = add(matmul(input, w_ih_[l]), bias_[l]);  // (B, L, 4H)
    std::vector<Tensor> outputs;
    outputs.reserve(len);
    for (std::size_t t = 0; t < len; ++t) {
      Tensor gates = add(reshape(slice(projected, 1, t, 1), {batch, 4 * hs}), matmul(h, w_hh_[l]));
      Tensor i = sigmoid(slice(gates, -1, 0, hs));
      Tensor f = sigmoid(slice(gates, -1, hs, hs));
      Tensor g = tanh(slice(gates, -1, 2 * hs, hs));
      Tensor o = sigmoid(slice(gates, -1, 3 * hs, hs));
      c = add(mul(f, c), mul(i, g));
      h = mul(o, tanh(c));
      outputs.push_back(reshape(h, {batch, 1, hs}));
    }
    input = len == 1 ? outputs[0] : concat(outputs, 1);
    result.final.push_back({h, c});
  }
  result.sequence = input;
  return result;
}

}  // namespace tsf
