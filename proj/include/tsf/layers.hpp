#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tsf/tensor.hpp"

namespace tsf {

/// Ordered, uniquely named collection of trainable tensors. Entries share
/// storage with the layers that registered them.
class ParameterStore {
 public:
  Tensor& add(std::string name, Tensor value);
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const Tensor* find(const std::string& name) const;
  std::size_t count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

using Rng = std::mt19937_64;

/// Xavier-uniform samples for a fan_in x fan_out weight, stored as `shape`.
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Sinusoidal table: PE[p, 2i] = sin(p / 10000^(2i/d)), PE[p, 2i+1] = cos(...).
Tensor positional_encoding(std::size_t seq_len, std::size_t d_model);

/// Lower-triangular mask (query t may see keys 0..t), row-major Lq x Lk.
std::vector<bool> causal_mask(std::size_t lq, std::size_t lk);

struct AttentionResult {
  Tensor output;   // (.., Lq, Dv)
  Tensor weights;  // (.., Lq, Lk), rows sum to 1
};

/// softmax(Q K^T / sqrt(Dk)) V with an optional Lq x Lk allow-mask.
AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     const std::vector<bool>* mask = nullptr);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool with_bias = true);

  Tensor forward(const Tensor& x) const;
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;  // (in, out)
  Tensor bias_;    // (out) or undefined
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gain_, bias_, 1e-5); }

 private:
  Tensor gain_, bias_;
};

/// Linear -> ReLU -> Linear, d_model -> width -> d_model.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t width, Rng& rng);
  Tensor forward(const Tensor& x) const { return second_.forward(relu(first_.forward(x))); }

 private:
  Linear first_, second_;
};

/// Multi-head attention. Head j owns column block j of the query, key and
/// value projections (Dk = Dv = d_model / heads); `out` combines the heads.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t heads, Rng& rng);

  /// x_q: (B, Lq, d_model); x_kv: (B, Lk, d_model).
  Tensor forward(const Tensor& x_q, const Tensor& x_kv, const std::vector<bool>* mask = nullptr) const;
  AttentionResult forward_detailed(const Tensor& x_q, const Tensor& x_kv, const std::vector<bool>* mask = nullptr) const;

  std::size_t heads() const { return heads_; }
  const Linear& query() const { return wq_; }
  const Linear& key() const { return wk_; }
  const Linear& value() const { return wv_; }
  const Linear& out() const { return wo_; }

 private:
  Tensor split_heads(const Tensor& x) const;
  std::size_t d_model_ = 0, heads_ = 0;
  Linear wq_, wk_, wv_, wo_;
};

struct LstmState {
  Tensor h;  // (B, hidden)
  Tensor c;  // (B, hidden)
};

struct LstmOutput {
  Tensor sequence;                // (B, L, hidden), top layer
  std::vector<LstmState> final;   // per layer
};

/// Stacked LSTM. Gate columns are ordered input, forget, cell candidate,
/// output; the forget-gate bias starts at 1.
class Lstm {
 public:
  Lstm() = default;
  Lstm(ParameterStore& store, const std::string& name, std::size_t input_size, std::size_t hidden,
       std::size_t layers, Rng& rng);

  /// Zero initial state when `initial` is empty.
  LstmOutput forward(const Tensor& x, const std::vector<LstmState>& initial = {}) const;

  std::size_t hidden() const { return hidden_; }
  std::size_t layers() const { return w_ih_.size(); }

 private:
  std::size_t hidden_ = 0;
  std::vector<Tensor> w_ih_, w_hh_, bias_;
};

}  // namespace tsf
