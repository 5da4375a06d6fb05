#include "tsf/model.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <variant>

namespace tsf {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Lstm: return "LSTM";
    case ModelKind::EncTst: return "ENC_TST";
    case ModelKind::VTst: return "V_TST";
    case ModelKind::TstLstm: return "TST_LSTM";
    case ModelKind::EncTstDecLstm: return "ENC_TST_DEC_LSTM";
  }
  throw std::invalid_argument("unknown model kind");
}

ModelKind parse_kind(const std::string& name) {
  std::string norm = name;
  std::transform(norm.begin(), norm.end(), norm.begin(), [](unsigned char c) {
    return c == '-' ? '_' : static_cast<char>(std::toupper(c));
  });
  for (auto kind : kAllKinds) {
    if (to_string(kind) == norm) return kind;
  }
  throw std::invalid_argument("unknown model kind \"" + name +
                              "\"; allowed: LSTM, ENC_TST, V_TST, TST_LSTM, ENC_TST_DEC_LSTM");
}

bool uses_decoder_input(ModelKind kind) { return kind == ModelKind::VTst || kind == ModelKind::TstLstm; }

void ModelSpec::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw std::invalid_argument(std::string("model.") + what + " must be positive");
  };
  positive(n_heads, "n_heads");
  positive(d_model, "d_model");
  positive(ffn_width, "ffn_width");
  positive(input_features, "input_features");
  positive(output_features, "output_features");
  positive(window, "window");
  positive(horizon, "horizon");
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("model.d_model (" + std::to_string(d_model) + ") must be divisible by model.n_heads (" +
                                std::to_string(n_heads) + ")");
  }
  if (d_model % 2 != 0) throw std::invalid_argument("model.d_model must be even for the positional encoding");
  if (kind != ModelKind::Lstm) positive(n_encoders, "n_encoders");
  if (uses_decoder_input(kind)) positive(n_decoders, "n_decoders");
  if (kind == ModelKind::Lstm || kind == ModelKind::EncTstDecLstm) positive(lstm_layers, "lstm_layers");
}

namespace {

/// Recurrent replacement for the feed-forward sub-layer: a one-layer LSTM
/// over the block's sequence, projected back to d_model.
struct RecurrentSublayer {
  Lstm lstm;
  Linear proj;
  Tensor forward(const Tensor& x) const { return proj.forward(lstm.forward(x).sequence); }
};

using Sublayer = std::variant<FeedForward, RecurrentSublayer>;

Tensor apply_sublayer(const Sublayer& s, const Tensor& x) {
  return std::visit([&](const auto& layer) { return layer.forward(x); }, s);
}

Sublayer make_sublayer(ParameterStore& store, const std::string& name, const ModelSpec& spec, Rng& rng) {
  if (spec.kind == ModelKind::TstLstm) {
    RecurrentSublayer r;
    r.lstm = Lstm(store, name + ".lstm", spec.d_model, spec.d_model, 1, rng);
    r.proj = Linear(store, name + ".proj", spec.d_model, spec.d_model, rng);
    return r;
  }
  return FeedForward(store, name + ".ffn", spec.d_model, spec.ffn_width, rng);
}

struct EncoderBlock {
  LayerNorm norm1, norm2;
  MultiHeadAttention self_attn;
  Sublayer sub;

  // Pre-norm residual block.
  Tensor forward(const Tensor& x) const {
    Tensor n1 = norm1.forward(x);
    Tensor h = add(x, self_attn.forward(n1, n1));
    return add(h, apply_sublayer(sub, norm2.forward(h)));
  }
};

struct DecoderBlock {
  LayerNorm norm1, norm2, norm3;
  MultiHeadAttention self_attn, cross_attn;
  Sublayer sub;

  Tensor forward(const Tensor& x, const Tensor& memory, const std::vector<bool>& mask) const {
    Tensor n1 = norm1.forward(x);
    Tensor h = add(x, self_attn.forward(n1, n1, &mask));
    h = add(h, cross_attn.forward(norm2.forward(h), memory));
    return add(h, apply_sublayer(sub, norm3.forward(h)));
  }
};

}  // namespace

struct Model::Impl {
  // Encoder side (all kinds except LSTM).
  Linear embed;
  Tensor enc_pe;
  std::vector<EncoderBlock> encoders;
  LayerNorm enc_norm;
  // Decoder side (V_TST, TST_LSTM).
  Linear dec_embed;
  Tensor dec_pe;
  std::vector<DecoderBlock> decoders;
  LayerNorm dec_norm;
  std::vector<bool> dec_mask;
  // Recurrent stack (LSTM, ENC_TST_DEC_LSTM).
  Linear lstm_in;
  Lstm lstm;
  Linear head;

  Tensor encode(const Tensor& x) const {
    Tensor h = add(embed.forward(x), enc_pe);
    for (const auto& block : encoders) h = block.forward(h);
    return enc_norm.forward(h);
  }

  Tensor decode(const Tensor& dec_in, const Tensor& memory) const {
    Tensor h = add(dec_embed.forward(dec_in), dec_pe);
    for (const auto& block : decoders) h = block.forward(h, memory, dec_mask);
    return head.forward(dec_norm.forward(h));
  }
};

Model::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec), impl_(std::make_unique<Impl>()) {
  spec_.validate();
  Rng rng(seed);
  auto& m = *impl_;
  const auto d = spec_.d_model;
  const auto out = spec_.horizon * spec_.output_features;

  if (spec_.kind == ModelKind::Lstm) {
    m.lstm_in = Linear(store_, "input", spec_.input_features, d, rng);
    m.lstm = Lstm(store_, "lstm", d, d, spec_.lstm_layers, rng);
    m.head = Linear(store_, "head", d, out, rng);
    return;
  }

  m.embed = Linear(store_, "enc.embed", spec_.input_features, d, rng);
  m.enc_pe = positional_encoding(spec_.window, d);
  for (std::size_t i = 0; i < spec_.n_encoders; ++i) {
    const std::string p = "enc." + std::to_string(i);
    EncoderBlock b;
    b.norm1 = LayerNorm(store_, p + ".norm1", d);
    b.self_attn = MultiHeadAttention(store_, p + ".self_attn", d, spec_.n_heads, rng);
    b.norm2 = LayerNorm(store_, p + ".norm2", d);
    b.sub = make_sublayer(store_, p, spec_, rng);
    m.encoders.push_back(std::move(b));
  }
  m.enc_norm = LayerNorm(store_, "enc.norm", d);

  switch (spec_.kind) {
    case ModelKind::EncTst:
      m.head = Linear(store_, "head", spec_.window * d, out, rng);
      break;
    case ModelKind::EncTstDecLstm:
      m.lstm = Lstm(store_, "dec.lstm", d, d, spec_.lstm_layers, rng);
      m.head = Linear(store_, "head", d, out, rng);
      break;
    case ModelKind::VTst:
    case ModelKind::TstLstm: {
      m.dec_embed = Linear(store_, "dec.embed", spec_.output_features, d, rng);
      m.dec_pe = positional_encoding(spec_.horizon, d);
      m.dec_mask = causal_mask(spec_.horizon, spec_.horizon);
      for (std::size_t i = 0; i < spec_.n_decoders; ++i) {
        const std::string p = "dec." + std::to_string(i);
        DecoderBlock b;
        b.norm1 = LayerNorm(store_, p + ".norm1", d);
        b.self_attn = MultiHeadAttention(store_, p + ".self_attn", d, spec_.n_heads, rng);
        b.norm2 = LayerNorm(store_, p + ".norm2", d);
        b.cross_attn = MultiHeadAttention(store_, p + ".cross_attn", d, spec_.n_heads, rng);
        b.norm3 = LayerNorm(store_, p + ".norm3", d);
        b.sub = make_sublayer(store_, p, spec_, rng);
        m.decoders.push_back(std::move(b));
      }
      m.dec_norm = LayerNorm(store_, "dec.norm", d);
      m.head = Linear(store_, "head", d, spec_.output_features, rng);
      break;
    }
    case ModelKind::Lstm:
      break;
  }
}

Model::~Model() = default;
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;

Tensor Model::forward(const Tensor& x_enc, const Tensor* decoder_input, Mode mode) const {
  const auto& s = spec_;
  if (x_enc.ndim() != 3 || x_enc.dim(1) != s.window || x_enc.dim(2) != s.input_features) {
    throw ShapeError("encoder input must be (B, " + std::to_string(s.window) + ", " +
                     std::to_string(s.input_features) + "), got " + to_string(x_enc.shape()));
  }
  const std::size_t batch = x_enc.dim(0);
  const Shape out_shape{batch, s.horizon, s.output_features};
  const auto& m = *impl_;

  switch (s.kind) {
    case ModelKind::Lstm: {
      auto run = m.lstm.forward(m.lstm_in.forward(x_enc));
      return reshape(m.head.forward(run.final.back().h), out_shape);
    }
    case ModelKind::EncTst: {
      Tensor enc = m.encode(x_enc);
      return reshape(m.head.forward(reshape(enc, {batch, s.window * s.d_model})), out_shape);
    }
    case ModelKind::EncTstDecLstm: {
      auto run = m.lstm.forward(m.encode(x_enc));
      return reshape(m.head.forward(run.final.back().h), out_shape);
    }
    case ModelKind::VTst:
    case ModelKind::TstLstm:
      break;
  }

  if (!decoder_input) {
    throw std::invalid_argument(to_string(s.kind) + " needs a decoder input (teacher sequence or start values)");
  }
  if (decoder_input->shape() != out_shape) {
    throw ShapeError("decoder input must be " + to_string(out_shape) + ", got " + to_string(decoder_input->shape()));
  }
  if (mode == Mode::Train) return m.decode(*decoder_input, m.encode(x_enc));

  NoGradGuard no_grad;
  const Tensor memory = m.encode(x_enc);

  // Greedy autoregressive decoding over a fixed-length buffer: row 0 holds the
  // last observed targets, row s+1 receives prediction s. Rows beyond the
  // current step are zero and invisible through the causal mask.
  const std::size_t v = s.output_features, h = s.horizon;
  std::vector<double> buffer(batch * h * v, 0.0);
  std::vector<double> preds(batch * h * v, 0.0);
  const auto src = decoder_input->data();
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(src.data() + b * h * v, v, buffer.data() + b * h * v);
  }
  for (std::size_t step = 0; step < h; ++step) {
    const Tensor out = m.decode(Tensor(out_shape, buffer), memory);
    const auto y = out.data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < v; ++j) {
        const double value = y[(b * h + step) * v + j];
        preds[(b * h + step) * v + j] = value;
        if (step + 1 < h) buffer[(b * h + step + 1) * v + j] = value;
      }
    }
  }
  return Tensor(out_shape, std::move(preds));
}

}  // namespace tsf
