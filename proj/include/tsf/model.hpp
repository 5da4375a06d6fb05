#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsf/layers.hpp"
#include "tsf/tensor.hpp"

namespace tsf {

enum class ModelKind { Lstm, EncTst, VTst, TstLstm, EncTstDecLstm };

inline constexpr ModelKind kAllKinds[] = {ModelKind::Lstm, ModelKind::EncTst, ModelKind::VTst, ModelKind::TstLstm,
                                          ModelKind::EncTstDecLstm};

/// Canonical names: LSTM, ENC_TST, V_TST, TST_LSTM, ENC_TST_DEC_LSTM.
std::string to_string(ModelKind kind);
/// Accepts canonical names case-insensitively, with '-' for '_'.
/// Throws std::invalid_argument listing the allowed names.
ModelKind parse_kind(const std::string& name);

/// Architecture selector and sizes. Defaults are the reference table values.
struct ModelSpec {
  ModelKind kind = ModelKind::VTst;
  std::size_t n_encoders = 4;
  std::size_t n_decoders = 4;
  std::size_t n_heads = 8;
  std::size_t d_model = 128;
  std::size_t ffn_width = 128;
  std::size_t lstm_layers = 4;
  std::size_t input_features = 15;
  std::size_t output_features = 2;
  std::size_t window = 12;
  std::size_t horizon = 6;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// True for kinds whose decoder consumes a target sequence (V_TST, TST_LSTM).
bool uses_decoder_input(ModelKind kind);

enum class Mode {
  Train,     // decoder input is the shifted ground truth (teacher forcing)
  Inference  // decoder input seeded with its first row, then fed its own outputs
};

/// One of the five forecasting architectures with its parameters.
class Model {
 public:
  Model(const ModelSpec& spec, std::uint64_t seed);
  ~Model();
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// x_enc: (B, W, F). decoder_input: (B, H, v) holding the last observed
  /// targets followed by the next H-1 targets; required by decoder-input kinds
  /// (only its first row is read in inference mode), ignored otherwise.
  /// Returns (B, H, v).
  Tensor forward(const Tensor& x_enc, const Tensor* decoder_input, Mode mode) const;

  const ModelSpec& spec() const { return spec_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  std::size_t count_parameters() const { return store_.count(); }

 private:
  struct Impl;
  ModelSpec spec_;
  ParameterStore store_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tsf
