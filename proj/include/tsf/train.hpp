#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsf/data.hpp"
#include "tsf/model.hpp"
#include "tsf/tensor.hpp"

namespace tsf {

enum class Optimizer { Adam, Sgd };

std::string to_string(Optimizer opt);
Optimizer parse_optimizer(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::optional<double> grad_clip = 1.0;  // global L2 norm
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  /// Stop once the monitored loss (validation, or training when the split
  /// has no validation samples) falls below this.
  std::optional<double> target_loss;

  void validate() const;
};

/// Mean of squared differences over all elements.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

struct RSquared {
  double value = 0.0;   // NaN when undefined
  bool defined = false; // false when the target has zero variance
};

/// 1 - SS_res / SS_tot, SS_tot taken about the target mean.
RSquared r_squared(std::span<const double> pred, std::span<const double> target);

struct AdamState {
  std::vector<std::vector<double>> m, v;  // parallel to the parameter store
  std::uint64_t step = 0;
};

/// One Adam update from the gradients held by the parameters. A parameter
/// without a gradient is treated as having a zero gradient.
/// Throws std::runtime_error naming a parameter with a non-finite gradient.
void adam_step(ParameterStore& params, AdamState& state, const TrainConfig& cfg);
void sgd_step(ParameterStore& params, double learning_rate);
/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterStore& params, double max_norm);

/// Stacked batch tensors: x (B, W, F), teacher (B, H, v), y (B, H, v).
struct Batch {
  Tensor x, teacher, y;
};
Batch make_batch(const std::vector<WindowedSample>& samples, std::span<const std::size_t> indices,
                 const ModelSpec& spec);
Batch make_batch(const std::vector<WindowedSample>& samples, const ModelSpec& spec);

/// Mean normalized MSE over the samples in the given mode, without recording a graph.
double dataset_loss(const Model& model, const std::vector<WindowedSample>& samples, Mode mode,
                    std::size_t batch_size = 256);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;  // 0 means the initial parameters were best
  double best_val_loss = 0.0;
  bool early_stopped = false;
};

/// Minibatch training in place. Decoder-input kinds are teacher forced;
/// validation loss is measured with autoregressive decoding. The parameters
/// with the lowest validation loss are restored before returning. Without a
/// validation set, the end-of-epoch teacher-forced training loss is monitored
/// instead and logged in the val_loss column.
TrainResult train(Model& model, const DatasetSplit& split, const TrainConfig& cfg);

void write_train_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log);

struct EvalReport {
  std::string split;
  double mse = 0.0;                        // normalized units
  std::vector<double> mse_per_target;      // normalized units
  std::vector<std::string> targets;
  std::vector<RSquared> r2_per_target;     // physical units
  RSquared r2_pooled;                      // 1 - sum SS_res / sum SS_tot
  std::size_t parameter_count = 0;
  double seconds = 0.0;
  std::size_t window = 0, horizon = 0;
  ModelKind kind = ModelKind::VTst;
  std::size_t samples = 0;
};

/// Autoregressive evaluation; metrics in physical units via `stats`.
/// Throws std::invalid_argument on an empty sample list.
EvalReport evaluate(const Model& model, const std::vector<WindowedSample>& samples, const NormalizationStats& stats,
                    const std::string& split_name);

/// Report as JSON. Wall-clock seconds are included only when `with_timing`.
nlohmann::json to_json(const EvalReport& report, bool with_timing = false);

}  // namespace tsf
