#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tsf/tensor.hpp"

namespace tsf {

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  /// Scale the upstream gradient of this primitive's backward rule, to
  /// confirm that the checker catches a broken rule.
  std::optional<std::string> fault_op;
  double fault_factor = 1.5;
};

struct GradCheckResult {
  std::string name;
  std::string group;     // "primitive", "layer" or "model"
  double max_rel_error = 0.0;
  std::size_t checked = 0;  // gradient entries compared
  bool passed = false;
};

/// Denominator floor of the relative error, so entries whose true gradient is
/// essentially zero are judged on an absolute scale.
inline constexpr double kGradCheckFloor = 1e-4;

/// |a - n| / max(|a|, |n|, kGradCheckFloor).
double relative_error(double analytic, double numeric);

/// Largest relative error between the analytic gradient of `loss` (which must
/// return a scalar) with respect to every entry of `wrt` and the central
/// difference with the given step. `wrt` tensors are perturbed in place and
/// restored, so `loss` must read them through shared handles.
double max_gradient_error(const std::function<Tensor()>& loss, std::vector<Tensor> wrt, double step,
                          std::size_t* checked = nullptr);

/// Contracts an arbitrary tensor to a scalar with fixed, index-dependent
/// weights so that every output element influences the loss differently.
Tensor probe_loss(const Tensor& y);

/// Every primitive (each listed once), then every layer, then one tiny model
/// per architecture.
std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options = {});

}  // namespace tsf
