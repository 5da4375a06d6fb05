#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsf/data.hpp"
#include "tsf/model.hpp"
#include "tsf/train.hpp"

namespace tsf {

struct GridCase {
  std::size_t window = 12;
  std::size_t horizon = 6;
  bool operator==(const GridCase&) const = default;
};

/// The three reference cases: (12, 6), (30, 6), (50, 30).
std::vector<GridCase> default_grid_cases();

struct GridOptions {
  std::vector<ModelKind> kinds{std::begin(kAllKinds), std::end(kAllKinds)};
  std::vector<GridCase> cases = default_grid_cases();
  ModelSpec base;           // kind, window and horizon are set per cell
  PipelineOptions data;     // window and horizon are set per case
  TrainConfig train;
  std::uint64_t seed = 0;   // root of all per-cell seeds
  std::size_t jobs = 1;
};

struct GridCell {
  ModelKind kind = ModelKind::VTst;
  GridCase grid_case;
  bool ok = false;
  std::string error;
  std::size_t parameters = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  EvalReport train, validation, test;
  double seconds = 0.0;
};

struct GridReport {
  std::vector<GridCell> cells;             // case-major, kinds in the requested order
  std::vector<std::string> annotations;    // informational, never pass/fail
  std::size_t failed() const;
};

/// Seeds for one cell, derived from the root seed so every cell is independent
/// of scheduling order.
std::uint64_t cell_model_seed(std::uint64_t root, ModelKind kind, const GridCase& c);
std::uint64_t cell_train_seed(std::uint64_t root, ModelKind kind, const GridCase& c);
std::uint64_t case_split_seed(std::uint64_t root, const GridCase& c);

/// Builds one dataset per case, then trains and evaluates a fresh model per
/// (kind, case) cell. A failing cell is recorded and the others continue.
GridReport run_grid(const std::vector<TripSeries>& raw_trips, const FeatureSchema& schema, const GridOptions& options);

/// Versioned machine-readable report (no wall-clock values).
nlohmann::json to_json(const GridReport& report);
/// Aligned text table: one column per kind; per case the parameter count,
/// train/validation/test MSE x 1e3 (normalized units) and test R^2.
std::string format_table(const GridReport& report);

inline constexpr int kGridReportVersion = 1;

}  // namespace tsf
