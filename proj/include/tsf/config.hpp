#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsf/data.hpp"
#include "tsf/grid.hpp"
#include "tsf/model.hpp"
#include "tsf/train.hpp"

namespace tsf {

/// Raised with every problem found in a configuration, one per line.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct SynthSection {
  std::size_t n_trips = 20;
  std::size_t length = 15000;  // raw samples per trip
  double noise_scale = 1.0;
};

struct DataSection {
  std::string path;    // trip CSV file or directory; empty means synthesize
  std::string schema;  // schema JSON file; empty means the default schema
  SynthSection synth;
  PipelineOptions pipeline;  // seed is derived from the root seed
};

/// Everything one run needs. The model's window, horizon and feature counts
/// come from the data section and schema, not from the model section.
struct RunConfig {
  DataSection data;
  ModelSpec model;
  TrainConfig train;        // seed is derived from the root seed
  std::vector<ModelKind> grid_kinds{std::begin(kAllKinds), std::end(kAllKinds)};
  std::vector<GridCase> grid_cases = default_grid_cases();
  std::string output_dir = "run";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

RunConfig load_config(const std::filesystem::path& path);

/// Applies "section.key=value" overrides; values parse as JSON when they can,
/// otherwise as strings. The result is validated as a whole.
nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& overrides);

FeatureSchema resolve_schema(const RunConfig& config);
/// Model spec with window, horizon and feature counts filled in.
ModelSpec resolve_model(const RunConfig& config, const FeatureSchema& schema);
/// Trips from data.path, or synthesized from the root seed.
std::vector<TripSeries> resolve_trips(const RunConfig& config, const FeatureSchema& schema);
PipelineOptions resolve_pipeline(const RunConfig& config);
TrainConfig resolve_train(const RunConfig& config);

}  // namespace tsf
