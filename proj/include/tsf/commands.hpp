#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "tsf/config.hpp"

namespace tsf {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2, kExitAllCellsFailed = 3 };

/// Thrown for bad user input that is not a configuration problem
/// (missing channels, insufficient history, bad arguments).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Writes trip_NNN.csv files and manifest.json into config.output_dir.
void cmd_datagen(const RunConfig& config, std::ostream& log);

struct TrainArtifacts {
  std::filesystem::path checkpoint, log, report, metadata, config;
};
/// Pipeline, train, evaluate on every split. Primary outputs (checkpoint,
/// report.json, report.txt, config.json) depend only on the config. Wall-clock
/// values live in metadata.json and the seconds column of train_log.csv.
TrainArtifacts cmd_train(const RunConfig& config, std::ostream& log);

/// Returns the number of failed cells and the total.
std::pair<std::size_t, std::size_t> cmd_grid(const RunConfig& config, std::ostream& log);

struct PredictRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path trip_csv;
  std::size_t start = 0;             // first forecast step in the preprocessed trip
  std::filesystem::path output;      // forecast CSV
  std::optional<RunConfig> config;   // preprocessing; defaults to config.json beside the checkpoint
};
void cmd_predict(const PredictRequest& request, std::ostream& log);

/// Returns true when every entry passes.
bool cmd_gradcheck(std::ostream& out, const std::optional<std::string>& fault_op = std::nullopt);

/// Column header for a target channel in physical units.
std::string target_column(const std::string& channel);

}  // namespace tsf
