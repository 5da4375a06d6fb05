#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tsf {

/// Input that does not provide the channels a schema or model needs.
class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One uniformly sampled driving trip.
struct TripSeries {
  std::string trip_id;
  double sample_period_s = 0.1;
  std::vector<std::string> names;             // channel order
  std::vector<std::vector<double>> channels;  // parallel to names, equal lengths

  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
  bool has(const std::string& name) const;
  /// Throws std::out_of_range naming the channel.
  const std::vector<double>& channel(const std::string& name) const;
  std::vector<double>& channel(const std::string& name);
  /// Replaces an existing channel or appends a new one.
  void set(const std::string& name, std::vector<double> values);
  void erase(const std::string& name);
};

/// Output channel computed as the mean of its members; members are dropped.
struct AggregationRule {
  std::string output;
  std::vector<std::string> members;
};

struct FeatureSchema {
  std::vector<std::string> input_channels;
  std::vector<std::string> target_channels;
  std::vector<AggregationRule> aggregations;
  /// Raw CSV column name -> schema channel name; unmapped columns keep their name.
  std::map<std::string, std::string> column_map;

  /// The fifteen-feature default with SOC and battery temperature as targets.
  static FeatureSchema defaults();
  static FeatureSchema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  /// Channels a raw trip file must provide (after column mapping).
  std::vector<std::string> raw_channels() const;
};

FeatureSchema load_schema(const std::filesystem::path& path);

/// Parses one trip CSV. Columns not needed by the schema are ignored.
TripSeries load_trip_csv(const std::filesystem::path& path, const FeatureSchema& schema);
/// A single file, or every *.csv in a directory in name order.
std::vector<TripSeries> load_trips(const std::filesystem::path& path, const FeatureSchema& schema);
void write_trip_csv(const std::filesystem::path& path, const TripSeries& trip);

TripSeries aggregate_redundant(const TripSeries& trip, const FeatureSchema& schema);
/// Savitzky-Golay filter applied to every channel.
TripSeries smooth_trip(const TripSeries& trip, std::size_t window, std::size_t order);
/// Stride decimation; target period must be an integer multiple of the source.
TripSeries resample(const TripSeries& trip, double target_period_s);

/// One supervised example. Rows are time steps, row-major.
struct WindowedSample {
  std::vector<double> x_enc;    // W x F
  std::vector<double> teacher;  // H x v: targets at t, t+1, ..., t+H-1
  std::vector<double> y;        // H x v: targets at t+1, ..., t+H
  std::string trip_id;
  std::size_t start = 0;        // index of the first encoder row in the trip

  bool operator==(const WindowedSample&) const = default;
};

/// Stride-1 windows: L - W - H + 1 samples. A trip shorter than W + H yields
/// none and, when `warnings` is given, appends a note naming the trip.
std::vector<WindowedSample> make_windows(const TripSeries& trip, const FeatureSchema& schema, std::size_t window,
                                         std::size_t horizon, std::vector<std::string>* warnings = nullptr);

struct ChannelStats {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> stddev;
  bool operator==(const ChannelStats&) const = default;
};

/// Per-channel z-score on interleaved rows (values.size() a multiple of the channel count).
std::vector<double> normalize(std::span<const double> values, const ChannelStats& stats);
std::vector<double> denormalize(std::span<const double> values, const ChannelStats& stats);

struct NormalizationStats {
  ChannelStats inputs;
  ChannelStats targets;
  bool operator==(const NormalizationStats&) const = default;
};

/// Normalized samples plus the statistics (from the training portion only)
/// needed to map predictions back to physical units.
struct DatasetSplit {
  std::size_t window = 0, horizon = 0;
  std::vector<WindowedSample> train, validation, test;
  NormalizationStats stats;
  std::uint64_t seed = 0;
  bool operator==(const DatasetSplit&) const = default;
};

/// Seeded shuffle, then the first train_n / val_n / test_n samples.
DatasetSplit normalize_and_split(std::vector<WindowedSample> samples, const FeatureSchema& schema, std::size_t train_n,
                                 std::size_t val_n, std::size_t test_n, std::uint64_t seed);
/// Whole-trip holdout: `test_trips` and then `val_trips` trips (seeded choice)
/// are held out completely; all other windows train.
DatasetSplit split_by_trip(std::vector<WindowedSample> samples, const FeatureSchema& schema, std::size_t val_trips,
                           std::size_t test_trips, std::uint64_t seed);

void save_split(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit load_split(const std::filesystem::path& path);

enum class SplitMode { Shuffled, TripHoldout };

struct PipelineOptions {
  std::size_t savgol_window = 21;
  std::size_t savgol_order = 2;
  double period_s = 5.0;
  std::size_t window = 12;
  std::size_t horizon = 6;
  SplitMode split_mode = SplitMode::Shuffled;
  std::size_t train_n = 4000, val_n = 500, test_n = 500;
  std::size_t val_trips = 2, test_trips = 2;
  std::uint64_t seed = 0;
};

/// Raw trips to a split: aggregate, smooth, resample, window, split.
DatasetSplit build_dataset(const std::vector<TripSeries>& raw, const FeatureSchema& schema,
                           const PipelineOptions& options, std::vector<std::string>* warnings = nullptr);

/// Preprocessed (aggregated, smoothed, resampled) copy of one raw trip.
TripSeries preprocess(const TripSeries& raw, const FeatureSchema& schema, const PipelineOptions& options);

struct SynthOptions {
  double noise_scale = 1.0;  // 0 disables sensor noise
  bool stationary = false;   // vehicle parked for the whole trip
};

/// Artificial trips at 0.1 s with the default raw channels (including the
/// four vent sensors). Trip i uses trip_seed(seed, i).
std::vector<TripSeries> synthesize_trips(std::size_t n_trips, std::size_t length, std::uint64_t seed,
                                         const SynthOptions& options = {});
std::uint64_t trip_seed(std::uint64_t seed, std::size_t index);
/// Deterministic child seed for a named component.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);

/// Synthetic vehicle constants, exposed for tests that recompute the SOC balance.
inline constexpr double kPackEnergyWh = 21600.0;

}  // namespace tsf
