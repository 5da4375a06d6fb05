#include "tsf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "tsf/savgol.hpp"

namespace tsf {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// TripSeries

bool TripSeries::has(const std::string& name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

const std::vector<double>& TripSeries::channel(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("trip " + trip_id + " has no channel \"" + name + "\"");
  return channels[static_cast<std::size_t>(it - names.begin())];
}

std::vector<double>& TripSeries::channel(const std::string& name) {
  return const_cast<std::vector<double>&>(std::as_const(*this).channel(name));
}

void TripSeries::set(const std::string& name, std::vector<double> values) {
  if (!channels.empty() && values.size() != length()) {
    throw std::invalid_argument("channel \"" + name + "\" length " + std::to_string(values.size()) +
                                " differs from trip length " + std::to_string(length()));
  }
  auto it = std::find(names.begin(), names.end(), name);
  if (it != names.end()) {
    channels[static_cast<std::size_t>(it - names.begin())] = std::move(values);
    return;
  }
  names.push_back(name);
  channels.push_back(std::move(values));
}

void TripSeries::erase(const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return;
  const auto idx = it - names.begin();
  names.erase(it);
  channels.erase(channels.begin() + idx);
}

// ---------------------------------------------------------------------------
// Schema

FeatureSchema FeatureSchema::defaults() {
  FeatureSchema s;
  s.input_channels = {"velocity",       "acceleration", "throttle",      "elevation",   "ambient_temp",
                      "battery_voltage", "battery_current", "battery_temp", "soc",         "heater_power",
                      "ac_power",        "avg_vent_temp", "cabin_temp",    "cabin_setpoint", "regen_power"};
  s.target_channels = {"soc", "battery_temp"};
  s.aggregations = {{"avg_vent_temp",
                     {"vent_temp_right", "vent_temp_central_right", "vent_temp_central_left", "vent_temp_left"}}};
  return s;
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"input_channels", "target_channels", "aggregations", "column_map"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("schema: unknown key \"" + key + "\"");
  }
  FeatureSchema s = defaults();
  if (j.contains("input_channels")) s.input_channels = j.at("input_channels").get<std::vector<std::string>>();
  if (j.contains("target_channels")) s.target_channels = j.at("target_channels").get<std::vector<std::string>>();
  if (j.contains("aggregations")) {
    s.aggregations.clear();
    for (const auto& rule : j.at("aggregations")) {
      s.aggregations.push_back({rule.at("output").get<std::string>(), rule.at("members").get<std::vector<std::string>>()});
    }
  }
  if (j.contains("column_map")) s.column_map = j.at("column_map").get<std::map<std::string, std::string>>();
  if (s.input_channels.empty() || s.target_channels.empty()) {
    throw std::invalid_argument("schema: input and target channel lists must be non-empty");
  }
  return s;
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json aggs = nlohmann::json::array();
  for (const auto& rule : aggregations) aggs.push_back({{"output", rule.output}, {"members", rule.members}});
  return {{"input_channels", input_channels},
          {"target_channels", target_channels},
          {"aggregations", aggs},
          {"column_map", column_map}};
}

std::vector<std::string> FeatureSchema::raw_channels() const {
  std::vector<std::string> out;
  auto push = [&](const std::string& n) {
    if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  };
  auto aggregated = [&](const std::string& n) {
    return std::any_of(aggregations.begin(), aggregations.end(), [&](const AggregationRule& r) { return r.output == n; });
  };
  for (const auto& list : {input_channels, target_channels}) {
    for (const auto& n : list) {
      if (!aggregated(n)) push(n);
    }
  }
  for (const auto& rule : aggregations) {
    for (const auto& m : rule.members) push(m);
  }
  return out;
}

FeatureSchema load_schema(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schema file " + path.string());
  return FeatureSchema::from_json(nlohmann::json::parse(in));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    cells.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

TripSeries load_trip_csv(const fs::path& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trip file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  std::vector<std::string> header;
  for (auto h : split_commas(line)) header.emplace_back(h);
  std::vector<std::string> mapped;
  for (const auto& name : header) {
    auto it = schema.column_map.find(name);
    mapped.push_back(it == schema.column_map.end() ? name : it->second);
  }
  const auto required = schema.raw_channels();
  std::vector<std::size_t> columns;
  std::string missing;
  for (const auto& r : required) {
    auto it = std::find(mapped.begin(), mapped.end(), r);
    if (it == mapped.end()) {
      missing += (missing.empty() ? "\"" : ", \"") + r + "\"";
      continue;
    }
    columns.push_back(static_cast<std::size_t>(it - mapped.begin()));
  }
  if (!missing.empty()) throw SchemaError(path.string() + ": missing required column(s) " + missing);

  TripSeries trip;
  trip.trip_id = path.stem().string();
  trip.names = required;
  trip.channels.assign(required.size(), {});
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                               " cells, header has " + std::to_string(header.size()));
    }
    for (std::size_t k = 0; k < columns.size(); ++k) {
      const auto cell = cells[columns[k]];
      double v = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw std::runtime_error(path.string() + ": non-numeric value \"" + std::string(cell) + "\" at row " +
                                 std::to_string(row) + ", column \"" + header[columns[k]] + "\"");
      }
      trip.channels[k].push_back(v);
    }
  }
  return trip;
}

std::vector<TripSeries> load_trips(const fs::path& path, const FeatureSchema& schema) {
  if (!fs::is_directory(path)) return {load_trip_csv(path, schema)};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<TripSeries> trips;
  trips.reserve(files.size());
  for (const auto& f : files) trips.push_back(load_trip_csv(f, schema));
  return trips;
}

void write_trip_csv(const fs::path& path, const TripSeries& trip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trip file " + path.string());
  for (std::size_t k = 0; k < trip.names.size(); ++k) out << (k ? "," : "") << trip.names[k];
  out << '\n';
  for (std::size_t i = 0; i < trip.length(); ++i) {
    for (std::size_t k = 0; k < trip.channels.size(); ++k) out << (k ? "," : "") << format_double(trip.channels[k][i]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Cleaning

TripSeries aggregate_redundant(const TripSeries& trip, const FeatureSchema& schema) {
  TripSeries out = trip;
  for (const auto& rule : schema.aggregations) {
    if (rule.members.empty()) throw std::invalid_argument("aggregation " + rule.output + " has no members");
    std::vector<double> avg(trip.length(), 0.0);
    for (const auto& m : rule.members) {
      if (!out.has(m)) throw SchemaError("trip " + trip.trip_id + ": aggregation member \"" + m + "\" missing");
      const auto& values = out.channel(m);
      for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += values[i];
    }
    for (auto& v : avg) v /= static_cast<double>(rule.members.size());
    for (const auto& m : rule.members) out.erase(m);
    out.set(rule.output, std::move(avg));
  }
  return out;
}

TripSeries smooth_trip(const TripSeries& trip, std::size_t window, std::size_t order) {
  TripSeries out = trip;
  for (auto& values : out.channels) values = savgol_smooth(values, window, order);
  return out;
}

TripSeries resample(const TripSeries& trip, double target_period_s) {
  const double ratio = target_period_s / trip.sample_period_s;
  const double stride_f = std::round(ratio);
  if (!(stride_f >= 1.0) || std::abs(ratio - stride_f) > 1e-9 * std::max(1.0, ratio)) {
    throw std::invalid_argument("resample: target period " + format_double(target_period_s) +
                                " s is not an integer multiple of " + format_double(trip.sample_period_s) + " s");
  }
  const auto stride = static_cast<std::size_t>(stride_f);
  TripSeries out;
  out.trip_id = trip.trip_id;
  out.sample_period_s = target_period_s;
  out.names = trip.names;
  for (const auto& values : trip.channels) {
    std::vector<double> dec;
    dec.reserve(values.size() / stride + 1);
    for (std::size_t i = 0; i < values.size(); i += stride) dec.push_back(values[i]);
    out.channels.push_back(std::move(dec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Windowing

std::vector<WindowedSample> make_windows(const TripSeries& trip, const FeatureSchema& schema, std::size_t window,
                                         std::size_t horizon, std::vector<std::string>* warnings) {
  if (window == 0 || horizon == 0) throw std::invalid_argument("window and horizon must be positive");
  const std::size_t len = trip.length();
  if (len < window + horizon) {
    if (warnings) {
      warnings->push_back("trip " + trip.trip_id + " skipped: length " + std::to_string(len) + " < W + H = " +
                          std::to_string(window + horizon));
    }
    return {};
  }
  std::vector<const std::vector<double>*> inputs, targets;
  for (const auto& n : schema.input_channels) inputs.push_back(&trip.channel(n));
  for (const auto& n : schema.target_channels) targets.push_back(&trip.channel(n));
  const std::size_t f = inputs.size(), v = targets.size();

  std::vector<WindowedSample> samples;
  samples.reserve(len - window - horizon + 1);
  for (std::size_t s = 0; s + window + horizon <= len; ++s) {
    WindowedSample w;
    w.trip_id = trip.trip_id;
    w.start = s;
    w.x_enc.resize(window * f);
    for (std::size_t t = 0; t < window; ++t) {
      for (std::size_t c = 0; c < f; ++c) w.x_enc[t * f + c] = (*inputs[c])[s + t];
    }
    w.y.resize(horizon * v);
    w.teacher.resize(horizon * v);
    for (std::size_t t = 0; t < horizon; ++t) {
      for (std::size_t c = 0; c < v; ++c) {
        w.y[t * v + c] = (*targets[c])[s + window + t];
        w.teacher[t * v + c] = (*targets[c])[s + window - 1 + t];
      }
    }
    samples.push_back(std::move(w));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Normalization and splitting

std::vector<double> normalize(std::span<const double> values, const ChannelStats& stats) {
  const std::size_t c = stats.mean.size();
  if (c == 0 || values.size() % c != 0) throw std::invalid_argument("normalize: value count not a multiple of channels");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - stats.mean[i % c]) / stats.stddev[i % c];
  return out;
}

std::vector<double> denormalize(std::span<const double> values, const ChannelStats& stats) {
  const std::size_t c = stats.mean.size();
  if (c == 0 || values.size() % c != 0) throw std::invalid_argument("denormalize: value count not a multiple of channels");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * stats.stddev[i % c] + stats.mean[i % c];
  return out;
}

namespace {

template <class T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

ChannelStats compute_stats(const std::vector<WindowedSample>& samples, const std::vector<std::string>& names,
                           std::vector<double> WindowedSample::*field) {
  const std::size_t c = names.size();
  ChannelStats st{names, std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  std::vector<std::size_t> count(c, 0);
  for (const auto& s : samples) {
    const auto& vals = s.*field;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      st.mean[i % c] += vals[i];
      ++count[i % c];
    }
  }
  for (std::size_t k = 0; k < c; ++k) st.mean[k] /= static_cast<double>(count[k]);
  for (const auto& s : samples) {
    const auto& vals = s.*field;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double d = vals[i] - st.mean[i % c];
      st.stddev[i % c] += d * d;
    }
  }
  for (std::size_t k = 0; k < c; ++k) {
    const double sd = std::sqrt(st.stddev[k] / static_cast<double>(count[k]));
    st.stddev[k] = sd > 1e-12 ? sd : 1.0;
  }
  return st;
}

void apply_normalization(std::vector<WindowedSample>& samples, const NormalizationStats& stats) {
  for (auto& s : samples) {
    s.x_enc = normalize(s.x_enc, stats.inputs);
    s.teacher = normalize(s.teacher, stats.targets);
    s.y = normalize(s.y, stats.targets);
  }
}

DatasetSplit finish_split(std::vector<WindowedSample> train, std::vector<WindowedSample> val,
                          std::vector<WindowedSample> test, const FeatureSchema& schema, std::uint64_t seed) {
  if (train.empty()) throw std::invalid_argument("dataset split: training portion is empty");
  DatasetSplit split;
  split.horizon = train.front().y.size() / schema.target_channels.size();
  split.window = train.front().x_enc.size() / schema.input_channels.size();
  split.seed = seed;
  split.stats.inputs = compute_stats(train, schema.input_channels, &WindowedSample::x_enc);
  split.stats.targets = compute_stats(train, schema.target_channels, &WindowedSample::y);
  apply_normalization(train, split.stats);
  apply_normalization(val, split.stats);
  apply_normalization(test, split.stats);
  split.train = std::move(train);
  split.validation = std::move(val);
  split.test = std::move(test);
  return split;
}

}  // namespace

DatasetSplit normalize_and_split(std::vector<WindowedSample> samples, const FeatureSchema& schema, std::size_t train_n,
                                 std::size_t val_n, std::size_t test_n, std::uint64_t seed) {
  const std::size_t need = train_n + val_n + test_n;
  if (samples.size() < need) {
    throw std::invalid_argument("insufficient samples: have " + std::to_string(samples.size()) + ", need " +
                                std::to_string(need) + " (train " + std::to_string(train_n) + " + validation " +
                                std::to_string(val_n) + " + test " + std::to_string(test_n) + ")");
  }
  seeded_shuffle(samples, seed);
  auto first = samples.begin();
  std::vector<WindowedSample> train(std::make_move_iterator(first), std::make_move_iterator(first + train_n));
  std::vector<WindowedSample> val(std::make_move_iterator(first + train_n),
                                  std::make_move_iterator(first + train_n + val_n));
  std::vector<WindowedSample> test(std::make_move_iterator(first + train_n + val_n),
                                   std::make_move_iterator(first + need));
  return finish_split(std::move(train), std::move(val), std::move(test), schema, seed);
}

DatasetSplit split_by_trip(std::vector<WindowedSample> samples, const FeatureSchema& schema, std::size_t val_trips,
                           std::size_t test_trips, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.trip_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() <= val_trips + test_trips) {
    throw std::invalid_argument("insufficient trips for holdout: have " + std::to_string(ids.size()) + ", need more than " +
                                std::to_string(val_trips + test_trips));
  }
  seeded_shuffle(ids, seed);
  const std::set<std::string> test_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(test_trips));
  const std::set<std::string> val_ids(ids.begin() + static_cast<std::ptrdiff_t>(test_trips),
                                      ids.begin() + static_cast<std::ptrdiff_t>(test_trips + val_trips));
  std::vector<WindowedSample> train, val, test;
  for (auto& s : samples) {
    if (test_ids.count(s.trip_id)) {
      test.push_back(std::move(s));
    } else if (val_ids.count(s.trip_id)) {
      val.push_back(std::move(s));
    } else {
      train.push_back(std::move(s));
    }
  }
  seeded_shuffle(train, seed + 1);
  seeded_shuffle(val, seed + 2);
  seeded_shuffle(test, seed + 3);
  return finish_split(std::move(train), std::move(val), std::move(test), schema, seed);
}

// ---------------------------------------------------------------------------
// Dataset cache

namespace {

constexpr char kSplitMagic[9] = "TSFDATA\0";
constexpr std::uint32_t kSplitVersion = 1;

void put_stats(std::ostream& os, const ChannelStats& st) {
  io::put_u64(os, st.names.size());
  for (const auto& n : st.names) io::put_string(os, n);
  io::put_f64s(os, st.mean);
  io::put_f64s(os, st.stddev);
}

ChannelStats get_stats(io::Reader& r) {
  ChannelStats st;
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) st.names.push_back(r.string());
  st.mean = r.f64s();
  st.stddev = r.f64s();
  return st;
}

void put_samples(std::ostream& os, const std::vector<WindowedSample>& samples) {
  io::put_u64(os, samples.size());
  for (const auto& s : samples) {
    io::put_string(os, s.trip_id);
    io::put_u64(os, s.start);
    io::put_f64s(os, s.x_enc);
    io::put_f64s(os, s.teacher);
    io::put_f64s(os, s.y);
  }
}

std::vector<WindowedSample> get_samples(io::Reader& r) {
  std::vector<WindowedSample> out(r.u64());
  for (auto& s : out) {
    s.trip_id = r.string();
    s.start = r.u64();
    s.x_enc = r.f64s();
    s.teacher = r.f64s();
    s.y = r.f64s();
  }
  return out;
}

}  // namespace

void save_split(const fs::path& path, const DatasetSplit& split) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write dataset cache " + path.string());
  os.write(kSplitMagic, 8);
  io::put_u32(os, kSplitVersion);
  io::put_u64(os, split.window);
  io::put_u64(os, split.horizon);
  io::put_u64(os, split.seed);
  put_stats(os, split.stats.inputs);
  put_stats(os, split.stats.targets);
  put_samples(os, split.train);
  put_samples(os, split.validation);
  put_samples(os, split.test);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

DatasetSplit load_split(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset cache " + path.string());
  io::Reader r(is, "dataset cache");
  r.expect_magic(kSplitMagic);
  if (const auto v = r.u32(); v != kSplitVersion) {
    throw std::runtime_error("dataset cache: unsupported version " + std::to_string(v));
  }
  DatasetSplit split;
  split.window = r.u64();
  split.horizon = r.u64();
  split.seed = r.u64();
  split.stats.inputs = get_stats(r);
  split.stats.targets = get_stats(r);
  split.train = get_samples(r);
  split.validation = get_samples(r);
  split.test = get_samples(r);
  return split;
}

// ---------------------------------------------------------------------------
// Pipeline

TripSeries preprocess(const TripSeries& raw, const FeatureSchema& schema, const PipelineOptions& options) {
  TripSeries trip = aggregate_redundant(raw, schema);
  if (trip.length() >= options.savgol_window) trip = smooth_trip(trip, options.savgol_window, options.savgol_order);
  return resample(trip, options.period_s);
}

DatasetSplit build_dataset(const std::vector<TripSeries>& raw, const FeatureSchema& schema,
                           const PipelineOptions& options, std::vector<std::string>* warnings) {
  std::vector<WindowedSample> samples;
  for (const auto& trip : raw) {
    auto windows = make_windows(preprocess(trip, schema, options), schema, options.window, options.horizon, warnings);
    std::move(windows.begin(), windows.end(), std::back_inserter(samples));
  }
  if (options.split_mode == SplitMode::TripHoldout) {
    return split_by_trip(std::move(samples), schema, options.val_trips, options.test_trips, options.seed);
  }
  return normalize_and_split(std::move(samples), schema, options.train_n, options.val_n, options.test_n, options.seed);
}

}  // namespace tsf
