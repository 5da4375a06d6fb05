#include "tsf/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "tsf/checkpoint.hpp"
#include "tsf/gradcheck.hpp"

namespace fs = std::filesystem;

namespace tsf {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec) {
  if (std::isnan(v)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string report_line(const EvalReport& r) {
  std::string s = r.split + ": MSE x1e3 " + fmt(r.mse * 1e3, 3) + ", R^2 pooled " +
                  (r.r2_pooled.defined ? fmt(r.r2_pooled.value, 4) : "n/a");
  for (std::size_t c = 0; c < r.targets.size(); ++c) {
    s += ", R^2 " + r.targets[c] + " " + (r.r2_per_target[c].defined ? fmt(r.r2_per_target[c].value, 4) : "n/a");
  }
  return s;
}

}  // namespace

std::string target_column(const std::string& channel) {
  if (channel == "soc") return "soc_pct";
  if (channel == "battery_temp") return "batt_temp_C";
  return channel;
}

void cmd_datagen(const RunConfig& config, std::ostream& log) {
  const fs::path dir = config.output_dir;
  ensure_dir(dir);
  const auto synth_seed = derive_seed(config.seed, "synth");
  SynthOptions so;
  so.noise_scale = config.data.synth.noise_scale;
  const auto trips = synthesize_trips(config.data.synth.n_trips, config.data.synth.length, synth_seed, so);
  json files = json::array();
  for (std::size_t i = 0; i < trips.size(); ++i) {
    const std::string name = trips[i].trip_id + ".csv";
    write_trip_csv(dir / name, trips[i]);
    files.push_back({{"file", name}, {"trip_id", trips[i].trip_id}, {"seed", trip_seed(synth_seed, i)}});
  }
  write_json(dir / "manifest.json", {{"root_seed", config.seed},
                                     {"synth_seed", synth_seed},
                                     {"n_trips", trips.size()},
                                     {"length", config.data.synth.length},
                                     {"sample_period_s", 0.1},
                                     {"noise_scale", so.noise_scale},
                                     {"trips", files}});
  log << "wrote " << trips.size() << " trips to " << dir.string() << '\n';
}

TrainArtifacts cmd_train(const RunConfig& config, std::ostream& log) {
  const auto started = utc_now();
  const fs::path dir = config.output_dir;
  ensure_dir(dir);
  TrainArtifacts out{dir / "model.tsfm", dir / "train_log.csv", dir / "report.json", dir / "metadata.json",
                     dir / "config.json"};
  write_json(out.config, config.to_json());

  const auto schema = resolve_schema(config);
  const auto spec = resolve_model(config, schema);
  const auto t_data = Clock::now();
  std::vector<std::string> warnings;
  const auto split = build_dataset(resolve_trips(config, schema), schema, resolve_pipeline(config), &warnings);
  for (const auto& w : warnings) log << "warning: " << w << '\n';
  const double data_seconds = since(t_data);
  log << "dataset: " << split.train.size() << " train, " << split.validation.size() << " validation, "
      << split.test.size() << " test windows\n";

  Model model(spec, derive_seed(config.seed, "model"));
  log << to_string(spec.kind) << ": " << model.count_parameters() << " parameters\n";
  const auto t_train = Clock::now();
  const auto result = train(model, split, resolve_train(config));
  const double train_seconds = since(t_train);
  log << "trained " << result.log.size() << " epochs, best epoch " << result.best_epoch << " (monitored loss "
      << fmt(result.best_val_loss, 6) << ")\n";

  save_checkpoint(out.checkpoint, model, split.stats);
  write_train_log(out.log, result.log);

  json splits = json::array();
  json timing = json::object();
  std::string text;
  const std::pair<const char*, const std::vector<WindowedSample>*> parts[] = {
      {"train", &split.train}, {"validation", &split.validation}, {"test", &split.test}};
  for (const auto& [name, samples] : parts) {
    if (samples->empty()) continue;
    const auto r = evaluate(model, *samples, split.stats, name);
    splits.push_back(to_json(r));
    timing[name] = r.seconds;
    text += report_line(r) + "\n";
    log << report_line(r) << '\n';
  }
  write_json(out.report, {{"format", "tsf-train-report"},
                          {"version", 1},
                          {"kind", to_string(spec.kind)},
                          {"window", spec.window},
                          {"horizon", spec.horizon},
                          {"parameters", model.count_parameters()},
                          {"epochs_run", result.log.size()},
                          {"best_epoch", result.best_epoch},
                          {"best_monitored_loss", result.best_val_loss},
                          {"early_stopped", result.early_stopped},
                          {"error_units", "MSE on z-scored targets"},
                          {"r2_units", "physical"},
                          {"splits", splits}});
  write_text(dir / "report.txt", text);
  write_json(out.metadata, {{"started_utc", started},
                            {"finished_utc", utc_now()},
                            {"dataset_seconds", data_seconds},
                            {"train_seconds", train_seconds},
                            {"evaluate_seconds", timing}});
  return out;
}

std::pair<std::size_t, std::size_t> cmd_grid(const RunConfig& config, std::ostream& log) {
  const auto started = utc_now();
  const fs::path dir = config.output_dir;
  ensure_dir(dir);
  write_json(dir / "config.json", config.to_json());
  const auto schema = resolve_schema(config);

  GridOptions opt;
  opt.kinds = config.grid_kinds;
  opt.cases = config.grid_cases;
  opt.base = resolve_model(config, schema);
  opt.data = resolve_pipeline(config);
  opt.train = resolve_train(config);
  opt.seed = config.seed;
  opt.jobs = config.jobs;
  const auto t0 = Clock::now();
  const auto report = run_grid(resolve_trips(config, schema), schema, opt);

  write_json(dir / "grid_report.json", to_json(report));
  const auto table = format_table(report);
  write_text(dir / "grid_report.txt", table);
  json cells = json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"kind", to_string(c.kind)},
                     {"window", c.grid_case.window},
                     {"horizon", c.grid_case.horizon},
                     {"seconds", c.seconds}});
  }
  write_json(dir / "metadata.json",
             {{"started_utc", started}, {"finished_utc", utc_now()}, {"seconds", since(t0)}, {"cells", cells}});
  log << table;
  return {report.failed(), report.cells.size()};
}

void cmd_predict(const PredictRequest& req, std::ostream& log) {
  const auto ck = read_checkpoint(req.checkpoint);
  if (!ck.stats) throw UsageError("checkpoint " + req.checkpoint.string() + " carries no normalization statistics");
  RunConfig config;
  if (req.config) {
    config = *req.config;
  } else if (const auto beside = req.checkpoint.parent_path() / "config.json"; fs::exists(beside)) {
    config = load_config(beside);
  }
  const auto schema = resolve_schema(config);
  const auto& spec = ck.spec;
  const auto& in_stats = ck.stats->inputs;
  const auto& tgt_stats = ck.stats->targets;

  PipelineOptions p = config.data.pipeline;
  const auto trip = preprocess(load_trip_csv(req.trip_csv, schema), schema, p);
  std::string missing;
  for (const auto* names : {&in_stats.names, &tgt_stats.names}) {
    for (const auto& n : *names) {
      if (!trip.has(n)) missing += (missing.empty() ? "" : ", ") + n;
    }
  }
  if (!missing.empty()) throw SchemaError("trip lacks channels required by the model: " + missing);

  const std::size_t W = spec.window, H = spec.horizon, F = in_stats.names.size(), V = tgt_stats.names.size();
  const std::size_t L = trip.length();
  if (req.start < W) {
    throw UsageError("insufficient history: start index " + std::to_string(req.start) + " needs at least W=" +
                     std::to_string(W) + " observed steps before it");
  }
  if (req.start > L) {
    throw UsageError("start index " + std::to_string(req.start) + " is beyond the trip length " + std::to_string(L));
  }

  std::vector<double> x;
  x.reserve(W * F);
  for (std::size_t t = req.start - W; t < req.start; ++t) {
    for (const auto& n : in_stats.names) x.push_back(trip.channel(n)[t]);
  }
  std::vector<double> last;
  for (const auto& n : tgt_stats.names) last.push_back(trip.channel(n)[req.start - 1]);
  std::vector<double> teacher(H * V, 0.0);
  const auto last_norm = normalize(last, tgt_stats);
  std::copy(last_norm.begin(), last_norm.end(), teacher.begin());

  const Model model = load_model(ck);
  Tensor pred;
  {
    NoGradGuard guard;
    const Tensor xt({1, W, F}, normalize(x, in_stats));
    const Tensor tt({1, H, V}, std::move(teacher));
    pred = model.forward(xt, &tt, Mode::Inference);
  }
  const auto forecast = denormalize(pred.data(), tgt_stats);

  std::ofstream os(req.output);
  if (!os) throw std::runtime_error("cannot write " + req.output.string());
  os.precision(10);
  os << "step,time_s,phase";
  for (const auto& n : tgt_stats.names) os << ',' << target_column(n);
  for (const auto& n : tgt_stats.names) os << ",actual_" << target_column(n);
  os << '\n';
  for (std::size_t t = req.start - W; t < req.start + H; ++t) {
    const bool observed = t < req.start;
    os << t << ',' << static_cast<double>(t) * trip.sample_period_s << ',' << (observed ? "observed" : "forecast");
    for (std::size_t c = 0; c < V; ++c) {
      os << ',';
      if (observed) {
        os << trip.channel(tgt_stats.names[c])[t];
      } else {
        os << forecast[(t - req.start) * V + c];
      }
    }
    for (std::size_t c = 0; c < V; ++c) {
      os << ',';
      if (t < L) os << trip.channel(tgt_stats.names[c])[t];
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed for " + req.output.string());
  log << "wrote " << H << " forecast steps to " << req.output.string() << '\n';
}

bool cmd_gradcheck(std::ostream& out, const std::optional<std::string>& fault_op) {
  GradCheckOptions opt;
  opt.fault_op = fault_op;
  const auto t0 = Clock::now();
  const auto results = run_gradcheck(opt);
  std::size_t width = 4;
  for (const auto& r : results) width = std::max(width, r.name.size());
  bool all = true;
  out << std::left << std::setw(static_cast<int>(width)) << "name" << "  " << std::setw(9) << "group"
      << "  max_rel_error  entries  result\n";
  for (const auto& r : results) {
    all = all && r.passed;
    std::ostringstream err;
    err << std::scientific << std::setprecision(3) << r.max_rel_error;
    out << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << std::setw(9) << r.group << "  "
        << std::setw(13) << err.str() << "  " << std::right << std::setw(7) << r.checked << "  "
        << (r.passed ? "PASS" : "FAIL") << '\n';
  }
  out << (all ? "all " : "FAILED: not all ") << results.size() << " checks below " << opt.tolerance
      << " relative error (step " << opt.step << ", " << fmt(since(t0), 1) << " s)\n";
  return all;
}

}  // namespace tsf
