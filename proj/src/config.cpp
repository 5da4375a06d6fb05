#include "tsf/config.hpp"

#include <fstream>
#include <set>

namespace tsf {

namespace {

std::string join_lines(const std::vector<std::string>& v) {
  std::string s = "invalid configuration:";
  for (const auto& p : v) s += "\n  " + p;
  return s;
}

using json = nlohmann::json;

// Reads typed fields out of one JSON object, collecting every problem.
class Section {
 public:
  Section(const json* obj, std::string path, std::vector<std::string>& problems)
      : obj_(obj), path_(std::move(path)), problems_(problems) {
    if (obj_ && !obj_->is_object()) {
      problems_.push_back(where("") + ": expected an object");
      obj_ = nullptr;
    }
  }

  ~Section() {
    if (!obj_) return;
    for (const auto& [key, value] : obj_->items()) {
      if (!seen_.count(key)) problems_.push_back("unknown key " + where(key));
    }
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    const json* c = (obj_ && obj_->contains(key)) ? &obj_->at(key) : nullptr;
    return Section(c, where(key), problems_);
  }

  // Parsed files store positive integers as unsigned; values built in code may be signed.
  static bool non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }

  void size(const std::string& key, std::size_t& out) {
    if (const auto* v = take(key)) {
      if (non_negative_integer(*v)) {
        out = v->get<std::size_t>();
      } else {
        problems_.push_back(where(key) + ": expected a non-negative integer");
      }
    }
  }
  void u64(const std::string& key, std::uint64_t& out) {
    if (const auto* v = take(key)) {
      if (non_negative_integer(*v)) {
        out = v->get<std::uint64_t>();
      } else {
        problems_.push_back(where(key) + ": expected a non-negative integer");
      }
    }
  }
  void real(const std::string& key, double& out) {
    if (const auto* v = take(key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else {
        problems_.push_back(where(key) + ": expected a number");
      }
    }
  }
  void optional_real(const std::string& key, std::optional<double>& out) {
    if (const auto* v = take(key)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        problems_.push_back(where(key) + ": expected a number or null");
      }
    }
  }
  void string(const std::string& key, std::string& out) {
    if (const auto* v = take(key)) {
      if (v->is_string()) {
        out = v->get<std::string>();
      } else {
        problems_.push_back(where(key) + ": expected a string");
      }
    }
  }
  const json* take(const std::string& key) {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key)) return nullptr;
    return &obj_->at(key);
  }
  std::string where(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }
  void problem(const std::string& p) { problems_.push_back(p); }

 private:
  const json* obj_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

template <class F>
void guarded(std::vector<std::string>& problems, const std::string& where, F f) {
  try {
    f();
  } catch (const std::exception& e) {
    problems.push_back(where + ": " + e.what());
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_lines(problems)), problems_(std::move(problems)) {}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  std::vector<std::string> problems;
  {
    Section root(&j, "", problems);
    {
      auto d = root.child("data");
      d.string("path", c.data.path);
      d.string("schema", c.data.schema);
      {
        auto s = d.child("synth");
        s.size("n_trips", c.data.synth.n_trips);
        s.size("length", c.data.synth.length);
        s.real("noise_scale", c.data.synth.noise_scale);
      }
      auto& p = c.data.pipeline;
      d.size("savgol_window", p.savgol_window);
      d.size("savgol_order", p.savgol_order);
      d.real("period_s", p.period_s);
      d.size("window", p.window);
      d.size("horizon", p.horizon);
      std::string mode = p.split_mode == SplitMode::Shuffled ? "shuffled" : "trip_holdout";
      d.string("split_mode", mode);
      if (mode == "shuffled") {
        p.split_mode = SplitMode::Shuffled;
      } else if (mode == "trip_holdout") {
        p.split_mode = SplitMode::TripHoldout;
      } else {
        problems.push_back("data.split_mode: '" + mode + "' is not one of shuffled, trip_holdout");
      }
      d.size("train_n", p.train_n);
      d.size("val_n", p.val_n);
      d.size("test_n", p.test_n);
      d.size("val_trips", p.val_trips);
      d.size("test_trips", p.test_trips);
    }
    {
      auto m = root.child("model");
      std::string kind = to_string(c.model.kind);
      m.string("kind", kind);
      guarded(problems, "model.kind", [&] { c.model.kind = parse_kind(kind); });
      m.size("n_encoders", c.model.n_encoders);
      m.size("n_decoders", c.model.n_decoders);
      m.size("n_heads", c.model.n_heads);
      m.size("d_model", c.model.d_model);
      m.size("ffn_width", c.model.ffn_width);
      m.size("lstm_layers", c.model.lstm_layers);
    }
    {
      auto t = root.child("train");
      t.size("epochs", c.train.epochs);
      t.size("batch_size", c.train.batch_size);
      t.real("learning_rate", c.train.learning_rate);
      std::string opt = to_string(c.train.optimizer);
      t.string("optimizer", opt);
      guarded(problems, "train.optimizer", [&] { c.train.optimizer = parse_optimizer(opt); });
      t.real("beta1", c.train.beta1);
      t.real("beta2", c.train.beta2);
      t.real("epsilon", c.train.epsilon);
      t.optional_real("grad_clip", c.train.grad_clip);
      t.size("patience", c.train.patience);
      t.optional_real("target_loss", c.train.target_loss);
      guarded(problems, "train", [&] { c.train.validate(); });
    }
    {
      auto g = root.child("grid");
      if (const auto* kinds = g.take("kinds")) {
        c.grid_kinds.clear();
        if (!kinds->is_array()) {
          problems.push_back("grid.kinds: expected an array of model kinds");
        } else {
          for (const auto& k : *kinds) {
            if (!k.is_string()) {
              problems.push_back("grid.kinds: entries must be strings");
              continue;
            }
            guarded(problems, "grid.kinds", [&] { c.grid_kinds.push_back(parse_kind(k.get<std::string>())); });
          }
        }
      }
      if (const auto* cases = g.take("cases")) {
        c.grid_cases.clear();
        bool ok = cases->is_array();
        if (ok) {
          for (const auto& e : *cases) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned()) {
              ok = false;
              break;
            }
            c.grid_cases.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
          }
        }
        if (!ok) problems.push_back("grid.cases: expected an array of [window, horizon] pairs");
      }
    }
    root.string("output_dir", c.output_dir);
    root.u64("seed", c.seed);
    root.size("jobs", c.jobs);
  }

  const auto& p = c.data.pipeline;
  if (p.savgol_window % 2 == 0 || p.savgol_window <= p.savgol_order) {
    problems.push_back("data.savgol_window: must be odd and larger than data.savgol_order");
  }
  if (!(p.period_s > 0.0)) problems.push_back("data.period_s: must be positive");
  if (c.data.synth.n_trips == 0 && c.data.path.empty()) problems.push_back("data.synth.n_trips: must be positive");
  if (c.data.synth.noise_scale < 0.0) problems.push_back("data.synth.noise_scale: must be non-negative");
  if (c.jobs == 0) problems.push_back("jobs: must be at least 1");
  for (const auto& g : c.grid_cases) {
    if (g.window == 0 || g.horizon == 0) problems.push_back("grid.cases: window and horizon must be positive");
  }
  {
    ModelSpec spec = c.model;
    spec.window = p.window;
    spec.horizon = p.horizon;
    guarded(problems, "model", [&] { spec.validate(); });
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

json RunConfig::to_json() const {
  const auto& p = data.pipeline;
  json kinds = json::array();
  for (auto k : grid_kinds) kinds.push_back(tsf::to_string(k));
  json cases = json::array();
  for (const auto& g : grid_cases) cases.push_back({g.window, g.horizon});
  return {
      {"data",
       {{"path", data.path},
        {"schema", data.schema},
        {"synth", {{"n_trips", data.synth.n_trips}, {"length", data.synth.length}, {"noise_scale", data.synth.noise_scale}}},
        {"savgol_window", p.savgol_window},
        {"savgol_order", p.savgol_order},
        {"period_s", p.period_s},
        {"window", p.window},
        {"horizon", p.horizon},
        {"split_mode", p.split_mode == SplitMode::Shuffled ? "shuffled" : "trip_holdout"},
        {"train_n", p.train_n},
        {"val_n", p.val_n},
        {"test_n", p.test_n},
        {"val_trips", p.val_trips},
        {"test_trips", p.test_trips}}},
      {"model",
       {{"kind", tsf::to_string(model.kind)},
        {"n_encoders", model.n_encoders},
        {"n_decoders", model.n_decoders},
        {"n_heads", model.n_heads},
        {"d_model", model.d_model},
        {"ffn_width", model.ffn_width},
        {"lstm_layers", model.lstm_layers}}},
      {"train",
       {{"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"learning_rate", train.learning_rate},
        {"optimizer", tsf::to_string(train.optimizer)},
        {"beta1", train.beta1},
        {"beta2", train.beta2},
        {"epsilon", train.epsilon},
        {"grad_clip", train.grad_clip ? json(*train.grad_clip) : json(nullptr)},
        {"patience", train.patience},
        {"target_loss", train.target_loss ? json(*train.target_loss) : json(nullptr)}}},
      {"grid", {{"kinds", kinds}, {"cases", cases}}},
      {"output_dir", output_dir},
      {"seed", seed},
      {"jobs", jobs}};
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError({"cannot open config file " + path.string()});
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  return RunConfig::from_json(j);
}

json apply_overrides(json j, const std::vector<std::string>& overrides) {
  std::vector<std::string> problems;
  if (j.is_null()) j = json::object();
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      problems.push_back("override '" + o + "': expected key=value");
      continue;
    }
    const std::string key = o.substr(0, eq);
    const std::string raw = o.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object()) *node = json::object();
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return j;
}

FeatureSchema resolve_schema(const RunConfig& config) {
  return config.data.schema.empty() ? FeatureSchema::defaults() : load_schema(config.data.schema);
}

ModelSpec resolve_model(const RunConfig& config, const FeatureSchema& schema) {
  ModelSpec spec = config.model;
  spec.window = config.data.pipeline.window;
  spec.horizon = config.data.pipeline.horizon;
  spec.input_features = schema.input_channels.size();
  spec.output_features = schema.target_channels.size();
  spec.validate();
  return spec;
}

std::vector<TripSeries> resolve_trips(const RunConfig& config, const FeatureSchema& schema) {
  if (!config.data.path.empty()) return load_trips(config.data.path, schema);
  SynthOptions so;
  so.noise_scale = config.data.synth.noise_scale;
  return synthesize_trips(config.data.synth.n_trips, config.data.synth.length, derive_seed(config.seed, "synth"), so);
}

PipelineOptions resolve_pipeline(const RunConfig& config) {
  PipelineOptions p = config.data.pipeline;
  p.seed = derive_seed(config.seed, "split");
  return p;
}

TrainConfig resolve_train(const RunConfig& config) {
  TrainConfig t = config.train;
  t.seed = derive_seed(config.seed, "train");
  return t;
}

}  // namespace tsf
