#include "tsf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace tsf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::vector<double>> snapshot(const ParameterStore& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.entries().size());
  for (const auto& [name, t] : params.entries()) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

void restore(ParameterStore& params, const std::vector<std::vector<double>>& saved) {
  auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::copy(saved[i].begin(), saved[i].end(), entries[i].second.mutable_data().begin());
  }
}

}  // namespace

std::string to_string(Optimizer opt) { return opt == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer parse_optimizer(const std::string& name) {
  const auto n = lower(name);
  if (n == "adam") return Optimizer::Adam;
  if (n == "sgd") return Optimizer::Sgd;
  throw std::invalid_argument("unknown optimizer '" + name + "' (allowed: adam, sgd)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (grad_clip && !(*grad_clip > 0.0)) throw std::invalid_argument("grad_clip must be positive or absent");
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + to_string(pred.shape()) + " vs target " + to_string(target.shape()));
  }
  const Tensor d = sub(pred, target);
  return mean(mul(d, d));
}

RSquared r_squared(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw std::invalid_argument("r_squared: length mismatch");
  if (target.size() < 2) throw std::invalid_argument("r_squared: need at least two values");
  const double mu = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(target.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    ss_res += (target[i] - pred[i]) * (target[i] - pred[i]);
    ss_tot += (target[i] - mu) * (target[i] - mu);
  }
  if (ss_tot == 0.0) return {std::numeric_limits<double>::quiet_NaN(), false};
  return {1.0 - ss_res / ss_tot, true};
}

void adam_step(ParameterStore& params, AdamState& state, const TrainConfig& cfg) {
  auto& entries = params.entries();
  if (state.m.empty()) {
    for (const auto& [name, t] : entries) {
      state.m.emplace_back(t.numel(), 0.0);
      state.v.emplace_back(t.numel(), 0.0);
    }
  }
  if (state.m.size() != entries.size()) throw std::logic_error("adam_step: state does not match parameters");
  for (const auto& [name, t] : entries) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient in parameter " + name);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& t = entries[p].second;
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto w = t.mutable_data();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      w[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  }
}

void sgd_step(ParameterStore& params, double learning_rate) {
  for (auto& [name, t] : params.entries()) {
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto w = t.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!std::isfinite(g[i])) throw std::runtime_error("non-finite gradient in parameter " + name);
      w[i] -= learning_rate * g[i];
    }
  }
}

double clip_grad_norm(ParameterStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params.entries()) {
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& [name, t] : params.entries()) {
      for (double& g : t.mutable_grad()) g *= f;
    }
  }
  return norm;
}

Batch make_batch(const std::vector<WindowedSample>& samples, std::span<const std::size_t> indices,
                 const ModelSpec& spec) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  const std::size_t B = indices.size(), W = spec.window, H = spec.horizon, F = spec.input_features,
                    V = spec.output_features;
  std::vector<double> x, teacher, y;
  x.reserve(B * W * F);
  teacher.reserve(B * H * V);
  y.reserve(B * H * V);
  for (auto i : indices) {
    const auto& s = samples.at(i);
    if (s.x_enc.size() != W * F || s.teacher.size() != H * V || s.y.size() != H * V) {
      throw ShapeError("sample from " + s.trip_id + " does not match model window " + std::to_string(W) + " x " +
                       std::to_string(F) + ", horizon " + std::to_string(H) + " x " + std::to_string(V));
    }
    x.insert(x.end(), s.x_enc.begin(), s.x_enc.end());
    teacher.insert(teacher.end(), s.teacher.begin(), s.teacher.end());
    y.insert(y.end(), s.y.begin(), s.y.end());
  }
  return {Tensor({B, W, F}, std::move(x)), Tensor({B, H, V}, std::move(teacher)), Tensor({B, H, V}, std::move(y))};
}

Batch make_batch(const std::vector<WindowedSample>& samples, const ModelSpec& spec) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch(samples, idx, spec);
}

namespace {

// Predictions (normalized) for all samples, concatenated in sample order.
std::vector<double> predict_all(const Model& model, const std::vector<WindowedSample>& samples, Mode mode,
                                std::size_t batch_size) {
  NoGradGuard guard;
  std::vector<double> out;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto end = std::min(samples.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = make_batch(samples, idx, model.spec());
    const Tensor p = model.forward(b.x, &b.teacher, mode);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return out;
}

}  // namespace

double dataset_loss(const Model& model, const std::vector<WindowedSample>& samples, Mode mode,
                    std::size_t batch_size) {
  if (samples.empty()) throw std::invalid_argument("dataset_loss: no samples");
  const auto pred = predict_all(model, samples, mode, batch_size);
  double acc = 0.0;
  std::size_t k = 0;
  for (const auto& s : samples) {
    for (double t : s.y) {
      const double d = pred[k++] - t;
      acc += d * d;
    }
  }
  return acc / static_cast<double>(k);
}

TrainResult train(Model& model, const DatasetSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  const auto& spec = model.spec();
  if (split.train.empty()) throw std::invalid_argument("train: the training split is empty");
  if (split.window != spec.window || split.horizon != spec.horizon) {
    throw std::invalid_argument("train: dataset built for W=" + std::to_string(split.window) +
                                ", H=" + std::to_string(split.horizon) + " but model expects W=" +
                                std::to_string(spec.window) + ", H=" + std::to_string(spec.horizon));
  }
  const bool has_val = !split.validation.empty();
  auto monitored = [&] {
    return has_val ? dataset_loss(model, split.validation, Mode::Inference)
                   : dataset_loss(model, split.train, Mode::Train);
  };

  auto& params = model.parameters();
  auto& graph = ComputeGraph::current();
  AdamState adam;
  Rng rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.best_val_loss = monitored();
  auto best = snapshot(params);
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const auto end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Batch b = make_batch(split.train, idx, spec);
      graph.reset();
      params.zero_grad();
      const Tensor loss = mse_loss(model.forward(b.x, &b.teacher, Mode::Train), b.y);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        graph.reset();
        throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_no));
      }
      backward(loss);
      if (cfg.grad_clip) clip_grad_norm(params, *cfg.grad_clip);
      if (cfg.optimizer == Optimizer::Adam) {
        adam_step(params, adam, cfg);
      } else {
        sgd_step(params, cfg.learning_rate);
      }
      loss_sum += value * static_cast<double>(idx.size());
    }
    params.zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = monitored();
    rec.seconds = seconds_since(t0);
    result.log.push_back(rec);

    if (rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      best = snapshot(params);
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      result.early_stopped = true;
      break;
    }
    if (cfg.target_loss && rec.val_loss < *cfg.target_loss) break;
  }
  restore(params, best);
  return result;
}

void write_train_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(17);
  os << "epoch,train_loss,val_loss,seconds\n";
  for (const auto& r : log) os << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.seconds << '\n';
}

EvalReport evaluate(const Model& model, const std::vector<WindowedSample>& samples, const NormalizationStats& stats,
                    const std::string& split_name) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples in split '" + split_name + "'");
  const auto t0 = Clock::now();
  const auto& spec = model.spec();
  const std::size_t V = spec.output_features;
  if (stats.targets.names.size() != V) {
    throw std::invalid_argument("evaluate: statistics describe " + std::to_string(stats.targets.names.size()) +
                                " targets, model predicts " + std::to_string(V));
  }
  const auto pred = predict_all(model, samples, Mode::Inference, 256);
  std::vector<double> truth;
  truth.reserve(pred.size());
  for (const auto& s : samples) truth.insert(truth.end(), s.y.begin(), s.y.end());

  EvalReport r;
  r.split = split_name;
  r.targets = stats.targets.names;
  r.parameter_count = model.count_parameters();
  r.window = spec.window;
  r.horizon = spec.horizon;
  r.kind = spec.kind;
  r.samples = samples.size();
  r.mse_per_target.assign(V, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    r.mse_per_target[i % V] += d * d;
    r.mse += d * d;
  }
  const double rows = static_cast<double>(pred.size() / V);
  for (auto& m : r.mse_per_target) m /= rows;
  r.mse /= static_cast<double>(pred.size());

  const auto pred_phys = denormalize(pred, stats.targets);
  const auto truth_phys = denormalize(truth, stats.targets);
  double res_total = 0.0, tot_total = 0.0;
  for (std::size_t c = 0; c < V; ++c) {
    std::vector<double> p, t;
    for (std::size_t i = c; i < pred_phys.size(); i += V) {
      p.push_back(pred_phys[i]);
      t.push_back(truth_phys[i]);
    }
    r.r2_per_target.push_back(t.size() >= 2 ? r_squared(p, t)
                                            : RSquared{std::numeric_limits<double>::quiet_NaN(), false});
    const double mu = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      res_total += (t[i] - p[i]) * (t[i] - p[i]);
      tot_total += (t[i] - mu) * (t[i] - mu);
    }
  }
  r.r2_pooled = tot_total > 0.0 ? RSquared{1.0 - res_total / tot_total, true}
                                : RSquared{std::numeric_limits<double>::quiet_NaN(), false};
  r.seconds = seconds_since(t0);
  return r;
}

nlohmann::json to_json(const EvalReport& r, bool with_timing) {
  auto r2 = [](const RSquared& x) { return x.defined ? nlohmann::json(x.value) : nlohmann::json(nullptr); };
  nlohmann::json per_target = nlohmann::json::object();
  for (std::size_t c = 0; c < r.targets.size(); ++c) {
    per_target[r.targets[c]] = {{"mse", r.mse_per_target[c]},
                                {"r2", r2(r.r2_per_target[c])},
                                {"r2_defined", r.r2_per_target[c].defined}};
  }
  nlohmann::json j = {{"split", r.split},
                      {"kind", to_string(r.kind)},
                      {"window", r.window},
                      {"horizon", r.horizon},
                      {"samples", r.samples},
                      {"parameters", r.parameter_count},
                      {"mse", r.mse},
                      {"r2_pooled", r2(r.r2_pooled)},
                      {"r2_pooled_defined", r.r2_pooled.defined},
                      {"targets", per_target}};
  if (with_timing) j["seconds"] = r.seconds;
  return j;
}

}  // namespace tsf
