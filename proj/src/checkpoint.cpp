#include "tsf/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "binary_io.hpp"

namespace tsf {

namespace {

constexpr char kMagic[9] = "TSFCKPT\0";

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
  if (st.mean.size() != n || st.stddev.size() != n) throw std::runtime_error("checkpoint: malformed statistics");
  return st;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::optional<NormalizationStats>& stats) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  const auto& s = model.spec();
  os.write(kMagic, 8);
  io::put_u32(os, kCheckpointVersion);
  io::put_u32(os, static_cast<std::uint32_t>(s.kind));
  for (std::size_t v : {s.n_encoders, s.n_decoders, s.n_heads, s.d_model, s.ffn_width, s.lstm_layers,
                        s.input_features, s.output_features, s.window, s.horizon}) {
    io::put_u64(os, v);
  }
  const auto& params = model.parameters().entries();
  io::put_u64(os, params.size());
  for (const auto& [name, t] : params) {
    io::put_string(os, name);
    io::put_u32(os, static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape()) io::put_u64(os, d);
    for (double v : t.data()) io::put_f64(os, v);
  }
  os.put(stats ? 1 : 0);
  if (stats) {
    put_stats(os, stats->inputs);
    put_stats(os, stats->targets);
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  io::Reader r(is, "checkpoint");
  r.expect_magic(kMagic);
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(v));
  }
  Checkpoint ck;
  const auto kind = r.u32();
  if (kind > static_cast<std::uint32_t>(ModelKind::EncTstDecLstm)) {
    throw std::runtime_error("checkpoint: unknown model kind " + std::to_string(kind));
  }
  auto& s = ck.spec;
  s.kind = static_cast<ModelKind>(kind);
  for (std::size_t* v : {&s.n_encoders, &s.n_decoders, &s.n_heads, &s.d_model, &s.ffn_width, &s.lstm_layers,
                         &s.input_features, &s.output_features, &s.window, &s.horizon}) {
    *v = r.u64();
  }
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.string();
    const auto rank = r.u32();
    if (rank > 8) throw std::runtime_error("checkpoint: implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    std::vector<double> data(numel(shape));
    for (auto& v : data) v = r.f64();
    ck.parameters.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  char flag = 0;
  r.raw(&flag, 1);
  if (flag) ck.stats = NormalizationStats{get_stats(r), get_stats(r)};
  return ck;
}

Model load_model(const Checkpoint& checkpoint) {
  Model model(checkpoint.spec, 0);
  auto& entries = model.parameters().entries();
  if (entries.size() != checkpoint.parameters.size()) {
    throw std::runtime_error("checkpoint: expected " + std::to_string(entries.size()) + " parameters, found " +
                             std::to_string(checkpoint.parameters.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& [name, dst] = entries[i];
    const auto& [src_name, src] = checkpoint.parameters[i];
    if (name != src_name || dst.shape() != src.shape()) {
      throw std::runtime_error("checkpoint: parameter " + src_name + " " + to_string(src.shape()) +
                               " does not match model parameter " + name + " " + to_string(dst.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
  }
  return model;
}

}  // namespace tsf
