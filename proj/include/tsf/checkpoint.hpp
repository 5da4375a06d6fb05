#pragma once

#include <filesystem>
#include <optional>

#include "tsf/data.hpp"
#include "tsf/model.hpp"

namespace tsf {

/// Binary checkpoint, all integers and floats little-endian:
///   magic "TSFCKPT\0", u32 format version,
///   u32 kind, u64 x 10 ModelSpec sizes (declaration order after kind),
///   u64 parameter count, then per parameter:
///     string name, u32 rank, u64 dims[rank], f64 payload[numel]
///   u8 has_stats, then (if set) input and target ChannelStats.
/// Strings are u32 length + bytes. Saving then loading is bit-exact.
struct Checkpoint {
  ModelSpec spec;
  std::vector<std::pair<std::string, Tensor>> parameters;
  std::optional<NormalizationStats> stats;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::optional<NormalizationStats>& stats = std::nullopt);
Checkpoint read_checkpoint(const std::filesystem::path& path);
/// Rebuilds the model described by a checkpoint and copies its parameters in.
Model load_model(const Checkpoint& checkpoint);

}  // namespace tsf
