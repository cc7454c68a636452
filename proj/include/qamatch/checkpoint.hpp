#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "qamatch/model.hpp"
#include "qamatch/training.hpp"

namespace qamatch {

constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
};

struct LoadedCheckpoint {
  Model model;
  std::optional<OptimizerState> optimizer;
  CheckpointMeta meta;
};

// "QAMC", u32 version, u32-length config text, 32-byte vocabulary hash,
// u32 record count, records [u32 path length, path, u32 rank, u32 dims...,
// little-endian float32 values], then u8 optimizer flag and optional state.
std::string serialize_checkpoint(const Model& model, const OptimizerState* optimizer, const CheckpointMeta& meta);
LoadedCheckpoint parse_checkpoint(std::string_view bytes, const Vocabulary& vocab);

// Writes the checkpoint and its vocabulary sidecar "<path>.vocab", both
// atomically.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const OptimizerState* optimizer,
                     const CheckpointMeta& meta);

// Reads "<path>.vocab" unless a vocabulary is supplied. LoadError on a
// missing, truncated or corrupt file, unknown version or hash mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const Vocabulary& vocab);

std::filesystem::path vocab_sidecar(const std::filesystem::path& checkpoint);

}  // namespace qamatch
