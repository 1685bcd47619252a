#pragma once

#include <cstdint>
#include <filesystem>

#include "ncanet/trainer.hpp"

namespace ncanet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NcaNetModel<float> model;
  AdamState<float> adam;  // may be empty (inference-only checkpoint)
  TrainConfig config;
  std::uint64_t epoch = 0;
};

// Layout in docs/checkpoint_format.md. Writes to a temporary file and renames,
// so an interrupted save leaves the previous checkpoint intact.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws VersionError on a bad magic or version, IoError on truncation,
// unknown or missing tensors, or shape mismatches.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ncanet
