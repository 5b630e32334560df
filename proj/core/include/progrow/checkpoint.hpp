#pragma once

#include <filesystem>

#include "progrow/trainer.hpp"

namespace progrow {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "tensors.bin";

// A checkpoint is a directory holding a human-readable manifest (configs,
// progress counters, rng streams and a tensor index of
// {name, shape, byte_offset, element_count}) plus a blob of little-endian
// IEEE-754 doubles concatenated in index order. Files are written to a
// temporary name and renamed into place.
void save_checkpoint(const std::filesystem::path& dir, const TrainState& state);

// Validates the manifest against the blob and the model config; throws
// IntegrityError naming the first offending tensor.
TrainState load_checkpoint(const std::filesystem::path& dir);

}  // namespace progrow
