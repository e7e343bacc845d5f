#pragma once

#include <filesystem>
#include <optional>

#include "csnc/losses.hpp"
#include "csnc/model.hpp"

namespace csnc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class StorageType : std::uint8_t { f64 = 0, f32 = 1 };

struct Checkpoint {
  ModelWeights weights;
  CurriculumState curriculum;
};

/// Byte layout is documented in docs/checkpoint_format.md. The file is
/// written to a temporary sibling and renamed into place.
void save_checkpoint(const ModelWeights& weights, const CurriculumState& curriculum,
                     const std::filesystem::path& path, StorageType storage = StorageType::f64);

/// Throws CheckpointMagicError, CheckpointVersionError,
/// CheckpointTruncatedError, NumericError (non-finite payload), or
/// ClassCountMismatchError when `expected_classes` is given and differs.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::size_t> expected_classes = std::nullopt);

}  // namespace csnc
