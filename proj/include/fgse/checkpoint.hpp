#pragma once

#include <filesystem>

#include "fgse/model.hpp"

namespace fgse {

inline constexpr const char* kCheckpointTag = "fgse-ckpt-v1";

/// Self-describing container: a "fgse-ckpt-v1" tag line, a length-prefixed
/// JSON header (config, vocabularies, parameter table) and a little-endian
/// float32 payload in parameter order. A checkpoint is sufficient for
/// inference on its own.
void save_checkpoint(const FgseModel& model, const std::filesystem::path& path);

/// Throws std::runtime_error on a bad tag, truncated payload or a parameter
/// table that disagrees with the embedded config.
FgseModel load_checkpoint(const std::filesystem::path& path, unsigned seed = 0);

}  // namespace fgse
