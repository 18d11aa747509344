#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace fgse {

inline constexpr const char* kToolVersion = "fgse-0.1.0";

/// Writes <dir>/manifest.json recording everything needed to reproduce a
/// run: subcommand, effective configuration, seed and dataset hash.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const nlohmann::json& config, unsigned seed, std::uint64_t dataset_hash);

}  // namespace fgse
