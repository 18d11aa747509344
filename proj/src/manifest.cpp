#include "fgse/manifest.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace fgse {

void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const nlohmann::json& config, unsigned seed, std::uint64_t dataset_hash) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["tool"] = "fgse";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << dataset_hash;
  m["dataset_hash"] = hex.str();
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << m.dump(2) << "\n";
}

}  // namespace fgse
