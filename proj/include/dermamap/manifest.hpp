#pragma once

#include <map>
#include <string>
#include <vector>

namespace dermamap {

// Every artifact-producing run records a manifest next to its primary
// output: subcommand, resolved config snapshot, seed, content hashes of all
// inputs and produced outputs. A run is reproducible from the manifest.
constexpr int kManifestVersion = 1;

struct Manifest {
  std::string subcommand;
  uint64_t seed = 0;
  std::map<std::string, std::string> config;   // resolved key/value snapshot
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256

  void add_input(const std::string& path);
  void add_output(const std::string& path);
  std::string to_json() const;
  // Written as <primary_output>.manifest.json.
  void write(const std::string& primary_output) const;
};

}  // namespace dermamap
