#include "dermamap/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "dermamap/common.hpp"
#include "dermamap/sha256.hpp"

namespace dermamap {

void Manifest::add_input(const std::string& path) {
  inputs[path] = "sha256:" + Sha256::of_file(path);
}

void Manifest::add_output(const std::string& path) {
  outputs[path] = "sha256:" + Sha256::of_file(path);
}

std::string Manifest::to_json() const {
  nlohmann::json j;
  j["manifest_version"] = kManifestVersion;
  j["subcommand"] = subcommand;
  j["seed"] = seed;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  return j.dump(2);
}

void Manifest::write(const std::string& primary_output) const {
  const std::string path = primary_output + ".manifest.json";
  std::ofstream os(path);
  require(bool(os), "manifest: cannot open " + path);
  os << to_json() << "\n";
  require(bool(os), "manifest: write failed: " + path);
}

}  // namespace dermamap
