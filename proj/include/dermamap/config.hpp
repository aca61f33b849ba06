#pragma once

#include <map>
#include <string>
#include <vector>

#include "dermamap/model.hpp"
#include "dermamap/synthgen.hpp"
#include "dermamap/trainer.hpp"

namespace dermamap {

// Plain-text run configuration:
//   version = 1            (required, top level)
//   seed = 7               (optional global seed)
//   [section]
//   key = value            ('#' comments; unknown sections/keys rejected)
// Command-line overrides are applied as "section.key=value" before typing.
constexpr int kConfigVersion = 1;

// Raw parsed form: "" holds top-level keys, otherwise "section.key" -> value.
struct ConfigStore {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) != 0; }
  void set(const std::string& key, const std::string& value) {
    values[key] = value;
  }
};

ConfigStore parse_config_text(const std::string& text);
ConfigStore parse_config_file(const std::string& path);

struct AugmentSection {
  bool enable_lighting = false;
  bool enable_geometric = true;
  uint64_t seed = 1;
};

struct HeatmapSection {
  double alpha = 0.6;
  bool legend = false;
};

struct RunConfig {
  uint64_t global_seed = 0;
  SynthConfig synth;
  AugmentSection augment;
  ModelConfig model;
  FeatureFlags flags;
  TrainConfig train;
  double eval_bin_width = 1.0;
  HeatmapSection heatmap;
  int holdout_panelists = 1;

  // The fully resolved key/value snapshot (manifest content).
  std::map<std::string, std::string> snapshot;
};

// Typing + validation; unknown keys are an error, so a run either fails
// before compute or has a fully resolved config.
RunConfig resolve_config(const ConfigStore& store);

RunConfig default_run_config();

// Applies "section.key=value" style overrides.
void apply_override(ConfigStore& store, const std::string& assignment);

}  // namespace dermamap
