#include "dermamap/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace dermamap {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "version",
      "seed",
      "synth.seed",
      "synth.n_panelists",
      "synth.patch_side",
      "synth.kind",
      "synth.freq_lo",
      "synth.freq_hi",
      "synth.label_lo",
      "synth.label_hi",
      "synth.many_mass",
      "synth.medium_mass",
      "synth.few_mass",
      "synth.noise_sigma",
      "synth.pair_jitter",
      "synth.region_coupling",
      "augment.enable_lighting",
      "augment.enable_geometric",
      "augment.seed",
      "model.image_side",
      "model.patch_size",
      "model.depth",
      "model.token_dim",
      "model.head_count",
      "model.mlp_ratio",
      "model.ptm_channels",
      "model.backbone_seed",
      "model.adapter_seed",
      "model.rho_low",
      "model.rho_high",
      "model.kind",
      "model.use_freq_input",
      "model.use_position_adapters",
      "train.lr",
      "train.epochs",
      "train.batch",
      "train.tau",
      "train.seed",
      "train.use_augmentation",
      "train.use_symmetric_loss",
      "train.stop_at_val_r2",
      "train.holdout_panelists",
      "eval.bin_width",
      "heatmap.alpha",
      "heatmap.legend",
  };
  return keys;
}

class Typed {
 public:
  explicit Typed(const ConfigStore& store) : store_(store) {}

  double number(const std::string& key, double fallback) {
    const auto it = store_.values.find(key);
    if (it == store_.values.end()) return fallback;
    try {
      size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      require(pos == it->second.size(), "");
      return v;
    } catch (...) {
      fail("config: key '" + key + "' is not a number: " + it->second);
    }
  }

  int integer(const std::string& key, int fallback) {
    const double v = number(key, double(fallback));
    require(v == std::floor(v), "config: key '" + key + "' must be an integer");
    return int(v);
  }

  uint64_t seed(const std::string& key, uint64_t fallback) {
    const auto it = store_.values.find(key);
    if (it == store_.values.end()) return fallback;
    try {
      return std::stoull(it->second);
    } catch (...) {
      fail("config: key '" + key + "' is not a seed value: " + it->second);
    }
  }

  bool boolean(const std::string& key, bool fallback) {
    const auto it = store_.values.find(key);
    if (it == store_.values.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    fail("config: key '" + key + "' is not a boolean: " + it->second);
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const auto it = store_.values.find(key);
    return it == store_.values.end() ? fallback : it->second;
  }

 private:
  const ConfigStore& store_;
};

}  // namespace

ConfigStore parse_config_text(const std::string& text) {
  ConfigStore store;
  std::istringstream lines(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', "config line " + std::to_string(line_no) +
                                      ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      require(!section.empty(), "config line " + std::to_string(line_no) +
                                    ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos,
            "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), "config line " + std::to_string(line_no) + ": empty key");
    store.set(section.empty() ? key : section + "." + key, value);
  }
  return store;
}

ConfigStore parse_config_file(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), "config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(ConfigStore& store, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos,
          "config override must look like section.key=value: " + assignment);
  store.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig resolve_config(const ConfigStore& store) {
  for (const auto& [key, value] : store.values)
    require(known_keys().count(key) != 0, "config: unknown key '" + key + "'");

  Typed t(store);
  require(t.integer("version", kConfigVersion) == kConfigVersion,
          "config: unsupported config version");

  RunConfig cfg;
  cfg.global_seed = t.seed("seed", 0);

  cfg.synth.seed = t.seed("synth.seed", cfg.global_seed ^ 42);
  cfg.synth.n_panelists = t.integer("synth.n_panelists", 4);
  cfg.synth.patch_side = t.integer("synth.patch_side", 140);
  cfg.synth.kind = metric_kind_from_string(t.text("synth.kind", "TEWL"));
  cfg.synth.freq_lo = t.number("synth.freq_lo", 11.0);
  cfg.synth.freq_hi = t.number("synth.freq_hi", 22.0);
  cfg.synth.label_lo = t.number("synth.label_lo", 4.0);
  cfg.synth.label_hi = t.number("synth.label_hi", 26.0);
  cfg.synth.many_mass = t.number("synth.many_mass", 0.60);
  cfg.synth.medium_mass = t.number("synth.medium_mass", 0.25);
  cfg.synth.few_mass = t.number("synth.few_mass", 0.15);
  cfg.synth.noise_sigma = t.number("synth.noise_sigma", 2.0);
  cfg.synth.pair_jitter = t.number("synth.pair_jitter", 0.5);
  cfg.synth.region_coupling = t.number("synth.region_coupling", 0.25);

  cfg.augment.enable_lighting = t.boolean("augment.enable_lighting", false);
  cfg.augment.enable_geometric = t.boolean("augment.enable_geometric", true);
  cfg.augment.seed = t.seed("augment.seed", 1);

  // Model defaults are the CPU-scale profile; full-size dims are config-able.
  const ModelConfig toy = toy_model_config();
  cfg.model.backbone.image_side = t.integer("model.image_side", toy.backbone.image_side);
  cfg.model.backbone.patch_size = t.integer("model.patch_size", toy.backbone.patch_size);
  cfg.model.backbone.depth = t.integer("model.depth", toy.backbone.depth);
  cfg.model.backbone.token_dim = t.integer("model.token_dim", toy.backbone.token_dim);
  cfg.model.backbone.head_count = t.integer("model.head_count", toy.backbone.head_count);
  cfg.model.backbone.mlp_ratio = t.integer("model.mlp_ratio", toy.backbone.mlp_ratio);
  cfg.model.backbone.init_seed = t.seed("model.backbone_seed", 1);
  cfg.model.adapter_seed = t.seed("model.adapter_seed", 2);
  cfg.model.rho_low = t.number("model.rho_low", 0.0576);
  cfg.model.rho_high = t.number("model.rho_high", 0.0036);
  cfg.model.kind = metric_kind_from_string(
      t.text("model.kind", to_string(cfg.synth.kind)));
  {
    const std::string ladder = t.text("model.ptm_channels", "");
    if (!ladder.empty()) {
      std::vector<int> channels;
      std::istringstream ss(ladder);
      std::string item;
      while (std::getline(ss, item, ','))
        channels.push_back(std::stoi(trim(item)));
      cfg.model.ptm.channels = channels;
    } else {
      cfg.model.ptm.channels = toy.ptm.channels;
    }
  }

  cfg.flags.use_freq_input = t.boolean("model.use_freq_input", true);
  cfg.flags.use_position_adapters = t.boolean("model.use_position_adapters", true);
  cfg.flags.use_augmentation = t.boolean("train.use_augmentation", true);
  cfg.flags.use_symmetric_loss = t.boolean("train.use_symmetric_loss", true);

  cfg.train.lr = t.number("train.lr", 1e-5);
  cfg.train.epochs = t.integer("train.epochs", 50);
  cfg.train.batch = t.integer("train.batch", 16);
  cfg.train.tau = t.number("train.tau", 0.1);
  cfg.train.seed = t.seed("train.seed", cfg.global_seed);
  cfg.train.flags = cfg.flags;
  cfg.train.lighting_augmentation = cfg.augment.enable_lighting;
  if (store.has("train.stop_at_val_r2"))
    cfg.train.stop_at_val_r2 = t.number("train.stop_at_val_r2", 0.0);
  cfg.holdout_panelists = t.integer("train.holdout_panelists", 1);

  cfg.eval_bin_width = t.number("eval.bin_width", 1.0);
  require(cfg.eval_bin_width > 0.0, "config: eval.bin_width must be positive");

  cfg.heatmap.alpha = t.number("heatmap.alpha", 0.6);
  require(cfg.heatmap.alpha >= 0.0 && cfg.heatmap.alpha <= 1.0,
          "config: heatmap.alpha must lie in [0,1]");
  cfg.heatmap.legend = t.boolean("heatmap.legend", false);

  cfg.model.validate();
  cfg.synth.validate();
  cfg.train.validate();

  cfg.snapshot = store.values;
  return cfg;
}

RunConfig default_run_config() { return resolve_config(ConfigStore{}); }

}  // namespace dermamap
