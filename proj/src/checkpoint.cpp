#include "dermamap/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace dermamap {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'M', 'C', 'K'};

json config_to_json(const ModelConfig& cfg, const FeatureFlags& flags) {
  json j;
  j["backbone"] = {{"image_side", cfg.backbone.image_side},
                   {"patch_size", cfg.backbone.patch_size},
                   {"depth", cfg.backbone.depth},
                   {"token_dim", cfg.backbone.token_dim},
                   {"head_count", cfg.backbone.head_count},
                   {"mlp_ratio", cfg.backbone.mlp_ratio},
                   {"init_seed", cfg.backbone.init_seed},
                   {"tag", cfg.backbone.weights_tag()}};
  j["ptm_channels"] = cfg.ptm.channels;
  j["rho_low"] = cfg.rho_low;
  j["rho_high"] = cfg.rho_high;
  j["kind"] = to_string(cfg.kind);
  j["adapter_seed"] = cfg.adapter_seed;
  j["flags"] = {{"use_freq_input", flags.use_freq_input},
                {"use_position_adapters", flags.use_position_adapters},
                {"use_augmentation", flags.use_augmentation},
                {"use_symmetric_loss", flags.use_symmetric_loss}};
  return j;
}

}  // namespace

void save_checkpoint(const AdapterViT<float>& model, const FeatureFlags& flags,
                     const std::string& path) {
  json header = config_to_json(model.config(), flags);
  header["version"] = kCheckpointVersion;
  header["backbone_hash"] = model.backbone_hash();
  json params = json::array();
  std::string blobs;
  for (const auto& p : model.params().all()) {
    if (!p.trainable) continue;
    params.push_back({{"name", p.name},
                      {"shape", p.value.shape},
                      {"offset", blobs.size()},
                      {"bytes", p.value.v.size() * sizeof(float)}});
    blobs.append(reinterpret_cast<const char*>(p.value.v.data()),
                 p.value.v.size() * sizeof(float));
  }
  header["params"] = params;
  const std::string head_str = header.dump();

  std::ofstream os(path, std::ios::binary);
  require(bool(os), "checkpoint save: cannot open " + path);
  os.write(kMagic, 4);
  const uint32_t version = kCheckpointVersion;
  os.write(reinterpret_cast<const char*>(&version), 4);
  const uint64_t head_len = head_str.size();
  os.write(reinterpret_cast<const char*>(&head_len), 8);
  os.write(head_str.data(), std::streamsize(head_str.size()));
  os.write(blobs.data(), std::streamsize(blobs.size()));
  require(bool(os), "checkpoint save: write failed: " + path);
}

LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "checkpoint load: cannot open " + path);
  char magic[4];
  uint32_t version = 0;
  uint64_t head_len = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&version), 4);
  is.read(reinterpret_cast<char*>(&head_len), 8);
  require(bool(is) && std::memcmp(magic, kMagic, 4) == 0,
          "checkpoint load: not a model checkpoint: " + path);
  require(version == kCheckpointVersion,
          "checkpoint load: unsupported version " + std::to_string(version));
  std::string head_str(head_len, '\0');
  is.read(head_str.data(), std::streamsize(head_len));
  require(bool(is), "checkpoint load: truncated header");
  std::string blobs((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());

  json header;
  try {
    header = json::parse(head_str);
  } catch (const json::exception& e) {
    fail("checkpoint load: malformed header: " + std::string(e.what()));
  }

  ModelConfig cfg;
  const auto& bb = header.at("backbone");
  cfg.backbone.image_side = bb.at("image_side").get<int>();
  cfg.backbone.patch_size = bb.at("patch_size").get<int>();
  cfg.backbone.depth = bb.at("depth").get<int>();
  cfg.backbone.token_dim = bb.at("token_dim").get<int>();
  cfg.backbone.head_count = bb.at("head_count").get<int>();
  cfg.backbone.mlp_ratio = bb.at("mlp_ratio").get<int>();
  cfg.backbone.init_seed = bb.at("init_seed").get<uint64_t>();
  cfg.ptm.channels = header.at("ptm_channels").get<std::vector<int>>();
  cfg.rho_low = header.at("rho_low").get<double>();
  cfg.rho_high = header.at("rho_high").get<double>();
  cfg.kind = metric_kind_from_string(header.at("kind").get<std::string>());
  cfg.adapter_seed = header.at("adapter_seed").get<uint64_t>();

  FeatureFlags flags;
  const auto& jf = header.at("flags");
  flags.use_freq_input = jf.at("use_freq_input").get<bool>();
  flags.use_position_adapters = jf.at("use_position_adapters").get<bool>();
  flags.use_augmentation = jf.at("use_augmentation").get<bool>();
  flags.use_symmetric_loss = jf.at("use_symmetric_loss").get<bool>();

  LoadedModel out{AdapterViT<float>(cfg), flags};
  require(out.model.backbone_hash() == header.at("backbone_hash").get<std::string>(),
          "checkpoint load: frozen backbone hash mismatch (tag " +
              bb.at("tag").get<std::string>() + ")");
  for (const auto& jp : header.at("params")) {
    const std::string name = jp.at("name").get<std::string>();
    auto& p = out.model.params().at(out.model.params().find(name));
    require(p.trainable, "checkpoint load: " + name + " should be trainable");
    const uint64_t offset = jp.at("offset").get<uint64_t>();
    const uint64_t bytes = jp.at("bytes").get<uint64_t>();
    require(bytes == p.value.v.size() * sizeof(float) &&
                offset + bytes <= blobs.size(),
            "checkpoint load: parameter blob mismatch for " + name);
    std::memcpy(p.value.v.data(), blobs.data() + offset, bytes);
  }
  return out;
}

}  // namespace dermamap
