#pragma once

#include <string>

#include "dermamap/model.hpp"

namespace dermamap {

// Versioned checkpoint: JSON header (backbone tag + dims, texture-encoder
// channels, band fractions, metric kind, feature flags, frozen-weight hash)
// followed by float32 blobs of the trainable parameters. The backbone is
// rebuilt from its tag on load and verified against the stored hash.
constexpr uint32_t kCheckpointVersion = 1;

struct LoadedModel {
  AdapterViT<float> model;
  FeatureFlags flags;
};

void save_checkpoint(const AdapterViT<float>& model, const FeatureFlags& flags,
                     const std::string& path);
LoadedModel load_checkpoint(const std::string& path);

}  // namespace dermamap
