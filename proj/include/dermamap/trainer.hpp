#pragma once

#include <limits>
#include <string>
#include <vector>

#include "dermamap/augment.hpp"
#include "dermamap/model.hpp"
#include "dermamap/types.hpp"

namespace dermamap {

// One training/eval example: a cropped patch with its metadata.
struct PatchExample {
  Image8 patch;
  int position_id = 0;
  double label = 0.0;  // measurement units
  std::string panelist;
  Lighting lighting = Lighting::kNatural;
  Angle angle = Angle::kFront;
};

// Crops every labeled anchor of every record (Eq.-style exact slices).
std::vector<PatchExample> expand_patches(const Dataset& ds, MetricKind kind);

// Split helpers keyed on panelist identity.
std::vector<PatchExample> filter_by_panelists(
    const std::vector<PatchExample>& patches,
    const std::vector<std::string>& panelists, bool keep);

struct TrainConfig {
  double lr = 1e-5;           // paper recipe default; toy runs use larger rates
  int epochs = 50;
  int batch = 16;
  double tau = 0.1;
  uint64_t seed = 0;
  FeatureFlags flags;
  bool lighting_augmentation = false;  // degrade-and-blend ops during training
  // Optional early stop once validation R^2 reaches this value.
  double stop_at_val_r2 = std::numeric_limits<double>::infinity();
  int max_steps = 0;  // 0 = no cap; used by short-run tests

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_r2 = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::string backbone_hash_before;
  std::string backbone_hash_after;
  int steps = 0;
};

// Optimizes adapter/texture-encoder/head parameters only; the frozen
// backbone is hashed before and after as part of the result. With the
// symmetric term on, batches are assembled as symmetric pairs (midline
// position 1 joins MSE-only batches).
TrainResult train_model(AdapterViT<float>& model,
                        const std::vector<PatchExample>& train_set,
                        const std::vector<PatchExample>& val_set,
                        const TrainConfig& cfg);

// Forward-only helpers (no augmentation, deterministic).
struct EvalOutputs {
  std::vector<double> yhat_scaled;
  std::vector<std::vector<double>> latents;
};
EvalOutputs run_inference(const AdapterViT<float>& model,
                          const std::vector<PatchExample>& patches,
                          FeatureFlags flags, int batch = 16);

double validation_r2(const AdapterViT<float>& model,
                     const std::vector<PatchExample>& val_set,
                     FeatureFlags flags);

}  // namespace dermamap
