#pragma once

#include <map>

#include "dermamap/checkpoint.hpp"
#include "dermamap/evalmetrics.hpp"
#include "dermamap/trainer.hpp"

namespace dermamap {

// Evaluation of a trained model on patch examples. The partition must come
// from the training split.
EvalReport evaluate_model(const AdapterViT<float>& model, FeatureFlags flags,
                          const std::vector<PatchExample>& eval_set,
                          const ShotPartition& partition);

EvalReport evaluate_checkpoint(const std::string& checkpoint_path,
                               const Dataset& eval_ds,
                               const ShotPartition& partition);

// Builds the partition from training labels at the given bin width.
ShotPartition partition_from_patches(const std::vector<PatchExample>& train_set,
                                     double bin_width);

// Leave-one-lighting-out: for each held-out tag, train on the remaining tags
// and evaluate on the held-out one, with and without lighting augmentation.
struct LooCell {
  Lighting held_out;
  EvalReport with_lighting_aug;
  EvalReport without_lighting_aug;
};

std::vector<LooCell> leave_one_lighting_out(const Dataset& ds,
                                            const ModelConfig& mcfg,
                                            const TrainConfig& tcfg,
                                            double bin_width = 1.0);

// Incremental feature ladder A..E; each run trains from the same init seed
// with one more flag enabled.
struct AblationRow {
  char config = 'A';
  FeatureFlags flags;
  EvalReport report;
};

std::vector<AblationRow> ablation_ladder(
    const std::vector<PatchExample>& train_set,
    const std::vector<PatchExample>& eval_set, const ModelConfig& mcfg,
    const TrainConfig& tcfg, double bin_width = 1.0);

}  // namespace dermamap
