#include "dermamap/harness.hpp"

#include <algorithm>

namespace dermamap {

ShotPartition partition_from_patches(const std::vector<PatchExample>& train_set,
                                     double bin_width) {
  std::vector<double> labels;
  labels.reserve(train_set.size());
  for (const auto& p : train_set) labels.push_back(p.label);
  return partition_shots(labels, bin_width);
}

EvalReport evaluate_model(const AdapterViT<float>& model, FeatureFlags flags,
                          const std::vector<PatchExample>& eval_set,
                          const ShotPartition& partition) {
  require(!eval_set.empty(), "evaluate: empty evaluation set");
  const auto outs = run_inference(model, eval_set, flags);
  const MetricKind kind = model.config().kind;
  std::vector<double> preds, labels;
  preds.reserve(eval_set.size());
  labels.reserve(eval_set.size());
  for (size_t i = 0; i < eval_set.size(); ++i) {
    preds.push_back(unscale_label(outs.yhat_scaled[i], kind));
    labels.push_back(eval_set[i].label);
  }
  EvalReport rep = evaluate_predictions(preds, labels, partition, kind);
  rep.model_tag = model.config().backbone.weights_tag();
  return rep;
}

EvalReport evaluate_checkpoint(const std::string& checkpoint_path,
                               const Dataset& eval_ds,
                               const ShotPartition& partition) {
  LoadedModel loaded = load_checkpoint(checkpoint_path);
  const auto eval_set = expand_patches(eval_ds, loaded.model.config().kind);
  return evaluate_model(loaded.model, loaded.flags, eval_set, partition);
}

std::vector<LooCell> leave_one_lighting_out(const Dataset& ds,
                                            const ModelConfig& mcfg,
                                            const TrainConfig& tcfg,
                                            double bin_width) {
  const auto tags = ds.lightings();
  require(tags.size() >= 2,
          "leave-one-lighting-out: needs at least two lighting tags");
  std::vector<LooCell> cells;
  for (Lighting held_out : tags) {
    Dataset train_ds, test_ds;
    for (const auto& rec : ds.records)
      (rec.image.lighting == held_out ? test_ds : train_ds).records.push_back(rec);
    const auto train_set = expand_patches(train_ds, mcfg.kind);
    const auto test_set = expand_patches(test_ds, mcfg.kind);
    const ShotPartition partition = partition_from_patches(train_set, bin_width);

    LooCell cell;
    cell.held_out = held_out;
    for (bool light_aug : {true, false}) {
      TrainConfig cfg = tcfg;
      cfg.lighting_augmentation = light_aug;
      AdapterViT<float> model(mcfg);
      train_model(model, train_set, {}, cfg);
      EvalReport rep = evaluate_model(model, cfg.flags, test_set, partition);
      rep.dataset_tag = "holdout:" + to_string(held_out);
      (light_aug ? cell.with_lighting_aug : cell.without_lighting_aug) = rep;
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

std::vector<AblationRow> ablation_ladder(
    const std::vector<PatchExample>& train_set,
    const std::vector<PatchExample>& eval_set, const ModelConfig& mcfg,
    const TrainConfig& tcfg, double bin_width) {
  require(!train_set.empty() && !eval_set.empty(),
          "ablation ladder: empty split");
  const ShotPartition partition = partition_from_patches(train_set, bin_width);
  std::vector<AblationRow> rows;
  for (char config = 'A'; config <= 'E'; ++config) {
    TrainConfig cfg = tcfg;
    cfg.flags = flags_for_config(config);
    AdapterViT<float> model(mcfg);
    train_model(model, train_set, {}, cfg);
    AblationRow row;
    row.config = config;
    row.flags = cfg.flags;
    row.report = evaluate_model(model, cfg.flags, eval_set, partition);
    row.report.dataset_tag = std::string("config:") + config;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace dermamap
