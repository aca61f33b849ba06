#include "dermamap/trainer.hpp"

#include <algorithm>

#include "dermamap/anchors.hpp"
#include "dermamap/evalmetrics.hpp"
#include "dermamap/losses.hpp"

namespace dermamap {

std::vector<PatchExample> expand_patches(const Dataset& ds, MetricKind kind) {
  std::vector<PatchExample> out;
  for (const auto& rec : ds.records) {
    const int r = patch_radius(rec.image.modality);
    for (const auto& [d, label] : rec.labels) {
      if (label.kind != kind) continue;
      const auto it = rec.anchors.entries.find(d);
      require(it != rec.anchors.entries.end(),
              "expand_patches: label without anchor at position " + std::to_string(d));
      PatchExample ex;
      ex.patch = crop_patch(rec.image.pixels, it->second, r, d);
      ex.position_id = d;
      ex.label = label.value;
      ex.panelist = rec.image.panelist_id;
      ex.lighting = rec.image.lighting;
      ex.angle = rec.image.angle;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<PatchExample> filter_by_panelists(
    const std::vector<PatchExample>& patches,
    const std::vector<std::string>& panelists, bool keep) {
  std::vector<PatchExample> out;
  for (const auto& p : patches) {
    const bool member =
        std::find(panelists.begin(), panelists.end(), p.panelist) != panelists.end();
    if (member == keep) out.push_back(p);
  }
  return out;
}

void TrainConfig::validate() const {
  require(tau > 0.0, "train config: temperature must be positive");
  require(epochs >= 1 && batch >= 2, "train config: epochs/batch invalid");
  if (flags.use_symmetric_loss)
    require(batch % 2 == 0, "train config: batch must be even for pair sampling");
}

namespace {

// Indices into the patch list, grouped for batch assembly.
struct BatchPlan {
  std::vector<std::pair<int, int>> pairs;  // symmetric partners
  std::vector<int> singles;                // midline / unpaired
};

BatchPlan plan_pairs(const std::vector<PatchExample>& patches) {
  const SymmetryTable sym = build_symmetry_table();
  // Group by image context (panelist, lighting, angle) and position.
  std::map<std::tuple<std::string, int, int>, std::map<int, int>> by_context;
  for (int i = 0; i < int(patches.size()); ++i) {
    const auto& p = patches[size_t(i)];
    by_context[{p.panelist, int(p.lighting), int(p.angle)}][p.position_id] = i;
  }
  BatchPlan plan;
  for (const auto& [ctx, by_pos] : by_context) {
    for (const auto& [d, idx] : by_pos) {
      if (!sym.is_paired(d)) {
        plan.singles.push_back(idx);
        continue;
      }
      const int d2 = sym.partner(d);
      if (d < d2) {
        const auto it = by_pos.find(d2);
        if (it != by_pos.end())
          plan.pairs.push_back({idx, it->second});
        else
          plan.singles.push_back(idx);
      }
    }
  }
  return plan;
}

ModelInput<float> prepare_example(const PatchExample& ex, const ModelConfig& mcfg,
                                  const TrainConfig& tcfg, Rng* aug_rng) {
  Image8 patch = ex.patch;
  if (aug_rng != nullptr) {
    if (tcfg.flags.use_augmentation) patch = random_geometric(patch, *aug_rng);
    if (tcfg.lighting_augmentation) patch = random_lighting(patch, *aug_rng);
  }
  return prepare_input<float>(patch, ex.position_id, mcfg,
                              tcfg.flags.use_freq_input);
}

}  // namespace

EvalOutputs run_inference(const AdapterViT<float>& model,
                          const std::vector<PatchExample>& patches,
                          FeatureFlags flags, int batch) {
  EvalOutputs out;
  const auto& mcfg = model.config();
  for (size_t i = 0; i < patches.size(); i += size_t(batch)) {
    std::vector<ModelInput<float>> inputs;
    for (size_t j = i; j < std::min(patches.size(), i + size_t(batch)); ++j)
      inputs.push_back(prepare_input<float>(patches[j].patch,
                                            patches[j].position_id, mcfg,
                                            flags.use_freq_input));
    auto pred = model.predict(inputs, flags);
    out.yhat_scaled.insert(out.yhat_scaled.end(), pred.yhat.begin(), pred.yhat.end());
    for (auto& z : pred.z) out.latents.push_back(std::move(z));
  }
  return out;
}

double validation_r2(const AdapterViT<float>& model,
                     const std::vector<PatchExample>& val_set,
                     FeatureFlags flags) {
  const auto outs = run_inference(model, val_set, flags);
  std::vector<double> preds, labels;
  preds.reserve(val_set.size());
  labels.reserve(val_set.size());
  const MetricKind kind = model.config().kind;
  for (size_t i = 0; i < val_set.size(); ++i) {
    preds.push_back(unscale_label(outs.yhat_scaled[i], kind));
    labels.push_back(val_set[i].label);
  }
  return r2_score(preds, labels);
}

TrainResult train_model(AdapterViT<float>& model,
                        const std::vector<PatchExample>& train_set,
                        const std::vector<PatchExample>& val_set,
                        const TrainConfig& cfg) {
  cfg.validate();
  require(!train_set.empty(), "train: empty training set");
  const ModelConfig& mcfg = model.config();
  const MetricKind kind = mcfg.kind;

  TrainResult result;
  result.backbone_hash_before = model.backbone_hash();

  nn::Adam<float> adam;
  Rng base_rng(cfg.seed);
  const BatchPlan plan = plan_pairs(train_set);
  const bool sym = cfg.flags.use_symmetric_loss;

  // Per-batch work item: sample indices plus whether pairs are valid.
  struct Batch {
    std::vector<int> idx;
    bool paired = false;
  };

  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    Rng epoch_rng = base_rng.derive(uint64_t(epoch));
    std::vector<Batch> batches;
    if (sym) {
      auto pairs = plan.pairs;
      epoch_rng.shuffle(pairs);
      const int per_batch = cfg.batch / 2;
      for (size_t i = 0; i < pairs.size(); i += size_t(per_batch)) {
        Batch b;
        b.paired = true;
        for (size_t j = i; j < std::min(pairs.size(), i + size_t(per_batch)); ++j) {
          b.idx.push_back(pairs[j].first);
          b.idx.push_back(pairs[j].second);
        }
        batches.push_back(std::move(b));
      }
      auto singles = plan.singles;
      epoch_rng.shuffle(singles);
      for (size_t i = 0; i < singles.size(); i += size_t(cfg.batch)) {
        Batch b;
        for (size_t j = i; j < std::min(singles.size(), i + size_t(cfg.batch)); ++j)
          b.idx.push_back(singles[j]);
        batches.push_back(std::move(b));
      }
    } else {
      std::vector<int> order(train_set.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
      epoch_rng.shuffle(order);
      for (size_t i = 0; i < order.size(); i += size_t(cfg.batch)) {
        Batch b;
        for (size_t j = i; j < std::min(order.size(), i + size_t(cfg.batch)); ++j)
          b.idx.push_back(order[j]);
        batches.push_back(std::move(b));
      }
    }

    const double lr_now = nn::cosine_lr(cfg.lr, epoch, cfg.epochs);
    double loss_sum = 0.0;
    int loss_count = 0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      std::vector<ModelInput<float>> inputs;
      std::vector<float> labels;
      inputs.reserve(batch.idx.size());
      for (size_t k = 0; k < batch.idx.size(); ++k) {
        const auto& ex = train_set[size_t(batch.idx[k])];
        Rng aug_rng = base_rng.derive((uint64_t(epoch) << 32) ^
                                      (uint64_t(bi) << 16) ^ uint64_t(k) ^
                                      0xa5a5a5a5ULL);
        inputs.push_back(prepare_example(ex, mcfg, cfg, &aug_rng));
        labels.push_back(float(scale_label(ex.label, kind)));
      }
      std::vector<int> pair_index(inputs.size(), -1);
      if (batch.paired)
        for (size_t k = 0; k < inputs.size(); ++k) pair_index[k] = int(k ^ 1);

      nn::Tape<float> tape(/*grad_enabled=*/true);
      nn::TapeBindings<float> binds;
      const auto ids = model.forward_batch(tape, binds, inputs, cfg.flags);
      const auto loss = batch_objective<float>(tape, ids.z, ids.yhat, labels,
                                               pair_index, float(cfg.tau),
                                               sym && batch.paired);
      model.params().zero_grads();
      tape.backward(loss);
      binds.collect_grads(tape, model.params());
      adam.step(model.params(), lr_now);

      loss_sum += double(tape.val(loss).v[0]);
      ++loss_count;
      ++result.steps;
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) {
        stop = true;
        break;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr_now;
    stats.train_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    stats.val_r2 = val_set.empty()
                       ? 0.0
                       : validation_r2(model, val_set, cfg.flags);
    result.history.push_back(stats);
    if (!val_set.empty() && stats.val_r2 >= cfg.stop_at_val_r2) stop = true;
  }

  result.backbone_hash_after = model.backbone_hash();
  return result;
}

}  // namespace dermamap
