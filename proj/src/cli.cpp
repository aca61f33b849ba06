#include "dermamap/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dermamap/anchors.hpp"
#include "dermamap/checkpoint.hpp"
#include "dermamap/config.hpp"
#include "dermamap/dataset_io.hpp"
#include "dermamap/harness.hpp"
#include "dermamap/heatmap.hpp"
#include "dermamap/manifest.hpp"
#include "dermamap/synthgen.hpp"

namespace dermamap {

namespace {

using nlohmann::json;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
};

RunConfig load_config(const CommonOpts& opts) {
  ConfigStore store = opts.config_path.empty()
                          ? ConfigStore{}
                          : parse_config_file(opts.config_path);
  for (const auto& o : opts.overrides) apply_override(store, o);
  if (opts.seed) store.set("seed", std::to_string(*opts.seed));
  return resolve_config(store);
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "Run configuration file");
  cmd->add_option("--set", opts.overrides,
                  "Override a config value (section.key=value); repeatable");
  cmd->add_option("--seed", opts.seed, "Override the global seed");
}

Manifest make_manifest(const std::string& subcommand, const RunConfig& cfg) {
  Manifest m;
  m.subcommand = subcommand;
  m.seed = cfg.global_seed;
  m.config = cfg.snapshot;
  return m;
}

json geometry_to_json(const LandmarkSet& lm, const AnchorSet& anchors) {
  json j;
  json pts = json::array();
  for (const auto& p : lm.points) pts.push_back({p.r, p.c});
  j["landmarks"] = pts;
  json a;
  for (const auto& [d, p] : anchors.entries)
    a[std::to_string(d)] = {p.r, p.c};
  j["anchors"] = a;
  return j;
}

LandmarkSet landmarks_from_json(const json& j) {
  LandmarkSet lm;
  const auto& pts = j.at("landmarks");
  require(pts.size() == kNumLandmarks,
          "landmarks file must hold exactly 68 points");
  for (size_t i = 0; i < kNumLandmarks; ++i) {
    lm.points[i] = {pts[i].at(0).get<double>(), pts[i].at(1).get<double>()};
  }
  lm.validate();
  return lm;
}

std::vector<std::pair<LandmarkSet, AnchorSet>> make_geometry_pairs(uint64_t seed,
                                                                   int count) {
  Rng rng(seed);
  std::vector<std::pair<LandmarkSet, AnchorSet>> pairs;
  pairs.reserve(size_t(count));
  for (int i = 0; i < count; ++i) pairs.push_back(gen_landmark_template(rng));
  return pairs;
}

// Splits a dataset by trailing panelists for validation.
void split_dataset(const Dataset& ds, int holdout, Dataset* train, Dataset* val) {
  const auto panelists = ds.panelists();
  require(int(panelists.size()) > holdout,
          "dataset split: not enough panelists to hold out " +
              std::to_string(holdout));
  std::vector<std::string> held(panelists.end() - holdout, panelists.end());
  for (const auto& rec : ds.records) {
    const bool is_held = std::find(held.begin(), held.end(),
                                   rec.image.panelist_id) != held.end();
    (is_held ? val : train)->records.push_back(rec);
  }
}

int cmd_synth(const CommonOpts& opts, const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  const Dataset ds = gen_dataset(cfg.synth);
  serialize_dataset(ds, out_path);
  // Reference geometry sample for the anchor/heatmap pipeline.
  const std::string geom_path = out_path + ".geometry.json";
  {
    Rng rng(cfg.synth.seed ^ 0x9e0);
    const auto [lm, anchors] = gen_landmark_template(rng);
    std::ofstream os(geom_path);
    os << geometry_to_json(lm, anchors).dump(2) << "\n";
  }
  Manifest m = make_manifest("synth", cfg);
  m.seed = cfg.synth.seed;
  m.add_output(out_path);
  m.add_output(geom_path);
  m.write(out_path);
  std::cout << "wrote " << ds.records.size() << " records ("
            << ds.patch_count() << " labeled patches) to " << out_path << "\n";
  return 0;
}

int cmd_filter(const CommonOpts& opts, const std::string& input,
               const std::string& kind, double rho_l, double rho_h,
               const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  const Image8 img = read_png(input);
  FreqMask mask;
  if (kind == "low")
    mask = lowpass_mask(rho_l, img.rows, img.cols);
  else if (kind == "high")
    mask = highpass_mask(rho_h, img.rows, img.cols);
  else if (kind == "band")
    mask = bandpass_mask(rho_l, rho_h, img.rows, img.cols);
  else
    fail("filter: kind must be low, high or band");
  const auto texture = extract_texture_rgb(img, mask);
  // Low-pass keeps the DC term; the others are zero-mean and sit on gray.
  const double offset = (kind == "low") ? 0.0 : 128.0;
  GridD planes[3];
  for (int ch = 0; ch < 3; ++ch) {
    planes[ch] = texture[size_t(ch)];
    for (auto& v : planes[ch].data) v += offset;
  }
  write_png(from_channels(planes[0], planes[1], planes[2]), out_path);
  Manifest m = make_manifest("filter", cfg);
  m.add_input(input);
  m.add_output(out_path);
  m.write(out_path);
  return 0;
}

int cmd_anchors_train(const CommonOpts& opts, int pair_count,
                      const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  AnchorModelConfig acfg;
  acfg.seed = cfg.global_seed ^ 0xa17c;
  const auto pairs = make_geometry_pairs(acfg.seed ^ 1, pair_count);
  AnchorRegressor model = train_anchor_model(pairs, acfg);
  model.save(out_path);
  const auto holdout = make_geometry_pairs(acfg.seed ^ 2, std::max(20, pair_count / 4));
  const double err = mean_anchor_error_rate(model, holdout, kSyntheticStickerRadius);
  std::cout << "anchor model trained on " << pairs.size()
            << " synthetic faces; held-out mean error rate " << err << "\n";
  Manifest m = make_manifest("anchors-train", cfg);
  m.add_output(out_path);
  m.write(out_path);
  return 0;
}

int cmd_anchors_eval(const CommonOpts& opts, const std::string& model_path,
                     int pair_count) {
  RunConfig cfg = load_config(opts);
  AnchorRegressor model = AnchorRegressor::load(model_path);
  const auto pairs = make_geometry_pairs(cfg.global_seed ^ 0xe7a1, pair_count);
  const double err = mean_anchor_error_rate(model, pairs, kSyntheticStickerRadius);
  std::cout << "mean error rate over " << pairs.size() << " faces: " << err
            << (err < 1.0 ? "  (within sticker radius)" : "  (outside sticker radius)")
            << "\n";
  return 0;
}

int cmd_anchors_predict(const CommonOpts& opts, const std::string& model_path,
                        const std::string& landmarks_path,
                        const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  AnchorRegressor model = AnchorRegressor::load(model_path);
  std::ifstream in(landmarks_path);
  require(bool(in), "anchors predict: cannot open " + landmarks_path);
  json j;
  in >> j;
  const LandmarkSet lm = landmarks_from_json(j);
  const AnchorSet anchors = model.predict_anchors(lm);
  std::ofstream os(out_path);
  os << geometry_to_json(lm, anchors).dump(2) << "\n";
  Manifest m = make_manifest("anchors-predict", cfg);
  m.add_input(landmarks_path);
  m.add_output(out_path);
  m.write(out_path);
  return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& dataset_path,
              const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  const Dataset ds = load_dataset(dataset_path);
  Dataset train_ds, val_ds;
  split_dataset(ds, cfg.holdout_panelists, &train_ds, &val_ds);
  const auto train_set = expand_patches(train_ds, cfg.model.kind);
  const auto val_set = expand_patches(val_ds, cfg.model.kind);

  AdapterViT<float> model(cfg.model);
  const TrainResult result = train_model(model, train_set, val_set, cfg.train);
  save_checkpoint(model, cfg.flags, out_path);

  json hist = json::array();
  for (const auto& e : result.history)
    hist.push_back({{"epoch", e.epoch},
                    {"lr", e.lr},
                    {"train_loss", e.train_loss},
                    {"val_r2", e.val_r2}});
  const std::string hist_path = out_path + ".history.json";
  std::ofstream os(hist_path);
  os << hist.dump(2) << "\n";

  Manifest m = make_manifest("train", cfg);
  m.seed = cfg.train.seed;
  m.add_input(dataset_path);
  m.add_output(out_path);
  m.add_output(hist_path);
  m.write(out_path);
  if (!result.history.empty())
    std::cout << "final epoch " << result.history.back().epoch
              << "  train_loss=" << result.history.back().train_loss
              << "  val_r2=" << result.history.back().val_r2 << "\n";
  return 0;
}

int cmd_predict(const CommonOpts& opts, const std::string& checkpoint_path,
                const std::string& dataset_path, const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  LoadedModel loaded = load_checkpoint(checkpoint_path);
  const Dataset ds = load_dataset(dataset_path);
  const MetricKind kind = loaded.model.config().kind;

  std::ofstream os(out_path);
  require(bool(os), "predict: cannot open " + out_path);
  for (const auto& rec : ds.records) {
    std::vector<PatchExample> patches;
    Dataset one;
    one.records.push_back(rec);
    patches = expand_patches(one, kind);
    if (patches.empty()) continue;
    const auto outs = run_inference(loaded.model, patches, loaded.flags);
    for (size_t i = 0; i < patches.size(); ++i) {
      const auto& anchor = rec.anchors.entries.at(patches[i].position_id);
      json line;
      line["panelist"] = rec.image.panelist_id;
      line["lighting"] = to_string(rec.image.lighting);
      line["angle"] = to_string(rec.image.angle);
      line["position_id"] = patches[i].position_id;
      line["anchor"] = {anchor.r, anchor.c};
      line["y_pred"] = unscale_label(outs.yhat_scaled[i], kind);
      line["y_true"] = patches[i].label;
      line["kind"] = to_string(kind);
      os << line.dump() << "\n";
    }
  }
  os.close();
  Manifest m = make_manifest("predict", cfg);
  m.add_input(checkpoint_path);
  m.add_input(dataset_path);
  m.add_output(out_path);
  m.write(out_path);
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint_path,
             const std::string& dataset_path, const std::string& train_dataset_path,
             const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  LoadedModel loaded = load_checkpoint(checkpoint_path);
  const Dataset eval_ds = load_dataset(dataset_path);
  const Dataset train_ds = load_dataset(train_dataset_path);
  const auto train_set = expand_patches(train_ds, loaded.model.config().kind);
  const ShotPartition partition = partition_from_patches(train_set, cfg.eval_bin_width);
  EvalReport rep = evaluate_checkpoint(checkpoint_path, eval_ds, partition);
  rep.dataset_tag = dataset_path;
  std::cout << rep.to_table_row() << "\n";
  std::ofstream os(out_path);
  os << rep.to_json() << "\n";
  os.close();
  Manifest m = make_manifest("eval", cfg);
  m.add_input(checkpoint_path);
  m.add_input(dataset_path);
  m.add_input(train_dataset_path);
  m.add_output(out_path);
  m.write(out_path);
  return 0;
}

int cmd_loo_lighting(const CommonOpts& opts, const std::string& dataset_path,
                     const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  const Dataset ds = load_dataset(dataset_path);
  const auto cells = leave_one_lighting_out(ds, cfg.model, cfg.train,
                                            cfg.eval_bin_width);
  json rows = json::array();
  for (const auto& cell : cells) {
    std::cout << "holdout " << to_string(cell.held_out) << "\n"
              << "  with lighting aug:    "
              << cell.with_lighting_aug.to_table_row() << "\n"
              << "  without lighting aug: "
              << cell.without_lighting_aug.to_table_row() << "\n";
    rows.push_back({{"held_out", to_string(cell.held_out)},
                    {"with_lighting_aug",
                     json::parse(cell.with_lighting_aug.to_json())},
                    {"without_lighting_aug",
                     json::parse(cell.without_lighting_aug.to_json())}});
  }
  std::ofstream os(out_path);
  os << rows.dump(2) << "\n";
  os.close();
  Manifest m = make_manifest("loo-lighting", cfg);
  m.add_input(dataset_path);
  m.add_output(out_path);
  m.write(out_path);
  return 0;
}

int cmd_ablation(const CommonOpts& opts, const std::string& dataset_path,
                 const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  const Dataset ds = load_dataset(dataset_path);
  Dataset train_ds, val_ds;
  split_dataset(ds, cfg.holdout_panelists, &train_ds, &val_ds);
  const auto train_set = expand_patches(train_ds, cfg.model.kind);
  const auto eval_set = expand_patches(val_ds, cfg.model.kind);
  const auto rows = ablation_ladder(train_set, eval_set, cfg.model, cfg.train,
                                    cfg.eval_bin_width);
  json out = json::array();
  for (const auto& row : rows) {
    std::cout << "config " << row.config << ": " << row.report.to_table_row()
              << "\n";
    out.push_back({{"config", std::string(1, row.config)},
                   {"report", json::parse(row.report.to_json())}});
  }
  std::ofstream os(out_path);
  os << out.dump(2) << "\n";
  os.close();
  Manifest m = make_manifest("ablation", cfg);
  m.add_input(dataset_path);
  m.add_output(out_path);
  m.write(out_path);
  return 0;
}

int cmd_heatmap(const CommonOpts& opts, const std::string& preds_path,
                const std::string& image_path, const std::string& kind_str,
                const std::string& out_path, std::optional<double> alpha_opt,
                bool legend_flag, const std::string& landmarks_path,
                const std::string& panelist, const std::string& lighting,
                const std::string& angle) {
  RunConfig cfg = load_config(opts);
  const MetricKind kind = metric_kind_from_string(kind_str);
  const Image8 image = read_png(image_path);

  // Collect predictions for one (panelist, lighting, angle) group.
  std::ifstream in(preds_path);
  require(bool(in), "heatmap: cannot open " + preds_path);
  std::vector<Point2> anchors;
  std::vector<double> values;
  std::string line;
  std::string want_p = panelist, want_l = lighting, want_a = angle;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (metric_kind_from_string(j.at("kind").get<std::string>()) != kind) continue;
    if (want_p.empty()) {
      // Default to the first group encountered.
      want_p = j.at("panelist").get<std::string>();
      if (want_l.empty()) want_l = j.at("lighting").get<std::string>();
      if (want_a.empty()) want_a = j.at("angle").get<std::string>();
    }
    if (j.at("panelist").get<std::string>() != want_p ||
        (!want_l.empty() && j.at("lighting").get<std::string>() != want_l) ||
        (!want_a.empty() && j.at("angle").get<std::string>() != want_a))
      continue;
    anchors.push_back(
        {j.at("anchor").at(0).get<double>(), j.at("anchor").at(1).get<double>()});
    values.push_back(j.at("y_pred").get<double>());
  }
  require(anchors.size() >= 3,
          "heatmap: fewer than 3 predictions matched the selection");

  Polygon mask;
  if (!landmarks_path.empty()) {
    std::ifstream lin(landmarks_path);
    require(bool(lin), "heatmap: cannot open " + landmarks_path);
    json j;
    lin >> j;
    const LandmarkSet lm = landmarks_from_json(j);
    mask = convex_hull(std::vector<Point2>(lm.points.begin(), lm.points.end()));
  } else {
    mask = convex_hull(anchors);
  }

  const ColorScale scale{kind};
  const double alpha = alpha_opt ? *alpha_opt : cfg.heatmap.alpha;
  const ScalarField field =
      interpolate_field(anchors, values, mask, image.rows, image.cols);
  Image8 out = render_overlay(image, field, scale, alpha);
  if (legend_flag || cfg.heatmap.legend) {
    // Embed a legend strip along the right edge.
    const int strip_w = std::max(8, image.cols / 40);
    const Image8 strip = legend_strip(scale, image.rows, strip_w);
    for (int r = 0; r < image.rows; ++r)
      for (int c = 0; c < strip_w; ++c)
        for (int ch = 0; ch < 3; ++ch)
          out.at(r, image.cols - strip_w + c, ch) = strip.at(r, c, ch);
  }
  write_png(out, out_path);
  Manifest m = make_manifest("heatmap", cfg);
  m.add_input(preds_path);
  m.add_input(image_path);
  if (!landmarks_path.empty()) m.add_input(landmarks_path);
  m.add_output(out_path);
  m.write(out_path);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Facial skin barrier estimation pipeline (synthetic desk-scale build)"};
  app.require_subcommand(1);

  CommonOpts opts;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_out;
  add_common(synth, opts);
  synth->add_option("--out", synth_out, "Output dataset container")->required();

  // filter
  auto* filter = app.add_subcommand("filter", "Frequency-filter an image");
  std::string filter_in, filter_kind = "band", filter_out;
  double rho_l = 0.0576, rho_h = 0.0036;
  add_common(filter, opts);
  filter->add_option("--input", filter_in, "Input PNG")->required();
  filter->add_option("--kind", filter_kind, "low | high | band");
  filter->add_option("--rho-l", rho_l, "Retained fraction");
  filter->add_option("--rho-h", rho_h, "Removed fraction");
  filter->add_option("--out", filter_out, "Output PNG")->required();

  // anchors
  auto* anchors_cmd = app.add_subcommand("anchors", "Anchor-regressor pipeline");
  anchors_cmd->require_subcommand(1);
  auto* anchors_train = anchors_cmd->add_subcommand("train", "Train on synthetic geometry");
  std::string anchors_model_out, anchors_model_in, anchors_lm, anchors_out;
  int anchors_pairs = 400;
  add_common(anchors_train, opts);
  anchors_train->add_option("--pairs", anchors_pairs, "Training faces");
  anchors_train->add_option("--out", anchors_model_out, "Model file")->required();
  auto* anchors_eval = anchors_cmd->add_subcommand("eval", "Held-out error rate");
  add_common(anchors_eval, opts);
  anchors_eval->add_option("--model", anchors_model_in, "Model file")->required();
  anchors_eval->add_option("--pairs", anchors_pairs, "Evaluation faces");
  auto* anchors_predict = anchors_cmd->add_subcommand("predict", "Predict anchors");
  add_common(anchors_predict, opts);
  anchors_predict->add_option("--model", anchors_model_in, "Model file")->required();
  anchors_predict->add_option("--landmarks", anchors_lm, "Landmarks JSON")->required();
  anchors_predict->add_option("--out", anchors_out, "Anchors JSON")->required();

  // train / predict / eval
  auto* train = app.add_subcommand("train", "Train the patch regressor");
  std::string train_ds_path, train_out;
  add_common(train, opts);
  train->add_option("--dataset", train_ds_path, "Dataset container")->required();
  train->add_option("--out", train_out, "Checkpoint file")->required();

  auto* predict = app.add_subcommand("predict", "Predict per-anchor values");
  std::string pred_ckpt, pred_ds, pred_out;
  add_common(predict, opts);
  predict->add_option("--checkpoint", pred_ckpt, "Checkpoint")->required();
  predict->add_option("--dataset", pred_ds, "Dataset container")->required();
  predict->add_option("--out", pred_out, "Predictions JSONL")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_ds, eval_train_ds, eval_out;
  add_common(eval, opts);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint")->required();
  eval->add_option("--dataset", eval_ds, "Evaluation dataset")->required();
  eval->add_option("--train-dataset", eval_train_ds,
                   "Training dataset (shot-partition source)")->required();
  eval->add_option("--out", eval_out, "Report JSON")->required();

  // harnesses
  auto* loo = app.add_subcommand("loo-lighting", "Leave-one-lighting-out runs");
  std::string loo_ds, loo_out;
  add_common(loo, opts);
  loo->add_option("--dataset", loo_ds, "Dataset container")->required();
  loo->add_option("--out", loo_out, "Report JSON")->required();

  auto* ablation = app.add_subcommand("ablation", "Incremental feature ladder A..E");
  std::string abl_ds, abl_out;
  add_common(ablation, opts);
  ablation->add_option("--dataset", abl_ds, "Dataset container")->required();
  ablation->add_option("--out", abl_out, "Report JSON")->required();

  // heatmap
  auto* heatmap = app.add_subcommand("heatmap", "Render a prediction overlay");
  std::string hm_preds, hm_image, hm_kind = "TEWL", hm_out, hm_landmarks;
  std::string hm_panelist, hm_lighting, hm_angle;
  std::optional<double> hm_alpha;
  bool hm_legend = false;
  add_common(heatmap, opts);
  heatmap->add_option("--preds", hm_preds, "Predictions JSONL")->required();
  heatmap->add_option("--image", hm_image, "Base image PNG")->required();
  heatmap->add_option("--kind", hm_kind, "TEWL | SH");
  heatmap->add_option("--out", hm_out, "Output PNG")->required();
  heatmap->add_option("--alpha", hm_alpha, "Overlay opacity [0,1]");
  heatmap->add_flag("--legend", hm_legend, "Embed a legend strip");
  heatmap->add_option("--landmarks", hm_landmarks, "Landmarks JSON for the face mask");
  heatmap->add_option("--panelist", hm_panelist, "Select predictions by panelist");
  heatmap->add_option("--lighting", hm_lighting, "Select predictions by lighting");
  heatmap->add_option("--angle", hm_angle, "Select predictions by angle");

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      app.exit(e);
      return 0;
    }
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(opts, synth_out);
    if (filter->parsed())
      return cmd_filter(opts, filter_in, filter_kind, rho_l, rho_h, filter_out);
    if (anchors_cmd->parsed()) {
      if (anchors_train->parsed())
        return cmd_anchors_train(opts, anchors_pairs, anchors_model_out);
      if (anchors_eval->parsed())
        return cmd_anchors_eval(opts, anchors_model_in, anchors_pairs);
      return cmd_anchors_predict(opts, anchors_model_in, anchors_lm, anchors_out);
    }
    if (train->parsed()) return cmd_train(opts, train_ds_path, train_out);
    if (predict->parsed()) return cmd_predict(opts, pred_ckpt, pred_ds, pred_out);
    if (eval->parsed())
      return cmd_eval(opts, eval_ckpt, eval_ds, eval_train_ds, eval_out);
    if (loo->parsed()) return cmd_loo_lighting(opts, loo_ds, loo_out);
    if (ablation->parsed()) return cmd_ablation(opts, abl_ds, abl_out);
    if (heatmap->parsed())
      return cmd_heatmap(opts, hm_preds, hm_image, hm_kind, hm_out, hm_alpha,
                         hm_legend, hm_landmarks, hm_panelist, hm_lighting,
                         hm_angle);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "usage error: no subcommand\n";
  return 2;
}

}  // namespace dermamap
