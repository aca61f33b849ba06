#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dermamap/nn/optim.hpp"
#include "dermamap/rng.hpp"
#include "dermamap/types.hpp"

namespace dermamap {

// Exact pixel slice [c.r - r, c.r + r) x [c.c - r, c.c + r); the window must
// lie inside the image. `position_id` is only used in error messages.
Image8 crop_patch(const Image8& image, const Point2& center, int r,
                  int position_id = 0);
SkinPatch crop_patch(const FacialImage& image, const Point2& center,
                     int position_id, const Measurement& label);

// Ratio of prediction error to sticker radius; < 1 means the prediction
// falls inside the sticker.
double anchor_error_rate(const Point2& predicted, const Point2& actual, double r);

// Similarity normalization: centroid to origin, RMS radius to 1.
struct NormTransform {
  Point2 centroid;
  double scale = 1.0;  // RMS radius of the input

  Point2 apply(const Point2& p) const {
    return {(p.r - centroid.r) / scale, (p.c - centroid.c) / scale};
  }
  Point2 invert(const Point2& p) const {
    return {p.r * scale + centroid.r, p.c * scale + centroid.c};
  }
};

std::pair<LandmarkSet, NormTransform> normalize_landmarks(const LandmarkSet& lm);

// Sticker extraction by color segmentation: threshold in HSV, connected
// components, per-component centroids. IDs are assigned in discovery order
// (top-left first) and carry no anatomical meaning.
struct ColorSpec {
  double hue_lo = 90.0;   // degrees; default saturated green band
  double hue_hi = 150.0;
  double sat_min = 0.5;
  double val_min = 0.2;
  int min_area = 20;      // pixels
  int expected_count = kNumPositions;
};

struct StickerResult {
  AnchorSet centroids;
  Warnings warnings;
};

StickerResult sticker_centroids(const Image8& image, const ColorSpec& spec);

// Point-set regressor: shared per-point encoder with index embeddings,
// mean+max pooling, dense head emitting all 37 anchor coordinates in the
// normalized landmark frame.
struct AnchorModelConfig {
  int embed_dim = 8;
  int hidden = 64;
  int head_hidden = 128;
  double lr = 1e-3;
  int epochs = 150;
  int batch = 32;
  double tau_unused = 0.0;
  uint64_t seed = 11;
};

class AnchorRegressor {
 public:
  explicit AnchorRegressor(const AnchorModelConfig& cfg);

  // Predicts all 37 anchors in the original image frame.
  // Calling an untrained model is an error.
  AnchorSet predict_anchors(const LandmarkSet& landmarks) const;

  // Forward in the normalized frame: [B, 68, 2] -> [B, 74].
  nn::Tape<float>::Id forward(nn::Tape<float>& tape,
                              nn::TapeBindings<float>& binds,
                              const nn::Tensor<float>& points_norm) const;

  nn::ParamStore<float>& params() { return params_; }
  const AnchorModelConfig& config() const { return cfg_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  void save(const std::string& path) const;
  static AnchorRegressor load(const std::string& path);

 private:
  AnchorModelConfig cfg_;
  nn::ParamStore<float> params_;
  bool trained_ = false;
};

// MSE on normalized coordinates, optimizer/schedule as in the main recipe.
// Returns the trained model; an empty training set is an error.
AnchorRegressor train_anchor_model(
    const std::vector<std::pair<LandmarkSet, AnchorSet>>& pairs,
    const AnchorModelConfig& cfg);

// Mean error rate over a held-out set at sticker radius r.
double mean_anchor_error_rate(
    const AnchorRegressor& model,
    const std::vector<std::pair<LandmarkSet, AnchorSet>>& pairs, double r);

}  // namespace dermamap
