#pragma once

#include <vector>

#include "dermamap/rng.hpp"
#include "dermamap/types.hpp"

namespace dermamap {

// Synthetic stand-in data: procedural skin-texture patches whose labels are
// a known monotone function of injected texture amplitude, plus template
// face geometry for the anchor-regression pipeline.

struct SynthConfig {
  uint64_t seed = 42;
  int n_panelists = 4;
  int patch_side = 140;  // 140 (selfie) or 340 (visia)
  MetricKind kind = MetricKind::kTewl;
  // Texture band in cycles per patch; kept strictly inside the model's
  // band-pass window so the filter provably preserves the signal.
  double freq_lo = 11.0;
  double freq_hi = 22.0;
  // Monotone affine amplitude -> label map; must stay inside the metric's
  // heatmap domain.
  double label_lo = 4.0;
  double label_hi = 26.0;
  // Target many/medium/few mass fractions of the label histogram.
  double many_mass = 0.60;
  double medium_mass = 0.25;
  double few_mass = 0.15;
  double noise_sigma = 2.0;
  // Per-pair label jitter bound: |label(d) - label(d')| <= this.
  double pair_jitter = 0.5;
  // Fraction of the texture amplitude devoted to the within-region quantile
  // rather than the global one; position identity is needed to resolve it.
  double region_coupling = 0.25;

  Modality modality() const;
  double label_map(double amplitude) const {
    return label_lo + amplitude * (label_hi - label_lo);
  }
  double amplitude_of(double label) const {
    const double a = (label - label_lo) / (label_hi - label_lo);
    return a < 0.0 ? 0.0 : (a > 1.0 ? 1.0 : a);
  }
  void validate() const;
};

// Canonical 68-landmark face and its 37 measurement anchors on a
// 1000x1000 canvas, bilaterally symmetric about the vertical midline.
struct FaceTemplate {
  LandmarkSet landmarks;
  AnchorSet anchors;
};
const FaceTemplate& face_template();

// Perturbation parameters for template sampling.
struct GeometryNoise {
  double max_rotation_deg = 15.0;
  double scale_lo = 0.8;
  double scale_hi = 1.25;
  double max_translation = 80.0;
  double landmark_jitter = 2.0;  // per-point sigma, pixels
  double anchor_jitter = 1.0;
};

// One (landmarks, anchors) sample: the template under a random similarity
// transform shared by both sets, plus per-point jitter.
std::pair<LandmarkSet, AnchorSet> gen_landmark_template(
    Rng& rng, const GeometryNoise& noise = GeometryNoise{});

// Nominal sticker radius in template pixel units (error-rate denominator).
constexpr double kSyntheticStickerRadius = 30.0;

// Band-limited oscillatory texture with RMS contrast proportional to the
// amplitude, over a skin-tone base, plus white noise; label = label_map(a).
SkinPatch gen_patch(Rng& rng, double amplitude, const SynthConfig& cfg);

// Full dataset: per panelist, patches for all 37 positions across 3 angles
// and the modality's lighting tags, assembled into croppable facial-image
// canvases. Symmetric positions share amplitudes up to the jitter bound;
// per-position offsets realize a fixed region mean field; the label
// histogram matches the target mass split within 5% per group.
Dataset gen_dataset(const SynthConfig& cfg);

// Lighting tags are realized as fixed-magnitude degrade-and-blend ops;
// exposed for tests of the leave-one-lighting-out domain gap.
Image8 apply_lighting_tag(const Image8& img, Lighting tag);

// Designed region mean field: expected label at a position minus the global
// mean (measurement units); symmetric partners share an entry.
double region_bias(int position_id, const SynthConfig& cfg);

}  // namespace dermamap
