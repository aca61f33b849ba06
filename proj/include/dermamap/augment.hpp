#pragma once

#include "dermamap/image.hpp"
#include "dermamap/rng.hpp"

namespace dermamap {

// Lighting adjustment as degrade-and-blend: each op defines a degraded image,
// and the adjusted image is clip((1-m)*degraded + m*original, 0, 255) with
// magnitude m in [0,2] (m=0 degraded, m=1 original, m=2 enhanced).

enum class LightingOpKind { kSaturation, kContrast, kBrightness, kSharpness };

struct LightingOp {
  LightingOpKind kind = LightingOpKind::kSaturation;
  double magnitude = 1.0;  // in [0,2]
};

// saturation -> per-pixel luma replicated to 3 channels
// contrast   -> constant image at the mean pixel value of x
// brightness -> zero image
// sharpness  -> 3x3 box blur (clamp-to-edge borders)
Image8 degrade(const Image8& x, LightingOpKind kind);

// Blend in floating point with a single final round-and-clip.
// m outside [0,2] is an error.
Image8 blend(const Image8& x_deg, const Image8& x_ori, double m);

Image8 apply_lighting(const Image8& x, const LightingOp& op);

// One op uniformly at random, magnitude ~ Uniform[0,2].
Image8 random_lighting(const Image8& x, Rng& rng);
LightingOp sample_lighting_op(Rng& rng);

// Geometric suite: with probability 1/2 apply one uniformly chosen transform
// (horizontal flip, vertical flip, rotation within +-30 degrees, random
// erase of at most 25% area filled with the image mean, or crop to 87.5% of
// the side resized back); otherwise identity. Output side is unchanged.
enum class GeometricOpKind { kIdentity, kFlipH, kFlipV, kRotate, kErase, kCrop };

Image8 random_geometric(const Image8& x, Rng& rng);

// Deterministic building blocks (exposed for tests).
Image8 flip_horizontal(const Image8& x);
Image8 flip_vertical(const Image8& x);
Image8 rotate_bilinear(const Image8& x, double degrees);  // clamp-to-edge fill
Image8 erase_rect(const Image8& x, int r0, int c0, int h, int w);  // mean fill
Image8 crop_resize(const Image8& x, int r0, int c0, double keep_fraction);

}  // namespace dermamap
