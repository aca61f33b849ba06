#include "dermamap/augment.hpp"

#include <algorithm>
#include <cmath>

namespace dermamap {

namespace {

double mean_pixel(const Image8& x) {
  double sum = 0.0;
  for (uint8_t v : x.data) sum += v;
  return x.data.empty() ? 0.0 : sum / double(x.data.size());
}

}  // namespace

Image8 degrade(const Image8& x, LightingOpKind kind) {
  Image8 out(x.rows, x.cols);
  switch (kind) {
    case LightingOpKind::kSaturation: {
      for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < x.cols; ++c) {
          const uint8_t l =
              clamp_u8(luminance(x.at(r, c, 0), x.at(r, c, 1), x.at(r, c, 2)));
          out.at(r, c, 0) = out.at(r, c, 1) = out.at(r, c, 2) = l;
        }
      break;
    }
    case LightingOpKind::kContrast: {
      const uint8_t m = clamp_u8(mean_pixel(x));
      std::fill(out.data.begin(), out.data.end(), m);
      break;
    }
    case LightingOpKind::kBrightness:
      break;  // zero image
    case LightingOpKind::kSharpness: {
      for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < x.cols; ++c)
          for (int ch = 0; ch < 3; ++ch) {
            double acc = 0.0;
            for (int dr = -1; dr <= 1; ++dr)
              for (int dc = -1; dc <= 1; ++dc) {
                const int rr = std::clamp(r + dr, 0, x.rows - 1);
                const int cc = std::clamp(c + dc, 0, x.cols - 1);
                acc += x.at(rr, cc, ch);
              }
            out.at(r, c, ch) = clamp_u8(acc / 9.0);
          }
      break;
    }
  }
  return out;
}

Image8 blend(const Image8& x_deg, const Image8& x_ori, double m) {
  require(m >= 0.0 && m <= 2.0, "blend: magnitude must lie in [0,2]");
  require(x_deg.same_shape(x_ori), "blend: image dimensions differ");
  Image8 out(x_ori.rows, x_ori.cols);
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = clamp_u8((1.0 - m) * x_deg.data[i] + m * x_ori.data[i]);
  }
  return out;
}

Image8 apply_lighting(const Image8& x, const LightingOp& op) {
  return blend(degrade(x, op.kind), x, op.magnitude);
}

LightingOp sample_lighting_op(Rng& rng) {
  LightingOp op;
  op.kind = static_cast<LightingOpKind>(rng.uniform_index(4));
  op.magnitude = rng.uniform(0.0, 2.0);
  return op;
}

Image8 random_lighting(const Image8& x, Rng& rng) {
  return apply_lighting(x, sample_lighting_op(rng));
}

Image8 flip_horizontal(const Image8& x) {
  Image8 out(x.rows, x.cols);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c)
      for (int ch = 0; ch < 3; ++ch)
        out.at(r, c, ch) = x.at(r, x.cols - 1 - c, ch);
  return out;
}

Image8 flip_vertical(const Image8& x) {
  Image8 out(x.rows, x.cols);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c)
      for (int ch = 0; ch < 3; ++ch)
        out.at(r, c, ch) = x.at(x.rows - 1 - r, c, ch);
  return out;
}

Image8 rotate_bilinear(const Image8& x, double degrees) {
  const double a = degrees * M_PI / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cr = (x.rows - 1) / 2.0, cc = (x.cols - 1) / 2.0;
  Image8 out(x.rows, x.cols);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) {
      // Inverse-map the output pixel into the source frame.
      const double dr = r - cr, dc = c - cc;
      const double sr = ca * dr - sa * dc + cr;
      const double sc = sa * dr + ca * dc + cc;
      const int r0 = std::clamp(int(std::floor(sr)), 0, x.rows - 1);
      const int c0 = std::clamp(int(std::floor(sc)), 0, x.cols - 1);
      const int r1 = std::clamp(r0 + 1, 0, x.rows - 1);
      const int c1 = std::clamp(c0 + 1, 0, x.cols - 1);
      const double fr = std::clamp(sr - std::floor(sr), 0.0, 1.0);
      const double fc = std::clamp(sc - std::floor(sc), 0.0, 1.0);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1 - fc) * x.at(r0, c0, ch) + fc * x.at(r0, c1, ch);
        const double bot = (1 - fc) * x.at(r1, c0, ch) + fc * x.at(r1, c1, ch);
        out.at(r, c, ch) = clamp_u8((1 - fr) * top + fr * bot);
      }
    }
  return out;
}

Image8 erase_rect(const Image8& x, int r0, int c0, int h, int w) {
  require(r0 >= 0 && c0 >= 0 && r0 + h <= x.rows && c0 + w <= x.cols,
          "erase_rect: rectangle out of bounds");
  const uint8_t fill = clamp_u8(mean_pixel(x));
  Image8 out = x;
  for (int r = r0; r < r0 + h; ++r)
    for (int c = c0; c < c0 + w; ++c)
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = fill;
  return out;
}

Image8 crop_resize(const Image8& x, int r0, int c0, double keep_fraction) {
  const int ch2 = int(std::lround(x.rows * keep_fraction));
  const int cw2 = int(std::lround(x.cols * keep_fraction));
  require(r0 >= 0 && c0 >= 0 && r0 + ch2 <= x.rows && c0 + cw2 <= x.cols,
          "crop_resize: crop window out of bounds");
  Image8 crop(ch2, cw2);
  for (int r = 0; r < ch2; ++r)
    for (int c = 0; c < cw2; ++c)
      for (int k = 0; k < 3; ++k) crop.at(r, c, k) = x.at(r0 + r, c0 + c, k);
  return resize_bilinear(crop, x.rows, x.cols);
}

Image8 random_geometric(const Image8& x, Rng& rng) {
  if (!rng.bernoulli(0.5)) return x;
  const auto op = static_cast<GeometricOpKind>(1 + rng.uniform_index(5));
  switch (op) {
    case GeometricOpKind::kFlipH:
      return flip_horizontal(x);
    case GeometricOpKind::kFlipV:
      return flip_vertical(x);
    case GeometricOpKind::kRotate:
      return rotate_bilinear(x, rng.uniform(-30.0, 30.0));
    case GeometricOpKind::kErase: {
      // Side fractions in [0.1, 0.5]; area capped at 25%.
      double fh = rng.uniform(0.1, 0.5);
      double fw = rng.uniform(0.1, 0.5);
      if (fh * fw > 0.25) fw = 0.25 / fh;
      const int h = std::max(1, int(fh * x.rows));
      const int w = std::max(1, int(fw * x.cols));
      const int r0 = int(rng.uniform_index(uint64_t(x.rows - h + 1)));
      const int c0 = int(rng.uniform_index(uint64_t(x.cols - w + 1)));
      return erase_rect(x, r0, c0, h, w);
    }
    case GeometricOpKind::kCrop: {
      const double keep = 0.875;
      const int ch2 = int(std::lround(x.rows * keep));
      const int cw2 = int(std::lround(x.cols * keep));
      const int r0 = int(rng.uniform_index(uint64_t(x.rows - ch2 + 1)));
      const int c0 = int(rng.uniform_index(uint64_t(x.cols - cw2 + 1)));
      return crop_resize(x, r0, c0, keep);
    }
    case GeometricOpKind::kIdentity:
      break;
  }
  return x;
}

}  // namespace dermamap
