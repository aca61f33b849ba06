#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dermamap/common.hpp"

namespace dermamap {

// 8-bit interleaved RGB image, row-major, origin at top-left.
// Coordinates throughout the project are (row, col).
struct Image8 {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> data;  // rows*cols*3

  Image8() = default;
  Image8(int r, int c, uint8_t fill = 0)
      : rows(r), cols(c), data(size_t(r) * size_t(c) * 3, fill) {}

  uint8_t& at(int r, int c, int ch) {
    return data[(size_t(r) * cols + c) * 3 + ch];
  }
  uint8_t at(int r, int c, int ch) const {
    return data[(size_t(r) * cols + c) * 3 + ch];
  }
  bool same_shape(const Image8& o) const {
    return rows == o.rows && cols == o.cols;
  }
  bool operator==(const Image8& o) const {
    return rows == o.rows && cols == o.cols && data == o.data;
  }
};

// Single-channel double grid, row-major.
struct GridD {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  GridD() = default;
  GridD(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(size_t(r) * size_t(c), fill) {}

  double& at(int r, int c) { return data[size_t(r) * cols + c]; }
  double at(int r, int c) const { return data[size_t(r) * cols + c]; }
  size_t size() const { return data.size(); }
};

inline uint8_t clamp_u8(double v) {
  if (v <= 0.0) return 0;
  if (v >= 255.0) return 255;
  return static_cast<uint8_t>(v + 0.5);
}

// Rec. 601 luma, the convention used by PIL's grayscale conversion.
inline double luminance(uint8_t r, uint8_t g, uint8_t b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

// Per-channel views.
GridD channel_of(const Image8& img, int ch);
Image8 from_channels(const GridD& r, const GridD& g, const GridD& b);

// Separable Catmull-Rom resampling (a = -0.5), clamp-to-edge.
Image8 resize_bicubic(const Image8& img, int out_rows, int out_cols);
Image8 resize_bilinear(const Image8& img, int out_rows, int out_cols);

// 8-bit RGB PNG I/O (alpha stripped on read, grayscale expanded).
Image8 read_png(const std::string& path);
void write_png(const Image8& img, const std::string& path);

}  // namespace dermamap
