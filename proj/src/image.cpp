#include "dermamap/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace dermamap {

GridD channel_of(const Image8& img, int ch) {
  GridD g(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c) g.at(r, c) = img.at(r, c, ch);
  return g;
}

Image8 from_channels(const GridD& r, const GridD& g, const GridD& b) {
  require(r.rows == g.rows && r.rows == b.rows && r.cols == g.cols &&
              r.cols == b.cols,
          "from_channels: channel shape mismatch");
  Image8 out(r.rows, r.cols);
  for (int i = 0; i < r.rows; ++i)
    for (int j = 0; j < r.cols; ++j) {
      out.at(i, j, 0) = clamp_u8(r.at(i, j));
      out.at(i, j, 1) = clamp_u8(g.at(i, j));
      out.at(i, j, 2) = clamp_u8(b.at(i, j));
    }
  return out;
}

namespace {

inline int clampi(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }

inline double cubic_weight(double x) {
  // Catmull-Rom kernel, a = -0.5.
  const double a = -0.5;
  x = std::fabs(x);
  if (x < 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
  if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
  return 0.0;
}

}  // namespace

Image8 resize_bicubic(const Image8& img, int out_rows, int out_cols) {
  require(img.rows > 0 && img.cols > 0, "resize: empty image");
  Image8 out(out_rows, out_cols);
  const double sr = double(img.rows) / out_rows;
  const double sc = double(img.cols) / out_cols;
  for (int r = 0; r < out_rows; ++r) {
    const double src_r = (r + 0.5) * sr - 0.5;
    const int r0 = int(std::floor(src_r));
    double wr[4];
    for (int k = 0; k < 4; ++k) wr[k] = cubic_weight(src_r - (r0 - 1 + k));
    for (int c = 0; c < out_cols; ++c) {
      const double src_c = (c + 0.5) * sc - 0.5;
      const int c0 = int(std::floor(src_c));
      double wc[4];
      for (int k = 0; k < 4; ++k) wc[k] = cubic_weight(src_c - (c0 - 1 + k));
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) {
          const int rr = clampi(r0 - 1 + i, 0, img.rows - 1);
          double row_acc = 0.0;
          for (int j = 0; j < 4; ++j) {
            const int cc = clampi(c0 - 1 + j, 0, img.cols - 1);
            row_acc += wc[j] * img.at(rr, cc, ch);
          }
          acc += wr[i] * row_acc;
        }
        out.at(r, c, ch) = clamp_u8(acc);
      }
    }
  }
  return out;
}

Image8 resize_bilinear(const Image8& img, int out_rows, int out_cols) {
  require(img.rows > 0 && img.cols > 0, "resize: empty image");
  Image8 out(out_rows, out_cols);
  const double sr = double(img.rows) / out_rows;
  const double sc = double(img.cols) / out_cols;
  for (int r = 0; r < out_rows; ++r) {
    const double src_r = (r + 0.5) * sr - 0.5;
    const int r0 = clampi(int(std::floor(src_r)), 0, img.rows - 1);
    const int r1 = clampi(r0 + 1, 0, img.rows - 1);
    const double fr = std::max(0.0, std::min(1.0, src_r - std::floor(src_r)));
    for (int c = 0; c < out_cols; ++c) {
      const double src_c = (c + 0.5) * sc - 0.5;
      const int c0 = clampi(int(std::floor(src_c)), 0, img.cols - 1);
      const int c1 = clampi(c0 + 1, 0, img.cols - 1);
      const double fc = std::max(0.0, std::min(1.0, src_c - std::floor(src_c)));
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1 - fc) * img.at(r0, c0, ch) + fc * img.at(r0, c1, ch);
        const double bot = (1 - fc) * img.at(r1, c0, ch) + fc * img.at(r1, c1, ch);
        out.at(r, c, ch) = clamp_u8((1 - fr) * top + fr * bot);
      }
    }
  }
  return out;
}

Image8 read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  require(fp != nullptr, "read_png: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail("read_png: corrupt PNG: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  Image8 img(int(png_get_image_height(png, info)), int(png_get_image_width(png, info)));
  std::vector<png_bytep> row_ptrs(img.rows);
  for (int r = 0; r < img.rows; ++r)
    row_ptrs[r] = img.data.data() + size_t(r) * img.cols * 3;
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

void write_png(const Image8& img, const std::string& path) {
  require(img.rows > 0 && img.cols > 0, "write_png: empty image");
  FILE* fp = std::fopen(path.c_str(), "wb");
  require(fp != nullptr, "write_png: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail("write_png: failed writing " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, png_uint_32(img.cols), png_uint_32(img.rows), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> row_ptrs(img.rows);
  for (int r = 0; r < img.rows; ++r)
    row_ptrs[r] = const_cast<png_bytep>(img.data.data() + size_t(r) * img.cols * 3);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace dermamap
