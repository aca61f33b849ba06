#include "dermamap/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace dermamap {

namespace {

// FFTW plan creation is not thread-safe; execution on distinct buffers is.
std::mutex g_plan_mutex;

void fft2d(const std::vector<std::complex<double>>& in,
           std::vector<std::complex<double>>& out, int rows, int cols, int sign) {
  std::vector<std::complex<double>> buf = in;
  out.resize(buf.size());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    plan = fftw_plan_dft_2d(rows, cols,
                            reinterpret_cast<fftw_complex*>(buf.data()),
                            reinterpret_cast<fftw_complex*>(out.data()),
                            sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    fftw_destroy_plan(plan);
  }
}

// Roll so that index 0 moves to n/2 (forward) or back (inverse).
template <class T>
std::vector<T> shift2d(const std::vector<T>& in, int rows, int cols, bool inverse) {
  std::vector<T> out(in.size());
  const int sr = inverse ? (rows - rows / 2) : rows / 2;
  const int sc = inverse ? (cols - cols / 2) : cols / 2;
  for (int r = 0; r < rows; ++r) {
    const int rr = (r + sr) % rows;
    for (int c = 0; c < cols; ++c) {
      out[size_t(rr) * cols + (c + sc) % cols] = in[size_t(r) * cols + c];
    }
  }
  return out;
}

}  // namespace

size_t FreqMask::ones() const {
  size_t n = 0;
  for (uint8_t v : data) n += v;
  return n;
}

double FreqMask::ones_fraction() const {
  return double(ones()) / (double(rows) * double(cols));
}

std::vector<uint8_t> make_mask(double rho, int rows, int cols) {
  require(rho >= 0.0 && rho <= 1.0, "make_mask: rho must lie in [0,1]");
  require(rows > 0 && cols > 0, "make_mask: empty grid");
  const double s = std::sqrt(rho);
  const int r_lo = int(std::floor((1.0 - s) / 2.0 * rows));
  const int r_hi = int(std::floor((1.0 + s) / 2.0 * rows));
  const int c_lo = int(std::floor((1.0 - s) / 2.0 * cols));
  const int c_hi = int(std::floor((1.0 + s) / 2.0 * cols));
  std::vector<uint8_t> m(size_t(rows) * cols, 0);
  for (int r = std::max(0, r_lo); r <= std::min(rows - 1, r_hi); ++r)
    for (int c = std::max(0, c_lo); c <= std::min(cols - 1, c_hi); ++c)
      m[size_t(r) * cols + c] = 1;
  return m;
}

FreqMask lowpass_mask(double rho_low, int rows, int cols) {
  FreqMask m;
  m.rows = rows;
  m.cols = cols;
  m.kind = MaskKind::kLow;
  m.rho_low = rho_low;
  m.data = make_mask(rho_low, rows, cols);
  return m;
}

FreqMask highpass_mask(double rho_high, int rows, int cols) {
  FreqMask m;
  m.rows = rows;
  m.cols = cols;
  m.kind = MaskKind::kHigh;
  m.rho_high = rho_high;
  m.data = make_mask(rho_high, rows, cols);
  for (auto& v : m.data) v = uint8_t(1 - v);
  return m;
}

FreqMask bandpass_mask(double rho_low, double rho_high, int rows, int cols) {
  require(rho_low > rho_high,
          "bandpass_mask: retained fraction rho_low must exceed removed fraction rho_high");
  FreqMask low = lowpass_mask(rho_low, rows, cols);
  const FreqMask high = highpass_mask(rho_high, rows, cols);
  FreqMask m;
  m.rows = rows;
  m.cols = cols;
  m.kind = MaskKind::kBand;
  m.rho_low = rho_low;
  m.rho_high = rho_high;
  m.data.resize(low.data.size());
  for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = low.data[i] & high.data[i];
  return m;
}

Spectrum forward_spectrum(const GridD& x) {
  require(x.rows > 0 && x.cols > 0, "forward_spectrum: empty grid");
  for (double v : x.data)
    require(std::isfinite(v), "forward_spectrum: non-finite input value");
  std::vector<std::complex<double>> in(x.size());
  for (size_t i = 0; i < x.size(); ++i) in[i] = {x.data[i], 0.0};
  std::vector<std::complex<double>> f;
  fft2d(in, f, x.rows, x.cols, FFTW_FORWARD);
  Spectrum s;
  s.rows = x.rows;
  s.cols = x.cols;
  s.data = shift2d(f, x.rows, x.cols, /*inverse=*/false);
  return s;
}

GridD extract_texture(const GridD& x, const FreqMask& mask) {
  require(mask.rows == x.rows && mask.cols == x.cols,
          "extract_texture: mask dimensions do not match input");
  Spectrum f = forward_spectrum(x);
  for (size_t i = 0; i < f.data.size(); ++i)
    if (!mask.data[i]) f.data[i] = {0.0, 0.0};
  const auto unshifted = shift2d(f.data, x.rows, x.cols, /*inverse=*/true);
  std::vector<std::complex<double>> t;
  fft2d(unshifted, t, x.rows, x.cols, FFTW_BACKWARD);
  const double norm = 1.0 / (double(x.rows) * double(x.cols));
  GridD out(x.rows, x.cols);
  for (size_t i = 0; i < t.size(); ++i) out.data[i] = t[i].real() * norm;
  return out;
}

double band_energy(const GridD& x, const FreqMask& mask) {
  require(mask.rows == x.rows && mask.cols == x.cols,
          "band_energy: mask dimensions do not match input");
  const Spectrum f = forward_spectrum(x);
  double e = 0.0;
  for (size_t i = 0; i < f.data.size(); ++i)
    if (mask.data[i]) e += std::norm(f.data[i]);
  return e / (double(x.rows) * double(x.cols));
}

std::vector<GridD> extract_texture_rgb(const Image8& img, const FreqMask& mask) {
  std::vector<GridD> out;
  out.reserve(3);
  for (int ch = 0; ch < 3; ++ch)
    out.push_back(extract_texture(channel_of(img, ch), mask));
  return out;
}

}  // namespace dermamap
