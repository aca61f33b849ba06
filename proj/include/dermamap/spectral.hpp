#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "dermamap/image.hpp"

namespace dermamap {

// Frequency-domain texture highlighting. A channel is transformed, shifted so
// the DC bin sits at (rows/2, cols/2), windowed by a binary mask, and
// transformed back. Masks follow the closed-interval window
//   1  iff  floor((1-sqrt(rho))/2 * n) <= k <= floor((1+sqrt(rho))/2 * n)
// per axis, where rho is the retained (low-pass) or removed (high-pass)
// fraction of the spectrum.

// DC-centered complex spectrum of one channel.
struct Spectrum {
  int rows = 0;
  int cols = 0;
  std::vector<std::complex<double>> data;  // row-major

  std::complex<double>& at(int r, int c) { return data[size_t(r) * cols + c]; }
  std::complex<double> at(int r, int c) const { return data[size_t(r) * cols + c]; }
};

enum class MaskKind { kLow, kHigh, kBand };

// Binary spectral window with its provenance.
struct FreqMask {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> data;  // 0/1, row-major
  MaskKind kind = MaskKind::kLow;
  double rho_low = 0.0;
  double rho_high = 0.0;

  uint8_t at(int r, int c) const { return data[size_t(r) * cols + c]; }
  size_t ones() const;
  double ones_fraction() const;
};

// Centered square window retaining fraction rho of the spectrum.
// rho outside [0,1] is an error.
std::vector<uint8_t> make_mask(double rho, int rows, int cols);

FreqMask lowpass_mask(double rho_low, int rows, int cols);
FreqMask highpass_mask(double rho_high, int rows, int cols);
// Elementwise product of the low-pass window and the high-pass complement;
// requires rho_low > rho_high.
FreqMask bandpass_mask(double rho_low, double rho_high, int rows, int cols);

// Forward 2-D transform of one channel, DC bin relocated to the center.
// Non-finite input is an error.
Spectrum forward_spectrum(const GridD& x);

// Masked inverse: real part of ifft(ifftshift(f * M)). For symmetric masks on
// real inputs the dropped imaginary component is numerical noise.
GridD extract_texture(const GridD& x, const FreqMask& mask);

// Spectral energy (|f|^2 summed over mask support, Parseval-normalized by
// rows*cols) inside a window; the synthetic-data oracle for texture strength.
double band_energy(const GridD& x, const FreqMask& mask);

// 3-channel convenience used by the model input pipeline and the CLI.
std::vector<GridD> extract_texture_rgb(const Image8& img, const FreqMask& mask);

}  // namespace dermamap
