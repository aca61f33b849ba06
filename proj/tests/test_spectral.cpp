#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "dermamap/rng.hpp"
#include "dermamap/spectral.hpp"

using namespace dermamap;

namespace {

// Quadratic-time DFT oracle, independent of the FFT path under test.
Spectrum direct_spectrum(const GridD& x) {
  Spectrum s;
  s.rows = x.rows;
  s.cols = x.cols;
  s.data.assign(size_t(x.rows) * x.cols, {0.0, 0.0});
  for (int u = 0; u < x.rows; ++u)
    for (int v = 0; v < x.cols; ++v) {
      std::complex<double> acc{0.0, 0.0};
      for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < x.cols; ++c) {
          const double phase = -2.0 * M_PI * (double(u) * r / x.rows +
                                              double(v) * c / x.cols);
          acc += x.at(r, c) * std::complex<double>(std::cos(phase), std::sin(phase));
        }
      // Same DC-centering convention as forward_spectrum.
      s.at((u + x.rows / 2) % x.rows, (v + x.cols / 2) % x.cols) = acc;
    }
  return s;
}

GridD random_grid(int rows, int cols, Rng& rng) {
  GridD g(rows, cols);
  for (auto& v : g.data) v = rng.uniform(0.0, 255.0);
  return g;
}

}  // namespace

TEST_CASE("constant image concentrates at the center bin") {
  const double c = 37.5;
  GridD x(16, 16, c);
  const Spectrum s = forward_spectrum(x);
  CHECK(std::abs(s.at(8, 8) - std::complex<double>(c * 16 * 16, 0.0)) < 1e-6);
  double off_center = 0.0;
  for (int r = 0; r < 16; ++r)
    for (int cc = 0; cc < 16; ++cc)
      if (r != 8 || cc != 8) off_center += std::abs(s.at(r, cc));
  CHECK(off_center < 1e-6);
}

TEST_CASE("single cosine lands on two symmetric bins") {
  const int n = 32, k = 5;
  const double amp = 3.0;
  GridD x(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      x.at(r, c) = amp * std::cos(2.0 * M_PI * k * c / n);
  const Spectrum s = forward_spectrum(x);
  // Analytic DFT: bins at +-k along the column axis, magnitude amp*n^2/2.
  CHECK(std::abs(s.at(n / 2, n / 2 + k)) == doctest::Approx(amp * n * n / 2).epsilon(1e-9));
  CHECK(std::abs(s.at(n / 2, n / 2 - k)) == doctest::Approx(amp * n * n / 2).epsilon(1e-9));
  const Spectrum oracle = direct_spectrum(x);
  for (size_t i = 0; i < s.data.size(); ++i)
    CHECK(std::abs(s.data[i] - oracle.data[i]) < 1e-6);
}

TEST_CASE("forward spectrum matches the direct DFT oracle") {
  Rng rng(11);
  for (const auto [rows, cols] : {std::pair{8, 8}, {9, 7}, {12, 10}}) {
    const GridD x = random_grid(rows, cols, rng);
    const Spectrum fast = forward_spectrum(x);
    const Spectrum slow = direct_spectrum(x);
    for (size_t i = 0; i < fast.data.size(); ++i)
      CHECK(std::abs(fast.data[i] - slow.data[i]) < 1e-6);
  }
}

TEST_CASE("non-finite input is rejected") {
  GridD x(4, 4, 1.0);
  x.at(2, 2) = std::nan("");
  CHECK_THROWS_AS(forward_spectrum(x), Error);
}

TEST_CASE("mask window basics") {
  SUBCASE("rho=1 covers everything") {
    const auto m = make_mask(1.0, 32, 48);
    for (uint8_t v : m) CHECK(v == 1);
  }
  SUBCASE("rho=0 is the single center pixel") {
    const auto m = make_mask(0.0, 64, 64);
    size_t ones = 0;
    for (size_t i = 0; i < m.size(); ++i)
      if (m[i]) {
        ++ones;
        CHECK(i == size_t(32) * 64 + 32);
      }
    CHECK(ones == 1);
  }
  SUBCASE("rho out of range") {
    CHECK_THROWS_AS(make_mask(-0.1, 8, 8), Error);
    CHECK_THROWS_AS(make_mask(1.1, 8, 8), Error);
  }
  SUBCASE("band-pass fraction near 5.76% on a 100x100 grid") {
    const auto m = make_mask(0.0576, 100, 100);
    double ones = 0;
    for (uint8_t v : m) ones += v;
    const double frac = ones / (100.0 * 100.0);
    CHECK(frac >= 0.0576 - 0.02);
    CHECK(frac <= 0.0576 + 0.02);
  }
}

TEST_CASE("mask area law over random shapes") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = 16 + int(rng.uniform_index(241));
    const int cols = 16 + int(rng.uniform_index(241));
    const double rho = rng.uniform();
    const auto m = make_mask(rho, rows, cols);
    double ones = 0;
    for (uint8_t v : m) ones += v;
    const double frac = ones / (double(rows) * cols);
    const double bound =
        (2.0 * std::sqrt(rho) * (rows + cols) + 4.0) / (double(rows) * cols);
    CHECK(std::fabs(frac - rho) <= bound);
  }
}

TEST_CASE("mask compositions") {
  SUBCASE("bandpass(1, 0) misses exactly the center pixel") {
    const FreqMask m = bandpass_mask(1.0, 0.0, 64, 64);
    size_t zeros = 0;
    for (size_t i = 0; i < m.data.size(); ++i)
      if (!m.data[i]) {
        ++zeros;
        CHECK(i == size_t(32) * 64 + 32);
      }
    CHECK(zeros == 1);
  }
  SUBCASE("highpass(1) is all-zero") {
    const FreqMask m = highpass_mask(1.0, 32, 32);
    for (uint8_t v : m.data) CHECK(v == 0);
  }
  SUBCASE("bandpass ones fraction is roughly rho_l - rho_h") {
    const FreqMask m = bandpass_mask(0.0576, 0.0036, 224, 224);
    CHECK(m.ones_fraction() == doctest::Approx(0.0576 - 0.0036).epsilon(0.35));
    // Square-ring structure: low-pass window minus the removed core.
    const FreqMask low = lowpass_mask(0.0576, 224, 224);
    const FreqMask high = highpass_mask(0.0036, 224, 224);
    size_t overlap = 0;
    for (size_t i = 0; i < m.data.size(); ++i) {
      CHECK(m.data[i] == (low.data[i] & high.data[i]));
      if (low.data[i] && !high.data[i]) ++overlap;
    }
    CHECK(m.ones() == low.ones() - overlap);
  }
  SUBCASE("bandpass requires rho_l > rho_h") {
    CHECK_THROWS_AS(bandpass_mask(0.01, 0.02, 32, 32), Error);
    CHECK_THROWS_AS(bandpass_mask(0.01, 0.01, 32, 32), Error);
  }
}

TEST_CASE("texture extraction") {
  Rng rng(17);

  SUBCASE("all-ones mask reproduces the input") {
    const GridD x = random_grid(64, 64, rng);
    const GridD t = extract_texture(x, lowpass_mask(1.0, 64, 64));
    double max_err = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i)
      max_err = std::max(max_err, std::fabs(t.data[i] - x.data[i]));
    CHECK(max_err < 1e-6);
  }

  SUBCASE("all-zero mask annihilates") {
    const GridD x = random_grid(32, 32, rng);
    const GridD t = extract_texture(x, highpass_mask(1.0, 32, 32));
    for (double v : t.data) CHECK(std::fabs(v) < 1e-9);
  }

  SUBCASE("dimension mismatch is an error") {
    const GridD x = random_grid(32, 32, rng);
    CHECK_THROWS_AS(extract_texture(x, lowpass_mask(0.5, 16, 16)), Error);
  }

  SUBCASE("two-tone separation keeps only the in-band cosine") {
    const int n = 64;
    GridD in_band(n, n), out_band(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        in_band.at(r, c) = 5.0 * std::cos(2.0 * M_PI * (4.0 * r + 3.0 * c) / n);
        out_band.at(r, c) = 7.0 * std::cos(2.0 * M_PI * 14.0 * c / n);
      }
    GridD x(n, n);
    for (size_t i = 0; i < x.data.size(); ++i)
      x.data[i] = in_band.data[i] + out_band.data[i];
    // Band keeps max-norm offsets in roughly [2, 8]: in-band (4,3) stays,
    // out-of-band 14 is cut.
    const FreqMask band = bandpass_mask(0.07, 0.002, n, n);
    const GridD t = extract_texture(x, band);
    double residual = 0.0, total = 0.0;
    for (size_t i = 0; i < t.data.size(); ++i) {
      residual += (t.data[i] - in_band.data[i]) * (t.data[i] - in_band.data[i]);
      total += x.data[i] * x.data[i];
    }
    CHECK(residual / total < 1e-8);
  }

  SUBCASE("linearity") {
    const GridD x1 = random_grid(32, 32, rng);
    const GridD x2 = random_grid(32, 32, rng);
    const FreqMask m = bandpass_mask(0.3, 0.01, 32, 32);
    GridD combo(32, 32);
    for (size_t i = 0; i < combo.data.size(); ++i)
      combo.data[i] = 2.0 * x1.data[i] - 0.5 * x2.data[i];
    const GridD t1 = extract_texture(x1, m);
    const GridD t2 = extract_texture(x2, m);
    const GridD tc = extract_texture(combo, m);
    for (size_t i = 0; i < tc.data.size(); ++i)
      CHECK(tc.data[i] == doctest::Approx(2.0 * t1.data[i] - 0.5 * t2.data[i])
                              .epsilon(1e-9));
  }

  SUBCASE("idempotence: masking twice equals masking once") {
    const GridD x = random_grid(48, 48, rng);
    const FreqMask m = bandpass_mask(0.2, 0.01, 48, 48);
    const GridD once = extract_texture(x, m);
    const GridD twice = extract_texture(once, m);
    for (size_t i = 0; i < once.data.size(); ++i)
      CHECK(twice.data[i] == doctest::Approx(once.data[i]).epsilon(1e-7));
  }

  SUBCASE("complementary masks conserve energy") {
    const GridD x = random_grid(40, 40, rng);
    const FreqMask low = lowpass_mask(0.3, 40, 40);
    FreqMask complement = low;
    for (auto& v : complement.data) v = uint8_t(1 - v);
    const double e_low = band_energy(x, low);
    const double e_rest = band_energy(x, complement);
    double e_total = 0.0;
    for (double v : x.data) e_total += v * v;
    CHECK(e_low + e_rest == doctest::Approx(e_total).epsilon(1e-9));
  }
}

TEST_CASE("band energy ordering is monotone in rho_l") {
  Rng rng(23);
  const GridD x = random_grid(64, 64, rng);
  double prev = -1.0;
  for (double rho_l : {0.02, 0.05, 0.1, 0.3, 0.8}) {
    const double e = band_energy(x, bandpass_mask(rho_l, 0.005, 64, 64));
    CHECK(e >= prev);
    prev = e;
  }
}
