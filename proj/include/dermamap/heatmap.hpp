#pragma once

#include <array>
#include <vector>

#include "dermamap/image.hpp"
#include "dermamap/types.hpp"

namespace dermamap {

// Diverging blue-white-red ramp with an exact white midpoint. The named
// colormap is approximated by five fixed control points so renders are
// bit-stable:
//   t=0.00 (0,0,128)   t=0.25 (0,0,255)   t=0.50 (255,255,255)
//   t=0.75 (255,0,0)   t=1.00 (128,0,0)
// TEWL maps [0,30] with 15 at the midpoint (low = blue). SH maps [0,90]
// inverted with 45 at the midpoint (low = red).
struct ColorScale {
  MetricKind kind = MetricKind::kTewl;

  double domain_max() const { return metric_range_max(kind); }
  double midpoint() const { return domain_max() / 2.0; }
};

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb& o) const { return r == o.r && g == o.g && b == o.b; }
};

Rgb value_to_color(double value, const ColorScale& scale);

// Scalar field on a pixel grid with a definedness mask.
struct ScalarField {
  GridD values;
  std::vector<uint8_t> defined;  // rows*cols, 0/1

  bool is_defined(int r, int c) const {
    return defined[size_t(r) * values.cols + c] != 0;
  }
};

// Convex polygon as an ordered vertex list (used as the face mask).
using Polygon = std::vector<Point2>;

Polygon convex_hull(const std::vector<Point2>& points);
bool point_in_polygon(const Polygon& poly, const Point2& p);

// Piecewise-linear interpolation of per-anchor values over the pixel grid:
// barycentric inside the anchor hull (Delaunay triangulation), the nearest
// hull-boundary value between the hull and the face mask, undefined outside
// the mask. Fewer than 3 non-collinear anchors is an error.
ScalarField interpolate_field(const std::vector<Point2>& anchors,
                              const std::vector<double>& values,
                              const Polygon& face_mask, int rows, int cols);

// Per-pixel composite alpha*color(field) + (1-alpha)*image where the field
// is defined; untouched elsewhere. alpha outside [0,1] or dimension
// mismatches are errors.
Image8 render_overlay(const Image8& image, const ScalarField& field,
                      const ColorScale& scale, double alpha);

// Vertical legend strip for the scale (low at the bottom).
Image8 legend_strip(const ColorScale& scale, int rows, int cols);

// Triangulation exposed for tests: triples of indices into the point list.
std::vector<std::array<int, 3>> delaunay_triangulate(
    const std::vector<Point2>& points);

}  // namespace dermamap
