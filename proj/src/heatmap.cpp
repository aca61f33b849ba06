#include "dermamap/heatmap.hpp"

#include <algorithm>
#include <cmath>

namespace dermamap {

namespace {

struct ControlPoint {
  double t;
  double r, g, b;
};

constexpr ControlPoint kRamp[5] = {{0.00, 0, 0, 128},
                                   {0.25, 0, 0, 255},
                                   {0.50, 255, 255, 255},
                                   {0.75, 255, 0, 0},
                                   {1.00, 128, 0, 0}};

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.c - o.c) * (b.r - o.r) - (a.r - o.r) * (b.c - o.c);
}

}  // namespace

Rgb value_to_color(double value, const ColorScale& scale) {
  require(std::isfinite(value), "value_to_color: non-finite value");
  const double hi = scale.domain_max();
  const double v = std::clamp(value, 0.0, hi);
  // TEWL: low = blue. SH: inverted, low = red.
  const double t = scale.kind == MetricKind::kTewl ? v / hi : 1.0 - v / hi;
  for (int i = 0; i < 4; ++i) {
    if (t <= kRamp[i + 1].t) {
      const double f = (t - kRamp[i].t) / (kRamp[i + 1].t - kRamp[i].t);
      return Rgb{clamp_u8(kRamp[i].r + f * (kRamp[i + 1].r - kRamp[i].r)),
                 clamp_u8(kRamp[i].g + f * (kRamp[i + 1].g - kRamp[i].g)),
                 clamp_u8(kRamp[i].b + f * (kRamp[i + 1].b - kRamp[i].b))};
    }
  }
  return Rgb{128, 0, 0};
}

Polygon convex_hull(const std::vector<Point2>& points) {
  require(points.size() >= 3, "convex_hull: needs at least 3 points");
  std::vector<Point2> pts = points;
  std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) {
    return a.c < b.c || (a.c == b.c && a.r < b.r);
  });
  std::vector<Point2> hull(2 * pts.size());
  size_t k = 0;
  for (const auto& p : pts) {  // lower
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  const size_t lower = k + 1;
  for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {  // upper
    while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  require(hull.size() >= 3, "convex_hull: points are collinear");
  return hull;
}

bool point_in_polygon(const Polygon& poly, const Point2& p) {
  // Convex, counter-clockwise: inside iff never strictly right of an edge.
  for (size_t i = 0; i < poly.size(); ++i) {
    const Point2& a = poly[i];
    const Point2& b = poly[(i + 1) % poly.size()];
    if (cross(a, b, p) < -1e-9) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Delaunay (Bowyer-Watson)
// ---------------------------------------------------------------------------

namespace {

struct Tri {
  int a, b, c;
};

bool in_circumcircle(const Point2& p, const Point2& a, const Point2& b,
                     const Point2& c) {
  const double ax = a.c - p.c, ay = a.r - p.r;
  const double bx = b.c - p.c, by = b.r - p.r;
  const double cx = c.c - p.c, cy = c.r - p.r;
  const double det = (ax * ax + ay * ay) * (bx * cy - cx * by) -
                     (bx * bx + by * by) * (ax * cy - cx * ay) +
                     (cx * cx + cy * cy) * (ax * by - bx * ay);
  // Sign convention depends on triangle orientation.
  const double orient = (b.c - a.c) * (c.r - a.r) - (b.r - a.r) * (c.c - a.c);
  return orient > 0 ? det > 0 : det < 0;
}

}  // namespace

std::vector<std::array<int, 3>> delaunay_triangulate(
    const std::vector<Point2>& points) {
  require(points.size() >= 3, "delaunay: needs at least 3 points");
  double lo_r = 1e300, hi_r = -1e300, lo_c = 1e300, hi_c = -1e300;
  for (const auto& p : points) {
    lo_r = std::min(lo_r, p.r);
    hi_r = std::max(hi_r, p.r);
    lo_c = std::min(lo_c, p.c);
    hi_c = std::max(hi_c, p.c);
  }
  const double span = std::max(hi_r - lo_r, hi_c - lo_c);
  require(span > 0.0, "delaunay: degenerate point set");
  // Super-triangle well outside the data.
  std::vector<Point2> pts = points;
  const double mid_r = (lo_r + hi_r) / 2, mid_c = (lo_c + hi_c) / 2;
  pts.push_back({mid_r - 30 * span, mid_c - 30 * span});
  pts.push_back({mid_r - 30 * span, mid_c + 30 * span});
  pts.push_back({mid_r + 30 * span, mid_c});
  const int s0 = int(points.size()), s1 = s0 + 1, s2 = s0 + 2;

  std::vector<Tri> tris{{s0, s1, s2}};
  for (int i = 0; i < int(points.size()); ++i) {
    const Point2& p = pts[size_t(i)];
    std::vector<Tri> bad, keep;
    for (const auto& t : tris) {
      if (in_circumcircle(p, pts[size_t(t.a)], pts[size_t(t.b)], pts[size_t(t.c)]))
        bad.push_back(t);
      else
        keep.push_back(t);
    }
    // Boundary of the cavity: edges appearing exactly once among bad tris.
    std::vector<std::pair<int, int>> edges;
    auto add_edge = [&](int u, int v) {
      const auto rev = std::make_pair(v, u);
      const auto it = std::find(edges.begin(), edges.end(), rev);
      if (it != edges.end())
        edges.erase(it);
      else
        edges.push_back({u, v});
    };
    for (const auto& t : bad) {
      add_edge(t.a, t.b);
      add_edge(t.b, t.c);
      add_edge(t.c, t.a);
    }
    tris = std::move(keep);
    for (const auto& [u, v] : edges) tris.push_back({u, v, i});
  }

  std::vector<std::array<int, 3>> out;
  for (const auto& t : tris) {
    if (t.a >= s0 || t.b >= s0 || t.c >= s0) continue;
    out.push_back({t.a, t.b, t.c});
  }
  require(!out.empty(), "delaunay: all points collinear");
  return out;
}

// ---------------------------------------------------------------------------
// Field interpolation
// ---------------------------------------------------------------------------

namespace {

// Closest point on segment [a,b] to p.
Point2 closest_on_segment(const Point2& a, const Point2& b, const Point2& p) {
  const double vr = b.r - a.r, vc = b.c - a.c;
  const double len2 = vr * vr + vc * vc;
  if (len2 <= 0.0) return a;
  double t = ((p.r - a.r) * vr + (p.c - a.c) * vc) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return {a.r + t * vr, a.c + t * vc};
}

}  // namespace

ScalarField interpolate_field(const std::vector<Point2>& anchors,
                              const std::vector<double>& values,
                              const Polygon& face_mask, int rows, int cols) {
  require(anchors.size() == values.size(), "interpolate_field: length mismatch");
  require(anchors.size() >= 3,
          "interpolate_field: needs at least 3 anchors");
  const auto tris = delaunay_triangulate(anchors);  // errors when collinear

  ScalarField field;
  field.values = GridD(rows, cols, 0.0);
  field.defined.assign(size_t(rows) * cols, 0);

  // Rasterize each triangle with inclusive barycentric bounds.
  for (const auto& t : tris) {
    const Point2& A = anchors[size_t(t[0])];
    const Point2& B = anchors[size_t(t[1])];
    const Point2& C = anchors[size_t(t[2])];
    const double det = (B.c - A.c) * (C.r - A.r) - (B.r - A.r) * (C.c - A.c);
    if (std::fabs(det) < 1e-12) continue;
    const int r0 = std::max(0, int(std::floor(std::min({A.r, B.r, C.r}))));
    const int r1 = std::min(rows - 1, int(std::ceil(std::max({A.r, B.r, C.r}))));
    const int c0 = std::max(0, int(std::floor(std::min({A.c, B.c, C.c}))));
    const int c1 = std::min(cols - 1, int(std::ceil(std::max({A.c, B.c, C.c}))));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        const double pr = r, pc = c;
        const double wb = ((pc - A.c) * (C.r - A.r) - (pr - A.r) * (C.c - A.c)) / det;
        const double wc = ((B.c - A.c) * (pr - A.r) - (B.r - A.r) * (pc - A.c)) / det;
        const double wa = 1.0 - wb - wc;
        const double eps = 1e-9;
        if (wa < -eps || wb < -eps || wc < -eps) continue;
        field.values.at(r, c) = wa * values[size_t(t[0])] +
                                wb * values[size_t(t[1])] +
                                wc * values[size_t(t[2])];
        field.defined[size_t(r) * cols + c] = 1;
      }
  }

  // Between the anchor hull and the face mask: value at the nearest point of
  // the hull boundary, linearly interpolated along that edge.
  const Polygon hull = convex_hull(anchors);
  std::vector<int> hull_idx(hull.size(), -1);
  for (size_t i = 0; i < hull.size(); ++i) {
    for (size_t j = 0; j < anchors.size(); ++j) {
      if (std::fabs(anchors[j].r - hull[i].r) < 1e-12 &&
          std::fabs(anchors[j].c - hull[i].c) < 1e-12) {
        hull_idx[i] = int(j);
        break;
      }
    }
    require(hull_idx[i] >= 0, "interpolate_field: hull vertex not an anchor");
  }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (field.defined[size_t(r) * cols + c]) continue;
      const Point2 p{double(r), double(c)};
      if (!point_in_polygon(face_mask, p)) continue;
      double best_d = 1e300, best_v = 0.0;
      for (size_t i = 0; i < hull.size(); ++i) {
        const size_t j = (i + 1) % hull.size();
        const Point2 q = closest_on_segment(hull[i], hull[j], p);
        const double d = distance(p, q);
        if (d < best_d) {
          best_d = d;
          const double seg = distance(hull[i], hull[j]);
          const double f = seg > 0 ? distance(hull[i], q) / seg : 0.0;
          best_v = (1.0 - f) * values[size_t(hull_idx[i])] +
                   f * values[size_t(hull_idx[j])];
        }
      }
      field.values.at(r, c) = best_v;
      field.defined[size_t(r) * cols + c] = 1;
    }
  return field;
}

Image8 render_overlay(const Image8& image, const ScalarField& field,
                      const ColorScale& scale, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, "render_overlay: alpha must lie in [0,1]");
  require(field.values.rows == image.rows && field.values.cols == image.cols,
          "render_overlay: field dimensions do not match the image");
  Image8 out = image;
  for (int r = 0; r < image.rows; ++r)
    for (int c = 0; c < image.cols; ++c) {
      if (!field.is_defined(r, c)) continue;
      const Rgb color = value_to_color(field.values.at(r, c), scale);
      const uint8_t rgb[3] = {color.r, color.g, color.b};
      for (int ch = 0; ch < 3; ++ch)
        out.at(r, c, ch) =
            clamp_u8(alpha * rgb[ch] + (1.0 - alpha) * image.at(r, c, ch));
    }
  return out;
}

Image8 legend_strip(const ColorScale& scale, int rows, int cols) {
  require(rows > 1 && cols > 0, "legend_strip: bad dimensions");
  Image8 out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    // Low values at the bottom row.
    const double v = scale.domain_max() * double(rows - 1 - r) / double(rows - 1);
    const Rgb color = value_to_color(v, scale);
    for (int c = 0; c < cols; ++c) {
      out.at(r, c, 0) = color.r;
      out.at(r, c, 1) = color.g;
      out.at(r, c, 2) = color.b;
    }
  }
  return out;
}

}  // namespace dermamap
