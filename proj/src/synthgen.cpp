#include "dermamap/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include "dermamap/augment.hpp"
#include "dermamap/evalmetrics.hpp"

namespace dermamap {

Modality SynthConfig::modality() const {
  if (patch_side == 2 * patch_radius(Modality::kSelfie)) return Modality::kSelfie;
  if (patch_side == 2 * patch_radius(Modality::kVisia)) return Modality::kVisia;
  fail("synth config: patch_side must be 140 (selfie) or 340 (visia)");
}

void SynthConfig::validate() const {
  require(n_panelists >= 1, "synth config: need at least one panelist");
  require(freq_lo < freq_hi, "synth config: freq_lo must be below freq_hi");
  require(label_lo < label_hi, "synth config: label range empty");
  require(label_lo >= 0.0 && label_hi <= metric_range_max(kind),
          "synth config: label range must lie inside the heatmap domain");
  require(many_mass >= 0 && medium_mass >= 0 && few_mass >= 0,
          "synth config: negative mass fraction");
  require(std::fabs(many_mass + medium_mass + few_mass - 1.0) < 1e-6,
          "synth config: mass fractions must sum to 1");
  require(noise_sigma >= 0.0 && pair_jitter >= 0.0, "synth config: negative sigma");
  modality();  // validates patch_side
}

// ---------------------------------------------------------------------------
// Face template
// ---------------------------------------------------------------------------

namespace {

constexpr double kTemplateMidline = 500.0;

Point2 mirror(const Point2& p) { return {p.r, 2.0 * kTemplateMidline - p.c}; }

FaceTemplate build_template() {
  FaceTemplate t;
  auto& lm = t.landmarks.points;
  // Jaw 0..16 along the lower face ellipse.
  for (int i = 0; i <= 16; ++i) {
    const double phi = M_PI * double(i) / 16.0;
    lm[size_t(i)] = {480.0 + 420.0 * std::sin(phi), 500.0 - 330.0 * std::cos(phi)};
  }
  // Brows 17..21 (left), 22..26 (right).
  const double brow_r[5] = {360, 350, 345, 350, 358};
  const double brow_c[5] = {280, 320, 360, 400, 440};
  for (int i = 0; i < 5; ++i) {
    lm[size_t(17 + i)] = {brow_r[i], brow_c[i]};
    lm[size_t(22 + i)] = {brow_r[4 - i], 1000.0 - brow_c[4 - i]};
  }
  // Nose bridge 27..30 and base 31..35.
  for (int i = 0; i < 4; ++i) lm[size_t(27 + i)] = {380.0 + 50.0 * i, 500.0};
  const double base_r[5] = {555, 565, 570, 565, 555};
  for (int i = 0; i < 5; ++i) lm[size_t(31 + i)] = {base_r[i], 440.0 + 30.0 * i};
  // Eyes 36..41 (left), 42..47 (right).
  const Point2 left_eye[6] = {{410, 305}, {398, 330}, {398, 372},
                              {410, 395}, {421, 372}, {421, 330}};
  for (int i = 0; i < 6; ++i) lm[size_t(36 + i)] = left_eye[i];
  const int mirror_order[6] = {3, 2, 1, 0, 5, 4};  // inner-first on the right
  for (int i = 0; i < 6; ++i) lm[size_t(42 + i)] = mirror(left_eye[mirror_order[i]]);
  // Mouth 48..59 outer, 60..67 inner.
  const Point2 outer[12] = {{740, 405}, {722, 440}, {712, 472}, {708, 500},
                            {712, 528}, {722, 560}, {740, 595}, {762, 560},
                            {772, 528}, {775, 500}, {772, 472}, {762, 440}};
  for (int i = 0; i < 12; ++i) lm[size_t(48 + i)] = outer[i];
  const Point2 inner[8] = {{740, 425}, {728, 468}, {725, 500}, {728, 532},
                           {740, 575}, {752, 532}, {755, 500}, {752, 468}};
  for (int i = 0; i < 8; ++i) lm[size_t(60 + i)] = inner[i];

  // Anchors: midline 1, left side 2..18 and eyelid 36; the right side is the
  // mirror with ID d+17 (and 37 for the eyelid).
  auto& a = t.anchors.entries;
  a[1] = {370, 500};
  a[2] = {330, 360};
  a[3] = {348, 262};
  a[4] = {450, 430};
  a[5] = {455, 350};
  a[6] = {458, 282};
  a[7] = {415, 240};
  a[8] = {530, 430};
  a[9] = {535, 345};
  a[10] = {540, 262};
  a[11] = {460, 185};
  a[12] = {540, 178};
  a[13] = {620, 430};
  a[14] = {625, 350};
  a[15] = {630, 272};
  a[16] = {635, 185};
  a[17] = {760, 400};
  a[18] = {830, 330};
  a[36] = {385, 350};
  for (int d = 2; d <= 18; ++d) a[d + 17] = mirror(a[d]);
  a[37] = mirror(a[36]);
  return t;
}

}  // namespace

const FaceTemplate& face_template() {
  static const FaceTemplate t = build_template();
  return t;
}

std::pair<LandmarkSet, AnchorSet> gen_landmark_template(Rng& rng,
                                                        const GeometryNoise& noise) {
  const FaceTemplate& t = face_template();
  const double theta =
      rng.uniform(-noise.max_rotation_deg, noise.max_rotation_deg) * M_PI / 180.0;
  const double s = rng.uniform(noise.scale_lo, noise.scale_hi);
  const Point2 shift{rng.uniform(-noise.max_translation, noise.max_translation),
                     rng.uniform(-noise.max_translation, noise.max_translation)};
  const double ca = std::cos(theta), sa = std::sin(theta);
  const Point2 c{kTemplateMidline, kTemplateMidline};
  auto apply = [&](const Point2& p) {
    const double dr = p.r - c.r, dc = p.c - c.c;
    return Point2{s * (ca * dr - sa * dc) + c.r + shift.r,
                  s * (sa * dr + ca * dc) + c.c + shift.c};
  };
  LandmarkSet lm;
  for (size_t i = 0; i < lm.points.size(); ++i) {
    const Point2 q = apply(t.landmarks.points[i]);
    lm.points[i] = {q.r + rng.normal(0.0, noise.landmark_jitter),
                    q.c + rng.normal(0.0, noise.landmark_jitter)};
  }
  AnchorSet anchors;
  for (const auto& [d, p] : t.anchors.entries) {
    const Point2 q = apply(p);
    anchors.entries[d] = {q.r + rng.normal(0.0, noise.anchor_jitter),
                          q.c + rng.normal(0.0, noise.anchor_jitter)};
  }
  return {lm, anchors};
}

// ---------------------------------------------------------------------------
// Patch synthesis
// ---------------------------------------------------------------------------

namespace {

constexpr double kTextureContrast = 30.0;  // RMS pixel contrast at amplitude 1
constexpr double kChannelScale[3] = {1.0, 0.96, 0.92};
constexpr double kBaseTone[3] = {205.0, 170.0, 150.0};

}  // namespace

SkinPatch gen_patch(Rng& rng, double amplitude, const SynthConfig& cfg) {
  require(amplitude >= 0.0 && amplitude <= 1.0,
          "gen_patch: amplitude must lie in [0,1]");
  const int side = cfg.patch_side;
  const int flo = int(std::ceil(cfg.freq_lo));
  const int fhi = int(std::floor(cfg.freq_hi));
  require(flo <= fhi, "gen_patch: texture band holds no integer frequency");

  double base[3];
  for (int ch = 0; ch < 3; ++ch) base[ch] = kBaseTone[ch] + rng.uniform(-10.0, 10.0);

  // Integer-cycle components keep the spectrum on exact bins inside the band
  // (the mask window is square, so the max-norm of (fu, fv) is what counts).
  constexpr int kComponents = 6;
  int fu[kComponents], fv[kComponents];
  double amp[kComponents], phase[kComponents];
  double wsum = 0.0;
  for (int k = 0; k < kComponents; ++k) {
    int u, v;
    do {
      u = rng.uniform_int(-fhi, fhi);
      v = rng.uniform_int(-fhi, fhi);
    } while (std::max(std::abs(u), std::abs(v)) < flo);
    fu[k] = u;
    fv[k] = v;
    amp[k] = rng.uniform(0.5, 1.0);
    phase[k] = rng.uniform(0.0, 2.0 * M_PI);
    wsum += amp[k] * amp[k] * 0.5;
  }
  const double target_rms = amplitude * kTextureContrast;
  const double norm = wsum > 0.0 ? target_rms / std::sqrt(wsum) : 0.0;
  for (int k = 0; k < kComponents; ++k) amp[k] *= norm;

  GridD tex(side, side);
  for (int k = 0; k < kComponents; ++k) {
    const double wr = 2.0 * M_PI * fu[k] / side;
    const double wc = 2.0 * M_PI * fv[k] / side;
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c)
        tex.at(r, c) += amp[k] * std::cos(wr * r + wc * c + phase[k]);
  }

  SkinPatch p;
  p.pixels = Image8(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      for (int ch = 0; ch < 3; ++ch)
        p.pixels.at(r, c, ch) =
            clamp_u8(base[ch] + kChannelScale[ch] * tex.at(r, c) +
                     rng.normal(0.0, cfg.noise_sigma));
  p.position_id = 1;
  p.modality = cfg.modality();
  p.label = Measurement{cfg.kind, cfg.label_map(amplitude)};
  return p;
}

Image8 apply_lighting_tag(const Image8& img, Lighting tag) {
  switch (tag) {
    case Lighting::kNatural:
    case Lighting::kStandard2:
      return img;
    case Lighting::kWhite:
      return blend(degrade(img, LightingOpKind::kContrast), img, 1.12);
    case Lighting::kYellow:
      return blend(degrade(img, LightingOpKind::kSaturation), img, 0.80);
    case Lighting::kCrossPolar:
      return blend(degrade(img, LightingOpKind::kSharpness), img, 0.85);
  }
  fail("apply_lighting_tag: bad lighting enum");
}

// ---------------------------------------------------------------------------
// Region mean field
// ---------------------------------------------------------------------------

namespace {

// Rank of each pair group in the region mean field (low rank = favorable
// values), keyed by the smaller position ID of the pair (1 for the midline).
// The near-ear column sits lowest, eyelids highest, matching the qualitative
// pattern of per-region averages.
int region_rank(int group_key) {
  switch (group_key) {
    case 11: return 0;   // near-ear column
    case 12: return 1;
    case 16: return 2;
    case 10: return 3;
    case 15: return 4;
    case 7: return 5;    // crow's feet
    case 18: return 6;
    case 3: return 7;
    case 6: return 8;
    case 14: return 9;
    case 9: return 10;
    case 17: return 11;
    case 2: return 12;
    case 5: return 13;
    case 1: return 14;   // glabella
    case 13: return 15;
    case 4: return 16;
    case 8: return 17;   // nasolabial junction
    case 36: return 18;  // eyelids
    default: fail("region_rank: bad group key " + std::to_string(group_key));
  }
}

int group_key_of(int d) {
  if (d == 1) return 1;
  if (d == 36 || d == 37) return 36;
  return d <= 18 ? d : d - 17;
}

// Quantile band per group: bands tile [0,1] in mean-field order with widths
// proportional to the group's sample multiplicity (2 members for pairs, 1
// for the midline). High TEWL is unfavorable, high SH favorable, so the
// order flips between the metric kinds.
struct QuantileBand {
  double lo = 0.0;
  double width = 0.0;
};

std::map<int, QuantileBand> band_layout(const SynthConfig& cfg) {
  std::vector<std::pair<int, int>> order;  // (rank, key)
  for (int key = 1; key <= 18; ++key) order.push_back({region_rank(key), key});
  order.push_back({region_rank(36), 36});
  std::sort(order.begin(), order.end());
  if (cfg.kind == MetricKind::kSkinHydration) std::reverse(order.begin(), order.end());
  std::map<int, QuantileBand> bands;
  double cum = 0.0;
  for (const auto& [rank, key] : order) {
    const double width = (key == 1 ? 1.0 : 2.0) / kNumPositions;
    bands[key] = QuantileBand{cum, width};
    cum += width;
  }
  return bands;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

namespace {

// Piecewise-constant sampling density over [lo, lo + bins) with unit-width
// bins; supports inverse-CDF draws for the texture-visible label component.
struct TargetHistogram {
  double lo = 0.0;
  std::vector<double> heights;  // relative, one per bin

  double inverse_cdf(double u) const {
    double total = 0.0;
    for (double h : heights) total += h;
    double target = u * total;
    for (size_t b = 0; b < heights.size(); ++b) {
      if (heights[b] > 0.0 && (target <= heights[b] || b + 1 == heights.size()))
        return lo + double(b) + std::min(1.0, std::max(0.0, target / heights[b]));
      target -= heights[b];
    }
    return lo + double(heights.size());
  }
};

constexpr double kHeightMany = 1.0;
constexpr double kHeightMedium = 0.375;
constexpr double kHeightFew = 0.125;

// Group of a designed bin (labels land exactly on this histogram, so group
// masses are controlled by the bin layout alone).
ShotGroup design_group(double height) {
  if (height >= kHeightMany) return ShotGroup::kMany;
  if (height >= kHeightMedium) return ShotGroup::kMedium;
  return ShotGroup::kFew;
}

TargetHistogram build_target_histogram(const SynthConfig& cfg) {
  const int bins = int(std::lround(cfg.label_hi - cfg.label_lo));
  require(bins >= 1, "synth: label range narrower than one bin");
  const double targets[3] = {cfg.many_mass, cfg.medium_mass, cfg.few_mass};

  auto arrange = [&](int nm, int nd, int nf) {
    std::vector<double> h;
    h.reserve(size_t(bins));
    const int few_left = nf / 2, med_left = nd / 2;
    for (int i = 0; i < few_left; ++i) h.push_back(kHeightFew);
    for (int i = 0; i < med_left; ++i) h.push_back(kHeightMedium);
    for (int i = 0; i < nm; ++i) h.push_back(kHeightMany);
    for (int i = med_left; i < nd; ++i) h.push_back(kHeightMedium);
    for (int i = few_left; i < nf; ++i) h.push_back(kHeightFew);
    return h;
  };

  int best[3] = {-1, -1, -1};
  double best_dev = 1e18;
  for (int nm = (targets[0] > 0 ? 1 : 0); nm <= bins; ++nm) {
    for (int nd = 0; nd + nm <= bins; ++nd) {
      const int nf = bins - nm - nd;
      if ((targets[0] <= 0 && nm > 0) || (targets[1] <= 0 && nd > 0) ||
          (targets[2] <= 0 && nf > 0))
        continue;
      const double z =
          nm * kHeightMany + nd * kHeightMedium + nf * kHeightFew;
      if (z <= 0) continue;
      const double dev =
          std::max({std::fabs(nm * kHeightMany / z - targets[0]),
                    std::fabs(nd * kHeightMedium / z - targets[1]),
                    std::fabs(nf * kHeightFew / z - targets[2])});
      if (dev < best_dev) {
        best_dev = dev;
        best[0] = nm;
        best[1] = nd;
        best[2] = nf;
      }
    }
  }
  require(best[0] >= 0 && best_dev <= 0.045,
          "synth: infeasible imbalance spec (no bin layout within 5% mass)");

  TargetHistogram hist;
  hist.lo = cfg.label_lo;
  hist.heights = arrange(best[0], best[1], best[2]);
  return hist;
}

constexpr int kCanvasCols = 7;  // tile grid, 7 x 6 holds 37 positions

}  // namespace

double region_bias(int position_id, const SynthConfig& cfg) {
  require(position_id >= 1 && position_id <= kNumPositions,
          "region_bias: position ID out of range");
  const TargetHistogram hist = build_target_histogram(cfg);
  const auto bands = band_layout(cfg);
  const QuantileBand band = bands.at(group_key_of(position_id));
  auto band_mean = [&](double lo, double width) {
    double acc = 0.0;
    const int n = 256;
    for (int i = 0; i < n; ++i)
      acc += hist.inverse_cdf(lo + width * (i + 0.5) / n);
    return acc / n;
  };
  return band_mean(band.lo, band.width) - band_mean(0.0, 1.0);
}

Dataset gen_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const TargetHistogram hist = build_target_histogram(cfg);
  const SymmetryTable sym = build_symmetry_table();
  Rng root(cfg.seed);

  const auto bands = band_layout(cfg);
  const int P = cfg.n_panelists;

  // Pair groups: 18 bilateral pairs plus the midline single. Each group owns
  // a quantile band of the target histogram (the region mean field); draws
  // within a band are stratified across panelists, so the realized label
  // histogram sits tightly on the designed one.
  std::vector<int> group_keys;
  for (int d = 2; d <= 18; ++d) group_keys.push_back(d);
  group_keys.push_back(36);
  group_keys.push_back(1);

  const double domain_hi = metric_range_max(cfg.kind);
  const double gamma = cfg.region_coupling;
  std::vector<std::vector<double>> amplitude(size_t(P),
                                             std::vector<double>(kNumPositions + 1));
  std::vector<std::vector<double>> labels(size_t(P),
                                          std::vector<double>(kNumPositions + 1));
  for (size_t g = 0; g < group_keys.size(); ++g) {
    const int key = group_keys[g];
    const QuantileBand band = bands.at(key);
    Rng rng = root.derive(1000 + uint64_t(key));
    std::vector<int> order(static_cast<size_t>(P));
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    rng.shuffle(order);
    for (int p = 0; p < P; ++p) {
      // Slot-centered draws keep the sample-quantile multiset equi-spaced,
      // so realized bin counts track the designed masses closely even for
      // few panelists.
      const double within =
          (order[size_t(p)] + 0.5 + rng.uniform(-0.25, 0.25)) / double(P);
      const double u = band.lo + band.width * within;
      const double base_label = hist.inverse_cdf(u);
      // Texture amplitude mixes the global and within-band quantiles; the
      // within-band share is only recoverable given the position.
      const double a_mix = (1.0 - gamma) * u + gamma * within;
      auto assign = [&](int d) {
        const double member_jitter =
            rng.uniform(-cfg.pair_jitter / 2, cfg.pair_jitter / 2);
        labels[size_t(p)][size_t(d)] =
            std::clamp(base_label + member_jitter, 0.0, domain_hi);
        amplitude[size_t(p)][size_t(d)] = std::clamp(a_mix, 0.0, 1.0);
      };
      assign(key);
      if (key != 1) assign(sym.partner(key));
    }
  }

  // Assemble canvases: one facial image per (panelist, angle, lighting) with
  // all 37 patches tiled at their anchor positions.
  const std::vector<Lighting> tags =
      cfg.modality() == Modality::kSelfie
          ? std::vector<Lighting>{Lighting::kNatural, Lighting::kWhite,
                                  Lighting::kYellow}
          : std::vector<Lighting>{Lighting::kStandard2, Lighting::kCrossPolar};
  const std::vector<Angle> angles{Angle::kLeft, Angle::kFront, Angle::kRight};
  const int side = cfg.patch_side;
  const int canvas_rows = ((kNumPositions + kCanvasCols - 1) / kCanvasCols) * side;
  const int canvas_cols = kCanvasCols * side;

  Dataset ds;
  for (int p = 0; p < P; ++p) {
    for (size_t ai = 0; ai < angles.size(); ++ai) {
      // Base patches are drawn once per (panelist, position, angle); the
      // lighting tags are deterministic transforms of the same base.
      std::vector<Image8> base_patches(kNumPositions + 1);
      for (int d = 1; d <= kNumPositions; ++d) {
        Rng prng = root.derive((uint64_t(p) << 16) ^ (uint64_t(ai) << 8) ^ uint64_t(d));
        const double wobble = 1.0 + prng.uniform(-0.03, 0.03);
        const double a =
            std::clamp(amplitude[size_t(p)][size_t(d)] * wobble, 0.0, 1.0);
        base_patches[size_t(d)] = gen_patch(prng, a, cfg).pixels;
      }
      for (Lighting tag : tags) {
        DatasetRecord rec;
        rec.image.pixels = Image8(canvas_rows, canvas_cols, 128);
        rec.image.modality = cfg.modality();
        rec.image.lighting = tag;
        rec.image.angle = angles[ai];
        rec.image.panelist_id = "p" + std::to_string(p);
        for (int d = 1; d <= kNumPositions; ++d) {
          const Image8 tile = apply_lighting_tag(base_patches[size_t(d)], tag);
          const int tr = ((d - 1) / kCanvasCols) * side;
          const int tc = ((d - 1) % kCanvasCols) * side;
          for (int r = 0; r < side; ++r)
            std::copy(tile.data.begin() + size_t(r) * side * 3,
                      tile.data.begin() + size_t(r + 1) * side * 3,
                      rec.image.pixels.data.begin() +
                          ((size_t(tr) + r) * canvas_cols + tc) * 3);
          rec.anchors.entries[d] = Point2{tr + side / 2.0, tc + side / 2.0};
          rec.labels[d] = Measurement{cfg.kind, labels[size_t(p)][size_t(d)]};
        }
        ds.records.push_back(std::move(rec));
      }
    }
  }
  ds.validate();

  // Self-check: realized mass per designed group must match the target
  // split. Labels sit on the designed histogram up to the pair jitter, so
  // the comparison uses the design-time bin groups.
  std::vector<double> all_labels;
  for (const auto& rec : ds.records)
    for (const auto& [d, m] : rec.labels) all_labels.push_back(m.value);
  double mass[3] = {0, 0, 0};
  for (double v : all_labels) {
    const int bin = std::clamp(int(std::floor(v - hist.lo)), 0,
                               int(hist.heights.size()) - 1);
    mass[int(design_group(hist.heights[size_t(bin)]))] += 1.0 / all_labels.size();
  }
  const double targets[3] = {cfg.many_mass, cfg.medium_mass, cfg.few_mass};
  for (int g = 0; g < 3; ++g)
    require(std::fabs(mass[g] - targets[g]) <= 0.05,
            "synth: generated " + std::string(g == 0 ? "many" : g == 1 ? "medium" : "few") +
                "-shot mass deviates more than 5% from the target");
  return ds;
}

}  // namespace dermamap
