#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dermamap/common.hpp"
#include "dermamap/image.hpp"

namespace dermamap {

// ---------------------------------------------------------------------------
// Core vocabulary: capture modality, lighting, camera angle, metric kind.
// ---------------------------------------------------------------------------

enum class Modality { kSelfie, kVisia };
enum class Lighting { kNatural, kWhite, kYellow, kStandard2, kCrossPolar };
enum class Angle { kLeft, kFront, kRight };
enum class MetricKind { kSkinHydration, kTewl };

std::string to_string(Modality m);
std::string to_string(Lighting l);
std::string to_string(Angle a);
std::string to_string(MetricKind k);
Modality modality_from_string(const std::string& s);
Lighting lighting_from_string(const std::string& s);
Angle angle_from_string(const std::string& s);
MetricKind metric_kind_from_string(const std::string& s);

// Patch semi-side per modality: selfie patches are 140x140, controlled-light
// captures 340x340, tied to the physical sticker radius in each setup.
constexpr int kNumPositions = 37;
constexpr int kNumLandmarks = 68;

inline int patch_radius(Modality m) { return m == Modality::kSelfie ? 70 : 170; }

// Value ranges used for label scaling and heatmap domains.
inline double metric_range_max(MetricKind k) {
  return k == MetricKind::kTewl ? 30.0 : 90.0;
}

// (row, col) point in pixel units.
struct Point2 {
  double r = 0.0;
  double c = 0.0;
};

inline double distance(const Point2& a, const Point2& b) {
  return std::hypot(a.r - b.r, a.c - b.c);
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct FacialImage {
  Image8 pixels;
  Modality modality = Modality::kSelfie;
  Lighting lighting = Lighting::kNatural;
  Angle angle = Angle::kFront;
  std::string panelist_id;

  void validate() const;
};

struct LandmarkSet {
  std::array<Point2, kNumLandmarks> points{};

  void validate() const;  // all coordinates finite
};

// Anchor coordinates keyed by position ID (1..37); per-image subsets allowed.
struct AnchorSet {
  std::map<int, Point2> entries;

  void validate_ids() const;
  // Checks that every anchor window of semi-side r fits inside rows x cols.
  void validate_bounds(int rows, int cols, int r) const;
};

struct Measurement {
  MetricKind kind = MetricKind::kTewl;
  double value = 0.0;

  void validate() const;
};

struct SkinPatch {
  Image8 pixels;  // square, side 2*patch_radius(modality)
  int position_id = 0;
  Measurement label;
  std::string panelist_id;
  Lighting lighting = Lighting::kNatural;
  Angle angle = Angle::kFront;
  Modality modality = Modality::kSelfie;

  int side() const { return pixels.rows; }
  void validate() const;
};

// Bilateral pairing of position IDs. Left-side IDs 2..18 pair with 19..35,
// the two eyelid IDs 36 and 37 pair with each other, and ID 1 (between the
// eyebrows) has no partner.
struct SymmetryTable {
  std::map<int, int> pairs;     // involutive: pairs[pairs[d]] == d
  std::vector<int> midline;     // IDs without a partner

  bool is_paired(int d) const { return pairs.count(d) != 0; }
  int partner(int d) const;
};

SymmetryTable build_symmetry_table();

// One captured facial image with its anchors and per-anchor labels.
struct DatasetRecord {
  FacialImage image;
  AnchorSet anchors;
  std::map<int, Measurement> labels;  // keyed by position ID

  void validate() const;
};

// The dataset container: records indexed by panelist / lighting / angle.
struct Dataset {
  std::vector<DatasetRecord> records;

  size_t patch_count() const {
    size_t n = 0;
    for (const auto& r : records) n += r.labels.size();
    return n;
  }
  std::vector<size_t> find(const std::optional<std::string>& panelist,
                           std::optional<Lighting> lighting,
                           std::optional<Angle> angle) const;
  std::vector<std::string> panelists() const;
  std::vector<Lighting> lightings() const;
  void validate() const;
  bool operator==(const Dataset& o) const;
};

bool operator==(const FacialImage& a, const FacialImage& b);
bool operator==(const AnchorSet& a, const AnchorSet& b);
bool operator==(const Measurement& a, const Measurement& b);
bool operator==(const DatasetRecord& a, const DatasetRecord& b);

}  // namespace dermamap
