#include "dermamap/types.hpp"

#include <algorithm>
#include <set>

namespace dermamap {

std::string to_string(Modality m) {
  return m == Modality::kSelfie ? "selfie" : "visia";
}

std::string to_string(Lighting l) {
  switch (l) {
    case Lighting::kNatural: return "natural";
    case Lighting::kWhite: return "white";
    case Lighting::kYellow: return "yellow";
    case Lighting::kStandard2: return "standard2";
    case Lighting::kCrossPolar: return "crosspolar";
  }
  fail("bad lighting enum");
}

std::string to_string(Angle a) {
  switch (a) {
    case Angle::kLeft: return "left";
    case Angle::kFront: return "front";
    case Angle::kRight: return "right";
  }
  fail("bad angle enum");
}

std::string to_string(MetricKind k) {
  return k == MetricKind::kTewl ? "TEWL" : "SH";
}

Modality modality_from_string(const std::string& s) {
  if (s == "selfie") return Modality::kSelfie;
  if (s == "visia") return Modality::kVisia;
  fail("unknown modality: " + s);
}

Lighting lighting_from_string(const std::string& s) {
  if (s == "natural") return Lighting::kNatural;
  if (s == "white") return Lighting::kWhite;
  if (s == "yellow") return Lighting::kYellow;
  if (s == "standard2") return Lighting::kStandard2;
  if (s == "crosspolar") return Lighting::kCrossPolar;
  fail("unknown lighting: " + s);
}

Angle angle_from_string(const std::string& s) {
  if (s == "left") return Angle::kLeft;
  if (s == "front") return Angle::kFront;
  if (s == "right") return Angle::kRight;
  fail("unknown angle: " + s);
}

MetricKind metric_kind_from_string(const std::string& s) {
  if (s == "TEWL" || s == "tewl") return MetricKind::kTewl;
  if (s == "SH" || s == "sh") return MetricKind::kSkinHydration;
  fail("unknown metric kind: " + s);
}

void FacialImage::validate() const {
  const int min_side = 2 * patch_radius(modality);
  require(pixels.rows >= min_side && pixels.cols >= min_side,
          "facial image smaller than one patch window for modality " +
              to_string(modality));
}

void LandmarkSet::validate() const {
  for (const auto& p : points)
    require(std::isfinite(p.r) && std::isfinite(p.c),
            "landmark set contains non-finite coordinate");
}

void AnchorSet::validate_ids() const {
  for (const auto& [d, _] : entries)
    require(d >= 1 && d <= kNumPositions,
            "anchor position ID out of range: " + std::to_string(d));
}

void AnchorSet::validate_bounds(int rows, int cols, int r) const {
  for (const auto& [d, c] : entries) {
    const bool inside = c.r - r >= 0 && c.r + r <= rows && c.c - r >= 0 && c.c + r <= cols;
    require(inside, "anchor " + std::to_string(d) +
                        " window exceeds image bounds (padded by r)");
  }
}

void Measurement::validate() const {
  require(std::isfinite(value) && value >= 0.0,
          "measurement value must be finite and nonnegative");
}

void SkinPatch::validate() const {
  require(pixels.rows == pixels.cols, "skin patch must be square");
  require(pixels.rows == 2 * patch_radius(modality),
          "skin patch side must equal 2r of its modality");
  require(position_id >= 1 && position_id <= kNumPositions,
          "skin patch position ID out of range");
}

int SymmetryTable::partner(int d) const {
  auto it = pairs.find(d);
  require(it != pairs.end(), "position " + std::to_string(d) + " has no symmetric partner");
  return it->second;
}

SymmetryTable build_symmetry_table() {
  SymmetryTable t;
  for (int d = 2; d <= 18; ++d) {
    t.pairs[d] = d + 17;
    t.pairs[d + 17] = d;
  }
  t.pairs[36] = 37;
  t.pairs[37] = 36;
  t.midline = {1};
  return t;
}

void DatasetRecord::validate() const {
  image.validate();
  anchors.validate_ids();
  const int r = patch_radius(image.modality);
  anchors.validate_bounds(image.pixels.rows, image.pixels.cols, r);
  for (const auto& [d, m] : labels) {
    require(anchors.entries.count(d) != 0,
            "label for position " + std::to_string(d) + " has no anchor");
    m.validate();
  }
}

std::vector<size_t> Dataset::find(const std::optional<std::string>& panelist,
                                  std::optional<Lighting> lighting,
                                  std::optional<Angle> angle) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (panelist && rec.image.panelist_id != *panelist) continue;
    if (lighting && rec.image.lighting != *lighting) continue;
    if (angle && rec.image.angle != *angle) continue;
    out.push_back(i);
  }
  return out;
}

std::vector<std::string> Dataset::panelists() const {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.image.panelist_id);
  return {s.begin(), s.end()};
}

std::vector<Lighting> Dataset::lightings() const {
  std::set<Lighting> s;
  for (const auto& r : records) s.insert(r.image.lighting);
  return {s.begin(), s.end()};
}

void Dataset::validate() const {
  for (const auto& r : records) r.validate();
}

bool operator==(const FacialImage& a, const FacialImage& b) {
  return a.pixels == b.pixels && a.modality == b.modality &&
         a.lighting == b.lighting && a.angle == b.angle &&
         a.panelist_id == b.panelist_id;
}

bool operator==(const AnchorSet& a, const AnchorSet& b) {
  if (a.entries.size() != b.entries.size()) return false;
  for (const auto& [d, p] : a.entries) {
    auto it = b.entries.find(d);
    if (it == b.entries.end() || it->second.r != p.r || it->second.c != p.c)
      return false;
  }
  return true;
}

bool operator==(const Measurement& a, const Measurement& b) {
  return a.kind == b.kind && a.value == b.value;
}

bool operator==(const DatasetRecord& a, const DatasetRecord& b) {
  return a.image == b.image && a.anchors == b.anchors && a.labels == b.labels;
}

bool Dataset::operator==(const Dataset& o) const { return records == o.records; }

}  // namespace dermamap
