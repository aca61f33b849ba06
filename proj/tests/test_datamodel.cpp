#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "dermamap/dataset_io.hpp"
#include "dermamap/synthgen.hpp"
#include "dermamap/types.hpp"

using namespace dermamap;

TEST_CASE("symmetry table is the fixed involution") {
  const SymmetryTable t = build_symmetry_table();
  CHECK(t.partner(2) == 19);
  CHECK(t.partner(36) == 37);
  CHECK(t.partner(37) == 36);
  CHECK(!t.is_paired(1));
  REQUIRE(t.midline == std::vector<int>{1});

  // Involution over exactly {2..35, 36, 37}.
  int paired = 0;
  for (int d = 1; d <= kNumPositions; ++d) {
    if (d == 1) {
      CHECK(!t.is_paired(d));
      continue;
    }
    REQUIRE(t.is_paired(d));
    CHECK(t.partner(t.partner(d)) == d);
    CHECK(t.partner(d) != d);
    ++paired;
  }
  CHECK(paired == 36);
  for (int d = 2; d <= 18; ++d) CHECK(t.partner(d) == d + 17);
}

TEST_CASE("patch radii per modality") {
  CHECK(patch_radius(Modality::kSelfie) == 70);
  CHECK(patch_radius(Modality::kVisia) == 170);
  SkinPatch p;
  p.pixels = Image8(140, 140);
  p.position_id = 3;
  p.modality = Modality::kSelfie;
  CHECK_NOTHROW(p.validate());
  p.pixels = Image8(141, 141);
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("enum round trips") {
  for (auto l : {Lighting::kNatural, Lighting::kWhite, Lighting::kYellow,
                 Lighting::kStandard2, Lighting::kCrossPolar})
    CHECK(lighting_from_string(to_string(l)) == l);
  for (auto a : {Angle::kLeft, Angle::kFront, Angle::kRight})
    CHECK(angle_from_string(to_string(a)) == a);
  CHECK(metric_kind_from_string("TEWL") == MetricKind::kTewl);
  CHECK(metric_kind_from_string("SH") == MetricKind::kSkinHydration);
}

TEST_CASE("dataset round trip") {
  const std::string path = "test_roundtrip.dmds";

  SUBCASE("empty dataset") {
    Dataset empty;
    serialize_dataset(empty, path);
    CHECK(load_dataset(path) == empty);
  }

  SUBCASE("synthetic single-panelist dataset") {
    SynthConfig cfg;
    cfg.seed = 7;
    cfg.n_panelists = 1;
    const Dataset ds = gen_dataset(cfg);
    REQUIRE(!ds.records.empty());
    serialize_dataset(ds, path);
    const Dataset back = load_dataset(path);
    CHECK(back == ds);  // bit-exact pixels, exact labels
  }

  SUBCASE("truncated file is a structured parse error") {
    SynthConfig cfg;
    cfg.seed = 8;
    cfg.n_panelists = 1;
    serialize_dataset(gen_dataset(cfg), path);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_dataset(path), Error);
  }

  std::remove(path.c_str());
}

TEST_CASE("anchor bounds validation names the anchor") {
  AnchorSet anchors;
  anchors.entries[5] = Point2{10.0, 10.0};
  try {
    anchors.validate_bounds(200, 200, 70);
    FAIL("expected bounds error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("5") != std::string::npos);
  }
}

TEST_CASE("dataset find index") {
  SynthConfig cfg;
  cfg.seed = 9;
  cfg.n_panelists = 2;
  const Dataset ds = gen_dataset(cfg);
  CHECK(ds.panelists().size() == 2);
  CHECK(ds.lightings().size() == 3);
  const auto hits = ds.find(std::string("p0"), Lighting::kWhite, Angle::kFront);
  CHECK(hits.size() == 1);
  for (size_t i : hits) {
    CHECK(ds.records[i].image.panelist_id == "p0");
    CHECK(ds.records[i].image.lighting == Lighting::kWhite);
  }
}
