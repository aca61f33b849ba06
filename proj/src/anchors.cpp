#include "dermamap/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>

namespace dermamap {

Image8 crop_patch(const Image8& image, const Point2& center, int r,
                  int position_id) {
  const int r0 = int(std::lround(center.r)) - r;
  const int c0 = int(std::lround(center.c)) - r;
  if (r0 < 0 || c0 < 0 || r0 + 2 * r > image.rows || c0 + 2 * r > image.cols) {
    fail("crop_patch: window for anchor " + std::to_string(position_id) +
         " at (" + std::to_string(center.r) + "," + std::to_string(center.c) +
         ") with r=" + std::to_string(r) + " exceeds image bounds");
  }
  Image8 out(2 * r, 2 * r);
  for (int rr = 0; rr < 2 * r; ++rr)
    std::memcpy(out.data.data() + size_t(rr) * out.cols * 3,
                image.data.data() + (size_t(r0 + rr) * image.cols + c0) * 3,
                size_t(out.cols) * 3);
  return out;
}

SkinPatch crop_patch(const FacialImage& image, const Point2& center,
                     int position_id, const Measurement& label) {
  SkinPatch p;
  p.pixels = crop_patch(image.pixels, center, patch_radius(image.modality),
                        position_id);
  p.position_id = position_id;
  p.label = label;
  p.panelist_id = image.panelist_id;
  p.lighting = image.lighting;
  p.angle = image.angle;
  p.modality = image.modality;
  p.validate();
  return p;
}

double anchor_error_rate(const Point2& predicted, const Point2& actual, double r) {
  require(r > 0.0, "anchor_error_rate: radius must be positive");
  return distance(predicted, actual) / r;
}

std::pair<LandmarkSet, NormTransform> normalize_landmarks(const LandmarkSet& lm) {
  lm.validate();
  NormTransform t;
  for (const auto& p : lm.points) {
    t.centroid.r += p.r / kNumLandmarks;
    t.centroid.c += p.c / kNumLandmarks;
  }
  double rms = 0.0;
  for (const auto& p : lm.points) {
    const double dr = p.r - t.centroid.r, dc = p.c - t.centroid.c;
    rms += (dr * dr + dc * dc) / kNumLandmarks;
  }
  rms = std::sqrt(rms);
  require(rms > 1e-9, "normalize_landmarks: degenerate landmark set");
  t.scale = rms;
  LandmarkSet out;
  for (size_t i = 0; i < lm.points.size(); ++i) out.points[i] = t.apply(lm.points[i]);
  return {out, t};
}

namespace {

void rgb_to_hsv(uint8_t r8, uint8_t g8, uint8_t b8, double* h, double* s, double* v) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  *v = mx;
  *s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 1e-12) {
    *h = 0.0;
  } else if (mx == r) {
    *h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
  } else if (mx == g) {
    *h = 60.0 * ((b - r) / d + 2.0);
  } else {
    *h = 60.0 * ((r - g) / d + 4.0);
  }
}

}  // namespace

StickerResult sticker_centroids(const Image8& image, const ColorSpec& spec) {
  StickerResult res;
  const int rows = image.rows, cols = image.cols;
  std::vector<uint8_t> in_range(size_t(rows) * cols, 0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double h, s, v;
      rgb_to_hsv(image.at(r, c, 0), image.at(r, c, 1), image.at(r, c, 2), &h, &s, &v);
      const bool hue_ok = spec.hue_lo <= spec.hue_hi
                              ? (h >= spec.hue_lo && h <= spec.hue_hi)
                              : (h >= spec.hue_lo || h <= spec.hue_hi);
      if (hue_ok && s >= spec.sat_min && v >= spec.val_min)
        in_range[size_t(r) * cols + c] = 1;
    }

  // 4-connected components, scanned row-major so IDs are spatially ordered.
  std::vector<int> comp(size_t(rows) * cols, -1);
  int next_id = 1;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!in_range[size_t(r) * cols + c] || comp[size_t(r) * cols + c] >= 0)
        continue;
      double sum_r = 0.0, sum_c = 0.0;
      int area = 0;
      std::deque<std::pair<int, int>> queue{{r, c}};
      comp[size_t(r) * cols + c] = 0;
      while (!queue.empty()) {
        const auto [qr, qc] = queue.front();
        queue.pop_front();
        sum_r += qr;
        sum_c += qc;
        ++area;
        const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int nr = qr + dr[k], nc = qc + dc[k];
          if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
          if (!in_range[size_t(nr) * cols + nc] || comp[size_t(nr) * cols + nc] >= 0)
            continue;
          comp[size_t(nr) * cols + nc] = 0;
          queue.push_back({nr, nc});
        }
      }
      if (area < spec.min_area) continue;
      res.centroids.entries[next_id++] = Point2{sum_r / area, sum_c / area};
    }
  }
  const int found = int(res.centroids.entries.size());
  if (found == 0) res.warnings.add("no in-range pixels; no sticker components found");
  else if (found != spec.expected_count)
    res.warnings.add("expected " + std::to_string(spec.expected_count) +
                     " sticker components, found " + std::to_string(found));
  return res;
}

// ---------------------------------------------------------------------------
// Point-set regressor
// ---------------------------------------------------------------------------

AnchorRegressor::AnchorRegressor(const AnchorModelConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg.seed);
  const int E = cfg.embed_dim, Hn = cfg.hidden, HH = cfg.head_hidden;
  auto he = [&](std::vector<int> shape, int fan_in) {
    return nn::randn_tensor<float>(std::move(shape), rng,
                                   std::sqrt(2.0 / double(fan_in)));
  };
  params_.add("emb", nn::randn_tensor<float>({kNumLandmarks, E}, rng, 0.1), true);
  params_.add("mlp1.w", he({2 + E, Hn}, 2 + E), true);
  params_.add("mlp1.b", nn::zeros_tensor<float>({Hn}), true);
  params_.add("mlp2.w", he({Hn, Hn}, Hn), true);
  params_.add("mlp2.b", nn::zeros_tensor<float>({Hn}), true);
  params_.add("head1.w", he({2 * Hn, HH}, 2 * Hn), true);
  params_.add("head1.b", nn::zeros_tensor<float>({HH}), true);
  params_.add("head2.w", he({HH, 2 * kNumPositions}, HH), true);
  params_.add("head2.b", nn::zeros_tensor<float>({2 * kNumPositions}), true);
}

nn::Tape<float>::Id AnchorRegressor::forward(
    nn::Tape<float>& tape, nn::TapeBindings<float>& binds,
    const nn::Tensor<float>& points_norm) const {
  require(points_norm.shape.size() == 3 && points_norm.shape[1] == kNumLandmarks &&
              points_norm.shape[2] == 2,
          "anchor regressor: expected [B,68,2] normalized points");
  const int B = points_norm.shape[0];
  auto& store = const_cast<nn::ParamStore<float>&>(params_);
  auto bind = [&](const char* n) { return binds.bind(tape, store, store.find(n)); };

  const auto coords = tape.constant(points_norm);
  const auto emb = tape.broadcast_batch(bind("emb"), B);
  auto x = tape.concat_features(coords, emb);  // [B, 68, 2+E]
  x = tape.reshape(x, {B * kNumLandmarks, 2 + cfg_.embed_dim});
  x = tape.relu(tape.linear(x, bind("mlp1.w"), bind("mlp1.b")));
  x = tape.relu(tape.linear(x, bind("mlp2.w"), bind("mlp2.b")));
  x = tape.reshape(x, {B, kNumLandmarks, cfg_.hidden});
  auto pooled = tape.concat_features(tape.mean_axis1(x), tape.max_axis1(x));
  auto h = tape.relu(tape.linear(pooled, bind("head1.w"), bind("head1.b")));
  return tape.linear(h, bind("head2.w"), bind("head2.b"));  // [B, 74]
}

AnchorSet AnchorRegressor::predict_anchors(const LandmarkSet& landmarks) const {
  require(trained_, "anchor regressor: model has not been trained");
  const auto [norm, transform] = normalize_landmarks(landmarks);
  nn::Tensor<float> pts({1, kNumLandmarks, 2});
  for (int j = 0; j < kNumLandmarks; ++j) {
    pts.v[size_t(2 * j)] = float(norm.points[size_t(j)].r);
    pts.v[size_t(2 * j + 1)] = float(norm.points[size_t(j)].c);
  }
  nn::Tape<float> tape(/*grad_enabled=*/false);
  nn::TapeBindings<float> binds;
  const auto out = forward(tape, binds, pts);
  AnchorSet anchors;
  const auto& v = tape.val(out);
  for (int d = 1; d <= kNumPositions; ++d) {
    const Point2 p{double(v.v[size_t(2 * (d - 1))]),
                   double(v.v[size_t(2 * (d - 1) + 1)])};
    anchors.entries[d] = transform.invert(p);
  }
  return anchors;
}

namespace {

// Targets in the normalized frame of each landmark set.
struct AnchorSample {
  nn::Tensor<float> points{{kNumLandmarks, 2}};
  std::vector<float> target;  // 74
};

AnchorSample make_sample(const LandmarkSet& lm, const AnchorSet& anchors) {
  const auto [norm, transform] = normalize_landmarks(lm);
  AnchorSample s;
  for (int j = 0; j < kNumLandmarks; ++j) {
    s.points.v[size_t(2 * j)] = float(norm.points[size_t(j)].r);
    s.points.v[size_t(2 * j + 1)] = float(norm.points[size_t(j)].c);
  }
  s.target.resize(2 * kNumPositions);
  for (int d = 1; d <= kNumPositions; ++d) {
    const auto it = anchors.entries.find(d);
    require(it != anchors.entries.end(),
            "anchor training pair missing position " + std::to_string(d));
    const Point2 p = transform.apply(it->second);
    s.target[size_t(2 * (d - 1))] = float(p.r);
    s.target[size_t(2 * (d - 1) + 1)] = float(p.c);
  }
  return s;
}

}  // namespace

AnchorRegressor train_anchor_model(
    const std::vector<std::pair<LandmarkSet, AnchorSet>>& pairs,
    const AnchorModelConfig& cfg) {
  require(!pairs.empty(), "train_anchor_model: empty training set");
  std::vector<AnchorSample> samples;
  samples.reserve(pairs.size());
  for (const auto& [lm, anchors] : pairs) samples.push_back(make_sample(lm, anchors));

  AnchorRegressor model(cfg);
  nn::Adam<float> adam;
  Rng rng(cfg.seed ^ 0x5eedULL);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    rng.shuffle(order);
    const double lr = nn::cosine_lr(cfg.lr, epoch, cfg.epochs);
    for (size_t i = 0; i < order.size(); i += size_t(cfg.batch)) {
      const size_t hi = std::min(order.size(), i + size_t(cfg.batch));
      const int B = int(hi - i);
      nn::Tensor<float> pts({B, kNumLandmarks, 2});
      std::vector<float> target(size_t(B) * 2 * kNumPositions);
      for (int b = 0; b < B; ++b) {
        const auto& s = samples[size_t(order[i + size_t(b)])];
        std::copy(s.points.v.begin(), s.points.v.end(),
                  pts.v.begin() + size_t(b) * kNumLandmarks * 2);
        std::copy(s.target.begin(), s.target.end(),
                  target.begin() + size_t(b) * 2 * kNumPositions);
      }
      nn::Tape<float> tape(/*grad_enabled=*/true);
      nn::TapeBindings<float> binds;
      const auto out = model.forward(tape, binds, pts);
      const auto loss = tape.mse_mean(out, target);
      model.params().zero_grads();
      tape.backward(loss);
      binds.collect_grads(tape, model.params());
      adam.step(model.params(), lr);
    }
  }
  model.mark_trained();
  return model;
}

double mean_anchor_error_rate(
    const AnchorRegressor& model,
    const std::vector<std::pair<LandmarkSet, AnchorSet>>& pairs, double r) {
  require(!pairs.empty(), "mean_anchor_error_rate: empty evaluation set");
  double acc = 0.0;
  size_t n = 0;
  for (const auto& [lm, truth] : pairs) {
    const AnchorSet pred = model.predict_anchors(lm);
    for (const auto& [d, p] : truth.entries) {
      acc += anchor_error_rate(pred.entries.at(d), p, r);
      ++n;
    }
  }
  return acc / double(n);
}

// Checkpoint: magic, version, config, then raw float blobs per parameter.
namespace {
constexpr char kAnchorMagic[4] = {'D', 'M', 'A', 'R'};
constexpr uint32_t kAnchorVersion = 1;
}  // namespace

void AnchorRegressor::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  require(bool(os), "anchor save: cannot open " + path);
  os.write(kAnchorMagic, 4);
  os.write(reinterpret_cast<const char*>(&kAnchorVersion), 4);
  const int32_t meta[5] = {cfg_.embed_dim, cfg_.hidden, cfg_.head_hidden,
                           int32_t(trained_ ? 1 : 0), params_.count()};
  os.write(reinterpret_cast<const char*>(meta), sizeof(meta));
  for (const auto& p : params_.all()) {
    const uint32_t name_len = uint32_t(p.name.size());
    const uint64_t numel = uint64_t(p.value.numel());
    os.write(reinterpret_cast<const char*>(&name_len), 4);
    os.write(p.name.data(), name_len);
    os.write(reinterpret_cast<const char*>(&numel), 8);
    os.write(reinterpret_cast<const char*>(p.value.v.data()),
             std::streamsize(numel * sizeof(float)));
  }
  require(bool(os), "anchor save: write failed");
}

AnchorRegressor AnchorRegressor::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "anchor load: cannot open " + path);
  char magic[4];
  uint32_t version = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&version), 4);
  require(is.gcount() == 4 && std::memcmp(magic, kAnchorMagic, 4) == 0,
          "anchor load: not an anchor model file");
  require(version == kAnchorVersion, "anchor load: unsupported version");
  int32_t meta[5];
  is.read(reinterpret_cast<char*>(meta), sizeof(meta));
  AnchorModelConfig cfg;
  cfg.embed_dim = meta[0];
  cfg.hidden = meta[1];
  cfg.head_hidden = meta[2];
  AnchorRegressor model(cfg);
  for (int i = 0; i < meta[4]; ++i) {
    uint32_t name_len = 0;
    is.read(reinterpret_cast<char*>(&name_len), 4);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint64_t numel = 0;
    is.read(reinterpret_cast<char*>(&numel), 8);
    auto& p = model.params_.at(model.params_.find(name));
    require(uint64_t(p.value.numel()) == numel,
            "anchor load: size mismatch for " + name);
    is.read(reinterpret_cast<char*>(p.value.v.data()),
            std::streamsize(numel * sizeof(float)));
    require(bool(is), "anchor load: truncated file at " + name);
  }
  model.trained_ = meta[3] != 0;
  return model;
}

}  // namespace dermamap
