#include "dermamap/model.hpp"

#include <cmath>

namespace dermamap {

std::string BackboneConfig::weights_tag() const {
  return "seeded-vit/s" + std::to_string(image_side) + "p" +
         std::to_string(patch_size) + "d" + std::to_string(depth) + "x" +
         std::to_string(token_dim) + "h" + std::to_string(head_count) + "m" +
         std::to_string(mlp_ratio) + "/" + std::to_string(init_seed);
}

void BackboneConfig::validate() const {
  require(frozen, "backbone must stay frozen");
  require(image_side % patch_size == 0,
          "image_side must be divisible by patch_size");
  require(token_dim % head_count == 0,
          "token_dim must be divisible by head_count");
  require(depth >= 1 && mlp_ratio >= 1, "backbone depth/mlp_ratio invalid");
}

void PTMConfig::validate(int image_side) const {
  require(in_channels == 6, "texture encoder expects a 6-channel input");
  require(stage_count() == 5, "texture encoder uses 5 conv+pool stages");
  int side = image_side;
  for (int i = 0; i < stage_count(); ++i) {
    require(side % 2 == 0, "texture encoder: spatial size must stay even; "
                           "image side " + std::to_string(image_side) +
                           " is not a multiple of 7*2^5 (use 224)");
    side /= 2;
  }
  require(side == 7, "texture encoder must end at a 7x7 grid; image side " +
                         std::to_string(image_side) +
                         " traces to " + std::to_string(side) +
                         " after 5 halvings (expected 224 = 7*2^5)");
}

void ModelConfig::validate() const {
  backbone.validate();
  ptm.validate(backbone.image_side);
  require(rho_low > rho_high, "band-pass needs rho_low > rho_high");
  require(rho_low <= 1.0 && rho_high >= 0.0, "rho fractions must lie in [0,1]");
}

ModelConfig toy_model_config(MetricKind kind) {
  ModelConfig cfg;
  cfg.backbone.depth = 4;
  cfg.backbone.token_dim = 64;
  cfg.backbone.head_count = 4;
  cfg.ptm.channels = {4, 8, 16, 32, 64};
  cfg.kind = kind;
  return cfg;
}

double scale_label(double value, MetricKind kind, bool* clamped) {
  const double hi = metric_range_max(kind);
  double v = value;
  bool c = false;
  if (v < 0.0) {
    v = 0.0;
    c = true;
  } else if (v > hi) {
    v = hi;
    c = true;
  }
  if (clamped) *clamped = c;
  return v / hi;
}

double unscale_label(double scaled, MetricKind kind) {
  return scaled * metric_range_max(kind);
}

template <class T>
ModelInput<T> prepare_input(const Image8& patch, int position_id,
                            const ModelConfig& cfg, bool use_freq_input) {
  require(position_id >= 1 && position_id <= kNumPositions,
          "prepare_input: position ID out of range");
  const int S = cfg.backbone.image_side;
  const Image8 resized =
      (patch.rows == S && patch.cols == S) ? patch : resize_bicubic(patch, S, S);

  ModelInput<T> in;
  in.position_id = position_id;
  in.x6 = nn::Tensor<T>({6, S, S});
  // RGB planes normalized to [-1, 1].
  for (int ch = 0; ch < 3; ++ch) {
    T* plane = in.x6.data() + int64_t(ch) * S * S;
    for (int r = 0; r < S; ++r)
      for (int c = 0; c < S; ++c)
        plane[int64_t(r) * S + c] = T(resized.at(r, c, ch) / 127.5 - 1.0);
  }
  if (use_freq_input) {
    const FreqMask mask = bandpass_mask(cfg.rho_low, cfg.rho_high, S, S);
    const auto texture = extract_texture_rgb(resized, mask);
    for (int ch = 0; ch < 3; ++ch) {
      T* plane = in.x6.data() + int64_t(3 + ch) * S * S;
      for (int r = 0; r < S; ++r)
        for (int c = 0; c < S; ++c)
          plane[int64_t(r) * S + c] = T(texture[size_t(ch)].at(r, c) / 127.5);
    }
  }
  return in;
}

template <class T>
AdapterViT<T>::AdapterViT(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build_backbone();
  build_adapters();
}

template <class T>
void AdapterViT<T>::build_backbone() {
  const auto& bb = cfg_.backbone;
  Rng rng(bb.init_seed);
  const int D = bb.token_dim;
  const int M = bb.mlp_ratio * D;
  const int in_dim = bb.patch_size * bb.patch_size * 3;
  const int tokens = 1 + bb.patch_tokens();

  auto xavier = [&](std::vector<int> shape, int fan_in, int fan_out) {
    return nn::randn_tensor<T>(std::move(shape), rng,
                               std::sqrt(2.0 / double(fan_in + fan_out)));
  };
  auto frozen = [&](const std::string& name, nn::Tensor<T> t) {
    params_.add(name, std::move(t), /*trainable=*/false);
  };

  frozen("bb.patch_embed.w", xavier({in_dim, D}, in_dim, D));
  frozen("bb.patch_embed.b", nn::zeros_tensor<T>({D}));
  frozen("bb.cls", nn::randn_tensor<T>({1, D}, rng, 0.02));
  frozen("bb.pos", nn::randn_tensor<T>({tokens, D}, rng, 0.02));
  for (int l = 0; l < bb.depth; ++l) {
    const std::string p = "bb.l" + std::to_string(l) + ".";
    frozen(p + "ln1.g", nn::full_tensor<T>({D}, T(1)));
    frozen(p + "ln1.b", nn::zeros_tensor<T>({D}));
    frozen(p + "qkv.w", xavier({D, 3 * D}, D, 3 * D));
    frozen(p + "qkv.b", nn::zeros_tensor<T>({3 * D}));
    frozen(p + "proj.w", xavier({D, D}, D, D));
    frozen(p + "proj.b", nn::zeros_tensor<T>({D}));
    frozen(p + "ln2.g", nn::full_tensor<T>({D}, T(1)));
    frozen(p + "ln2.b", nn::zeros_tensor<T>({D}));
    frozen(p + "mlp1.w", xavier({D, M}, D, M));
    frozen(p + "mlp1.b", nn::zeros_tensor<T>({M}));
    frozen(p + "mlp2.w", xavier({M, D}, M, D));
    frozen(p + "mlp2.b", nn::zeros_tensor<T>({D}));
  }
  frozen("bb.lnf.g", nn::full_tensor<T>({D}, T(1)));
  frozen("bb.lnf.b", nn::zeros_tensor<T>({D}));
}

template <class T>
void AdapterViT<T>::build_adapters() {
  Rng rng(cfg_.adapter_seed);
  const int D = cfg_.backbone.token_dim;
  const int Dp = cfg_.ptm.out_dim();
  auto train = [&](const std::string& name, nn::Tensor<T> t) {
    params_.add(name, std::move(t), /*trainable=*/true);
  };

  int cin = cfg_.ptm.in_channels;
  for (int i = 0; i < cfg_.ptm.stage_count(); ++i) {
    const int cout = cfg_.ptm.channels[size_t(i)];
    train("ptm.conv" + std::to_string(i) + ".w",
          nn::randn_tensor<T>({cout, cin, 3, 3}, rng,
                              std::sqrt(2.0 / double(cin * 9))));
    train("ptm.conv" + std::to_string(i) + ".b", nn::zeros_tensor<T>({cout}));
    cin = cout;
  }
  for (int l = 0; l < cfg_.backbone.depth; ++l) {
    // Texture adapters are bias-free maps D' -> D.
    train("ta.l" + std::to_string(l) + ".w",
          nn::randn_tensor<T>({Dp, D}, rng, 1.0 / std::sqrt(double(Dp))));
    train("pa.l" + std::to_string(l) + ".w",
          nn::randn_tensor<T>({kNumPositions, D}, rng, 0.02));
    train("pa.l" + std::to_string(l) + ".b", nn::zeros_tensor<T>({D}));
  }
  train("head.w", nn::zeros_tensor<T>({D, 1}));
  train("head.b", nn::zeros_tensor<T>({1}));
}

template <class T>
typename nn::Tape<T>::Id AdapterViT<T>::texture_encoder_forward(
    nn::Tape<T>& tape, nn::TapeBindings<T>& binds,
    typename nn::Tape<T>::Id x6) const {
  const auto& shape = tape.val(x6).shape;
  require(shape.size() == 4 && shape[1] == cfg_.ptm.in_channels,
          "texture encoder: input must be [B," +
              std::to_string(cfg_.ptm.in_channels) + ",S,S]");
  require(shape[2] == cfg_.backbone.image_side && shape[3] == shape[2],
          "texture encoder: input side must equal the backbone image side");
  auto& store = const_cast<nn::ParamStore<T>&>(params_);
  auto x = x6;
  for (int i = 0; i < cfg_.ptm.stage_count(); ++i) {
    const auto w = binds.bind(tape, store, store.find("ptm.conv" + std::to_string(i) + ".w"));
    const auto b = binds.bind(tape, store, store.find("ptm.conv" + std::to_string(i) + ".b"));
    x = tape.avgpool2(tape.relu(tape.add_channel_bias(tape.conv3x3(x, w), b)));
  }
  const int B = shape[0];
  return tape.reshape(x, {B, 49, cfg_.ptm.out_dim()});
}

template <class T>
typename nn::Tape<T>::Id AdapterViT<T>::texture_prompts(
    nn::Tape<T>& tape, nn::TapeBindings<T>& binds,
    typename nn::Tape<T>::Id feat, int layer) const {
  const auto& fs = tape.val(feat).shape;
  require(fs.size() == 3 && fs[1] == 49 && fs[2] == cfg_.ptm.out_dim(),
          "texture adapter: expected [B,49,D'] features");
  auto& store = const_cast<nn::ParamStore<T>&>(params_);
  const int B = fs[0];
  const auto w = binds.bind(tape, store, store.find("ta.l" + std::to_string(layer) + ".w"));
  auto flat = tape.reshape(feat, {B * 49, cfg_.ptm.out_dim()});
  return tape.reshape(tape.matmul(flat, w), {B, 49, cfg_.backbone.token_dim});
}

template <class T>
typename nn::Tape<T>::Id AdapterViT<T>::position_prompt(
    nn::Tape<T>& tape, nn::TapeBindings<T>& binds,
    const std::vector<int>& position_ids, int layer) const {
  const int B = int(position_ids.size());
  nn::Tensor<T> onehot({B, kNumPositions});
  for (int i = 0; i < B; ++i) {
    const int d = position_ids[size_t(i)];
    require(d >= 1 && d <= kNumPositions,
            "position adapter: position ID out of range: " + std::to_string(d));
    onehot.v[size_t(i) * kNumPositions + (d - 1)] = T(1);
  }
  auto& store = const_cast<nn::ParamStore<T>&>(params_);
  const auto w = binds.bind(tape, store, store.find("pa.l" + std::to_string(layer) + ".w"));
  const auto b = binds.bind(tape, store, store.find("pa.l" + std::to_string(layer) + ".b"));
  auto tok = tape.linear(tape.constant(std::move(onehot)), w, b);
  return tape.reshape(tok, {B, 1, cfg_.backbone.token_dim});
}

template <class T>
typename AdapterViT<T>::BatchIds AdapterViT<T>::forward_batch(
    nn::Tape<T>& tape, nn::TapeBindings<T>& binds,
    const std::vector<ModelInput<T>>& batch, FeatureFlags flags) const {
  require(!batch.empty(), "forward: empty batch");
  const auto& bb = cfg_.backbone;
  const int B = int(batch.size());
  const int S = bb.image_side;
  const int P = bb.patch_size;
  const int D = bb.token_dim;
  const int H = bb.head_count;
  const int dh = D / H;
  const int grid = S / P;
  const int n_patches = grid * grid;

  std::vector<int> position_ids(static_cast<size_t>(B));
  nn::Tensor<T> x6({B, 6, S, S});
  for (int i = 0; i < B; ++i) {
    const auto& s = batch[size_t(i)];
    require(s.x6.shape == std::vector<int>({6, S, S}),
            "forward: input patch not resized to the backbone image side");
    std::copy(s.x6.v.begin(), s.x6.v.end(),
              x6.v.begin() + size_t(i) * s.x6.v.size());
    position_ids[size_t(i)] = s.position_id;
  }

  auto& store = const_cast<nn::ParamStore<T>&>(params_);
  auto bind = [&](const std::string& name) {
    return binds.bind(tape, store, store.find(name));
  };

  // Texture encoder on the 6-channel input.
  const auto x6_id = tape.constant(std::move(x6));
  const auto feat = texture_encoder_forward(tape, binds, x6_id);

  // Patch embedding of the RGB planes (fixed rearrangement of the constant
  // input, so it is assembled outside the tape).
  nn::Tensor<T> unfolded({B * n_patches, P * P * 3});
  for (int i = 0; i < B; ++i) {
    const auto& src = batch[size_t(i)].x6;
    for (int gr = 0; gr < grid; ++gr)
      for (int gc = 0; gc < grid; ++gc) {
        T* dst = unfolded.data() +
                 (int64_t(i) * n_patches + int64_t(gr) * grid + gc) * (P * P * 3);
        int k = 0;
        for (int pr = 0; pr < P; ++pr)
          for (int pc = 0; pc < P; ++pc)
            for (int ch = 0; ch < 3; ++ch)
              dst[k++] = src.v[(size_t(ch) * S + size_t(gr * P + pr)) * S +
                               size_t(gc * P + pc)];
      }
  }
  auto tokens = tape.linear(tape.constant(std::move(unfolded)),
                            bind("bb.patch_embed.w"), bind("bb.patch_embed.b"));
  tokens = tape.reshape(tokens, {B, n_patches, D});
  auto cls = tape.broadcast_batch(bind("bb.cls"), B);
  auto base = tape.concat_tokens(cls, tokens);            // [B, 1+n_patches, D]
  base = tape.add(base, tape.broadcast_batch(bind("bb.pos"), B));

  ForwardTrace trace;
  const int base_tokens = 1 + n_patches;
  for (int l = 0; l < bb.depth; ++l) {
    const std::string p = "bb.l" + std::to_string(l) + ".";
    // Fresh prompts each layer; the previous layer's prompt outputs are
    // dropped when the base sequence is sliced back out.
    auto prompts = texture_prompts(tape, binds, feat, l);
    if (flags.use_position_adapters) {
      prompts = tape.concat_tokens(prompts, position_prompt(tape, binds, position_ids, l));
    }
    const int n_prompts = tape.val(prompts).shape[1];
    auto x = tape.concat_tokens(prompts, base);
    const int Tt = n_prompts + base_tokens;
    trace.prompt_counts.push_back(n_prompts);
    trace.seq_lens.push_back(Tt);

    auto x2d = tape.reshape(x, {B * Tt, D});
    auto xa = tape.layernorm(x2d, bind(p + "ln1.g"), bind(p + "ln1.b"));
    auto qkv = tape.linear(xa, bind(p + "qkv.w"), bind(p + "qkv.b"));
    auto q = tape.split_heads(qkv, 0, B, Tt, H, dh);
    auto k = tape.split_heads(qkv, 1, B, Tt, H, dh);
    auto v = tape.split_heads(qkv, 2, B, Tt, H, dh);
    auto att = tape.softmax(tape.bmm_nt(q, k, T(1.0 / std::sqrt(double(dh)))));
    auto ctx = tape.merge_heads(tape.bmm(att, v), B, Tt, H, dh);
    auto proj = tape.linear(ctx, bind(p + "proj.w"), bind(p + "proj.b"));
    auto x1 = tape.add(x, tape.reshape(proj, {B, Tt, D}));

    auto xm = tape.layernorm(tape.reshape(x1, {B * Tt, D}),
                             bind(p + "ln2.g"), bind(p + "ln2.b"));
    auto h1 = tape.gelu(tape.linear(xm, bind(p + "mlp1.w"), bind(p + "mlp1.b")));
    auto h2 = tape.linear(h1, bind(p + "mlp2.w"), bind(p + "mlp2.b"));
    auto x2 = tape.add(x1, tape.reshape(h2, {B, Tt, D}));

    base = tape.slice_tokens(x2, n_prompts, Tt);
  }

  auto cls_out = tape.reshape(tape.slice_tokens(base, 0, 1), {B, D});
  auto z = tape.layernorm(cls_out, bind("bb.lnf.g"), bind("bb.lnf.b"));
  auto yhat = tape.sigmoid(tape.linear(z, bind("head.w"), bind("head.b")));
  BatchIds out;
  out.yhat = tape.reshape(yhat, {B});
  out.z = z;
  out.trace = std::move(trace);
  return out;
}

template <class T>
typename AdapterViT<T>::Prediction AdapterViT<T>::predict(
    const std::vector<ModelInput<T>>& batch, FeatureFlags flags) const {
  nn::Tape<T> tape(/*grad_enabled=*/false);
  nn::TapeBindings<T> binds;
  const auto ids = forward_batch(tape, binds, batch, flags);
  Prediction out;
  const auto& y = tape.val(ids.yhat);
  const auto& z = tape.val(ids.z);
  const int B = int(batch.size());
  const int D = cfg_.backbone.token_dim;
  out.yhat.resize(size_t(B));
  out.z.assign(size_t(B), std::vector<double>(size_t(D)));
  for (int i = 0; i < B; ++i) {
    out.yhat[size_t(i)] = double(y.v[size_t(i)]);
    for (int d = 0; d < D; ++d)
      out.z[size_t(i)][size_t(d)] = double(z.v[size_t(i) * D + d]);
  }
  out.trace = ids.trace;
  return out;
}

template class AdapterViT<float>;
template class AdapterViT<double>;
template ModelInput<float> prepare_input<float>(const Image8&, int,
                                                const ModelConfig&, bool);
template ModelInput<double> prepare_input<double>(const Image8&, int,
                                                  const ModelConfig&, bool);

}  // namespace dermamap
