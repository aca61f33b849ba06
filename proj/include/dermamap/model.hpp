#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dermamap/image.hpp"
#include "dermamap/nn/optim.hpp"
#include "dermamap/nn/tensor.hpp"
#include "dermamap/spectral.hpp"
#include "dermamap/types.hpp"

namespace dermamap {

// Feature toggles mirroring the incremental model configurations A..E.
struct FeatureFlags {
  bool use_freq_input = true;         // band-pass texture channels into the CNN
  bool use_position_adapters = true;  // 1 extra prompt token per layer
  bool use_augmentation = true;       // geometric augmentation during training
  bool use_symmetric_loss = true;     // pairwise contrastive term
};

inline FeatureFlags flags_for_config(char config /* 'A'..'E' */) {
  FeatureFlags f{false, false, false, false};
  if (config >= 'B') f.use_freq_input = true;
  if (config >= 'C') f.use_position_adapters = true;
  if (config >= 'D') f.use_augmentation = true;
  if (config >= 'E') f.use_symmetric_loss = true;
  return f;
}

// Frozen transformer backbone. Weights are generated deterministically from
// init_seed; the tag identifies the weight source in checkpoints.
struct BackboneConfig {
  int image_side = 224;
  int patch_size = 16;
  int depth = 12;
  int token_dim = 768;
  int head_count = 12;
  int mlp_ratio = 4;
  uint64_t init_seed = 1;
  bool frozen = true;  // always true here; asserted at construction

  int patch_tokens() const {
    return (image_side / patch_size) * (image_side / patch_size);
  }
  std::string weights_tag() const;
  void validate() const;
};

// Convolutional texture encoder: five conv+pool stages halving the spatial
// size, 224 -> 7, on the 6-channel (RGB + texture) input.
struct PTMConfig {
  std::vector<int> channels = {48, 96, 192, 384, 768};
  int in_channels = 6;

  int stage_count() const { return int(channels.size()); }
  int out_dim() const { return channels.back(); }
  void validate(int image_side) const;
};

struct ModelConfig {
  BackboneConfig backbone;
  PTMConfig ptm;
  double rho_low = 0.0576;   // band-pass retained fraction
  double rho_high = 0.0036;  // band-pass removed fraction
  MetricKind kind = MetricKind::kTewl;
  uint64_t adapter_seed = 2;

  void validate() const;
};

// Reduced dims for CPU-speed tests; shape contracts (224 input, 7x7 texture
// grid, 49+1 prompts) are identical to the full-size model.
ModelConfig toy_model_config(MetricKind kind = MetricKind::kTewl);

// Label scaling to the model's [0,1] output range. Out-of-range inputs are
// clamped; `clamped` reports it when non-null.
double scale_label(double value, MetricKind kind, bool* clamped = nullptr);
double unscale_label(double scaled, MetricKind kind);

// Per-layer prompt bookkeeping captured during a forward pass.
struct ForwardTrace {
  std::vector<int> prompt_counts;
  std::vector<int> seq_lens;
};

// One model input: normalized RGB planes plus texture planes (zeroed when
// the frequency input is disabled), side = backbone image_side.
template <class T>
struct ModelInput {
  nn::Tensor<T> x6;  // [6, S, S]
  int position_id = 0;
};

// Builds the 6-channel input from a patch: bicubic resize to the backbone
// side, band-pass texture extraction, channel normalization to [-1, 1].
template <class T>
ModelInput<T> prepare_input(const Image8& patch, int position_id,
                            const ModelConfig& cfg, bool use_freq_input);

// Frozen ViT with per-layer prompt tokens from the texture encoder (49) and
// the position one-hot (1), and a bounded regression head on the class token.
template <class T>
class AdapterViT {
 public:
  explicit AdapterViT(ModelConfig cfg);

  struct BatchIds {
    typename nn::Tape<T>::Id yhat;  // [B], in [0,1]
    typename nn::Tape<T>::Id z;     // [B, D] class-token latent
    ForwardTrace trace;
  };

  // Forward through the tape; params are bound via `binds` so gradients can
  // be collected after backward. Inputs must already be resized/prepared.
  BatchIds forward_batch(nn::Tape<T>& tape, nn::TapeBindings<T>& binds,
                         const std::vector<ModelInput<T>>& batch,
                         FeatureFlags flags) const;

  // Inference convenience: predictions in [0,1] plus latents.
  struct Prediction {
    std::vector<double> yhat;
    std::vector<std::vector<double>> z;
    ForwardTrace trace;
  };
  Prediction predict(const std::vector<ModelInput<T>>& batch,
                     FeatureFlags flags) const;

  // Texture encoder alone: [B,6,S,S] constant -> [B,49,D'] node.
  typename nn::Tape<T>::Id texture_encoder_forward(
      nn::Tape<T>& tape, nn::TapeBindings<T>& binds,
      typename nn::Tape<T>::Id x6) const;

  // Per-layer adapters, exposed for unit tests.
  typename nn::Tape<T>::Id texture_prompts(nn::Tape<T>& tape,
                                           nn::TapeBindings<T>& binds,
                                           typename nn::Tape<T>::Id feat_49xdp,
                                           int layer) const;
  typename nn::Tape<T>::Id position_prompt(nn::Tape<T>& tape,
                                           nn::TapeBindings<T>& binds,
                                           const std::vector<int>& position_ids,
                                           int layer) const;

  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }

  // Hash over the frozen backbone parameter bytes.
  std::string backbone_hash() const { return params_.value_hash(/*frozen_only=*/true); }

 private:
  void build_backbone();
  void build_adapters();

  ModelConfig cfg_;
  nn::ParamStore<T> params_;
};

extern template class AdapterViT<float>;
extern template class AdapterViT<double>;
extern template ModelInput<float> prepare_input<float>(const Image8&, int,
                                                       const ModelConfig&, bool);
extern template ModelInput<double> prepare_input<double>(const Image8&, int,
                                                         const ModelConfig&, bool);

}  // namespace dermamap
