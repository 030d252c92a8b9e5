#pragma once

#include <memory>
#include <string>
#include <vector>

#include "roomfill/modules.hpp"
#include "roomfill/ops.hpp"

namespace roomfill::nn {

enum class NormMode {
  kBackbone,    // parameter-free stats + learned per-channel affine
  kLayoutOnly,  // modulation from the 3-class layout map only
  kFull,        // layout modulation blended with per-plane style modulation
};

inline NormMode norm_mode_from_string(const std::string& s) {
  if (s == "backbone") return NormMode::kBackbone;
  if (s == "layout_map_only") return NormMode::kLayoutOnly;
  if (s == "full") return NormMode::kFull;
  throw ConfigError(strcat_msg("unknown variant '", s, "'"));
}

inline const char* norm_mode_name(NormMode m) {
  switch (m) {
    case NormMode::kBackbone: return "backbone";
    case NormMode::kLayoutOnly: return "layout_map_only";
    case NormMode::kFull: return "full";
  }
  return "?";
}

// Batch-statistic channel norm with a learned affine; the encoder norm and
// the backbone-variant decoder norm.
template <typename T>
class ChannelNorm {
 public:
  ChannelNorm(const std::string& name, int channels)
      : gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}) {
    gamma.value.fill(T(1));
  }

  int forward(ad::Tape<T>& t, int x) const {
    int xn = ad::per_channel_norm(t, x, 1e-5);
    return ad::channel_affine(t, xn, gamma.id, beta.id);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  Parameter<T> gamma, beta;
};

// Normalizes with parameter-free channel statistics, then modulates
// per-pixel: scale/shift maps come from the broadcast per-plane style codes
// and from the one-hot 3-class layout map, blended by a squashed learnable
// weight that starts at 0.5. Scale heads start near 1 and shift heads near 0
// so the layer begins close to identity on the normalized activations.
template <typename T>
class PlaneAwareNorm {
 public:
  PlaneAwareNorm(const std::string& name, int channels, int style_dim,
                 NormMode mode, Rng& rng)
      : mode_(mode), channels_(channels) {
    InitSpec head_g{1.0, 0.02, 1.0};
    InitSpec head_b{1.0, 0.02, 0.0};
    if (mode == NormMode::kBackbone) {
      affine_ = std::make_unique<ChannelNorm<T>>(name + ".affine", channels);
      return;
    }
    // Layout branch: one 3x3 mixing conv over the one-hot map, then 1x1 heads.
    layout_in_ = std::make_unique<Conv2d<T>>(name + ".l_in", 3, channels, 3, 1,
                                             1, 1, rng);
    layout_gamma_ = std::make_unique<Conv2d<T>>(name + ".l_gamma", channels,
                                                channels, 1, 1, 0, 1, rng, head_g);
    layout_beta_ = std::make_unique<Conv2d<T>>(name + ".l_beta", channels,
                                               channels, 1, 1, 0, 1, rng, head_b);
    if (mode == NormMode::kFull) {
      // Style maps are piecewise constant per plane, so 1x1 convs suffice.
      style_in_ = std::make_unique<Conv2d<T>>(name + ".s_in", style_dim,
                                              channels, 1, 1, 0, 1, rng);
      style_gamma_ = std::make_unique<Conv2d<T>>(name + ".s_gamma", channels,
                                                 channels, 1, 1, 0, 1, rng, head_g);
      style_beta_ = std::make_unique<Conv2d<T>>(name + ".s_beta", channels,
                                                channels, 1, 1, 0, 1, rng, head_b);
      alpha_gamma_ = Parameter<T>(name + ".alpha_gamma", {1});
      alpha_beta_ = Parameter<T>(name + ".alpha_beta", {1});
    }
  }

  // style_map: broadcast per-plane codes at this resolution (-1 when the
  // variant has no style path). l3_onehot: constant id for the one-hot
  // 3-class map at this resolution (-1 for the backbone variant).
  int forward(ad::Tape<T>& t, int x, int style_map, int l3_onehot) const {
    int xn = ad::per_channel_norm(t, x, 1e-5);
    if (mode_ == NormMode::kBackbone)
      return ad::channel_affine(t, xn, affine_->gamma.id, affine_->beta.id);
    RF_CHECK(l3_onehot >= 0, ShapeError, "plane-aware norm needs a layout map");
    int lh = ad::relu(t, layout_in_->forward(t, l3_onehot));
    int lg = layout_gamma_->forward(t, lh);
    int lb = layout_beta_->forward(t, lh);
    if (mode_ == NormMode::kLayoutOnly)
      return ad::add(t, ad::mul(t, lg, xn), lb);
    RF_CHECK(style_map >= 0, ShapeError, "full norm variant needs style codes");
    int sh = ad::relu(t, style_in_->forward(t, style_map));
    int sg = style_gamma_->forward(t, sh);
    int sb = style_beta_->forward(t, sh);
    int g = ad::blend_sigmoid(t, alpha_gamma_.id, sg, lg);
    int b = ad::blend_sigmoid(t, alpha_beta_.id, sb, lb);
    return ad::add(t, ad::mul(t, g, xn), b);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    if (mode_ == NormMode::kBackbone) {
      affine_->collect(out);
      return;
    }
    layout_in_->collect(out);
    layout_gamma_->collect(out);
    layout_beta_->collect(out);
    if (mode_ == NormMode::kFull) {
      style_in_->collect(out);
      style_gamma_->collect(out);
      style_beta_->collect(out);
      out.push_back(&alpha_gamma_);
      out.push_back(&alpha_beta_);
    }
  }

  NormMode mode() const { return mode_; }

  // Forces the modulation to exact identity (scale 1, shift 0); used by
  // invariant tests.
  void force_identity() {
    auto zero_head = [](Conv2d<T>& c, double bias) {
      c.w.value.fill(T(0));
      c.b.value.fill(T(bias));
    };
    if (mode_ == NormMode::kBackbone) {
      affine_->gamma.value.fill(T(1));
      affine_->beta.value.fill(T(0));
      return;
    }
    zero_head(*layout_gamma_, 1.0);
    zero_head(*layout_beta_, 0.0);
    if (mode_ == NormMode::kFull) {
      zero_head(*style_gamma_, 1.0);
      zero_head(*style_beta_, 0.0);
    }
  }

 private:
  NormMode mode_;
  int channels_;
  std::unique_ptr<ChannelNorm<T>> affine_;
  std::unique_ptr<Conv2d<T>> layout_in_, layout_gamma_, layout_beta_;
  std::unique_ptr<Conv2d<T>> style_in_, style_gamma_, style_beta_;
  Parameter<T> alpha_gamma_, alpha_beta_;
};

}  // namespace roomfill::nn
