#pragma once

#include <memory>
#include <string>
#include <vector>

#include "roomfill/modules.hpp"

namespace roomfill::nn {

// Patch discriminator: four stride-2 spectral-normalized convolutions with
// leaky relu, then a 3x3 head to a single-channel score map. A (3,256,512)
// input yields a (1,16,32) map; horizontal shifts of the input by the total
// stride (16 px) shift the map by one cell because columns wrap.
template <typename T>
class PatchDiscriminator {
 public:
  PatchDiscriminator(int base_channels, Rng& rng) : base_(base_channels) {
    RF_CHECK(base_channels >= 4, ConfigError,
             "discriminator base_channels must be >= 4");
    int c = base_channels;
    layers_.push_back(
        std::make_unique<SpectralConv2d<T>>("d.l0", 3, c, 4, 2, 1, rng));
    layers_.push_back(
        std::make_unique<SpectralConv2d<T>>("d.l1", c, 2 * c, 4, 2, 1, rng));
    layers_.push_back(
        std::make_unique<SpectralConv2d<T>>("d.l2", 2 * c, 4 * c, 4, 2, 1, rng));
    layers_.push_back(
        std::make_unique<SpectralConv2d<T>>("d.l3", 4 * c, 8 * c, 4, 2, 1, rng));
    head_ = std::make_unique<SpectralConv2d<T>>("d.head", 8 * c, 1, 3, 1, 1, rng);
    for (auto& l : layers_) l->collect(params_);
    head_->collect(params_);
    for (auto& l : layers_) l->collect_state(state_);
    head_->collect_state(state_);
  }

  // x: (N,3,H,W) with H, W divisible by 16. Returns the (N,1,H/16,W/16)
  // score map id.
  int forward(ad::Tape<T>& t, int x) const {
    const Tensor<T>& xv = t.val(x);
    ad::detail::check_4d(xv, "discriminator input");
    RF_CHECK_SHAPE(xv.shape()[1] == 3, "discriminator expects 3 channels, got ",
                   xv.shape()[1]);
    RF_CHECK(xv.shape()[2] % 16 == 0 && xv.shape()[3] % 16 == 0, ConfigError,
             "discriminator needs H and W divisible by 16, got ", xv.shape()[2],
             "x", xv.shape()[3]);
    int h = x;
    for (auto& l : layers_) h = ad::leaky_relu(t, l->forward(t, h), 0.2);
    int score = head_->forward(t, h);
    RF_CHECK(t.val(score).all_finite(), NumericalError,
             "non-finite activations in discriminator head");
    return score;
  }

  // One power-iteration refresh per training step, before the forward pass.
  void power_iterate() {
    for (auto& l : layers_) l->power_iterate();
    head_->power_iterate();
  }

  void bind(ad::Tape<T>& t, bool trainable = true) {
    bind_all(params_, t, trainable);
  }

  void read_grads(ad::Tape<T>& t) { read_all_grads(params_, t); }

  std::vector<Parameter<T>*>& params() { return params_; }
  std::vector<std::vector<T>*>& sn_state() { return state_; }
  int base_channels() const { return base_; }

 private:
  int base_;
  std::vector<std::unique_ptr<SpectralConv2d<T>>> layers_;
  std::unique_ptr<SpectralConv2d<T>> head_;
  std::vector<Parameter<T>*> params_;
  std::vector<std::vector<T>*> state_;
};

}  // namespace roomfill::nn
