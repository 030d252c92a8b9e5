#pragma once

#include <memory>
#include <vector>

#include "roomfill/modules.hpp"
#include "roomfill/ops.hpp"

namespace roomfill::nn {

// Produces the feature stack used by the perceptual and style losses.
template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  // Returns tape ids of the feature maps for input id x.
  virtual std::vector<int> features(ad::Tape<T>& t, int x) const = 0;
};

// Passes the image through unchanged; collapses the perceptual loss to plain
// mean absolute error, which makes loss arithmetic directly checkable.
template <typename T>
class IdentityExtractor : public FeatureExtractor<T> {
 public:
  std::vector<int> features(ad::Tape<T>& t, int x) const override {
    (void)t;
    return {x};
  }
};

// Frozen four-stage strided conv pyramid with fixed random weights. The seed
// is a constant, independent of any training seed or model config, so every
// run and every variant measures features in the same space. Weights enter
// the tape as constants; gradients still flow to the input image.
template <typename T>
class RandomPyramidExtractor : public FeatureExtractor<T> {
 public:
  RandomPyramidExtractor() {
    Rng rng(derive_seed(0x726f6f6d66696c6cULL, "feature-pyramid"));
    int chans[5] = {3, 16, 32, 48, 64};
    for (int s = 0; s < 4; ++s) {
      w_[s] = Tensor<T>({chans[s + 1], chans[s], 4, 4});
      b_[s] = Tensor<T>({chans[s + 1]});
      InitSpec spec;
      init_conv_weight(w_[s], rng, spec);
      for (std::int64_t i = 0; i < b_[s].numel(); ++i)
        b_[s][i] = T(rng.normal() * 0.1);
    }
  }

  std::vector<int> features(ad::Tape<T>& t, int x) const override {
    std::vector<int> out;
    int h = x;
    for (int s = 0; s < 4; ++s) {
      int wid = t.constant(w_[s]);
      int bid = t.constant(b_[s]);
      h = ad::leaky_relu(t, ad::conv2d(t, h, wid, bid, 2, 1, 1, 1), 0.2);
      out.push_back(h);
    }
    return out;
  }

 private:
  Tensor<T> w_[4];
  Tensor<T> b_[4];
};

}  // namespace roomfill::nn
