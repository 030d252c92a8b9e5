#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "roomfill/ops.hpp"
#include "roomfill/rng.hpp"
#include "roomfill/tape.hpp"
#include "roomfill/tensor.hpp"

// Trainable building blocks. Parameters live in the modules; each forward
// pass binds them onto a tape as leaves (or constants, for a frozen pass)
// and gradients are copied back out after backward.
namespace roomfill::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  int id = -1;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> shape)
      : name(std::move(n)), value(std::move(shape)), grad(value.shape()) {}

  void bind(ad::Tape<T>& t, bool trainable) {
    id = trainable ? t.leaf(value) : t.constant(value);
  }

  void read_grad(ad::Tape<T>& t) {
    RF_CHECK(id >= 0, ShapeError, "parameter ", name, " not bound");
    if (t.has_grad(id)) {
      grad = t.grad(id);
    } else {
      grad = Tensor<T>(value.shape());
    }
  }
};

template <typename T>
void bind_all(std::vector<Parameter<T>*>& ps, ad::Tape<T>& t, bool trainable) {
  for (auto* p : ps) p->bind(t, trainable);
}

template <typename T>
void read_all_grads(std::vector<Parameter<T>*>& ps, ad::Tape<T>& t) {
  for (auto* p : ps) p->read_grad(t);
}

// Weight init: Kaiming-style scale on fan-in unless a fixed std is given.
struct InitSpec {
  double he_scale = 1.0;   // multiplier on sqrt(2/fan_in)
  double fixed_std = -1.0; // if >= 0, use this std instead
  double bias_value = 0.0;
};

template <typename T>
void init_conv_weight(Tensor<T>& w, Rng& rng, const InitSpec& spec) {
  double fan_in = double(w.numel()) / double(w.shape()[0]);
  double std = spec.fixed_std >= 0.0 ? spec.fixed_std
                                     : spec.he_scale * std::sqrt(2.0 / fan_in);
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = T(rng.normal() * std);
}

template <typename T>
class Conv2d {
 public:
  Conv2d(const std::string& name, int in_c, int out_c, int k, int stride,
         int pad, int dil, Rng& rng, InitSpec spec = {})
      : w(name + ".w", {out_c, in_c, k, k}),
        b(name + ".b", {out_c}),
        stride_(stride),
        pad_(pad),
        dil_(dil) {
    init_conv_weight(w.value, rng, spec);
    b.value.fill(T(spec.bias_value));
  }

  int forward(ad::Tape<T>& t, int x) const {
    return ad::conv2d(t, x, w.id, b.id, stride_, pad_, pad_, dil_);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }

  Parameter<T> w, b;

 private:
  int stride_, pad_, dil_;
};

// Convolution whose weight is divided by a power-iteration estimate of its
// top singular value. The u vector persists across steps and is part of the
// training state.
template <typename T>
class SpectralConv2d {
 public:
  SpectralConv2d(const std::string& name, int in_c, int out_c, int k,
                 int stride, int pad, Rng& rng, InitSpec spec = {})
      : w(name + ".w", {out_c, in_c, k, k}),
        b(name + ".b", {out_c}),
        u(std::size_t(out_c)),
        stride_(stride),
        pad_(pad) {
    init_conv_weight(w.value, rng, spec);
    b.value.fill(T(spec.bias_value));
    double n = 0.0;
    for (auto& v : u) {
      v = T(rng.normal());
      n += double(v) * double(v);
    }
    n = std::sqrt(n);
    for (auto& v : u) v = T(double(v) / n);
  }

  int forward(ad::Tape<T>& t, int x) const {
    int wn = ad::spectral_normalize(t, w.id, u);
    return ad::conv2d(t, x, wn, b.id, stride_, pad_, pad_, 1);
  }

  void power_iterate() { ad::spectral_power_iterate(w.value, u); }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }

  void collect_state(std::vector<std::vector<T>*>& out) { out.push_back(&u); }

  Parameter<T> w, b;
  std::vector<T> u;

 private:
  int stride_, pad_;
};

// Mask-aware convolution. Only valid pixels enter the weighted sum, which is
// rescaled by in-image-taps / valid-taps; windows with no valid pixel output
// zero. With a fully valid mask this is exactly a standard convolution.
template <typename T>
class PartialConv {
 public:
  PartialConv(const std::string& name, int in_c, int out_c, int k, int stride,
              int pad, Rng& rng, InitSpec spec = {})
      : w(name + ".w", {out_c, in_c, k, k}),
        b(name + ".b", {out_c}),
        k_(k),
        stride_(stride),
        pad_(pad) {
    init_conv_weight(w.value, rng, spec);
    b.value.fill(T(spec.bias_value));
  }

  struct Out {
    int y;
    Tensor<T> mask;  // 1 where any valid pixel fell in the window
  };

  Out forward(ad::Tape<T>& t, int x, const Tensor<T>& valid) const {
    const Tensor<T>& xv = t.val(x);
    int n = xv.shape()[0], h = xv.shape()[2], wd = xv.shape()[3];
    Tensor<T> count = ad::window_sum(valid, k_, k_, pad_, pad_, stride_, 1);
    Tensor<T> taps = ad::tap_count<T>(n, h, wd, k_, k_, pad_, pad_, stride_, 1);
    Tensor<T> scale(count.shape());
    Tensor<T> gate(count.shape());
    for (std::int64_t i = 0; i < count.numel(); ++i) {
      if (count[i] > T(0)) {
        scale[i] = taps[i] / count[i];
        gate[i] = T(1);
      } else {
        scale[i] = T(0);
        gate[i] = T(0);
      }
    }
    int xm = ad::mul_map(t, x, valid);
    int y0 = ad::conv2d(t, xm, w.id, -1, stride_, pad_, pad_, 1);
    int y1 = ad::mul_map(t, y0, scale);
    int y = ad::bias_gate(t, y1, b.id, gate);
    return {y, std::move(gate)};
  }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }

  Parameter<T> w, b;

 private:
  int k_, stride_, pad_;
};

// One-hot encode per-sample label maps into a (N, classes, h, w) tensor.
template <typename T>
Tensor<T> one_hot_labels(const std::vector<LabelMap>& labels, int classes) {
  RF_CHECK(!labels.empty(), ShapeError, "one_hot_labels: no label maps");
  int h = labels[0].shape()[0], w = labels[0].shape()[1];
  Tensor<T> out({int(labels.size()), classes, h, w});
  for (std::size_t n = 0; n < labels.size(); ++n) {
    RF_CHECK_SHAPE(labels[n].shape()[0] == h && labels[n].shape()[1] == w,
                   "one_hot_labels: inconsistent map shapes");
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        std::int32_t v = labels[n](i, j);
        RF_CHECK(v >= 0 && v < classes, ShapeError, "one_hot_labels: label ", v,
                 " outside [0,", classes, ")");
        out(int(n), int(v), i, j) = T(1);
      }
  }
  return out;
}

}  // namespace roomfill::nn
