#pragma once

#include <vector>

#include "roomfill/feature_extractor.hpp"
#include "roomfill/ops.hpp"
#include "roomfill/tape.hpp"

namespace roomfill::nn {

struct LossWeights {
  double rec = 1.0;
  double perc = 0.1;
  double style = 250.0;
  double adv_g = 0.1;
  double adv_d = 0.5;
};

// Mean absolute error over the hole region (mask 1 inside holes, averaged
// over all pixels) plus mean absolute error over the whole image.
template <typename T>
int reconstruction_loss(ad::Tape<T>& t, int out, int gt, const Tensor<T>& mask) {
  int diff = ad::abs_op(t, ad::sub(t, gt, out));
  int hole = ad::mean_all(t, ad::mul_map(t, diff, mask));
  int full = ad::mean_all(t, diff);
  return ad::add(t, hole, full);
}

// Sum over feature scales of the mean absolute feature difference.
template <typename T>
int perceptual_loss(ad::Tape<T>& t, const FeatureExtractor<T>& ex, int out,
                    int gt) {
  std::vector<int> fo = ex.features(t, out);
  std::vector<int> fg = ex.features(t, gt);
  int total = -1;
  for (std::size_t i = 0; i < fo.size(); ++i) {
    int term = ad::mean_all(t, ad::abs_op(t, ad::sub(t, fo[i], fg[i])));
    total = total < 0 ? term : ad::add(t, total, term);
  }
  return total;
}

// Sum over feature scales of the mean absolute difference of channel gram
// matrices (each normalized by C*H*W).
template <typename T>
int style_loss(ad::Tape<T>& t, const FeatureExtractor<T>& ex, int out, int gt) {
  std::vector<int> fo = ex.features(t, out);
  std::vector<int> fg = ex.features(t, gt);
  int total = -1;
  for (std::size_t i = 0; i < fo.size(); ++i) {
    int term = ad::mean_all(
        t, ad::abs_op(t, ad::sub(t, ad::gram(t, fo[i]), ad::gram(t, fg[i]))));
    total = total < 0 ? term : ad::add(t, total, term);
  }
  return total;
}

// Hinge generator term: -mean D(fake).
template <typename T>
int generator_adversarial_loss(ad::Tape<T>& t, int d_fake) {
  return ad::mul_const(t, ad::mean_all(t, d_fake), -1.0);
}

// Hinge discriminator objective, scaled by its loss weight:
// lambda_d * (mean relu(1 + D(fake)) + mean relu(1 - D(real))).
template <typename T>
int discriminator_loss(ad::Tape<T>& t, int d_fake, int d_real, double lambda_d) {
  int lf = ad::mean_all(t, ad::relu(t, ad::add_const(t, d_fake, 1.0)));
  int lr = ad::mean_all(
      t, ad::relu(t, ad::add_const(t, ad::mul_const(t, d_real, -1.0), 1.0)));
  return ad::mul_const(t, ad::add(t, lf, lr), lambda_d);
}

template <typename T>
struct GeneratorLossIds {
  int rec = -1;
  int perc = -1;
  int style = -1;
  int adv = -1;
  int total = -1;
};

// Full generator objective. Features are extracted once and shared between
// the perceptual and style terms. d_fake may be -1 to drop the adversarial
// term (plain reconstruction training).
template <typename T>
GeneratorLossIds<T> generator_total_loss(ad::Tape<T>& t,
                                         const FeatureExtractor<T>& ex, int out,
                                         int gt, const Tensor<T>& mask,
                                         int d_fake, const LossWeights& w) {
  GeneratorLossIds<T> ids;
  ids.rec = reconstruction_loss(t, out, gt, mask);
  std::vector<int> fo = ex.features(t, out);
  std::vector<int> fg = ex.features(t, gt);
  for (std::size_t i = 0; i < fo.size(); ++i) {
    int diff = ad::mean_all(t, ad::abs_op(t, ad::sub(t, fo[i], fg[i])));
    ids.perc = ids.perc < 0 ? diff : ad::add(t, ids.perc, diff);
    int gdiff = ad::mean_all(
        t, ad::abs_op(t, ad::sub(t, ad::gram(t, fo[i]), ad::gram(t, fg[i]))));
    ids.style = ids.style < 0 ? gdiff : ad::add(t, ids.style, gdiff);
  }
  ids.total = ad::add(t, ad::mul_const(t, ids.rec, w.rec),
                      ad::add(t, ad::mul_const(t, ids.perc, w.perc),
                              ad::mul_const(t, ids.style, w.style)));
  if (d_fake >= 0) {
    ids.adv = generator_adversarial_loss(t, d_fake);
    ids.total = ad::add(t, ids.total, ad::mul_const(t, ids.adv, w.adv_g));
  }
  return ids;
}

}  // namespace roomfill::nn
