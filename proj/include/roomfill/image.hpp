#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "roomfill/png_io.hpp"
#include "roomfill/tensor.hpp"

// Conversions between float tensors (C,H,W in [0,1]) and 8-bit PNG files.
namespace roomfill {

inline std::uint8_t to_byte(float v) {
  float s = std::round(v * 255.0f);
  s = std::max(0.0f, std::min(255.0f, s));
  return std::uint8_t(s);
}

// Saves a (3,H,W) or (1,H,W) tensor; values clamped to [0,1].
inline void save_image(const std::string& path, const TensorF& img) {
  RF_CHECK_SHAPE(img.dim() == 3, "save_image expects (C,H,W), got ", shape_str(img.shape()));
  int c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
  RF_CHECK_SHAPE(c == 1 || c == 3, "save_image expects 1 or 3 channels, got ", c);
  std::vector<std::uint8_t> px(std::size_t(h) * w * c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k)
        px[(std::size_t(y) * w + x) * c + k] = to_byte(img(k, y, x));
  png::write_file(path, px.data(), w, h, c);
}

// Loads a PNG as (C,H,W) floats in [0,1].
inline TensorF load_image(const std::string& path) {
  png::Decoded d = png::read_file(path);
  TensorF img({d.channels, d.height, d.width});
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x)
      for (int k = 0; k < d.channels; ++k)
        img(k, y, x) =
            float(d.pixels[(std::size_t(y) * d.width + x) * d.channels + k]) / 255.0f;
  return img;
}

// Single-channel 0/255 mask <-> (1,H,W) float tensor with values in {0,1}.
inline void save_mask(const std::string& path, const TensorF& mask) {
  RF_CHECK_SHAPE(mask.dim() == 3 && mask.shape()[0] == 1,
                 "save_mask expects (1,H,W), got ", shape_str(mask.shape()));
  int h = mask.shape()[1], w = mask.shape()[2];
  std::vector<std::uint8_t> px(std::size_t(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      px[std::size_t(y) * w + x] = mask(0, y, x) > 0.5f ? 255 : 0;
  png::write_file(path, px.data(), w, h, 1);
}

inline TensorF load_mask(const std::string& path) {
  png::Decoded d = png::read_file(path);
  RF_CHECK(d.channels == 1, IoError, "mask must be single-channel: ", path);
  TensorF mask({1, d.height, d.width});
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x)
      mask(0, y, x) = d.pixels[std::size_t(y) * d.width + x] >= 128 ? 1.0f : 0.0f;
  return mask;
}

// Mean over channels, yielding (H,W); used by boundary-alignment probing.
inline TensorF to_gray(const TensorF& img) {
  RF_CHECK_SHAPE(img.dim() == 3, "to_gray expects (C,H,W)");
  int c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
  TensorF g({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int k = 0; k < c; ++k) s += img(k, y, x);
      g(y, x) = s / float(c);
    }
  return g;
}

}  // namespace roomfill
