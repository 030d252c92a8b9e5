#pragma once

#include <memory>
#include <string>
#include <vector>

#include "roomfill/common.hpp"
#include "roomfill/dataset.hpp"
#include "roomfill/layout.hpp"
#include "roomfill/rng.hpp"

namespace roomfill {

// Source of layout estimates at train and inference time. Implementations are
// deterministic: the same sample always yields the same layout.
class LayoutProvider {
 public:
  virtual ~LayoutProvider() = default;
  virtual CornerLayout get(const Sample& s) const = 0;
};

// Ground-truth layouts straight from the dataset.
class OracleLayoutProvider : public LayoutProvider {
 public:
  CornerLayout get(const Sample& s) const override { return s.layout; }
};

// A fixed layout loaded from disk, for single-image inference.
class FileLayoutProvider : public LayoutProvider {
 public:
  explicit FileLayoutProvider(const std::string& path)
      : layout_(load_layout(path)) {}
  explicit FileLayoutProvider(CornerLayout layout) : layout_(std::move(layout)) {}

  CornerLayout get(const Sample& s) const override {
    RF_CHECK(layout_.W == s.image.shape()[2] && layout_.H == s.image.shape()[1],
             InconsistentLayoutError, "layout is ", layout_.W, "x", layout_.H,
             " but the image is ", s.image.shape()[2], "x", s.image.shape()[1]);
    return layout_;
  }

 private:
  CornerLayout layout_;
};

// Occludes random column spans totalling round(ratio*W) columns and bridges
// each span by linear interpolation between the bordering visible columns.
// Corner columns swallowed by a span are dropped; interpolated rows stay
// inside the [min,max] range of the span endpoints by construction.
inline CornerLayout degrade_layout(const CornerLayout& layout, double ratio,
                                   Rng& rng) {
  RF_CHECK(ratio >= 0.0 && ratio < 1.0, ConfigError,
           "degradation ratio must lie in [0,1), got ", ratio);
  CornerLayout out = layout;
  const int W = layout.W;
  int target = int(std::lround(ratio * W));
  target = std::min(target, W - 1);
  if (target <= 0) return out;

  std::vector<char> occluded(std::size_t(W), 0);
  int count = 0;
  const int max_len = std::max(2, W / 8);
  int guard = 0;
  while (count < target && ++guard < 100000) {
    int start = int(rng.uniform_index(std::size_t(W)));
    int len = 2 + int(rng.uniform_index(std::size_t(max_len)));
    for (int i = 0; i < len && count < target; ++i) {
      int u = (start + i) % W;
      if (!occluded[std::size_t(u)]) {
        occluded[std::size_t(u)] = 1;
        ++count;
      }
    }
  }
  RF_CHECK(count == target, NumericalError, "span sampling failed to converge");

  // Maximal occluded runs with wrap-around; anchors are visible neighbors.
  std::vector<char> seen(std::size_t(W), 0);
  for (int u = 0; u < W; ++u) {
    if (!occluded[std::size_t(u)] || seen[std::size_t(u)]) continue;
    int start = u;
    while (occluded[std::size_t((start - 1 + W) % W)] && (start - 1 + W) % W != u)
      start = (start - 1 + W) % W;
    int len = 0;
    while (occluded[std::size_t((start + len) % W)] && len < W) ++len;
    for (int i = 0; i < len; ++i) seen[std::size_t((start + i) % W)] = 1;
    int la = (start - 1 + W) % W;
    int ra = (start + len) % W;
    for (int i = 1; i <= len; ++i) {
      double t = double(i) / double(len + 1);
      int col = (start + i - 1) % W;
      out.ceiling_row[std::size_t(col)] =
          (1.0 - t) * layout.ceiling_row[std::size_t(la)] +
          t * layout.ceiling_row[std::size_t(ra)];
      out.floor_row[std::size_t(col)] =
          (1.0 - t) * layout.floor_row[std::size_t(la)] +
          t * layout.floor_row[std::size_t(ra)];
    }
  }
  std::vector<int> corners;
  for (int u : out.corner_columns)
    if (!occluded[std::size_t(u)]) corners.push_back(u);
  out.corner_columns = std::move(corners);
  out.validate(layout.H);
  return out;
}

// Oracle layouts degraded with a per-sample seed, so repeated lookups agree.
class DegradedLayoutProvider : public LayoutProvider {
 public:
  DegradedLayoutProvider(double ratio, std::uint64_t seed)
      : ratio_(ratio), seed_(seed) {}

  CornerLayout get(const Sample& s) const override {
    if (ratio_ <= 0.0) return s.layout;
    Rng rng(derive_seed(seed_, "degrade-layout", s.seed));
    return degrade_layout(s.layout, ratio_, rng);
  }

  double ratio() const { return ratio_; }

 private:
  double ratio_;
  std::uint64_t seed_;
};

// Mean three-class mIOU of degraded layouts against the oracle over a scene
// set; ratio 0 must come back as exactly 1.
inline double mean_degraded_miou(const std::vector<Sample>& scenes, double ratio,
                                 std::uint64_t seed) {
  RF_CHECK(!scenes.empty(), ConfigError, "need at least one scene");
  DegradedLayoutProvider provider(ratio, seed);
  double acc = 0.0;
  for (const Sample& s : scenes) {
    const int H = s.image.shape()[1];
    LabelMap oracle = derive_three_class(s.layout, H);
    LabelMap degraded = derive_three_class(provider.get(s), H);
    acc += layout_miou(degraded, oracle);
  }
  return acc / double(scenes.size());
}

}  // namespace roomfill
