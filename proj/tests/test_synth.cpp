#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <set>

#include "roomfill/synth.hpp"

using namespace roomfill;

namespace {

RoomModel demo_room() {
  RoomModel room;
  room.plan_vertices = {{0, 0}, {10, 0}, {10, 8}, {0, 8}};
  room.camera_xy = {4.5, 3.8};
  room.camera_height = 1.5;
  room.ceiling_height = 2.9;
  return room;
}

std::vector<PlaneStyle> flat_styles(int n, float value) {
  std::vector<PlaneStyle> styles(n);
  for (auto& s : styles) {
    s.base_color = {value, value, value};
    s.texture = TextureKind::kFlat;
  }
  return styles;
}

long long popcount(const TensorF& mask) {
  long long n = 0;
  for (std::size_t i = 0; i < mask.numel(); ++i)
    if (mask.data()[i] > 0.5f) ++n;
  return n;
}

// Independent connectivity oracle: count 4-connected components.
int component_count(const TensorF& mask) {
  int H = mask.shape()[1], W = mask.shape()[2];
  std::vector<char> seen(std::size_t(H) * W, 0);
  int components = 0;
  for (int r0 = 0; r0 < H; ++r0) {
    for (int u0 = 0; u0 < W; ++u0) {
      if (mask(0, r0, u0) < 0.5f || seen[std::size_t(r0) * W + u0]) continue;
      ++components;
      std::deque<std::pair<int, int>> queue{{r0, u0}};
      seen[std::size_t(r0) * W + u0] = 1;
      while (!queue.empty()) {
        auto [r, u] = queue.front();
        queue.pop_front();
        const int nr[4] = {r - 1, r + 1, r, r};
        const int nu[4] = {u, u, u + 1, u - 1};
        for (int k = 0; k < 4; ++k) {
          if (nr[k] < 0 || nr[k] >= H || nu[k] < 0 || nu[k] >= W) continue;
          std::size_t idx = std::size_t(nr[k]) * W + nu[k];
          if (mask(0, nr[k], nu[k]) > 0.5f && !seen[idx]) {
            seen[idx] = 1;
            queue.emplace_back(nr[k], nu[k]);
          }
        }
      }
    }
  }
  return components;
}

}  // namespace

TEST(RenderPanorama, FlatGrayIsConstant) {
  TensorF img = render_panorama(demo_room(), flat_styles(8, 0.5f), 64, 128, 1);
  for (std::size_t i = 0; i < img.numel(); ++i)
    ASSERT_EQ(img.data()[i], 0.5f);
}

TEST(RenderPanorama, ColorLookupMatchesPlaneWise) {
  RoomModel room = demo_room();
  int H = 64, W = 128;
  CornerLayout layout = boundary_rows(room, H, W);
  LabelMap pw = derive_plane_wise(derive_three_class(layout, H), layout);
  int planes = kPlaneWallBase + wall_plane_count(layout);
  std::vector<PlaneStyle> styles(planes);
  for (int i = 0; i < planes; ++i) {
    styles[i].texture = TextureKind::kFlat;
    styles[i].base_color = {float(i + 1) / float(planes + 1), 0.2f, 0.7f};
  }
  TensorF img = render_panorama(room, styles, H, W, 3);
  for (int r = 0; r < H; ++r) {
    for (int u = 0; u < W; ++u) {
      int found = -1;
      for (int i = 0; i < planes; ++i)
        if (img(0, r, u) == styles[i].base_color[0]) found = i;
      ASSERT_EQ(found, pw(r, u)) << "pixel " << r << "," << u;
    }
  }
}

TEST(RenderPanorama, DeterministicGivenSeed) {
  RoomModel room = demo_room();
  Rng style_rng(11);
  auto styles = random_styles(style_rng, 8);
  TensorF a = render_panorama(room, styles, 32, 64, 42, 0.05);
  TensorF b = render_panorama(room, styles, 32, 64, 42, 0.05);
  for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a.data()[i], b.data()[i]);

  TensorF c = render_panorama(room, styles, 32, 64, 43, 0.05);
  int diff = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != c.data()[i]) ++diff;
  EXPECT_GT(diff, 0);
}

TEST(RenderPanorama, MissingStyleThrows) {
  EXPECT_THROW(render_panorama(demo_room(), flat_styles(2, 0.5f), 32, 64, 1),
               ConfigError);
}

TEST(RenderPanorama, TexturedPatternsStayInRange) {
  Rng rng(77);
  for (int trial = 0; trial < 3; ++trial) {
    RoomModel room = random_room(rng);
    CornerLayout layout = boundary_rows(room, 32, 64);
    auto styles = random_styles(rng, kPlaneWallBase + wall_plane_count(layout));
    TensorF img = render_panorama(room, styles, 32, 64, trial, 0.02);
    EXPECT_TRUE(img.all_finite());
    EXPECT_GE(img.min_value(), 0.0f);
    EXPECT_LE(img.max_value(), 1.0f);
  }
}

TEST(RectMask, AreaWithinSpecBounds) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    TensorF mask = random_rect_mask(0.05, 256, 512, rng);
    long long area = popcount(mask);
    EXPECT_GE(area, 5898);
    EXPECT_LE(area, 7209);
    EXPECT_NEAR(double(area) / (256.0 * 512.0), 0.05, 0.005);
  }
}

TEST(RectMask, MonteCarloCalibration) {
  Rng rng(2);
  double sum_ratio = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    TensorF mask = random_rect_mask(0.10, 64, 128, rng);
    sum_ratio += double(popcount(mask)) / (64.0 * 128.0);
  }
  EXPECT_NEAR(sum_ratio / draws, 0.10, 0.005);
}

TEST(RectMask, SolidRectangleInsideImage) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    TensorF mask = random_rect_mask(0.2, 48, 96, rng);
    int rmin = 48, rmax = -1, umin = 96, umax = -1;
    for (int r = 0; r < 48; ++r)
      for (int u = 0; u < 96; ++u) {
        float v = mask(0, r, u);
        ASSERT_TRUE(v == 0.0f || v == 1.0f);
        if (v == 1.0f) {
          rmin = std::min(rmin, r);
          rmax = std::max(rmax, r);
          umin = std::min(umin, u);
          umax = std::max(umax, u);
        }
      }
    ASSERT_GE(rmax, rmin);
    // Solid: bounding box area equals the pixel count.
    EXPECT_EQ((long long)(rmax - rmin + 1) * (umax - umin + 1), popcount(mask));
  }
}

TEST(RectMask, TinyRatioGivesOnePixel) {
  Rng rng(4);
  TensorF mask = random_rect_mask(1e-5, 64, 64, rng);
  EXPECT_EQ(popcount(mask), 1);
}

TEST(RectMask, RejectsBadRatio) {
  Rng rng(5);
  EXPECT_THROW(random_rect_mask(0.0, 32, 32, rng), ConfigError);
  EXPECT_THROW(random_rect_mask(1.0, 32, 32, rng), ConfigError);
  EXPECT_THROW(random_rect_mask(-0.1, 32, 32, rng), ConfigError);
}

TEST(PolygonMask, MonteCarloToleranceAndConnectivity) {
  Rng rng(6);
  const int draws = 1000;
  for (int i = 0; i < draws; ++i) {
    PolygonMask pm = polygon_mask(8, 0.10, 64, 128, rng);
    long long area = popcount(pm.mask);
    EXPECT_DOUBLE_EQ(pm.realized_ratio, double(area) / (64.0 * 128.0));
    EXPECT_NEAR(pm.realized_ratio, 0.10, 0.02 + 1e-12);
    ASSERT_EQ(component_count(pm.mask), 1) << "draw " << i;
  }
}

TEST(PolygonMask, SmallVertexCountsWork) {
  Rng rng(7);
  for (int n : {3, 4, 5}) {
    PolygonMask pm = polygon_mask(n, 0.08, 64, 128, rng);
    EXPECT_EQ(component_count(pm.mask), 1);
    EXPECT_NEAR(pm.realized_ratio, 0.08, 0.016 + 1e-12);
  }
  EXPECT_THROW(polygon_mask(2, 0.1, 64, 128, rng), ConfigError);
}

TEST(PolygonMask, PolarRasterizerMatchesRectangleFill) {
  // A rectangle expressed in polar form about its center must rasterize to
  // exactly the pixels whose centers lie inside it.
  double x0 = 20.25, x1 = 44.75, y0 = 10.25, y1 = 30.75;
  double cx = (x0 + x1) / 2, cy = (y0 + y1) / 2;
  std::vector<std::pair<double, double>> corners = {
      {x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  std::vector<double> angles, radii;
  std::vector<std::pair<double, double>> sorted = corners;
  std::sort(sorted.begin(), sorted.end(), [&](auto& a, auto& b) {
    return std::atan2(a.second - cy, a.first - cx) <
           std::atan2(b.second - cy, b.first - cx);
  });
  for (auto& [px, py] : sorted) {
    angles.push_back(std::atan2(py - cy, px - cx));
    radii.push_back(std::hypot(px - cx, py - cy));
  }
  TensorF mask = roomfill::detail::rasterize_star(angles, radii, cx, cy, 48, 64);
  for (int r = 0; r < 48; ++r)
    for (int u = 0; u < 64; ++u) {
      bool inside = (u + 0.5 > x0 && u + 0.5 < x1 && r + 0.5 > y0 && r + 0.5 < y1);
      ASSERT_EQ(mask(0, r, u) == 1.0f, inside) << r << "," << u;
    }
}

TEST(ApplyMask, IdentityAndAnnihilation) {
  Rng rng(8);
  TensorF img({3, 8, 16});
  for (std::size_t i = 0; i < img.numel(); ++i) img.data()[i] = float(rng.uniform());

  TensorF zeros({1, 8, 16}, 0.0f);
  TensorF in = apply_mask(img, zeros);
  for (std::size_t i = 0; i < img.numel(); ++i) ASSERT_EQ(in.data()[i], img.data()[i]);

  TensorF ones({1, 8, 16}, 1.0f);
  TensorF blank = apply_mask(img, ones);
  for (std::size_t i = 0; i < blank.numel(); ++i) ASSERT_EQ(blank.data()[i], 0.0f);
}

TEST(ApplyMask, CheckerboardPattern) {
  TensorF img({3, 8, 8}, 0.8f);
  TensorF mask({1, 8, 8});
  for (int r = 0; r < 8; ++r)
    for (int u = 0; u < 8; ++u) mask(0, r, u) = float((r + u) % 2);
  TensorF in = apply_mask(img, mask);
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 8; ++r)
      for (int u = 0; u < 8; ++u)
        ASSERT_EQ(in(c, r, u), (r + u) % 2 ? 0.0f : 0.8f);
}

TEST(ApplyMask, RejectsNonBinaryMask) {
  TensorF img({3, 4, 4}, 0.5f);
  TensorF mask({1, 4, 4}, 0.0f);
  mask(0, 1, 2) = 0.5f;
  EXPECT_THROW(apply_mask(img, mask), ShapeError);
  TensorF wrong({1, 4, 5}, 0.0f);
  EXPECT_THROW(apply_mask(img, wrong), ShapeError);
}

TEST(RandomRoom, AlwaysValidAndRenderable) {
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    RoomModel room = random_room(rng);
    ASSERT_NO_THROW(room.validate());
    CornerLayout layout = boundary_rows(room, 32, 64);
    ASSERT_NO_THROW(derive_three_class(layout, 32));
  }
}
