#pragma once

#include <array>
#include <cmath>
#include <deque>
#include <numbers>
#include <vector>

#include "roomfill/layout.hpp"
#include "roomfill/rng.hpp"
#include "roomfill/tensor.hpp"

// Procedural panorama rendering and mask generation.
namespace roomfill {

enum class TextureKind { kFlat, kStripes, kChecker };

// Pattern cells are measured in centimeter texels on the plane, so `scale`
// of e.g. 20 means 20 cm stripes or checker squares.
struct PlaneStyle {
  std::array<float, 3> base_color = {0.5f, 0.5f, 0.5f};
  TextureKind texture = TextureKind::kFlat;
  double scale = 16.0;
  std::array<float, 3> secondary_color = {0.25f, 0.25f, 0.25f};

  void validate() const {
    for (float c : base_color)
      RF_CHECK(c >= 0.0f && c <= 1.0f, ConfigError, "style color out of [0,1]");
    for (float c : secondary_color)
      RF_CHECK(c >= 0.0f && c <= 1.0f, ConfigError, "style color out of [0,1]");
    RF_CHECK(scale >= 2.0, ConfigError, "style scale must be >= 2, got ", scale);
  }
};

namespace detail {

inline long long cell_index(double planar_meters, double scale_cm) {
  return (long long)(std::floor(planar_meters * 100.0 / scale_cm));
}

inline std::array<float, 3> eval_style(const PlaneStyle& s, double a, double b) {
  switch (s.texture) {
    case TextureKind::kFlat:
      return s.base_color;
    case TextureKind::kStripes:
      return (cell_index(a, s.scale) & 1) ? s.secondary_color : s.base_color;
    case TextureKind::kChecker:
      return ((cell_index(a, s.scale) + cell_index(b, s.scale)) & 1)
                 ? s.secondary_color
                 : s.base_color;
  }
  return s.base_color;
}

}  // namespace detail

// Flat-shaded equirectangular render. Every pixel takes the style of the
// plane its label-map entry names, evaluated at the 3D intersection point's
// in-plane coordinates (absolute world meters). Optional uniform pixel noise
// is driven by `seed`; at amplitude 0 the output is independent of the seed.
inline TensorF render_panorama(const RoomModel& room,
                               const std::vector<PlaneStyle>& styles, int H, int W,
                               std::uint64_t seed, double noise_amplitude = 0.0) {
  CornerLayout layout = boundary_rows(room, H, W);
  LabelMap l3 = derive_three_class(layout, H);
  LabelMap pw = derive_plane_wise(l3, layout);
  const int planes = kPlaneWallBase + wall_plane_count(layout);
  RF_CHECK(int(styles.size()) >= planes, ConfigError, "need ", planes,
           " plane styles, got ", styles.size());
  for (const auto& s : styles) s.validate();

  TensorF img({3, H, W});
  std::vector<double> wall_dist(W);
  std::vector<int> wall_edge(W);
  for (int u = 0; u < W; ++u)
    wall_dist[u] = cast_wall_distance(room, column_longitude(u, W), &wall_edge[u]);

  const double cam_h = room.camera_height;
  const double clearance = room.ceiling_height - room.camera_height;
  for (int r = 0; r < H; ++r) {
    double phi = (0.5 - (double(r) + 0.5) / double(H)) * std::numbers::pi;
    double tan_phi = std::tan(phi);
    for (int u = 0; u < W; ++u) {
      double theta = column_longitude(u, W);
      double dir_x = std::cos(theta), dir_y = std::sin(theta);
      int32_t id = pw(r, u);
      double a, b;
      if (id == kPlaneCeiling) {
        double dh = clearance / std::max(tan_phi, 1e-9);
        a = room.camera_xy.x + dh * dir_x;
        b = room.camera_xy.y + dh * dir_y;
      } else if (id == kPlaneFloor) {
        double dh = cam_h / std::max(-tan_phi, 1e-9);
        a = room.camera_xy.x + dh * dir_x;
        b = room.camera_xy.y + dh * dir_y;
      } else {
        double d = wall_dist[u];
        const Vec2& e0 = room.plan_vertices[wall_edge[u]];
        const Vec2& e1 =
            room.plan_vertices[(wall_edge[u] + 1) % room.plan_vertices.size()];
        double hx = room.camera_xy.x + d * dir_x;
        double hy = room.camera_xy.y + d * dir_y;
        a = (e0.x == e1.x) ? hy : hx;  // arclength along the wall
        b = std::clamp(cam_h + d * tan_phi, 0.0, room.ceiling_height);
      }
      std::array<float, 3> c = detail::eval_style(styles[id], a, b);
      for (int k = 0; k < 3; ++k) img(k, r, u) = c[k];
    }
  }

  if (noise_amplitude > 0.0) {
    Rng rng(derive_seed(seed, "render-noise"));
    for (std::size_t i = 0; i < img.numel(); ++i) {
      float v = img.data()[i] + float(noise_amplitude * (2.0 * rng.uniform() - 1.0));
      img.data()[i] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return img;
}

// Samples a room with enough camera-to-wall clearance that boundary-line
// slopes stay below one pixel per column on 2:1 panoramas; this keeps the
// rendered boundary map leak-free for flood fill.
inline RoomModel random_room(Rng& rng) {
  RoomModel room;
  room.camera_height = rng.uniform(1.2, 1.8);
  room.ceiling_height = room.camera_height + rng.uniform(1.0, 1.6);
  double margin =
      1.2 * std::max(room.camera_height, room.ceiling_height - room.camera_height);
  double w = rng.uniform(8.0, 14.0);
  double d = rng.uniform(8.0, 14.0);
  if (rng.uniform() < 0.5) {
    room.plan_vertices = {{0, 0}, {w, 0}, {w, d}, {0, d}};
    room.camera_xy = {rng.uniform(margin, w - margin), rng.uniform(margin, d - margin)};
  } else {
    double nx = rng.uniform(0.2, 0.3) * w;
    double ny = rng.uniform(0.2, 0.3) * d;
    room.plan_vertices = {{0, 0},           {w, 0},      {w, d - ny},
                          {w - nx, d - ny}, {w - nx, d}, {0, d}};
    room.camera_xy = {rng.uniform(margin, w - nx - margin),
                      rng.uniform(margin, d - ny - margin)};
  }
  room.validate();
  return room;
}

inline std::array<float, 3> random_color(Rng& rng) {
  return {float(rng.uniform(0.1, 0.9)), float(rng.uniform(0.1, 0.9)),
          float(rng.uniform(0.1, 0.9))};
}

inline std::vector<PlaneStyle> random_styles(Rng& rng, int plane_count) {
  std::vector<PlaneStyle> styles(plane_count);
  for (auto& s : styles) {
    s.base_color = random_color(rng);
    double t = rng.uniform();
    s.texture = t < 0.5 ? TextureKind::kFlat
                        : (t < 0.75 ? TextureKind::kStripes : TextureKind::kChecker);
    // Patterns read as tinted variations of the base color at a coarse cell
    // size; full-contrast cells near the texel limit alias into speckle that
    // carries no usable structure at desk resolutions.
    std::array<float, 3> other = random_color(rng);
    float mix = float(rng.uniform(0.05, 0.15));
    for (int c = 0; c < 3; ++c)
      s.secondary_color[std::size_t(c)] =
          s.base_color[std::size_t(c)] +
          mix * (other[std::size_t(c)] - s.base_color[std::size_t(c)]);
    s.scale = rng.uniform(20.0, 60.0);
  }
  return styles;
}

// One axis-aligned rectangle of area within +-0.5% (absolute, of the image
// area) of ratio*H*W, uniformly placed, fully inside the image. Value 1
// marks the hole.
inline TensorF random_rect_mask(double ratio, int H, int W, Rng& rng) {
  RF_CHECK(ratio > 0.0 && ratio < 1.0, ConfigError, "mask ratio must be in (0,1)");
  const double image_area = double(H) * double(W);
  const double target = ratio * image_area;
  int rh = 0, rw = 0;
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    double aspect = std::exp(rng.uniform(-0.7, 0.7));
    rh = std::clamp(int(std::lround(std::sqrt(std::max(target, 1.0) * aspect))), 1, H);
    rw = std::clamp(int(std::lround(std::max(target, 1.0) / rh)), 1, W);
    ok = std::abs(double(rh) * rw - target) / image_area <= 0.005;
  }
  RF_CHECK(ok, ConfigError, "cannot fit a ", ratio, " rectangle into ", H, "x", W);
  TensorF mask({1, H, W}, 0.0f);
  int top = int(rng.uniform_int(std::uint64_t(H - rh + 1)));
  int left = int(rng.uniform_int(std::uint64_t(W - rw + 1)));
  for (int r = top; r < top + rh; ++r)
    for (int u = left; u < left + rw; ++u) mask(0, r, u) = 1.0f;
  return mask;
}

namespace detail {

// Fills a star-convex polygon given in polar form around (cx, cy); the exact
// polar radius of the chord between consecutive vertices decides insideness.
inline TensorF rasterize_star(const std::vector<double>& angles,
                              const std::vector<double>& radii, double cx, double cy,
                              int H, int W) {
  const int n = int(angles.size());
  TensorF mask({1, H, W}, 0.0f);
  for (int r = 0; r < H; ++r) {
    for (int u = 0; u < W; ++u) {
      double px = u + 0.5 - cx, py = r + 0.5 - cy;
      double rho = std::hypot(px, py);
      if (rho < 1e-9) {
        mask(0, r, u) = 1.0f;
        continue;
      }
      double alpha = std::atan2(py, px);
      // Wedge containing alpha (angles sorted ascending in (-pi, pi]).
      int hi = int(std::lower_bound(angles.begin(), angles.end(), alpha) -
                   angles.begin());
      int i0 = (hi + n - 1) % n, i1 = hi % n;
      double a0 = angles[i0], a1 = angles[i1];
      double d01 = a1 - a0, d0 = alpha - a0;
      if (d01 <= 0) d01 += 2.0 * std::numbers::pi;
      if (d0 < 0) d0 += 2.0 * std::numbers::pi;
      double r0 = radii[i0], r1 = radii[i1];
      double denom = r1 * std::sin(d01 - d0) + r0 * std::sin(d0);
      double edge_r = (denom <= 1e-12) ? 0.0 : r0 * r1 * std::sin(d01) / denom;
      if (rho <= edge_r) mask(0, r, u) = 1.0f;
    }
  }
  return mask;
}

inline long long mask_area(const TensorF& mask) {
  long long area = 0;
  for (std::size_t i = 0; i < mask.numel(); ++i)
    if (mask.data()[i] > 0.5f) ++area;
  return area;
}

inline bool single_component(const TensorF& mask) {
  int H = mask.shape()[1], W = mask.shape()[2];
  long long total = mask_area(mask);
  if (total == 0) return false;
  // BFS from any set pixel, plain 4-connectivity (no panorama wrap: masks
  // are screen-space holes).
  std::vector<char> seen(std::size_t(H) * W, 0);
  std::deque<std::pair<int, int>> queue;
  for (int r = 0; r < H && queue.empty(); ++r)
    for (int u = 0; u < W && queue.empty(); ++u)
      if (mask(0, r, u) > 0.5f) {
        queue.emplace_back(r, u);
        seen[std::size_t(r) * W + u] = 1;
      }
  long long reached = 0;
  while (!queue.empty()) {
    auto [r, u] = queue.front();
    queue.pop_front();
    ++reached;
    const int nr[4] = {r - 1, r + 1, r, r};
    const int nu[4] = {u, u, u + 1, u - 1};
    for (int k = 0; k < 4; ++k) {
      if (nr[k] < 0 || nr[k] >= H || nu[k] < 0 || nu[k] >= W) continue;
      if (mask(0, nr[k], nu[k]) > 0.5f && !seen[std::size_t(nr[k]) * W + nu[k]]) {
        seen[std::size_t(nr[k]) * W + nu[k]] = 1;
        queue.emplace_back(nr[k], nu[k]);
      }
    }
  }
  return reached == total;
}

}  // namespace detail

struct PolygonMask {
  TensorF mask;           // (1,H,W), value 1 inside the hole
  double realized_ratio;  // set-pixel count / image area
};

// Random star-convex polygon hole with realized area within +-20% (relative)
// of the target. Retries with a rescaled radius; degenerate draws (clipped
// away, disconnected after pixelization) are resampled.
inline PolygonMask polygon_mask(int n_vertices, double area_ratio, int H, int W,
                                Rng& rng) {
  RF_CHECK(n_vertices >= 3, ConfigError, "polygon needs >= 3 vertices");
  RF_CHECK(area_ratio > 0.0 && area_ratio < 1.0, ConfigError,
           "area ratio must be in (0,1)");
  const double image_area = double(H) * double(W);
  const double target = std::max(area_ratio * image_area, 4.0);

  for (int attempt = 0; attempt < 40; ++attempt) {
    double cx = rng.uniform(0.2 * W, 0.8 * W);
    double cy = rng.uniform(0.2 * H, 0.8 * H);
    std::vector<double> angles(n_vertices), units(n_vertices);
    // Jitter bounds keep every angular gap below pi, so the polygon stays
    // star-convex about its own center.
    double jlo = n_vertices <= 4 ? 0.3 : 0.05;
    for (int i = 0; i < n_vertices; ++i) {
      double base = -std::numbers::pi + 2.0 * std::numbers::pi * i / n_vertices;
      angles[i] =
          base + rng.uniform(jlo, 1.0 - jlo) * 2.0 * std::numbers::pi / n_vertices;
      units[i] = rng.uniform(0.55, 1.0);
    }
    double R = std::max(std::sqrt(target / 1.8), 2.5);
    for (int rescale = 0; rescale < 6; ++rescale) {
      std::vector<double> radii(n_vertices);
      for (int i = 0; i < n_vertices; ++i) radii[i] = R * units[i];
      TensorF mask = detail::rasterize_star(angles, radii, cx, cy, H, W);
      long long area = detail::mask_area(mask);
      if (area >= 1 &&
          std::abs(double(area) - area_ratio * image_area) / (area_ratio * image_area) <=
              0.2 &&
          detail::single_component(mask)) {
        return PolygonMask{std::move(mask), double(area) / image_area};
      }
      if (area < 1) break;
      R *= std::sqrt(target / double(area));
      if (R > std::max(H, W)) break;
    }
  }
  throw ConfigError(strcat_msg("polygon mask did not converge for ratio ", area_ratio,
                               " at ", H, "x", W));
}

// I_in = I_gt * (1 - M), channels broadcast; masked pixels become exactly 0.
inline TensorF apply_mask(const TensorF& image, const TensorF& mask) {
  RF_CHECK_SHAPE(image.dim() == 3 && mask.dim() == 3 && mask.shape()[0] == 1 &&
                     image.shape()[1] == mask.shape()[1] &&
                     image.shape()[2] == mask.shape()[2],
                 "apply_mask shapes: image ", shape_str(image.shape()), " mask ",
                 shape_str(mask.shape()));
  int C = image.shape()[0], H = image.shape()[1], W = image.shape()[2];
  TensorF out({C, H, W});
  for (int r = 0; r < H; ++r)
    for (int u = 0; u < W; ++u) {
      float m = mask(0, r, u);
      RF_CHECK(m == 0.0f || m == 1.0f, ShapeError, "mask must be binary, got ", m);
      for (int c = 0; c < C; ++c) out(c, r, u) = m == 1.0f ? 0.0f : image(c, r, u);
    }
  return out;
}

}  // namespace roomfill
