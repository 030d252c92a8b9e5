#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "roomfill/image.hpp"
#include "roomfill/tensor.hpp"

// Manhattan room geometry and the derived guidance maps: boundary-line map,
// 3-class segmentation (ceiling/wall/floor) and plane-wise segmentation.
namespace roomfill {

inline constexpr int32_t kCeiling = 0;
inline constexpr int32_t kWall = 1;
inline constexpr int32_t kFloor = 2;

// Plane-wise label convention: 0 = ceiling, 1 = floor, 2+k = k-th wall arc.
inline constexpr int32_t kPlaneCeiling = 0;
inline constexpr int32_t kPlaneFloor = 1;
inline constexpr int32_t kPlaneWallBase = 2;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double cross2(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

// Axis-aligned simple polygon floor plan (CCW) with a panoramic camera.
// The camera must lie in the polygon kernel so that every wall is fully
// visible and corner columns delimit wall arcs; enforced by validate().
struct RoomModel {
  std::vector<Vec2> plan_vertices;
  Vec2 camera_xy;
  double camera_height = 1.6;
  double ceiling_height = 2.8;

  void validate() const;
};

inline void RoomModel::validate() const {
  const auto& v = plan_vertices;
  const std::size_t n = v.size();
  RF_CHECK(n >= 4 && n % 2 == 0, InvalidRoomError,
           "rectilinear polygon needs an even vertex count >= 4, got ", n);
  RF_CHECK(camera_height > 0.0 && ceiling_height > camera_height, InvalidRoomError,
           "need 0 < camera_height < ceiling_height, got ", camera_height, " / ",
           ceiling_height);

  // Edges alternate horizontal/vertical with nonzero length.
  double area2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = v[i];
    const Vec2& b = v[(i + 1) % n];
    bool horiz = a.y == b.y && a.x != b.x;
    bool vert = a.x == b.x && a.y != b.y;
    RF_CHECK(horiz || vert, InvalidRoomError, "edge ", i, " is not axis-aligned");
    const Vec2& c = v[(i + 2) % n];
    bool next_horiz = b.y == c.y;
    RF_CHECK(horiz != next_horiz, InvalidRoomError,
             "edges ", i, " and ", i + 1, " are collinear");
    area2 += a.x * b.y - b.x * a.y;
  }
  RF_CHECK(area2 > 0.0, InvalidRoomError, "vertices must be counter-clockwise");

  // Simplicity: non-adjacent axis-aligned edges must not intersect.
  auto overlap1d = [](double a0, double a1, double b0, double b1) {
    if (a0 > a1) std::swap(a0, a1);
    if (b0 > b1) std::swap(b0, b1);
    return a0 <= b1 && b0 <= a1;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      const Vec2 &a = v[i], &b = v[(i + 1) % n];
      const Vec2 &c = v[j], &d = v[(j + 1) % n];
      bool hit = overlap1d(a.x, b.x, c.x, d.x) && overlap1d(a.y, b.y, c.y, d.y);
      RF_CHECK(!hit, InvalidRoomError, "polygon self-intersects at edges ", i, "/", j);
    }
  }

  // Kernel membership: camera strictly left of every CCW edge. This implies
  // strict interiority and full visibility of every wall.
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = v[i];
    const Vec2& b = v[(i + 1) % n];
    Vec2 e{b.x - a.x, b.y - a.y};
    Vec2 r{camera_xy.x - a.x, camera_xy.y - a.y};
    RF_CHECK(cross2(e, r) > 0.0, InvalidRoomError,
             "camera must lie strictly inside the polygon kernel (edge ", i, ")");
  }
}

// Longitude of pixel column u (pixel centers), in (-pi, pi).
inline double column_longitude(int u, int W) {
  return 2.0 * std::numbers::pi * (double(u) + 0.5) / double(W) - std::numbers::pi;
}

// Row coordinate of latitude phi; phi=+pi/2 -> 0, phi=-pi/2 -> H.
inline double latitude_to_row(double phi, int H) {
  return (0.5 - phi / std::numbers::pi) * double(H);
}

// Horizontal distance from the camera to the nearest wall along direction
// theta (radians, measured in the floor plan). Optionally reports the index
// of the edge that was hit.
inline double cast_wall_distance(const RoomModel& room, double theta,
                                 int* edge_out = nullptr) {
  const double dx = std::cos(theta);
  const double dy = std::sin(theta);
  const auto& v = room.plan_vertices;
  const std::size_t n = v.size();
  double best = -1.0;
  int best_edge = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = v[i];
    const Vec2& b = v[(i + 1) % n];
    double t;
    double coord;
    if (a.x == b.x) {  // vertical wall x = a.x
      if (dx == 0.0) continue;
      t = (a.x - room.camera_xy.x) / dx;
      coord = room.camera_xy.y + t * dy;
      double lo = std::min(a.y, b.y), hi = std::max(a.y, b.y);
      if (coord < lo || coord > hi) continue;
    } else {  // horizontal wall y = a.y
      if (dy == 0.0) continue;
      t = (a.y - room.camera_xy.y) / dy;
      coord = room.camera_xy.x + t * dx;
      double lo = std::min(a.x, b.x), hi = std::max(a.x, b.x);
      if (coord < lo || coord > hi) continue;
    }
    if (t <= 1e-12) continue;
    if (best < 0.0 || t < best) {
      best = t;
      best_edge = int(i);
    }
  }
  RF_CHECK(best > 0.0, InvalidRoomError, "ray-cast miss at theta=", theta,
           " (camera outside polygon?)");
  if (edge_out) *edge_out = best_edge;
  return best;
}

// Per-column layout description. H is carried for serialization; operations
// take H explicitly and cross-check.
struct CornerLayout {
  int W = 0;
  int H = 0;
  std::vector<double> ceiling_row;
  std::vector<double> floor_row;
  std::vector<int> corner_columns;  // sorted, unique, in [0, W)

  void validate(int height) const {
    RF_CHECK(W > 0, InconsistentLayoutError, "layout width must be positive");
    RF_CHECK(H == height, InconsistentLayoutError, "layout height ", H,
             " does not match requested ", height);
    RF_CHECK(int(ceiling_row.size()) == W && int(floor_row.size()) == W,
             InconsistentLayoutError, "row arrays must have length W=", W);
    for (int u = 0; u < W; ++u) {
      RF_CHECK(ceiling_row[u] >= 0.0 && ceiling_row[u] < floor_row[u] &&
                   floor_row[u] < double(height),
               InconsistentLayoutError, "rows out of order at column ", u, ": ",
               ceiling_row[u], " / ", floor_row[u]);
    }
    for (std::size_t i = 0; i < corner_columns.size(); ++i) {
      RF_CHECK(corner_columns[i] >= 0 && corner_columns[i] < W,
               InconsistentLayoutError, "corner column out of range: ",
               corner_columns[i]);
      if (i > 0)
        RF_CHECK(corner_columns[i] > corner_columns[i - 1], InconsistentLayoutError,
                 "corner columns must be sorted and unique");
    }
  }
};

// Heights above/below the horizontal camera plane.
inline double rows_at(const RoomModel& room, int H, double theta, double* ceiling_out) {
  double d = cast_wall_distance(room, theta);
  double phi_floor = -std::atan(room.camera_height / d);
  double phi_ceil = std::atan((room.ceiling_height - room.camera_height) / d);
  if (ceiling_out) *ceiling_out = latitude_to_row(phi_ceil, H);
  return latitude_to_row(phi_floor, H);
}

inline CornerLayout boundary_rows(const RoomModel& room, int H, int W) {
  room.validate();
  RF_CHECK(H > 0 && W > 0, InconsistentLayoutError, "H and W must be positive");
  CornerLayout layout;
  layout.W = W;
  layout.H = H;
  layout.ceiling_row.resize(W);
  layout.floor_row.resize(W);
  for (int u = 0; u < W; ++u) {
    double c;
    double f = rows_at(room, H, column_longitude(u, W), &c);
    layout.ceiling_row[u] = c;
    layout.floor_row[u] = f;
  }
  std::set<int> cols;
  for (const Vec2& v : room.plan_vertices) {
    double theta = std::atan2(v.y - room.camera_xy.y, v.x - room.camera_xy.x);
    long u = std::lround((theta + std::numbers::pi) * double(W) /
                             (2.0 * std::numbers::pi) -
                         0.5);
    cols.insert(int(((u % W) + W) % W));
  }
  layout.corner_columns.assign(cols.begin(), cols.end());
  layout.validate(H);
  return layout;
}

inline int rounded_row(double row, int H, int column) {
  long r = std::lround(row);
  RF_CHECK(r >= 0 && r < H, InconsistentLayoutError, "boundary row ", row,
           " rounds outside [0,", H, ") at column ", column);
  return int(r);
}

// Binary boundary-line map: 1-px ceiling and floor polylines plus vertical
// corner segments.
inline TensorF render_boundary_map(const CornerLayout& layout, int H) {
  layout.validate(H);
  const int W = layout.W;
  TensorF lm({H, W}, 0.0f);
  for (int u = 0; u < W; ++u) {
    lm(rounded_row(layout.ceiling_row[u], H, u), u) = 1.0f;
    lm(rounded_row(layout.floor_row[u], H, u), u) = 1.0f;
  }
  for (int u : layout.corner_columns) {
    int rc = rounded_row(layout.ceiling_row[u], H, u);
    int rf = rounded_row(layout.floor_row[u], H, u);
    for (int r = rc; r <= rf; ++r) lm(r, u) = 1.0f;
  }
  return lm;
}

// Flood fill from the top and bottom image rows over the rendered boundary
// map; boundary pixels and the unreached remainder are WALL. Columns wrap at
// the panorama seam.
inline LabelMap derive_three_class(const CornerLayout& layout, int H) {
  TensorF lm = render_boundary_map(layout, H);
  const int W = layout.W;
  LabelMap out({H, W}, int32_t(-1));
  for (int r = 0; r < H; ++r)
    for (int u = 0; u < W; ++u)
      if (lm(r, u) > 0.5f) out(r, u) = kWall;

  auto fill = [&](int seed_row, int32_t label) {
    std::deque<std::pair<int, int>> queue;
    for (int u = 0; u < W; ++u) {
      if (out(seed_row, u) == -1) {
        out(seed_row, u) = label;
        queue.emplace_back(seed_row, u);
      } else {
        RF_CHECK(out(seed_row, u) != (label == kFloor ? kCeiling : kFloor),
                 InconsistentLayoutError, "boundary leak: poles connected");
      }
    }
    while (!queue.empty()) {
      auto [r, u] = queue.front();
      queue.pop_front();
      const int nr[4] = {r - 1, r + 1, r, r};
      const int nu[4] = {u, u, (u + 1) % W, (u + W - 1) % W};
      for (int k = 0; k < 4; ++k) {
        if (nr[k] < 0 || nr[k] >= H) continue;
        int32_t& cell = out(nr[k], nu[k]);
        if (cell == -1) {
          cell = label;
          queue.emplace_back(nr[k], nu[k]);
        } else {
          RF_CHECK(cell == label || cell == kWall, InconsistentLayoutError,
                   "boundary leak: ceiling and floor regions touch");
        }
      }
    }
  };
  fill(0, kCeiling);
  fill(H - 1, kFloor);

  for (int r = 0; r < H; ++r)
    for (int u = 0; u < W; ++u)
      if (out(r, u) == -1) out(r, u) = kWall;

  // Per-column labels must read CEILING* WALL+ FLOOR*.
  for (int u = 0; u < W; ++u) {
    int phase = 0;
    for (int r = 0; r < H; ++r) {
      int32_t c = out(r, u);
      int want = c == kCeiling ? 0 : (c == kWall ? 1 : 2);
      RF_CHECK(want >= phase, InconsistentLayoutError,
               "non-monotone column labels at (", r, ",", u, ")");
      phase = want;
    }
    RF_CHECK(phase >= 1, InconsistentLayoutError, "column ", u, " has no wall");
  }
  return out;
}

// Index of the wall arc owning column u: arcs start at each corner column and
// run rightwards to the next one; the arc through the seam is single.
inline int wall_arc_index(const CornerLayout& layout, int u) {
  const auto& cc = layout.corner_columns;
  if (cc.empty()) return 0;
  // Largest corner column <= u, else wrap to the last one.
  auto it = std::upper_bound(cc.begin(), cc.end(), u);
  if (it == cc.begin()) return int(cc.size()) - 1;
  return int(it - cc.begin()) - 1;
}

inline LabelMap derive_plane_wise(const LabelMap& l3, const CornerLayout& layout) {
  RF_CHECK_SHAPE(l3.dim() == 2 && l3.shape()[1] == layout.W,
                 "l3 width must match layout, got ", shape_str(l3.shape()));
  const int H = l3.shape()[0];
  const int W = layout.W;
  LabelMap out({H, W});
  for (int r = 0; r < H; ++r) {
    for (int u = 0; u < W; ++u) {
      switch (l3(r, u)) {
        case kCeiling: out(r, u) = kPlaneCeiling; break;
        case kFloor: out(r, u) = kPlaneFloor; break;
        case kWall: out(r, u) = kPlaneWallBase + wall_arc_index(layout, u); break;
        default:
          RF_CHECK(false, InconsistentLayoutError, "bad 3-class label ", l3(r, u));
      }
    }
  }
  return out;
}

inline int wall_plane_count(const CornerLayout& layout) {
  return layout.corner_columns.empty() ? 1 : int(layout.corner_columns.size());
}

inline int32_t plane_to_three_class(int32_t plane_id) {
  if (plane_id == kPlaneCeiling) return kCeiling;
  if (plane_id == kPlaneFloor) return kFloor;
  return kWall;
}

inline double layout_miou(const LabelMap& pred, const LabelMap& gt) {
  RF_CHECK_SHAPE(pred.same_shape(gt), "miou shape mismatch: ",
                 shape_str(pred.shape()), " vs ", shape_str(gt.shape()));
  long long inter[3] = {0, 0, 0};
  long long uni[3] = {0, 0, 0};
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    int32_t p = pred.data()[i];
    int32_t g = gt.data()[i];
    RF_CHECK(p >= 0 && p <= 2 && g >= 0 && g <= 2, InconsistentLayoutError,
             "labels must be 3-class for miou");
    if (p == g) {
      ++inter[p];
      ++uni[p];
    } else {
      ++uni[p];
      ++uni[g];
    }
  }
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < 3; ++c) {
    if (uni[c] == 0) continue;  // class absent from both maps
    sum += double(inter[c]) / double(uni[c]);
    ++counted;
  }
  return counted == 0 ? 1.0 : sum / double(counted);
}

// --- persistence -----------------------------------------------------------

inline nlohmann::json layout_to_json(const CornerLayout& layout) {
  return nlohmann::json{{"W", layout.W},
                        {"H", layout.H},
                        {"ceiling_row", layout.ceiling_row},
                        {"floor_row", layout.floor_row},
                        {"corner_columns", layout.corner_columns}};
}

inline CornerLayout layout_from_json(const nlohmann::json& j) {
  CornerLayout layout;
  try {
    layout.W = j.at("W").get<int>();
    layout.H = j.at("H").get<int>();
    layout.ceiling_row = j.at("ceiling_row").get<std::vector<double>>();
    layout.floor_row = j.at("floor_row").get<std::vector<double>>();
    layout.corner_columns = j.at("corner_columns").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(strcat_msg("malformed layout object: ", e.what()));
  }
  layout.validate(layout.H);
  return layout;
}

inline void save_layout(const std::string& path, const CornerLayout& layout) {
  std::ofstream f(path);
  RF_CHECK(f.good(), IoError, "cannot open for write: ", path);
  f << layout_to_json(layout).dump() << "\n";
  RF_CHECK(f.good(), IoError, "write failed: ", path);
}

inline CornerLayout load_layout(const std::string& path) {
  std::ifstream f(path);
  RF_CHECK(f.good(), IoError, "cannot open: ", path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(strcat_msg("bad layout file ", path, ": ", e.what()));
  }
  return layout_from_json(j);
}

// Label maps persist as single-channel 8-bit images, label value = pixel value.
inline void save_label_map(const std::string& path, const LabelMap& labels) {
  RF_CHECK_SHAPE(labels.dim() == 2, "label map must be (H,W)");
  int h = labels.shape()[0], w = labels.shape()[1];
  std::vector<std::uint8_t> px(std::size_t(h) * w);
  for (int r = 0; r < h; ++r)
    for (int u = 0; u < w; ++u) {
      int32_t v = labels(r, u);
      RF_CHECK(v >= 0 && v <= 255, IoError, "label ", v, " exceeds 8-bit range");
      px[std::size_t(r) * w + u] = std::uint8_t(v);
    }
  png::write_file(path, px.data(), w, h, 1);
}

inline LabelMap load_label_map(const std::string& path) {
  png::Decoded d = png::read_file(path);
  RF_CHECK(d.channels == 1, IoError, "label map must be single-channel: ", path);
  LabelMap labels({d.height, d.width});
  for (int r = 0; r < d.height; ++r)
    for (int u = 0; u < d.width; ++u)
      labels(r, u) = d.pixels[std::size_t(r) * d.width + u];
  return labels;
}

}  // namespace roomfill
