#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "roomfill/image.hpp"
#include "roomfill/layout.hpp"
#include "roomfill/synth.hpp"

// Dataset generation and loading. Directory layout:
//   out_dir/images/NNNNN.png   8-bit RGB ground truth
//   out_dir/masks/NNNNN.png    8-bit single-channel, 0/255
//   out_dir/layouts/NNNNN.json per-column boundary rows
//   out_dir/manifest.json
namespace roomfill {

struct DatasetConfig {
  std::uint64_t seed = 1;
  int width = 128;
  int height = 64;
  std::string mask_kind = "rect";  // rect | polygon | mixed
  double mask_ratio = 0.10;
  int polygon_vertices = 8;
  double noise = 0.0;

  void validate() const {
    RF_CHECK(width > 0 && height > 0, ConfigError, "image size must be positive");
    RF_CHECK(mask_kind == "rect" || mask_kind == "polygon" || mask_kind == "mixed",
             ConfigError, "mask_kind must be rect|polygon|mixed, got ", mask_kind);
    RF_CHECK(mask_ratio > 0.0 && mask_ratio < 1.0, ConfigError,
             "mask_ratio must be in (0,1)");
    RF_CHECK(polygon_vertices >= 3, ConfigError, "polygon_vertices must be >= 3");
    RF_CHECK(noise >= 0.0 && noise <= 0.5, ConfigError, "noise must be in [0,0.5]");
  }
};

inline nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
  return nlohmann::json{{"seed", c.seed},
                        {"width", c.width},
                        {"height", c.height},
                        {"mask_kind", c.mask_kind},
                        {"mask_ratio", c.mask_ratio},
                        {"polygon_vertices", c.polygon_vertices},
                        {"noise", c.noise}};
}

inline void apply_dataset_config_value(DatasetConfig& c, const std::string& key,
                                       const nlohmann::json& v) {
  try {
    if (key == "seed")
      c.seed = v.get<std::uint64_t>();
    else if (key == "width")
      c.width = v.get<int>();
    else if (key == "height")
      c.height = v.get<int>();
    else if (key == "mask_kind")
      c.mask_kind = v.get<std::string>();
    else if (key == "mask_ratio")
      c.mask_ratio = v.get<double>();
    else if (key == "polygon_vertices")
      c.polygon_vertices = v.get<int>();
    else if (key == "noise")
      c.noise = v.get<double>();
    else
      RF_CHECK(false, ConfigError, "unknown config key '", key, "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(strcat_msg("bad value for '", key, "': ", e.what()));
  }
}

// Missing keys keep defaults; unknown keys are rejected by name.
inline DatasetConfig dataset_config_from_json(const nlohmann::json& j,
                                              const DatasetConfig& base = {}) {
  RF_CHECK(j.is_object(), ConfigError, "dataset config must be a JSON object");
  DatasetConfig c = base;
  for (const auto& item : j.items()) apply_dataset_config_value(c, item.key(), item.value());
  c.validate();
  return c;
}

inline void apply_dataset_override(DatasetConfig& c, const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  RF_CHECK(eq != std::string::npos && eq > 0, ConfigError,
           "override must look like key=value, got '", assignment, "'");
  std::string key = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);
  nlohmann::json v = nlohmann::json::parse(raw, nullptr, false);
  if (v.is_discarded()) v = raw;
  apply_dataset_config_value(c, key, v);
}

struct Sample {
  TensorF image;  // (3,H,W) ground truth in [0,1]
  TensorF mask;   // (1,H,W) in {0,1}, 1 = missing
  CornerLayout layout;
  LabelMap three_class;
  LabelMap plane_wise;
  std::uint64_t seed = 0;
};

struct ManifestEntry {
  std::string image;
  std::string mask;
  std::string layout;
  std::uint64_t seed = 0;
};

struct Manifest {
  DatasetConfig config;
  std::vector<ManifestEntry> entries;
};

inline std::string sample_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", index);
  return buf;
}

inline TensorF make_mask(const DatasetConfig& cfg, Rng& rng) {
  bool polygon = cfg.mask_kind == "polygon" ||
                 (cfg.mask_kind == "mixed" && rng.uniform() < 0.5);
  if (polygon)
    return polygon_mask(cfg.polygon_vertices, cfg.mask_ratio, cfg.height, cfg.width, rng)
        .mask;
  return random_rect_mask(cfg.mask_ratio, cfg.height, cfg.width, rng);
}

// Fully deterministic in cfg.seed: per-sample streams are derived, so sample
// i is reproducible in isolation.
inline Sample make_sample(const DatasetConfig& cfg, std::uint64_t sample_seed) {
  Rng rng(sample_seed);
  Sample s;
  s.seed = sample_seed;
  RoomModel room = random_room(rng);
  s.layout = boundary_rows(room, cfg.height, cfg.width);
  s.three_class = derive_three_class(s.layout, cfg.height);
  s.plane_wise = derive_plane_wise(s.three_class, s.layout);
  int planes = kPlaneWallBase + wall_plane_count(s.layout);
  std::vector<PlaneStyle> styles = random_styles(rng, planes);
  s.image = render_panorama(room, styles, cfg.height, cfg.width, sample_seed, cfg.noise);
  s.mask = make_mask(cfg, rng);
  return s;
}

inline Manifest generate_dataset(int n, const DatasetConfig& cfg,
                                 const std::string& out_dir) {
  RF_CHECK(n >= 0, ConfigError, "sample count must be >= 0");
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"images", "masks", "layouts"}) {
    fs::create_directories(fs::path(out_dir) / sub, ec);
    RF_CHECK(!ec, IoError, "cannot create ", (fs::path(out_dir) / sub).string(), ": ",
             ec.message());
  }

  Manifest manifest;
  manifest.config = cfg;
  nlohmann::json entries = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    std::uint64_t sample_seed = derive_seed(cfg.seed, "sample", std::uint64_t(i));
    Sample s = make_sample(cfg, sample_seed);
    ManifestEntry e;
    e.image = "images/" + sample_stem(i) + ".png";
    e.mask = "masks/" + sample_stem(i) + ".png";
    e.layout = "layouts/" + sample_stem(i) + ".json";
    e.seed = sample_seed;
    save_image((fs::path(out_dir) / e.image).string(), s.image);
    save_mask((fs::path(out_dir) / e.mask).string(), s.mask);
    save_layout((fs::path(out_dir) / e.layout).string(), s.layout);
    entries.push_back(nlohmann::json{{"image", e.image},
                                     {"mask", e.mask},
                                     {"layout", e.layout},
                                     {"seed", e.seed}});
    manifest.entries.push_back(std::move(e));
  }

  nlohmann::json j{{"config", dataset_config_to_json(cfg)},
                   {"count", n},
                   {"samples", entries}};
  std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  std::ofstream f(manifest_path);
  RF_CHECK(f.good(), IoError, "cannot open for write: ", manifest_path);
  f << j.dump(1) << "\n";
  RF_CHECK(f.good(), IoError, "write failed: ", manifest_path);
  return manifest;
}

inline Manifest load_manifest(const std::string& dir) {
  namespace fs = std::filesystem;
  std::string path = (fs::path(dir) / "manifest.json").string();
  std::ifstream f(path);
  RF_CHECK(f.good(), IoError, "cannot open: ", path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(strcat_msg("bad manifest ", path, ": ", e.what()));
  }
  Manifest m;
  try {
    m.config = dataset_config_from_json(j.at("config"));
    for (const auto& e : j.at("samples")) {
      ManifestEntry entry;
      entry.image = e.at("image").get<std::string>();
      entry.mask = e.at("mask").get<std::string>();
      entry.layout = e.at("layout").get<std::string>();
      entry.seed = e.at("seed").get<std::uint64_t>();
      m.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(strcat_msg("bad manifest ", path, ": ", e.what()));
  }
  return m;
}

// Loads one sample and re-derives its guidance maps; validates the Sample
// invariants (matching shapes, binary mask, consistent layout).
inline Sample load_sample(const std::string& dir, const Manifest& manifest, int index) {
  RF_CHECK(index >= 0 && index < int(manifest.entries.size()), IoError,
           "sample index ", index, " out of range");
  namespace fs = std::filesystem;
  const ManifestEntry& e = manifest.entries[std::size_t(index)];
  Sample s;
  s.seed = e.seed;
  s.image = load_image((fs::path(dir) / e.image).string());
  s.mask = load_mask((fs::path(dir) / e.mask).string());
  s.layout = load_layout((fs::path(dir) / e.layout).string());
  const int H = manifest.config.height, W = manifest.config.width;
  RF_CHECK_SHAPE(s.image.dim() == 3 && s.image.shape()[0] == 3 &&
                     s.image.shape()[1] == H && s.image.shape()[2] == W,
                 "image shape mismatch for ", e.image, ": ", shape_str(s.image.shape()));
  RF_CHECK_SHAPE(s.mask.shape()[1] == H && s.mask.shape()[2] == W,
                 "mask shape mismatch for ", e.mask);
  RF_CHECK(s.layout.W == W && s.layout.H == H, InconsistentLayoutError,
           "layout size mismatch for ", e.layout);
  s.three_class = derive_three_class(s.layout, H);
  s.plane_wise = derive_plane_wise(s.three_class, s.layout);
  return s;
}

inline std::vector<Sample> load_dataset(const std::string& dir, const Manifest& manifest) {
  std::vector<Sample> samples;
  samples.reserve(manifest.entries.size());
  for (int i = 0; i < int(manifest.entries.size()); ++i)
    samples.push_back(load_sample(dir, manifest, i));
  return samples;
}

}  // namespace roomfill
