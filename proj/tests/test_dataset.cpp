#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "roomfill/dataset.hpp"

using namespace roomfill;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  EXPECT_TRUE(f.good()) << p;
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

DatasetConfig small_config(std::uint64_t seed) {
  DatasetConfig cfg;
  cfg.seed = seed;
  cfg.width = 64;
  cfg.height = 32;
  cfg.mask_kind = "rect";
  cfg.mask_ratio = 0.1;
  return cfg;
}

}  // namespace

TEST(Dataset, EmptyGeneration) {
  fs::path dir = fresh_dir("rf_ds_empty");
  Manifest m = generate_dataset(0, small_config(1), dir.string());
  EXPECT_TRUE(m.entries.empty());
  Manifest loaded = load_manifest(dir.string());
  EXPECT_TRUE(loaded.entries.empty());
  EXPECT_TRUE(load_dataset(dir.string(), loaded).empty());
  fs::remove_all(dir);
}

TEST(Dataset, RerunIsByteIdentical) {
  fs::path a = fresh_dir("rf_ds_a");
  fs::path b = fresh_dir("rf_ds_b");
  DatasetConfig cfg = small_config(7);
  cfg.mask_kind = "mixed";
  generate_dataset(6, cfg, a.string());
  generate_dataset(6, cfg, b.string());

  std::vector<std::string> rel = {"manifest.json"};
  for (int i = 0; i < 6; ++i) {
    rel.push_back("images/" + sample_stem(i) + ".png");
    rel.push_back("masks/" + sample_stem(i) + ".png");
    rel.push_back("layouts/" + sample_stem(i) + ".json");
  }
  for (const auto& r : rel) ASSERT_EQ(slurp(a / r), slurp(b / r)) << r;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dataset, DifferentSeedsDiffer) {
  fs::path a = fresh_dir("rf_ds_s1");
  fs::path b = fresh_dir("rf_ds_s2");
  generate_dataset(2, small_config(1), a.string());
  generate_dataset(2, small_config(2), b.string());
  EXPECT_NE(slurp(a / "images/00000.png"), slurp(b / "images/00000.png"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dataset, LoaderRoundTripValidatesInvariants) {
  fs::path dir = fresh_dir("rf_ds_load");
  DatasetConfig cfg = small_config(21);
  generate_dataset(5, cfg, dir.string());
  Manifest m = load_manifest(dir.string());
  ASSERT_EQ(m.entries.size(), 5u);
  EXPECT_EQ(m.config.seed, 21u);

  auto samples = load_dataset(dir.string(), m);
  ASSERT_EQ(samples.size(), 5u);
  for (const Sample& s : samples) {
    EXPECT_EQ(s.image.shape(), (std::vector<int>{3, 32, 64}));
    EXPECT_EQ(s.mask.shape(), (std::vector<int>{1, 32, 64}));
    for (std::size_t i = 0; i < s.mask.numel(); ++i) {
      float v = s.mask.data()[i];
      ASSERT_TRUE(v == 0.0f || v == 1.0f);
    }
    EXPECT_GE(s.image.min_value(), 0.0f);
    EXPECT_LE(s.image.max_value(), 1.0f);
    // Plane-wise map refines the 3-class map.
    for (std::size_t i = 0; i < s.three_class.numel(); ++i)
      ASSERT_EQ(plane_to_three_class(s.plane_wise.data()[i]), s.three_class.data()[i]);
    // Masked input keeps unmasked pixels bit-equal.
    TensorF in = apply_mask(s.image, s.mask);
    for (int r = 0; r < 32; ++r)
      for (int u = 0; u < 64; ++u)
        if (s.mask(0, r, u) == 0.0f)
          for (int c = 0; c < 3; ++c) ASSERT_EQ(in(c, r, u), s.image(c, r, u));
  }
  fs::remove_all(dir);
}

TEST(Dataset, ManifestSeedsFollowDerivation) {
  fs::path dir = fresh_dir("rf_ds_seeds");
  DatasetConfig cfg = small_config(33);
  Manifest m = generate_dataset(4, cfg, dir.string());
  for (int i = 0; i < 4; ++i)
    EXPECT_EQ(m.entries[i].seed, derive_seed(33, "sample", std::uint64_t(i)));

  // Any sample is reproducible in isolation from its own seed.
  Sample direct = make_sample(cfg, m.entries[2].seed);
  Sample loaded = load_sample(dir.string(), m, 2);
  for (std::size_t i = 0; i < direct.image.numel(); ++i)
    ASSERT_EQ(to_byte(direct.image.data()[i]), to_byte(loaded.image.data()[i]));
  for (std::size_t i = 0; i < direct.mask.numel(); ++i)
    ASSERT_EQ(direct.mask.data()[i], loaded.mask.data()[i]);
  fs::remove_all(dir);
}

TEST(Dataset, PolygonConfigWorks) {
  fs::path dir = fresh_dir("rf_ds_poly");
  DatasetConfig cfg = small_config(5);
  cfg.mask_kind = "polygon";
  cfg.polygon_vertices = 7;
  generate_dataset(3, cfg, dir.string());
  auto samples = load_dataset(dir.string(), load_manifest(dir.string()));
  ASSERT_EQ(samples.size(), 3u);
  fs::remove_all(dir);
}

TEST(Dataset, MissingManifestThrows) {
  fs::path dir = fresh_dir("rf_ds_missing");
  EXPECT_THROW(load_manifest(dir.string()), IoError);
  {
    std::ofstream f(dir / "manifest.json");
    f << "{not json";
  }
  EXPECT_THROW(load_manifest(dir.string()), IoError);
  fs::remove_all(dir);
}

TEST(Dataset, RejectsBadConfig) {
  DatasetConfig cfg = small_config(1);
  cfg.mask_kind = "blobs";
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config(1);
  cfg.mask_ratio = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config(1);
  cfg.width = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
