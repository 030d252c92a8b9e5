#include "roomfill/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "roomfill/rng.hpp"

namespace roomfill {
namespace {

TensorD random_image_d(int c, int h, int w, std::uint64_t seed, double lo = 0.0,
                       double hi = 0.5) {
  TensorD t({c, h, w});
  Rng rng(seed);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = rng.uniform(lo, hi);
  return t;
}

TEST(Psnr, ConstantOffsetGivesTwentyDecibels) {
  TensorD a = random_image_d(3, 12, 16, 11);
  TensorD b = a;
  for (std::int64_t i = 0; i < b.numel(); ++i) b.data()[i] += 0.1;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-6);
}

TEST(Psnr, HalvingTheErrorAddsSixDecibels) {
  TensorD a = random_image_d(3, 12, 16, 12);
  TensorD b = a;
  TensorD c = a;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    b.data()[i] += 0.1;
    c.data()[i] += 0.05;
  }
  EXPECT_NEAR(psnr(a, c) - psnr(a, b), 10.0 * std::log10(4.0), 1e-9);
}

TEST(Psnr, IdenticalImagesAreInfinite) {
  TensorD a = random_image_d(3, 12, 16, 13);
  double v = psnr(a, a);
  EXPECT_TRUE(std::isinf(v));
  EXPECT_EQ(format_metric(v), "inf");
}

TEST(Psnr, MaeAndPsnrIgnorePixelOrdering) {
  TensorD a = random_image_d(1, 12, 16, 14);
  TensorD b = random_image_d(1, 12, 16, 15);
  std::vector<std::int64_t> perm(std::size_t(a.numel()));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(99);
  rng.shuffle(perm);
  TensorD ap = a, bp = b;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    ap.data()[i] = a.data()[perm[i]];
    bp.data()[i] = b.data()[perm[i]];
  }
  EXPECT_NEAR(mae(a, b), mae(ap, bp), 1e-12);
  EXPECT_NEAR(psnr(a, b), psnr(ap, bp), 1e-9);
}

TEST(Mae, KnownConstantDifference) {
  TensorD a({2, 12, 16}, 0.25);
  TensorD b({2, 12, 16}, 0.5);
  EXPECT_NEAR(mae(a, b), 0.25, 1e-15);
}

TEST(Ssim, SelfSimilarityIsOne) {
  TensorD a = random_image_d(3, 16, 20, 21, 0.0, 1.0);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
}

TEST(Ssim, ConstantImagesMatchAnalyticValue) {
  TensorD a({1, 16, 16}, 0.2);
  TensorD b({1, 16, 16}, 0.8);
  double c1 = 1e-4;
  double expected = (2.0 * 0.2 * 0.8 + c1) / (0.2 * 0.2 + 0.8 * 0.8 + c1);
  double v = ssim(a, b);
  EXPECT_NEAR(v, expected, 1e-9);
  EXPECT_NEAR(v, 0.4707, 1e-3);
}

TEST(Ssim, Symmetric) {
  TensorD a = random_image_d(3, 14, 18, 31, 0.0, 1.0);
  TensorD b = random_image_d(3, 14, 18, 32, 0.0, 1.0);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, ImageSmallerThanWindowThrows) {
  TensorD a({1, 8, 32}, 0.5);
  EXPECT_THROW(ssim(a, a), ShapeError);
}

TEST(Fid, IdenticalSetsAreNearZero) {
  Rng rng(41);
  Eigen::MatrixXd f(8, 3);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  EXPECT_LE(frechet_distance(f, f), 1e-6);
}

TEST(Fid, OneDimensionalGaussiansRecoverSquaredMeanGap) {
  const int n = 20000;
  Rng rng(42);
  Eigen::MatrixXd fa(n, 1), fb(n, 1), fc(n, 1);
  for (int i = 0; i < n; ++i) {
    fa(i, 0) = rng.normal();
    fb(i, 0) = rng.normal() + 3.0;
    fc(i, 0) = rng.normal();
  }
  EXPECT_NEAR(frechet_distance(fa, fb), 9.0, 0.3);
  EXPECT_LE(frechet_distance(fa, fc), 0.02);
}

TEST(Fid, Symmetric) {
  Rng rng(43);
  Eigen::MatrixXd fa(16, 4), fb(16, 4);
  for (Eigen::Index i = 0; i < fa.size(); ++i) fa.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < fb.size(); ++i) fb.data()[i] = rng.normal(0.5, 2.0);
  EXPECT_NEAR(frechet_distance(fa, fb), frechet_distance(fb, fa), 1e-8);
}

TEST(Fid, NonFiniteFeaturesThrow) {
  Eigen::MatrixXd fa = Eigen::MatrixXd::Zero(4, 2);
  Eigen::MatrixXd fb = fa;
  fb(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(frechet_distance(fa, fb), NumericalError);
}

TEST(Buckets, HalfOpenBoundaries) {
  EXPECT_EQ(ratio_bucket(0.0), "0-10");
  EXPECT_EQ(ratio_bucket(0.0999), "0-10");
  EXPECT_EQ(ratio_bucket(0.10), "10-20");
  EXPECT_EQ(ratio_bucket(0.1999), "10-20");
  EXPECT_EQ(ratio_bucket(0.20), "20-30");
  EXPECT_EQ(ratio_bucket(0.30), "30-40");
  EXPECT_EQ(ratio_bucket(0.40), "40+");
  EXPECT_EQ(ratio_bucket(1.0), "40+");
  EXPECT_THROW(ratio_bucket(-0.01), ConfigError);
}

// Mask with exactly `ones` set pixels in the top rows.
TensorF exact_mask(int h, int w, int ones) {
  TensorF m({1, h, w}, 0.0f);
  for (int i = 0; i < ones; ++i) m.data()[i] = 1.0f;
  return m;
}

TEST(Stratified, ExactTenPercentRatioLandsInSecondBucket) {
  TensorF gt({3, 12, 100}, 0.25f);
  TensorF out({3, 12, 100}, 0.5f);
  PairMetrics pm = compute_pair(out, gt, exact_mask(12, 100, 120));
  EXPECT_DOUBLE_EQ(pm.mask_ratio, 0.10);
  EXPECT_EQ(ratio_bucket(pm.mask_ratio), "10-20");
}

TEST(Stratified, TotalsRowPoolsRatherThanAveragesAverages) {
  // Sample A has constant error 0.25, sample B is perfect. A naive mean of the
  // per-sample PSNRs would be infinite; pooling the squared error is not.
  TensorF gt({3, 12, 16}, 0.25f);
  TensorF bad({3, 12, 16}, 0.5f);
  std::vector<TensorF> outs = {bad, gt};
  std::vector<TensorF> gts = {gt, gt};
  std::vector<TensorF> masks = {exact_mask(12, 16, 10), exact_mask(12, 16, 10)};
  StratifyOptions opt;
  opt.with_fid = false;
  std::vector<MetricReport> rows = evaluate_stratified(outs, gts, masks, opt);
  ASSERT_FALSE(rows.empty());
  const MetricReport& all = rows.back();
  EXPECT_EQ(all.key, "all");
  EXPECT_EQ(all.n_samples, 2);
  double pooled_mse = (0.0625 + 0.0) / 2.0;
  EXPECT_NEAR(all.psnr, 10.0 * std::log10(1.0 / pooled_mse), 1e-9);
  EXPECT_NEAR(all.mae, 0.125, 1e-9);
  EXPECT_FALSE(all.has_fid);
}

TEST(Stratified, RowsFollowBucketOrderAndCounts) {
  TensorF gt({3, 12, 100}, 0.25f);
  TensorF out({3, 12, 100}, 0.5f);
  std::vector<TensorF> outs = {out, out, out};
  std::vector<TensorF> gts = {gt, gt, gt};
  std::vector<TensorF> masks = {exact_mask(12, 100, 60),    // 5%
                                exact_mask(12, 100, 120),   // 10%
                                exact_mask(12, 100, 420)};  // 35%
  StratifyOptions opt;
  opt.with_fid = false;
  std::vector<MetricReport> rows = evaluate_stratified(outs, gts, masks, opt);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].key, "0-10");
  EXPECT_EQ(rows[1].key, "10-20");
  EXPECT_EQ(rows[2].key, "30-40");
  EXPECT_EQ(rows[3].key, "all");
  EXPECT_EQ(rows[0].n_samples, 1);
  EXPECT_EQ(rows[3].n_samples, 3);
}

TEST(Stratified, HoleMetricsCoverOnlyMaskedPixels) {
  const int h = 12, w = 16, ones = 48;
  TensorF mask = exact_mask(h, w, ones);
  TensorF gt({3, h, w}, 0.0f);
  TensorF out({3, h, w}, 0.0f);
  for (int c = 0; c < 3; ++c)
    for (std::int64_t i = 0; i < std::int64_t(h) * w; ++i)
      out.data()[std::int64_t(c) * h * w + i] = mask.data()[i];
  PairMetrics pm = compute_pair(out, gt, mask);
  EXPECT_EQ(pm.hole_count, 3 * ones);
  EXPECT_NEAR(pm.hole_abs_sum / double(pm.hole_count), 1.0, 1e-12);
  EXPECT_NEAR(pm.abs_sum / double(pm.count), double(ones) / (h * w), 1e-12);
  // Perfect reconstruction outside an empty mask: vacuous hole metrics.
  PairMetrics empty = compute_pair(gt, gt, TensorF({1, h, w}, 0.0f));
  EXPECT_EQ(empty.hole_count, 0);
  EXPECT_TRUE(std::isinf(psnr_from_mse(0.0, 1.0)));
}

TEST(Stratified, FidUsesProvidedFeatureSpace) {
  TensorF gt({3, 16, 16}, 0.25f);
  TensorF out({3, 16, 16}, 0.5f);
  std::vector<TensorF> outs = {out, gt};
  std::vector<TensorF> gts = {gt, gt};
  std::vector<TensorF> masks = {exact_mask(16, 16, 8), exact_mask(16, 16, 8)};
  StratifyOptions opt;
  opt.features = [](const TensorF& img) {
    double s = 0;
    for (std::int64_t i = 0; i < img.numel(); ++i) s += img.data()[i];
    return std::vector<double>{s / double(img.numel())};
  };
  std::vector<MetricReport> rows = evaluate_stratified(outs, gts, masks, opt);
  EXPECT_TRUE(rows.back().has_fid);
  EXPECT_GE(rows.back().fid_proxy, 0.0);
}

TEST(Stratified, DefaultPyramidFeaturesAreDeterministic) {
  Rng rng(7);
  TensorF img({3, 32, 64});
  for (std::int64_t i = 0; i < img.numel(); ++i)
    img.data()[i] = float(rng.uniform());
  std::vector<double> f1 = pyramid_feature_vector(img);
  std::vector<double> f2 = pyramid_feature_vector(img);
  ASSERT_EQ(f1.size(), std::size_t(16 + 32 + 48 + 64));
  EXPECT_EQ(f1, f2);
}

TEST(Report, JsonRoundTripPreservesInfinitePsnr) {
  MetricReport r;
  r.key = "10-20";
  r.n_samples = 4;
  r.psnr = std::numeric_limits<double>::infinity();
  r.ssim = 0.97;
  r.mae = 0.011;
  r.hole_psnr = 28.5;
  r.hole_mae = 0.04;
  r.has_fid = true;
  r.fid_proxy = 1.25;
  nlohmann::json j = report_to_json(r);
  EXPECT_EQ(j.at("psnr"), "inf");
  MetricReport back = report_from_json(j);
  EXPECT_TRUE(std::isinf(back.psnr));
  EXPECT_DOUBLE_EQ(back.hole_psnr, 28.5);
  EXPECT_TRUE(back.has_fid);
  EXPECT_DOUBLE_EQ(back.fid_proxy, 1.25);

  MetricReport no_fid;
  no_fid.key = "all";
  nlohmann::json j2 = report_to_json(no_fid);
  EXPECT_FALSE(j2.contains("fid_proxy"));
  EXPECT_FALSE(report_from_json(j2).has_fid);
}

TEST(Report, TableIsAlignedAndComplete) {
  MetricReport a;
  a.key = "0-10";
  a.n_samples = 2;
  a.psnr = 21.5;
  a.ssim = 0.9;
  a.mae = 0.05;
  a.hole_psnr = std::numeric_limits<double>::infinity();
  MetricReport b = a;
  b.key = "all";
  b.has_fid = true;
  b.fid_proxy = 0.5;
  std::string table = metric_table({a, b});
  EXPECT_NE(table.find("bucket"), std::string::npos);
  EXPECT_NE(table.find("fid_proxy"), std::string::npos);
  EXPECT_NE(table.find("inf"), std::string::npos);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
}

}  // namespace
}  // namespace roomfill
