#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "roomfill/common.hpp"
#include "roomfill/feature_extractor.hpp"
#include "roomfill/tensor.hpp"

namespace roomfill {

// ---------------------------------------------------------------------------
// Pixel metrics. Accumulation is always double regardless of the tensor
// scalar; identical images report +inf PSNR (serialized as the string "inf").
// ---------------------------------------------------------------------------

template <typename T>
double mae(const Tensor<T>& a, const Tensor<T>& b) {
  RF_CHECK_SHAPE(a.same_shape(b), "mae operands", shape_str(a.shape()),
                 shape_str(b.shape()));
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    acc += std::abs(double(a.data()[i]) - double(b.data()[i]));
  return acc / double(a.numel());
}

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
  RF_CHECK_SHAPE(a.same_shape(b), "mse operands", shape_str(a.shape()),
                 shape_str(b.shape()));
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    double d = double(a.data()[i]) - double(b.data()[i]);
    acc += d * d;
  }
  return acc / double(a.numel());
}

inline double psnr_from_mse(double m, double peak) {
  RF_CHECK(std::isfinite(m) && m >= 0.0, NumericalError,
           "mean squared error must be finite and non-negative, got ", m);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
  return psnr_from_mse(mse(a, b), peak);
}

// ---------------------------------------------------------------------------
// SSIM with the standard 11x11 Gaussian window (sigma 1.5), valid-mode
// windowing, per-channel maps averaged into one score. Inputs are (H,W) or
// (C,H,W); anything smaller than the window is an error, not a silent 1.0.
// ---------------------------------------------------------------------------

inline const std::array<double, 11>& ssim_window() {
  static const std::array<double, 11> kWin = [] {
    std::array<double, 11> w{};
    double s = 0.0;
    for (int i = 0; i < 11; ++i) {
      double d = double(i - 5);
      w[std::size_t(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      s += w[std::size_t(i)];
    }
    for (double& v : w) v /= s;
    return w;
  }();
  return kWin;
}

namespace detail {

// Separable valid-mode filter of a H×W map with the 11-tap window.
inline void filter_valid(const std::vector<double>& in, int H, int W,
                         std::vector<double>& out) {
  const auto& k = ssim_window();
  const int Wv = W - 10;
  const int Hv = H - 10;
  std::vector<double> tmp(std::size_t(H) * std::size_t(Wv));
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < Wv; ++c) {
      double s = 0.0;
      for (int t = 0; t < 11; ++t)
        s += k[std::size_t(t)] * in[std::size_t(r) * std::size_t(W) + std::size_t(c + t)];
      tmp[std::size_t(r) * std::size_t(Wv) + std::size_t(c)] = s;
    }
  out.assign(std::size_t(Hv) * std::size_t(Wv), 0.0);
  for (int r = 0; r < Hv; ++r)
    for (int c = 0; c < Wv; ++c) {
      double s = 0.0;
      for (int t = 0; t < 11; ++t)
        s += k[std::size_t(t)] * tmp[std::size_t(r + t) * std::size_t(Wv) + std::size_t(c)];
      out[std::size_t(r) * std::size_t(Wv) + std::size_t(c)] = s;
    }
}

template <typename T>
double ssim_channel(const T* x, const T* y, int H, int W, double c1, double c2) {
  const std::size_t n = std::size_t(H) * std::size_t(W);
  std::vector<double> bx(n), by(n), bxx(n), byy(n), bxy(n);
  for (std::size_t i = 0; i < n; ++i) {
    double xv = double(x[i]);
    double yv = double(y[i]);
    bx[i] = xv;
    by[i] = yv;
    bxx[i] = xv * xv;
    byy[i] = yv * yv;
    bxy[i] = xv * yv;
  }
  std::vector<double> mx, my, mxx, myy, mxy;
  filter_valid(bx, H, W, mx);
  filter_valid(by, H, W, my);
  filter_valid(bxx, H, W, mxx);
  filter_valid(byy, H, W, myy);
  filter_valid(bxy, H, W, mxy);
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    double vx = mxx[i] - mx[i] * mx[i];
    double vy = myy[i] - my[i] * my[i];
    double cxy = mxy[i] - mx[i] * my[i];
    double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
    double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    acc += num / den;
  }
  return acc / double(mx.size());
}

}  // namespace detail

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
  RF_CHECK_SHAPE(a.same_shape(b), "ssim operands", shape_str(a.shape()),
                 shape_str(b.shape()));
  RF_CHECK(a.dim() == 2 || a.dim() == 3, ShapeError,
           "ssim expects (H,W) or (C,H,W), got ", shape_str(a.shape()));
  const int C = a.dim() == 3 ? a.shape()[0] : 1;
  const int H = a.shape()[a.dim() - 2];
  const int W = a.shape()[a.dim() - 1];
  RF_CHECK(H >= 11 && W >= 11, ShapeError, "image ", H, "x", W,
           " is smaller than the 11x11 ssim window");
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const std::int64_t plane = std::int64_t(H) * W;
  double acc = 0.0;
  for (int c = 0; c < C; ++c)
    acc += detail::ssim_channel(a.data() + std::int64_t(c) * plane,
                                b.data() + std::int64_t(c) * plane, H, W, c1, c2);
  return acc / double(C);
}

// ---------------------------------------------------------------------------
// Frechet distance between Gaussian fits of two feature sets:
//   |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2})
// computed through the symmetric product sqrtm(sqrt(Sa) Sb sqrt(Sa)).
// Covariances get an epsilon ridge so small sample counts stay well posed.
// ---------------------------------------------------------------------------

inline double frechet_distance(const Eigen::MatrixXd& fa, const Eigen::MatrixXd& fb,
                               double eps = 1e-6) {
  RF_CHECK(fa.cols() == fb.cols(), ShapeError, "feature dims differ: ", fa.cols(),
           " vs ", fb.cols());
  RF_CHECK(fa.rows() >= 2 && fb.rows() >= 2, ShapeError,
           "need at least 2 samples per set, got ", fa.rows(), " and ", fb.rows());
  RF_CHECK(fa.allFinite() && fb.allFinite(), NumericalError,
           "non-finite feature values");
  const Eigen::Index d = fa.cols();
  auto fit = [&](const Eigen::MatrixXd& f, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    mu = f.colwise().mean();
    Eigen::MatrixXd c = f.rowwise() - mu.transpose();
    cov = (c.transpose() * c) / double(f.rows() - 1);
    cov += eps * Eigen::MatrixXd::Identity(d, d);
  };
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  fit(fa, mu_a, cov_a);
  fit(fb, mu_b, cov_b);

  auto sqrtm = [](const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    RF_CHECK(es.info() == Eigen::Success, NumericalError,
             "eigendecomposition failed in frechet_distance");
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() *
                           es.eigenvectors().transpose());
  };
  Eigen::MatrixXd root_a = sqrtm(cov_a);
  Eigen::MatrixXd inner = root_a * cov_b * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
  RF_CHECK(es.info() == Eigen::Success, NumericalError,
           "eigendecomposition failed in frechet_distance");
  double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  double dist = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() -
                2.0 * tr_sqrt;
  RF_CHECK(std::isfinite(dist), NumericalError, "frechet distance is not finite");
  // Rounding can push a zero distance a hair negative; a distance stays >= 0.
  return std::max(0.0, dist);
}

// Default FID-proxy feature space: per-channel spatial means of every stage of
// the frozen random pyramid, concatenated. The pyramid needs H,W >= 16.
inline std::vector<double> pyramid_feature_vector(const TensorF& image) {
  RF_CHECK(image.dim() == 3, ShapeError, "expected (C,H,W), got ",
           shape_str(image.shape()));
  static const nn::RandomPyramidExtractor<float> kExtractor;
  Tensor<float> x({1, image.shape()[0], image.shape()[1], image.shape()[2]});
  std::copy_n(image.data(), image.numel(), x.data());
  ad::TapeF t;
  int xid = t.constant(std::move(x));
  std::vector<double> out;
  for (int fid : kExtractor.features(t, xid)) {
    const Tensor<float>& f = t.val(fid);
    const int C = f.shape()[1];
    const std::int64_t plane = std::int64_t(f.shape()[2]) * f.shape()[3];
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      const float* p = f.data() + std::int64_t(c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) s += double(p[i]);
      out.push_back(s / double(plane));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stratified evaluation. Samples are bucketed by mask ratio into half-open
// ranges; the totals row pools raw sums over all samples instead of averaging
// the per-bucket averages.
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& ratio_bucket_names() {
  static const std::vector<std::string> kNames = {"0-10", "10-20", "20-30",
                                                  "30-40", "40+"};
  return kNames;
}

inline std::string ratio_bucket(double ratio) {
  RF_CHECK(std::isfinite(ratio) && ratio >= 0.0 && ratio <= 1.0, ConfigError,
           "mask ratio must lie in [0,1], got ", ratio);
  if (ratio < 0.10) return "0-10";
  if (ratio < 0.20) return "10-20";
  if (ratio < 0.30) return "20-30";
  if (ratio < 0.40) return "30-40";
  return "40+";
}

// Raw per-pair accumulators; hole_* cover only masked pixels (all channels).
// An empty mask leaves the hole terms vacuous: zero error, infinite PSNR.
struct PairMetrics {
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  std::int64_t count = 0;
  double ssim = 0.0;
  double hole_abs_sum = 0.0;
  double hole_sq_sum = 0.0;
  std::int64_t hole_count = 0;
  double mask_ratio = 0.0;
};

template <typename T>
PairMetrics compute_pair(const Tensor<T>& out, const Tensor<T>& gt,
                         const Tensor<T>& mask, double peak = 1.0) {
  RF_CHECK_SHAPE(out.same_shape(gt), "output vs target", shape_str(out.shape()),
                 shape_str(gt.shape()));
  RF_CHECK(out.dim() == 3, ShapeError, "expected (C,H,W), got ",
           shape_str(out.shape()));
  const int C = out.shape()[0];
  const int H = out.shape()[1];
  const int W = out.shape()[2];
  RF_CHECK(mask.dim() == 2 || (mask.dim() == 3 && mask.shape()[0] == 1),
           ShapeError, "mask must be (H,W) or (1,H,W), got ",
           shape_str(mask.shape()));
  RF_CHECK(mask.shape()[mask.dim() - 2] == H && mask.shape()[mask.dim() - 1] == W,
           ShapeError, "mask size ", shape_str(mask.shape()),
           " does not match image ", H, "x", W);
  PairMetrics pm;
  const std::int64_t plane = std::int64_t(H) * W;
  std::int64_t masked_px = 0;
  for (std::int64_t i = 0; i < plane; ++i)
    if (mask.data()[i] > T(0.5)) ++masked_px;
  pm.mask_ratio = double(masked_px) / double(plane);
  for (int c = 0; c < C; ++c) {
    const T* po = out.data() + std::int64_t(c) * plane;
    const T* pg = gt.data() + std::int64_t(c) * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      double d = double(po[i]) - double(pg[i]);
      pm.abs_sum += std::abs(d);
      pm.sq_sum += d * d;
      if (mask.data()[i] > T(0.5)) {
        pm.hole_abs_sum += std::abs(d);
        pm.hole_sq_sum += d * d;
      }
    }
  }
  pm.count = std::int64_t(C) * plane;
  pm.hole_count = std::int64_t(C) * masked_px;
  pm.ssim = ssim(out, gt, peak);
  return pm;
}

struct MetricReport {
  std::string key;
  int n_samples = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double mae = 0.0;
  double hole_psnr = 0.0;
  double hole_mae = 0.0;
  bool has_fid = false;
  double fid_proxy = 0.0;
};

using FeatureFn = std::function<std::vector<double>(const TensorF&)>;

struct StratifyOptions {
  bool with_fid = true;
  double peak = 1.0;
  FeatureFn features;  // defaults to the frozen random pyramid
};

namespace detail {

struct BucketAcc {
  std::vector<const PairMetrics*> pairs;
  std::vector<std::vector<double>> feats_out;
  std::vector<std::vector<double>> feats_gt;
};

inline MetricReport finish_bucket(const std::string& key, const BucketAcc& acc,
                                  const StratifyOptions& opt) {
  MetricReport r;
  r.key = key;
  r.n_samples = int(acc.pairs.size());
  double abs_sum = 0, sq_sum = 0, ssim_sum = 0;
  double h_abs = 0, h_sq = 0;
  std::int64_t count = 0, h_count = 0;
  for (const PairMetrics* p : acc.pairs) {
    abs_sum += p->abs_sum;
    sq_sum += p->sq_sum;
    ssim_sum += p->ssim;
    h_abs += p->hole_abs_sum;
    h_sq += p->hole_sq_sum;
    count += p->count;
    h_count += p->hole_count;
  }
  r.mae = abs_sum / double(count);
  r.psnr = psnr_from_mse(sq_sum / double(count), opt.peak);
  r.ssim = ssim_sum / double(acc.pairs.size());
  r.hole_mae = h_count > 0 ? h_abs / double(h_count) : 0.0;
  r.hole_psnr = h_count > 0 ? psnr_from_mse(h_sq / double(h_count), opt.peak)
                            : std::numeric_limits<double>::infinity();
  if (opt.with_fid && acc.feats_out.size() >= 2) {
    const std::size_t d = acc.feats_out.front().size();
    auto pack = [&](const std::vector<std::vector<double>>& v) {
      Eigen::MatrixXd m(Eigen::Index(v.size()), Eigen::Index(d));
      for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
          m(Eigen::Index(i), Eigen::Index(j)) = v[i][j];
      return m;
    };
    r.fid_proxy = frechet_distance(pack(acc.feats_out), pack(acc.feats_gt));
    r.has_fid = true;
  }
  return r;
}

}  // namespace detail

// Returns one row per non-empty ratio bucket (in canonical order) plus a
// pooled "all" row. FID needs at least two samples in a bucket.
inline std::vector<MetricReport> evaluate_stratified(
    const std::vector<TensorF>& outputs, const std::vector<TensorF>& targets,
    const std::vector<TensorF>& masks, StratifyOptions opt = {}) {
  RF_CHECK(outputs.size() == targets.size() && outputs.size() == masks.size(),
           ShapeError, "outputs/targets/masks counts differ: ", outputs.size(),
           "/", targets.size(), "/", masks.size());
  RF_CHECK(!outputs.empty(), ConfigError, "cannot evaluate an empty sample set");
  FeatureFn features = opt.features;
  if (opt.with_fid && !features) features = pyramid_feature_vector;

  std::vector<PairMetrics> pairs(outputs.size());
  std::map<std::string, detail::BucketAcc> buckets;
  detail::BucketAcc all;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    pairs[i] = compute_pair(outputs[i], targets[i], masks[i], opt.peak);
    detail::BucketAcc& acc = buckets[ratio_bucket(pairs[i].mask_ratio)];
    acc.pairs.push_back(&pairs[i]);
    all.pairs.push_back(&pairs[i]);
    if (opt.with_fid) {
      std::vector<double> fo = features(outputs[i]);
      std::vector<double> fg = features(targets[i]);
      acc.feats_out.push_back(fo);
      acc.feats_gt.push_back(fg);
      all.feats_out.push_back(std::move(fo));
      all.feats_gt.push_back(std::move(fg));
    }
  }
  std::vector<MetricReport> rows;
  for (const std::string& name : ratio_bucket_names()) {
    auto it = buckets.find(name);
    if (it != buckets.end())
      rows.push_back(detail::finish_bucket(name, it->second, opt));
  }
  rows.push_back(detail::finish_bucket("all", all, opt));
  return rows;
}

// ---------------------------------------------------------------------------
// Report rendering: aligned plain-text table plus JSON round-trip. Infinite
// PSNR serializes as the string "inf".
// ---------------------------------------------------------------------------

inline std::string format_metric(double v, int prec = 4) {
  if (std::isinf(v)) return "inf";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

inline std::string metric_table(const std::vector<MetricReport>& rows) {
  std::vector<std::array<std::string, 8>> cells;
  cells.push_back({"bucket", "n", "psnr", "ssim", "mae", "hole_psnr", "hole_mae",
                   "fid_proxy"});
  for (const MetricReport& r : rows)
    cells.push_back({r.key, std::to_string(r.n_samples), format_metric(r.psnr),
                     format_metric(r.ssim), format_metric(r.mae),
                     format_metric(r.hole_psnr), format_metric(r.hole_mae),
                     r.has_fid ? format_metric(r.fid_proxy) : std::string("-")});
  std::array<std::size_t, 8> width{};
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      if (c + 1 < row.size())
        out.append(width[c] - row[c].size() + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json j{{"key", r.key},       {"n_samples", r.n_samples},
                   {"ssim", r.ssim},     {"mae", r.mae},
                   {"hole_mae", r.hole_mae}};
  auto put_psnr = [&](const char* name, double v) {
    if (std::isinf(v))
      j[name] = "inf";
    else
      j[name] = v;
  };
  put_psnr("psnr", r.psnr);
  put_psnr("hole_psnr", r.hole_psnr);
  if (r.has_fid) j["fid_proxy"] = r.fid_proxy;
  return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.key = j.at("key").get<std::string>();
  r.n_samples = j.at("n_samples").get<int>();
  r.ssim = j.at("ssim").get<double>();
  r.mae = j.at("mae").get<double>();
  r.hole_mae = j.at("hole_mae").get<double>();
  auto get_psnr = [&](const char* name) {
    const nlohmann::json& v = j.at(name);
    if (v.is_string()) {
      RF_CHECK(v.get<std::string>() == "inf", ConfigError, "bad psnr value in ",
               name);
      return std::numeric_limits<double>::infinity();
    }
    return v.get<double>();
  };
  r.psnr = get_psnr("psnr");
  r.hole_psnr = get_psnr("hole_psnr");
  if (j.contains("fid_proxy")) {
    r.has_fid = true;
    r.fid_proxy = j.at("fid_proxy").get<double>();
  }
  return r;
}

inline nlohmann::json reports_to_json(const std::vector<MetricReport>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const MetricReport& r : rows) arr.push_back(report_to_json(r));
  return arr;
}

inline std::vector<MetricReport> reports_from_json(const nlohmann::json& arr) {
  RF_CHECK(arr.is_array(), ConfigError, "metric report json must be an array");
  std::vector<MetricReport> rows;
  for (const nlohmann::json& j : arr) rows.push_back(report_from_json(j));
  return rows;
}

}  // namespace roomfill
