#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "roomfill/image.hpp"
#include "roomfill/trainer.hpp"

namespace roomfill {

inline double median(std::vector<double> v) {
  RF_CHECK(!v.empty(), ConfigError, "median of an empty set");
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Boundary alignment inside holes: per column whose rounded ground-truth
// boundary row is masked, find the strongest vertical luminance edge of the
// output within the contiguous masked run around that row and record the
// pixel distance. Runs shorter than three rows carry no usable gradient.
inline std::vector<double> boundary_alignment_errors(const TensorF& out,
                                                     const CornerLayout& layout,
                                                     const TensorF& mask) {
  RF_CHECK_SHAPE(out.dim() == 3 && out.shape()[0] == 3, "output must be (3,H,W)");
  const int H = out.shape()[1];
  const int W = out.shape()[2];
  layout.validate(H);
  RF_CHECK_SHAPE(layout.W == W, "layout width ", layout.W, " vs image ", W);
  TensorF gray = to_gray(out);
  auto masked = [&](int r, int u) {
    return mask.data()[std::int64_t(r) * W + u] > 0.5f;
  };
  std::vector<double> errors;
  for (int u = 0; u < W; ++u) {
    for (const std::vector<double>* rows : {&layout.ceiling_row, &layout.floor_row}) {
      int gt = rounded_row((*rows)[std::size_t(u)], H, u);
      if (!masked(gt, u)) continue;
      int r0 = gt, r1 = gt;
      while (r0 > 0 && masked(r0 - 1, u)) --r0;
      while (r1 < H - 1 && masked(r1 + 1, u)) ++r1;
      r0 = std::max(r0, 1);
      r1 = std::min(r1, H - 2);
      if (r1 - r0 < 2) continue;
      int best = r0;
      double best_e = -1.0;
      for (int r = r0; r <= r1; ++r) {
        double e = std::abs(double(gray(r + 1, u)) - double(gray(r - 1, u)));
        if (e > best_e) {
          best_e = e;
          best = r;
        }
      }
      errors.push_back(std::abs(double(best - gt)));
    }
  }
  return errors;
}

// Median boundary alignment error of a model over a scene subset.
inline double model_boundary_error(Trainer& tr, const std::vector<Sample>& samples,
                                   const std::vector<int>& idx,
                                   const LayoutProvider& provider) {
  std::vector<double> all;
  for (int i : idx) {
    const Sample& s = samples[std::size_t(i)];
    InferResult r = tr.infer(s, provider);
    std::vector<double> e = boundary_alignment_errors(r.output, s.layout, s.mask);
    all.insert(all.end(), e.begin(), e.end());
  }
  return all.empty() ? std::numeric_limits<double>::quiet_NaN() : median(all);
}

inline constexpr std::array<double, 5> kSensitivityRatios{0.0, 0.05, 0.10, 0.30,
                                                          0.50};

struct ExperimentResult {
  std::string protocol;
  nlohmann::json rows;
  std::string table;
};

inline Trainer trainer_from_checkpoint_file(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  Trainer tr(ckpt.config);
  tr.restore(ckpt);
  tr.set_last_checkpoint(path);
  return tr;
}

namespace detail {

inline std::string simple_table(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      if (c + 1 < row.size()) out.append(width[c] - row[c].size() + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

struct EvalContext {
  std::vector<Sample> samples;
  std::vector<int> train_idx, eval_idx;
};

inline EvalContext load_eval_context(const TrainConfig& cfg) {
  EvalContext ctx;
  Manifest manifest = load_manifest(cfg.data_dir);
  ctx.samples = load_dataset(cfg.data_dir, manifest);
  split_dataset(ctx.samples, cfg.eval_on_train, ctx.train_idx, ctx.eval_idx);
  if (int(ctx.eval_idx.size()) > cfg.eval_samples)
    ctx.eval_idx.resize(std::size_t(cfg.eval_samples));
  return ctx;
}

inline const MetricReport& totals_row(const std::vector<MetricReport>& rows) {
  for (const MetricReport& r : rows)
    if (r.key == "all") return r;
  throw NumericalError("metric rows carry no totals entry");
}

}  // namespace detail

// Trains one model per variant on the same data and seed, then reports pooled
// metrics and the hole boundary alignment error for each. Always three rows.
inline ExperimentResult run_ablation(const TrainConfig& cfg) {
  namespace fs = std::filesystem;
  ExperimentResult res;
  res.protocol = "ablation";
  res.rows = nlohmann::json::array();
  std::vector<std::vector<std::string>> cells = {
      {"variant", "psnr", "ssim", "mae", "fid_proxy", "hole_psnr",
       "boundary_err"}};
  for (const char* variant : {"backbone", "layout_map_only", "full"}) {
    TrainConfig vc = cfg;
    vc.variant = variant;
    vc.out_dir = (fs::path(cfg.out_dir) / variant).string();
    TrainResult tr = train(vc);
    Trainer model = trainer_from_checkpoint_file(tr.last_checkpoint);
    detail::EvalContext ctx = detail::load_eval_context(vc);
    OracleLayoutProvider provider;
    StratifyOptions opt;
    opt.with_fid = cfg.eval_with_fid;
    std::vector<MetricReport> rows = detail::eval_model(
        model, ctx.samples, ctx.eval_idx, provider, opt, vc.batch_size);
    const MetricReport& all = detail::totals_row(rows);
    double berr = model_boundary_error(model, ctx.samples, ctx.eval_idx, provider);
    nlohmann::json row{{"variant", variant},
                       {"ssim", all.ssim},
                       {"mae", all.mae},
                       {"hole_mae", all.hole_mae},
                       {"boundary_err", berr},
                       {"checkpoint", tr.last_checkpoint}};
    row["psnr"] = std::isinf(all.psnr) ? nlohmann::json("inf")
                                       : nlohmann::json(all.psnr);
    row["hole_psnr"] = std::isinf(all.hole_psnr) ? nlohmann::json("inf")
                                                 : nlohmann::json(all.hole_psnr);
    if (all.has_fid) row["fid_proxy"] = all.fid_proxy;
    res.rows.push_back(row);
    cells.push_back({variant, format_metric(all.psnr), format_metric(all.ssim),
                     format_metric(all.mae),
                     all.has_fid ? format_metric(all.fid_proxy) : "-",
                     format_metric(all.hole_psnr), format_metric(berr, 2)});
  }
  res.table = detail::simple_table(cells);
  return res;
}

// Trains once, then reports the stratified metric rows verbatim.
inline ExperimentResult run_mask_size(const TrainConfig& cfg) {
  TrainResult tr = train(cfg);
  Trainer model = trainer_from_checkpoint_file(tr.last_checkpoint);
  detail::EvalContext ctx = detail::load_eval_context(cfg);
  OracleLayoutProvider provider;
  StratifyOptions opt;
  opt.with_fid = cfg.eval_with_fid;
  std::vector<MetricReport> rows = detail::eval_model(
      model, ctx.samples, ctx.eval_idx, provider, opt, cfg.batch_size);
  ExperimentResult res;
  res.protocol = "mask_size";
  res.rows = reports_to_json(rows);
  res.table = metric_table(rows);
  return res;
}

// Trains once, then evaluates with progressively degraded layouts; each row
// carries the measured mean mIOU of the degraded layouts it used.
inline ExperimentResult run_layout_sensitivity(const TrainConfig& cfg) {
  TrainResult tr = train(cfg);
  Trainer model = trainer_from_checkpoint_file(tr.last_checkpoint);
  detail::EvalContext ctx = detail::load_eval_context(cfg);
  std::vector<Sample> eval_scenes;
  for (int i : ctx.eval_idx) eval_scenes.push_back(ctx.samples[std::size_t(i)]);
  const std::uint64_t seed = derive_seed(cfg.seed, "layout-sensitivity");
  ExperimentResult res;
  res.protocol = "layout_sensitivity";
  res.rows = nlohmann::json::array();
  std::vector<std::vector<std::string>> cells = {
      {"ratio", "miou", "psnr", "ssim", "mae", "hole_psnr"}};
  StratifyOptions opt;
  opt.with_fid = cfg.eval_with_fid;
  for (double ratio : kSensitivityRatios) {
    DegradedLayoutProvider provider(ratio, seed);
    double miou = mean_degraded_miou(eval_scenes, ratio, seed);
    std::vector<MetricReport> rows = detail::eval_model(
        model, ctx.samples, ctx.eval_idx, provider, opt, cfg.batch_size);
    const MetricReport& all = detail::totals_row(rows);
    nlohmann::json row{{"ratio", ratio},
                       {"miou", miou},
                       {"ssim", all.ssim},
                       {"mae", all.mae},
                       {"hole_mae", all.hole_mae}};
    row["psnr"] = std::isinf(all.psnr) ? nlohmann::json("inf")
                                       : nlohmann::json(all.psnr);
    row["hole_psnr"] = std::isinf(all.hole_psnr) ? nlohmann::json("inf")
                                                 : nlohmann::json(all.hole_psnr);
    res.rows.push_back(row);
    cells.push_back({format_metric(ratio, 2), format_metric(miou),
                     format_metric(all.psnr), format_metric(all.ssim),
                     format_metric(all.mae), format_metric(all.hole_psnr)});
  }
  res.table = detail::simple_table(cells);
  return res;
}

inline ExperimentResult run_experiment(const std::string& protocol,
                                       const TrainConfig& cfg) {
  if (protocol == "ablation") return run_ablation(cfg);
  if (protocol == "mask_size") return run_mask_size(cfg);
  if (protocol == "layout_sensitivity") return run_layout_sensitivity(cfg);
  throw ConfigError(strcat_msg("unknown protocol '", protocol,
                               "' (expected ablation, mask_size or layout_sensitivity)"));
}

}  // namespace roomfill
