#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "roomfill/checkpoint.hpp"
#include "roomfill/config.hpp"
#include "roomfill/dataset.hpp"
#include "roomfill/discriminator.hpp"
#include "roomfill/feature_extractor.hpp"
#include "roomfill/generator.hpp"
#include "roomfill/losses.hpp"
#include "roomfill/metrics.hpp"
#include "roomfill/provider.hpp"

namespace roomfill {

// Per-step loss terms (raw, before weighting, except total and adv_d which are
// the optimized objectives). Bitwise equality doubles as the determinism check.
struct LossReport {
  std::uint64_t step = 0;
  double rec = 0.0;
  double perc = 0.0;
  double style = 0.0;
  double adv_g = 0.0;
  double adv_d = 0.0;
  double total = 0.0;

  bool operator==(const LossReport& o) const {
    return step == o.step && rec == o.rec && perc == o.perc &&
           style == o.style && adv_g == o.adv_g && adv_d == o.adv_d &&
           total == o.total;
  }
};

inline nlohmann::json loss_report_to_json(const LossReport& r) {
  return nlohmann::json{{"step", r.step},     {"L_rec", r.rec},
                        {"L_perc", r.perc},   {"L_sty", r.style},
                        {"L_G", r.adv_g},     {"L_D", r.adv_d},
                        {"L_total", r.total}};
}

class Adam {
 public:
  Adam(double lr, double b1, double b2, double eps)
      : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

  void init(const std::vector<nn::Parameter<float>*>& ps) {
    m_.clear();
    v_.clear();
    for (const auto* p : ps) {
      m_.emplace_back(p->value.shape(), 0.0f);
      v_.emplace_back(p->value.shape(), 0.0f);
    }
    t_ = 0;
  }

  void step(const std::vector<nn::Parameter<float>*>& ps) {
    RF_CHECK(ps.size() == m_.size(), ShapeError,
             "optimizer state does not match parameter count");
    ++t_;
    const float c1 = float(1.0 - std::pow(b1_, double(t_)));
    const float c2 = float(1.0 - std::pow(b2_, double(t_)));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      nn::Parameter<float>& p = *ps[i];
      RF_CHECK_SHAPE(p.grad.same_shape(p.value), "missing gradient for ", p.name);
      float* m = m_[i].data();
      float* v = v_[i].data();
      float* g = p.grad.data();
      float* x = p.value.data();
      for (std::int64_t j = 0; j < p.value.numel(); ++j) {
        m[j] = float(b1_) * m[j] + float(1.0 - b1_) * g[j];
        v[j] = float(b2_) * v[j] + float(1.0 - b2_) * g[j] * g[j];
        x[j] -= float(lr_) * (m[j] / c1) / (std::sqrt(v[j] / c2) + float(eps_));
      }
    }
  }

  std::uint64_t t() const { return t_; }
  void set_t(std::uint64_t t) { t_ = t; }
  void set_lr(double lr) { lr_ = lr; }
  std::vector<Tensor<float>>& moments_m() { return m_; }
  std::vector<Tensor<float>>& moments_v() { return v_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Tensor<float>> m_, v_;
};

// One training batch with layout channels already rendered from whatever
// provider supplied the layouts.
struct Batch {
  TensorF gt;        // (N,3,H,W)
  TensorF input;     // gt with holes zeroed
  TensorF mask;      // (N,1,H,W)
  TensorF line_map;  // (N,1,H,W)
  std::vector<LabelMap> three_class;
  std::vector<LabelMap> plane_wise;
};

inline Batch make_batch(const std::vector<const Sample*>& samples,
                        const LayoutProvider& provider) {
  RF_CHECK(!samples.empty(), ConfigError, "empty batch");
  const int n = int(samples.size());
  const int h = samples[0]->image.shape()[1];
  const int w = samples[0]->image.shape()[2];
  Batch b;
  b.gt = TensorF({n, 3, h, w});
  b.input = TensorF({n, 3, h, w});
  b.mask = TensorF({n, 1, h, w});
  b.line_map = TensorF({n, 1, h, w});
  const std::int64_t plane = std::int64_t(h) * w;
  for (int i = 0; i < n; ++i) {
    const Sample& s = *samples[std::size_t(i)];
    RF_CHECK_SHAPE(s.image.shape()[1] == h && s.image.shape()[2] == w,
                   "mixed sample sizes in batch");
    CornerLayout layout = provider.get(s);
    TensorF lm = render_boundary_map(layout, h);
    LabelMap l3 = derive_three_class(layout, h);
    b.three_class.push_back(l3);
    b.plane_wise.push_back(derive_plane_wise(l3, layout));
    std::copy_n(s.image.data(), 3 * plane, b.gt.data() + std::int64_t(i) * 3 * plane);
    std::copy_n(s.mask.data(), plane, b.mask.data() + std::int64_t(i) * plane);
    std::copy_n(lm.data(), plane, b.line_map.data() + std::int64_t(i) * plane);
    for (int c = 0; c < 3; ++c) {
      const float* src = s.image.data() + std::int64_t(c) * plane;
      float* dst = b.input.data() + (std::int64_t(i) * 3 + c) * plane;
      for (std::int64_t j = 0; j < plane; ++j)
        dst[j] = src[j] * (1.0f - s.mask.data()[j]);
    }
  }
  return b;
}

struct InferResult {
  TensorF output;     // (3,H,W) raw generator output
  TensorF composite;  // holes from the output, everything else from the input
};

class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg)
      : cfg_(cfg),
        g_rng_(derive_seed(cfg.seed, "generator-init")),
        d_rng_(derive_seed(cfg.seed, "discriminator-init")),
        gen_(make_arch(cfg), g_rng_),
        disc_(cfg.d_base_channels, d_rng_),
        adam_g_(cfg.lr, cfg.adam_b1, cfg.adam_b2, cfg.adam_eps),
        adam_d_(cfg.lr, cfg.adam_b1, cfg.adam_b2, cfg.adam_eps) {
    cfg_.validate();
    adam_g_.init(gen_.params());
    adam_d_.init(disc_.params());
  }

  static nn::GenArch make_arch(const TrainConfig& cfg) {
    nn::GenArch a;
    a.base_channels = cfg.base_channels;
    a.style_dim = cfg.style_dim;
    a.residual_blocks = cfg.residual_blocks;
    a.pa_blocks = cfg.pa_blocks;
    a.mode = cfg.mode();
    return a;
  }

  // One discriminator update on the detached output, then one generator
  // update against the refreshed discriminator.
  LossReport train_step(const Batch& batch) {
    const nn::LossWeights w = cfg_.weights();
    // Linear decay toward lr_final across the step budget. Depends only on
    // step index and config, so resumed runs retrace the same trajectory.
    if (cfg_.lr_final > 0.0 && cfg_.max_steps > 1) {
      double f = std::min(1.0, double(step_) / double(cfg_.max_steps - 1));
      double lr = cfg_.lr + (cfg_.lr_final - cfg_.lr) * f;
      adam_g_.set_lr(lr);
      adam_d_.set_lr(lr);
    }
    LossReport rep;
    rep.step = step_;

    ad::TapeF tg;
    gen_.bind(tg, true);
    nn::Generator<float>::Inputs in;
    in.image = &batch.input;
    in.mask = &batch.mask;
    in.line_map = &batch.line_map;
    in.three_class = &batch.three_class;
    in.plane_wise = &batch.plane_wise;
    auto out = gen_.forward(tg, in);

    // With both adversarial weights at zero the discriminator cannot affect
    // anything; skip its update and score pass entirely.
    const bool use_adv = w.adv_g != 0.0 || w.adv_d != 0.0;
    int d_fake_live;
    if (use_adv) {
      TensorF fake = tg.val(out.image_id);
      disc_.power_iterate();
      {
        ad::TapeF td;
        disc_.bind(td, true);
        int d_fake = disc_.forward(td, td.constant(std::move(fake)));
        int d_real = disc_.forward(td, td.constant(batch.gt));
        int dl = nn::discriminator_loss(td, d_fake, d_real, w.adv_d);
        rep.adv_d = double(td.val(dl)[0]);
        check_finite(rep.adv_d, "discriminator loss");
        td.backward(dl);
        disc_.read_grads(td);
        check_grads(disc_.params(), "discriminator");
        adam_d_.step(disc_.params());
      }
      disc_.bind(tg, false);  // updated weights, frozen for the generator pass
      d_fake_live = disc_.forward(tg, out.image_id);
    } else {
      rep.adv_d = 0.0;
      d_fake_live = tg.constant(TensorF({batch.gt.shape()[0], 1, 1, 1}));
    }
    int gt_id = tg.constant(batch.gt);
    auto ids = nn::generator_total_loss(tg, extractor_, out.image_id, gt_id,
                                    batch.mask, d_fake_live, w);
    rep.rec = double(tg.val(ids.rec)[0]);
    rep.perc = double(tg.val(ids.perc)[0]);
    rep.style = double(tg.val(ids.style)[0]);
    rep.adv_g = double(tg.val(ids.adv)[0]);
    rep.total = double(tg.val(ids.total)[0]);
    check_finite(rep.total, "generator loss");
    tg.backward(ids.total);
    gen_.read_grads(tg);
    check_grads(gen_.params(), "generator");
    adam_g_.step(gen_.params());

    ++step_;
    return rep;
  }

  // Forward pass without gradients; returns the raw output batch values.
  TensorF forward_batch(const Batch& batch) {
    ad::TapeF t;
    gen_.bind(t, false);
    nn::Generator<float>::Inputs in;
    in.image = &batch.input;
    in.mask = &batch.mask;
    in.line_map = &batch.line_map;
    in.three_class = &batch.three_class;
    in.plane_wise = &batch.plane_wise;
    auto out = gen_.forward(t, in);
    return t.val(out.image_id);
  }

  InferResult infer(const Sample& s, const LayoutProvider& provider) {
    std::vector<const Sample*> one = {&s};
    Batch b = make_batch(one, provider);
    TensorF out = forward_batch(b);
    InferResult r;
    const int h = s.image.shape()[1], w = s.image.shape()[2];
    r.output = TensorF({3, h, w});
    std::copy_n(out.data(), out.numel(), r.output.data());
    r.composite = TensorF({3, h, w});
    const std::int64_t plane = std::int64_t(h) * w;
    for (int c = 0; c < 3; ++c)
      for (std::int64_t j = 0; j < plane; ++j) {
        float m = b.mask.data()[j];
        r.composite.data()[c * plane + j] =
            m * r.output.data()[c * plane + j] +
            (1.0f - m) * b.input.data()[c * plane + j];
      }
    return r;
  }

  Checkpoint make_checkpoint() {
    Checkpoint c;
    c.step = step_;
    c.seed = cfg_.seed;
    c.adam_t_g = adam_g_.t();
    c.adam_t_d = adam_d_.t();
    c.config = cfg_;
    c.metrics = latest_metrics_;
    auto add = [&](const char* prefix, std::vector<nn::Parameter<float>*>& ps,
                   Adam& adam) {
      for (std::size_t i = 0; i < ps.size(); ++i) {
        std::string name = std::string(prefix) + ps[i]->name;
        c.params.emplace_back(name, ps[i]->value);
        c.opt_state.emplace_back("m:" + name, adam.moments_m()[i]);
        c.opt_state.emplace_back("v:" + name, adam.moments_v()[i]);
      }
    };
    add("g/", gen_.params(), adam_g_);
    add("d/", disc_.params(), adam_d_);
    auto& sn = disc_.sn_state();
    for (std::size_t i = 0; i < sn.size(); ++i)
      c.aux.emplace_back(strcat_msg("d/sn_u/", i), *sn[i]);
    return c;
  }

  void restore(const Checkpoint& c) {
    auto restore_list = [&](const char* prefix,
                            std::vector<nn::Parameter<float>*>& ps, Adam& adam,
                            std::size_t offset) {
      for (std::size_t i = 0; i < ps.size(); ++i) {
        std::size_t k = offset + i;
        RF_CHECK(k < c.params.size(), CheckpointMismatchError,
                 "checkpoint has too few parameters");
        const auto& [name, value] = c.params[k];
        RF_CHECK(name == std::string(prefix) + ps[i]->name,
                 CheckpointMismatchError, "parameter order mismatch: expected ",
                 prefix, ps[i]->name, ", found ", name);
        RF_CHECK_SHAPE(value.same_shape(ps[i]->value), "parameter ", name,
                       " has shape ", shape_str(value.shape()), ", expected ",
                       shape_str(ps[i]->value.shape()));
        ps[i]->value = value;
        const auto& m = c.opt_state[2 * k];
        const auto& v = c.opt_state[2 * k + 1];
        RF_CHECK(m.first == "m:" + name && v.first == "v:" + name,
                 CheckpointMismatchError, "optimizer state mismatch at ", name);
        adam.moments_m()[i] = m.second;
        adam.moments_v()[i] = v.second;
      }
    };
    RF_CHECK(c.params.size() == gen_.params().size() + disc_.params().size(),
             CheckpointMismatchError, "checkpoint holds ", c.params.size(),
             " parameters, model has ",
             gen_.params().size() + disc_.params().size());
    RF_CHECK(c.opt_state.size() == 2 * c.params.size(), CheckpointMismatchError,
             "optimizer state count mismatch");
    restore_list("g/", gen_.params(), adam_g_, 0);
    restore_list("d/", disc_.params(), adam_d_, gen_.params().size());
    auto& sn = disc_.sn_state();
    RF_CHECK(c.aux.size() == sn.size(), CheckpointMismatchError,
             "spectral state count mismatch: ", c.aux.size(), " vs ", sn.size());
    for (std::size_t i = 0; i < sn.size(); ++i) {
      RF_CHECK(c.aux[i].second.size() == sn[i]->size(), CheckpointMismatchError,
               "spectral vector size mismatch at ", c.aux[i].first);
      *sn[i] = c.aux[i].second;
    }
    adam_g_.set_t(c.adam_t_g);
    adam_d_.set_t(c.adam_t_d);
    step_ = c.step;
  }

  std::uint64_t params_hash() {
    Checkpoint c = make_checkpoint();
    return param_hash(c.params);
  }

  std::uint64_t step_count() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  nn::Generator<float>& generator() { return gen_; }
  nn::PatchDiscriminator<float>& discriminator() { return disc_; }
  void set_last_checkpoint(const std::string& path) { last_checkpoint_ = path; }
  const std::string& last_checkpoint() const { return last_checkpoint_; }
  void set_latest_metrics(nlohmann::json m) { latest_metrics_ = std::move(m); }

 private:
  void check_finite(double v, const char* what) const {
    RF_CHECK(std::isfinite(v), NumericalError, "non-finite ", what, " at step ",
             step_, "; last good checkpoint: ",
             last_checkpoint_.empty() ? "none" : last_checkpoint_);
  }

  void check_grads(const std::vector<nn::Parameter<float>*>& ps,
                   const char* what) const {
    for (const auto* p : ps)
      RF_CHECK(p->grad.dim() == 0 || p->grad.all_finite(), NumericalError,
               "non-finite ", what, " gradient for ", p->name, " at step ",
               step_, "; last good checkpoint: ",
               last_checkpoint_.empty() ? "none" : last_checkpoint_);
  }

  TrainConfig cfg_;
  Rng g_rng_;
  Rng d_rng_;
  nn::Generator<float> gen_;
  nn::PatchDiscriminator<float> disc_;
  Adam adam_g_;
  Adam adam_d_;
  nn::RandomPyramidExtractor<float> extractor_;
  std::uint64_t step_ = 0;
  std::string last_checkpoint_;
  nlohmann::json latest_metrics_;
};

// ---------------------------------------------------------------------------
// Dataset-driven training loop.
// ---------------------------------------------------------------------------

struct TrainResult {
  std::uint64_t final_step = 0;
  std::string last_checkpoint;
  std::string train_log;
  std::string eval_log;
  bool early_stopped = false;
  double last_hole_psnr = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::vector<int> pick_batch(std::uint64_t seed, std::uint64_t step,
                                   const std::vector<int>& pool, int batch) {
  Rng rng(derive_seed(seed, "batch", step));
  std::vector<int> out;
  out.reserve(std::size_t(batch));
  for (int i = 0; i < batch; ++i)
    out.push_back(pool[rng.uniform_index(pool.size())]);
  return out;
}

inline std::vector<MetricReport> eval_model(Trainer& tr,
                                            const std::vector<Sample>& samples,
                                            const std::vector<int>& idx,
                                            const LayoutProvider& provider,
                                            const StratifyOptions& opt,
                                            int chunk) {
  std::vector<TensorF> outs, gts, masks;
  for (std::size_t at = 0; at < idx.size(); at += std::size_t(chunk)) {
    std::vector<const Sample*> part;
    for (std::size_t i = at; i < std::min(idx.size(), at + std::size_t(chunk)); ++i)
      part.push_back(&samples[std::size_t(idx[i])]);
    Batch b = make_batch(part, provider);
    TensorF out = tr.forward_batch(b);
    const int h = out.shape()[2], w = out.shape()[3];
    const std::int64_t plane = std::int64_t(h) * w;
    for (std::size_t i = 0; i < part.size(); ++i) {
      TensorF o({3, h, w});
      std::copy_n(out.data() + std::int64_t(i) * 3 * plane, 3 * plane, o.data());
      outs.push_back(std::move(o));
      gts.push_back(part[i]->image);
      masks.push_back(part[i]->mask);
    }
  }
  return evaluate_stratified(outs, gts, masks, opt);
}

inline double report_hole_psnr(const std::vector<MetricReport>& rows) {
  for (const MetricReport& r : rows)
    if (r.key == "all") return r.hole_psnr;
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

// Splits scenes by seed parity into train/eval halves unless eval_on_train is
// set, in which case both sides see every scene.
inline void split_dataset(const std::vector<Sample>& samples, bool eval_on_train,
                          std::vector<int>& train_idx, std::vector<int>& eval_idx) {
  train_idx.clear();
  eval_idx.clear();
  for (int i = 0; i < int(samples.size()); ++i) {
    if (eval_on_train) {
      train_idx.push_back(i);
      eval_idx.push_back(i);
    } else if (samples[std::size_t(i)].seed % 2 == 0) {
      train_idx.push_back(i);
    } else {
      eval_idx.push_back(i);
    }
  }
  if (train_idx.empty()) train_idx = eval_idx;
  if (eval_idx.empty()) eval_idx = train_idx;
}

inline TrainResult train(const TrainConfig& cfg,
                         const std::string& resume_path = "") {
  namespace fs = std::filesystem;
  cfg.validate();
  RF_CHECK(!cfg.data_dir.empty(), ConfigError, "data_dir is not set");
  RF_CHECK(!cfg.out_dir.empty(), ConfigError, "out_dir is not set");
  Manifest manifest = load_manifest(cfg.data_dir);
  RF_CHECK(manifest.config.height == cfg.height &&
               manifest.config.width == cfg.width,
           ConfigError, "dataset is ", manifest.config.width, "x",
           manifest.config.height, ", config wants ", cfg.width, "x", cfg.height);
  std::vector<Sample> samples = load_dataset(cfg.data_dir, manifest);
  RF_CHECK(!samples.empty(), ConfigError, "dataset is empty: ", cfg.data_dir);

  std::vector<int> train_idx, eval_idx;
  split_dataset(samples, cfg.eval_on_train, train_idx, eval_idx);
  if (int(eval_idx.size()) > cfg.eval_samples)
    eval_idx.resize(std::size_t(cfg.eval_samples));

  Trainer trainer(cfg);
  if (!resume_path.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_path);
    require_config_match(ckpt.config, cfg);
    trainer.restore(ckpt);
    trainer.set_last_checkpoint(resume_path);
  }

  fs::create_directories(cfg.out_dir);
  TrainResult result;
  result.train_log = (fs::path(cfg.out_dir) / "train_log.jsonl").string();
  result.eval_log = (fs::path(cfg.out_dir) / "eval_log.jsonl").string();
  std::ofstream train_log(result.train_log, std::ios::app);
  std::ofstream eval_log(result.eval_log, std::ios::app);
  RF_CHECK(train_log.good() && eval_log.good(), IoError,
           "cannot open logs under ", cfg.out_dir);

  OracleLayoutProvider provider;
  StratifyOptions eval_opt;
  eval_opt.with_fid = cfg.eval_with_fid;

  auto save = [&](std::uint64_t step) {
    char name[32];
    std::snprintf(name, sizeof(name), "ckpt-%07llu.bin",
                  static_cast<unsigned long long>(step));
    std::string path = (fs::path(cfg.out_dir) / name).string();
    save_checkpoint(path, trainer.make_checkpoint());
    trainer.set_last_checkpoint(path);
    result.last_checkpoint = path;
  };
  if (trainer.step_count() == 0) save(0);

  const std::uint64_t max_steps = std::uint64_t(cfg.max_steps);
  for (std::uint64_t k = trainer.step_count(); k < max_steps; ++k) {
    std::vector<int> idx = detail::pick_batch(cfg.seed, k, train_idx,
                                              cfg.batch_size);
    std::vector<const Sample*> ptrs;
    for (int i : idx) ptrs.push_back(&samples[std::size_t(i)]);
    Batch batch = make_batch(ptrs, provider);
    LossReport rep = trainer.train_step(batch);
    const std::uint64_t done = k + 1;
    if (k % std::uint64_t(cfg.log_every) == 0 || done == max_steps)
      train_log << loss_report_to_json(rep).dump() << "\n" << std::flush;

    bool stop = false;
    if (cfg.eval_every > 0 &&
        (done % std::uint64_t(cfg.eval_every) == 0 || done == max_steps)) {
      std::vector<MetricReport> rows = detail::eval_model(
          trainer, samples, eval_idx, provider, eval_opt, cfg.batch_size);
      trainer.set_latest_metrics(reports_to_json(rows));
      eval_log << nlohmann::json{{"step", done},
                                 {"rows", reports_to_json(rows)}}
                      .dump()
               << "\n"
               << std::flush;
      result.last_hole_psnr = detail::report_hole_psnr(rows);
      if (cfg.early_stop_hole_psnr > 0.0 &&
          result.last_hole_psnr >= cfg.early_stop_hole_psnr) {
        result.early_stopped = true;
        stop = true;
      }
    }
    if (stop || done == max_steps ||
        (cfg.checkpoint_every > 0 &&
         done % std::uint64_t(cfg.checkpoint_every) == 0))
      save(done);
    if (stop) break;
  }
  result.final_step = trainer.step_count();
  RF_CHECK(train_log.good() && eval_log.good(), IoError,
           "log write failed under ", cfg.out_dir);
  return result;
}

}  // namespace roomfill
