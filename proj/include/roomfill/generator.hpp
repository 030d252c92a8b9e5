#pragma once

#include <memory>
#include <string>
#include <vector>

#include "roomfill/modules.hpp"
#include "roomfill/normalization.hpp"
#include "roomfill/ops.hpp"

namespace roomfill::nn {

struct GenArch {
  int base_channels = 64;
  int style_dim = 512;
  int residual_blocks = 8;
  int pa_blocks = 2;
  NormMode mode = NormMode::kFull;
};

// Inpainting generator. Input is the masked panorama, the hole mask and the
// boundary-line map stacked to five channels; two stride-2 encoder stages,
// a dilated residual trunk, then a decoder whose residual and upsampling
// stages are modulated per plane; the head is squashed to [0,1].
template <typename T>
class Generator {
 public:
  Generator(const GenArch& arch, Rng& rng) : arch_(arch) {
    int c = arch.base_channels;
    RF_CHECK(c >= 4, ConfigError, "base_channels must be >= 4, got ", c);
    RF_CHECK(arch.style_dim >= 4, ConfigError, "style_dim must be >= 4");
    stem_ = std::make_unique<Conv2d<T>>("g.stem", 5, c, 7, 1, 3, 1, rng);
    norm0_ = std::make_unique<ChannelNorm<T>>("g.norm0", c);
    down1_ = std::make_unique<Conv2d<T>>("g.down1", c, 2 * c, 4, 2, 1, 1, rng);
    norm1_ = std::make_unique<ChannelNorm<T>>("g.norm1", 2 * c);
    down2_ = std::make_unique<Conv2d<T>>("g.down2", 2 * c, 4 * c, 4, 2, 1, 1, rng);
    norm2_ = std::make_unique<ChannelNorm<T>>("g.norm2", 4 * c);
    InitSpec tail{0.1, -1.0, 0.0};  // keep residual branches small at init
    for (int i = 0; i < arch.residual_blocks; ++i) {
      std::string p = "g.res" + std::to_string(i);
      res_.push_back(ResBlock{
          std::make_unique<Conv2d<T>>(p + ".a", 4 * c, 4 * c, 3, 1, 2, 2, rng),
          std::make_unique<ChannelNorm<T>>(p + ".na", 4 * c),
          std::make_unique<Conv2d<T>>(p + ".b", 4 * c, 4 * c, 3, 1, 1, 1, rng, tail),
          std::make_unique<ChannelNorm<T>>(p + ".nb", 4 * c)});
    }
    for (int i = 0; i < arch.pa_blocks; ++i) {
      std::string p = "g.pa" + std::to_string(i);
      pa_.push_back(PaBlock{
          std::make_unique<Conv2d<T>>(p + ".a", 4 * c, 4 * c, 3, 1, 1, 1, rng),
          std::make_unique<PlaneAwareNorm<T>>(p + ".na", 4 * c, arch.style_dim,
                                              arch.mode, rng),
          std::make_unique<Conv2d<T>>(p + ".b", 4 * c, 4 * c, 3, 1, 1, 1, rng, tail),
          std::make_unique<PlaneAwareNorm<T>>(p + ".nb", 4 * c, arch.style_dim,
                                              arch.mode, rng)});
    }
    up1_ = std::make_unique<Conv2d<T>>("g.up1", 4 * c, 2 * c, 3, 1, 1, 1, rng);
    pan_u1_ = std::make_unique<PlaneAwareNorm<T>>("g.up1.n", 2 * c,
                                                  arch.style_dim, arch.mode, rng);
    up2_ = std::make_unique<Conv2d<T>>("g.up2", 2 * c, c, 3, 1, 1, 1, rng);
    pan_u2_ = std::make_unique<PlaneAwareNorm<T>>("g.up2.n", c, arch.style_dim,
                                                  arch.mode, rng);
    head_ = std::make_unique<Conv2d<T>>("g.head", c, 3, 3, 1, 1, 1, rng);
    if (arch.mode == NormMode::kFull) {
      se1_ = std::make_unique<PartialConv<T>>("g.se1", 3, 2 * c, 3, 1, 1, rng);
      se2_ = std::make_unique<PartialConv<T>>("g.se2", 2 * c, arch.style_dim, 3,
                                              2, 1, rng);
    }
    collect();
  }

  struct Inputs {
    const Tensor<T>* image = nullptr;     // masked panorama (N,3,H,W)
    const Tensor<T>* mask = nullptr;      // (N,1,H,W), 1 inside holes
    const Tensor<T>* line_map = nullptr;  // (N,1,H,W)
    const std::vector<LabelMap>* three_class = nullptr;  // full resolution
    const std::vector<LabelMap>* plane_wise = nullptr;
  };

  struct Output {
    int image_id = -1;    // (N,3,H,W) in [0,1]
    int style_codes = -1; // (N,P,style_dim), full variant only
    std::vector<std::vector<char>> missing_planes;  // [sample][plane]
  };

  Output forward(ad::Tape<T>& t, const Inputs& in) const {
    RF_CHECK(in.image && in.mask && in.line_map, ShapeError,
             "generator: image, mask and line map are required");
    const Tensor<T>& img = *in.image;
    ad::detail::check_4d(img, "generator image");
    int n = img.shape()[0], h = img.shape()[2], w = img.shape()[3];
    RF_CHECK_SHAPE(img.shape()[1] == 3, "generator image must have 3 channels");
    RF_CHECK(h % 4 == 0 && w % 4 == 0, ConfigError,
             "generator needs H and W divisible by 4, got ", h, "x", w);
    RF_CHECK_SHAPE(in.mask->dim() == 4 && in.mask->shape()[0] == n &&
                       in.mask->shape()[1] == 1 && in.mask->shape()[2] == h &&
                       in.mask->shape()[3] == w,
                   "generator mask shape ", shape_str(in.mask->shape()));
    RF_CHECK_SHAPE(in.line_map->dim() == 4 && in.line_map->shape()[0] == n &&
                       in.line_map->shape()[1] == 1 &&
                       in.line_map->shape()[2] == h && in.line_map->shape()[3] == w,
                   "generator line map shape ", shape_str(in.line_map->shape()));

    int img_id = t.constant(img);
    int mask_id = t.constant(*in.mask);
    int lm_id;
    if (arch_.mode == NormMode::kBackbone) {
      lm_id = t.constant(Tensor<T>({n, 1, h, w}));  // boundary cue withheld
    } else {
      lm_id = t.constant(*in.line_map);
    }
    int x5 = ad::concat_channels(t, {img_id, mask_id, lm_id});

    // Layout maps per decoder resolution.
    int l3_full = -1, l3_half = -1, l3_quarter = -1;
    std::shared_ptr<ad::RegionSpec> spec_full, spec_half, spec_quarter;
    Output out;
    if (arch_.mode != NormMode::kBackbone) {
      RF_CHECK(in.three_class && int(in.three_class->size()) == n, ShapeError,
               "generator: need one 3-class map per sample");
      std::vector<LabelMap> half, quarter;
      for (const LabelMap& lm : *in.three_class) {
        RF_CHECK_SHAPE(lm.shape()[0] == h && lm.shape()[1] == w,
                       "3-class map shape ", shape_str(lm.shape()));
        half.push_back(ad::downsample_labels(lm, h / 2, w / 2));
        quarter.push_back(ad::downsample_labels(lm, h / 4, w / 4));
      }
      l3_full = t.constant(one_hot_labels<T>(*in.three_class, 3));
      l3_half = t.constant(one_hot_labels<T>(half, 3));
      l3_quarter = t.constant(one_hot_labels<T>(quarter, 3));
    }
    int sm_full = -1, sm_half = -1, sm_quarter = -1;
    if (arch_.mode == NormMode::kFull) {
      RF_CHECK(in.plane_wise && int(in.plane_wise->size()) == n, ShapeError,
               "generator: need one plane-wise map per sample");
      int planes = 0;
      for (const LabelMap& lm : *in.plane_wise)
        planes = std::max(planes, int(lm.max_value()) + 1);
      std::vector<LabelMap> pw_half, pw_quarter;
      for (const LabelMap& lm : *in.plane_wise) {
        RF_CHECK_SHAPE(lm.shape()[0] == h && lm.shape()[1] == w,
                       "plane-wise map shape ", shape_str(lm.shape()));
        pw_half.push_back(ad::downsample_labels(lm, h / 2, w / 2));
        pw_quarter.push_back(ad::downsample_labels(lm, h / 4, w / 4));
      }
      spec_full = std::make_shared<ad::RegionSpec>(
          ad::RegionSpec::build(*in.plane_wise, planes));
      spec_half = std::make_shared<ad::RegionSpec>(
          ad::RegionSpec::build(pw_half, planes));
      spec_quarter = std::make_shared<ad::RegionSpec>(
          ad::RegionSpec::build(pw_quarter, planes));

      // Style codes from valid pixels only, pooled per plane at half
      // resolution, reused at every decoder resolution.
      Tensor<T> valid(in.mask->shape());
      for (std::int64_t i = 0; i < valid.numel(); ++i)
        valid[i] = T(1) - (*in.mask)[i];
      auto s1 = se1_->forward(t, img_id, valid);
      int s1r = ad::relu(t, s1.y);
      auto s2 = se2_->forward(t, s1r, s1.mask);
      int s2r = ad::relu(t, s2.y);
      out.style_codes = ad::region_mean(t, s2r, spec_half);
      out.missing_planes.resize(std::size_t(n));
      for (int ni = 0; ni < n; ++ni) {
        out.missing_planes[std::size_t(ni)].resize(std::size_t(planes));
        for (int p = 0; p < planes; ++p)
          out.missing_planes[std::size_t(ni)][std::size_t(p)] =
              spec_half->missing(ni, p) ? 1 : 0;
      }
      sm_full = ad::region_broadcast(t, out.style_codes, spec_full, arch_.style_dim);
      sm_half = ad::region_broadcast(t, out.style_codes, spec_half, arch_.style_dim);
      sm_quarter =
          ad::region_broadcast(t, out.style_codes, spec_quarter, arch_.style_dim);
    }

    int e0 = ad::relu(t, norm0_->forward(t, stem_->forward(t, x5)));
    int e1 = ad::relu(t, norm1_->forward(t, down1_->forward(t, e0)));
    int e2 = ad::relu(t, norm2_->forward(t, down2_->forward(t, e1)));
    check_stage(t, e2, "encoder");

    int r = e2;
    for (const ResBlock& blk : res_) {
      int a = ad::relu(t, blk.na->forward(t, blk.a->forward(t, r)));
      int b = blk.nb->forward(t, blk.b->forward(t, a));
      r = ad::add(t, r, b);
    }
    check_stage(t, r, "residual trunk");

    for (const PaBlock& blk : pa_) {
      int a = ad::relu(
          t, blk.na->forward(t, blk.a->forward(t, r), sm_quarter, l3_quarter));
      int b = blk.nb->forward(t, blk.b->forward(t, a), sm_quarter, l3_quarter);
      r = ad::add(t, r, b);
    }
    check_stage(t, r, "plane-aware trunk");

    int u1 = ad::relu(t, pan_u1_->forward(t, up1_->forward(t, ad::upsample2(t, r)),
                                          sm_half, l3_half));
    int u2 = ad::relu(t, pan_u2_->forward(t, up2_->forward(t, ad::upsample2(t, u1)),
                                          sm_full, l3_full));
    out.image_id = ad::sigmoid(t, head_->forward(t, u2));
    check_stage(t, out.image_id, "output head");
    return out;
  }

  void bind(ad::Tape<T>& t, bool trainable = true) {
    bind_all(params_, t, trainable);
  }

  void read_grads(ad::Tape<T>& t) { read_all_grads(params_, t); }

  std::vector<Parameter<T>*>& params() { return params_; }

  const GenArch& arch() const { return arch_; }

 private:
  struct ResBlock {
    std::unique_ptr<Conv2d<T>> a;
    std::unique_ptr<ChannelNorm<T>> na;
    std::unique_ptr<Conv2d<T>> b;
    std::unique_ptr<ChannelNorm<T>> nb;
  };
  struct PaBlock {
    std::unique_ptr<Conv2d<T>> a;
    std::unique_ptr<PlaneAwareNorm<T>> na;
    std::unique_ptr<Conv2d<T>> b;
    std::unique_ptr<PlaneAwareNorm<T>> nb;
  };

  static void check_stage(ad::Tape<T>& t, int id, const char* stage) {
    RF_CHECK(t.val(id).all_finite(), NumericalError,
             "non-finite activations in ", stage);
  }

  void collect() {
    stem_->collect(params_);
    norm0_->collect(params_);
    down1_->collect(params_);
    norm1_->collect(params_);
    down2_->collect(params_);
    norm2_->collect(params_);
    for (auto& blk : res_) {
      blk.a->collect(params_);
      blk.na->collect(params_);
      blk.b->collect(params_);
      blk.nb->collect(params_);
    }
    for (auto& blk : pa_) {
      blk.a->collect(params_);
      blk.na->collect(params_);
      blk.b->collect(params_);
      blk.nb->collect(params_);
    }
    up1_->collect(params_);
    pan_u1_->collect(params_);
    up2_->collect(params_);
    pan_u2_->collect(params_);
    head_->collect(params_);
    if (se1_) se1_->collect(params_);
    if (se2_) se2_->collect(params_);
  }

  GenArch arch_;
  std::unique_ptr<Conv2d<T>> stem_, down1_, down2_, up1_, up2_, head_;
  std::unique_ptr<ChannelNorm<T>> norm0_, norm1_, norm2_;
  std::vector<ResBlock> res_;
  std::vector<PaBlock> pa_;
  std::unique_ptr<PlaneAwareNorm<T>> pan_u1_, pan_u2_;
  std::unique_ptr<PartialConv<T>> se1_, se2_;
  std::vector<Parameter<T>*> params_;

 public:
  // Exposed for invariant tests.
  PlaneAwareNorm<T>& output_norm() { return *pan_u2_; }
  std::vector<PlaneAwareNorm<T>*> plane_norms() {
    std::vector<PlaneAwareNorm<T>*> out;
    for (auto& blk : pa_) {
      out.push_back(blk.na.get());
      out.push_back(blk.nb.get());
    }
    out.push_back(pan_u1_.get());
    out.push_back(pan_u2_.get());
    return out;
  }
};

}  // namespace roomfill::nn
