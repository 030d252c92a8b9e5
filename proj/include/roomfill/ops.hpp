#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "roomfill/layout.hpp"
#include "roomfill/tape.hpp"
#include "roomfill/tensor.hpp"

// Differentiable operations over 4D activation tensors (N, C, H, W).
// Horizontal image borders wrap (panoramas are periodic in longitude);
// vertical borders zero-pad.
namespace roomfill::ad {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <typename T>
inline void check_4d(const Tensor<T>& x, const char* what) {
  RF_CHECK_SHAPE(x.dim() == 4, what, " must be 4D, got ", shape_str(x.shape()));
}

inline int wrap_col(int j, int w) {
  int m = j % w;
  return m < 0 ? m + w : m;
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename T>
int add(Tape<T>& t, int a, int b) {
  const Tensor<T>& xa = t.val(a);
  const Tensor<T>& xb = t.val(b);
  RF_CHECK_SHAPE(xa.same_shape(xb), "add: shapes ", shape_str(xa.shape()), " vs ",
                 shape_str(xb.shape()));
  Tensor<T> out(xa.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = xa[i] + xb[i];
  return t.push(std::move(out), [a, b](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

template <typename T>
int sub(Tape<T>& t, int a, int b) {
  const Tensor<T>& xa = t.val(a);
  const Tensor<T>& xb = t.val(b);
  RF_CHECK_SHAPE(xa.same_shape(xb), "sub: shapes ", shape_str(xa.shape()), " vs ",
                 shape_str(xb.shape()));
  Tensor<T> out(xa.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = xa[i] - xb[i];
  return t.push(std::move(out), [a, b](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    tp.accumulate(a, g);
    Tensor<T> gb(g.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] = -g[i];
    tp.accumulate(b, gb);
  });
}

template <typename T>
int mul(Tape<T>& t, int a, int b) {
  const Tensor<T>& xa = t.val(a);
  const Tensor<T>& xb = t.val(b);
  RF_CHECK_SHAPE(xa.same_shape(xb), "mul: shapes ", shape_str(xa.shape()), " vs ",
                 shape_str(xb.shape()));
  Tensor<T> out(xa.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = xa[i] * xb[i];
  return t.push(std::move(out), [a, b](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& xa2 = tp.val(a);
    const Tensor<T>& xb2 = tp.val(b);
    Tensor<T> ga(g.shape()), gb(g.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      ga[i] = g[i] * xb2[i];
      gb[i] = g[i] * xa2[i];
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

template <typename T>
int add_const(Tape<T>& t, int a, double c) {
  const Tensor<T>& xa = t.val(a);
  Tensor<T> out(xa.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = xa[i] + T(c);
  return t.push(std::move(out), [a](Tape<T>& tp, int self) {
    tp.accumulate(a, tp.grad(self));
  });
}

template <typename T>
int mul_const(Tape<T>& t, int a, double c) {
  const Tensor<T>& xa = t.val(a);
  Tensor<T> out(xa.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = xa[i] * T(c);
  return t.push(std::move(out), [a, c](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T> ga(g.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * T(c);
    tp.accumulate(a, ga);
  });
}

template <typename T>
int relu(Tape<T>& t, int a) {
  const Tensor<T>& xa = t.val(a);
  Tensor<T> out(xa.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = xa[i] > T(0) ? xa[i] : T(0);
  return t.push(std::move(out), [a](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& xa2 = tp.val(a);
    Tensor<T> ga(g.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] = xa2[i] > T(0) ? g[i] : T(0);
    tp.accumulate(a, ga);
  });
}

template <typename T>
int leaky_relu(Tape<T>& t, int a, double slope) {
  const Tensor<T>& xa = t.val(a);
  Tensor<T> out(xa.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = xa[i] > T(0) ? xa[i] : T(slope) * xa[i];
  return t.push(std::move(out), [a, slope](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& xa2 = tp.val(a);
    Tensor<T> ga(g.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i)
      ga[i] = xa2[i] > T(0) ? g[i] : T(slope) * g[i];
    tp.accumulate(a, ga);
  });
}

template <typename T>
int sigmoid(Tape<T>& t, int a) {
  const Tensor<T>& xa = t.val(a);
  Tensor<T> out(xa.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = T(1) / (T(1) + std::exp(-xa[i]));
  return t.push(std::move(out), [a](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& y = tp.val(self);
    Tensor<T> ga(g.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i)
      ga[i] = g[i] * y[i] * (T(1) - y[i]);
    tp.accumulate(a, ga);
  });
}

template <typename T>
int abs_op(Tape<T>& t, int a) {
  const Tensor<T>& xa = t.val(a);
  Tensor<T> out(xa.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::abs(xa[i]);
  return t.push(std::move(out), [a](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& xa2 = tp.val(a);
    Tensor<T> ga(g.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      T s = xa2[i] > T(0) ? T(1) : (xa2[i] < T(0) ? T(-1) : T(0));
      ga[i] = g[i] * s;
    }
    tp.accumulate(a, ga);
  });
}

// ---- reductions ------------------------------------------------------------

template <typename T>
int mean_all(Tape<T>& t, int a) {
  const Tensor<T>& xa = t.val(a);
  double s = 0.0;
  for (std::int64_t i = 0; i < xa.numel(); ++i) s += double(xa[i]);
  Tensor<T> out({1});
  out[0] = T(s / double(xa.numel()));
  return t.push(std::move(out), [a](Tape<T>& tp, int self) {
    T g = tp.grad(self)[0];
    const Tensor<T>& xa2 = tp.val(a);
    Tensor<T> ga(xa2.shape());
    T v = g / T(double(xa2.numel()));
    ga.fill(v);
    tp.accumulate(a, ga);
  });
}

template <typename T>
int sum_all(Tape<T>& t, int a) {
  const Tensor<T>& xa = t.val(a);
  double s = 0.0;
  for (std::int64_t i = 0; i < xa.numel(); ++i) s += double(xa[i]);
  Tensor<T> out({1});
  out[0] = T(s);
  return t.push(std::move(out), [a](Tape<T>& tp, int self) {
    T g = tp.grad(self)[0];
    const Tensor<T>& xa2 = tp.val(a);
    Tensor<T> ga(xa2.shape());
    ga.fill(g);
    tp.accumulate(a, ga);
  });
}

// ---- constant-map broadcasts ----------------------------------------------

// Multiplies (N,C,H,W) by a constant (N,1,H,W) map, broadcast over channels.
template <typename T>
int mul_map(Tape<T>& t, int a, const Tensor<T>& map) {
  const Tensor<T>& xa = t.val(a);
  detail::check_4d(xa, "mul_map input");
  detail::check_4d(map, "mul_map map");
  int n = xa.shape()[0], c = xa.shape()[1], h = xa.shape()[2], w = xa.shape()[3];
  RF_CHECK_SHAPE(map.shape()[0] == n && map.shape()[1] == 1 &&
                     map.shape()[2] == h && map.shape()[3] == w,
                 "mul_map: map ", shape_str(map.shape()), " vs input ", shape_str(xa.shape()));
  auto m = std::make_shared<Tensor<T>>(map);
  Tensor<T> out(xa.shape());
  std::int64_t plane = std::int64_t(h) * w;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const T* mp = &map.data()[std::int64_t(ni) * plane];
      const T* xp = &xa.data()[(std::int64_t(ni) * c + ci) * plane];
      T* op = &out.data()[(std::int64_t(ni) * c + ci) * plane];
      for (std::int64_t i = 0; i < plane; ++i) op[i] = xp[i] * mp[i];
    }
  return t.push(std::move(out), [a, m, n, c, plane](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T> ga(g.shape());
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci) {
        const T* mp = &m->data()[std::int64_t(ni) * plane];
        const T* gp = &g.data()[(std::int64_t(ni) * c + ci) * plane];
        T* op = &ga.data()[(std::int64_t(ni) * c + ci) * plane];
        for (std::int64_t i = 0; i < plane; ++i) op[i] = gp[i] * mp[i];
      }
    tp.accumulate(a, ga);
  });
}

// out = (y + bias[c]) * gate, gate a constant (N,1,H,W) 0/1 map.
template <typename T>
int bias_gate(Tape<T>& t, int y, int bias, const Tensor<T>& gate) {
  const Tensor<T>& xy = t.val(y);
  const Tensor<T>& xb = t.val(bias);
  detail::check_4d(xy, "bias_gate input");
  int n = xy.shape()[0], c = xy.shape()[1], h = xy.shape()[2], w = xy.shape()[3];
  RF_CHECK_SHAPE(xb.dim() == 1 && xb.shape()[0] == c, "bias_gate: bias ",
                 shape_str(xb.shape()), " vs channels ", c);
  RF_CHECK_SHAPE(gate.dim() == 4 && gate.shape()[0] == n && gate.shape()[1] == 1 &&
                     gate.shape()[2] == h && gate.shape()[3] == w,
                 "bias_gate: gate ", shape_str(gate.shape()));
  auto gmap = std::make_shared<Tensor<T>>(gate);
  Tensor<T> out(xy.shape());
  std::int64_t plane = std::int64_t(h) * w;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const T* gp = &gate.data()[std::int64_t(ni) * plane];
      const T* yp = &xy.data()[(std::int64_t(ni) * c + ci) * plane];
      T* op = &out.data()[(std::int64_t(ni) * c + ci) * plane];
      T b = xb[ci];
      for (std::int64_t i = 0; i < plane; ++i) op[i] = (yp[i] + b) * gp[i];
    }
  return t.push(std::move(out), [y, bias, gmap, n, c, plane](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T> gy(g.shape());
    Tensor<T> gb({c});
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci) {
        const T* gp = &gmap->data()[std::int64_t(ni) * plane];
        const T* gg = &g.data()[(std::int64_t(ni) * c + ci) * plane];
        T* op = &gy.data()[(std::int64_t(ni) * c + ci) * plane];
        double acc = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) {
          T v = gg[i] * gp[i];
          op[i] = v;
          acc += double(v);
        }
        gb[ci] += T(acc);
      }
    tp.accumulate(y, gy);
    tp.accumulate(bias, gb);
  });
}

// ---- concat ----------------------------------------------------------------

template <typename T>
int concat_channels(Tape<T>& t, const std::vector<int>& parts) {
  RF_CHECK(!parts.empty(), ShapeError, "concat_channels: no inputs");
  const Tensor<T>& first = t.val(parts[0]);
  detail::check_4d(first, "concat input");
  int n = first.shape()[0], h = first.shape()[2], w = first.shape()[3];
  int ctotal = 0;
  std::vector<int> chans;
  for (int id : parts) {
    const Tensor<T>& x = t.val(id);
    detail::check_4d(x, "concat input");
    RF_CHECK_SHAPE(x.shape()[0] == n && x.shape()[2] == h && x.shape()[3] == w,
                   "concat_channels: mismatched ", shape_str(x.shape()));
    chans.push_back(x.shape()[1]);
    ctotal += x.shape()[1];
  }
  Tensor<T> out({n, ctotal, h, w});
  std::int64_t plane = std::int64_t(h) * w;
  for (int ni = 0; ni < n; ++ni) {
    int coff = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const Tensor<T>& x = t.val(parts[p]);
      int cp = chans[p];
      std::copy_n(&x.data()[std::int64_t(ni) * cp * plane],
                  std::int64_t(cp) * plane,
                  &out.data()[(std::int64_t(ni) * ctotal + coff) * plane]);
      coff += cp;
    }
  }
  auto parts_c = std::make_shared<std::vector<int>>(parts);
  auto chans_c = std::make_shared<std::vector<int>>(chans);
  return t.push(std::move(out),
                [parts_c, chans_c, n, ctotal, plane](Tape<T>& tp, int self) {
                  const Tensor<T>& g = tp.grad(self);
                  for (std::size_t p = 0; p < parts_c->size(); ++p) {
                    int cp = (*chans_c)[p];
                    int coff = 0;
                    for (std::size_t q = 0; q < p; ++q) coff += (*chans_c)[q];
                    Tensor<T> gp(tp.val((*parts_c)[p]).shape());
                    for (int ni = 0; ni < n; ++ni)
                      std::copy_n(
                          &g.data()[(std::int64_t(ni) * ctotal + coff) * plane],
                          std::int64_t(cp) * plane,
                          &gp.data()[std::int64_t(ni) * cp * plane]);
                    tp.accumulate((*parts_c)[p], gp);
                  }
                });
}

// ---- convolution -----------------------------------------------------------

inline int conv_out_dim(int in, int k, int pad, int stride, int dil) {
  int span = dil * (k - 1) + 1;
  int num = in + 2 * pad - span;
  RF_CHECK(num >= 0, ShapeError, "conv: kernel span ", span,
           " exceeds padded input ", in + 2 * pad);
  return num / stride + 1;
}

namespace detail {

// col is (C*kh*kw) x (ho*wo) row-major. Rows wrap horizontally; vertical
// out-of-range taps contribute zero.
template <typename T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, int ph, int pw,
            int stride, int dil, int ho, int wo, T* col) {
  std::int64_t l = std::int64_t(ho) * wo;
  for (int ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        T* row = col + ((std::int64_t(ci) * kh + ki) * kw + kj) * l;
        for (int oi = 0; oi < ho; ++oi) {
          int ri = oi * stride - ph + ki * dil;
          if (ri < 0 || ri >= h) {
            std::fill_n(row + std::int64_t(oi) * wo, wo, T(0));
            continue;
          }
          const T* src = x + (std::int64_t(ci) * h + ri) * w;
          T* dst = row + std::int64_t(oi) * wo;
          for (int oj = 0; oj < wo; ++oj)
            dst[oj] = src[wrap_col(oj * stride - pw + kj * dil, w)];
        }
      }
}

template <typename T>
void col2im_add(const T* col, int c, int h, int w, int kh, int kw, int ph,
                int pw, int stride, int dil, int ho, int wo, T* x) {
  std::int64_t l = std::int64_t(ho) * wo;
  for (int ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = col + ((std::int64_t(ci) * kh + ki) * kw + kj) * l;
        for (int oi = 0; oi < ho; ++oi) {
          int ri = oi * stride - ph + ki * dil;
          if (ri < 0 || ri >= h) continue;
          T* dst = x + (std::int64_t(ci) * h + ri) * w;
          const T* src = row + std::int64_t(oi) * wo;
          for (int oj = 0; oj < wo; ++oj)
            dst[wrap_col(oj * stride - pw + kj * dil, w)] += src[oj];
        }
      }
}

}  // namespace detail

// 2D convolution, weight (O, C, kh, kw), optional bias (O) with bias_id >= 0.
template <typename T>
int conv2d(Tape<T>& t, int x_id, int w_id, int bias_id, int stride, int ph,
           int pw, int dil) {
  const Tensor<T>& x = t.val(x_id);
  const Tensor<T>& wt = t.val(w_id);
  detail::check_4d(x, "conv2d input");
  detail::check_4d(wt, "conv2d weight");
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  int o = wt.shape()[0], kh = wt.shape()[2], kw = wt.shape()[3];
  RF_CHECK_SHAPE(wt.shape()[1] == c, "conv2d: weight expects ", wt.shape()[1],
                 " input channels, got ", c);
  if (bias_id >= 0) {
    const Tensor<T>& b = t.val(bias_id);
    RF_CHECK_SHAPE(b.dim() == 1 && b.shape()[0] == o, "conv2d: bias ",
                   shape_str(b.shape()), " vs out channels ", o);
  }
  int ho = conv_out_dim(h, kh, ph, stride, dil);
  int wo = conv_out_dim(w, kw, pw, stride, dil);
  std::int64_t ck = std::int64_t(c) * kh * kw;
  std::int64_t l = std::int64_t(ho) * wo;

  Tensor<T> out({n, o, ho, wo});
  std::vector<T> col(std::size_t(ck * l));
  Eigen::Map<const RowMat<T>> wm(wt.data(), o, ck);
  for (int ni = 0; ni < n; ++ni) {
    detail::im2col(&x.data()[std::int64_t(ni) * c * h * w], c, h, w, kh, kw, ph,
                   pw, stride, dil, ho, wo, col.data());
    Eigen::Map<const RowMat<T>> cm(col.data(), ck, l);
    Eigen::Map<RowMat<T>> om(&out.data()[std::int64_t(ni) * o * l], o, l);
    om.noalias() = wm * cm;
  }
  if (bias_id >= 0) {
    const Tensor<T>& b = t.val(bias_id);
    for (int ni = 0; ni < n; ++ni)
      for (int oi = 0; oi < o; ++oi) {
        T* p = &out.data()[(std::int64_t(ni) * o + oi) * l];
        for (std::int64_t i = 0; i < l; ++i) p[i] += b[oi];
      }
  }

  auto fn = [x_id, w_id, bias_id, n, c, h, w, o, kh, kw, ph, pw, stride, dil,
             ho, wo, ck, l](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& x2 = tp.val(x_id);
    const Tensor<T>& w2 = tp.val(w_id);
    Tensor<T> gx(x2.shape());
    Tensor<T> gw(w2.shape());
    std::vector<T> col(std::size_t(ck * l));
    std::vector<T> gcol(std::size_t(ck * l));
    Eigen::Map<const RowMat<T>> wm(w2.data(), o, ck);
    Eigen::Map<RowMat<T>> gwm(gw.data(), o, ck);
    for (int ni = 0; ni < n; ++ni) {
      detail::im2col(&x2.data()[std::int64_t(ni) * c * h * w], c, h, w, kh, kw,
                     ph, pw, stride, dil, ho, wo, col.data());
      Eigen::Map<const RowMat<T>> cm(col.data(), ck, l);
      Eigen::Map<const RowMat<T>> gm(&g.data()[std::int64_t(ni) * o * l], o, l);
      gwm.noalias() += gm * cm.transpose();
      Eigen::Map<RowMat<T>> gcm(gcol.data(), ck, l);
      gcm.noalias() = wm.transpose() * gm;
      detail::col2im_add(gcol.data(), c, h, w, kh, kw, ph, pw, stride, dil, ho,
                         wo, &gx.data()[std::int64_t(ni) * c * h * w]);
    }
    tp.accumulate(x_id, gx);
    tp.accumulate(w_id, gw);
    if (bias_id >= 0) {
      Tensor<T> gb({o});
      for (int ni = 0; ni < n; ++ni)
        for (int oi = 0; oi < o; ++oi) {
          const T* p = &g.data()[(std::int64_t(ni) * o + oi) * l];
          double acc = 0.0;
          for (std::int64_t i = 0; i < l; ++i) acc += double(p[i]);
          gb[oi] += T(acc);
        }
      tp.accumulate(bias_id, gb);
    }
  };
  return t.push(std::move(out), std::move(fn));
}

// Window sums of a constant map under the same padding scheme; used for
// validity-mask bookkeeping outside the tape.
template <typename T>
Tensor<T> window_sum(const Tensor<T>& m, int kh, int kw, int ph, int pw,
                     int stride, int dil) {
  detail::check_4d(m, "window_sum input");
  int n = m.shape()[0], c = m.shape()[1], h = m.shape()[2], w = m.shape()[3];
  RF_CHECK_SHAPE(c == 1, "window_sum expects single channel, got ", c);
  int ho = conv_out_dim(h, kh, ph, stride, dil);
  int wo = conv_out_dim(w, kw, pw, stride, dil);
  Tensor<T> out({n, 1, ho, wo});
  for (int ni = 0; ni < n; ++ni) {
    const T* src = &m.data()[std::int64_t(ni) * h * w];
    T* dst = &out.data()[std::int64_t(ni) * ho * wo];
    for (int oi = 0; oi < ho; ++oi)
      for (int oj = 0; oj < wo; ++oj) {
        double acc = 0.0;
        for (int ki = 0; ki < kh; ++ki) {
          int ri = oi * stride - ph + ki * dil;
          if (ri < 0 || ri >= h) continue;
          for (int kj = 0; kj < kw; ++kj)
            acc += double(src[ri * w + detail::wrap_col(oj * stride - pw + kj * dil, w)]);
        }
        dst[oi * wo + oj] = T(acc);
      }
  }
  return out;
}

// Per-location count of kernel taps that land inside the image (vertical
// clipping only; horizontal taps always wrap). With a fully valid mask the
// window sum equals this count, so the partial-conv rescale becomes identity.
template <typename T>
Tensor<T> tap_count(int n, int h, int w, int kh, int kw, int ph, int pw,
                    int stride, int dil) {
  Tensor<T> ones({1, 1, h, w});
  ones.fill(T(1));
  Tensor<T> one_count = window_sum(ones, kh, kw, ph, pw, stride, dil);
  int ho = one_count.shape()[2], wo = one_count.shape()[3];
  Tensor<T> out({n, 1, ho, wo});
  for (int ni = 0; ni < n; ++ni)
    std::copy_n(one_count.data(), std::int64_t(ho) * wo,
                &out.data()[std::int64_t(ni) * ho * wo]);
  return out;
}

// ---- upsampling ------------------------------------------------------------

template <typename T>
int upsample2(Tape<T>& t, int a) {
  const Tensor<T>& x = t.val(a);
  detail::check_4d(x, "upsample2 input");
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor<T> out({n, c, 2 * h, 2 * w});
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const T* src = &x.data()[(std::int64_t(ni) * c + ci) * h * w];
      T* dst = &out.data()[(std::int64_t(ni) * c + ci) * 4 * h * w];
      for (int i = 0; i < 2 * h; ++i)
        for (int j = 0; j < 2 * w; ++j)
          dst[std::int64_t(i) * 2 * w + j] = src[(i / 2) * w + j / 2];
    }
  return t.push(std::move(out), [a, n, c, h, w](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T> ga({n, c, h, w});
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci) {
        const T* src = &g.data()[(std::int64_t(ni) * c + ci) * 4 * h * w];
        T* dst = &ga.data()[(std::int64_t(ni) * c + ci) * h * w];
        for (int i = 0; i < 2 * h; ++i)
          for (int j = 0; j < 2 * w; ++j)
            dst[(i / 2) * w + j / 2] += src[std::int64_t(i) * 2 * w + j];
      }
    tp.accumulate(a, ga);
  });
}

// ---- normalization ---------------------------------------------------------

// Normalizes each channel by statistics over (N, H, W). Parameter-free.
template <typename T>
int per_channel_norm(Tape<T>& t, int a, double eps = 1e-5) {
  const Tensor<T>& x = t.val(a);
  detail::check_4d(x, "per_channel_norm input");
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  std::int64_t plane = std::int64_t(h) * w;
  std::int64_t m = std::int64_t(n) * plane;
  auto sinv = std::make_shared<std::vector<T>>(std::size_t(c));
  Tensor<T> out(x.shape());
  for (int ci = 0; ci < c; ++ci) {
    double mu = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const T* p = &x.data()[(std::int64_t(ni) * c + ci) * plane];
      for (std::int64_t i = 0; i < plane; ++i) mu += double(p[i]);
    }
    mu /= double(m);
    double var = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const T* p = &x.data()[(std::int64_t(ni) * c + ci) * plane];
      for (std::int64_t i = 0; i < plane; ++i) {
        double d = double(p[i]) - mu;
        var += d * d;
      }
    }
    var /= double(m);
    T si = T(1.0 / std::sqrt(var + eps));
    (*sinv)[std::size_t(ci)] = si;
    for (int ni = 0; ni < n; ++ni) {
      const T* p = &x.data()[(std::int64_t(ni) * c + ci) * plane];
      T* q = &out.data()[(std::int64_t(ni) * c + ci) * plane];
      for (std::int64_t i = 0; i < plane; ++i) q[i] = (p[i] - T(mu)) * si;
    }
  }
  return t.push(std::move(out), [a, sinv, n, c, plane, m](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& y = tp.val(self);  // normalized values
    Tensor<T> ga(g.shape());
    for (int ci = 0; ci < c; ++ci) {
      double gsum = 0.0, gysum = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const T* gp = &g.data()[(std::int64_t(ni) * c + ci) * plane];
        const T* yp = &y.data()[(std::int64_t(ni) * c + ci) * plane];
        for (std::int64_t i = 0; i < plane; ++i) {
          gsum += double(gp[i]);
          gysum += double(gp[i]) * double(yp[i]);
        }
      }
      T gmean = T(gsum / double(m));
      T gymean = T(gysum / double(m));
      T si = (*sinv)[std::size_t(ci)];
      for (int ni = 0; ni < n; ++ni) {
        const T* gp = &g.data()[(std::int64_t(ni) * c + ci) * plane];
        const T* yp = &y.data()[(std::int64_t(ni) * c + ci) * plane];
        T* op = &ga.data()[(std::int64_t(ni) * c + ci) * plane];
        for (std::int64_t i = 0; i < plane; ++i)
          op[i] = si * (gp[i] - gmean - yp[i] * gymean);
      }
    }
    tp.accumulate(a, ga);
  });
}

// y = x * gamma[c] + beta[c] with learnable per-channel vectors.
template <typename T>
int channel_affine(Tape<T>& t, int a, int gamma, int beta) {
  const Tensor<T>& x = t.val(a);
  const Tensor<T>& gm = t.val(gamma);
  const Tensor<T>& bt = t.val(beta);
  detail::check_4d(x, "channel_affine input");
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  RF_CHECK_SHAPE(gm.dim() == 1 && gm.shape()[0] == c, "channel_affine: gamma ",
                 shape_str(gm.shape()));
  RF_CHECK_SHAPE(bt.dim() == 1 && bt.shape()[0] == c, "channel_affine: beta ",
                 shape_str(bt.shape()));
  std::int64_t plane = std::int64_t(h) * w;
  Tensor<T> out(x.shape());
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const T* p = &x.data()[(std::int64_t(ni) * c + ci) * plane];
      T* q = &out.data()[(std::int64_t(ni) * c + ci) * plane];
      T gmc = gm[ci], btc = bt[ci];
      for (std::int64_t i = 0; i < plane; ++i) q[i] = p[i] * gmc + btc;
    }
  return t.push(std::move(out),
                [a, gamma, beta, n, c, plane](Tape<T>& tp, int self) {
                  const Tensor<T>& g = tp.grad(self);
                  const Tensor<T>& x2 = tp.val(a);
                  const Tensor<T>& gm2 = tp.val(gamma);
                  Tensor<T> ga(g.shape());
                  Tensor<T> ggm({c}), gbt({c});
                  for (int ci = 0; ci < c; ++ci) {
                    double sg = 0.0, sgx = 0.0;
                    T gmc = gm2[ci];
                    for (int ni = 0; ni < n; ++ni) {
                      const T* gp = &g.data()[(std::int64_t(ni) * c + ci) * plane];
                      const T* xp = &x2.data()[(std::int64_t(ni) * c + ci) * plane];
                      T* op = &ga.data()[(std::int64_t(ni) * c + ci) * plane];
                      for (std::int64_t i = 0; i < plane; ++i) {
                        op[i] = gp[i] * gmc;
                        sg += double(gp[i]);
                        sgx += double(gp[i]) * double(xp[i]);
                      }
                    }
                    ggm[ci] = T(sgx);
                    gbt[ci] = T(sg);
                  }
                  tp.accumulate(a, ga);
                  tp.accumulate(gamma, ggm);
                  tp.accumulate(beta, gbt);
                });
}

// ---- region pooling over label maps ----------------------------------------

// Fixed partition of each sample's pixels into planes, built from integer
// label maps at the feature resolution.
struct RegionSpec {
  int planes = 0;
  int h = 0, w = 0;
  std::vector<std::vector<std::vector<int>>> pix;  // [sample][plane] -> flat idx

  bool missing(int n, int p) const { return pix[std::size_t(n)][std::size_t(p)].empty(); }

  static RegionSpec build(const std::vector<LabelMap>& labels, int planes) {
    RF_CHECK(!labels.empty(), ShapeError, "RegionSpec: no label maps");
    RegionSpec spec;
    spec.planes = planes;
    spec.h = labels[0].shape()[0];
    spec.w = labels[0].shape()[1];
    spec.pix.resize(labels.size());
    for (std::size_t n = 0; n < labels.size(); ++n) {
      const LabelMap& lm = labels[n];
      RF_CHECK_SHAPE(lm.dim() == 2 && lm.shape()[0] == spec.h &&
                         lm.shape()[1] == spec.w,
                     "RegionSpec: label map ", shape_str(lm.shape()));
      spec.pix[n].resize(std::size_t(planes));
      for (int i = 0; i < spec.h; ++i)
        for (int j = 0; j < spec.w; ++j) {
          std::int32_t v = lm(i, j);
          RF_CHECK(v >= 0 && v < planes, ShapeError, "RegionSpec: label ", v,
                   " outside [0,", planes, ")");
          spec.pix[n][std::size_t(v)].push_back(i * spec.w + j);
        }
    }
    return spec;
  }
};

// Mean feature vector per plane: (N,C,h,w) -> (N,P,C). Planes with no pixels
// at this resolution produce zero rows.
template <typename T>
int region_mean(Tape<T>& t, int a, const std::shared_ptr<RegionSpec>& spec) {
  const Tensor<T>& x = t.val(a);
  detail::check_4d(x, "region_mean input");
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  RF_CHECK_SHAPE(int(spec->pix.size()) == n && spec->h == h && spec->w == w,
                 "region_mean: spec ", spec->h, "x", spec->w, "/",
                 spec->pix.size(), " vs input ", shape_str(x.shape()));
  std::int64_t plane = std::int64_t(h) * w;
  Tensor<T> out({n, spec->planes, c});
  for (int ni = 0; ni < n; ++ni)
    for (int p = 0; p < spec->planes; ++p) {
      const auto& idx = spec->pix[std::size_t(ni)][std::size_t(p)];
      if (idx.empty()) continue;
      for (int ci = 0; ci < c; ++ci) {
        const T* xp = &x.data()[(std::int64_t(ni) * c + ci) * plane];
        double acc = 0.0;
        for (int id : idx) acc += double(xp[id]);
        out(ni, p, ci) = T(acc / double(idx.size()));
      }
    }
  return t.push(std::move(out), [a, spec, n, c, plane](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& x2 = tp.val(a);
    Tensor<T> ga(x2.shape());
    for (int ni = 0; ni < n; ++ni)
      for (int p = 0; p < spec->planes; ++p) {
        const auto& idx = spec->pix[std::size_t(ni)][std::size_t(p)];
        if (idx.empty()) continue;
        for (int ci = 0; ci < c; ++ci) {
          T gv = g(ni, p, ci) / T(double(idx.size()));
          T* xp = &ga.data()[(std::int64_t(ni) * c + ci) * plane];
          for (int id : idx) xp[id] += gv;
        }
      }
    tp.accumulate(a, ga);
  });
}

// Paints each plane's code across its pixels: (N,P,C) -> (N,C,h,w). Pixels of
// planes with no code stay zero (a RegionSpec's pixel lists cover every pixel,
// so this only happens for codes flagged missing upstream).
template <typename T>
int region_broadcast(Tape<T>& t, int codes, const std::shared_ptr<RegionSpec>& spec,
                     int channels) {
  const Tensor<T>& cd = t.val(codes);
  RF_CHECK_SHAPE(cd.dim() == 3, "region_broadcast: codes ", shape_str(cd.shape()));
  int n = cd.shape()[0];
  RF_CHECK_SHAPE(cd.shape()[1] == spec->planes && cd.shape()[2] == channels,
                 "region_broadcast: codes ", shape_str(cd.shape()), " vs planes ",
                 spec->planes, " channels ", channels);
  RF_CHECK_SHAPE(int(spec->pix.size()) == n, "region_broadcast: spec samples ",
                 spec->pix.size(), " vs ", n);
  int h = spec->h, w = spec->w;
  std::int64_t plane = std::int64_t(h) * w;
  Tensor<T> out({n, channels, h, w});
  for (int ni = 0; ni < n; ++ni)
    for (int p = 0; p < spec->planes; ++p) {
      const auto& idx = spec->pix[std::size_t(ni)][std::size_t(p)];
      for (int ci = 0; ci < channels; ++ci) {
        T v = cd(ni, p, ci);
        T* xp = &out.data()[(std::int64_t(ni) * channels + ci) * plane];
        for (int id : idx) xp[id] = v;
      }
    }
  return t.push(std::move(out), [codes, spec, n, channels, plane](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T> gc(tp.val(codes).shape());
    for (int ni = 0; ni < n; ++ni)
      for (int p = 0; p < spec->planes; ++p) {
        const auto& idx = spec->pix[std::size_t(ni)][std::size_t(p)];
        for (int ci = 0; ci < channels; ++ci) {
          const T* xp = &g.data()[(std::int64_t(ni) * channels + ci) * plane];
          double acc = 0.0;
          for (int id : idx) acc += double(xp[id]);
          gc(ni, p, ci) += T(acc);
        }
      }
    tp.accumulate(codes, gc);
  });
}

// ---- gated blend ------------------------------------------------------------

// out = s*a + (1-s)*b with s = sigmoid(alpha), alpha a learnable scalar.
template <typename T>
int blend_sigmoid(Tape<T>& t, int alpha, int a, int b) {
  const Tensor<T>& al = t.val(alpha);
  RF_CHECK_SHAPE(al.numel() == 1, "blend_sigmoid: alpha must be scalar, got ",
                 shape_str(al.shape()));
  const Tensor<T>& xa = t.val(a);
  const Tensor<T>& xb = t.val(b);
  RF_CHECK_SHAPE(xa.same_shape(xb), "blend_sigmoid: shapes ", shape_str(xa.shape()),
                 " vs ", shape_str(xb.shape()));
  T s = T(1) / (T(1) + std::exp(-al[0]));
  Tensor<T> out(xa.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = s * xa[i] + (T(1) - s) * xb[i];
  return t.push(std::move(out), [alpha, a, b, s](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& xa2 = tp.val(a);
    const Tensor<T>& xb2 = tp.val(b);
    Tensor<T> ga(g.shape()), gb(g.shape());
    double dal = 0.0;
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      ga[i] = g[i] * s;
      gb[i] = g[i] * (T(1) - s);
      dal += double(g[i]) * double(xa2[i] - xb2[i]);
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
    Tensor<T> gal({1});
    gal[0] = T(dal * double(s) * double(T(1) - s));
    tp.accumulate(alpha, gal);
  });
}

// ---- gram matrices ---------------------------------------------------------

// Per-sample channel covariance G = phi phi^T / (C*H*W): (N,C,H,W) -> (N,C,C).
template <typename T>
int gram(Tape<T>& t, int a) {
  const Tensor<T>& x = t.val(a);
  detail::check_4d(x, "gram input");
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  std::int64_t hw = std::int64_t(h) * w;
  double norm = double(c) * double(hw);
  Tensor<T> out({n, c, c});
  for (int ni = 0; ni < n; ++ni) {
    Eigen::Map<const RowMat<T>> phi(&x.data()[std::int64_t(ni) * c * hw], c, hw);
    Eigen::Map<RowMat<T>> gmat(&out.data()[std::int64_t(ni) * c * c], c, c);
    gmat.noalias() = (phi * phi.transpose()) * T(1.0 / norm);
  }
  return t.push(std::move(out), [a, n, c, hw, norm](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& x2 = tp.val(a);
    Tensor<T> ga(x2.shape());
    for (int ni = 0; ni < n; ++ni) {
      Eigen::Map<const RowMat<T>> phi(&x2.data()[std::int64_t(ni) * c * hw], c, hw);
      Eigen::Map<const RowMat<T>> gg(&g.data()[std::int64_t(ni) * c * c], c, c);
      Eigen::Map<RowMat<T>> gp(&ga.data()[std::int64_t(ni) * c * hw], c, hw);
      gp.noalias() = (gg + gg.transpose()) * phi * T(1.0 / norm);
    }
    tp.accumulate(a, ga);
  });
}

// ---- spectral normalization -------------------------------------------------

// Divides a weight by its leading singular value estimate sigma = |W^T u|
// with u a persistent power-iteration vector held fixed during the pass.
// Exact gradient: dW = g/sigma - (sum(g.W)/sigma^2) u v^T, v = W^T u / sigma.
template <typename T>
int spectral_normalize(Tape<T>& t, int w_id, const std::vector<T>& u) {
  const Tensor<T>& wt = t.val(w_id);
  detail::check_4d(wt, "spectral_normalize weight");
  int o = wt.shape()[0];
  std::int64_t ck = wt.numel() / o;
  RF_CHECK_SHAPE(int(u.size()) == o, "spectral_normalize: u size ", u.size(),
                 " vs out channels ", o);
  auto v = std::make_shared<std::vector<T>>(std::size_t(ck), T(0));
  double ss = 0.0;
  for (int oi = 0; oi < o; ++oi) {
    const T* wp = &wt.data()[std::int64_t(oi) * ck];
    T uo = u[std::size_t(oi)];
    for (std::int64_t k = 0; k < ck; ++k) (*v)[std::size_t(k)] += uo * wp[k];
  }
  for (std::int64_t k = 0; k < ck; ++k) ss += double((*v)[std::size_t(k)]) * double((*v)[std::size_t(k)]);
  double sigma = std::sqrt(ss);
  RF_CHECK(sigma > 0.0 && std::isfinite(sigma), NumericalError,
           "spectral_normalize: degenerate sigma ", sigma);
  for (std::int64_t k = 0; k < ck; ++k) (*v)[std::size_t(k)] = T(double((*v)[std::size_t(k)]) / sigma);
  Tensor<T> out(wt.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = T(double(wt[i]) / sigma);
  auto uc = std::make_shared<std::vector<T>>(u);
  return t.push(std::move(out), [w_id, uc, v, o, ck, sigma](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& w2 = tp.val(w_id);
    double gw = 0.0;
    for (std::int64_t i = 0; i < g.numel(); ++i) gw += double(g[i]) * double(w2[i]);
    double coef = gw / (sigma * sigma);
    Tensor<T> gwt(w2.shape());
    for (int oi = 0; oi < o; ++oi) {
      const T* gp = &g.data()[std::int64_t(oi) * ck];
      T* op = &gwt.data()[std::int64_t(oi) * ck];
      double uo = double((*uc)[std::size_t(oi)]);
      for (std::int64_t k = 0; k < ck; ++k)
        op[k] = T(double(gp[k]) / sigma - coef * uo * double((*v)[std::size_t(k)]));
    }
    tp.accumulate(w_id, gwt);
  });
}

// One power-iteration step for the persistent u vector; runs outside the tape.
// v = normalize(W^T u); u <- normalize(W v).
template <typename T>
void spectral_power_iterate(const Tensor<T>& wt, std::vector<T>& u) {
  int o = wt.shape()[0];
  std::int64_t ck = wt.numel() / o;
  std::vector<double> v(std::size_t(ck), 0.0);
  for (int oi = 0; oi < o; ++oi) {
    const T* wp = &wt.data()[std::int64_t(oi) * ck];
    double uo = double(u[std::size_t(oi)]);
    for (std::int64_t k = 0; k < ck; ++k) v[std::size_t(k)] += uo * double(wp[k]);
  }
  double vn = 0.0;
  for (double x : v) vn += x * x;
  vn = std::sqrt(vn);
  if (vn <= 0.0 || !std::isfinite(vn)) return;  // keep previous u
  for (double& x : v) x /= vn;
  std::vector<double> un(std::size_t(o), 0.0);
  for (int oi = 0; oi < o; ++oi) {
    const T* wp = &wt.data()[std::int64_t(oi) * ck];
    double acc = 0.0;
    for (std::int64_t k = 0; k < ck; ++k) acc += double(wp[k]) * v[std::size_t(k)];
    un[std::size_t(oi)] = acc;
  }
  double unn = 0.0;
  for (double x : un) unn += x * x;
  unn = std::sqrt(unn);
  if (unn <= 0.0 || !std::isfinite(unn)) return;
  for (int oi = 0; oi < o; ++oi) u[std::size_t(oi)] = T(un[std::size_t(oi)] / unn);
}

// ---- label-map resampling ---------------------------------------------------

// Nearest-neighbor downsample of an integer label map to (h, w).
inline LabelMap downsample_labels(const LabelMap& labels, int h, int w) {
  RF_CHECK_SHAPE(labels.dim() == 2, "downsample_labels: ", shape_str(labels.shape()));
  int src_h = labels.shape()[0], src_w = labels.shape()[1];
  LabelMap out({h, w});
  for (int i = 0; i < h; ++i) {
    int si = std::min(src_h - 1, int((std::int64_t(2 * i + 1) * src_h) / (2 * h)));
    for (int j = 0; j < w; ++j) {
      int sj = std::min(src_w - 1, int((std::int64_t(2 * j + 1) * src_w) / (2 * w)));
      out(i, j) = labels(si, sj);
    }
  }
  return out;
}

}  // namespace roomfill::ad
