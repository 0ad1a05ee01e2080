#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <vector>

#include "stitchlab/tensor.hpp"

namespace stitchlab {

using MatRM =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)
// ---------------------------------------------------------------------------

struct Conv2d {
  int in_c = 0, out_c = 0, k = 1, stride = 1, pad = 0;
  bool has_bias = false;

  std::vector<float> w;  // [out_c, in_c, k, k]
  std::vector<float> b;  // [out_c]
  std::vector<float> gw;
  std::vector<float> gb;

  Conv2d() = default;
  Conv2d(int in_c_, int out_c_, int k_, int stride_, int pad_, bool bias)
      : in_c(in_c_), out_c(out_c_), k(k_), stride(stride_), pad(pad_),
        has_bias(bias),
        w(static_cast<size_t>(out_c_) * in_c_ * k_ * k_, 0.0f),
        b(bias ? out_c_ : 0, 0.0f), gw(w.size(), 0.0f), gb(b.size(), 0.0f) {}

  // Kaiming fan-out init, deterministic per seed.
  void init(uint64_t seed) {
    float stddev = std::sqrt(2.0f / (static_cast<float>(out_c) * k * k));
    fill_normal(w, stddev, seed);
    std::fill(b.begin(), b.end(), 0.0f);
  }

  int out_dim(int in) const { return (in + 2 * pad - k) / stride + 1; }

  void zero_grad() {
    std::fill(gw.begin(), gw.end(), 0.0f);
    std::fill(gb.begin(), gb.end(), 0.0f);
  }
};

namespace detail {

// col is [in_c*k*k, oh*ow] row-major for one image.
inline void im2col(const float* img, int c, int h, int w, const Conv2d& cv,
                   int oh, int ow, float* col) {
  const int kk = cv.k;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < kk; ++ky) {
      for (int kx = 0; kx < kk; ++kx) {
        float* row = col + ((static_cast<size_t>(ch) * kk + ky) * kk + kx) *
                               (static_cast<size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * cv.stride + ky - cv.pad;
          if (iy < 0 || iy >= h) {
            std::fill(row + static_cast<size_t>(oy) * ow,
                      row + static_cast<size_t>(oy + 1) * ow, 0.0f);
            continue;
          }
          const float* src = img + (static_cast<size_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * cv.stride + kx - cv.pad;
            row[static_cast<size_t>(oy) * ow + ox] =
                (ix >= 0 && ix < w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

inline void col2im_add(const float* col, int c, int h, int w, const Conv2d& cv,
                       int oh, int ow, float* img) {
  const int kk = cv.k;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < kk; ++ky) {
      for (int kx = 0; kx < kk; ++kx) {
        const float* row = col + ((static_cast<size_t>(ch) * kk + ky) * kk + kx) *
                                     (static_cast<size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * cv.stride + ky - cv.pad;
          if (iy < 0 || iy >= h) continue;
          float* dst = img + (static_cast<size_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * cv.stride + kx - cv.pad;
            if (ix >= 0 && ix < w)
              dst[ix] += row[static_cast<size_t>(oy) * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

inline Tensor conv_forward(const Conv2d& cv, const Tensor& x) {
  if (x.c != cv.in_c)
    throw ShapeError("conv_forward: expected " + std::to_string(cv.in_c) +
                     " input channels, got " + std::to_string(x.c));
  int oh = cv.out_dim(x.h), ow = cv.out_dim(x.w);
  Tensor y(x.n, cv.out_c, oh, ow);
  const int ck2 = cv.in_c * cv.k * cv.k;
  std::vector<float> col(static_cast<size_t>(ck2) * oh * ow);
  CMapRM wm(cv.w.data(), cv.out_c, ck2);
  for (int i = 0; i < x.n; ++i) {
    detail::im2col(x.image(i), x.c, x.h, x.w, cv, oh, ow, col.data());
    CMapRM cm(col.data(), ck2, static_cast<Eigen::Index>(oh) * ow);
    MapRM ym(y.image(i), cv.out_c, static_cast<Eigen::Index>(oh) * ow);
    ym.noalias() = wm * cm;
    if (cv.has_bias)
      for (int oc = 0; oc < cv.out_c; ++oc)
        ym.row(oc).array() += cv.b[oc];
  }
  return y;
}

// Gradient w.r.t. input only; needs weights and the input geometry.
inline Tensor conv_backward_input(const Conv2d& cv, const Tensor& dy, int in_h,
                                  int in_w) {
  Tensor dx(dy.n, cv.in_c, in_h, in_w);
  const int ck2 = cv.in_c * cv.k * cv.k;
  const int oh = dy.h, ow = dy.w;
  std::vector<float> col(static_cast<size_t>(ck2) * oh * ow);
  CMapRM wm(cv.w.data(), cv.out_c, ck2);
  for (int i = 0; i < dy.n; ++i) {
    CMapRM dym(dy.image(i), cv.out_c, static_cast<Eigen::Index>(oh) * ow);
    MapRM cm(col.data(), ck2, static_cast<Eigen::Index>(oh) * ow);
    cm.noalias() = wm.transpose() * dym;
    detail::col2im_add(col.data(), cv.in_c, in_h, in_w, cv, oh, ow,
                       dx.image(i));
  }
  return dx;
}

// Accumulates weight/bias gradients; x is the cached forward input.
inline void conv_backward_params(Conv2d& cv, const Tensor& x,
                                 const Tensor& dy) {
  const int ck2 = cv.in_c * cv.k * cv.k;
  const int oh = dy.h, ow = dy.w;
  std::vector<float> col(static_cast<size_t>(ck2) * oh * ow);
  MapRM gwm(cv.gw.data(), cv.out_c, ck2);
  for (int i = 0; i < x.n; ++i) {
    detail::im2col(x.image(i), x.c, x.h, x.w, cv, oh, ow, col.data());
    CMapRM cm(col.data(), ck2, static_cast<Eigen::Index>(oh) * ow);
    CMapRM dym(dy.image(i), cv.out_c, static_cast<Eigen::Index>(oh) * ow);
    gwm.noalias() += dym * cm.transpose();
    if (cv.has_bias)
      for (int oc = 0; oc < cv.out_c; ++oc)
        cv.gb[oc] += dym.row(oc).sum();
  }
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

struct BatchNorm2d {
  int c = 0;
  float eps = 1e-5f;
  float momentum = 0.1f;

  std::vector<float> gamma, beta;
  std::vector<float> running_mean, running_var;
  std::vector<float> ggamma, gbeta;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int c_)
      : c(c_), gamma(c_, 1.0f), beta(c_, 0.0f), running_mean(c_, 0.0f),
        running_var(c_, 1.0f), ggamma(c_, 0.0f), gbeta(c_, 0.0f) {}

  void zero_grad() {
    std::fill(ggamma.begin(), ggamma.end(), 0.0f);
    std::fill(gbeta.begin(), gbeta.end(), 0.0f);
  }
};

inline Tensor bn_infer(const BatchNorm2d& bn, const Tensor& x) {
  Tensor y = Tensor::like(x);
  const size_t plane = x.plane();
  for (int ch = 0; ch < x.c; ++ch) {
    float inv = 1.0f / std::sqrt(bn.running_var[ch] + bn.eps);
    float scale = bn.gamma[ch] * inv;
    float shift = bn.beta[ch] - bn.running_mean[ch] * scale;
    for (int i = 0; i < x.n; ++i) {
      const float* src = x.image(i) + ch * plane;
      float* dst = y.image(i) + ch * plane;
      for (size_t p = 0; p < plane; ++p) dst[p] = src[p] * scale + shift;
    }
  }
  return y;
}

inline Tensor bn_infer_backward(const BatchNorm2d& bn, const Tensor& dy) {
  Tensor dx = Tensor::like(dy);
  const size_t plane = dy.plane();
  for (int ch = 0; ch < dy.c; ++ch) {
    float scale = bn.gamma[ch] / std::sqrt(bn.running_var[ch] + bn.eps);
    for (int i = 0; i < dy.n; ++i) {
      const float* src = dy.image(i) + ch * plane;
      float* dst = dx.image(i) + ch * plane;
      for (size_t p = 0; p < plane; ++p) dst[p] = src[p] * scale;
    }
  }
  return dx;
}

struct BnCache {
  Tensor xhat;
  std::vector<float> invstd;
};

inline Tensor bn_train_forward(BatchNorm2d& bn, const Tensor& x,
                               BnCache& cache) {
  Tensor y = Tensor::like(x);
  cache.xhat = Tensor::like(x);
  cache.invstd.assign(x.c, 0.0f);
  const size_t plane = x.plane();
  const double m = static_cast<double>(x.n) * plane;
  for (int ch = 0; ch < x.c; ++ch) {
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < x.n; ++i) {
      const float* src = x.image(i) + ch * plane;
      for (size_t p = 0; p < plane; ++p) {
        sum += src[p];
        sq += static_cast<double>(src[p]) * src[p];
      }
    }
    float mean = static_cast<float>(sum / m);
    float var = static_cast<float>(sq / m - (sum / m) * (sum / m));
    if (var < 0.0f) var = 0.0f;
    float inv = 1.0f / std::sqrt(var + bn.eps);
    cache.invstd[ch] = inv;
    for (int i = 0; i < x.n; ++i) {
      const float* src = x.image(i) + ch * plane;
      float* xh = cache.xhat.image(i) + ch * plane;
      float* dst = y.image(i) + ch * plane;
      for (size_t p = 0; p < plane; ++p) {
        xh[p] = (src[p] - mean) * inv;
        dst[p] = xh[p] * bn.gamma[ch] + bn.beta[ch];
      }
    }
    // running stats track the unbiased variance
    float unbias = (m > 1) ? static_cast<float>(m / (m - 1.0)) : 1.0f;
    bn.running_mean[ch] =
        (1.0f - bn.momentum) * bn.running_mean[ch] + bn.momentum * mean;
    bn.running_var[ch] =
        (1.0f - bn.momentum) * bn.running_var[ch] + bn.momentum * var * unbias;
  }
  return y;
}

inline Tensor bn_train_backward(BatchNorm2d& bn, const BnCache& cache,
                                const Tensor& dy) {
  Tensor dx = Tensor::like(dy);
  const size_t plane = dy.plane();
  const double m = static_cast<double>(dy.n) * plane;
  for (int ch = 0; ch < dy.c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int i = 0; i < dy.n; ++i) {
      const float* g = dy.image(i) + ch * plane;
      const float* xh = cache.xhat.image(i) + ch * plane;
      for (size_t p = 0; p < plane; ++p) {
        sum_dy += g[p];
        sum_dy_xhat += static_cast<double>(g[p]) * xh[p];
      }
    }
    bn.gbeta[ch] += static_cast<float>(sum_dy);
    bn.ggamma[ch] += static_cast<float>(sum_dy_xhat);
    float k = bn.gamma[ch] * cache.invstd[ch] / static_cast<float>(m);
    for (int i = 0; i < dy.n; ++i) {
      const float* g = dy.image(i) + ch * plane;
      const float* xh = cache.xhat.image(i) + ch * plane;
      float* d = dx.image(i) + ch * plane;
      for (size_t p = 0; p < plane; ++p) {
        d[p] = k * (static_cast<float>(m) * g[p] - static_cast<float>(sum_dy) -
                    xh[p] * static_cast<float>(sum_dy_xhat));
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pointwise / pooling / linear
// ---------------------------------------------------------------------------

inline void relu_inplace(Tensor& x) {
  for (auto& v : x.data)
    if (v < 0.0f) v = 0.0f;
}

// dx = dy where the forward output was positive; y is the cached output.
inline Tensor relu_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx = Tensor::like(dy);
  for (size_t i = 0; i < dy.size(); ++i)
    dx.data[i] = (y.data[i] > 0.0f) ? dy.data[i] : 0.0f;
  return dx;
}

inline Tensor global_avg_pool(const Tensor& x) {
  Tensor y(x.n, x.c, 1, 1);
  const size_t plane = x.plane();
  const float inv = 1.0f / static_cast<float>(plane);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      const float* src = x.image(i) + ch * plane;
      float s = 0.0f;
      for (size_t p = 0; p < plane; ++p) s += src[p];
      y.at(i, ch, 0, 0) = s * inv;
    }
  return y;
}

inline Tensor global_avg_pool_backward(const Tensor& dy, int h, int w) {
  Tensor dx(dy.n, dy.c, h, w);
  const size_t plane = static_cast<size_t>(h) * w;
  const float inv = 1.0f / static_cast<float>(plane);
  for (int i = 0; i < dy.n; ++i)
    for (int ch = 0; ch < dy.c; ++ch) {
      float g = dy.at(i, ch, 0, 0) * inv;
      float* dst = dx.image(i) + ch * plane;
      for (size_t p = 0; p < plane; ++p) dst[p] = g;
    }
  return dx;
}

struct Linear {
  int in = 0, out = 0;
  std::vector<float> w, b, gw, gb;  // w is [out, in]

  Linear() = default;
  Linear(int in_, int out_)
      : in(in_), out(out_), w(static_cast<size_t>(in_) * out_, 0.0f),
        b(out_, 0.0f), gw(w.size(), 0.0f), gb(out_, 0.0f) {}

  void init(uint64_t seed) {
    fill_normal(w, std::sqrt(2.0f / static_cast<float>(out)), seed);
    std::fill(b.begin(), b.end(), 0.0f);
  }

  void zero_grad() {
    std::fill(gw.begin(), gw.end(), 0.0f);
    std::fill(gb.begin(), gb.end(), 0.0f);
  }
};

// x is (n, in, 1, 1); returns (n, out, 1, 1).
inline Tensor linear_forward(const Linear& fc, const Tensor& x) {
  Tensor y(x.n, fc.out, 1, 1);
  CMapRM wm(fc.w.data(), fc.out, fc.in);
  CMapRM xm(x.data.data(), x.n, fc.in);
  MapRM ym(y.data.data(), x.n, fc.out);
  ym.noalias() = xm * wm.transpose();
  for (int i = 0; i < x.n; ++i)
    for (int o = 0; o < fc.out; ++o) ym(i, o) += fc.b[o];
  return y;
}

inline Tensor linear_backward(Linear& fc, const Tensor& x, const Tensor& dy,
                              bool param_grads) {
  CMapRM wm(fc.w.data(), fc.out, fc.in);
  CMapRM xm(x.data.data(), x.n, fc.in);
  CMapRM dym(dy.data.data(), dy.n, fc.out);
  if (param_grads) {
    MapRM gwm(fc.gw.data(), fc.out, fc.in);
    gwm.noalias() += dym.transpose() * xm;
    for (int i = 0; i < dy.n; ++i)
      for (int o = 0; o < fc.out; ++o) fc.gb[o] += dym(i, o);
  }
  Tensor dx(x.n, fc.in, 1, 1);
  MapRM dxm(dx.data.data(), x.n, fc.in);
  dxm.noalias() = dym * wm;
  return dx;
}

// ---------------------------------------------------------------------------
// Nearest-neighbor upsampling: each element copied into a k-by-k block.
// ---------------------------------------------------------------------------

inline Tensor nearest_upsample(const Tensor& x, int k) {
  if (k < 1 || (k & (k - 1)) != 0)
    throw ArgumentError("nearest_upsample: factor must be a power of 2, got " +
                        std::to_string(k));
  if (k == 1) return x;
  Tensor y(x.n, x.c, x.h * k, x.w * k);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx)
          y.at(i, ch, yy, xx) = x.at(i, ch, yy / k, xx / k);
  return y;
}

// Adjoint of nearest_upsample: sum each k-by-k block.
inline Tensor nearest_upsample_backward(const Tensor& dy, int k) {
  if (k == 1) return dy;
  Tensor dx(dy.n, dy.c, dy.h / k, dy.w / k);
  for (int i = 0; i < dy.n; ++i)
    for (int ch = 0; ch < dy.c; ++ch)
      for (int yy = 0; yy < dy.h; ++yy)
        for (int xx = 0; xx < dy.w; ++xx)
          dx.at(i, ch, yy / k, xx / k) += dy.at(i, ch, yy, xx);
  return dx;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy on logits (n, 10, 1, 1)
// ---------------------------------------------------------------------------

// Returns mean loss; fills dlogits (already divided by batch size).
inline double softmax_xent(const Tensor& logits, const std::vector<int>& labels,
                           Tensor* dlogits) {
  const int n = logits.n, k = logits.c;
  if (dlogits) *dlogits = Tensor::like(logits);
  double loss = 0.0;
  std::vector<float> p(k);
  for (int i = 0; i < n; ++i) {
    const float* z = logits.image(i);
    float zmax = z[0];
    for (int j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) {
      p[j] = std::exp(z[j] - zmax);
      denom += p[j];
    }
    for (int j = 0; j < k; ++j) p[j] = static_cast<float>(p[j] / denom);
    loss += -std::log(std::max(static_cast<double>(p[labels[i]]), 1e-30));
    if (dlogits) {
      float* d = dlogits->image(i);
      for (int j = 0; j < k; ++j)
        d[j] = (p[j] - (j == labels[i] ? 1.0f : 0.0f)) / static_cast<float>(n);
    }
  }
  return loss / n;
}

}  // namespace stitchlab
