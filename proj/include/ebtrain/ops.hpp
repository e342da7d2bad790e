#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "ebtrain/errors.hpp"
#include "ebtrain/tensor.hpp"

namespace ebt {

// ---------------------------------------------------------------------------
// Small dense kernels. Row-major throughout; every loop nest has a fixed
// iteration order so results are bit-reproducible run to run.
// ---------------------------------------------------------------------------

/// C[m x n] (+)= A[m x k] * B[k x n].
template <typename T>
inline void gemm_acc(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, T(0));
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    T* crow = c + static_cast<std::size_t>(i) * n;
    for (int t = 0; t < k; ++t) {
      const T av = arow[t];
      const T* brow = b + static_cast<std::size_t>(t) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
inline void transpose(const T* src, int rows, int cols, T* dst) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
}

// ---------------------------------------------------------------------------
// Convolution (exact cross-correlation, zero padding)
// ---------------------------------------------------------------------------

struct ConvGeom {
  int n, cin, h, w;
  int cout, k, stride, pad;
  int hout, wout;
};

template <typename T>
inline ConvGeom conv2d_geometry(const Tensor<T>& x, const Tensor<T>& weight, int stride, int pad) {
  if (x.rank() != 4) throw DimensionError("conv2d: input must be [N,Cin,H,W]");
  if (weight.rank() != 4) throw DimensionError("conv2d: weight must be [Cout,Cin,K,K]");
  if (weight.dim(2) != weight.dim(3)) throw DimensionError("conv2d: kernel must be square");
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  if (pad < 0) throw DimensionError("conv2d: pad must be >= 0");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), stride, pad, 0, 0};
  if (weight.dim(1) != g.cin) throw DimensionError("conv2d: weight Cin does not match input");
  if (g.k > g.h + 2 * pad || g.k > g.w + 2 * pad) throw DimensionError("conv2d: kernel larger than padded input");
  g.hout = (g.h + 2 * pad - g.k) / stride + 1;
  g.wout = (g.w + 2 * pad - g.k) / stride + 1;
  return g;
}

/// Expands one sample into a [Cin*K*K x Hout*Wout] patch matrix.
template <typename T>
inline void im2col(const T* x, const ConvGeom& g, T* col) {
  const int ohw = g.hout * g.wout;
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int kh = 0; kh < g.k; ++kh) {
      for (int kw = 0; kw < g.k; ++kw) {
        T* dst = col + static_cast<std::size_t>((ci * g.k + kh) * g.k + kw) * ohw;
        for (int oh = 0; oh < g.hout; ++oh) {
          const int ih = oh * g.stride - g.pad + kh;
          T* drow = dst + static_cast<std::size_t>(oh) * g.wout;
          if (ih < 0 || ih >= g.h) {
            std::fill(drow, drow + g.wout, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(ci) * g.h + ih) * g.w;
          for (int ow = 0; ow < g.wout; ++ow) {
            const int iw = ow * g.stride - g.pad + kw;
            drow[ow] = (iw >= 0 && iw < g.w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
inline void col2im_acc(const T* col, const ConvGeom& g, T* x) {
  const int ohw = g.hout * g.wout;
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int kh = 0; kh < g.k; ++kh) {
      for (int kw = 0; kw < g.k; ++kw) {
        const T* src = col + static_cast<std::size_t>((ci * g.k + kh) * g.k + kw) * ohw;
        for (int oh = 0; oh < g.hout; ++oh) {
          const int ih = oh * g.stride - g.pad + kh;
          if (ih < 0 || ih >= g.h) continue;
          T* drow = x + (static_cast<std::size_t>(ci) * g.h + ih) * g.w;
          const T* srow = src + static_cast<std::size_t>(oh) * g.wout;
          for (int ow = 0; ow < g.wout; ++ow) {
            const int iw = ow * g.stride - g.pad + kw;
            if (iw >= 0 && iw < g.w) drow[iw] += srow[ow];
          }
        }
      }
    }
  }
}

template <typename T>
inline Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, int stride, int pad) {
  const ConvGeom g = conv2d_geometry(x, weight, stride, pad);
  if (bias && bias->shape() != std::vector<int>{g.cout}) throw DimensionError("conv2d: bias must be [Cout]");
  Tensor<T> out({g.n, g.cout, g.hout, g.wout});
  const int ohw = g.hout * g.wout;
  const int ckk = g.cin * g.k * g.k;
  std::vector<T> col(static_cast<std::size_t>(ckk) * ohw);
  const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.cout) * ohw;
  for (int n = 0; n < g.n; ++n) {
    im2col(x.data() + n * in_stride, g, col.data());
    gemm_acc(g.cout, ohw, ckk, weight.data(), col.data(), out.data() + n * out_stride, false);
  }
  if (bias) {
    for (int n = 0; n < g.n; ++n)
      for (int co = 0; co < g.cout; ++co) {
        T* row = out.data() + n * out_stride + static_cast<std::size_t>(co) * ohw;
        const T b = (*bias)[co];
        for (int i = 0; i < ohw; ++i) row[i] += b;
      }
  }
  ensure_finite(out, "conv2d_forward");
  return out;
}

template <typename T>
inline void conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& weight, int stride, int pad,
                            Tensor<T>& grad_x, Tensor<T>& grad_w, Tensor<T>* grad_b) {
  const ConvGeom g = conv2d_geometry(x, weight, stride, pad);
  require_shape(grad_out, {g.n, g.cout, g.hout, g.wout}, "conv2d_backward: grad_out");
  grad_x = Tensor<T>(x.shape());
  grad_w = Tensor<T>(weight.shape());
  if (grad_b) *grad_b = Tensor<T>({g.cout});

  const int ohw = g.hout * g.wout;
  const int ckk = g.cin * g.k * g.k;
  std::vector<T> col(static_cast<std::size_t>(ckk) * ohw);
  std::vector<T> col_t(col.size());
  std::vector<T> gcol(col.size());
  std::vector<T> w_t(static_cast<std::size_t>(ckk) * g.cout);
  transpose(weight.data(), g.cout, ckk, w_t.data());

  const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.cout) * ohw;
  for (int n = 0; n < g.n; ++n) {
    const T* gout_n = grad_out.data() + n * out_stride;
    im2col(x.data() + n * in_stride, g, col.data());
    transpose(col.data(), ckk, ohw, col_t.data());
    gemm_acc(g.cout, ckk, ohw, gout_n, col_t.data(), grad_w.data(), true);
    gemm_acc(ckk, ohw, g.cout, w_t.data(), gout_n, gcol.data(), false);
    col2im_acc(gcol.data(), g, grad_x.data() + n * in_stride);
    if (grad_b) {
      for (int co = 0; co < g.cout; ++co) {
        T s = T(0);
        const T* row = gout_n + static_cast<std::size_t>(co) * ohw;
        for (int i = 0; i < ohw; ++i) s += row[i];
        (*grad_b)[co] += s;
      }
    }
  }
  ensure_finite(grad_x, "conv2d_backward");
  ensure_finite(grad_w, "conv2d_backward");
}

// ---------------------------------------------------------------------------
// Batch normalization over [N,C,H,W]
// ---------------------------------------------------------------------------

template <typename T>
struct BatchStats {
  Tensor<T> mean;    // [C], batch mean
  Tensor<T> invstd;  // [C], 1/sqrt(var_biased + eps)
};

/// Training-mode forward. Normalizes with the biased batch variance, updates
/// the running stats by EMA (running var uses the unbiased estimator).
template <typename T>
inline Tensor<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                                 Tensor<T>& running_mean, Tensor<T>& running_var, T momentum_bn, T eps_bn,
                                 BatchStats<T>& saved) {
  if (x.rank() != 4) throw DimensionError("batchnorm: input must be [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require_shape(gamma, {c}, "batchnorm: gamma");
  require_shape(beta, {c}, "batchnorm: beta");
  if (eps_bn <= T(0)) throw ConfigError("batchnorm: eps must be > 0");
  const std::size_t m = static_cast<std::size_t>(n) * h * w;
  if (m < 2) throw DimensionError("batchnorm: degenerate batch, need N*H*W >= 2 per channel");

  saved.mean = Tensor<T>({c});
  saved.invstd = Tensor<T>({c});
  Tensor<T> out(x.shape());
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t cs = static_cast<std::size_t>(c) * hw;
  for (int ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (int b = 0; b < n; ++b) {
      const T* p = x.data() + b * cs + ch * hw;
      for (std::size_t i = 0; i < hw; ++i) sum += static_cast<double>(p[i]);
    }
    const double mu = sum / static_cast<double>(m);
    double var_sum = 0.0;
    for (int b = 0; b < n; ++b) {
      const T* p = x.data() + b * cs + ch * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = static_cast<double>(p[i]) - mu;
        var_sum += d * d;
      }
    }
    const double var_b = var_sum / static_cast<double>(m);
    const double var_u = var_sum / static_cast<double>(m - 1);
    const T inv = static_cast<T>(1.0 / std::sqrt(var_b + static_cast<double>(eps_bn)));
    saved.mean[ch] = static_cast<T>(mu);
    saved.invstd[ch] = inv;
    running_mean[ch] = (T(1) - momentum_bn) * running_mean[ch] + momentum_bn * static_cast<T>(mu);
    running_var[ch] = (T(1) - momentum_bn) * running_var[ch] + momentum_bn * static_cast<T>(var_u);
    const T g = gamma[ch], bt = beta[ch], mu_t = static_cast<T>(mu);
    for (int b = 0; b < n; ++b) {
      const T* p = x.data() + b * cs + ch * hw;
      T* q = out.data() + b * cs + ch * hw;
      for (std::size_t i = 0; i < hw; ++i) q[i] = g * (p[i] - mu_t) * inv + bt;
    }
  }
  ensure_finite(out, "batchnorm_train");
  return out;
}

/// Eval-mode forward using the running statistics.
template <typename T>
inline Tensor<T> batchnorm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                                const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps_bn) {
  if (x.rank() != 4) throw DimensionError("batchnorm: input must be [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out(x.shape());
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t cs = static_cast<std::size_t>(c) * hw;
  for (int ch = 0; ch < c; ++ch) {
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + static_cast<double>(eps_bn)));
    const T g = gamma[ch], bt = beta[ch], mu = running_mean[ch];
    for (int b = 0; b < n; ++b) {
      const T* p = x.data() + b * cs + ch * hw;
      T* q = out.data() + b * cs + ch * hw;
      for (std::size_t i = 0; i < hw; ++i) q[i] = g * (p[i] - mu) * inv + bt;
    }
  }
  ensure_finite(out, "batchnorm_eval");
  return out;
}

template <typename T>
inline void batchnorm_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& gamma,
                               const BatchStats<T>& saved, Tensor<T>& grad_x, Tensor<T>& grad_gamma,
                               Tensor<T>& grad_beta) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require_shape(grad_out, x.shape(), "batchnorm_backward: grad_out");
  grad_x = Tensor<T>(x.shape());
  grad_gamma = Tensor<T>({c});
  grad_beta = Tensor<T>({c});
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t cs = static_cast<std::size_t>(c) * hw;
  const T m = static_cast<T>(static_cast<std::size_t>(n) * hw);
  for (int ch = 0; ch < c; ++ch) {
    const T mu = saved.mean[ch], inv = saved.invstd[ch], g = gamma[ch];
    double s0 = 0.0, s1 = 0.0;  // sum(gout), sum(gout * xhat)
    for (int b = 0; b < n; ++b) {
      const T* px = x.data() + b * cs + ch * hw;
      const T* pg = grad_out.data() + b * cs + ch * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xhat = (px[i] - mu) * inv;
        s0 += static_cast<double>(pg[i]);
        s1 += static_cast<double>(pg[i]) * static_cast<double>(xhat);
      }
    }
    grad_beta[ch] = static_cast<T>(s0);
    grad_gamma[ch] = static_cast<T>(s1);
    const T t0 = static_cast<T>(s0) / m, t1 = static_cast<T>(s1) / m;
    const T scale = g * inv;
    for (int b = 0; b < n; ++b) {
      const T* px = x.data() + b * cs + ch * hw;
      const T* pg = grad_out.data() + b * cs + ch * hw;
      T* pq = grad_x.data() + b * cs + ch * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xhat = (px[i] - mu) * inv;
        pq[i] = scale * (pg[i] - t0 - xhat * t1);
      }
    }
  }
  ensure_finite(grad_x, "batchnorm_backward");
}

// ---------------------------------------------------------------------------
// Elementwise / pooling / linear / loss
// ---------------------------------------------------------------------------

template <typename T>
inline Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  ensure_finite(out, "relu_forward");
  return out;
}

/// `out` is the forward output; the subgradient at 0 is 0.
template <typename T>
inline Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& out) {
  require_shape(grad_out, out.shape(), "relu_backward: grad_out");
  Tensor<T> gx(out.shape());
  for (std::size_t i = 0; i < out.size(); ++i) gx[i] = out[i] > T(0) ? grad_out[i] : T(0);
  ensure_finite(gx, "relu_backward");
  return gx;
}

/// Max pooling; `argmax` records the flat input index of each output element
/// (first maximum wins on ties).
template <typename T>
inline Tensor<T> maxpool2d_forward(const Tensor<T>& x, int k, int stride, std::vector<std::int64_t>& argmax) {
  if (x.rank() != 4) throw DimensionError("maxpool2d: input must be [N,C,H,W]");
  if (k < 1 || stride < 1) throw DimensionError("maxpool2d: kernel and stride must be >= 1");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k > h || k > w) throw DimensionError("maxpool2d: kernel larger than input");
  const int hout = (h - k) / stride + 1;
  const int wout = (w - k) / stride + 1;
  Tensor<T> out({n, c, hout, wout});
  argmax.assign(out.size(), 0);
  std::size_t oi = 0;
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* plane = x.data() + (static_cast<std::size_t>(b) * c + ch) * h * w;
      const std::size_t plane_off = (static_cast<std::size_t>(b) * c + ch) * h * w;
      for (int oh = 0; oh < hout; ++oh) {
        for (int ow = 0; ow < wout; ++ow, ++oi) {
          const int h0 = oh * stride, w0 = ow * stride;
          T best = plane[h0 * w + w0];
          std::int64_t best_i = plane_off + static_cast<std::size_t>(h0) * w + w0;
          for (int dh = 0; dh < k; ++dh) {
            for (int dw = 0; dw < k; ++dw) {
              const T v = plane[(h0 + dh) * w + (w0 + dw)];
              if (v > best) {
                best = v;
                best_i = plane_off + static_cast<std::size_t>(h0 + dh) * w + (w0 + dw);
              }
            }
          }
          out[oi] = best;
          argmax[oi] = best_i;
        }
      }
    }
  }
  ensure_finite(out, "maxpool2d_forward");
  return out;
}

template <typename T>
inline Tensor<T> maxpool2d_backward(const Tensor<T>& grad_out, const std::vector<int>& input_shape,
                                    const std::vector<std::int64_t>& argmax) {
  if (grad_out.size() != argmax.size()) throw DimensionError("maxpool2d_backward: argmax size mismatch");
  Tensor<T> gx(input_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) gx[argmax[i]] += grad_out[i];
  ensure_finite(gx, "maxpool2d_backward");
  return gx;
}

/// Global average pooling [N,C,H,W] -> [N,C].
template <typename T>
inline Tensor<T> global_avgpool_forward(const Tensor<T>& x) {
  if (x.rank() != 4) throw DimensionError("global_avgpool: input must be [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> out({n, c});
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* p = x.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += static_cast<double>(p[i]);
      out[static_cast<std::size_t>(b) * c + ch] = static_cast<T>(s / static_cast<double>(hw));
    }
  }
  ensure_finite(out, "global_avgpool_forward");
  return out;
}

template <typename T>
inline Tensor<T> global_avgpool_backward(const Tensor<T>& grad_out, const std::vector<int>& input_shape) {
  const int n = input_shape[0], c = input_shape[1];
  const std::size_t hw = static_cast<std::size_t>(input_shape[2]) * input_shape[3];
  require_shape(grad_out, {n, c}, "global_avgpool_backward: grad_out");
  Tensor<T> gx(input_shape);
  const T scale = T(1) / static_cast<T>(hw);
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T g = grad_out[static_cast<std::size_t>(b) * c + ch] * scale;
      T* p = gx.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) p[i] = g;
    }
  }
  ensure_finite(gx, "global_avgpool_backward");
  return gx;
}

/// y = x W^T + b, with x [N,in], W [out,in].
template <typename T>
inline Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias) {
  if (x.rank() != 2 || weight.rank() != 2) throw DimensionError("linear: x must be [N,in], W [out,in]");
  const int n = x.dim(0), in = x.dim(1), out_f = weight.dim(0);
  if (weight.dim(1) != in) throw DimensionError("linear: weight in_features mismatch");
  if (bias && bias->shape() != std::vector<int>{out_f}) throw DimensionError("linear: bias must be [out]");
  std::vector<T> w_t(static_cast<std::size_t>(in) * out_f);
  transpose(weight.data(), out_f, in, w_t.data());
  Tensor<T> y({n, out_f});
  gemm_acc(n, out_f, in, x.data(), w_t.data(), y.data(), false);
  if (bias) {
    for (int b = 0; b < n; ++b)
      for (int o = 0; o < out_f; ++o) y[static_cast<std::size_t>(b) * out_f + o] += (*bias)[o];
  }
  ensure_finite(y, "linear_forward");
  return y;
}

template <typename T>
inline void linear_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& weight, Tensor<T>& grad_x,
                            Tensor<T>& grad_w, Tensor<T>* grad_b) {
  const int n = x.dim(0), in = x.dim(1), out_f = weight.dim(0);
  require_shape(grad_out, {n, out_f}, "linear_backward: grad_out");
  grad_x = Tensor<T>({n, in});
  grad_w = Tensor<T>(weight.shape());
  gemm_acc(n, in, out_f, grad_out.data(), weight.data(), grad_x.data(), false);
  for (int b = 0; b < n; ++b) {
    const T* xrow = x.data() + static_cast<std::size_t>(b) * in;
    const T* grow = grad_out.data() + static_cast<std::size_t>(b) * out_f;
    for (int o = 0; o < out_f; ++o) {
      const T g = grow[o];
      T* wrow = grad_w.data() + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) wrow[i] += g * xrow[i];
    }
  }
  if (grad_b) {
    *grad_b = Tensor<T>({out_f});
    for (int b = 0; b < n; ++b)
      for (int o = 0; o < out_f; ++o) (*grad_b)[o] += grad_out[static_cast<std::size_t>(b) * out_f + o];
  }
  ensure_finite(grad_x, "linear_backward");
  ensure_finite(grad_w, "linear_backward");
}

/// Mean cross-entropy over the batch with max-subtracted softmax. Returns the
/// loss and the gradient w.r.t. the logits.
template <typename T>
inline std::pair<double, Tensor<T>> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw DimensionError("softmax_cross_entropy: logits must be [N,K]");
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n) throw DimensionError("softmax_cross_entropy: labels size mismatch");
  Tensor<T> grad({n, k});
  double loss = 0.0;
  for (int b = 0; b < n; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= k) throw DataError("softmax_cross_entropy: label out of range at row " + std::to_string(b));
    const T* row = logits.data() + static_cast<std::size_t>(b) * k;
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    loss += -(static_cast<double>(row[y] - mx) - std::log(denom));
    T* grow = grad.data() + static_cast<std::size_t>(b) * k;
    for (int j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(row[j] - mx)) / denom;
      grow[j] = static_cast<T>((p - (j == y ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericError("softmax_cross_entropy: non-finite loss");
  ensure_finite(grad, "softmax_cross_entropy");
  return {loss, std::move(grad)};
}

}  // namespace ebt
