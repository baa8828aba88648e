#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <vector>

#include "pstereo/net/tensor.hpp"

namespace ps::net {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;  // column-major

inline int conv_out_dim(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

/// Unrolls conv patches into a (C*k*k) x (Ho*Wo) matrix with zero padding.
/// Row (ci*k + ky)*k + kx holds input channel ci at kernel offset (ky, kx);
/// column yo*Wo + xo is the output position.
inline void im2col(const float* x, int C, int H, int W, int k, int s, int p, MatF& A) {
  const int Ho = conv_out_dim(H, k, s, p), Wo = conv_out_dim(W, k, s, p);
  A.resize(static_cast<Eigen::Index>(C) * k * k, static_cast<Eigen::Index>(Ho) * Wo);
  for (int ci = 0; ci < C; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const int r = (ci * k + ky) * k + kx;
        for (int yo = 0; yo < Ho; ++yo) {
          const int yi = yo * s + ky - p;
          const bool y_ok = yi >= 0 && yi < H;
          const float* row = x + (static_cast<std::size_t>(ci) * H + yi) * W;
          for (int xo = 0; xo < Wo; ++xo) {
            const int xi = xo * s + kx - p;
            A(r, static_cast<Eigen::Index>(yo) * Wo + xo) =
                (y_ok && xi >= 0 && xi < W) ? row[xi] : 0.0f;
          }
        }
      }
}

/// Adjoint of im2col: scatter-adds patch values back into the (C, H, W)
/// buffer. The buffer is accumulated into, not cleared.
inline void col2im(const MatF& B, int C, int H, int W, int k, int s, int p, float* x) {
  const int Ho = conv_out_dim(H, k, s, p), Wo = conv_out_dim(W, k, s, p);
  for (int ci = 0; ci < C; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const int r = (ci * k + ky) * k + kx;
        for (int yo = 0; yo < Ho; ++yo) {
          const int yi = yo * s + ky - p;
          if (yi < 0 || yi >= H) continue;
          float* row = x + (static_cast<std::size_t>(ci) * H + yi) * W;
          for (int xo = 0; xo < Wo; ++xo) {
            const int xi = xo * s + kx - p;
            if (xi >= 0 && xi < W) row[xi] += B(r, static_cast<Eigen::Index>(yo) * Wo + xo);
          }
        }
      }
}

/// Convolution with weights flat in (Cout, Cin, k, k) row-major order and an
/// optional per-channel bias (pass nullptr to skip).
inline Tensor conv2d_forward(const Tensor& x, const float* weight, const float* bias, int cout,
                             int k, int s, int p) {
  const int ho = conv_out_dim(x.h, k, s, p), wo = conv_out_dim(x.w, k, s, p);
  const Eigen::Index kk = static_cast<Eigen::Index>(x.c) * k * k;
  MatF a;
  im2col(x.v.data(), x.c, x.h, x.w, k, s, p, a);
  Tensor y(cout, ho, wo);
  // Weight rows follow im2col rows, one column per output channel.
  Eigen::Map<const MatF> wmat(weight, kk, cout);
  Eigen::Map<MatF> ymat(y.v.data(), static_cast<Eigen::Index>(ho) * wo, cout);
  ymat.noalias() = a.transpose() * wmat;
  if (bias)
    for (int o = 0; o < cout; ++o) ymat.col(o).array() += bias[o];
  return y;
}

/// Accumulates conv gradients: dx (same shape as x, += ), dweight/dbias flat
/// (+=). Pass nullptr for any output that is not needed.
inline void conv2d_backward(const Tensor& x, const float* weight, const Tensor& dy, int k, int s,
                            int p, float* dx, float* dweight, float* dbias) {
  const int cout = dy.c;
  const Eigen::Index kk = static_cast<Eigen::Index>(x.c) * k * k;
  const Eigen::Index pn = static_cast<Eigen::Index>(dy.h) * dy.w;
  Eigen::Map<const MatF> dymat(dy.v.data(), pn, cout);
  if (dbias)
    for (int o = 0; o < cout; ++o) dbias[o] += dymat.col(o).sum();
  MatF a;
  if (dweight || dx) im2col(x.v.data(), x.c, x.h, x.w, k, s, p, a);
  if (dweight) {
    Eigen::Map<MatF> dwmat(dweight, kk, cout);
    dwmat.noalias() += a * dymat;
  }
  if (dx) {
    Eigen::Map<const MatF> wmat(weight, kk, cout);
    MatF b(kk, pn);
    b.noalias() = wmat * dymat.transpose();
    col2im(b, x.c, x.h, x.w, k, s, p, dx);
  }
}

/// Transposed convolution with weights flat in (Cin, Cout, k, k) row-major
/// order. Output spatial dims are s*(Hi-1) + k - 2p (exactly 2x for the
/// k=4, s=2, p=1 upsamplers used here).
inline Tensor deconv2d_forward(const Tensor& x, const float* weight, const float* bias, int cout,
                               int k, int s, int p) {
  const int ho = s * (x.h - 1) + k - 2 * p, wo = s * (x.w - 1) + k - 2 * p;
  check(conv_out_dim(ho, k, s, p) == x.h && conv_out_dim(wo, k, s, p) == x.w, Err::shape_error,
        "transposed conv geometry does not invert its forward conv");
  const Eigen::Index kk = static_cast<Eigen::Index>(cout) * k * k;
  const Eigen::Index pn = static_cast<Eigen::Index>(x.h) * x.w;
  Eigen::Map<const MatF> wmat(weight, kk, x.c);
  Eigen::Map<const MatF> xmat(x.v.data(), pn, x.c);
  MatF b(kk, pn);
  b.noalias() = wmat * xmat.transpose();
  Tensor y(cout, ho, wo);
  col2im(b, cout, ho, wo, k, s, p, y.v.data());
  if (bias)
    for (int o = 0; o < cout; ++o) {
      float* ch = y.v.data() + static_cast<std::size_t>(o) * ho * wo;
      for (int i = 0; i < ho * wo; ++i) ch[i] += bias[o];
    }
  return y;
}

inline void deconv2d_backward(const Tensor& x, const float* weight, const Tensor& dy, int k,
                              int s, int p, float* dx, float* dweight, float* dbias) {
  const int cout = dy.c;
  const Eigen::Index kk = static_cast<Eigen::Index>(cout) * k * k;
  const Eigen::Index pn = static_cast<Eigen::Index>(x.h) * x.w;
  if (dbias)
    for (int o = 0; o < cout; ++o) {
      const float* ch = dy.v.data() + static_cast<std::size_t>(o) * dy.h * dy.w;
      double s2 = 0.0;
      for (int i = 0; i < dy.h * dy.w; ++i) s2 += ch[i];
      dbias[o] += static_cast<float>(s2);
    }
  MatF a;
  im2col(dy.v.data(), cout, dy.h, dy.w, k, s, p, a);  // (cout*k*k) x (Hi*Wi)
  if (dx) {
    Eigen::Map<const MatF> wmat(weight, kk, x.c);
    Eigen::Map<MatF, Eigen::Unaligned> dxmat(dx, pn, x.c);
    dxmat.noalias() += (wmat.transpose() * a).transpose();
  }
  if (dweight) {
    Eigen::Map<const MatF> xmat(x.v.data(), pn, x.c);
    Eigen::Map<MatF> dwmat(dweight, kk, x.c);
    dwmat.noalias() += a * xmat;
  }
}

inline void leaky_relu_forward(Tensor& x, float slope) {
  for (float& v : x.v)
    if (v < 0.0f) v *= slope;
}

/// Backward off the pre-activation input.
inline void leaky_relu_backward(const Tensor& x_in, const Tensor& dy, float slope, Tensor& dx) {
  for (std::size_t i = 0; i < x_in.v.size(); ++i)
    dx.v[i] += x_in.v[i] > 0.0f ? dy.v[i] : slope * dy.v[i];
}

inline void sigmoid_forward(Tensor& x) {
  for (float& v : x.v) v = 1.0f / (1.0f + std::exp(-v));
}

/// Backward off the activation output y: dy * y * (1 - y).
inline void sigmoid_backward(const Tensor& y, const Tensor& dy, Tensor& dx) {
  for (std::size_t i = 0; i < y.v.size(); ++i) dx.v[i] += dy.v[i] * y.v[i] * (1.0f - y.v[i]);
}

/// Global average pool to a (C,1,1) tensor.
inline Tensor gap(const Tensor& x) {
  Tensor y(x.c, 1, 1);
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  for (int ci = 0; ci < x.c; ++ci) {
    double s = 0.0;
    const float* ch = x.v.data() + ci * hw;
    for (std::size_t i = 0; i < hw; ++i) s += ch[i];
    y.v[ci] = static_cast<float>(s / static_cast<double>(hw));
  }
  return y;
}

/// Global max pool to (C,1,1); argmax per channel recorded for backward.
inline Tensor gmp(const Tensor& x, std::vector<std::int64_t>& argmax) {
  Tensor y(x.c, 1, 1);
  argmax.resize(x.c);
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  for (int ci = 0; ci < x.c; ++ci) {
    const float* ch = x.v.data() + ci * hw;
    std::size_t best = 0;
    for (std::size_t i = 1; i < hw; ++i)
      if (ch[i] > ch[best]) best = i;
    y.v[ci] = ch[best];
    argmax[ci] = static_cast<std::int64_t>(ci * hw + best);
  }
  return y;
}

/// Mean over channels to a (1,H,W) map.
inline Tensor channel_mean(const Tensor& x) {
  Tensor y(1, x.h, x.w);
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  for (int ci = 0; ci < x.c; ++ci) {
    const float* ch = x.v.data() + ci * hw;
    for (std::size_t i = 0; i < hw; ++i) y.v[i] += ch[i];
  }
  const float inv = 1.0f / static_cast<float>(x.c);
  for (float& v : y.v) v *= inv;
  return y;
}

/// Max over channels to a (1,H,W) map; winning channel per pixel recorded.
inline Tensor channel_max(const Tensor& x, std::vector<int>& arg_channel) {
  Tensor y(1, x.h, x.w);
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  arg_channel.assign(hw, 0);
  for (std::size_t i = 0; i < hw; ++i) y.v[i] = x.v[i];
  for (int ci = 1; ci < x.c; ++ci) {
    const float* ch = x.v.data() + ci * hw;
    for (std::size_t i = 0; i < hw; ++i)
      if (ch[i] > y.v[i]) {
        y.v[i] = ch[i];
        arg_channel[i] = ci;
      }
  }
  return y;
}

/// Fully connected layer on (C,1,1) vectors; weights flat (Cout, Cin)
/// row-major.
inline Tensor linear_forward(const Tensor& x, const float* weight, const float* bias, int cout) {
  Tensor y(cout, 1, 1);
  Eigen::Map<const MatF> wmat(weight, x.c, cout);  // column o = row o of (Cout,Cin)
  Eigen::Map<const Eigen::VectorXf> xv(x.v.data(), x.c);
  Eigen::Map<Eigen::VectorXf> yv(y.v.data(), cout);
  yv.noalias() = wmat.transpose() * xv;
  if (bias)
    for (int o = 0; o < cout; ++o) y.v[o] += bias[o];
  return y;
}

inline void linear_backward(const Tensor& x, const float* weight, const Tensor& dy, float* dx,
                            float* dweight, float* dbias) {
  const int cout = dy.c;
  Eigen::Map<const Eigen::VectorXf> xv(x.v.data(), x.c);
  Eigen::Map<const Eigen::VectorXf> dyv(dy.v.data(), cout);
  if (dbias)
    for (int o = 0; o < cout; ++o) dbias[o] += dy.v[o];
  if (dweight) {
    Eigen::Map<MatF> dwmat(dweight, x.c, cout);
    dwmat.noalias() += xv * dyv.transpose();
  }
  if (dx) {
    Eigen::Map<const MatF> wmat(weight, x.c, cout);
    Eigen::Map<Eigen::VectorXf> dxv(dx, x.c);
    dxv.noalias() += wmat * dyv;
  }
}

/// Per-pixel normalization of a (3,H,W) map with a smooth epsilon guard:
/// u = x / sqrt(x.x + eps^2). Keeps outputs finite for any input and leaves
/// unit vectors unit to well under 1e-5.
inline constexpr float kNormEps = 1e-6f;

inline Tensor l2norm_px_forward(const Tensor& x) {
  check(x.c == 3, Err::shape_error, "per-pixel normalization expects 3 channels");
  Tensor y(3, x.h, x.w);
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  for (std::size_t i = 0; i < hw; ++i) {
    float a = x.v[i], b = x.v[hw + i], c = x.v[2 * hw + i];
    float r = std::sqrt(a * a + b * b + c * c + kNormEps * kNormEps);
    y.v[i] = a / r;
    y.v[hw + i] = b / r;
    y.v[2 * hw + i] = c / r;
  }
  return y;
}

inline void l2norm_px_backward(const Tensor& x, const Tensor& dy, Tensor& dx) {
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  for (std::size_t i = 0; i < hw; ++i) {
    float a = x.v[i], b = x.v[hw + i], c = x.v[2 * hw + i];
    float r = std::sqrt(a * a + b * b + c * c + kNormEps * kNormEps);
    float ua = a / r, ub = b / r, uc = c / r;
    float g0 = dy.v[i], g1 = dy.v[hw + i], g2 = dy.v[2 * hw + i];
    float dot = ua * g0 + ub * g1 + uc * g2;
    dx.v[i] += (g0 - ua * dot) / r;
    dx.v[hw + i] += (g1 - ub * dot) / r;
    dx.v[2 * hw + i] += (g2 - uc * dot) / r;
  }
}

}  // namespace ps::net
