#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "pstereo/types.hpp"

namespace ps::loss {

/// Objective settings: per-level weights for the three supervised outputs,
/// the gradient-term weight mu, and switches for the two terms.
struct LossConfig {
  double omega[3] = {0.5, 0.7, 1.0};
  double mu = 0.05;
  bool use_cosine = true;
  bool use_gradient = true;
};

/// Per-level terms and the weighted total. Invariants: loss[k] equals
/// l_a[k] + mu*l_g[k] and total equals the left-to-right sum of
/// omega[k]*loss[k], both exactly as evaluated in doubles.
struct LossBreakdown {
  double l_a[3] = {0, 0, 0};
  double l_g[3] = {0, 0, 0};
  double loss[3] = {0, 0, 0};
  double total = 0.0;
};

/// Mean over in-mask pixels of 1 - pred.gt. Expects unit-norm inputs; the
/// result lies in [0, 2].
inline double cosine_loss(const NormalMap& pred, const NormalMap& gt, const Mask& mask) {
  check(pred.h == gt.h && pred.w == gt.w && pred.h == mask.h && pred.w == mask.w,
        Err::shape_mismatch, "normal maps and mask dimensions differ");
  double sum = 0.0;
  long long count = 0;
  for (int y = 0; y < pred.h; ++y)
    for (int x = 0; x < pred.w; ++x)
      if (mask.at(y, x)) {
        double dot = pred.at(y, x, 0) * gt.at(y, x, 0) + pred.at(y, x, 1) * gt.at(y, x, 1) +
                     pred.at(y, x, 2) * gt.at(y, x, 2);
        sum += 1.0 - dot;
        ++count;
      }
  check(count > 0, Err::empty_mask, "mask has no valid pixels");
  return sum / static_cast<double>(count);
}

/// Per-component gradient magnitude of a normal map: half the absolute
/// central difference along x plus the same along y, with out-of-range
/// neighbors clamped to the edge. Returns an (H, W, 3) array.
inline std::vector<double> normal_gradient(const NormalMap& n) {
  check(n.h >= 2 && n.w >= 2, Err::bad_params, "normal map must be at least 2x2");
  std::vector<double> g(static_cast<std::size_t>(n.h) * n.w * 3);
  for (int y = 0; y < n.h; ++y) {
    int yu = y > 0 ? y - 1 : 0;
    int yd = y < n.h - 1 ? y + 1 : n.h - 1;
    for (int x = 0; x < n.w; ++x) {
      int xl = x > 0 ? x - 1 : 0;
      int xr = x < n.w - 1 ? x + 1 : n.w - 1;
      for (int c = 0; c < 3; ++c) {
        double gx = (n.at(y, xr, c) - n.at(y, xl, c)) * 0.5;
        double gy = (n.at(yd, x, c) - n.at(yu, x, c)) * 0.5;
        g[(static_cast<std::size_t>(y) * n.w + x) * 3 + c] = std::abs(gx) + std::abs(gy);
      }
    }
  }
  return g;
}

/// Mean over in-mask pixels of the euclidean norm (over the 3 components) of
/// normal_gradient(pred) - normal_gradient(gt). Blind to constant offsets:
/// two different constant maps both score 0.
inline double gradient_loss(const NormalMap& pred, const NormalMap& gt, const Mask& mask) {
  check(pred.h == gt.h && pred.w == gt.w && pred.h == mask.h && pred.w == mask.w,
        Err::shape_mismatch, "normal maps and mask dimensions differ");
  std::vector<double> gp = normal_gradient(pred);
  std::vector<double> gg = normal_gradient(gt);
  double sum = 0.0;
  long long count = 0;
  for (int y = 0; y < pred.h; ++y)
    for (int x = 0; x < pred.w; ++x)
      if (mask.at(y, x)) {
        std::size_t i = (static_cast<std::size_t>(y) * pred.w + x) * 3;
        double d0 = gp[i] - gg[i], d1 = gp[i + 1] - gg[i + 1], d2 = gp[i + 2] - gg[i + 2];
        sum += std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
        ++count;
      }
  check(count > 0, Err::empty_mask, "mask has no valid pixels");
  return sum / static_cast<double>(count);
}

/// Left-to-right weighted sum, the exact arithmetic the breakdown promises.
inline double weighted_total(const double loss_k[3], const double omega[3]) {
  return omega[0] * loss_k[0] + omega[1] * loss_k[1] + omega[2] * loss_k[2];
}

namespace detail {

/// Copies raw predictions and normalizes them in-mask, recording each
/// pixel's pre-normalization norm for the backward pass (1 out of mask).
inline NormalMap unit_from_raw(const NormalMap& raw, const Mask& mask, std::vector<double>& r) {
  NormalMap u = renormalize(raw, mask);
  r.assign(static_cast<std::size_t>(raw.h) * raw.w, 1.0);
  for (int y = 0; y < raw.h; ++y)
    for (int x = 0; x < raw.w; ++x) {
      if (!mask.at(y, x)) continue;
      double nx = raw.at(y, x, 0), ny = raw.at(y, x, 1), nz = raw.at(y, x, 2);
      r[static_cast<std::size_t>(y) * raw.w + x] = std::sqrt(nx * nx + ny * ny + nz * nz);
    }
  return u;
}

inline double sign_of(double v) { return v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0; }

/// Accumulates weight * d(gradient_loss)/d(pred) into acc, given unit pred u.
inline void add_gradient_loss_grad(const NormalMap& u, const NormalMap& gt, const Mask& mask,
                                   double weight, std::vector<double>& acc) {
  const int h = u.h, w = u.w;
  std::vector<double> gg = normal_gradient(gt);
  const double m = static_cast<double>(mask.count());
  for (int y = 0; y < h; ++y) {
    int yu = y > 0 ? y - 1 : 0;
    int yd = y < h - 1 ? y + 1 : h - 1;
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      int xl = x > 0 ? x - 1 : 0;
      int xr = x < w - 1 ? x + 1 : w - 1;
      double cx[3], cy[3], d[3];
      for (int c = 0; c < 3; ++c) {
        cx[c] = (u.at(y, xr, c) - u.at(y, xl, c)) * 0.5;
        cy[c] = (u.at(yd, x, c) - u.at(yu, x, c)) * 0.5;
        d[c] = std::abs(cx[c]) + std::abs(cy[c]) -
               gg[(static_cast<std::size_t>(y) * w + x) * 3 + c];
      }
      double nrm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
      if (nrm <= 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        double coeff = weight * d[c] / (nrm * m);
        double sx = 0.5 * coeff * sign_of(cx[c]);
        double sy = 0.5 * coeff * sign_of(cy[c]);
        acc[(static_cast<std::size_t>(y) * w + xr) * 3 + c] += sx;
        acc[(static_cast<std::size_t>(y) * w + xl) * 3 + c] -= sx;
        acc[(static_cast<std::size_t>(yd) * w + x) * 3 + c] += sy;
        acc[(static_cast<std::size_t>(yu) * w + x) * 3 + c] -= sy;
      }
    }
  }
}

}  // namespace detail

/// Breakdown plus the analytic gradient of total with respect to each raw
/// (pre-normalization) prediction level, shaped (H, W, 3) per level.
struct LossGradients {
  LossBreakdown breakdown;
  std::array<std::vector<double>, 3> d_pred;
};

/// Renormalizes each level in-mask, evaluates both terms per level, and
/// differentiates the weighted total through the normalization.
inline LossGradients total_loss_with_grad(const MultiLevelOutput& outputs, const NormalMap& gt,
                                          const Mask& mask, const LossConfig& config) {
  check(config.use_cosine || config.use_gradient, Err::bad_params,
        "at least one loss term must be enabled");
  check(gt.h == mask.h && gt.w == mask.w, Err::shape_mismatch,
        "ground truth and mask dimensions differ");
  check(mask.count() > 0, Err::empty_mask, "mask has no valid pixels");

  LossGradients out;
  const double m = static_cast<double>(mask.count());
  for (int k = 0; k < 3; ++k) {
    const NormalMap& raw = outputs.level(k);
    check(raw.h == gt.h && raw.w == gt.w, Err::shape_mismatch,
          "prediction level and ground truth dimensions differ");
    std::vector<double> r;
    NormalMap u = detail::unit_from_raw(raw, mask, r);

    double l_a = config.use_cosine ? cosine_loss(u, gt, mask) : 0.0;
    double l_g = config.use_gradient ? gradient_loss(u, gt, mask) : 0.0;
    out.breakdown.l_a[k] = l_a;
    out.breakdown.l_g[k] = l_g;
    out.breakdown.loss[k] = l_a + config.mu * l_g;

    std::vector<double>& du = out.d_pred[k];
    du.assign(static_cast<std::size_t>(raw.h) * raw.w * 3, 0.0);
    double wk = config.omega[k];
    if (config.use_cosine) {
      for (int y = 0; y < raw.h; ++y)
        for (int x = 0; x < raw.w; ++x) {
          if (!mask.at(y, x)) continue;
          std::size_t i = (static_cast<std::size_t>(y) * raw.w + x) * 3;
          for (int c = 0; c < 3; ++c) du[i + c] -= wk * gt.at(y, x, c) / m;
        }
    }
    if (config.use_gradient) detail::add_gradient_loss_grad(u, gt, mask, wk * config.mu, du);

    // Pull the gradient back through n = p / ||p||: (I - n n^T) g / r.
    for (int y = 0; y < raw.h; ++y)
      for (int x = 0; x < raw.w; ++x) {
        if (!mask.at(y, x)) continue;
        std::size_t pix = static_cast<std::size_t>(y) * raw.w + x;
        std::size_t i = pix * 3;
        double dot = u.at(y, x, 0) * du[i] + u.at(y, x, 1) * du[i + 1] + u.at(y, x, 2) * du[i + 2];
        for (int c = 0; c < 3; ++c) du[i + c] = (du[i + c] - u.at(y, x, c) * dot) / r[pix];
      }
  }
  out.breakdown.total = weighted_total(out.breakdown.loss, config.omega);
  return out;
}

inline LossBreakdown total_loss(const MultiLevelOutput& outputs, const NormalMap& gt,
                                const Mask& mask, const LossConfig& config) {
  return total_loss_with_grad(outputs, gt, mask, config).breakdown;
}

}  // namespace ps::loss
