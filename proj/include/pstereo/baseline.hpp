#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "pstereo/types.hpp"

namespace ps::baseline {

/// Classical least-squares photometric stereo result. Albedo is fitted per
/// channel with the recovered normal held fixed; residual is the RMS error
/// of each pixel's luminance system.
struct L2Solution {
  NormalMap normals;
  std::vector<double> albedo;    // (H, W, 3), >= 0
  std::vector<double> residual;  // (H, W), >= 0
};

/// Solves min ||L b - i||_2 per in-mask pixel on the RGB-averaged intensity,
/// with b = albedo * normal. Observations below 2% of the pixel's brightest
/// one are treated as shadowed and dropped, falling back to all observations
/// when fewer than 3 remain. Pixels with ||b|| < 1e-10 come back degenerate
/// with normal (0,0,0).
inline L2Solution solve_l2(const ImageStack& stack, const LightSet& lights, const Mask& mask) {
  validate_pair(stack, lights);
  check(stack.h == mask.h && stack.w == mask.w, Err::shape_mismatch,
        "stack and mask dimensions differ");
  check(lights.n >= 3, Err::too_few_lights,
        "least squares needs at least 3 lights, got " + std::to_string(lights.n));

  const int n = lights.n, h = stack.h, w = stack.w;

  Eigen::MatrixXd L(n, 3);
  for (int j = 0; j < n; ++j)
    for (int c = 0; c < 3; ++c) L(j, c) = lights.dir(j, c);
  {
    Eigen::Matrix3d g = L.transpose() * L;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(g);
    double lo = es.eigenvalues()(0), hi = es.eigenvalues()(2);
    check(lo > 0.0 && hi / lo < 1e8, Err::ill_conditioned,
          "light directions are too close to coplanar");
  }

  L2Solution out;
  out.normals = NormalMap::zeros(h, w);
  out.albedo.assign(static_cast<std::size_t>(h) * w * 3, 0.0);
  out.residual.assign(static_cast<std::size_t>(h) * w, 0.0);

  std::vector<double> lum(n);
  std::vector<int> kept;
  kept.reserve(n);

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      double peak = 0.0;
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int c = 0; c < 3; ++c) s += stack.at(j, y, x, c) / lights.intensity(j, c);
        lum[j] = s / 3.0;
        peak = std::max(peak, lum[j]);
      }
      kept.clear();
      double cutoff = 0.02 * peak;
      for (int j = 0; j < n; ++j)
        if (lum[j] >= cutoff) kept.push_back(j);
      if (static_cast<int>(kept.size()) < 3) {
        kept.resize(n);
        for (int j = 0; j < n; ++j) kept[j] = j;
      }

      const int m = static_cast<int>(kept.size());
      Eigen::MatrixXd Lp(m, 3);
      Eigen::VectorXd ip(m);
      for (int r = 0; r < m; ++r) {
        Lp.row(r) = L.row(kept[r]);
        ip(r) = lum[kept[r]];
      }
      Eigen::Vector3d b = Lp.colPivHouseholderQr().solve(ip);
      double rho = b.norm();

      std::size_t pix = static_cast<std::size_t>(y) * w + x;
      out.residual[pix] = std::sqrt((Lp * b - ip).squaredNorm() / m);
      if (rho < 1e-10) continue;  // degenerate: normal stays (0,0,0)

      for (int c = 0; c < 3; ++c) out.normals.at(y, x, c) = b(c) / rho;

      // Per-channel albedo with the normal held fixed, over the kept rows.
      for (int c = 0; c < 3; ++c) {
        double num = 0.0, den = 0.0;
        for (int j : kept) {
          double shade = 0.0;
          for (int k = 0; k < 3; ++k) shade += out.normals.at(y, x, k) * L(j, k);
          if (shade <= 0.0) continue;
          num += shade * stack.at(j, y, x, c) / lights.intensity(j, c);
          den += shade * shade;
        }
        out.albedo[pix * 3 + c] = den > 0.0 ? std::max(0.0, num / den) : 0.0;
      }
    }
  return out;
}

}  // namespace ps::baseline
