#pragma once

#include <cfloat>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pstereo/common.hpp"

namespace ps {

// Shared layout convention: image-like arrays are (N, H, W, 3) / (H, W, 3),
// row-major from the top-left pixel. Normals live in camera space with +z
// toward the viewer and +y up.

/// N photometric observations of one object under N known lights.
/// Linear intensities, finite and >= 0.
struct ImageStack {
  int n = 0, h = 0, w = 0;
  std::vector<double> data;  // n*h*w*3

  static ImageStack zeros(int n, int h, int w) {
    ImageStack s;
    s.n = n;
    s.h = h;
    s.w = w;
    s.data.assign(static_cast<std::size_t>(n) * h * w * 3, 0.0);
    return s;
  }
  double& at(int j, int y, int x, int c) {
    return data[((static_cast<std::size_t>(j) * h + y) * w + x) * 3 + c];
  }
  double at(int j, int y, int x, int c) const {
    return data[((static_cast<std::size_t>(j) * h + y) * w + x) * 3 + c];
  }
};

/// N unit light directions plus per-light RGB intensities (all-ones unless
/// a rig measured otherwise). Directions point from the surface toward the
/// light.
struct LightSet {
  int n = 0;
  std::vector<double> directions;   // n*3
  std::vector<double> intensities;  // n*3

  static LightSet of_directions(const std::vector<double>& dirs) {
    LightSet l;
    l.n = static_cast<int>(dirs.size() / 3);
    l.directions = dirs;
    l.intensities.assign(static_cast<std::size_t>(l.n) * 3, 1.0);
    return l;
  }
  double dir(int j, int c) const { return directions[static_cast<std::size_t>(j) * 3 + c]; }
  double intensity(int j, int c) const { return intensities[static_cast<std::size_t>(j) * 3 + c]; }
};

/// Per-pixel unit surface normals; out-of-mask pixels hold the (0,0,0)
/// sentinel and are excluded from every loss and metric.
struct NormalMap {
  int h = 0, w = 0;
  std::vector<double> data;  // h*w*3

  static NormalMap zeros(int h, int w) {
    NormalMap m;
    m.h = h;
    m.w = w;
    m.data.assign(static_cast<std::size_t>(h) * w * 3, 0.0);
    return m;
  }
  double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  }
};

struct Mask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> valid;  // h*w, nonzero = valid

  static Mask full(int h, int w) {
    Mask m;
    m.h = h;
    m.w = w;
    m.valid.assign(static_cast<std::size_t>(h) * w, 1);
    return m;
  }
  bool at(int y, int x) const { return valid[static_cast<std::size_t>(y) * w + x] != 0; }
  void set(int y, int x, bool v) { valid[static_cast<std::size_t>(y) * w + x] = v ? 1 : 0; }
  int count() const {
    int c = 0;
    for (auto v : valid) c += v ? 1 : 0;
    return c;
  }
};

/// Angular deviation per pixel, degrees in [0, 180]; undefined outside the mask.
struct AngularErrorMap {
  int h = 0, w = 0;
  std::vector<double> degrees;  // h*w

  double at(int y, int x) const { return degrees[static_cast<std::size_t>(y) * w + x]; }
  double& at(int y, int x) { return degrees[static_cast<std::size_t>(y) * w + x]; }
};

/// The three supervised outputs of the regressor, full resolution, each
/// L2-normalized in-mask.
struct MultiLevelOutput {
  NormalMap n1, n2, n3;

  const NormalMap& level(int k) const { return k == 0 ? n1 : k == 1 ? n2 : n3; }
  NormalMap& level(int k) { return k == 0 ? n1 : k == 1 ? n2 : n3; }
};

inline void validate_stack(const ImageStack& stack) {
  check(stack.n >= 1, Err::bad_params, "image stack needs at least one image");
  check(stack.h > 0 && stack.w > 0, Err::bad_params, "image stack has empty spatial dims");
  check(stack.data.size() == static_cast<std::size_t>(stack.n) * stack.h * stack.w * 3,
        Err::shape_error, "image stack buffer does not match (n,h,w,3)");
  for (double v : stack.data) {
    if (!std::isfinite(v)) fail(Err::non_finite, "image stack contains a non-finite value");
    if (v < 0.0) fail(Err::non_finite, "image stack contains a negative intensity");
  }
}

inline void validate_lights(const LightSet& lights) {
  check(lights.n >= 1, Err::bad_params, "light set is empty");
  check(lights.directions.size() == static_cast<std::size_t>(lights.n) * 3, Err::shape_error,
        "light directions buffer does not match (n,3)");
  check(lights.intensities.size() == static_cast<std::size_t>(lights.n) * 3, Err::shape_error,
        "light intensities buffer does not match (n,3)");
  for (int j = 0; j < lights.n; ++j) {
    double x = lights.dir(j, 0), y = lights.dir(j, 1), z = lights.dir(j, 2);
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
      fail(Err::non_finite, "light direction " + std::to_string(j) + " is non-finite");
    double norm = std::sqrt(x * x + y * y + z * z);
    if (std::abs(norm - 1.0) > 1e-6)
      fail(Err::non_unit_light, "light direction " + std::to_string(j) + " has norm " +
                                    std::to_string(norm));
    for (int c = 0; c < 3; ++c) {
      double v = lights.intensity(j, c);
      if (!std::isfinite(v)) fail(Err::non_finite, "light intensity is non-finite");
      if (v <= 0.0) fail(Err::bad_params, "light intensity must be positive");
    }
  }
}

/// Checks that a stack and a light set form a usable pair: matching counts,
/// unit directions, positive intensities, finite data.
inline void validate_pair(const ImageStack& stack, const LightSet& lights) {
  validate_stack(stack);
  validate_lights(lights);
  check(stack.n == lights.n, Err::count_mismatch,
        std::to_string(stack.n) + " images vs " + std::to_string(lights.n) + " lights");
}

/// Rescales every in-mask normal to unit length, preserving direction.
/// Pixels already unit to within a few ulps pass through untouched, which
/// makes the operation exactly idempotent. In-mask zero vectors are refused.
[[nodiscard]] inline NormalMap renormalize(const NormalMap& normals, const Mask& mask) {
  check(normals.h == mask.h && normals.w == mask.w, Err::shape_mismatch,
        "normal map and mask dims differ");
  NormalMap out = normals;
  for (int y = 0; y < normals.h; ++y) {
    for (int x = 0; x < normals.w; ++x) {
      if (!mask.at(y, x)) continue;
      double nx = normals.at(y, x, 0), ny = normals.at(y, x, 1), nz = normals.at(y, x, 2);
      double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
      if (norm < 1e-12)
        fail(Err::degenerate_normal, "in-mask zero normal at (" + std::to_string(y) + "," +
                                         std::to_string(x) + ")");
      if (std::abs(norm - 1.0) <= 4.0 * DBL_EPSILON) continue;
      out.at(y, x, 0) = nx / norm;
      out.at(y, x, 1) = ny / norm;
      out.at(y, x, 2) = nz / norm;
    }
  }
  return out;
}

}  // namespace ps
