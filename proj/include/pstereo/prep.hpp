#pragma once

#include <cmath>
#include <vector>

#include "pstereo/types.hpp"

namespace ps::prep {

/// Stack with the same (N,H,W,3) layout whose values at each pixel/channel
/// position form a unit vector across the N images (zero where the whole
/// column sat below the dark-pixel guard).
struct NormalizedStack {
  int n = 0, h = 0, w = 0;
  std::vector<double> data;

  double at(int j, int y, int x, int c) const {
    return data[((static_cast<std::size_t>(j) * h + y) * w + x) * 3 + c];
  }
};

/// Per-image light maps: image j is light direction j tiled over (H,W).
struct LightMaps {
  int n = 0, h = 0, w = 0;
  std::vector<double> data;

  double at(int j, int y, int x, int c) const {
    return data[((static_cast<std::size_t>(j) * h + y) * w + x) * 3 + c];
  }
};

/// Nonnegative per-channel gradient magnitude map of one image.
struct GradientMap {
  int h = 0, w = 0;
  std::vector<double> data;  // h*w*3

  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  }
};

/// Divides each pixel/channel observation by the L2 norm of its values
/// across all N images. Columns whose norm falls below 1e-12 come back as
/// all zeros; everything else is scale-free (spatially varying albedo and
/// exposure cancel).
inline NormalizedStack normalize_stack(const ImageStack& stack) {
  NormalizedStack out;
  out.n = stack.n;
  out.h = stack.h;
  out.w = stack.w;
  out.data.assign(stack.data.size(), 0.0);
  const std::size_t plane = static_cast<std::size_t>(stack.h) * stack.w * 3;
  for (std::size_t p = 0; p < plane; ++p) {
    double sum = 0.0;
    for (int j = 0; j < stack.n; ++j) {
      double v = stack.data[static_cast<std::size_t>(j) * plane + p];
      sum += v * v;
    }
    double denom = std::sqrt(sum);
    if (denom < 1e-12) continue;
    for (int j = 0; j < stack.n; ++j)
      out.data[static_cast<std::size_t>(j) * plane + p] =
          stack.data[static_cast<std::size_t>(j) * plane + p] / denom;
  }
  return out;
}

/// Tiles each light direction into an (H,W,3) map so it can be concatenated
/// with the normalized image into the (H,W,6) per-image network input.
inline LightMaps embed_lights(const LightSet& lights, int h, int w) {
  LightMaps out;
  out.n = lights.n;
  out.h = h;
  out.w = w;
  out.data.resize(static_cast<std::size_t>(lights.n) * h * w * 3);
  for (int j = 0; j < lights.n; ++j) {
    double lx = lights.dir(j, 0), ly = lights.dir(j, 1), lz = lights.dir(j, 2);
    std::size_t base = static_cast<std::size_t>(j) * h * w * 3;
    for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) {
      out.data[base + p * 3 + 0] = lx;
      out.data[base + p * 3 + 1] = ly;
      out.data[base + p * 3 + 2] = lz;
    }
  }
  return out;
}

namespace detail {
inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }
}  // namespace detail

/// Simplified gradient magnitude: per channel, |central difference in x| +
/// |central difference in y|, with replicate padding at the borders. The
/// orientation is discarded on purpose; only the magnitude matters.
/// `image` is an (H,W,3) row-major buffer.
inline GradientMap gradient_map(const std::vector<double>& image, int h, int w) {
  check(h >= 2 && w >= 2, Err::bad_params, "gradient map needs at least 2x2 input");
  check(image.size() == static_cast<std::size_t>(h) * w * 3, Err::shape_error,
        "gradient map input does not match (h,w,3)");
  GradientMap out;
  out.h = h;
  out.w = w;
  out.data.resize(image.size());
  auto v = [&](int y, int x, int c) {
    return image[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  };
  for (int y = 0; y < h; ++y) {
    int yu = detail::clamp_index(y - 1, h);
    int yd = detail::clamp_index(y + 1, h);
    for (int x = 0; x < w; ++x) {
      int xl = detail::clamp_index(x - 1, w);
      int xr = detail::clamp_index(x + 1, w);
      for (int c = 0; c < 3; ++c) {
        double gx = (v(y, xr, c) - v(y, xl, c)) * 0.5;
        double gy = (v(yd, x, c) - v(yu, x, c)) * 0.5;
        out.data[(static_cast<std::size_t>(y) * w + x) * 3 + c] = std::abs(gx) + std::abs(gy);
      }
    }
  }
  return out;
}

/// Convenience overload: gradient map of image j of a normalized stack.
inline GradientMap gradient_map(const NormalizedStack& stack, int j) {
  const std::size_t plane = static_cast<std::size_t>(stack.h) * stack.w * 3;
  std::vector<double> img(stack.data.begin() + static_cast<std::size_t>(j) * plane,
                          stack.data.begin() + static_cast<std::size_t>(j + 1) * plane);
  return gradient_map(img, stack.h, stack.w);
}

}  // namespace ps::prep
