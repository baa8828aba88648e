#pragma once

#include <cmath>
#include <vector>

#include "pstereo/types.hpp"

namespace ps::synth {

enum class ReflectanceModel { lambertian, blinn_phong };

/// Shading parameters. Albedo is either the uniform `albedo_rgb` or, when
/// `albedo_map` is non-empty, a per-pixel (H,W,3) map in (0,1]. The specular
/// lobe only applies to the Blinn-Phong model and is white.
struct BRDFSpec {
  ReflectanceModel model = ReflectanceModel::lambertian;
  double albedo_rgb[3] = {0.75, 0.75, 0.75};
  std::vector<double> albedo_map;  // empty = uniform
  double k_s = 0.2;
  double shininess = 32.0;
};

/// Optional measurement corruption, applied in this order: additive Gaussian
/// noise per pixel and channel, then saturated/dead outlier pixels, then a
/// clamp to non-negative values. The seed fully determines the realization.
struct NoiseSpec {
  double gaussian_sigma = 0.0;
  double outlier_fraction = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline void validate_brdf(const BRDFSpec& brdf, int h, int w) {
  auto check_albedo = [](double a) {
    check(std::isfinite(a) && a > 0.0 && a <= 1.0, Err::bad_params,
          "albedo values must lie in (0, 1]");
  };
  if (brdf.albedo_map.empty()) {
    for (double a : brdf.albedo_rgb) check_albedo(a);
  } else {
    check(brdf.albedo_map.size() == static_cast<std::size_t>(h) * w * 3, Err::shape_mismatch,
          "albedo map does not match the surface dimensions");
    for (double a : brdf.albedo_map) check_albedo(a);
  }
  check(std::isfinite(brdf.k_s) && brdf.k_s >= 0.0, Err::bad_params,
        "specular weight must be non-negative");
  check(std::isfinite(brdf.shininess) && brdf.shininess >= 1.0, Err::bad_params,
        "shininess must be at least 1");
}

inline void validate_noise(const NoiseSpec& noise) {
  check(std::isfinite(noise.gaussian_sigma) && noise.gaussian_sigma >= 0.0, Err::bad_params,
        "noise sigma must be non-negative");
  check(noise.outlier_fraction >= 0.0 && noise.outlier_fraction < 1.0, Err::bad_params,
        "outlier fraction must lie in [0, 1)");
}

}  // namespace detail

/// Renders one image per light with the camera at +z. Diffuse shading is
/// albedo * max(n.l, 0); the Blinn-Phong lobe adds
/// k_s * max(n.h, 0)^shininess gated to lit pixels, with h the half vector
/// between the light and the view direction. Channel intensities scale the
/// result; out-of-mask pixels stay zero.
inline ImageStack render(const NormalMap& normals, const Mask& mask, const LightSet& lights,
                         const BRDFSpec& brdf, const NoiseSpec& noise = {}) {
  check(normals.h == mask.h && normals.w == mask.w, Err::shape_mismatch,
        "normal map and mask dimensions differ");
  validate_lights(lights);
  detail::validate_brdf(brdf, normals.h, normals.w);
  detail::validate_noise(noise);

  const int n = lights.n, h = normals.h, w = normals.w;
  ImageStack stack = ImageStack::zeros(n, h, w);

  for (int j = 0; j < n; ++j) {
    const double lx = lights.dir(j, 0), ly = lights.dir(j, 1), lz = lights.dir(j, 2);
    // Half vector between the light and the +z view direction.
    double hx = lx, hy = ly, hz = lz + 1.0;
    double hn = std::sqrt(hx * hx + hy * hy + hz * hz);
    bool has_half = hn > 1e-12;
    if (has_half) {
      hx /= hn;
      hy /= hn;
      hz /= hn;
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!mask.at(y, x)) continue;
        double nx = normals.at(y, x, 0), ny = normals.at(y, x, 1), nz = normals.at(y, x, 2);
        double ndl = nx * lx + ny * ly + nz * lz;
        double diffuse = ndl > 0.0 ? ndl : 0.0;
        double specular = 0.0;
        if (brdf.model == ReflectanceModel::blinn_phong && brdf.k_s > 0.0 && ndl > 0.0 &&
            has_half) {
          double ndh = nx * hx + ny * hy + nz * hz;
          if (ndh > 0.0) specular = brdf.k_s * std::pow(ndh, brdf.shininess);
        }
        for (int c = 0; c < 3; ++c) {
          double rho = brdf.albedo_map.empty()
                           ? brdf.albedo_rgb[c]
                           : brdf.albedo_map[(static_cast<std::size_t>(y) * w + x) * 3 + c];
          stack.at(j, y, x, c) = (rho * diffuse + specular) * lights.intensity(j, c);
        }
      }
    }
  }

  if (noise.gaussian_sigma > 0.0 || noise.outlier_fraction > 0.0) {
    RandomStream rng(noise.seed);
    if (noise.gaussian_sigma > 0.0) {
      for (int j = 0; j < n; ++j)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            if (!mask.at(y, x)) continue;
            for (int c = 0; c < 3; ++c)
              stack.at(j, y, x, c) += noise.gaussian_sigma * rng.normal();
          }
    }
    if (noise.outlier_fraction > 0.0) {
      for (int j = 0; j < n; ++j)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            if (!mask.at(y, x)) continue;
            if (rng.uniform() < noise.outlier_fraction) {
              double v = rng.uniform() < 0.5 ? 0.0 : 1.0;
              for (int c = 0; c < 3; ++c) stack.at(j, y, x, c) = v;
            }
          }
    }
    for (double& v : stack.data)
      if (v < 0.0) v = 0.0;
  }
  return stack;
}

/// Draws unit light directions uniformly over the spherical cap of the given
/// half angle around +z: z ~ U[cos(cap), 1], azimuth ~ U[0, 2*pi).
inline LightSet sample_cap_lights(int count, double cap_degrees, std::uint64_t seed) {
  check(count >= 1, Err::bad_params, "light count must be positive");
  check(cap_degrees > 0.0 && cap_degrees <= 90.0, Err::bad_params,
        "cap angle must lie in (0, 90] degrees");
  RandomStream rng(seed);
  double zmin = std::cos(cap_degrees * kPi / 180.0);
  std::vector<double> dirs(static_cast<std::size_t>(count) * 3);
  for (int j = 0; j < count; ++j) {
    double z = rng.uniform(zmin, 1.0);
    double phi = rng.uniform(0.0, 2.0 * kPi);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    dirs[j * 3 + 0] = r * std::cos(phi);
    dirs[j * 3 + 1] = r * std::sin(phi);
    dirs[j * 3 + 2] = z;
  }
  return LightSet::of_directions(std::move(dirs));
}

}  // namespace ps::synth
