#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "pstereo/types.hpp"

namespace ps::synth {

enum class SurfaceKind { sphere, sinusoidal_bumps, wrinkle_field, plane };

/// Analytic test surface. Every in-mask pixel has a closed-form normal, so
/// rendered datasets come with exact ground truth.
///
/// Pixel (y,x) maps to surface coordinates u = x - floor(W/2) (right) and
/// v = floor(H/2) - y (up); heights are in pixel units.
struct SurfaceSpec {
  SurfaceKind kind = SurfaceKind::sphere;
  int h = 64, w = 64;

  double radius = 24.0;  // sphere

  double amplitude = 2.0;   // bumps and wrinkles
  double frequency = 3.0;   // bumps: cycles across the width
  int wave_count = 6;       // wrinkles
  double freq_lo = 2.0;     // wrinkles: cycles across the width
  double freq_hi = 8.0;
  std::uint64_t seed = 0;   // wrinkles
};

namespace detail {

struct Wave {
  double amp, kx, ky, phase;
};

inline std::vector<Wave> wrinkle_waves(const SurfaceSpec& spec) {
  RandomStream rng(spec.seed);
  std::vector<Wave> waves(spec.wave_count);
  for (auto& wv : waves) {
    double theta = rng.uniform(0.0, kPi);
    double f = rng.uniform(spec.freq_lo, spec.freq_hi);
    double k = 2.0 * kPi * f / spec.w;
    wv = {spec.amplitude / spec.wave_count, k * std::cos(theta), k * std::sin(theta),
          rng.uniform(0.0, 2.0 * kPi)};
  }
  return waves;
}

inline void validate_surface(const SurfaceSpec& spec) {
  check(spec.h >= 8 && spec.w >= 8, Err::bad_params, "surface dims must be at least 8x8");
  switch (spec.kind) {
    case SurfaceKind::sphere:
      check(spec.radius > 0.0, Err::bad_params, "sphere radius must be positive");
      break;
    case SurfaceKind::sinusoidal_bumps:
      check(spec.frequency > 0.0, Err::bad_params, "bump frequency must be positive");
      check(std::isfinite(spec.amplitude), Err::bad_params, "bump amplitude must be finite");
      break;
    case SurfaceKind::wrinkle_field:
      check(spec.wave_count >= 1, Err::bad_params, "wrinkle field needs at least one wave");
      check(spec.freq_lo > 0.0 && spec.freq_hi >= spec.freq_lo, Err::bad_params,
            "wrinkle frequency range is invalid");
      break;
    case SurfaceKind::plane:
      break;
  }
}

}  // namespace detail

/// Height of the surface at (u,v) in pixel units. Defined everywhere for
/// the height-field kinds and inside the disk for the sphere.
inline double surface_height(const SurfaceSpec& spec, double u, double v) {
  switch (spec.kind) {
    case SurfaceKind::plane:
      return 0.0;
    case SurfaceKind::sphere: {
      double d2 = spec.radius * spec.radius - u * u - v * v;
      return d2 > 0.0 ? std::sqrt(d2) : 0.0;
    }
    case SurfaceKind::sinusoidal_bumps:
      return spec.amplitude * std::sin(2.0 * kPi * spec.frequency * u / spec.w) *
             std::sin(2.0 * kPi * spec.frequency * v / spec.h);
    case SurfaceKind::wrinkle_field: {
      double h = 0.0;
      for (const auto& wv : detail::wrinkle_waves(spec))
        h += wv.amp * std::cos(wv.kx * u + wv.ky * v + wv.phase);
      return h;
    }
  }
  return 0.0;
}

/// Builds the ground-truth normal map and the object mask for a surface.
/// Height-field kinds cover the full frame; the sphere mask is the disk of
/// the given radius.
inline std::pair<NormalMap, Mask> make_surface(const SurfaceSpec& spec) {
  detail::validate_surface(spec);
  const int h = spec.h, w = spec.w;
  const int cx = w / 2, cy = h / 2;
  NormalMap normals = NormalMap::zeros(h, w);
  Mask mask;
  mask.h = h;
  mask.w = w;
  mask.valid.assign(static_cast<std::size_t>(h) * w, 0);

  auto store = [&](int y, int x, double nx, double ny, double nz) {
    double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
    normals.at(y, x, 0) = nx / norm;
    normals.at(y, x, 1) = ny / norm;
    normals.at(y, x, 2) = nz / norm;
    mask.set(y, x, true);
  };

  std::vector<detail::Wave> waves;
  if (spec.kind == SurfaceKind::wrinkle_field) waves = detail::wrinkle_waves(spec);

  for (int y = 0; y < h; ++y) {
    double v = static_cast<double>(cy - y);
    for (int x = 0; x < w; ++x) {
      double u = static_cast<double>(x - cx);
      switch (spec.kind) {
        case SurfaceKind::plane:
          store(y, x, 0.0, 0.0, 1.0);
          break;
        case SurfaceKind::sphere: {
          double d2 = spec.radius * spec.radius - u * u - v * v;
          if (d2 < 0.0) break;  // outside the disk
          store(y, x, u / spec.radius, v / spec.radius, std::sqrt(d2) / spec.radius);
          break;
        }
        case SurfaceKind::sinusoidal_bumps: {
          double au = 2.0 * kPi * spec.frequency / spec.w;
          double av = 2.0 * kPi * spec.frequency / spec.h;
          double hu = spec.amplitude * au * std::cos(au * u) * std::sin(av * v);
          double hv = spec.amplitude * av * std::sin(au * u) * std::cos(av * v);
          store(y, x, -hu, -hv, 1.0);
          break;
        }
        case SurfaceKind::wrinkle_field: {
          double hu = 0.0, hv = 0.0;
          for (const auto& wv : waves) {
            double s = std::sin(wv.kx * u + wv.ky * v + wv.phase);
            hu -= wv.amp * wv.kx * s;
            hv -= wv.amp * wv.ky * s;
          }
          store(y, x, -hu, -hv, 1.0);
          break;
        }
      }
    }
  }
  check(mask.count() > 0, Err::bad_params, "surface produced an empty mask");
  return {std::move(normals), std::move(mask)};
}

}  // namespace ps::synth
