#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "pstereo/png_io.hpp"
#include "pstereo/types.hpp"

namespace ps::metrics {

/// Per-object evaluation summary. err15/err30 are the fractions of in-mask
/// pixels with angular error strictly below 15 and 30 degrees.
struct EvalReport {
  double mae_degrees = 0.0;
  double err15 = 0.0;
  double err30 = 0.0;
  AngularErrorMap error_map;
  long long pixel_count = 0;
};

/// Angle in degrees between unit normals, per in-mask pixel. The dot product
/// is clamped to [-1, 1] so norm drift around 1e-7 cannot take arccos out of
/// its domain. Out-of-mask entries stay zero.
inline AngularErrorMap angular_error_map(const NormalMap& pred, const NormalMap& gt,
                                         const Mask& mask) {
  check(pred.h == gt.h && pred.w == gt.w && pred.h == mask.h && pred.w == mask.w,
        Err::shape_mismatch, "normal maps and mask dimensions differ");
  check(mask.count() > 0, Err::empty_mask, "mask has no valid pixels");
  AngularErrorMap out;
  out.h = pred.h;
  out.w = pred.w;
  out.degrees.assign(static_cast<std::size_t>(pred.h) * pred.w, 0.0);
  for (int y = 0; y < pred.h; ++y)
    for (int x = 0; x < pred.w; ++x) {
      if (!mask.at(y, x)) continue;
      double dot = pred.at(y, x, 0) * gt.at(y, x, 0) + pred.at(y, x, 1) * gt.at(y, x, 1) +
                   pred.at(y, x, 2) * gt.at(y, x, 2);
      dot = std::clamp(dot, -1.0, 1.0);
      out.at(y, x) = std::acos(dot) * 180.0 / kPi;
    }
  return out;
}

inline double mae(const AngularErrorMap& error_map, const Mask& mask) {
  check(error_map.h == mask.h && error_map.w == mask.w, Err::shape_mismatch,
        "error map and mask dimensions differ");
  double sum = 0.0;
  long long count = 0;
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x)
      if (mask.at(y, x)) {
        sum += error_map.at(y, x);
        ++count;
      }
  check(count > 0, Err::empty_mask, "mask has no valid pixels");
  return sum / static_cast<double>(count);
}

/// Fraction of in-mask pixels with error strictly below the threshold.
inline double err_at(const AngularErrorMap& error_map, const Mask& mask,
                     double threshold_degrees) {
  check(threshold_degrees > 0.0, Err::bad_params, "threshold must be positive");
  check(error_map.h == mask.h && error_map.w == mask.w, Err::shape_mismatch,
        "error map and mask dimensions differ");
  long long below = 0, count = 0;
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x)
      if (mask.at(y, x)) {
        ++count;
        if (error_map.at(y, x) < threshold_degrees) ++below;
      }
  check(count > 0, Err::empty_mask, "mask has no valid pixels");
  return static_cast<double>(below) / static_cast<double>(count);
}

inline EvalReport evaluate_normals(const NormalMap& pred, const NormalMap& gt, const Mask& mask) {
  EvalReport report;
  report.error_map = angular_error_map(pred, gt, mask);
  report.mae_degrees = mae(report.error_map, mask);
  report.err15 = err_at(report.error_map, mask, 15.0);
  report.err30 = err_at(report.error_map, mask, 30.0);
  report.pixel_count = static_cast<long long>(mask.count());
  return report;
}

/// Flat key-value record, one field per line.
inline std::string to_text(const EvalReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "mae_degrees=%.6f\nerr15=%.6f\nerr30=%.6f\npixel_count=%lld\n",
                report.mae_degrees, report.err15, report.err30, report.pixel_count);
  return buf;
}

/// 8-bit grayscale export: 0 degrees maps to 0, 90 and above to 255;
/// out-of-mask pixels are black.
inline void write_error_map_png(const std::string& path, const AngularErrorMap& error_map,
                                const Mask& mask) {
  check(error_map.h == mask.h && error_map.w == mask.w, Err::shape_mismatch,
        "error map and mask dimensions differ");
  std::vector<std::uint8_t> px(static_cast<std::size_t>(error_map.h) * error_map.w, 0);
  for (int y = 0; y < error_map.h; ++y)
    for (int x = 0; x < error_map.w; ++x)
      if (mask.at(y, x)) {
        double s = std::clamp(error_map.at(y, x) / 90.0, 0.0, 1.0);
        px[static_cast<std::size_t>(y) * error_map.w + x] =
            static_cast<std::uint8_t>(std::lround(s * 255.0));
      }
  io::write_png8(path, error_map.h, error_map.w, 1, px);
}

}  // namespace ps::metrics
