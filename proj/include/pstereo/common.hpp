#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ps {

inline constexpr double kPi = 3.14159265358979323846;

/// Error classes surfaced by the toolkit. The CLI maps every class to a
/// nonzero exit code with a one-line diagnostic.
enum class Err {
  count_mismatch,
  non_unit_light,
  non_finite,
  degenerate_normal,
  bad_params,
  io_failure,
  too_few_lights,
  ill_conditioned,
  shape_error,
  empty_mask,
  empty_list,
  missing_file,
  shape_mismatch,
  bad_light_file,
  no_ground_truth,
  diverged_loss,
  config_mismatch,
};

inline const char* err_name(Err e) {
  switch (e) {
    case Err::count_mismatch: return "CountMismatch";
    case Err::non_unit_light: return "NonUnitLight";
    case Err::non_finite: return "NonFinite";
    case Err::degenerate_normal: return "DegenerateNormal";
    case Err::bad_params: return "BadParams";
    case Err::io_failure: return "IoFailure";
    case Err::too_few_lights: return "TooFewLights";
    case Err::ill_conditioned: return "IllConditioned";
    case Err::shape_error: return "ShapeError";
    case Err::empty_mask: return "EmptyMask";
    case Err::empty_list: return "EmptyList";
    case Err::missing_file: return "MissingFile";
    case Err::shape_mismatch: return "ShapeMismatch";
    case Err::bad_light_file: return "BadLightFile";
    case Err::no_ground_truth: return "NoGroundTruth";
    case Err::diverged_loss: return "DivergedLoss";
    case Err::config_mismatch: return "ConfigMismatch";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& what) { throw Error(code, what); }

inline void check(bool ok, Err code, const std::string& what) {
  if (!ok) fail(code, what);
}

/// Deterministic random stream. All randomness in the toolkit goes through
/// this wrapper; mt19937_64 plus the explicit conversions below are fully
/// specified, so a seed pins every draw bit-for-bit.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  /// Uniform integer in [0, n).
  int index(int n) {
    int i = static_cast<int>(uniform() * n);
    return i >= n ? n - 1 : i;
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline int& max_threads_slot() {
  static int t = 1;
  return t;
}

/// Worker cap for the parallel helpers. 1 (the default) keeps every
/// operation on the calling thread, which is also the bitwise-reproducible
/// mode the CLI's --deterministic flag selects.
inline void set_max_threads(int t) { max_threads_slot() = t < 1 ? 1 : t; }
inline int max_threads() { return max_threads_slot(); }

/// Static-chunked parallel loop. Each index is processed exactly once and
/// writes must be disjoint across indices; with those rules the result is
/// identical for any thread count.
template <class F>
void parallel_for(std::int64_t n, F&& f) {
  int t = max_threads();
  if (t <= 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) f(i);
    return;
  }
  if (t > n) t = static_cast<int>(n);
  std::vector<std::thread> pool;
  pool.reserve(t);
  std::int64_t chunk = (n + t - 1) / t;
  for (int k = 0; k < t; ++k) {
    std::int64_t lo = k * chunk;
    std::int64_t hi = lo + chunk < n ? lo + chunk : n;
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &f] {
      for (std::int64_t i = lo; i < hi; ++i) f(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace ps
