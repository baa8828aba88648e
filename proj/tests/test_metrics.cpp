#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "pstereo/metrics.hpp"
#include "pstereo/png_io.hpp"

using namespace ps;

namespace {

NormalMap constant_map(int h, int w, double nx, double ny, double nz) {
  NormalMap nm = NormalMap::zeros(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      nm.at(y, x, 0) = nx;
      nm.at(y, x, 1) = ny;
      nm.at(y, x, 2) = nz;
    }
  return nm;
}

void random_unit(RandomStream& rng, double out[3]) {
  double norm = 0.0;
  do {
    for (int c = 0; c < 3; ++c) out[c] = 2.0 * rng.uniform() - 1.0;
    norm = std::sqrt(out[0] * out[0] + out[1] * out[1] + out[2] * out[2]);
  } while (norm < 0.1);
  for (int c = 0; c < 3; ++c) out[c] /= norm;
}

// Angle via atan2 of the cross/dot pair, a formulation that stays
// well-conditioned where arccos is not.
double angle_deg_oracle(const double a[3], const double b[3]) {
  double cx = a[1] * b[2] - a[2] * b[1];
  double cy = a[2] * b[0] - a[0] * b[2];
  double cz = a[0] * b[1] - a[1] * b[0];
  double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
  double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  return std::atan2(cross, dot) * 180.0 / kPi;
}

}  // namespace

TEST_CASE("identical normals score zero error") {
  NormalMap nm = constant_map(4, 4, 0.0, 0.6, 0.8);
  Mask mask = Mask::full(4, 4);
  metrics::EvalReport report = metrics::evaluate_normals(nm, nm, mask);
  CHECK(report.mae_degrees == 0.0);
  CHECK(report.err15 == 1.0);
  CHECK(report.err30 == 1.0);
  CHECK(report.pixel_count == 16);
}

TEST_CASE("orthogonal and opposite normals hit 90 and 180 degrees") {
  Mask mask = Mask::full(2, 2);
  NormalMap up = constant_map(2, 2, 0.0, 0.0, 1.0);
  NormalMap side = constant_map(2, 2, 1.0, 0.0, 0.0);
  NormalMap down = constant_map(2, 2, 0.0, 0.0, -1.0);
  CHECK(metrics::evaluate_normals(up, side, mask).mae_degrees == Catch::Approx(90.0).margin(1e-12));
  CHECK(metrics::evaluate_normals(up, down, mask).mae_degrees ==
        Catch::Approx(180.0).margin(1e-12));
  CHECK(metrics::evaluate_normals(up, side, mask).err30 == 0.0);
}

TEST_CASE("angular errors match an independent formulation on random pairs") {
  RandomStream rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    double a[3], b[3];
    random_unit(rng, a);
    random_unit(rng, b);
    NormalMap pred = constant_map(1, 1, a[0], a[1], a[2]);
    NormalMap gt = constant_map(1, 1, b[0], b[1], b[2]);
    Mask mask = Mask::full(1, 1);
    AngularErrorMap em = metrics::angular_error_map(pred, gt, mask);
    REQUIRE(em.at(0, 0) == Catch::Approx(angle_deg_oracle(a, b)).margin(1e-9));
  }
}

TEST_CASE("mask selects which pixels count") {
  NormalMap pred = constant_map(2, 2, 0.0, 0.0, 1.0);
  pred.at(0, 0, 0) = 1.0;
  pred.at(0, 0, 2) = 0.0;  // 90 degrees off at one pixel
  NormalMap gt = constant_map(2, 2, 0.0, 0.0, 1.0);
  Mask mask = Mask::full(2, 2);
  CHECK(metrics::evaluate_normals(pred, gt, mask).mae_degrees ==
        Catch::Approx(22.5).margin(1e-12));
  mask.set(0, 0, false);
  metrics::EvalReport report = metrics::evaluate_normals(pred, gt, mask);
  CHECK(report.mae_degrees == 0.0);
  CHECK(report.pixel_count == 3);
}

TEST_CASE("threshold fractions use a strict less-than") {
  AngularErrorMap em;
  em.h = 1;
  em.w = 3;
  em.degrees = {14.999, 15.0, 15.001};
  Mask mask = Mask::full(1, 3);
  CHECK(metrics::err_at(em, mask, 15.0) == Catch::Approx(1.0 / 3.0).margin(1e-15));
  CHECK(metrics::err_at(em, mask, 30.0) == 1.0);
}

TEST_CASE("err15 never exceeds err30") {
  RandomStream rng(7);
  NormalMap pred = NormalMap::zeros(8, 8);
  NormalMap gt = NormalMap::zeros(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double a[3], b[3];
      random_unit(rng, a);
      random_unit(rng, b);
      for (int c = 0; c < 3; ++c) {
        pred.at(y, x, c) = a[c];
        gt.at(y, x, c) = b[c];
      }
    }
  metrics::EvalReport report = metrics::evaluate_normals(pred, gt, Mask::full(8, 8));
  CHECK(report.err15 <= report.err30);
}

TEST_CASE("scores are invariant under a common rotation") {
  // Rodrigues rotation by 40 degrees around a fixed axis.
  const double axis[3] = {1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0};
  const double theta = 40.0 * kPi / 180.0;
  auto rotate = [&](const double v[3], double out[3]) {
    double c = std::cos(theta), s = std::sin(theta);
    double dot = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
    double cx = axis[1] * v[2] - axis[2] * v[1];
    double cy = axis[2] * v[0] - axis[0] * v[2];
    double cz = axis[0] * v[1] - axis[1] * v[0];
    out[0] = v[0] * c + cx * s + axis[0] * dot * (1 - c);
    out[1] = v[1] * c + cy * s + axis[1] * dot * (1 - c);
    out[2] = v[2] * c + cz * s + axis[2] * dot * (1 - c);
  };
  RandomStream rng(11);
  NormalMap pred = NormalMap::zeros(4, 4), gt = NormalMap::zeros(4, 4);
  NormalMap pred_r = NormalMap::zeros(4, 4), gt_r = NormalMap::zeros(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      double a[3], b[3], ar[3], br[3];
      random_unit(rng, a);
      random_unit(rng, b);
      rotate(a, ar);
      rotate(b, br);
      for (int c = 0; c < 3; ++c) {
        pred.at(y, x, c) = a[c];
        gt.at(y, x, c) = b[c];
        pred_r.at(y, x, c) = ar[c];
        gt_r.at(y, x, c) = br[c];
      }
    }
  Mask mask = Mask::full(4, 4);
  double m0 = metrics::evaluate_normals(pred, gt, mask).mae_degrees;
  double m1 = metrics::evaluate_normals(pred_r, gt_r, mask).mae_degrees;
  CHECK(m1 == Catch::Approx(m0).margin(1e-6));
}

TEST_CASE("degenerate inputs are rejected") {
  NormalMap nm = constant_map(2, 2, 0.0, 0.0, 1.0);
  Mask empty;
  empty.h = 2;
  empty.w = 2;
  empty.valid.assign(4, 0);
  try {
    metrics::evaluate_normals(nm, nm, empty);
    FAIL("expected EmptyMask");
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::empty_mask);
  }
  NormalMap wide = constant_map(2, 3, 0.0, 0.0, 1.0);
  try {
    metrics::evaluate_normals(nm, wide, Mask::full(2, 2));
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::shape_mismatch);
  }
  try {
    metrics::err_at(AngularErrorMap{}, Mask{}, -1.0);
    FAIL("expected BadParams");
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::bad_params);
  }
}

TEST_CASE("report text is a fixed key-value record") {
  metrics::EvalReport report;
  report.mae_degrees = 7.125;
  report.err15 = 0.5;
  report.err30 = 1.0;
  report.pixel_count = 42;
  CHECK(metrics::to_text(report) ==
        "mae_degrees=7.125000\nerr15=0.500000\nerr30=1.000000\npixel_count=42\n");
}

TEST_CASE("error map export scales degrees into gray levels") {
  namespace fs = std::filesystem;
  AngularErrorMap em;
  em.h = 1;
  em.w = 4;
  em.degrees = {0.0, 45.0, 90.0, 135.0};
  Mask mask = Mask::full(1, 4);
  mask.set(0, 3, false);
  fs::path path = fs::temp_directory_path() / "pstereo_metrics_em.png";
  metrics::write_error_map_png(path.string(), em, mask);
  io::PngImage img = io::read_png(path.string());
  REQUIRE(img.channels == 1);
  CHECK(img.at(0, 0, 0) == 0);
  CHECK(img.at(0, 1, 0) == 128);  // 45/90 rounds half away from zero
  CHECK(img.at(0, 2, 0) == 255);
  CHECK(img.at(0, 3, 0) == 0);    // masked out stays black
  fs::remove(path);
}
