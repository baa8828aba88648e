#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "pstereo/baseline.hpp"
#include "pstereo/metrics.hpp"
#include "pstereo/render.hpp"
#include "pstereo/surface.hpp"

using namespace ps;

namespace {

// 1x1 Lambertian observations of a single normal under the given lights.
ImageStack observe(const double n[3], const LightSet& lights, const double rho[3]) {
  ImageStack stack = ImageStack::zeros(lights.n, 1, 1);
  for (int j = 0; j < lights.n; ++j) {
    double dot = 0.0;
    for (int c = 0; c < 3; ++c) dot += n[c] * lights.dir(j, c);
    double shade = std::max(dot, 0.0);
    for (int c = 0; c < 3; ++c) stack.at(j, 0, 0, c) = rho[c] * shade;
  }
  return stack;
}

LightSet tripod_lights() {
  return LightSet::of_directions({{0.0, 0.0, 1.0}, {0.0, 0.8, 0.6}, {0.8, 0.0, 0.6}});
}

}  // namespace

TEST_CASE("a clean pixel is recovered exactly") {
  const double n[3] = {0.0, 0.6, 0.8};
  const double rho[3] = {0.5, 0.5, 0.5};
  LightSet lights = tripod_lights();
  ImageStack stack = observe(n, lights, rho);
  baseline::L2Solution sol = baseline::solve_l2(stack, lights, Mask::full(1, 1));
  for (int c = 0; c < 3; ++c) {
    CHECK(sol.normals.at(0, 0, c) == Catch::Approx(n[c]).margin(1e-12));
    CHECK(sol.albedo[c] == Catch::Approx(0.5).margin(1e-12));
  }
  CHECK(sol.residual[0] == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("per-channel albedo survives the shared normal") {
  const double n[3] = {0.28, 0.0, 0.96};
  const double rho[3] = {0.9, 0.5, 0.25};
  LightSet lights = tripod_lights();
  ImageStack stack = observe(n, lights, rho);
  baseline::L2Solution sol = baseline::solve_l2(stack, lights, Mask::full(1, 1));
  for (int c = 0; c < 3; ++c) REQUIRE(sol.albedo[c] == Catch::Approx(rho[c]).margin(1e-10));
}

TEST_CASE("a shadowed observation is trimmed rather than fitted") {
  const double n[3] = {0.8, 0.0, 0.6};
  const double rho[3] = {1.0, 1.0, 1.0};
  LightSet lights = LightSet::of_directions(
      {{0.0, 0.0, 1.0}, {0.0, 0.8, 0.6}, {0.8, 0.0, 0.6}, {-0.8, 0.0, 0.6}});
  // The last light sees this normal from behind; its observation is zero and
  // would drag a naive fit away from the truth.
  ImageStack stack = observe(n, lights, rho);
  REQUIRE(stack.at(3, 0, 0, 0) == 0.0);
  baseline::L2Solution sol = baseline::solve_l2(stack, lights, Mask::full(1, 1));
  for (int c = 0; c < 3; ++c) REQUIRE(sol.normals.at(0, 0, c) == Catch::Approx(n[c]).margin(1e-10));
}

TEST_CASE("recovered normals ignore a global exposure scale") {
  SurfaceSpec spec;
  spec.kind = SurfaceKind::sphere;
  spec.h = spec.w = 24;
  spec.radius = 9.0;
  auto [gt, mask] = synth::make_surface(spec);
  LightSet lights = synth::sample_cap_lights(12, 60.0, 3);
  BRDFSpec brdf;
  brdf.model = ReflectanceModel::lambertian;
  ImageStack stack = synth::render(gt, mask, lights, brdf, NoiseSpec{});
  ImageStack scaled = stack;
  for (double& v : scaled.data) v *= 7.25;
  baseline::L2Solution a = baseline::solve_l2(stack, lights, mask);
  baseline::L2Solution b = baseline::solve_l2(scaled, lights, mask);
  for (std::size_t i = 0; i < a.normals.data.size(); ++i)
    REQUIRE(std::abs(a.normals.data[i] - b.normals.data[i]) < 1e-10);
}

TEST_CASE("a noiseless Lambertian sphere round-trips well under half a degree") {
  SurfaceSpec spec;
  spec.kind = SurfaceKind::sphere;
  spec.h = spec.w = 32;
  spec.radius = 12.0;
  auto [gt, mask] = synth::make_surface(spec);
  LightSet lights = synth::sample_cap_lights(16, 60.0, 5);
  BRDFSpec brdf;
  brdf.model = ReflectanceModel::lambertian;
  ImageStack stack = synth::render(gt, mask, lights, brdf, NoiseSpec{});
  baseline::L2Solution sol = baseline::solve_l2(stack, lights, mask);
  metrics::EvalReport report = metrics::evaluate_normals(sol.normals, gt, mask);
  CHECK(report.mae_degrees < 0.5);
  CHECK(report.err15 == 1.0);
}

TEST_CASE("error grows with sensor noise") {
  SurfaceSpec spec;
  spec.kind = SurfaceKind::sphere;
  spec.h = spec.w = 32;
  spec.radius = 12.0;
  auto [gt, mask] = synth::make_surface(spec);
  LightSet lights = synth::sample_cap_lights(16, 60.0, 5);
  BRDFSpec brdf;
  brdf.model = ReflectanceModel::lambertian;
  auto mae_at = [&](double sigma) {
    NoiseSpec noise;
    noise.gaussian_sigma = sigma;
    noise.seed = 77;
    ImageStack stack = synth::render(gt, mask, lights, brdf, noise);
    baseline::L2Solution sol = baseline::solve_l2(stack, lights, mask);
    return metrics::evaluate_normals(sol.normals, gt, mask).mae_degrees;
  };
  double lo = mae_at(0.001), mid = mae_at(0.005), hi = mae_at(0.02);
  CHECK(lo < mid);
  CHECK(mid < hi);
}

TEST_CASE("specular highlights hurt the Lambertian model") {
  SurfaceSpec spec;
  spec.kind = SurfaceKind::sphere;
  spec.h = spec.w = 32;
  spec.radius = 12.0;
  auto [gt, mask] = synth::make_surface(spec);
  LightSet lights = synth::sample_cap_lights(16, 60.0, 5);
  BRDFSpec lambert;
  lambert.model = ReflectanceModel::lambertian;
  BRDFSpec shiny;
  shiny.model = ReflectanceModel::blinn_phong;
  shiny.k_s = 0.4;
  shiny.shininess = 16.0;
  double mae_lambert =
      metrics::evaluate_normals(
          baseline::solve_l2(synth::render(gt, mask, lights, lambert, NoiseSpec{}), lights, mask)
              .normals,
          gt, mask)
          .mae_degrees;
  double mae_shiny =
      metrics::evaluate_normals(
          baseline::solve_l2(synth::render(gt, mask, lights, shiny, NoiseSpec{}), lights, mask)
              .normals,
          gt, mask)
          .mae_degrees;
  CHECK(mae_shiny > mae_lambert);
  CHECK(mae_shiny > 0.5);
}

TEST_CASE("a dark pixel degenerates to the zero normal") {
  LightSet lights = tripod_lights();
  ImageStack stack = ImageStack::zeros(3, 1, 1);
  baseline::L2Solution sol = baseline::solve_l2(stack, lights, Mask::full(1, 1));
  for (int c = 0; c < 3; ++c) {
    CHECK(sol.normals.at(0, 0, c) == 0.0);
    CHECK(sol.albedo[c] == 0.0);
  }
}

TEST_CASE("solver input validation") {
  SECTION("two lights are not enough") {
    LightSet lights = LightSet::of_directions({{0.0, 0.0, 1.0}, {0.0, 0.8, 0.6}});
    ImageStack stack = ImageStack::zeros(2, 1, 1);
    try {
      baseline::solve_l2(stack, lights, Mask::full(1, 1));
      FAIL("expected TooFewLights");
    } catch (const Error& e) {
      REQUIRE(e.code() == Err::too_few_lights);
    }
  }
  SECTION("coplanar lights are rejected") {
    auto ray = [](double deg) {
      double t = deg * kPi / 180.0;
      return std::array<double, 3>{std::sin(t), 0.0, std::cos(t)};
    };
    LightSet lights = LightSet::of_directions({ray(-40), ray(-10), ray(20), ray(50)});
    ImageStack stack = ImageStack::zeros(4, 1, 1);
    for (double& v : stack.data) v = 0.5;
    try {
      baseline::solve_l2(stack, lights, Mask::full(1, 1));
      FAIL("expected IllConditioned");
    } catch (const Error& e) {
      REQUIRE(e.code() == Err::ill_conditioned);
    }
  }
  SECTION("stack and mask dimensions must agree") {
    LightSet lights = tripod_lights();
    ImageStack stack = ImageStack::zeros(3, 2, 2);
    try {
      baseline::solve_l2(stack, lights, Mask::full(1, 1));
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      REQUIRE(e.code() == Err::shape_mismatch);
    }
  }
}
