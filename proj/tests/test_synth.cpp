#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "pstereo/dataset.hpp"
#include "pstereo/render.hpp"
#include "pstereo/surface.hpp"

using namespace ps;
namespace fs = std::filesystem;

namespace {

Mask full_mask(int h, int w) { return Mask::full(h, w); }

NormalMap flat_up(int h, int w) {
  NormalMap nm = NormalMap::zeros(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) nm.at(y, x, 2) = 1.0;
  return nm;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const char* tag) {
  fs::path dir = fs::temp_directory_path() / (std::string("pstereo_synth_") + tag);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("sphere surface faces the viewer at its apex") {
  SurfaceSpec spec;
  spec.kind = SurfaceKind::sphere;
  spec.h = spec.w = 64;
  spec.radius = 30.0;
  auto [normals, mask] = synth::make_surface(spec);
  CHECK(normals.at(32, 32, 0) == 0.0);
  CHECK(normals.at(32, 32, 1) == 0.0);
  CHECK(normals.at(32, 32, 2) == 1.0);
  // Mask is the disk of the given radius.
  CHECK(mask.at(32, 32));
  CHECK(mask.at(32, 32 + 29));
  CHECK_FALSE(mask.at(32, 32 + 31));
  CHECK_FALSE(mask.at(0, 0));
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (mask.at(y, x)) {
        double nx = normals.at(y, x, 0), ny = normals.at(y, x, 1), nz = normals.at(y, x, 2);
        REQUIRE(std::sqrt(nx * nx + ny * ny + nz * nz) == Catch::Approx(1.0).margin(1e-12));
      }
}

TEST_CASE("plane surface is flat with a full mask") {
  SurfaceSpec spec;
  spec.kind = SurfaceKind::plane;
  spec.h = 8;
  spec.w = 10;
  auto [normals, mask] = synth::make_surface(spec);
  CHECK(mask.count() == 80);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 10; ++x) {
      REQUIRE(normals.at(y, x, 0) == 0.0);
      REQUIRE(normals.at(y, x, 1) == 0.0);
      REQUIRE(normals.at(y, x, 2) == 1.0);
    }
}

// Height-field oracle: the normal must agree with central finite differences
// of the height function itself, n ~ (-dh/du, -dh/dv, 1) normalized.
static void check_against_height_fd(const SurfaceSpec& spec, double tol) {
  auto [normals, mask] = synth::make_surface(spec);
  const double step = 1e-5;
  const int cx = spec.w / 2, cy = spec.h / 2;
  for (int y = 1; y < spec.h - 1; y += 3)
    for (int x = 1; x < spec.w - 1; x += 3) {
      if (!mask.at(y, x)) continue;
      double u = x - cx, v = cy - y;
      double hu = (synth::surface_height(spec, u + step, v) -
                   synth::surface_height(spec, u - step, v)) /
                  (2 * step);
      double hv = (synth::surface_height(spec, u, v + step) -
                   synth::surface_height(spec, u, v - step)) /
                  (2 * step);
      double norm = std::sqrt(hu * hu + hv * hv + 1.0);
      REQUIRE(normals.at(y, x, 0) == Catch::Approx(-hu / norm).margin(tol));
      REQUIRE(normals.at(y, x, 1) == Catch::Approx(-hv / norm).margin(tol));
      REQUIRE(normals.at(y, x, 2) == Catch::Approx(1.0 / norm).margin(tol));
    }
}

TEST_CASE("sinusoidal bump normals match finite differences of the height field") {
  SurfaceSpec spec;
  spec.kind = SurfaceKind::sinusoidal_bumps;
  spec.h = spec.w = 32;
  spec.amplitude = 2.5;
  spec.frequency = 3.0;
  check_against_height_fd(spec, 1e-6);
}

TEST_CASE("wrinkle-field normals match finite differences of the height field") {
  SurfaceSpec spec;
  spec.kind = SurfaceKind::wrinkle_field;
  spec.h = spec.w = 32;
  spec.amplitude = 2.0;
  spec.wave_count = 6;
  spec.seed = 17;
  check_against_height_fd(spec, 1e-6);
}

TEST_CASE("make_surface rejects bad parameters") {
  SurfaceSpec spec;
  spec.kind = SurfaceKind::sphere;
  SECTION("tiny dims") {
    spec.h = 4;
    REQUIRE_THROWS_AS(synth::make_surface(spec), Error);
  }
  SECTION("non-positive radius") {
    spec.radius = 0.0;
    try {
      (void)synth::make_surface(spec);
      FAIL("expected BadParams");
    } catch (const Error& e) {
      REQUIRE(e.code() == Err::bad_params);
    }
  }
  SECTION("zero frequency") {
    spec.kind = SurfaceKind::sinusoidal_bumps;
    spec.frequency = 0.0;
    REQUIRE_THROWS_AS(synth::make_surface(spec), Error);
  }
  SECTION("zero wave count") {
    spec.kind = SurfaceKind::wrinkle_field;
    spec.wave_count = 0;
    REQUIRE_THROWS_AS(synth::make_surface(spec), Error);
  }
}

TEST_CASE("render evaluates the shading model exactly on a frontal pixel") {
  NormalMap nm = flat_up(1, 1);
  Mask mask = full_mask(1, 1);
  NoiseSpec off;

  SECTION("head-on light, unit albedo") {
    BRDFSpec brdf;
    brdf.model = ReflectanceModel::lambertian;
    brdf.albedo_rgb[0] = brdf.albedo_rgb[1] = brdf.albedo_rgb[2] = 1.0;
    ImageStack img = synth::render(nm, mask, LightSet::of_directions({0, 0, 1}), brdf, off);
    for (int c = 0; c < 3; ++c) REQUIRE(img.at(0, 0, 0, c) == 1.0);
  }
  SECTION("light from behind is an attached shadow") {
    BRDFSpec brdf;
    ImageStack img = synth::render(nm, mask, LightSet::of_directions({0, 0, -1}), brdf, off);
    for (int c = 0; c < 3; ++c) REQUIRE(img.at(0, 0, 0, c) == 0.0);
  }
  SECTION("specular highlight adds k_s at the mirror configuration") {
    BRDFSpec brdf;
    brdf.model = ReflectanceModel::blinn_phong;
    brdf.albedo_rgb[0] = brdf.albedo_rgb[1] = brdf.albedo_rgb[2] = 0.5;
    brdf.k_s = 0.2;
    brdf.shininess = 10.0;
    ImageStack img = synth::render(nm, mask, LightSet::of_directions({0, 0, 1}), brdf, off);
    for (int c = 0; c < 3; ++c) REQUIRE(img.at(0, 0, 0, c) == Catch::Approx(0.7).margin(1e-12));
  }
}

TEST_CASE("lambertian render is linear in albedo") {
  SurfaceSpec spec;
  spec.kind = SurfaceKind::sphere;
  spec.h = spec.w = 16;
  spec.radius = 6.0;
  auto [normals, mask] = synth::make_surface(spec);
  LightSet lights = synth::sample_cap_lights(5, 60.0, 2);
  NoiseSpec off;
  BRDFSpec a, b;
  a.albedo_rgb[0] = a.albedo_rgb[1] = a.albedo_rgb[2] = 0.3;
  b.albedo_rgb[0] = b.albedo_rgb[1] = b.albedo_rgb[2] = 0.9;
  ImageStack ia = synth::render(normals, mask, lights, a, off);
  ImageStack ib = synth::render(normals, mask, lights, b, off);
  for (std::size_t i = 0; i < ia.data.size(); ++i)
    REQUIRE(ib.data[i] == Catch::Approx(3.0 * ia.data[i]).margin(1e-12));
}

TEST_CASE("render is dark wherever the surface faces away from the light") {
  SurfaceSpec spec;
  spec.kind = SurfaceKind::sphere;
  spec.h = spec.w = 24;
  spec.radius = 10.0;
  auto [normals, mask] = synth::make_surface(spec);
  LightSet lights = LightSet::of_directions({0.6, 0.0, 0.8});
  BRDFSpec brdf;
  NoiseSpec off;
  ImageStack img = synth::render(normals, mask, lights, brdf, off);
  int shadowed = 0;
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      if (!mask.at(y, x)) continue;
      double ndl = normals.at(y, x, 0) * 0.6 + normals.at(y, x, 2) * 0.8;
      if (ndl <= 0.0) {
        ++shadowed;
        for (int c = 0; c < 3; ++c) REQUIRE(img.at(0, y, x, c) == 0.0);
      }
    }
  CHECK(shadowed > 0);
}

TEST_CASE("render without noise ignores the seed") {
  NormalMap nm = flat_up(4, 4);
  Mask mask = full_mask(4, 4);
  LightSet lights = synth::sample_cap_lights(3, 60.0, 9);
  BRDFSpec brdf;
  NoiseSpec n1, n2;
  n1.seed = 1;
  n2.seed = 999;
  ImageStack a = synth::render(nm, mask, lights, brdf, n1);
  ImageStack b = synth::render(nm, mask, lights, brdf, n2);
  REQUIRE(a.data == b.data);
}

TEST_CASE("noisy render stays nonnegative and differs from the clean one") {
  NormalMap nm = flat_up(8, 8);
  Mask mask = full_mask(8, 8);
  LightSet lights = synth::sample_cap_lights(4, 60.0, 3);
  BRDFSpec brdf;
  NoiseSpec off, on;
  on.gaussian_sigma = 0.05;
  on.outlier_fraction = 0.05;
  on.seed = 4;
  ImageStack clean = synth::render(nm, mask, lights, brdf, off);
  ImageStack noisy = synth::render(nm, mask, lights, brdf, on);
  bool differs = false;
  for (std::size_t i = 0; i < noisy.data.size(); ++i) {
    REQUIRE(noisy.data[i] >= 0.0);
    differs = differs || noisy.data[i] != clean.data[i];
  }
  CHECK(differs);
  // Same noise seed reproduces the same realization.
  ImageStack again = synth::render(nm, mask, lights, brdf, on);
  REQUIRE(again.data == noisy.data);
}

TEST_CASE("cap light sampling stays within the cone") {
  LightSet lights = synth::sample_cap_lights(64, 60.0, 5);
  REQUIRE(lights.n == 64);
  const double min_z = std::cos(60.0 * kPi / 180.0);
  for (int j = 0; j < 64; ++j) {
    double x = lights.dir(j, 0), y = lights.dir(j, 1), z = lights.dir(j, 2);
    REQUIRE(std::sqrt(x * x + y * y + z * z) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(z >= min_z - 1e-12);
  }
  LightSet again = synth::sample_cap_lights(64, 60.0, 5);
  REQUIRE(again.directions == lights.directions);
}

TEST_CASE("generate_dataset writes the full layout per object") {
  fs::path dir = fresh_dir("layout");
  std::vector<SurfaceSpec> specs(2);
  for (auto& s : specs) {
    s.kind = SurfaceKind::sphere;
    s.h = s.w = 16;
    s.radius = 6.0;
  }
  BRDFSpec brdf;
  NoiseSpec noise;
  noise.seed = 21;
  io::DatasetManifest manifest = synth::generate_dataset(specs, 16, brdf, noise, dir);
  REQUIRE(manifest.objects.size() == 2);
  for (const auto& obj : manifest.objects) {
    REQUIRE(obj.images == 16);
    fs::path d(obj.dir);
    CHECK(fs::exists(d / "filenames.txt"));
    CHECK(fs::exists(d / "light_directions.txt"));
    CHECK(fs::exists(d / "light_intensities.txt"));
    CHECK(fs::exists(d / "mask.png"));
    CHECK(fs::exists(d / "normal_gt.txt"));
    int pngs = 0;
    for (const auto& e : fs::directory_iterator(d))
      if (e.path().extension() == ".png" && e.path().filename() != "mask.png") ++pngs;
    CHECK(pngs == 16);
  }
  CHECK(fs::exists(dir / "manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("generate_dataset is bit-identical for equal seeds") {
  fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  std::vector<SurfaceSpec> specs(1);
  specs[0].kind = SurfaceKind::sinusoidal_bumps;
  specs[0].h = specs[0].w = 12;
  BRDFSpec brdf;
  NoiseSpec noise;
  noise.gaussian_sigma = 0.01;
  noise.seed = 77;
  synth::generate_dataset(specs, 4, brdf, noise, a);
  synth::generate_dataset(specs, 4, brdf, noise, b);
  for (const char* name : {"bumps_0/000.png", "bumps_0/003.png", "bumps_0/light_directions.txt",
                           "bumps_0/light_intensities.txt", "bumps_0/normal_gt.txt"})
    REQUIRE(slurp(a / name) == slurp(b / name));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("generate_dataset refuses fewer than 3 lights") {
  fs::path dir = fresh_dir("toofew");
  std::vector<SurfaceSpec> specs(1);
  specs[0].h = specs[0].w = 8;
  specs[0].radius = 3.0;
  try {
    synth::generate_dataset(specs, 2, BRDFSpec{}, NoiseSpec{}, dir);
    FAIL("expected TooFewLights");
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::too_few_lights);
  }
  fs::remove_all(dir);
}
