#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pstereo/types.hpp"

using namespace ps;

namespace {

LightSet unit_lights(int n) {
  std::vector<double> dirs;
  for (int j = 0; j < n; ++j) {
    double a = 0.3 + 0.1 * j;
    dirs.insert(dirs.end(), {std::sin(a), 0.0, std::cos(a)});
  }
  return LightSet::of_directions(dirs);
}

}  // namespace

TEST_CASE("validate_pair accepts matching stacks and unit lights") {
  ImageStack stack = ImageStack::zeros(4, 2, 2);
  REQUIRE_NOTHROW(validate_pair(stack, unit_lights(4)));
}

TEST_CASE("validate_pair rejects mismatched counts") {
  ImageStack stack = ImageStack::zeros(4, 2, 2);
  try {
    validate_pair(stack, unit_lights(3));
    FAIL("expected CountMismatch");
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::count_mismatch);
  }
}

TEST_CASE("validate_pair rejects non-unit lights") {
  ImageStack stack = ImageStack::zeros(1, 2, 2);
  LightSet lights = LightSet::of_directions({0.0, 0.0, 2.0});
  try {
    validate_pair(stack, lights);
    FAIL("expected NonUnitLight");
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::non_unit_light);
  }
}

TEST_CASE("validate_pair rejects non-finite and non-positive data") {
  ImageStack stack = ImageStack::zeros(1, 2, 2);
  SECTION("NaN pixel") {
    stack.at(0, 0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(validate_pair(stack, unit_lights(1)), Error);
  }
  SECTION("negative pixel") {
    stack.at(0, 1, 1, 2) = -0.25;
    REQUIRE_THROWS_AS(validate_pair(stack, unit_lights(1)), Error);
  }
  SECTION("zero light intensity") {
    LightSet lights = unit_lights(1);
    lights.intensities[1] = 0.0;
    REQUIRE_THROWS_AS(validate_pair(stack, lights), Error);
  }
  SECTION("non-finite light direction") {
    LightSet lights = unit_lights(1);
    lights.directions[0] = std::numeric_limits<double>::infinity();
    try {
      validate_pair(stack, lights);
      FAIL("expected NonFinite");
    } catch (const Error& e) {
      REQUIRE(e.code() == Err::non_finite);
    }
  }
}

TEST_CASE("renormalize scales vectors to unit length") {
  Mask mask = Mask::full(1, 3);
  NormalMap nm = NormalMap::zeros(1, 3);
  nm.at(0, 0, 2) = 2.0;                       // (0,0,2)
  nm.at(0, 1, 2) = 1.0;                       // already unit
  nm.at(0, 2, 0) = 3.0;
  nm.at(0, 2, 1) = 4.0;                       // (3,4,0)
  NormalMap out = renormalize(nm, mask);
  CHECK(out.at(0, 0, 0) == 0.0);
  CHECK(out.at(0, 0, 2) == 1.0);
  CHECK(out.at(0, 1, 2) == 1.0);
  CHECK(out.at(0, 2, 0) == Catch::Approx(0.6).margin(1e-15));
  CHECK(out.at(0, 2, 1) == Catch::Approx(0.8).margin(1e-15));
  CHECK(out.at(0, 2, 2) == 0.0);
}

TEST_CASE("renormalize is exactly idempotent on in-mask pixels") {
  RandomStream rng(7);
  Mask mask = Mask::full(4, 4);
  NormalMap nm = NormalMap::zeros(4, 4);
  for (double& v : nm.data) v = rng.normal();
  NormalMap once = renormalize(nm, mask);
  NormalMap twice = renormalize(once, mask);
  REQUIRE(once.data == twice.data);
}

TEST_CASE("renormalize preserves component signs and argmax") {
  RandomStream rng(8);
  Mask mask = Mask::full(3, 3);
  NormalMap nm = NormalMap::zeros(3, 3);
  for (double& v : nm.data) v = rng.normal();
  NormalMap out = renormalize(nm, mask);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      int arg_in = 0, arg_out = 0;
      for (int c = 0; c < 3; ++c) {
        CHECK(std::signbit(out.at(y, x, c)) == std::signbit(nm.at(y, x, c)));
        if (std::abs(nm.at(y, x, c)) > std::abs(nm.at(y, x, arg_in))) arg_in = c;
        if (std::abs(out.at(y, x, c)) > std::abs(out.at(y, x, arg_out))) arg_out = c;
      }
      CHECK(arg_in == arg_out);
    }
}

TEST_CASE("renormalize refuses in-mask zero vectors, ignores masked ones") {
  NormalMap nm = NormalMap::zeros(2, 2);
  nm.at(0, 0, 2) = 1.0;
  nm.at(0, 1, 2) = 1.0;
  nm.at(1, 0, 2) = 1.0;
  Mask mask = Mask::full(2, 2);

  SECTION("out-of-mask zero passes and stays zero") {
    mask.set(1, 1, false);
    NormalMap out = renormalize(nm, mask);
    CHECK(out.at(1, 1, 0) == 0.0);
    CHECK(out.at(1, 1, 2) == 0.0);
  }
  SECTION("in-mask zero is refused") {
    try {
      (void)renormalize(nm, mask);
      FAIL("expected DegenerateNormal");
    } catch (const Error& e) {
      REQUIRE(e.code() == Err::degenerate_normal);
    }
  }
}

TEST_CASE("error names are stable diagnostics") {
  CHECK(std::string(err_name(Err::count_mismatch)) == "CountMismatch");
  CHECK(std::string(err_name(Err::non_unit_light)) == "NonUnitLight");
  CHECK(std::string(err_name(Err::degenerate_normal)) == "DegenerateNormal");
  CHECK(std::string(err_name(Err::missing_file)) == "MissingFile");
  CHECK(std::string(err_name(Err::bad_light_file)) == "BadLightFile");
  CHECK(std::string(err_name(Err::diverged_loss)) == "DivergedLoss");
  Error e(Err::too_few_lights, "n=2");
  CHECK(std::string(e.what()) == "TooFewLights: n=2");
}

TEST_CASE("mask counting") {
  Mask m = Mask::full(3, 2);
  CHECK(m.count() == 6);
  m.set(0, 0, false);
  m.set(2, 1, false);
  CHECK(m.count() == 4);
}

TEST_CASE("random streams are deterministic per seed") {
  RandomStream a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    double u = a.uniform(), v = b.uniform(), w = c.uniform();
    all_equal = all_equal && u == v;
    any_diff = any_diff || u != w;
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("random index stays in range") {
  RandomStream rng(3);
  for (int i = 0; i < 200; ++i) {
    int v = rng.index(7);
    CHECK(v >= 0);
    CHECK(v < 7);
  }
}
