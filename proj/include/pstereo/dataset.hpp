#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pstereo/png_io.hpp"
#include "pstereo/render.hpp"
#include "pstereo/surface.hpp"
#include "pstereo/types.hpp"

namespace ps::io {

/// One capture: a stack of intensity-corrected images with the lights that
/// produced them, the object mask, and ground-truth normals when available.
struct DatasetObject {
  std::string name;
  ImageStack stack;
  LightSet lights;
  Mask mask;
  std::optional<NormalMap> gt;
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string trimmed(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream f(path);
  check(f.is_open(), Err::missing_file, "missing " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    std::string t = trimmed(line);
    if (!t.empty()) lines.push_back(std::move(t));
  }
  return lines;
}

/// Parses rows of exactly three decimals. Reused for light directions,
/// light intensities, and ground-truth normals with the caller's error class.
inline std::vector<double> parse_triplets(const std::filesystem::path& path, Err on_bad) {
  std::vector<double> values;
  for (const std::string& line : read_lines(path)) {
    std::istringstream ss(line);
    double a, b, c;
    ss >> a >> b >> c;
    check(!ss.fail(), on_bad, "non-numeric row in " + path.string() + ": " + line);
    std::string rest;
    ss >> rest;
    check(rest.empty(), on_bad, "expected three columns in " + path.string() + ": " + line);
    values.push_back(a);
    values.push_back(b);
    values.push_back(c);
  }
  return values;
}

inline bool is_bear_name(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return name == "bear" || name == "bearpng";
}

}  // namespace detail

/// Maps a rendered value to the stored 16-bit sample under exposure scale c.
inline std::uint16_t quantize16(double v, double c) {
  double s = v * c;
  s = std::clamp(s, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(s * 65535.0));
}

/// Value a loader recovers for a rendered v written with exposure scale c:
/// quantize, decode to [0,1], then divide by the recorded intensity c.
inline double quantized_round_trip(double v, double c) {
  return quantize16(v, c) / 65535.0 / c;
}

/// Loads one object directory. Image order follows filenames.txt; values are
/// scaled to [0,1] by the PNG bit depth and divided per light and channel by
/// light_intensities.txt when that file exists. With bear_fix, an object
/// named "bear" holding 96 images drops the first 20.
inline DatasetObject load_object(const std::filesystem::path& dir, bool bear_fix) {
  namespace fs = std::filesystem;
  DatasetObject obj;
  obj.name = dir.filename().string();
  if (obj.name.empty()) obj.name = dir.parent_path().filename().string();

  std::vector<std::string> files = detail::read_lines(dir / "filenames.txt");
  check(!files.empty(), Err::empty_list, "filenames.txt lists no images in " + dir.string());
  std::vector<double> dirs =
      detail::parse_triplets(dir / "light_directions.txt", Err::bad_light_file);
  check(dirs.size() == files.size() * 3, Err::count_mismatch,
        "light_directions.txt row count does not match filenames.txt in " + dir.string());

  std::vector<double> intensities;
  if (fs::exists(dir / "light_intensities.txt")) {
    intensities = detail::parse_triplets(dir / "light_intensities.txt", Err::bad_light_file);
    check(intensities.size() == files.size() * 3, Err::count_mismatch,
          "light_intensities.txt row count does not match filenames.txt in " + dir.string());
  }

  if (bear_fix && detail::is_bear_name(obj.name) && files.size() == 96) {
    files.erase(files.begin(), files.begin() + 20);
    dirs.erase(dirs.begin(), dirs.begin() + 60);
    if (!intensities.empty()) intensities.erase(intensities.begin(), intensities.begin() + 60);
  }

  check(fs::exists(dir / "mask.png"), Err::missing_file, "missing mask.png in " + dir.string());
  PngImage mask_png = read_png((dir / "mask.png").string());
  obj.mask.h = mask_png.h;
  obj.mask.w = mask_png.w;
  obj.mask.valid.resize(static_cast<std::size_t>(mask_png.h) * mask_png.w);
  for (int y = 0; y < mask_png.h; ++y)
    for (int x = 0; x < mask_png.w; ++x) obj.mask.set(y, x, mask_png.at(y, x, 0) > 0);

  const int n = static_cast<int>(files.size());
  obj.stack = ImageStack::zeros(n, mask_png.h, mask_png.w);
  for (int j = 0; j < n; ++j) {
    PngImage img = read_png((dir / files[j]).string());
    check(img.h == mask_png.h && img.w == mask_png.w, Err::shape_mismatch,
          files[j] + " does not match the mask dimensions in " + dir.string());
    double scale = img.bit_depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        for (int c = 0; c < 3; ++c) {
          double v = img.at(y, x, img.channels == 3 ? c : 0) / scale;
          if (!intensities.empty()) v /= intensities[j * 3 + c];
          obj.stack.at(j, y, x, c) = v;
        }
  }

  obj.lights.n = n;
  obj.lights.directions = std::move(dirs);
  obj.lights.intensities.assign(static_cast<std::size_t>(n) * 3, 1.0);
  validate_pair(obj.stack, obj.lights);

  if (fs::exists(dir / "normal_gt.txt")) {
    std::vector<double> gt = detail::parse_triplets(dir / "normal_gt.txt", Err::io_failure);
    check(gt.size() == static_cast<std::size_t>(mask_png.h) * mask_png.w * 3, Err::shape_mismatch,
          "normal_gt.txt row count does not match the mask dimensions in " + dir.string());
    NormalMap nm;
    nm.h = mask_png.h;
    nm.w = mask_png.w;
    nm.data = std::move(gt);
    obj.gt = std::move(nm);
  }
  return obj;
}

/// Loads every object directory under root (any subdirectory holding a
/// filenames.txt; root itself counts when it holds one), sorted by name.
inline std::vector<DatasetObject> load_dataset(const std::filesystem::path& root, bool bear_fix) {
  namespace fs = std::filesystem;
  check(fs::exists(root), Err::missing_file, "dataset root does not exist: " + root.string());
  std::vector<fs::path> dirs;
  if (fs::exists(root / "filenames.txt")) {
    dirs.push_back(root);
  } else {
    for (const auto& entry : fs::directory_iterator(root))
      if (entry.is_directory() && fs::exists(entry.path() / "filenames.txt"))
        dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
  }
  check(!dirs.empty(), Err::missing_file, "no object directories under " + root.string());
  std::vector<DatasetObject> objects;
  objects.reserve(dirs.size());
  for (const auto& d : dirs) objects.push_back(load_object(d, bear_fix));
  return objects;
}

struct DatasetManifest {
  struct Entry {
    std::string name;
    std::string dir;
    int images = 0;
    int h = 0, w = 0;
  };
  std::vector<Entry> objects;
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  check(f.is_open(), Err::io_failure, "cannot write " + path.string());
  f << body;
  check(f.good(), Err::io_failure, "write failed for " + path.string());
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  return x;
}

}  // namespace detail

}  // namespace ps::io

namespace ps::synth {

/// Renders each surface under lights sampled on the 60-degree cap and writes
/// one object directory per surface in the dataset layout: 16-bit RGB PNGs,
/// exposure folded into light_intensities.txt so the loader recovers the
/// rendered values up to 16-bit quantization. Everything derives from
/// noise.seed, so equal calls produce bit-identical files.
inline io::DatasetManifest generate_dataset(const std::vector<SurfaceSpec>& surfaces,
                                            int lights_per_object, const BRDFSpec& brdf,
                                            const NoiseSpec& noise,
                                            const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  check(!surfaces.empty(), Err::empty_list, "no surfaces to generate");
  check(lights_per_object >= 3, Err::too_few_lights,
        "need at least 3 lights per object, got " + std::to_string(lights_per_object));

  io::DatasetManifest manifest;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  check(!ec, Err::io_failure, "cannot create " + out_dir.string());

  for (std::size_t k = 0; k < surfaces.size(); ++k) {
    const SurfaceSpec& spec = surfaces[k];
    const char* kind = spec.kind == SurfaceKind::sphere             ? "sphere"
                       : spec.kind == SurfaceKind::sinusoidal_bumps ? "bumps"
                       : spec.kind == SurfaceKind::wrinkle_field    ? "wrinkles"
                                                                    : "plane";
    std::string name = std::string(kind) + "_" + std::to_string(k);
    fs::path dir = out_dir / name;
    fs::create_directories(dir, ec);
    check(!ec, Err::io_failure, "cannot create " + dir.string());

    auto [normals, mask] = make_surface(spec);
    LightSet lights =
        sample_cap_lights(lights_per_object, 60.0, io::detail::mix_seed(noise.seed, 2 * k));
    NoiseSpec obj_noise = noise;
    obj_noise.seed = io::detail::mix_seed(noise.seed, 2 * k + 1);
    ImageStack stack = render(normals, mask, lights, brdf, obj_noise);

    double vmax = 0.0;
    for (double v : stack.data) vmax = std::max(vmax, v);
    double c = 1.0 / std::max(1.0, vmax);

    std::string filenames, light_dirs, light_ints;
    std::vector<std::uint16_t> pixels(static_cast<std::size_t>(spec.h) * spec.w * 3);
    for (int j = 0; j < lights.n; ++j) {
      char fname[32];
      std::snprintf(fname, sizeof(fname), "%03d.png", j);
      for (int y = 0; y < spec.h; ++y)
        for (int x = 0; x < spec.w; ++x)
          for (int ch = 0; ch < 3; ++ch)
            pixels[(static_cast<std::size_t>(y) * spec.w + x) * 3 + ch] =
                io::quantize16(stack.at(j, y, x, ch), c);
      io::write_png16((dir / fname).string(), spec.h, spec.w, 3, pixels);
      filenames += std::string(fname) + "\n";
      light_dirs += io::detail::fmt17(lights.dir(j, 0)) + " " + io::detail::fmt17(lights.dir(j, 1)) +
                    " " + io::detail::fmt17(lights.dir(j, 2)) + "\n";
      light_ints += io::detail::fmt17(c) + " " + io::detail::fmt17(c) + " " + io::detail::fmt17(c) +
                    "\n";
    }
    io::detail::write_text(dir / "filenames.txt", filenames);
    io::detail::write_text(dir / "light_directions.txt", light_dirs);
    io::detail::write_text(dir / "light_intensities.txt", light_ints);

    std::vector<std::uint8_t> mask_px(static_cast<std::size_t>(spec.h) * spec.w);
    for (int y = 0; y < spec.h; ++y)
      for (int x = 0; x < spec.w; ++x)
        mask_px[static_cast<std::size_t>(y) * spec.w + x] = mask.at(y, x) ? 255 : 0;
    io::write_png8((dir / "mask.png").string(), spec.h, spec.w, 1, mask_px);

    std::string gt_text;
    gt_text.reserve(static_cast<std::size_t>(spec.h) * spec.w * 24);
    for (int y = 0; y < spec.h; ++y)
      for (int x = 0; x < spec.w; ++x)
        gt_text += io::detail::fmt17(normals.at(y, x, 0)) + " " +
                   io::detail::fmt17(normals.at(y, x, 1)) + " " +
                   io::detail::fmt17(normals.at(y, x, 2)) + "\n";
    io::detail::write_text(dir / "normal_gt.txt", gt_text);

    manifest.objects.push_back({name, dir.string(), lights.n, spec.h, spec.w});
  }

  nlohmann::json j;
  for (const auto& e : manifest.objects)
    j["objects"].push_back(
        {{"name", e.name}, {"dir", e.dir}, {"images", e.images}, {"h", e.h}, {"w", e.w}});
  io::detail::write_text(out_dir / "manifest.json", j.dump(2) + "\n");
  return manifest;
}

}  // namespace ps::synth
