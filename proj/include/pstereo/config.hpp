#pragma once

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "pstereo/train.hpp"

namespace ps::config {

namespace detail {

inline std::string trimmed(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(Err::bad_params, "config key " + key + " expects a boolean, got '" + v + "'");
}

inline double parse_real(const std::string& v, const std::string& key) {
  char* end = nullptr;
  double d = std::strtod(v.c_str(), &end);
  check(end && *end == '\0' && end != v.c_str(), Err::bad_params,
        "config key " + key + " expects a number, got '" + v + "'");
  return d;
}

inline int parse_int(const std::string& v, const std::string& key) {
  double d = parse_real(v, key);
  int i = static_cast<int>(d);
  check(static_cast<double>(i) == d, Err::bad_params,
        "config key " + key + " expects an integer, got '" + v + "'");
  return i;
}

inline std::uint64_t parse_seed(const std::string& v, const std::string& key) {
  char* end = nullptr;
  unsigned long long u = std::strtoull(v.c_str(), &end, 10);
  check(end && *end == '\0' && end != v.c_str(), Err::bad_params,
        "config key " + key + " expects an unsigned integer, got '" + v + "'");
  return u;
}

}  // namespace detail

/// Applies one `key = value` setting onto a training config. Keys mirror
/// the config fields, with `net.` and `loss.` prefixes for the nested parts.
/// Unknown keys are rejected so typos fail loudly.
inline void apply_setting(train::TrainConfig& cfg, const std::string& key,
                          const std::string& value) {
  using detail::parse_bool;
  using detail::parse_int;
  using detail::parse_real;
  if (key == "net.use_image_branch") cfg.net.use_image_branch = parse_bool(value, key);
  else if (key == "net.use_gradient_branch") cfg.net.use_gradient_branch = parse_bool(value, key);
  else if (key == "net.use_fusion") cfg.net.use_fusion = parse_bool(value, key);
  else if (key == "net.fusion_mode") cfg.net.fusion_mode = net::fusion_from_name(value);
  else if (key == "net.hourglass_blocks") cfg.net.hourglass_blocks = parse_int(value, key);
  else if (key == "net.base_channels") cfg.net.base_channels = parse_int(value, key);
  else if (key == "net.gradient_branch_gets_lights")
    cfg.net.gradient_branch_gets_lights = parse_bool(value, key);
  else if (key == "net.concat_gradient_input")
    cfg.net.concat_gradient_input = parse_bool(value, key);
  else if (key == "net.seed") cfg.net.seed = detail::parse_seed(value, key);
  else if (key == "loss.omega1") cfg.loss.omega[0] = parse_real(value, key);
  else if (key == "loss.omega2") cfg.loss.omega[1] = parse_real(value, key);
  else if (key == "loss.omega3") cfg.loss.omega[2] = parse_real(value, key);
  else if (key == "loss.mu") cfg.loss.mu = parse_real(value, key);
  else if (key == "loss.use_cosine") cfg.loss.use_cosine = parse_bool(value, key);
  else if (key == "loss.use_gradient") cfg.loss.use_gradient = parse_bool(value, key);
  else if (key == "epochs") cfg.epochs = parse_int(value, key);
  else if (key == "batch_size") cfg.batch_size = parse_int(value, key);
  else if (key == "crop_size") cfg.crop_size = parse_int(value, key);
  else if (key == "images_min") cfg.images_min = parse_int(value, key);
  else if (key == "images_max") cfg.images_max = parse_int(value, key);
  else if (key == "steps_per_epoch") cfg.steps_per_epoch = parse_int(value, key);
  else if (key == "learning_rate") cfg.learning_rate = parse_real(value, key);
  else if (key == "lr_decay_factor") cfg.lr_decay_factor = parse_real(value, key);
  else if (key == "lr_decay_every") cfg.lr_decay_every = parse_int(value, key);
  else if (key == "seed") cfg.seed = detail::parse_seed(value, key);
  else if (key == "checkpoint_dir") cfg.checkpoint_dir = value;
  else fail(Err::bad_params, "unknown config key: " + key);
}

/// Parses `key = value` lines; blank lines and lines starting with '#' are
/// skipped. Settings overwrite the defaults in place.
inline void load_config_stream(train::TrainConfig& cfg, std::istream& in,
                               const std::string& origin) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::trimmed(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    check(eq != std::string::npos, Err::bad_params,
          origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trimmed(t.substr(0, eq));
    std::string value = detail::trimmed(t.substr(eq + 1));
    check(!key.empty(), Err::bad_params,
          origin + ":" + std::to_string(lineno) + ": empty key");
    apply_setting(cfg, key, value);
  }
}

inline train::TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  check(f.is_open(), Err::missing_file, "cannot open config file " + path);
  train::TrainConfig cfg;
  load_config_stream(cfg, f, path);
  return cfg;
}

}  // namespace ps::config
