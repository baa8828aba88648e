// pstereo: photometric-stereo toolkit command line.
//
// Subcommands:
//   render    generate a synthetic dataset with exact ground-truth normals
//   train     fit the dual-branch network on a dataset directory
//   eval      run a checkpoint over a dataset and report angular errors
//   baseline  classical least-squares photometric stereo over a dataset
//   ablate    train/evaluate the eight standard config variants at smoke scale
//
// Every failure exits nonzero after printing one diagnostic line naming the
// error class (CountMismatch, MissingFile, ...) on stderr.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pstereo/baseline.hpp"
#include "pstereo/config.hpp"
#include "pstereo/dataset.hpp"
#include "pstereo/metrics.hpp"
#include "pstereo/net/network.hpp"
#include "pstereo/render.hpp"
#include "pstereo/surface.hpp"
#include "pstereo/train.hpp"

namespace fs = std::filesystem;

namespace {

struct ObjectScore {
  std::string name;
  ps::metrics::EvalReport report;
};

// Fixed-width summary table: one row per object plus an average row.
std::string score_table(const std::vector<ObjectScore>& scores) {
  std::string out = "object            mae_deg   err15    err30\n";
  char buf[128];
  double mae = 0, e15 = 0, e30 = 0;
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof(buf), "%-16s %8.3f %8.4f %8.4f\n", s.name.c_str(),
                  s.report.mae_degrees, s.report.err15, s.report.err30);
    out += buf;
    mae += s.report.mae_degrees;
    e15 += s.report.err15;
    e30 += s.report.err30;
  }
  const double n = static_cast<double>(scores.size());
  std::snprintf(buf, sizeof(buf), "%-16s %8.3f %8.4f %8.4f\n", "Avg.", mae / n, e15 / n, e30 / n);
  out += buf;
  return out;
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  ps::check(f.good(), ps::Err::io_failure, "cannot open " + path.string() + " for writing");
  f << body;
  ps::check(f.good(), ps::Err::io_failure, "write failed: " + path.string());
}

// Emits per-object reports and error-map images plus a summary table.
void emit_reports(const std::vector<ObjectScore>& scores,
                  const std::vector<ps::io::DatasetObject>& objects,
                  const std::vector<ps::AngularErrorMap>& error_maps, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  ps::check(!ec, ps::Err::io_failure, "cannot create " + out_dir.string());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    write_file(out_dir / (scores[i].name + "_report.txt"), ps::metrics::to_text(scores[i].report));
    ps::metrics::write_error_map_png((out_dir / (scores[i].name + "_error.png")).string(),
                                     error_maps[i], objects[i].mask);
  }
  std::string table = score_table(scores);
  write_file(out_dir / "summary.txt", table);
  std::fputs(table.c_str(), stdout);
}

ps::train::TrainConfig load_train_config(const std::string& config_path) {
  ps::train::TrainConfig cfg;
  if (!config_path.empty()) cfg = ps::config::load_config(config_path);
  return cfg;
}

void require_gt(const std::vector<ps::io::DatasetObject>& objects) {
  for (const auto& o : objects)
    ps::check(o.gt.has_value(), ps::Err::no_ground_truth,
              o.name + " has no normal_gt.txt; cannot score");
}

std::string step_line(const ps::train::StepLog& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "epoch=%d step=%d lr=%.8g la=%.6g/%.6g/%.6g lg=%.6g/%.6g/%.6g total=%.6g\n",
                s.epoch, s.step, s.lr, s.breakdown.l_a[0], s.breakdown.l_a[1], s.breakdown.l_a[2],
                s.breakdown.l_g[0], s.breakdown.l_g[1], s.breakdown.l_g[2], s.breakdown.total);
  return buf;
}

void write_train_log(const ps::train::TrainResult& result, const fs::path& path) {
  std::string log;
  std::size_t step_idx = 0;
  for (std::size_t epoch = 0; epoch < result.val_mae.size(); ++epoch) {
    while (step_idx < result.steps.size() &&
           result.steps[step_idx].epoch == static_cast<int>(epoch) + 1)
      log += step_line(result.steps[step_idx++]);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "epoch=%zu val_mae=%.6f\n", epoch + 1, result.val_mae[epoch]);
    log += buf;
  }
  write_file(path, log);
}

// The eight standard ablation variants. 0: image branch only. 1: gradient
// maps concatenated onto the image input, no gradient extractor. 2: gradient
// branch only. 3: both branches, plain concatenation. 4: cross-attention
// fusion, cosine loss only. 5: fusion, gradient loss only. 6: fusion, both
// losses. 7: adds the two hourglass blocks.
void apply_variant(int id, ps::train::TrainConfig& cfg) {
  cfg.net.use_image_branch = (id != 2);
  cfg.net.use_gradient_branch = (id >= 2);
  cfg.net.concat_gradient_input = (id == 1);
  cfg.net.use_fusion = (id >= 4);
  cfg.net.fusion_mode = ps::net::FusionMode::cross_attention;
  cfg.net.hourglass_blocks = (id == 7) ? 2 : 0;
  cfg.loss.use_cosine = (id != 5);
  cfg.loss.use_gradient = (id >= 5);
}

int run_render(const std::string& out_dir, std::uint64_t seed, int objects, int size, int lights,
               const std::string& model, double albedo, double ks, double shininess, double sigma,
               double outlier_fraction) {
  std::vector<ps::SurfaceSpec> specs;
  for (int k = 0; k < objects; ++k) {
    ps::SurfaceSpec s;
    s.h = s.w = size;
    s.kind = static_cast<ps::SurfaceKind>(k % 4);
    s.radius = 0.38 * size;
    s.seed = seed + static_cast<std::uint64_t>(k);
    specs.push_back(s);
  }
  ps::BRDFSpec brdf;
  brdf.model =
      model == "blinn-phong" ? ps::ReflectanceModel::blinn_phong : ps::ReflectanceModel::lambertian;
  brdf.albedo_rgb[0] = brdf.albedo_rgb[1] = brdf.albedo_rgb[2] = albedo;
  brdf.k_s = ks;
  brdf.shininess = shininess;
  ps::NoiseSpec noise;
  noise.gaussian_sigma = sigma;
  noise.outlier_fraction = outlier_fraction;
  noise.seed = seed;
  ps::io::DatasetManifest manifest =
      ps::synth::generate_dataset(specs, lights, brdf, noise, out_dir);
  std::printf("wrote %zu objects to %s\n", manifest.objects.size(), out_dir.c_str());
  return 0;
}

int run_train(const std::string& data_dir, const std::string& val_dir,
              const std::string& config_path, const std::string& out_dir, bool bear_fix,
              bool have_seed, std::uint64_t seed) {
  ps::train::TrainConfig cfg = load_train_config(config_path);
  if (have_seed) {
    cfg.seed = seed;
    cfg.net.seed = seed;
  }
  if (!out_dir.empty()) cfg.checkpoint_dir = out_dir;
  std::vector<ps::io::DatasetObject> data = ps::io::load_dataset(data_dir, bear_fix);
  std::vector<ps::io::DatasetObject> val =
      val_dir.empty() ? data : ps::io::load_dataset(val_dir, bear_fix);
  ps::train::TrainResult result = ps::train::train(cfg, data, val);
  write_train_log(result, fs::path(cfg.checkpoint_dir) / "train_log.txt");
  std::printf("trained %zu steps; best val MAE %.3f deg (epoch %d)\nbest checkpoint: %s\n",
              result.steps.size(), result.best_val_mae, result.best_epoch,
              result.best_checkpoint.c_str());
  return 0;
}

int run_eval(const std::string& data_dir, const std::string& checkpoint,
             const std::string& out_dir, bool bear_fix, bool gt_bypass) {
  std::vector<ps::io::DatasetObject> objects = ps::io::load_dataset(data_dir, bear_fix);
  require_gt(objects);
  std::optional<ps::net::Network> model;
  if (!gt_bypass) model.emplace(ps::net::Network::load(checkpoint));
  std::vector<ObjectScore> scores;
  std::vector<ps::AngularErrorMap> error_maps;
  for (const auto& obj : objects) {
    // Only the final output level is scored.
    ps::NormalMap pred =
        gt_bypass ? *obj.gt : model->forward(obj.stack, obj.lights, obj.mask).n3;
    ps::metrics::EvalReport report = ps::metrics::evaluate_normals(pred, *obj.gt, obj.mask);
    error_maps.push_back(report.error_map);
    scores.push_back({obj.name, std::move(report)});
  }
  emit_reports(scores, objects, error_maps, out_dir);
  return 0;
}

int run_baseline(const std::string& data_dir, const std::string& out_dir, bool bear_fix) {
  std::vector<ps::io::DatasetObject> objects = ps::io::load_dataset(data_dir, bear_fix);
  require_gt(objects);
  std::vector<ObjectScore> scores;
  std::vector<ps::AngularErrorMap> error_maps;
  for (const auto& obj : objects) {
    ps::baseline::L2Solution sol = ps::baseline::solve_l2(obj.stack, obj.lights, obj.mask);
    ps::metrics::EvalReport report = ps::metrics::evaluate_normals(sol.normals, *obj.gt, obj.mask);
    error_maps.push_back(report.error_map);
    scores.push_back({obj.name, std::move(report)});
  }
  emit_reports(scores, objects, error_maps, out_dir);
  return 0;
}

int run_ablate(const std::string& data_dir, const std::string& val_dir,
               const std::string& config_path, const std::string& out_dir, bool bear_fix,
               bool have_seed, std::uint64_t seed) {
  ps::train::TrainConfig base = load_train_config(config_path);
  if (have_seed) base.seed = seed;
  std::vector<ps::io::DatasetObject> data = ps::io::load_dataset(data_dir, bear_fix);
  std::vector<ps::io::DatasetObject> val =
      val_dir.empty() ? data : ps::io::load_dataset(val_dir, bear_fix);
  require_gt(val);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  ps::check(!ec, ps::Err::io_failure, "cannot create " + out_dir);

  std::string table = "id  mae_deg   err15    err30    params\n";
  for (int id = 0; id <= 7; ++id) {
    ps::train::TrainConfig cfg = base;
    cfg.net.seed = base.seed;
    apply_variant(id, cfg);
    cfg.checkpoint_dir = (fs::path(out_dir) / ("variant_" + std::to_string(id))).string();
    ps::net::Network model(cfg.net);
    ps::train::TrainResult result = ps::train::train(cfg, data, val, &model);
    double mae = 0, e15 = 0, e30 = 0;
    for (const auto& obj : val) {
      ps::NormalMap pred = model.forward(obj.stack, obj.lights, obj.mask).n3;
      ps::metrics::EvalReport r = ps::metrics::evaluate_normals(pred, *obj.gt, obj.mask);
      mae += r.mae_degrees;
      e15 += r.err15;
      e30 += r.err30;
    }
    const double n = static_cast<double>(val.size());
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-3d %8.3f %8.4f %8.4f  %zu\n", id, mae / n, e15 / n,
                  e30 / n, model.parameter_count());
    table += buf;
    std::fputs(buf, stdout);
    (void)result;
  }
  write_file(fs::path(out_dir) / "ablation.txt", table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"photometric-stereo toolkit"};
  app.require_subcommand(1);

  std::string out_dir, data_dir, val_dir, config_path, checkpoint;
  std::uint64_t seed = 0;
  bool deterministic = false, bear_fix = false, gt_bypass = false;
  int objects = 4, size = 64, lights = 16;
  std::string model = "lambertian";
  double albedo = 0.75, ks = 0.2, shininess = 32.0, sigma = 0.0, outlier_fraction = 0.0;

  CLI::App* render = app.add_subcommand("render", "generate a synthetic dataset");
  render->add_option("--out", out_dir, "output dataset directory")->required();
  render->add_option("--seed", seed, "generator seed");
  render->add_option("--objects", objects, "object count (kinds cycle)");
  render->add_option("--size", size, "image side length in pixels");
  render->add_option("--lights", lights, "lights per object");
  render->add_option("--model", model, "lambertian or blinn-phong");
  render->add_option("--albedo", albedo, "uniform albedo in (0,1]");
  render->add_option("--ks", ks, "specular strength");
  render->add_option("--shininess", shininess, "specular exponent");
  render->add_option("--noise-sigma", sigma, "gaussian noise sigma");
  render->add_option("--outlier-fraction", outlier_fraction, "saturated-pixel fraction");

  CLI::App* train = app.add_subcommand("train", "train the network");
  train->add_option("--data", data_dir, "training dataset directory")->required();
  train->add_option("--val", val_dir, "validation dataset directory (default: --data)");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--out", out_dir, "checkpoint directory (overrides config)");
  CLI::Option* train_seed = train->add_option("--seed", seed, "overrides config seed");
  train->add_flag("--deterministic", deterministic, "single-threaded, bitwise-reproducible");
  train->add_flag("--bear-fix", bear_fix, "drop the first 20 images of 96-image bear objects");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--data", data_dir, "dataset directory (needs ground truth)")->required();
  CLI::Option* ckpt_opt = eval->add_option("--checkpoint", checkpoint, "checkpoint file");
  eval->add_option("--out", out_dir, "report directory")->required();
  eval->add_flag("--bear-fix", bear_fix, "drop the first 20 images of 96-image bear objects");
  eval->add_flag("--deterministic", deterministic, "single-threaded, bitwise-reproducible");
  eval->add_flag("--gt-bypass", gt_bypass, "score the ground truth against itself (no network)");

  CLI::App* baseline = app.add_subcommand("baseline", "least-squares baseline");
  baseline->add_option("--data", data_dir, "dataset directory (needs ground truth)")->required();
  baseline->add_option("--out", out_dir, "report directory")->required();
  baseline->add_flag("--bear-fix", bear_fix, "drop the first 20 images of 96-image bear objects");

  CLI::App* ablate = app.add_subcommand("ablate", "run the eight standard config variants");
  ablate->add_option("--data", data_dir, "training dataset directory")->required();
  ablate->add_option("--val", val_dir, "validation dataset directory (default: --data)");
  ablate->add_option("--config", config_path, "key=value config file (smoke scale)");
  ablate->add_option("--out", out_dir, "report directory")->required();
  CLI::Option* ablate_seed = ablate->add_option("--seed", seed, "overrides config seed");
  ablate->add_flag("--bear-fix", bear_fix, "drop the first 20 images of 96-image bear objects");
  ablate->add_flag("--deterministic", deterministic, "single-threaded, bitwise-reproducible");

  CLI11_PARSE(app, argc, argv);

  try {
    if (deterministic) ps::set_max_threads(1);
    if (render->parsed())
      return run_render(out_dir, seed, objects, size, lights, model, albedo, ks, shininess, sigma,
                        outlier_fraction);
    if (train->parsed())
      return run_train(data_dir, val_dir, config_path, out_dir, bear_fix,
                       train_seed->count() > 0, seed);
    if (eval->parsed()) {
      ps::check(gt_bypass || ckpt_opt->count() > 0, ps::Err::bad_params,
                "eval needs --checkpoint unless --gt-bypass is given");
      return run_eval(data_dir, checkpoint, out_dir, bear_fix, gt_bypass);
    }
    if (baseline->parsed()) return run_baseline(data_dir, out_dir, bear_fix);
    if (ablate->parsed())
      return run_ablate(data_dir, val_dir, config_path, out_dir, bear_fix,
                        ablate_seed->count() > 0, seed);
  } catch (const ps::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
