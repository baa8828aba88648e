#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "pstereo/dataset.hpp"
#include "pstereo/loss.hpp"
#include "pstereo/metrics.hpp"
#include "pstereo/net/network.hpp"

namespace ps::train {

/// Everything one run needs: architecture, objective, optimizer schedule,
/// and crop sampling. Steps per epoch is explicit because the sampler draws
/// random crops rather than sweeping the dataset.
struct TrainConfig {
  net::NetConfig net;
  loss::LossConfig loss;
  int epochs = 10;
  int batch_size = 32;
  int crop_size = 32;
  int images_min = 8;
  int images_max = 32;
  int steps_per_epoch = 50;
  double learning_rate = 1e-3;
  double lr_decay_factor = 0.5;
  int lr_decay_every = 5;
  std::uint64_t seed = 0;
  std::string checkpoint_dir = "checkpoints";
};

struct StepLog {
  int epoch = 0, step = 0;
  double lr = 0.0;
  loss::LossBreakdown breakdown;
};

struct TrainResult {
  std::vector<StepLog> steps;
  std::vector<double> val_mae;  // one entry per epoch
  std::vector<std::string> epoch_checkpoints;
  std::string best_checkpoint;
  int best_epoch = 0;  // 1-based
  double best_val_mae = 0.0;
};

namespace detail {

inline void validate_train_config(const TrainConfig& cfg,
                                  const std::vector<io::DatasetObject>& data) {
  check(cfg.epochs >= 1 && cfg.steps_per_epoch >= 1 && cfg.batch_size >= 1, Err::bad_params,
        "epochs, steps, and batch size must be positive");
  check(cfg.crop_size >= 8 && cfg.crop_size % 4 == 0, Err::bad_params,
        "crop size must be a multiple of 4 and at least 8");
  check(cfg.images_min >= 1 && cfg.images_min <= cfg.images_max, Err::bad_params,
        "image count range is invalid");
  check(cfg.learning_rate > 0.0 && cfg.lr_decay_factor > 0.0 && cfg.lr_decay_every >= 1,
        Err::bad_params, "optimizer schedule is invalid");
  check(!data.empty(), Err::empty_list, "no training objects");
  for (const auto& obj : data) {
    check(obj.gt.has_value(), Err::no_ground_truth, obj.name + " has no ground-truth normals");
    check(obj.stack.h >= cfg.crop_size && obj.stack.w >= cfg.crop_size, Err::bad_params,
          obj.name + " is smaller than the crop size");
    check(obj.stack.n >= cfg.images_max, Err::bad_params,
          obj.name + " has fewer images than images_max");
  }
}

/// One training sample: a spatial crop of a random image subset.
struct Sample {
  ImageStack stack;
  LightSet lights;
  Mask mask;
  NormalMap gt;
};

inline Sample draw_sample(const io::DatasetObject& obj, int crop, int nimg, RandomStream& rng) {
  const int h = obj.stack.h, w = obj.stack.w, n = obj.stack.n;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < nimg; ++i) {
    int j = i + rng.index(n - i);
    std::swap(order[i], order[j]);
  }

  Sample s;
  // Crops with an empty mask carry no supervision; redraw the window.
  for (int attempt = 0;; ++attempt) {
    int y0 = rng.index(h - crop + 1), x0 = rng.index(w - crop + 1);
    s.mask.h = crop;
    s.mask.w = crop;
    s.mask.valid.assign(static_cast<std::size_t>(crop) * crop, 0);
    for (int y = 0; y < crop; ++y)
      for (int x = 0; x < crop; ++x) s.mask.set(y, x, obj.mask.at(y0 + y, x0 + x));
    if (s.mask.count() > 0) {
      s.stack = ImageStack::zeros(nimg, crop, crop);
      std::vector<double> dirs(static_cast<std::size_t>(nimg) * 3);
      for (int jj = 0; jj < nimg; ++jj) {
        int j = order[jj];
        for (int y = 0; y < crop; ++y)
          for (int x = 0; x < crop; ++x)
            for (int c = 0; c < 3; ++c)
              s.stack.at(jj, y, x, c) = obj.stack.at(j, y0 + y, x0 + x, c);
        for (int c = 0; c < 3; ++c) dirs[jj * 3 + c] = obj.lights.dir(j, c);
      }
      s.lights = LightSet::of_directions(std::move(dirs));
      s.gt = NormalMap::zeros(crop, crop);
      for (int y = 0; y < crop; ++y)
        for (int x = 0; x < crop; ++x)
          for (int c = 0; c < 3; ++c) s.gt.at(y, x, c) = obj.gt->at(y0 + y, x0 + x, c);
      return s;
    }
    check(attempt < 200, Err::empty_mask, obj.name + ": cannot find a crop with mask pixels");
  }
}

inline NormalMap node_to_map(const net::Tape& tape, int id) {
  const net::Tensor& t = tape.val(id);
  NormalMap nm = NormalMap::zeros(t.h, t.w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x) nm.at(y, x, c) = static_cast<double>(t.at(c, y, x));
  return nm;
}

inline void adam_step(std::vector<net::Param>& params, double lr, long long t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (net::Param& p : params)
    for (std::size_t i = 0; i < p.w.size(); ++i) {
      double g = p.g[i];
      double m = b1 * p.m[i] + (1.0 - b1) * g;
      double v = b2 * p.v[i] + (1.0 - b2) * g * g;
      p.m[i] = static_cast<float>(m);
      p.v[i] = static_cast<float>(v);
      p.w[i] -= static_cast<float>(lr * (m / c1) / (std::sqrt(v / c2) + eps));
    }
}

}  // namespace detail

/// Mean MAE of the final output over a set of objects, using the streaming
/// forward path.
inline double validation_mae(net::Network& model, const std::vector<io::DatasetObject>& data) {
  check(!data.empty(), Err::empty_list, "no validation objects");
  double sum = 0.0;
  for (const auto& obj : data) {
    check(obj.gt.has_value(), Err::no_ground_truth, obj.name + " has no ground-truth normals");
    MultiLevelOutput out = model.forward(obj.stack, obj.lights, obj.mask);
    sum += metrics::mae(metrics::angular_error_map(out.n3, *obj.gt, obj.mask), obj.mask);
  }
  return sum / static_cast<double>(data.size());
}

/// Adam training over random crops. Per step: draw batch_size samples (a
/// random object, image subset, and window each), accumulate the analytic
/// loss gradient through the tape, and take one optimizer step. Logs one
/// breakdown per step, validates once per epoch on val_data, writes a
/// checkpoint per epoch plus a best-by-validation-MAE copy, and throws
/// DivergedLoss on a non-finite total.
inline TrainResult train(const TrainConfig& cfg, const std::vector<io::DatasetObject>& data,
                         const std::vector<io::DatasetObject>& val_data,
                         net::Network* model_out = nullptr) {
  detail::validate_train_config(cfg, data);
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.checkpoint_dir, ec);
  check(!ec, Err::io_failure, "cannot create " + cfg.checkpoint_dir);

  net::Network model(cfg.net);
  RandomStream rng(cfg.seed);
  TrainResult result;
  result.best_val_mae = std::numeric_limits<double>::infinity();
  long long adam_t = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = cfg.learning_rate *
                std::pow(cfg.lr_decay_factor, (epoch - 1) / cfg.lr_decay_every);
    for (int step = 1; step <= cfg.steps_per_epoch; ++step) {
      model.zero_grads();
      loss::LossBreakdown mean_bd;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const io::DatasetObject& obj = data[rng.index(static_cast<int>(data.size()))];
        int nimg = cfg.images_min + rng.index(cfg.images_max - cfg.images_min + 1);
        detail::Sample s = detail::draw_sample(obj, cfg.crop_size, nimg, rng);

        net::Tape tape;
        net::Network::Inputs inputs = model.prepare_inputs(s.stack, s.lights);
        net::Network::TrainOutputs outs = model.forward_train(tape, inputs);

        MultiLevelOutput pred;
        pred.n1 = detail::node_to_map(tape, outs.n1);
        pred.n2 = detail::node_to_map(tape, outs.n2);
        pred.n3 = detail::node_to_map(tape, outs.n3);
        loss::LossGradients lg = loss::total_loss_with_grad(pred, s.gt, s.mask, cfg.loss);
        check(std::isfinite(lg.breakdown.total), Err::diverged_loss,
              "training loss became non-finite");

        const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);
        for (int k = 0; k < 3; ++k) {
          net::Tensor& seed = tape.grad(outs.level(k));
          const std::vector<double>& d = lg.d_pred[k];
          for (int c = 0; c < 3; ++c)
            for (int y = 0; y < seed.h; ++y)
              for (int x = 0; x < seed.w; ++x)
                seed.at(c, y, x) +=
                    static_cast<float>(d[(static_cast<std::size_t>(y) * seed.w + x) * 3 + c]) *
                    inv_batch;
        }
        tape.backward();

        for (int k = 0; k < 3; ++k) {
          mean_bd.l_a[k] += lg.breakdown.l_a[k] / cfg.batch_size;
          mean_bd.l_g[k] += lg.breakdown.l_g[k] / cfg.batch_size;
          mean_bd.loss[k] += lg.breakdown.loss[k] / cfg.batch_size;
        }
        mean_bd.total += lg.breakdown.total / cfg.batch_size;
      }
      detail::adam_step(model.params(), lr, ++adam_t);
      result.steps.push_back({epoch, step, lr, mean_bd});
    }

    double vmae = validation_mae(model, val_data);
    result.val_mae.push_back(vmae);
    std::string ck = (fs::path(cfg.checkpoint_dir) /
                      ("epoch_" + std::to_string(epoch) + ".ckpt")).string();
    model.save(ck);
    result.epoch_checkpoints.push_back(ck);
    if (vmae < result.best_val_mae) {
      result.best_val_mae = vmae;
      result.best_epoch = epoch;
      result.best_checkpoint = (fs::path(cfg.checkpoint_dir) / "best.ckpt").string();
      model.save(result.best_checkpoint);
    }
  }
  if (model_out) *model_out = std::move(model);
  return result;
}

}  // namespace ps::train
