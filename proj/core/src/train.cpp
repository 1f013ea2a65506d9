// Copyright 2026 The LDLC Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ldlc/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>

#include "ldlc/error.hpp"
#include "ldlc/image_io.hpp"
#include "ldlc/ops.hpp"
#include "ldlc/optim.hpp"
#include "ldlc/weights_io.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "harness-cli";

std::vector<Tensor> parameter_tensors(const Codec& codec) {
  std::vector<Tensor> out;
  for (auto& p : codec.parameters()) out.push_back(p.tensor);
  return out;
}

bool parameters_finite(const Codec& codec) {
  for (const auto& p : codec.parameters()) {
    if (!p.tensor.is_finite()) return false;
  }
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  codec.validate();
  if (!(lambda > 0.0)) throw Error(kModule, "lambda must be positive");
  if (gamma < 0.0) throw Error(kModule, "gamma must be non-negative (0 selects 0.006 * lambda)");
  if (batch_size == 0) throw Error(kModule, "batch size must be positive");
  if (crop_size == 0 || crop_size % 16 != 0) {
    throw Error(kModule, "crop size must be a positive multiple of 16");
  }
  if (!(learning_rate > 0.0) || !(lr_decay > 1.0)) {
    throw Error(kModule, "learning rate must be positive and decay factor above 1");
  }
  if (eval_interval == 0) throw Error(kModule, "eval interval must be positive");
  if (data_dir.empty() && image_size < crop_size) {
    throw Error(kModule, "synthetic image size must be at least the crop size");
  }
  if (data_dir.empty() && (train_images == 0 || val_images == 0)) {
    throw Error(kModule, "synthetic corpus needs at least one training and one validation image");
  }
}

double scheduled_learning_rate(const TrainConfig& cfg, std::size_t reductions) {
  return cfg.learning_rate / std::pow(cfg.lr_decay, static_cast<double>(reductions));
}

Dataset load_dataset(const TrainConfig& cfg) {
  Dataset d;
  std::vector<Tensor> all;
  std::size_t val_count = cfg.val_images;
  if (cfg.data_dir.empty()) {
    all = synthesize_corpus(cfg.seed, cfg.train_images + cfg.val_images, cfg.image_size);
  } else {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(cfg.data_dir)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".ppm" || ext == ".png")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Tensor img = load_image(f.string());
      if (img.dim(1) < cfg.crop_size || img.dim(2) < cfg.crop_size) {
        std::cerr << "warning: skipping " << f << ": smaller than the crop size\n";
        continue;
      }
      all.push_back(std::move(img));
    }
    if (all.size() < 2) throw Error(kModule, "data directory needs at least two usable images");
    val_count = std::clamp<std::size_t>(all.size() / 8, 1, cfg.val_images);
  }
  const std::size_t train_count = all.size() - val_count;
  d.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(train_count));
  for (std::size_t i = train_count; i < all.size(); ++i) {
    const Tensor& img = all[i];
    const std::size_t top = (img.dim(1) - cfg.crop_size) / 2, left = (img.dim(2) - cfg.crop_size) / 2;
    std::vector<double> crop(3 * cfg.crop_size * cfg.crop_size);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < cfg.crop_size; ++y) {
        for (std::size_t x = 0; x < cfg.crop_size; ++x) {
          crop[(c * cfg.crop_size + y) * cfg.crop_size + x] =
              img.data()[(c * img.dim(1) + top + y) * img.dim(2) + left + x];
        }
      }
    }
    d.val.emplace_back(Shape{3, cfg.crop_size, cfg.crop_size}, std::move(crop));
  }
  return d;
}

double validation_loss(const Codec& codec, const VisionProxy& proxy,
                       const std::vector<Tensor>& images, double lambda, double gamma,
                       std::uint64_t noise_seed) {
  if (images.empty()) throw Error(kModule, "empty validation set");
  NoGradGuard no_grad;
  Rng noise(noise_seed);
  double acc = 0.0;
  for (const auto& x : images) {
    acc += codec.forward_train(x, proxy.extract_features(x), lambda, gamma, noise).loss.total;
  }
  return acc / static_cast<double>(images.size());
}

Codec clone_codec(const Codec& codec) {
  Codec out(codec.config(), 0);
  copy_parameters(codec, out);
  if (codec.tables_ready()) {
    out.set_side_table(0, codec.side_table(0));
    out.set_side_table(1, codec.side_table(1));
  }
  return out;
}

Trainer::Trainer(TrainConfig cfg, Codec& codec) : cfg_(std::move(cfg)), codec_(codec) {
  cfg_.validate();
  if (!(codec_.config() == cfg_.codec)) {
    throw Error(kModule, "trainer config " + cfg_.codec.to_string() + " does not match codec " +
                             codec_.config().to_string());
  }
}

TrainResult Trainer::run(const Dataset& data) {
  if (data.train.empty() || data.val.empty()) throw Error(kModule, "empty dataset");
  const double lambda = cfg_.lambda;
  const double gamma = cfg_.effective_gamma();
  const VisionProxy proxy(cfg_.codec.c_s, cfg_.vision_seed);
  Adam adam(parameter_tensors(codec_), cfg_.learning_rate);
  Rng crops(cfg_.seed ^ 0xC0FFEEull);
  Rng noise(cfg_.seed ^ 0x5EEDull);
  const std::uint64_t val_seed = cfg_.seed ^ 0x7A1ull;

  TrainResult result;
  Codec last_good = clone_codec(codec_);
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  if (!cfg_.checkpoint_dir.empty()) std::filesystem::create_directories(cfg_.checkpoint_dir);

  auto abort_non_finite = [&](std::size_t step, const std::string& what) {
    copy_parameters(last_good, codec_);
    std::string where;
    if (!cfg_.checkpoint_dir.empty()) {
      codec_.update_tables();
      where = (std::filesystem::path(cfg_.checkpoint_dir) / "last_good.ldlw").string();
      save_model(where, codec_, cfg_.vision_seed);
      where = "; last good parameters saved to " + where;
    }
    throw Error(kModule, "training aborted at step " + std::to_string(step) + ": " + what +
                             where);
  };

  for (std::size_t step = 1; step <= cfg_.max_steps; ++step) {
    adam.zero_grad();
    LossBreakdown mean{};
    const double inv_batch = 1.0 / static_cast<double>(cfg_.batch_size);
    for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
      const Tensor& img = data.train[crops.below(data.train.size())];
      const Tensor x = random_crop(img, cfg_.crop_size, crops);
      TrainForward f;
      try {
        f = codec_.forward_train(x, proxy.extract_features(x), lambda, gamma, noise);
      } catch (const Error& e) {
        abort_non_finite(step, e.what());
      }
      backward(ops::scale(f.total, inv_batch));
      mean.r_y1 += f.loss.r_y1 * inv_batch;
      mean.r_y2 += f.loss.r_y2 * inv_batch;
      mean.d_x += f.loss.d_x * inv_batch;
      mean.d_s += f.loss.d_s * inv_batch;
    }
    mean = LossBreakdown::compose(mean.r_y1, mean.r_y2, mean.d_x, mean.d_s, lambda, gamma);
    adam.step();
    codec_.step += 1;
    if (!parameters_finite(codec_)) abort_non_finite(step, "non-finite parameters after update");
    result.steps.push_back({step, adam.learning_rate(), mean});
    if (hook_) hook_(step, codec_);

    if (cfg_.checkpoint_stride > 0 && step % cfg_.checkpoint_stride == 0 &&
        !cfg_.checkpoint_dir.empty()) {
      codec_.update_tables();
      const auto path = std::filesystem::path(cfg_.checkpoint_dir) /
                        ("step_" + std::to_string(step) + ".ldlw");
      save_model(path.string(), codec_, cfg_.vision_seed);
      result.checkpoints.push_back(path.string());
    }

    if (step % cfg_.eval_interval == 0) {
      const double val = validation_loss(codec_, proxy, data.val, lambda, gamma, val_seed);
      if (!std::isfinite(val)) abort_non_finite(step, "non-finite validation loss");
      copy_parameters(codec_, last_good);
      if (val < best * (1.0 - cfg_.plateau_threshold)) {
        best = val;
        stale = 0;
      } else if (++stale >= cfg_.plateau_patience) {
        stale = 0;
        if (result.reductions == cfg_.max_reductions) {
          result.evals.push_back({step, val, result.reductions});
          result.stopped_on_plateau = true;
          break;
        }
        ++result.reductions;
        adam.set_learning_rate(scheduled_learning_rate(cfg_, result.reductions));
      }
      result.evals.push_back({step, val, result.reductions});
    }
  }
  codec_.update_tables();
  return result;
}

TrainedModel train(const TrainConfig& cfg) {
  cfg.validate();
  TrainedModel m{Codec(cfg.codec, cfg.seed), {}};
  Trainer trainer(cfg, m.codec);
  m.result = trainer.run(load_dataset(cfg));
  return m;
}

}  // namespace ldlc
