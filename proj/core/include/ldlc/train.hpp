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

#ifndef LDLC_TRAIN_HPP_
#define LDLC_TRAIN_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ldlc/codec.hpp"
#include "ldlc/vision_proxy.hpp"

namespace ldlc {

inline constexpr std::array<double, 6> kLambdaGrid{0.0067, 0.0100, 0.0130, 0.0250, 0.0300, 0.0483};

struct TrainConfig {
  CodecConfig codec;
  double lambda = 0.0130;
  double gamma = 0.0;  // 0 means 0.006 * lambda
  std::size_t batch_size = 8;
  std::size_t crop_size = 64;
  double learning_rate = 1e-4;
  double lr_decay = 10.0;
  std::size_t max_reductions = 4;
  std::size_t plateau_patience = 5;
  double plateau_threshold = 1e-4;  // relative improvement
  std::size_t max_steps = 2000;
  std::size_t eval_interval = 50;
  std::size_t checkpoint_stride = 0;  // 0 disables checkpoints
  std::string checkpoint_dir;
  std::uint64_t seed = 1;
  std::uint64_t vision_seed = 7;
  // Synthetic corpus used when data_dir is empty.
  std::size_t train_images = 256;
  std::size_t val_images = 16;
  std::size_t image_size = 96;
  std::string data_dir;

  double effective_gamma() const { return gamma > 0.0 ? gamma : gamma_for_lambda(lambda); }
  void validate() const;
};

// Learning rate after `reductions` plateau reductions.
double scheduled_learning_rate(const TrainConfig& cfg, std::size_t reductions);

struct StepRecord {
  std::size_t step = 0;
  double learning_rate = 0.0;
  LossBreakdown loss;  // batch mean
};

struct EvalRecord {
  std::size_t step = 0;
  double val_loss = 0.0;
  std::size_t reductions = 0;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  std::vector<std::string> checkpoints;
  std::size_t reductions = 0;
  bool stopped_on_plateau = false;
};

// Train/validation images: the PPM/PNG files of data_dir, or the
// synthetic corpus.
struct Dataset {
  std::vector<Tensor> train;
  std::vector<Tensor> val;  // crop_size x crop_size centre crops
};
Dataset load_dataset(const TrainConfig& cfg);

// Mean objective over images with noise drawn from a fixed seed.
double validation_loss(const Codec& codec, const VisionProxy& proxy,
                       const std::vector<Tensor>& images, double lambda, double gamma,
                       std::uint64_t noise_seed);

class Trainer {
 public:
  using StepHook = std::function<void(std::size_t step, const Codec& codec)>;

  Trainer(TrainConfig cfg, Codec& codec);

  // Called after every optimiser step.
  void on_step(StepHook hook) { hook_ = std::move(hook); }

  // Runs until max_steps or the plateau schedule stops. A non-finite loss
  // restores the last parameters that produced a finite loss and throws.
  TrainResult run(const Dataset& data);

 private:
  TrainConfig cfg_;
  Codec& codec_;
  StepHook hook_;
};

// Builds a codec from cfg.seed and trains it on load_dataset(cfg).
struct TrainedModel {
  Codec codec;
  TrainResult result;
};
TrainedModel train(const TrainConfig& cfg);

// Deep copy with independent parameter storage.
Codec clone_codec(const Codec& codec);

}  // namespace ldlc

#endif  // LDLC_TRAIN_HPP_
