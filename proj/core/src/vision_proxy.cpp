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

#include "ldlc/vision_proxy.hpp"

#include <cmath>
#include <string>

#include "ldlc/error.hpp"
#include "ldlc/ops.hpp"
#include "ldlc/rng.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "vision-proxy";

}  // namespace

VisionProxy::VisionProxy(std::size_t feature_channels, std::uint64_t seed) : seed_(seed) {
  if (feature_channels == 0) throw Error(kModule, "feature channel count must be positive");
  Rng rng(seed);
  const std::array<std::size_t, 4> widths{3, 16, 32, feature_channels};
  for (std::size_t i = 0; i < 3; ++i) {
    Conv2dLayer layer(widths[i], widths[i + 1], 3, 2, 1, rng);
    // He-scaled normal weights keep the features at unit order of magnitude.
    const double std_dev = std::sqrt(2.0 / static_cast<double>(widths[i] * 9));
    for (auto& w : layer.weight.mutable_data()) w = std_dev * rng.normal();
    for (auto& b : layer.bias.mutable_data()) b = rng.uniform(-0.1, 0.1);
    layer.weight.set_requires_grad(false);
    layer.bias.set_requires_grad(false);
    front_[i] = layer;
  }
  head_.resize(kOutputs * feature_channels);
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(feature_channels));
  for (auto& w : head_) w = head_scale * rng.normal();
}

Tensor VisionProxy::extract_features(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != 3) {
    throw Error(kModule, "expected a 3 x H x W image, got " + shape_string(x.shape()));
  }
  if (x.dim(1) % 8 != 0 || x.dim(2) % 8 != 0) {
    throw Error(kModule, "image size " + std::to_string(x.dim(1)) + "x" +
                             std::to_string(x.dim(2)) + " is not divisible by 8");
  }
  NoGradGuard no_grad;
  Tensor h = x;
  for (const auto& layer : front_) h = ops::leaky_relu(layer.forward(h), kLeakySlope);
  return h;
}

std::array<double, VisionProxy::kOutputs> VisionProxy::task_head(const Tensor& features) const {
  const std::size_t c = feature_channels();
  if (features.rank() != 3 || features.dim(0) != c) {
    throw Error(kModule, "task head expects " + std::to_string(c) + " feature channels, got " +
                             shape_string(features.shape()));
  }
  const std::size_t plane = features.dim(1) * features.dim(2);
  const auto f = features.data();
  std::vector<double> pooled(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += f[ch * plane + i];
    pooled[ch] = acc / static_cast<double>(plane);
  }
  std::array<double, kOutputs> out{};
  for (std::size_t o = 0; o < kOutputs; ++o) {
    for (std::size_t ch = 0; ch < c; ++ch) out[o] += head_[o * c + ch] * pooled[ch];
  }
  return out;
}

double VisionProxy::task_error(const Tensor& s_hat, const Tensor& s) const {
  if (s_hat.shape() != s.shape()) {
    throw Error(kModule, "feature shape mismatch " + shape_string(s_hat.shape()) + " vs " +
                             shape_string(s.shape()));
  }
  const auto a = task_head(s_hat);
  const auto b = task_head(s);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < kOutputs; ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  if (den == 0.0) throw Error(kModule, "task output of the reference features is zero");
  return std::sqrt(num / den);
}

}  // namespace ldlc
