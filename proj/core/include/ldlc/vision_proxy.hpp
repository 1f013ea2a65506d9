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

#ifndef LDLC_VISION_PROXY_HPP_
#define LDLC_VISION_PROXY_HPP_

#include <array>
#include <cstddef>
#include <cstdint>

#include "ldlc/nn.hpp"
#include "ldlc/tensor.hpp"

namespace ldlc {

// Fixed, untrained stand-in for the front and back halves of a detector.
// The front maps a 3 x H x W image to C_s x H/8 x W/8 features through three
// stride-2 3x3 convolutions with leaky ReLU; the head averages the features
// spatially and applies a fixed 10 x C_s linear map with zero bias.
class VisionProxy {
 public:
  static constexpr std::size_t kOutputs = 10;
  static constexpr double kLeakySlope = 0.1;

  VisionProxy(std::size_t feature_channels, std::uint64_t seed);

  std::size_t feature_channels() const { return front_[2].out_channels(); }
  std::uint64_t seed() const { return seed_; }

  Tensor extract_features(const Tensor& x) const;
  std::array<double, kOutputs> task_head(const Tensor& features) const;
  // ||head(s_hat) - head(s)|| / ||head(s)||.
  double task_error(const Tensor& s_hat, const Tensor& s) const;

 private:
  std::uint64_t seed_;
  std::array<Conv2dLayer, 3> front_;
  std::vector<double> head_;  // kOutputs x C_s, row major
};

}  // namespace ldlc

#endif  // LDLC_VISION_PROXY_HPP_
