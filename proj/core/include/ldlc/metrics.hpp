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

#ifndef LDLC_METRICS_HPP_
#define LDLC_METRICS_HPP_

#include <array>
#include <limits>

#include "ldlc/tensor.hpp"

namespace ldlc {

// Returned by psnr() for identical inputs.
inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

// 10 log10(1 / MSE) for tensors on [0, 1].
double psnr(const Tensor& x, const Tensor& y);

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

// Five-scale MS-SSIM of C x H x W tensors on [0, 1], averaged over
// channels. Gaussian window 11 x 11 with sigma 1.5, valid filtering, 2x2
// average pooling between scales. At scales where an image side is shorter
// than the window, the window shrinks to the largest odd size that fits.
double ms_ssim(const Tensor& x, const Tensor& y);

}  // namespace ldlc

#endif  // LDLC_METRICS_HPP_
