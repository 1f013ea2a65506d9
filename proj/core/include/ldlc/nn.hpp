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

#ifndef LDLC_NN_HPP_
#define LDLC_NN_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "ldlc/rng.hpp"
#include "ldlc/tensor.hpp"

namespace ldlc {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

namespace nn {

// Output extent of a strided cross-correlation: floor((in + 2p - k) / s) + 1.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding);
// Output extent of a transposed convolution: (in - 1) s - 2p + k + output_padding.
std::size_t deconv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding, std::size_t output_padding);

// x: C_in x H x W, weight: C_out x C_in x k x k, bias: C_out.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

// x: C_in x H x W, weight: C_in x C_out x k x k, bias: C_out. This is the
// adjoint of conv2d with the same weight, stride and padding.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        std::size_t stride, std::size_t padding, std::size_t output_padding);

// out_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2), per spatial location.
// With inverse = true the normaliser multiplies instead (IGDN).
Tensor gdn(const Tensor& x, const Tensor& beta, const Tensor& gamma, bool inverse);

// Separable Keys cubic (a = -0.5) resampling with half-pixel centres and
// clamped borders, no antialiasing. Not differentiable.
Tensor resize_bicubic(const Tensor& x, std::size_t out_h, std::size_t out_w);

// Keys cubic convolution kernel with a = -0.5.
double cubic_kernel(double t);

}  // namespace nn

class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
              std::size_t stride, std::size_t padding, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t kernel() const { return weight.dim(2); }

  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

class Deconv2dLayer {
 public:
  Deconv2dLayer() = default;
  Deconv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                std::size_t stride, std::size_t padding, std::size_t output_padding, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

  std::size_t in_channels() const { return weight.dim(0); }
  std::size_t out_channels() const { return weight.dim(1); }

  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t output_padding = 0;
};

// GDN / IGDN with positivity enforced by reparameterisation: the stored
// values are unconstrained and mapped through max(v, bound)^2 - pedestal.
class GdnLayer {
 public:
  static constexpr double kBetaMin = 1e-6;
  static constexpr double kPedestal = 0x1.0p-36;
  static constexpr double kGammaInit = 0.1;

  GdnLayer() = default;
  GdnLayer(std::size_t channels, bool inverse);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Tensor beta() const;
  Tensor gamma() const;

  // Sets the raw parameters so that beta() and gamma() equal the given
  // effective values (clamped to their bounds).
  void set_effective(const std::vector<double>& beta, const std::vector<double>& gamma);

  std::size_t channels() const { return beta_raw.numel(); }

  Tensor beta_raw;
  Tensor gamma_raw;
  bool inverse = false;
};

}  // namespace ldlc

#endif  // LDLC_NN_HPP_
