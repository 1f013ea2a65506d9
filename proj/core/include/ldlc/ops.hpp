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

#ifndef LDLC_OPS_HPP_
#define LDLC_OPS_HPP_

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "ldlc/tensor.hpp"

// Differentiable tensor operations. Binary ops take equal shapes, or one
// operand with a single element that is broadcast over the other; there is
// no general broadcasting.
namespace ldlc::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);

// max(a, floor) with a zero gradient where the floor is active.
Tensor clamp_min(const Tensor& a, double floor);
// max(a, bound), but the gradient also passes where the bound is active if it
// points towards increasing `a`; keeps reparameterised positive quantities
// from getting stuck at their bound.
Tensor lower_bound(const Tensor& a, double bound);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);

// Concatenates along the leading (channel) axis; trailing dims must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& a, Shape shape);
// Channel range [begin, end) of a rank-3 tensor.
Tensor slice_channels(const Tensor& a, std::size_t begin, std::size_t end);
// Top-left height x width window of a rank-3 tensor.
Tensor crop_spatial(const Tensor& a, std::size_t height, std::size_t width);

using AttrValue = std::variant<double, Shape>;
using Attrs = std::map<std::string, AttrValue>;

// Name-dispatched entry point over the core op set: add, sub, mul, div, pow
// ("exponent"), exp, log, sqrt, abs, sum, mean, concat_channels, reshape
// ("shape"), clamp_min ("min").
Tensor forward_op(const std::string& name, const std::vector<Tensor>& inputs,
                  const Attrs& attrs = {});

}  // namespace ldlc::ops

#endif  // LDLC_OPS_HPP_
