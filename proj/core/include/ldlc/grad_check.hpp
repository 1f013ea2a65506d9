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

#ifndef LDLC_GRAD_CHECK_HPP_
#define LDLC_GRAD_CHECK_HPP_

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "ldlc/tensor.hpp"

namespace ldlc {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-6;
  // (parameter index, element index) pairs; empty means every element.
  std::vector<std::pair<std::size_t, std::size_t>> entries;
};

// Compares the reverse-mode gradient of a scalar function against central
// differences. The relative error of entry i is
//   |a_i - n_i| / max(|a_i|, |n_i|, 1e-3 * max_j |n_j|, 1e-12)
// so that entries whose true derivative is ~0 are judged on the scale of the
// gradient as a whole. Throws on non-finite function values.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<Tensor>& params,
                           const GradCheckOptions& options = {});

// Single-input convenience form: f is evaluated at a leaf copy of x.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double eps = 1e-5, double tol = 1e-6);

}  // namespace ldlc

#endif  // LDLC_GRAD_CHECK_HPP_
