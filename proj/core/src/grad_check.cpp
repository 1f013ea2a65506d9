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

#include "ldlc/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "ldlc/error.hpp"

namespace ldlc {

namespace {

double evaluate(const std::function<Tensor()>& loss_fn) {
  NoGradGuard guard;
  const double v = loss_fn().item();
  if (!std::isfinite(v)) throw Error("tensor-autodiff", "grad_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<Tensor>& params,
                           const GradCheckOptions& options) {
  for (const auto& p : params) {
    if (!p.requires_grad()) {
      throw Error("tensor-autodiff", "grad_check: parameter does not require a gradient");
    }
  }
  auto entries = options.entries;
  if (entries.empty()) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (std::size_t i = 0; i < params[k].numel(); ++i) entries.emplace_back(k, i);
    }
  }

  std::vector<Tensor> handles = params;
  for (auto& p : handles) p.zero_grad();
  const Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) {
    throw Error("tensor-autodiff", "grad_check: non-finite function value");
  }
  backward(loss);

  std::vector<double> analytic(entries.size());
  std::vector<double> numeric(entries.size());
  for (std::size_t e = 0; e < entries.size(); ++e) {
    auto [k, i] = entries[e];
    auto& p = handles[k];
    analytic[e] = p.has_grad() ? p.grad()[i] : 0.0;
    auto data = p.mutable_data();
    const double orig = data[i];
    data[i] = orig + options.eps;
    const double fp = evaluate(loss_fn);
    data[i] = orig - options.eps;
    const double fm = evaluate(loss_fn);
    data[i] = orig;
    numeric[e] = (fp - fm) / (2.0 * options.eps);
  }

  double scale = 0.0;
  for (double n : numeric) scale = std::max(scale, std::abs(n));
  GradCheckReport report;
  report.checked = entries.size();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const double diff = std::abs(analytic[e] - numeric[e]);
    const double denom =
        std::max({std::abs(analytic[e]), std::abs(numeric[e]), 1e-3 * scale, 1e-12});
    report.max_abs_error = std::max(report.max_abs_error, diff);
    report.max_rel_error = std::max(report.max_rel_error, diff / denom);
  }
  report.passed = report.max_rel_error < options.tol;
  for (auto& p : handles) p.zero_grad();
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double eps, double tol) {
  Tensor leaf(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  GradCheckOptions options;
  options.eps = eps;
  options.tol = tol;
  return grad_check([&] { return f(leaf); }, {leaf}, options);
}

}  // namespace ldlc
