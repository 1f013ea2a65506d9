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

#include "ldlc/ops.hpp"

#include <cmath>
#include <string>

#include "ldlc/error.hpp"

namespace ldlc::ops {

namespace {

constexpr const char* kModule = "tensor-autodiff";

template <typename Forward, typename Derivative>
Tensor unary(std::string_view name, const Tensor& a, Forward f, Derivative df) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return make_result(name, a.shape(), std::move(out), {a},
                     [a, df](std::span<const double> g) {
                       auto ga = grad_buffer(a);
                       if (ga.empty()) return;
                       const auto x = a.data();
                       for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * df(x[i]);
                     });
}

enum class Broadcast { kNone, kLeft, kRight };

Broadcast check_binary(std::string_view name, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (b.numel() == 1) return Broadcast::kRight;
  if (a.numel() == 1) return Broadcast::kLeft;
  throw Error(kModule, std::string(name) + ": shape mismatch " + shape_string(a.shape()) +
                           " vs " + shape_string(b.shape()));
}

// f(x, y) with partials dfx(x, y), dfy(x, y).
template <typename F, typename Dx, typename Dy>
Tensor binary(std::string_view name, const Tensor& a, const Tensor& b, F f, Dx dfx, Dy dfy) {
  const auto mode = check_binary(name, a, b);
  const Shape shape = mode == Broadcast::kLeft ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  const auto x = a.data();
  const auto y = b.data();
  auto xi = [mode, x](std::size_t i) { return mode == Broadcast::kLeft ? x[0] : x[i]; };
  auto yi = [mode, y](std::size_t i) { return mode == Broadcast::kRight ? y[0] : y[i]; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(xi(i), yi(i));
  return make_result(name, shape, std::move(out), {a, b},
                     [a, b, mode, n, dfx, dfy](std::span<const double> g) {
                       const auto x = a.data();
                       const auto y = b.data();
                       auto xv = [&](std::size_t i) { return mode == Broadcast::kLeft ? x[0] : x[i]; };
                       auto yv = [&](std::size_t i) { return mode == Broadcast::kRight ? y[0] : y[i]; };
                       auto ga = grad_buffer(a);
                       auto gb = grad_buffer(b);
                       for (std::size_t i = 0; i < n; ++i) {
                         if (!ga.empty()) ga[mode == Broadcast::kLeft ? 0 : i] += g[i] * dfx(xv(i), yv(i));
                         if (!gb.empty()) gb[mode == Broadcast::kRight ? 0 : i] += g[i] * dfy(xv(i), yv(i));
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; },
                [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; },
                [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; },
                [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary("div", a, b, [](double x, double y) { return x / y; },
                [](double, double y) { return 1.0 / y; },
                [](double x, double y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary("add_scalar", a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

Tensor scale(const Tensor& a, double c) {
  return unary("scale", a, [c](double x) { return c * x; }, [c](double) { return c; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor pow(const Tensor& a, double p) {
  return unary("pow", a, [p](double x) { return std::pow(x, p); },
               [p](double x) { return p * std::pow(x, p - 1.0); });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw Error(kModule, "log of non-positive value " + std::to_string(v));
  }
  return unary("log", a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double x) { return 0.5 / std::sqrt(x); });
}

Tensor abs(const Tensor& a) {
  return unary("abs", a, [](double x) { return std::abs(x); },
               [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary("leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary("clamp_min", a, [floor](double x) { return x > floor ? x : floor; },
               [floor](double x) { return x > floor ? 1.0 : 0.0; });
}

Tensor lower_bound(const Tensor& a, double bound) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > bound ? x[i] : bound;
  return make_result("lower_bound", a.shape(), std::move(out), {a},
                     [a, bound](std::span<const double> g) {
                       auto ga = grad_buffer(a);
                       if (ga.empty()) return;
                       const auto x = a.data();
                       for (std::size_t i = 0; i < x.size(); ++i) {
                         if (x[i] >= bound || g[i] < 0.0) ga[i] += g[i];
                       }
                     });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("sum", Shape{}, {s}, {a}, [a](std::span<const double> g) {
    auto ga = grad_buffer(a);
    for (auto& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("mean", Shape{}, {s / n}, {a}, [a, n](std::span<const double> g) {
    auto ga = grad_buffer(a);
    for (auto& v : ga) v += g[0] / n;
  });
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || a.rank() != b.rank() ||
      !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw Error(kModule, "concat_channels: incompatible shapes " + shape_string(a.shape()) +
                             " and " + shape_string(b.shape()));
  }
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<double> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return make_result("concat_channels", std::move(shape), std::move(out), {a, b},
                     [a, b](std::span<const double> g) {
                       accumulate_grad(a, g.subspan(0, a.numel()));
                       accumulate_grad(b, g.subspan(a.numel(), b.numel()));
                     });
}

Tensor slice_channels(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() != 3 || begin >= end || end > a.dim(0)) {
    throw Error(kModule, "slice_channels: bad range for shape " + shape_string(a.shape()));
  }
  const std::size_t plane = a.dim(1) * a.dim(2);
  std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(begin * plane),
                          a.data().begin() + static_cast<std::ptrdiff_t>(end * plane));
  return make_result("slice_channels", Shape{end - begin, a.dim(1), a.dim(2)}, std::move(out),
                     {a}, [a, begin, plane](std::span<const double> g) {
                       auto ga = grad_buffer(a);
                       if (ga.empty()) return;
                       for (std::size_t i = 0; i < g.size(); ++i) ga[begin * plane + i] += g[i];
                     });
}

Tensor crop_spatial(const Tensor& a, std::size_t height, std::size_t width) {
  if (a.rank() != 3 || height == 0 || width == 0 || height > a.dim(1) || width > a.dim(2)) {
    throw Error(kModule, "crop_spatial: cannot crop " + shape_string(a.shape()) + " to " +
                             std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  std::vector<double> out(c * height * width);
  const auto src = a.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        out[(ch * height + i) * width + j] = src[(ch * h + i) * w + j];
      }
    }
  }
  return make_result("crop_spatial", Shape{c, height, width}, std::move(out), {a},
                     [a, c, h, w, height, width](std::span<const double> g) {
                       auto ga = grad_buffer(a);
                       if (ga.empty()) return;
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         for (std::size_t i = 0; i < height; ++i) {
                           for (std::size_t j = 0; j < width; ++j) {
                             ga[(ch * h + i) * w + j] += g[(ch * height + i) * width + j];
                           }
                         }
                       }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw Error(kModule, "reshape: cannot view " + shape_string(a.shape()) + " as " +
                             shape_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {a},
                     [a](std::span<const double> g) { accumulate_grad(a, g); });
}

namespace {

double scalar_attr(const Attrs& attrs, const std::string& op, const std::string& key) {
  auto it = attrs.find(key);
  if (it == attrs.end() || !std::holds_alternative<double>(it->second)) {
    throw Error(kModule, op + ": missing numeric attribute '" + key + "'");
  }
  return std::get<double>(it->second);
}

void expect_arity(const std::string& op, const std::vector<Tensor>& inputs, std::size_t n) {
  if (inputs.size() != n) {
    throw Error(kModule, op + ": expected " + std::to_string(n) + " inputs, got " +
                             std::to_string(inputs.size()));
  }
}

}  // namespace

Tensor forward_op(const std::string& name, const std::vector<Tensor>& inputs,
                  const Attrs& attrs) {
  using Binary = Tensor (*)(const Tensor&, const Tensor&);
  using Unary = Tensor (*)(const Tensor&);
  static const std::map<std::string, Binary> kBinary = {
      {"add", &add}, {"sub", &sub}, {"mul", &mul}, {"div", &div},
      {"concat_channels", &concat_channels}};
  static const std::map<std::string, Unary> kUnary = {
      {"exp", &exp}, {"log", &log}, {"sqrt", &sqrt}, {"abs", &abs},
      {"sum", &sum}, {"mean", &mean}};

  if (auto it = kBinary.find(name); it != kBinary.end()) {
    expect_arity(name, inputs, 2);
    return it->second(inputs[0], inputs[1]);
  }
  if (auto it = kUnary.find(name); it != kUnary.end()) {
    expect_arity(name, inputs, 1);
    return it->second(inputs[0]);
  }
  if (name == "pow") {
    expect_arity(name, inputs, 1);
    return pow(inputs[0], scalar_attr(attrs, name, "exponent"));
  }
  if (name == "clamp_min") {
    expect_arity(name, inputs, 1);
    return clamp_min(inputs[0], scalar_attr(attrs, name, "min"));
  }
  if (name == "reshape") {
    expect_arity(name, inputs, 1);
    auto it = attrs.find("shape");
    if (it == attrs.end() || !std::holds_alternative<Shape>(it->second)) {
      throw Error(kModule, "reshape: missing 'shape' attribute");
    }
    return reshape(inputs[0], std::get<Shape>(it->second));
  }
  throw Error(kModule, "unknown op '" + name + "'");
}

}  // namespace ldlc::ops
