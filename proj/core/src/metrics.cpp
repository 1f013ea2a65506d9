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

#include "ldlc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ldlc/error.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "harness-cli";
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<double> v;
  double at(std::size_t i, std::size_t j) const { return v[i * w + j]; }
};

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (auto& e : g) e /= total;
  return g;
}

// Separable valid-mode filtering.
Plane filter(const Plane& p, const std::vector<double>& g) {
  const std::size_t k = g.size();
  Plane rows{p.h, p.w - k + 1, {}};
  rows.v.resize(rows.h * rows.w);
  for (std::size_t i = 0; i < rows.h; ++i) {
    for (std::size_t j = 0; j < rows.w; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += g[t] * p.at(i, j + t);
      rows.v[i * rows.w + j] = acc;
    }
  }
  Plane out{p.h - k + 1, rows.w, {}};
  out.v.resize(out.h * out.w);
  for (std::size_t i = 0; i < out.h; ++i) {
    for (std::size_t j = 0; j < out.w; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += g[t] * rows.at(i + t, j);
      out.v[i * out.w + j] = acc;
    }
  }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out{a.h, a.w, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

// Mean SSIM and mean contrast-structure term of one plane pair.
std::pair<double, double> ssim_terms(const Plane& x, const Plane& y) {
  std::size_t k = 11;
  const std::size_t side = std::min(x.h, x.w);
  if (side < k) k = side % 2 == 1 ? side : side - 1;
  const auto g = gaussian_window(k, 1.5);
  const Plane mx = filter(x, g), my = filter(y, g);
  const Plane sxx = filter(product(x, x), g);
  const Plane syy = filter(product(y, y), g);
  const Plane sxy = filter(product(x, y), g);
  double ssim = 0.0, cs = 0.0;
  for (std::size_t i = 0; i < mx.v.size(); ++i) {
    const double ux = mx.v[i], uy = my.v[i];
    const double vx = sxx.v[i] - ux * ux;
    const double vy = syy.v[i] - uy * uy;
    const double cov = sxy.v[i] - ux * uy;
    const double c = (2.0 * cov + kC2) / (vx + vy + kC2);
    cs += c;
    ssim += (2.0 * ux * uy + kC1) / (ux * ux + uy * uy + kC1) * c;
  }
  const auto n = static_cast<double>(mx.v.size());
  return {ssim / n, cs / n};
}

// 2x2 average pooling; odd sides get one zero-padded border on each end,
// counted in the average.
Plane downsample(const Plane& p) {
  const std::size_t ph = p.h % 2, pw = p.w % 2;
  Plane out{(p.h + 2 * ph) / 2, (p.w + 2 * pw) / 2, {}};
  out.v.assign(out.h * out.w, 0.0);
  for (std::size_t i = 0; i < out.h; ++i) {
    for (std::size_t j = 0; j < out.w; ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t b = 0; b < 2; ++b) {
          const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(2 * i + a) - static_cast<std::ptrdiff_t>(ph);
          const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(2 * j + b) - static_cast<std::ptrdiff_t>(pw);
          if (r >= 0 && c >= 0 && r < static_cast<std::ptrdiff_t>(p.h) &&
              c < static_cast<std::ptrdiff_t>(p.w)) {
            acc += p.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
          }
        }
      }
      out.v[i * out.w + j] = acc / 4.0;
    }
  }
  return out;
}

void check_pair(const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape()) {
    throw Error(kModule, "metric inputs differ in shape: " + shape_string(x.shape()) + " vs " +
                             shape_string(y.shape()));
  }
  if (x.numel() == 0) throw Error(kModule, "metric inputs are empty");
}

}  // namespace

double psnr(const Tensor& x, const Tensor& y) {
  check_pair(x, y);
  double sq = 0.0;
  const auto a = x.data(), b = y.data();
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = sq / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrInfinite;
  return -10.0 * std::log10(mse);
}

double ms_ssim(const Tensor& x, const Tensor& y) {
  check_pair(x, y);
  if (x.rank() != 3) throw Error(kModule, "ms_ssim expects C x H x W tensors");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (std::min(h, w) < 16) {
    throw Error(kModule, "ms_ssim needs both sides >= 16 for five scales, got " +
                             std::to_string(h) + "x" + std::to_string(w));
  }
  double total = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    Plane px{h, w, std::vector<double>(x.data().begin() + ch * h * w, x.data().begin() + (ch + 1) * h * w)};
    Plane py{h, w, std::vector<double>(y.data().begin() + ch * h * w, y.data().begin() + (ch + 1) * h * w)};
    double score = 1.0;
    for (std::size_t level = 0; level < kMsSsimWeights.size(); ++level) {
      const auto [ssim, cs] = ssim_terms(px, py);
      const bool last = level + 1 == kMsSsimWeights.size();
      const double term = std::max(last ? ssim : cs, 0.0);
      score *= std::pow(term, kMsSsimWeights[level]);
      if (!last) {
        px = downsample(px);
        py = downsample(py);
      }
    }
    total += score;
  }
  return total / static_cast<double>(c);
}

}  // namespace ldlc
