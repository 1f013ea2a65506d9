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

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>

#include "ldlc/error.hpp"
#include "ldlc/grad_check.hpp"
#include "ldlc/nn.hpp"
#include "ldlc/ops.hpp"

namespace ldlc {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (auto& e : v) e = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

// Brute-force cross-correlation, written independently of the library.
std::vector<double> direct_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                                std::size_t pad) {
  const std::size_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(co * oh * ow);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double acc = b[o];
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) {
              const long yy = static_cast<long>(r * stride + u) - static_cast<long>(pad);
              const long xx = static_cast<long>(c * stride + v) - static_cast<long>(pad);
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
              acc += w[((o * ci + i) * k + u) * k + v] * x[(i * h + yy) * wd + xx];
            }
        out[(o * oh + r) * ow + c] = acc;
      }
  return out;
}

TEST(ConvTest, OutputSizeFormulas) {
  EXPECT_EQ(nn::conv_output_size(16, 5, 2, 2), 8u);
  EXPECT_EQ(nn::conv_output_size(7, 3, 2, 1), 4u);
  EXPECT_EQ(nn::deconv_output_size(4, 5, 2, 2, 1), 8u);
  EXPECT_EQ(nn::deconv_output_size(5, 5, 1, 2, 0), 5u);
}

TEST(ConvTest, IdentityKernel) {
  Rng rng(1);
  Tensor x = random_tensor({1, 5, 5}, rng);
  Tensor y = nn::conv2d(x, Tensor({1, 1, 1, 1}, {1.0}), Tensor({1}, {0.0}), 1, 0);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
            std::vector<double>(x.data().begin(), x.data().end()));
}

TEST(ConvTest, ZeroKernelGivesBias) {
  Rng rng(2);
  Tensor x = random_tensor({2, 6, 6}, rng);
  Tensor y = nn::conv2d(x, Tensor::zeros({3, 2, 3, 3}), Tensor({3}, {0.5, -1.0, 2.0}), 1, 1);
  ASSERT_EQ(y.shape(), (Shape{3, 6, 6}));
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], (std::array<double, 3>{0.5, -1.0, 2.0})[i / 36]);
}

TEST(ConvTest, MatchesDirectLoopOracle) {
  // Fixed 3x3 kernel on a fixed 1x5x5 input.
  std::vector<double> xv(25), wv{1, 0, -1, 2, 0.5, -2, 1, 0, -1};
  for (std::size_t i = 0; i < 25; ++i) xv[i] = static_cast<double>(i % 7) - 3.0 + 0.25 * static_cast<double>(i / 5);
  Tensor x({1, 5, 5}, xv), w({1, 1, 3, 3}, wv), b({1}, {0.125});
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      const Tensor y = nn::conv2d(x, w, b, stride, pad);
      const auto oracle = direct_conv(x, w, b, stride, pad);
      ASSERT_EQ(y.numel(), oracle.size());
      for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(y[i], oracle[i], 1e-12);
    }
  }
  // One hand-computed corner with pad 1: only the 2x2 lower-right kernel
  // taps overlap the input.
  const Tensor y = nn::conv2d(x, w, b, 1, 1);
  EXPECT_NEAR(y[0], 0.125 + 0.5 * xv[0] + (-2.0) * xv[1] + 0.0 * xv[5] + (-1.0) * xv[6], 1e-12);
}

TEST(ConvTest, RandomMultiChannelAgainstOracle) {
  Rng rng(3);
  Tensor x = random_tensor({3, 11, 9}, rng), w = random_tensor({4, 3, 5, 5}, rng), b = random_tensor({4}, rng);
  const Tensor y = nn::conv2d(x, w, b, 2, 2);
  const auto oracle = direct_conv(x, w, b, 2, 2);
  ASSERT_EQ(y.shape(), (Shape{4, 6, 5}));
  for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(y[i], oracle[i], 1e-12);
}

TEST(ConvTest, ErrorsOnChannelMismatchAndEmptyOutput) {
  EXPECT_THROW(nn::conv2d(Tensor::zeros({2, 5, 5}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), 1, 0), Error);
  EXPECT_THROW(nn::conv2d(Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), Tensor::zeros({1}), 1, 0), Error);
}

TEST(ConvTest, GradCheck) {
  Rng rng(4);
  Tensor x = random_tensor({1, 5, 5}, rng, -1, 1, true);
  Tensor w = random_tensor({2, 1, 3, 3}, rng, -1, 1, true);
  Tensor b = random_tensor({2}, rng, -1, 1, true);
  Tensor t = random_tensor({2, 3, 3}, rng);
  const auto report = grad_check([&] { return ops::sum(ops::mul(nn::conv2d(x, w, b, 2, 1), t)); },
                                 {x, w, b}, {1e-6, 1e-4, {}});
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(DeconvTest, IdentityKernel) {
  Rng rng(5);
  Tensor x = random_tensor({1, 4, 4}, rng);
  Tensor y = nn::conv_transpose2d(x, Tensor({1, 1, 1, 1}, {1.0}), Tensor({1}, {0.0}), 1, 0, 0);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(DeconvTest, StrideTwoShape) {
  Rng rng(6);
  Deconv2dLayer layer(1, 1, 5, 2, 2, 1, rng);
  EXPECT_EQ(layer.forward(Tensor::zeros({1, 4, 4})).shape(), (Shape{1, 8, 8}));
}

TEST(DeconvTest, AdjointOfConv) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t ci = 3, co = 2, k = 5, s = 2, p = 2;
    Tensor w = random_tensor({co, ci, k, k}, rng);
    Tensor x = random_tensor({ci, 8, 8}, rng);
    Tensor y = random_tensor({co, 4, 4}, rng);
    // conv weight C_out x C_in x k x k is a deconv weight with C_in = co.
    const double lhs = dot(nn::conv2d(x, w, Tensor::zeros({co}), s, p), y);
    const double rhs = dot(x, nn::conv_transpose2d(y, w, Tensor::zeros({ci}), s, p, 1));
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(DeconvTest, GradCheck) {
  Rng rng(7);
  Tensor x = random_tensor({2, 3, 3}, rng, -1, 1, true);
  Tensor w = random_tensor({2, 1, 5, 5}, rng, -1, 1, true);
  Tensor b = random_tensor({1}, rng, -1, 1, true);
  Tensor t = random_tensor({1, 6, 6}, rng);
  const auto report = grad_check(
      [&] { return ops::sum(ops::mul(nn::conv_transpose2d(x, w, b, 2, 2, 1), t)); }, {x, w, b},
      {1e-6, 1e-4, {}});
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(DeconvTest, StrideRoundTripPreservesSize) {
  Rng rng(8);
  Conv2dLayer down(1, 1, 5, 2, 2, rng);
  Deconv2dLayer up(1, 1, 5, 2, 2, 1, rng);
  for (std::size_t h = 8; h <= 64; h += 2) {
    for (std::size_t w = 8; w <= 64; w += 6) {
      const Tensor y = up.forward(down.forward(Tensor::zeros({1, h, w})));
      EXPECT_EQ(y.dim(1), h);
      EXPECT_EQ(y.dim(2), w);
    }
  }
}

TEST(GdnTest, IdentityWhenGammaZero) {
  Rng rng(9);
  Tensor x = random_tensor({3, 4, 4}, rng, -3, 3);
  for (bool inverse : {false, true}) {
    const Tensor y = nn::gdn(x, Tensor::full({3}, 1.0), Tensor::zeros({3, 3}), inverse);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y[i], x[i], 1e-15);
  }
}

TEST(GdnTest, ScalarClosedForm) {
  const Tensor y = nn::gdn(Tensor({1, 1, 1}, {2.0}), Tensor({1}, {1.0}), Tensor({1, 1}, {1.0}), false);
  EXPECT_NEAR(y.item(), 2.0 / std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(y.item(), 0.894427, 1e-6);
  const Tensor z = nn::gdn(Tensor({1, 1, 1}, {2.0}), Tensor({1}, {1.0}), Tensor({1, 1}, {1.0}), true);
  EXPECT_NEAR(z.item(), 2.0 * std::sqrt(5.0), 1e-14);
}

TEST(GdnTest, OddWithDiagonalGamma) {
  Rng rng(10);
  Tensor x = random_tensor({3, 2, 2}, rng, -2, 2);
  Tensor beta({3}, {0.5, 1.0, 2.0});
  Tensor gamma({3, 3}, {0.3, 0, 0, 0, 0.7, 0, 0, 0, 0.1});
  const Tensor a = nn::gdn(x, beta, gamma, false);
  const Tensor b = nn::gdn(ops::neg(x), beta, gamma, false);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], -b[i]);
}

TEST(GdnTest, LayerReparameterisationAndBound) {
  GdnLayer layer(4, false);
  Rng rng(11);
  std::vector<double> gamma(16);
  for (auto& g : gamma) g = rng.uniform(0.0, 2.0);
  layer.set_effective({1e-9, 0.5, 1.0, 3.0}, gamma);
  const Tensor beta = layer.beta();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_GE(beta[i], GdnLayer::kBetaMin * (1 - 1e-12));
  const Tensor gamma_eff = layer.gamma();
  for (double g : gamma_eff.data()) EXPECT_GE(g, 0.0);
  Tensor x = random_tensor({4, 3, 3}, rng, -100, 100);
  const Tensor y = layer.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_TRUE(std::isfinite(y[i]));
    EXPECT_LE(std::abs(y[i]), std::abs(x[i]) / std::sqrt(GdnLayer::kBetaMin) * (1 + 1e-12));
  }
}

TEST(GdnTest, GradCheckForwardAndInverse) {
  for (bool inverse : {false, true}) {
    Rng rng(12);
    GdnLayer layer(4, inverse);
    std::vector<double> gamma(16);
    for (auto& g : gamma) g = rng.uniform(0.05, 0.5);
    layer.set_effective({0.8, 1.1, 1.5, 0.6}, gamma);
    Tensor x = random_tensor({4, 3, 3}, rng, -1, 1, true);
    Tensor t = random_tensor({4, 3, 3}, rng);
    const auto report = grad_check([&] { return ops::sum(ops::mul(layer.forward(x), t)); },
                                   {x, layer.beta_raw, layer.gamma_raw}, {1e-6, 1e-4, {}});
    EXPECT_TRUE(report.passed) << "inverse " << inverse << " rel " << report.max_rel_error;
  }
}

TEST(ResizeTest, ConstantImageStaysConstant) {
  const Tensor y = nn::resize_bicubic(Tensor::full({3, 10, 14}, 0.3), 7, 5);
  ASSERT_EQ(y.shape(), (Shape{3, 7, 5}));
  for (double v : y.data()) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(ResizeTest, SameSizeIsIdentity) {
  Rng rng(13);
  Tensor x = random_tensor({3, 9, 6}, rng);
  const Tensor y = nn::resize_bicubic(x, 9, 6);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y[i], x[i], 1e-12);
}

// Direct evaluation of the Keys a = -0.5 kernel sum, independent of the
// library's kernel function.
double keys(double t) {
  t = std::abs(t);
  const double a = -0.5;
  if (t <= 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
  if (t < 2) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
  return 0.0;
}

TEST(ResizeTest, RowDownscaleMatchesKernelSum) {
  const std::vector<double> row{0, 1, 2, 3};
  const Tensor y = nn::resize_bicubic(Tensor({1, 1, 4}, row), 1, 2);
  for (std::size_t o = 0; o < 2; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * 2.0 - 0.5;
    const long base = static_cast<long>(std::floor(src));
    double acc = 0.0;
    for (long t = base - 1; t <= base + 2; ++t) {
      acc += keys(src - static_cast<double>(t)) * row[static_cast<std::size_t>(std::clamp(t, 0L, 3L))];
    }
    EXPECT_NEAR(y[o], acc, 1e-14);
  }
  EXPECT_NEAR(y[0], 0.4375, 1e-14);
  EXPECT_NEAR(y[1], 2.5625, 1e-14);
}

TEST(ResizeTest, RejectsDegenerateTarget) {
  EXPECT_THROW(nn::resize_bicubic(Tensor::zeros({3, 4, 4}), 0, 4), Error);
}

TEST(LayerTest, ConvLayerShapeAndGrad) {
  Rng rng(14);
  Conv2dLayer layer(3, 4, 5, 2, 2, rng);
  Tensor x = random_tensor({3, 8, 8}, rng, -1, 1, true);
  EXPECT_EQ(layer.forward(x).shape(), (Shape{4, 4, 4}));
  Tensor t = random_tensor({4, 4, 4}, rng);
  const auto report = grad_check([&] { return ops::sum(ops::mul(layer.forward(x), t)); },
                                 {x, layer.weight, layer.bias}, {1e-6, 1e-4, {}});
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

}  // namespace
}  // namespace ldlc
