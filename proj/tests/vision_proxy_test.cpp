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

#include <cmath>

#include "ldlc/error.hpp"
#include "ldlc/rng.hpp"
#include "ldlc/vision_proxy.hpp"

namespace ldlc {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& e : v) e = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

double norm(const std::array<double, VisionProxy::kOutputs>& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

TEST(VisionProxyTest, FeatureShape) {
  const VisionProxy proxy(64, 7);
  Rng rng(1);
  const Tensor s = proxy.extract_features(random_tensor({3, 256, 256}, rng));
  EXPECT_EQ(s.shape(), (Shape{64, 32, 32}));
  EXPECT_EQ(proxy.feature_channels(), 64u);
  for (double v : s.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(proxy.extract_features(random_tensor({3, 24, 40}, rng)).shape(), (Shape{64, 3, 5}));
}

TEST(VisionProxyTest, RejectsBadInput) {
  const VisionProxy proxy(16, 7);
  EXPECT_THROW(proxy.extract_features(Tensor::zeros({3, 20, 16})), Error);
  EXPECT_THROW(proxy.extract_features(Tensor::zeros({1, 16, 16})), Error);
  EXPECT_THROW(proxy.task_error(Tensor::zeros({16, 2, 2}), Tensor::zeros({16, 2, 3})), Error);
  EXPECT_THROW(proxy.task_head(Tensor::zeros({8, 2, 2})), Error);
}

TEST(VisionProxyTest, SeedDeterminesWeights) {
  Rng rng(2);
  const Tensor x = random_tensor({3, 64, 64}, rng);
  const Tensor a = VisionProxy(32, 11).extract_features(x);
  const Tensor b = VisionProxy(32, 11).extract_features(x);
  const Tensor c = VisionProxy(32, 12).extract_features(x);
  double same = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    same = std::max(same, std::abs(a[i] - b[i]));
    diff = std::max(diff, std::abs(a[i] - c[i]));
  }
  EXPECT_EQ(same, 0.0);
  EXPECT_GT(diff, 1e-3);
}

TEST(VisionProxyTest, TaskErrorFixedPoints) {
  const VisionProxy proxy(64, 7);
  Rng rng(3);
  const Tensor s = proxy.extract_features(random_tensor({3, 128, 128}, rng));
  EXPECT_EQ(proxy.task_error(s, s), 0.0);
  EXPECT_NEAR(proxy.task_error(Tensor::zeros(s.shape()), s), 1.0, 1e-12);
}

TEST(VisionProxyTest, HeadIsLinearAndPoolsSpatially) {
  const VisionProxy proxy(16, 5);
  Rng rng(4);
  const Tensor a = random_tensor({16, 4, 6}, rng, -1, 1);
  const Tensor b = random_tensor({16, 4, 6}, rng, -1, 1);
  std::vector<double> sum(a.numel()), flipped(a.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) sum[i] = 2.0 * a[i] - 3.0 * b[i];
  // Reverse each channel plane; the pooled mean does not change.
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t k = 0; k < 24; ++k) flipped[c * 24 + k] = a[c * 24 + 23 - k];
  const auto ha = proxy.task_head(a), hb = proxy.task_head(b);
  const auto hs = proxy.task_head(Tensor(a.shape(), sum));
  const auto hf = proxy.task_head(Tensor(a.shape(), flipped));
  for (std::size_t k = 0; k < VisionProxy::kOutputs; ++k) {
    EXPECT_NEAR(hs[k], 2.0 * ha[k] - 3.0 * hb[k], 1e-12);
    EXPECT_NEAR(hf[k], ha[k], 1e-12);
  }
  EXPECT_GT(norm(ha), 0.0);
}

TEST(VisionProxyTest, TaskErrorLinearForSmallPerturbations) {
  const VisionProxy proxy(32, 9);
  Rng rng(5);
  const Tensor s = proxy.extract_features(random_tensor({3, 64, 64}, rng));
  const Tensor dir = random_tensor(s.shape(), rng, -1, 1);
  auto err_at = [&](double eps) {
    std::vector<double> v(s.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = s[i] + eps * dir[i];
    return proxy.task_error(Tensor(s.shape(), v), s);
  };
  const double base = err_at(1e-3) / 1e-3;
  ASSERT_GT(base, 0.0);
  for (double eps : {1e-6, 1e-5, 1e-4, 5e-4, 1e-3}) EXPECT_NEAR(err_at(eps) / eps, base, 1e-6 * base);
}

}  // namespace
}  // namespace ldlc
