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

#include <climits>
#include <cmath>
#include <numbers>

#include "ldlc/entropy.hpp"
#include "ldlc/error.hpp"
#include "ldlc/grad_check.hpp"
#include "ldlc/ops.hpp"
#include "ldlc/optim.hpp"

namespace ldlc {
namespace {

// Independent normal CDF through erf rather than the library's erfc form.
double phi(double t) { return 0.5 * (1.0 + std::erf(t / std::sqrt(2.0))); }

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (auto& e : v) e = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

TEST(QuantizeTest, NoiseStaysWithinHalf) {
  Rng data(1), noise(2);
  Tensor y = random_tensor({4, 8, 8}, data, -20, 20);
  Tensor yt = quantize_noise(y, noise);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_LE(std::abs(yt[i] - y[i]), 0.5);
}

TEST(QuantizeTest, NoiseReproducibleBySeed) {
  Tensor y = Tensor::zeros({100});
  Rng a(7), b(7);
  const Tensor ya = quantize_noise(y, a), yb = quantize_noise(y, b);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(ya[i], yb[i]);
}

TEST(QuantizeTest, NoiseHasZeroMean) {
  Rng rng(3);
  const Tensor u = quantize_noise(Tensor::zeros({100000}), rng);
  double mean = 0.0;
  for (double v : u.data()) mean += v;
  EXPECT_NEAR(mean / 1e5, 0.0, 0.005);
}

TEST(QuantizeTest, NoiseGradientIsIdentity) {
  Rng data(4), noise(5);
  Tensor y = random_tensor({6}, data, -1, 1, true);
  Tensor w = random_tensor({6}, data, -1, 1);
  backward(ops::sum(ops::mul(quantize_noise(y, noise), w)));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(y.grad()[i], w[i]);
}

TEST(QuantizeTest, RoundHalvesAwayFromZero) {
  const Tensor r = quantize_round(Tensor({6}, {2.4, -0.5, 0.5, 2.5, -2.5, -2.6}));
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()),
            (std::vector<double>{2, -1, 1, 3, -3, -3}));
}

TEST(QuantizeTest, RoundIsIdempotent) {
  Rng rng(6);
  const Tensor once = quantize_round(random_tensor({200}, rng, -50, 50));
  const Tensor twice = quantize_round(once);
  for (std::size_t i = 0; i < 200; ++i) EXPECT_EQ(once[i], twice[i]);
}

TEST(GaussianTest, CentralBinMatchesErfOracle) {
  const Tensor p = likelihood_gaussian(Tensor({1}, {0.0}), Tensor({1}, {0.5}));
  EXPECT_NEAR(p.item(), 2.0 * phi(1.0) - 1.0, 1e-15);
  EXPECT_NEAR(p.item(), 0.682689, 1e-6);
}

TEST(GaussianTest, SymmetricInValue) {
  for (double sigma : {0.2, 1.0, 7.5}) {
    for (int k = 0; k <= 20; ++k) {
      const double a = likelihood_gaussian(Tensor({1}, {double(k)}), Tensor({1}, {sigma})).item();
      const double b = likelihood_gaussian(Tensor({1}, {double(-k)}), Tensor({1}, {sigma})).item();
      EXPECT_EQ(a, b);
    }
  }
}

TEST(GaussianTest, UnflooredMassSumsToOne) {
  std::vector<double> ks;
  for (int k = -1000; k <= 1000; ++k) ks.push_back(k);
  const Tensor p = gaussian_likelihood(Tensor({ks.size()}, ks), Tensor::full({ks.size()}, 3.0));
  double total = 0.0;
  for (double v : p.data()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(GaussianTest, FloorBoundsCostToSixteenBits) {
  const Tensor p = likelihood_gaussian(Tensor({3}, {40.0, -300.0, 1e6}), Tensor({3}, {0.11, 0.11, 1.0}));
  for (double v : p.data()) EXPECT_DOUBLE_EQ(v, kLikelihoodFloor);
  EXPECT_LE(rate_bits(p).item(), 3 * 16.0 + 1e-12);
}

TEST(GaussianTest, RejectsNonPositiveScale) {
  EXPECT_THROW(likelihood_gaussian(Tensor({1}, {0.0}), Tensor({1}, {0.0})), Error);
  EXPECT_THROW(likelihood_gaussian(Tensor({1}, {0.0}), Tensor({1}, {-1.0})), Error);
}

TEST(GaussianTest, RateGradientPassesCheck) {
  Rng rng(8);
  Tensor y = random_tensor({12}, rng, -3, 3, true);
  Tensor sigma = random_tensor({12}, rng, 0.3, 4.0, true);
  const auto report =
      grad_check([&] { return rate_bits(likelihood_gaussian(y, sigma)); }, {y, sigma}, {1e-6, 1e-4, {}});
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(RateTest, ClosedForms) {
  EXPECT_DOUBLE_EQ(rate_bits(Tensor::full({8}, 0.5)).item(), 8.0);
  EXPECT_DOUBLE_EQ(rate_bits(Tensor::full({5}, 1.0)).item(), 0.0);
  EXPECT_DOUBLE_EQ(rate_bits(Tensor({2}, {0.25, 0.5})).item(), 3.0);
}

TEST(RateTest, RejectsOutOfRangeLikelihoods) {
  EXPECT_THROW(rate_bits(Tensor({2}, {0.5, 0.0})), Error);
  EXPECT_THROW(rate_bits(Tensor({1}, {-0.1})), Error);
  EXPECT_THROW(rate_bits(Tensor({1}, {1.5})), Error);
}

TEST(FactorizedTest, FreshDensityIsProperOnIntegers) {
  Rng rng(9);
  FactorizedDensity d(3, rng);
  std::vector<double> v;
  for (std::size_t c = 0; c < 3; ++c)
    for (int k = -30; k <= 30; ++k) v.push_back(k);
  const Tensor p = d.likelihood_unfloored(Tensor({3, 61}, v));
  for (std::size_t c = 0; c < 3; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < 61; ++i) total += p[c * 61 + i];
    EXPECT_LE(total, 1.0 + 1e-6);
    EXPECT_GT(p[c * 61 + 30], 0.0);
    EXPECT_LT(p[c * 61 + 30], 1.0);
  }
}

TEST(FactorizedTest, CdfIsMonotone) {
  Rng rng(10);
  FactorizedDensity d(2, rng);
  // Perturb away from the symmetric start so the gates matter.
  for (Tensor t : d.parameters()) {
    for (auto& e : t.mutable_data()) e += rng.uniform(-0.5, 0.5);
  }
  for (std::size_t c = 0; c < 2; ++c) {
    double prev = d.cdf(c, -10.0);
    for (int i = 1; i <= 2000; ++i) {
      const double cur = d.cdf(c, -10.0 + 0.01 * i);
      EXPECT_LE(prev, cur);
      EXPECT_GT(cur, 0.0);
      EXPECT_LT(cur, 1.0);
      prev = cur;
    }
  }
}

TEST(FactorizedTest, LikelihoodIsCdfDifference) {
  Rng rng(11);
  FactorizedDensity d(2, rng);
  const Tensor p = d.likelihood_unfloored(Tensor({2, 3}, {-1.3, 0.0, 2.2, 0.4, -4.0, 7.0}));
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < 3; ++i) {
      const double v = std::array<double, 6>{-1.3, 0.0, 2.2, 0.4, -4.0, 7.0}[c * 3 + i];
      EXPECT_NEAR(p[c * 3 + i], d.cdf(c, v + 0.5) - d.cdf(c, v - 0.5), 1e-12);
    }
  }
}

TEST(FactorizedTest, GradCheckValuesAndParameters) {
  Rng rng(12);
  FactorizedDensity d(2, rng);
  for (Tensor t : d.parameters()) {
    for (auto& e : t.mutable_data()) e += rng.uniform(-0.3, 0.3);
  }
  Tensor v = random_tensor({2, 5}, rng, -3, 3, true);
  std::vector<Tensor> params = d.parameters();
  params.push_back(v);
  const auto report = grad_check([&] { return rate_bits(d.likelihood(v)); }, params, {1e-6, 1e-4, {}});
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(FactorizedTest, TrainingOnZerosLowersRate) {
  Rng rng(13);
  FactorizedDensity d(1, rng);
  const Tensor zeros = Tensor::zeros({1, 64});
  const double before = rate_bits(d.likelihood(zeros)).item();
  Adam opt(d.parameters(), 0.05);
  for (int step = 0; step < 100; ++step) {
    opt.zero_grad();
    backward(rate_bits(d.likelihood(zeros)));
    opt.step();
  }
  const double after = rate_bits(d.likelihood(zeros)).item();
  EXPECT_LT(after, before);
}

TEST(FactorizedTest, RejectsChannelMismatch) {
  Rng rng(14);
  FactorizedDensity d(3, rng);
  EXPECT_THROW(d.likelihood(Tensor::zeros({2, 4})), Error);
}

void expect_valid_cdf(const QuantizedCdf& q) {
  ASSERT_GE(q.cdf.size(), 3u);
  EXPECT_EQ(q.cdf.front(), 0u);
  EXPECT_EQ(q.cdf.back(), kProbabilityTotal);
  for (std::size_t i = 0; i + 1 < q.cdf.size(); ++i) EXPECT_LT(q.cdf[i], q.cdf[i + 1]);
}

TEST(QuantizePmfTest, TotalMassAndPositivity) {
  const std::vector<double> pmf{0.5, 0.25, 1e-9, 0.2499};
  const QuantizedCdf q = quantize_pmf(pmf, 1e-12, -2);
  expect_valid_cdf(q);
  EXPECT_EQ(q.symbol_count(), 5u);
  EXPECT_EQ(q.escape_symbol(), 4u);
  EXPECT_EQ(q.max_value(), 1);
}

TEST(QuantizePmfTest, RedistributesOverflow) {
  // Many tiny bins forced up to mass 1 push the total above 2^16.
  std::vector<double> pmf(200, 1e-9);
  pmf[100] = 1.0;
  expect_valid_cdf(quantize_pmf(pmf, 0.0, -100));
}

TEST(QuantizePmfTest, RejectsOverflowingSupport) {
  EXPECT_THROW(quantize_pmf(std::vector<double>(70000, 1.0 / 70000), 0.0, 0), Error);
  EXPECT_THROW(quantize_pmf({}, 0.0, 0), Error);
}

TEST(GaussianTableTest, ScaleTableGeometric) {
  const auto& t = GaussianConditional::scale_table();
  EXPECT_NEAR(t.front(), 0.11, 1e-15);
  EXPECT_NEAR(t.back(), 256.0, 1e-12);
  const double ratio = t[1] / t[0];
  for (std::size_t i = 1; i < t.size(); ++i) {
    EXPECT_GT(t[i], t[i - 1]);
    EXPECT_NEAR(t[i] / t[i - 1], ratio, 1e-12);
  }
}

TEST(GaussianTableTest, NearestIndexInLogDomain) {
  const auto& t = GaussianConditional::scale_table();
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(GaussianConditional::scale_index(t[i]), i);
  EXPECT_EQ(GaussianConditional::scale_index(1e-3), 0u);
  EXPECT_EQ(GaussianConditional::scale_index(1e6), 63u);
  const double mid = std::sqrt(t[10] * t[11]);
  EXPECT_EQ(GaussianConditional::scale_index(mid * 0.999), 10u);
  EXPECT_EQ(GaussianConditional::scale_index(mid * 1.001), 11u);
  EXPECT_THROW(GaussianConditional::scale_index(0.0), Error);
}

TEST(GaussianTableTest, SmallestScaleHasNarrowSupport) {
  const std::int32_t b = GaussianConditional::support_half_width(GaussianConditional::kScaleMin);
  EXPECT_LE(2 * b + 1, 5);
  // Tail bound oracle: mass beyond b is below the tail budget, beyond b - 1 is not.
  const auto tail = [](double b, double s) { return 2.0 * (1.0 - phi((b + 0.5) / s)); };
  for (double s : {0.11, 1.0, 13.0, 256.0}) {
    const std::int32_t w = GaussianConditional::support_half_width(s);
    EXPECT_LT(tail(w, s), kTailMass * (1 + 1e-6)) << s;
    if (w > 0) EXPECT_GE(tail(w - 1, s), kTailMass * (1 - 1e-6)) << s;
  }
}

TEST(GaussianTableTest, TablesValidAndCloseToModel) {
  const QuantizedCdfTable table = GaussianConditional::build_tables();
  ASSERT_EQ(table.contexts.size(), 64u);
  const auto& scales = GaussianConditional::scale_table();
  for (std::size_t i = 0; i < 64; ++i) {
    const QuantizedCdf& q = table.contexts[i];
    expect_valid_cdf(q);
    EXPECT_EQ(q.offset, -q.max_value());
    const double slack = static_cast<double>(q.symbol_count() + 1) / kProbabilityTotal;
    for (std::int32_t v = q.offset; v <= q.max_value(); ++v) {
      const std::size_t s = static_cast<std::size_t>(v - q.offset);
      const double mass = static_cast<double>(q.cdf[s + 1] - q.cdf[s]) / kProbabilityTotal;
      const double model = phi((v + 0.5) / scales[i]) - phi((v - 0.5) / scales[i]);
      EXPECT_NEAR(mass, model, slack);
    }
  }
}

TEST(GaussianTableTest, DeterministicAndSerialisable) {
  const QuantizedCdfTable a = GaussianConditional::build_tables();
  const QuantizedCdfTable b = GaussianConditional::build_tables();
  EXPECT_EQ(a.serialize(), b.serialize());
  EXPECT_EQ(QuantizedCdfTable::deserialize(a.serialize()), a);
}

TEST(TableSerialisationTest, RejectsMalformedBytes) {
  const auto bytes = GaussianConditional::build_tables().serialize();
  EXPECT_THROW(QuantizedCdfTable::deserialize(std::span(bytes).first(bytes.size() - 1)), Error);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(QuantizedCdfTable::deserialize(extra), Error);
}

TEST(FactorizedTableTest, RebuildFromCopiedParametersIsByteIdentical) {
  Rng rng(15);
  FactorizedDensity d(4, rng);
  for (Tensor t : d.parameters()) {
    for (auto& e : t.mutable_data()) e += rng.uniform(-0.2, 0.2);
  }
  Rng other_rng(99);
  FactorizedDensity copy(4, other_rng);
  const auto src = d.parameters();
  auto dst = copy.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::copy(src[i].data().begin(), src[i].data().end(), dst[i].mutable_data().begin());
  }
  const QuantizedCdfTable a = build_factorized_tables(d);
  EXPECT_EQ(a.serialize(), build_factorized_tables(copy).serialize());
  ASSERT_EQ(a.contexts.size(), 4u);
  for (const auto& q : a.contexts) expect_valid_cdf(q);
}

TEST(FactorizedTableTest, TableTracksDensity) {
  Rng rng(16);
  FactorizedDensity d(1, rng);
  const QuantizedCdfTable t = build_factorized_tables(d);
  const QuantizedCdf& q = t.contexts[0];
  const double slack = static_cast<double>(q.symbol_count() + 1) / kProbabilityTotal;
  for (std::int32_t v = q.offset; v <= q.max_value(); ++v) {
    const std::size_t s = static_cast<std::size_t>(v - q.offset);
    const double mass = static_cast<double>(q.cdf[s + 1] - q.cdf[s]) / kProbabilityTotal;
    EXPECT_NEAR(mass, d.cdf(0, v + 0.5) - d.cdf(0, v - 0.5), slack);
  }
}

TEST(ValueCodingTest, RoundTripWithEscapes) {
  const QuantizedCdfTable table = GaussianConditional::build_tables();
  Rng rng(17);
  std::vector<std::int32_t> values;
  std::vector<std::uint32_t> contexts;
  for (int i = 0; i < 5000; ++i) {
    contexts.push_back(static_cast<std::uint32_t>(rng.below(64)));
    const double sigma = GaussianConditional::scale_table()[contexts.back()];
    values.push_back(static_cast<std::int32_t>(std::lround(rng.normal() * sigma)));
  }
  for (std::int32_t extreme : {INT32_MIN, INT32_MAX, INT32_MIN + 1, 1 << 20, -(1 << 20), 40, -40}) {
    values.push_back(extreme);
    contexts.push_back(0);
  }
  RangeEncoder enc;
  encode_values(enc, values, contexts, table);
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  EXPECT_EQ(decode_values(dec, contexts, table), values);
}

TEST(ValueCodingTest, ToIntegersRejectsNonIntegers) {
  EXPECT_EQ(to_integers(Tensor({3}, {-2.0, 0.0, 5.0})), (std::vector<std::int32_t>{-2, 0, 5}));
  EXPECT_THROW(to_integers(Tensor({1}, {0.5})), Error);
  EXPECT_THROW(to_integers(Tensor({1}, {1e12})), Error);
}

TEST(ValueCodingTest, ContextOutOfRangeThrows) {
  const QuantizedCdfTable table = GaussianConditional::build_tables();
  RangeEncoder enc;
  const std::vector<std::int32_t> v{0};
  const std::vector<std::uint32_t> c{64};
  EXPECT_THROW(encode_values(enc, v, c, table), Error);
}

}  // namespace
}  // namespace ldlc
