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

#ifndef LDLC_ENTROPY_HPP_
#define LDLC_ENTROPY_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ldlc/nn.hpp"
#include "ldlc/range_coder.hpp"
#include "ldlc/rng.hpp"
#include "ldlc/tensor.hpp"

namespace ldlc {

// Smallest likelihood any element may be assigned; ties the continuous
// model to the 16-bit coder so no element costs more than 16 bits.
inline constexpr double kLikelihoodFloor = 0x1.0p-16;
// Mass allowed outside a table's support, all of it given to the escape
// symbol.
inline constexpr double kTailMass = 0x1.0p-20;

// Round half away from zero.
double round_half_away(double v);

// y + u with u ~ Uniform(-0.5, 0.5) drawn from `rng`; the gradient passes
// straight through to y.
Tensor quantize_noise(const Tensor& y, Rng& rng);
// Elementwise rounding, halves away from zero. Carries no gradient.
Tensor quantize_round(const Tensor& y);

double normal_cdf(double t);

// Phi((y + 1/2) / sigma) - Phi((y - 1/2) / sigma), unfloored, differentiable
// in y and sigma.
Tensor gaussian_likelihood(const Tensor& y, const Tensor& sigma);
// Floored at kLikelihoodFloor; throws on non-positive sigma.
Tensor likelihood_gaussian(const Tensor& y, const Tensor& sigma);

// -sum log2 p. Throws if any likelihood is outside (0, 1].
Tensor rate_bits(const Tensor& likelihoods);

// Per-channel learned cumulative distribution: a stack of three monotone
// maps R -> R^3 -> R^3 -> R with positive weights and tanh-gated residual
// nonlinearities, followed by a sigmoid.
class FactorizedDensity {
 public:
  static constexpr std::size_t kHidden = 3;

  FactorizedDensity() = default;
  FactorizedDensity(std::size_t channels, Rng& rng, double init_scale = 10.0);

  std::size_t channels() const { return channels_; }

  // values: leading dimension = channels. Returns the floored per-element
  // likelihood C(v + 1/2) - C(v - 1/2); differentiable in values and
  // parameters.
  Tensor likelihood(const Tensor& values) const;
  // Same, without the floor.
  Tensor likelihood_unfloored(const Tensor& values) const;

  double cdf(std::size_t channel, double x) const;
  double logit(std::size_t channel, double x) const;

  void collect(const std::string& prefix, ParamList& out) const;
  std::vector<Tensor> parameters() const;

  // Parameters, in collect() order.
  Tensor h0, h1, h2;  // raw weights: C x 3 x 1, C x 3 x 3, C x 1 x 3
  Tensor b0, b1, b2;  // biases: C x 3, C x 3, C x 1
  Tensor a0, a1;      // raw gate factors: C x 3, C x 3

 private:
  std::size_t channels_ = 0;
};

// One integer CDF: symbols 0..n-2 stand for values offset..offset+n-2 and the
// last symbol is the escape for anything outside that range.
struct QuantizedCdf {
  std::int32_t offset = 0;
  std::vector<std::uint32_t> cdf;  // n + 1 entries, cdf[0] = 0, cdf[n] = 2^16

  std::size_t symbol_count() const { return cdf.empty() ? 0 : cdf.size() - 1; }
  std::uint32_t escape_symbol() const { return static_cast<std::uint32_t>(symbol_count() - 1); }
  std::int32_t max_value() const {
    return offset + static_cast<std::int32_t>(symbol_count()) - 2;
  }
  CdfView view() const { return cdf; }

  bool operator==(const QuantizedCdf&) const = default;
};

struct QuantizedCdfTable {
  std::vector<QuantizedCdf> contexts;

  std::vector<CdfView> views() const;
  // i32 offset, u32 symbol count, then cdf[0..n-1] as u16 (cdf[n] = 2^16 is
  // implicit), per context after a u32 context count.
  std::vector<std::uint8_t> serialize() const;
  static QuantizedCdfTable deserialize(std::span<const std::uint8_t> bytes);

  bool operator==(const QuantizedCdfTable&) const = default;
};

// Quantises a pmf over consecutive integers starting at `offset` plus the
// escape mass to a 16-bit CDF in which every symbol has mass >= 1.
QuantizedCdf quantize_pmf(std::span<const double> pmf, double tail_mass, std::int32_t offset);

// Zero-mean Gaussian conditional with a fixed table of 64 scales,
// geometric from 0.11 to 256.
class GaussianConditional {
 public:
  static constexpr std::size_t kScaleCount = 64;
  static constexpr double kScaleMin = 0.11;
  static constexpr double kScaleMax = 256.0;

  static const std::array<double, kScaleCount>& scale_table();
  // Nearest table entry in the log domain.
  static std::uint32_t scale_index(double sigma);
  static std::vector<std::uint32_t> scale_indexes(const Tensor& sigma);
  // Smallest b with P(|v| > b) < kTailMass for v ~ discretised N(0, sigma^2).
  static std::int32_t support_half_width(double sigma);

  static QuantizedCdfTable build_tables();
};

QuantizedCdfTable build_factorized_tables(const FactorizedDensity& density);

// Entropy-codes integer values against per-element contexts. Values outside
// a context's support go out as the escape symbol followed by raw bits, so
// the mapping is lossless for any 32-bit input.
void encode_values(RangeEncoder& enc, std::span<const std::int32_t> values,
                   std::span<const std::uint32_t> contexts, const QuantizedCdfTable& table);
std::vector<std::int32_t> decode_values(RangeDecoder& dec,
                                        std::span<const std::uint32_t> contexts,
                                        const QuantizedCdfTable& table);

std::vector<std::int32_t> to_integers(const Tensor& rounded);

}  // namespace ldlc

#endif  // LDLC_ENTROPY_HPP_
