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

#include "ldlc/entropy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "ldlc/binary_io.hpp"
#include "ldlc/error.hpp"
#include "ldlc/ops.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "entropy-model";

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }

// Effective (reparameterised) weights of one channel's monotone network.
struct ChannelNet {
  std::array<double, 3> s0, b0, g0;
  std::array<std::array<double, 3>, 3> s1;
  std::array<double, 3> b1, g1;
  std::array<double, 3> s2;
  double b2;
  // Raw values needed for the reparameterisation derivatives.
  std::array<double, 3> s0_raw, a0_raw, a1_raw, s2_raw;
  std::array<std::array<double, 3>, 3> s1_raw;
};

struct Trace {
  double v;
  std::array<double, 3> t0, h1, t1, h2;
};

// Gradient accumulators for one channel, in raw-parameter space.
struct ChannelGrad {
  std::array<double, 3> h0{}, b0{}, a0{};
  std::array<std::array<double, 3>, 3> h1{};
  std::array<double, 3> b1{}, a1{};
  std::array<double, 3> h2{};
  double b2 = 0.0;
};

ChannelNet load_channel(const FactorizedDensity& d, std::size_t c) {
  ChannelNet net;
  const auto h0 = d.h0.data(), h1 = d.h1.data(), h2 = d.h2.data();
  const auto b0 = d.b0.data(), b1 = d.b1.data(), b2 = d.b2.data();
  const auto a0 = d.a0.data(), a1 = d.a1.data();
  for (std::size_t i = 0; i < 3; ++i) {
    net.s0_raw[i] = h0[c * 3 + i];
    net.s0[i] = softplus(net.s0_raw[i]);
    net.b0[i] = b0[c * 3 + i];
    net.a0_raw[i] = a0[c * 3 + i];
    net.g0[i] = std::tanh(net.a0_raw[i]);
    for (std::size_t j = 0; j < 3; ++j) {
      net.s1_raw[i][j] = h1[c * 9 + i * 3 + j];
      net.s1[i][j] = softplus(net.s1_raw[i][j]);
    }
    net.b1[i] = b1[c * 3 + i];
    net.a1_raw[i] = a1[c * 3 + i];
    net.g1[i] = std::tanh(net.a1_raw[i]);
    net.s2_raw[i] = h2[c * 3 + i];
    net.s2[i] = softplus(net.s2_raw[i]);
  }
  net.b2 = b2[c];
  return net;
}

double run_forward(const ChannelNet& n, double v, Trace& t) {
  t.v = v;
  for (std::size_t i = 0; i < 3; ++i) {
    const double u = n.s0[i] * v + n.b0[i];
    t.t0[i] = std::tanh(u);
    t.h1[i] = u + n.g0[i] * t.t0[i];
  }
  double logit = n.b2;
  for (std::size_t i = 0; i < 3; ++i) {
    double u = n.b1[i];
    for (std::size_t j = 0; j < 3; ++j) u += n.s1[i][j] * t.h1[j];
    t.t1[i] = std::tanh(u);
    t.h2[i] = u + n.g1[i] * t.t1[i];
    logit += n.s2[i] * t.h2[i];
  }
  return logit;
}

double run_forward(const ChannelNet& n, double v) {
  Trace t;
  return run_forward(n, v, t);
}

// Backpropagates d(loss)/d(logit); returns d(loss)/d(v).
double run_backward(const ChannelNet& n, const Trace& t, double dlogit, ChannelGrad* g) {
  std::array<double, 3> dh1{};
  for (std::size_t i = 0; i < 3; ++i) {
    const double dh2 = dlogit * n.s2[i];
    const double du1 = dh2 * (1.0 + n.g1[i] * (1.0 - t.t1[i] * t.t1[i]));
    if (g) {
      g->h2[i] += dlogit * t.h2[i] * sigmoid(n.s2_raw[i]);
      g->a1[i] += dh2 * t.t1[i] * (1.0 - n.g1[i] * n.g1[i]);
      g->b1[i] += du1;
      for (std::size_t j = 0; j < 3; ++j) g->h1[i][j] += du1 * t.h1[j] * sigmoid(n.s1_raw[i][j]);
    }
    for (std::size_t j = 0; j < 3; ++j) dh1[j] += du1 * n.s1[i][j];
  }
  if (g) g->b2 += dlogit;
  double dv = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double du0 = dh1[i] * (1.0 + n.g0[i] * (1.0 - t.t0[i] * t.t0[i]));
    if (g) {
      g->a0[i] += dh1[i] * t.t0[i] * (1.0 - n.g0[i] * n.g0[i]);
      g->h0[i] += du0 * t.v * sigmoid(n.s0_raw[i]);
      g->b0[i] += du0;
    }
    dv += du0 * n.s0[i];
  }
  return dv;
}

// sigmoid(upper) - sigmoid(lower), evaluated on the side of the logistic
// curve where it does not cancel.
double bin_probability(double lower, double upper) {
  const double sign = (lower + upper) > 0.0 ? -1.0 : 1.0;
  return std::abs(sigmoid(sign * upper) - sigmoid(sign * lower));
}

double sigmoid_derivative(double x) {
  const double s = sigmoid(-std::abs(x));
  return s * (1.0 - s);
}

}  // namespace

double round_half_away(double v) { return std::round(v); }

Tensor quantize_noise(const Tensor& y, Rng& rng) {
  std::vector<double> noise(y.numel());
  for (auto& u : noise) u = rng.uniform() - 0.5;
  return ops::add(y, Tensor(y.shape(), std::move(noise)));
}

Tensor quantize_round(const Tensor& y) {
  std::vector<double> out(y.numel());
  const auto x = y.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = round_half_away(x[i]);
  return Tensor(y.shape(), std::move(out));
}

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

Tensor gaussian_likelihood(const Tensor& y, const Tensor& sigma) {
  if (y.shape() != sigma.shape()) {
    throw Error(kModule, "gaussian likelihood: shape mismatch " + shape_string(y.shape()) +
                             " vs " + shape_string(sigma.shape()));
  }
  const auto yv = y.data();
  const auto sv = sigma.data();
  std::vector<double> out(yv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = std::abs(yv[i]);
    out[i] = normal_cdf((0.5 - a) / sv[i]) - normal_cdf((-0.5 - a) / sv[i]);
  }
  return make_result("gaussian_likelihood", y.shape(), std::move(out), {y, sigma},
                     [y, sigma](std::span<const double> g) {
                       const auto yv = y.data();
                       const auto sv = sigma.data();
                       auto gy = grad_buffer(y);
                       auto gs = grad_buffer(sigma);
                       for (std::size_t i = 0; i < yv.size(); ++i) {
                         const double a = std::abs(yv[i]);
                         const double s = sv[i];
                         const double u = (0.5 - a) / s;
                         const double l = (-0.5 - a) / s;
                         const double pu = normal_pdf(u);
                         const double pl = normal_pdf(l);
                         if (!gy.empty()) {
                           const double sgn = yv[i] > 0.0 ? 1.0 : (yv[i] < 0.0 ? -1.0 : 0.0);
                           gy[i] += g[i] * sgn * (pl - pu) / s;
                         }
                         if (!gs.empty()) gs[i] += g[i] * (l * pl - u * pu) / s;
                       }
                     });
}

Tensor likelihood_gaussian(const Tensor& y, const Tensor& sigma) {
  for (double s : sigma.data()) {
    if (!(s > 0.0)) throw Error(kModule, "non-positive scale " + std::to_string(s));
  }
  return ops::lower_bound(gaussian_likelihood(y, sigma), kLikelihoodFloor);
}

Tensor rate_bits(const Tensor& likelihoods) {
  for (double p : likelihoods.data()) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw Error(kModule, "likelihood " + std::to_string(p) + " outside (0, 1]");
    }
  }
  return ops::scale(ops::sum(ops::log(likelihoods)), -1.0 / std::numbers::ln2);
}

FactorizedDensity::FactorizedDensity(std::size_t channels, Rng& rng, double init_scale)
    : channels_(channels) {
  // Filters (1, 3, 3, 1); initial weights chosen so the stack starts close
  // to a logistic with scale init_scale.
  const double scale = std::pow(init_scale, 1.0 / 4.0);
  auto raw_for = [scale](double fan) { return std::log(std::expm1(1.0 / scale / fan)); };
  auto filled = [](Shape shape, double v) { return Tensor::full(std::move(shape), v, true); };
  auto uniform = [&rng](Shape shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& e : v) e = rng.uniform(-0.5, 0.5);
    return Tensor(std::move(shape), std::move(v), true);
  };
  h0 = filled({channels, 3, 1}, raw_for(3.0));
  b0 = uniform({channels, 3});
  a0 = filled({channels, 3}, 0.0);
  h1 = filled({channels, 3, 3}, raw_for(3.0));
  b1 = uniform({channels, 3});
  a1 = filled({channels, 3}, 0.0);
  h2 = filled({channels, 1, 3}, raw_for(1.0));
  b2 = uniform({channels, 1});
}

void FactorizedDensity::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".h0", h0});
  out.push_back({prefix + ".b0", b0});
  out.push_back({prefix + ".a0", a0});
  out.push_back({prefix + ".h1", h1});
  out.push_back({prefix + ".b1", b1});
  out.push_back({prefix + ".a1", a1});
  out.push_back({prefix + ".h2", h2});
  out.push_back({prefix + ".b2", b2});
}

std::vector<Tensor> FactorizedDensity::parameters() const {
  return {h0, b0, a0, h1, b1, a1, h2, b2};
}

double FactorizedDensity::logit(std::size_t channel, double x) const {
  return run_forward(load_channel(*this, channel), x);
}

double FactorizedDensity::cdf(std::size_t channel, double x) const {
  return sigmoid(logit(channel, x));
}

Tensor FactorizedDensity::likelihood_unfloored(const Tensor& values) const {
  if (values.rank() == 0 || values.dim(0) != channels_) {
    throw Error(kModule, "factorized density: expected leading dimension " +
                             std::to_string(channels_) + ", got " +
                             shape_string(values.shape()));
  }
  const std::size_t per = values.numel() / channels_;
  const auto v = values.data();
  std::vector<double> out(v.size());
  for (std::size_t c = 0; c < channels_; ++c) {
    const ChannelNet net = load_channel(*this, c);
    for (std::size_t i = 0; i < per; ++i) {
      const double x = v[c * per + i];
      out[c * per + i] = bin_probability(run_forward(net, x - 0.5), run_forward(net, x + 0.5));
    }
  }
  std::vector<Tensor> inputs{values, h0, b0, a0, h1, b1, a1, h2, b2};
  const FactorizedDensity self = *this;
  return make_result(
      "factorized_likelihood", values.shape(), std::move(out), std::move(inputs),
      [self, values, per](std::span<const double> g) {
        const auto v = values.data();
        auto gv = grad_buffer(values);
        const bool want_params = self.h0.requires_grad();
        for (std::size_t c = 0; c < self.channels_; ++c) {
          const ChannelNet net = load_channel(self, c);
          ChannelGrad cg;
          ChannelGrad* gp = want_params ? &cg : nullptr;
          for (std::size_t i = 0; i < per; ++i) {
            const std::size_t k = c * per + i;
            if (g[k] == 0.0) continue;
            Trace lo, up;
            const double l = run_forward(net, v[k] - 0.5, lo);
            const double u = run_forward(net, v[k] + 0.5, up);
            const double dv = run_backward(net, up, g[k] * sigmoid_derivative(u), gp) +
                              run_backward(net, lo, -g[k] * sigmoid_derivative(l), gp);
            if (!gv.empty()) gv[k] += dv;
          }
          if (!want_params) continue;
          auto add = [](const Tensor& t, std::size_t offset, std::span<const double> vals) {
            auto buf = grad_buffer(t);
            if (buf.empty()) return;
            for (std::size_t j = 0; j < vals.size(); ++j) buf[offset + j] += vals[j];
          };
          add(self.h0, c * 3, cg.h0);
          add(self.b0, c * 3, cg.b0);
          add(self.a0, c * 3, cg.a0);
          for (std::size_t r = 0; r < 3; ++r) add(self.h1, c * 9 + r * 3, cg.h1[r]);
          add(self.b1, c * 3, cg.b1);
          add(self.a1, c * 3, cg.a1);
          add(self.h2, c * 3, cg.h2);
          add(self.b2, c, std::span<const double>(&cg.b2, 1));
        }
      });
}

Tensor FactorizedDensity::likelihood(const Tensor& values) const {
  return ops::lower_bound(likelihood_unfloored(values), kLikelihoodFloor);
}

std::vector<CdfView> QuantizedCdfTable::views() const {
  std::vector<CdfView> v;
  v.reserve(contexts.size());
  for (const auto& c : contexts) v.push_back(c.view());
  return v;
}

std::vector<std::uint8_t> QuantizedCdfTable::serialize() const {
  std::vector<std::uint8_t> out;
  bio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(contexts.size()));
  for (const auto& c : contexts) {
    bio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.offset));
    bio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.symbol_count()));
    for (std::size_t i = 0; i < c.symbol_count(); ++i) {
      bio::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(c.cdf[i]));
    }
  }
  return out;
}

QuantizedCdfTable QuantizedCdfTable::deserialize(std::span<const std::uint8_t> bytes) {
  bio::Reader r(bytes, kModule);
  QuantizedCdfTable table;
  const auto count = r.get_le<std::uint32_t>();
  table.contexts.resize(count);
  for (auto& c : table.contexts) {
    c.offset = static_cast<std::int32_t>(r.get_le<std::uint32_t>());
    const auto n = r.get_le<std::uint32_t>();
    if (n < 2 || n > kProbabilityTotal) throw Error(kModule, "bad cdf symbol count");
    c.cdf.resize(n + 1);
    for (std::uint32_t i = 0; i < n; ++i) c.cdf[i] = r.get_le<std::uint16_t>();
    c.cdf[n] = kProbabilityTotal;
    if (c.cdf[0] != 0) throw Error(kModule, "cdf must start at 0");
    for (std::uint32_t i = 0; i < n; ++i) {
      if (c.cdf[i + 1] <= c.cdf[i]) throw Error(kModule, "cdf not strictly increasing");
    }
  }
  if (!r.at_end()) throw Error(kModule, "trailing bytes after cdf tables");
  return table;
}

QuantizedCdf quantize_pmf(std::span<const double> pmf, double tail_mass, std::int32_t offset) {
  const std::size_t n = pmf.size() + 1;
  if (pmf.empty() || n > kProbabilityTotal) {
    throw Error(kModule, "support overflow: " + std::to_string(n) + " symbols");
  }
  std::vector<std::int64_t> freq(n);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = i + 1 < n ? pmf[i] : tail_mass;
    freq[i] = std::max<std::int64_t>(1, std::llround(p * kProbabilityTotal));
    total += freq[i];
  }
  std::int64_t diff = static_cast<std::int64_t>(kProbabilityTotal) - total;
  if (diff > 0) {
    const auto it = std::max_element(freq.begin(), freq.end() - 1);
    *it += diff;
  }
  // Take one unit at a time from the currently largest bin.
  while (diff < 0) {
    const auto it = std::max_element(freq.begin(), freq.end());
    if (*it <= 1) throw Error(kModule, "support overflow while normalising cdf");
    --*it;
    ++diff;
  }
  QuantizedCdf q;
  q.offset = offset;
  q.cdf.resize(n + 1);
  q.cdf[0] = 0;
  for (std::size_t i = 0; i < n; ++i) q.cdf[i + 1] = q.cdf[i] + static_cast<std::uint32_t>(freq[i]);
  return q;
}

const std::array<double, GaussianConditional::kScaleCount>& GaussianConditional::scale_table() {
  static const auto table = [] {
    std::array<double, kScaleCount> t{};
    const double lo = std::log(kScaleMin);
    const double hi = std::log(kScaleMax);
    for (std::size_t i = 0; i < kScaleCount; ++i) {
      t[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / (kScaleCount - 1));
    }
    return t;
  }();
  return table;
}

std::uint32_t GaussianConditional::scale_index(double sigma) {
  if (!(sigma > 0.0)) throw Error(kModule, "non-positive scale " + std::to_string(sigma));
  const double lo = std::log(kScaleMin);
  const double step = (std::log(kScaleMax) - lo) / (kScaleCount - 1);
  const double pos = std::round((std::log(sigma) - lo) / step);
  return static_cast<std::uint32_t>(std::clamp(pos, 0.0, double(kScaleCount - 1)));
}

std::vector<std::uint32_t> GaussianConditional::scale_indexes(const Tensor& sigma) {
  std::vector<std::uint32_t> out(sigma.numel());
  const auto s = sigma.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale_index(s[i]);
  return out;
}

std::int32_t GaussianConditional::support_half_width(double sigma) {
  std::int32_t b = 0;
  while (std::erfc((b + 0.5) / (sigma * std::numbers::sqrt2)) >= kTailMass) {
    if (++b > (1 << 15)) throw Error(kModule, "support overflow for scale " + std::to_string(sigma));
  }
  return b;
}

QuantizedCdfTable GaussianConditional::build_tables() {
  QuantizedCdfTable table;
  for (double sigma : scale_table()) {
    const std::int32_t b = support_half_width(sigma);
    std::vector<double> pmf(static_cast<std::size_t>(2 * b + 1));
    for (std::int32_t k = -b; k <= b; ++k) {
      const double a = std::abs(static_cast<double>(k));
      pmf[static_cast<std::size_t>(k + b)] =
          normal_cdf((0.5 - a) / sigma) - normal_cdf((-0.5 - a) / sigma);
    }
    const double tail = std::erfc((b + 0.5) / (sigma * std::numbers::sqrt2));
    table.contexts.push_back(quantize_pmf(pmf, tail, -b));
  }
  return table;
}

QuantizedCdfTable build_factorized_tables(const FactorizedDensity& density) {
  constexpr std::int32_t kLimit = 1 << 15;
  QuantizedCdfTable table;
  for (std::size_t c = 0; c < density.channels(); ++c) {
    const ChannelNet net = load_channel(density, c);
    auto lower_tail = [&](std::int32_t v) { return sigmoid(run_forward(net, v - 0.5)); };
    auto upper_tail = [&](std::int32_t v) { return sigmoid(-run_forward(net, v + 0.5)); };
    std::int32_t lo = 0, hi = 0;
    while (lower_tail(lo) >= kTailMass / 2) {
      if (--lo < -kLimit) throw Error(kModule, "support overflow in channel " + std::to_string(c));
    }
    while (upper_tail(hi) >= kTailMass / 2) {
      if (++hi > kLimit) throw Error(kModule, "support overflow in channel " + std::to_string(c));
    }
    std::vector<double> pmf(static_cast<std::size_t>(hi - lo + 1));
    for (std::int32_t v = lo; v <= hi; ++v) {
      pmf[static_cast<std::size_t>(v - lo)] =
          bin_probability(run_forward(net, v - 0.5), run_forward(net, v + 0.5));
    }
    table.contexts.push_back(quantize_pmf(pmf, lower_tail(lo) + upper_tail(hi), lo));
  }
  return table;
}

void encode_values(RangeEncoder& enc, std::span<const std::int32_t> values,
                   std::span<const std::uint32_t> contexts, const QuantizedCdfTable& table) {
  if (values.size() != contexts.size()) throw Error(kModule, "values/contexts length mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (contexts[i] >= table.contexts.size()) throw Error(kModule, "context out of range");
    const auto& ctx = table.contexts[contexts[i]];
    const std::int32_t v = values[i];
    if (v >= ctx.offset && v <= ctx.max_value()) {
      enc.encode_symbol(static_cast<std::uint32_t>(v - ctx.offset), ctx.view());
      continue;
    }
    enc.encode_symbol(ctx.escape_symbol(), ctx.view());
    const bool below = v < ctx.offset;
    const std::uint64_t d = below
        ? static_cast<std::uint64_t>(static_cast<std::int64_t>(ctx.offset) - v)
        : static_cast<std::uint64_t>(static_cast<std::int64_t>(v) - ctx.max_value());
    const int width = std::bit_width(d);
    enc.encode_bits(below ? 1u : 0u, 1);
    enc.encode_bits(static_cast<std::uint32_t>(width - 1), 6);
    // Mantissa below the leading one, most significant chunk first.
    for (int remaining = width - 1; remaining > 0;) {
      const int chunk = std::min(remaining, 16);
      remaining -= chunk;
      enc.encode_bits(static_cast<std::uint32_t>(d >> remaining) & ((1u << chunk) - 1u), chunk);
    }
  }
}

std::vector<std::int32_t> decode_values(RangeDecoder& dec,
                                        std::span<const std::uint32_t> contexts,
                                        const QuantizedCdfTable& table) {
  std::vector<std::int32_t> out(contexts.size());
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (contexts[i] >= table.contexts.size()) throw Error(kModule, "context out of range");
    const auto& ctx = table.contexts[contexts[i]];
    const std::uint32_t s = dec.decode_symbol(ctx.view());
    if (s != ctx.escape_symbol()) {
      out[i] = ctx.offset + static_cast<std::int32_t>(s);
      continue;
    }
    const bool below = dec.decode_bits(1) != 0;
    const int width = static_cast<int>(dec.decode_bits(6)) + 1;
    std::uint64_t d = 1;
    for (int remaining = width - 1; remaining > 0;) {
      const int chunk = std::min(remaining, 16);
      remaining -= chunk;
      d = (d << chunk) | dec.decode_bits(chunk);
    }
    const std::int64_t v = below ? static_cast<std::int64_t>(ctx.offset) - static_cast<std::int64_t>(d)
                                 : static_cast<std::int64_t>(ctx.max_value()) + static_cast<std::int64_t>(d);
    if (v < INT32_MIN || v > INT32_MAX) throw Error(kModule, "decoded value overflows int32");
    out[i] = static_cast<std::int32_t>(v);
  }
  return out;
}

std::vector<std::int32_t> to_integers(const Tensor& rounded) {
  std::vector<std::int32_t> out(rounded.numel());
  const auto v = rounded.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(std::abs(v[i]) < 2147483647.0) || v[i] != std::round(v[i])) {
      throw Error(kModule, "latent value " + std::to_string(v[i]) + " is not a codable integer");
    }
    out[i] = static_cast<std::int32_t>(v[i]);
  }
  return out;
}

}  // namespace ldlc
