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

#include "ldlc/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ldlc/error.hpp"
#include "ldlc/ops.hpp"
#include "ldlc/range_coder.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "codec";

// Fixed-seed streams so each transform's initial weights do not depend on
// how many parameters the others have.
enum class InitStream : std::uint64_t { kEs = 1, kEx, kDs, kDx, kHyper1, kHyper2 };

Rng init_rng(std::uint64_t seed, InitStream stream) {
  return Rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(stream));
}

double bits_of(const Tensor& likelihoods) {
  double acc = 0.0;
  for (double p : likelihoods.data()) acc -= std::log2(p);
  return acc;
}

Tensor clamp_unit(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
  return Tensor(x.shape(), std::move(out));
}

void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) {
    throw Error(kModule, std::string("non-finite ") + term + " in training forward pass");
  }
}

}  // namespace

void CodecConfig::validate() const {
  for (auto [name, v] : {std::pair{"C_s", c_s}, {"N", n}, {"M1", m1}, {"M2", m2}, {"H", hyper_blocks}}) {
    if (v == 0 || v > 0xFFFF) {
      throw Error(kModule, std::string(name) + " must be in [1, 65535], got " + std::to_string(v));
    }
  }
  if (hyper_blocks != 1) {
    throw Error(kModule, "hyperprior block count " + std::to_string(hyper_blocks) +
                             " is not supported; only H = 1 is defined");
  }
}

CodecConfig CodecConfig::full_scale(std::size_t m1, std::size_t m2) {
  return CodecConfig{256, 192, m1, m2, 1};
}

std::string CodecConfig::to_string() const {
  return "C_s=" + std::to_string(c_s) + " N=" + std::to_string(n) + " M1=" + std::to_string(m1) +
         " M2=" + std::to_string(m2) + " H=" + std::to_string(hyper_blocks);
}

LossBreakdown LossBreakdown::compose(double r_y1, double r_y2, double d_x, double d_s,
                                     double lambda, double gamma) {
  LossBreakdown b{r_y1, r_y2, d_x, d_s, lambda, gamma, 0.0};
  b.total = r_y1 + r_y2 + lambda * d_x + gamma * d_s;
  return b;
}

std::size_t hyper_latent_size(std::size_t latent) {
  return nn::conv_output_size(nn::conv_output_size(latent, 5, 2, 2), 5, 2, 2);
}

HyperPrior::HyperPrior(std::size_t latent_channels, std::size_t n, Rng& rng)
    : analysis{Conv2dLayer(latent_channels, n, 3, 1, 1, rng), Conv2dLayer(n, n, 5, 2, 2, rng),
               Conv2dLayer(n, n, 5, 2, 2, rng)},
      synthesis0(n, n, 5, 2, 2, 1, rng),
      synthesis1(n, n, 5, 2, 2, 1, rng),
      synthesis2(n, latent_channels, 3, 1, 1, rng),
      density(n, rng) {}

Tensor HyperPrior::analyze(const Tensor& y) const {
  Tensor h = ops::relu(analysis[0].forward(ops::abs(y)));
  h = ops::relu(analysis[1].forward(h));
  return analysis[2].forward(h);
}

Tensor HyperPrior::scales(const Tensor& z_hat, std::size_t height, std::size_t width) const {
  Tensor h = ops::relu(synthesis0.forward(z_hat));
  h = ops::relu(synthesis1.forward(h));
  h = synthesis2.forward(h);
  if (h.dim(1) != height || h.dim(2) != width) h = ops::crop_spatial(h, height, width);
  return ops::lower_bound(ops::exp(h), kScaleBound);
}

void HyperPrior::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < analysis.size(); ++i) {
    analysis[i].collect(prefix + ".analysis" + std::to_string(i), out);
  }
  synthesis0.collect(prefix + ".synthesis0", out);
  synthesis1.collect(prefix + ".synthesis1", out);
  synthesis2.collect(prefix + ".synthesis2", out);
  density.collect(prefix + ".density", out);
}

Codec::Codec(const CodecConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t n = config_.n;
  {
    Rng rng = init_rng(seed, InitStream::kEs);
    es_ = {Conv2dLayer(config_.c_s + 3, n, 5, 1, 2, rng), Conv2dLayer(n, n, 5, 1, 2, rng),
           Conv2dLayer(n, config_.m1, 5, 2, 2, rng)};
    es_gdn_ = {GdnLayer(n, false), GdnLayer(n, false)};
  }
  {
    Rng rng = init_rng(seed, InitStream::kEx);
    ex_ = {Conv2dLayer(3, n, 5, 2, 2, rng), Conv2dLayer(n, n, 5, 2, 2, rng),
           Conv2dLayer(n, n, 5, 2, 2, rng), Conv2dLayer(n, config_.m2, 5, 2, 2, rng)};
    ex_gdn_ = {GdnLayer(n, false), GdnLayer(n, false), GdnLayer(n, false)};
  }
  {
    Rng rng = init_rng(seed, InitStream::kDs);
    ds_ = {Deconv2dLayer(config_.m1, n, 5, 1, 2, 0, rng), Deconv2dLayer(n, n, 5, 1, 2, 0, rng),
           Deconv2dLayer(n, config_.c_s, 5, 2, 2, 1, rng)};
    ds_gdn_ = {GdnLayer(n, true), GdnLayer(n, true)};
  }
  {
    Rng rng = init_rng(seed, InitStream::kDx);
    dx_ = {Deconv2dLayer(config_.m1 + config_.m2, n, 5, 2, 2, 1, rng),
           Deconv2dLayer(n, n, 5, 2, 2, 1, rng), Deconv2dLayer(n, n, 5, 2, 2, 1, rng),
           Deconv2dLayer(n, 3, 5, 2, 2, 1, rng)};
    dx_gdn_ = {GdnLayer(n, true), GdnLayer(n, true), GdnLayer(n, true)};
  }
  {
    Rng rng = init_rng(seed, InitStream::kHyper1);
    hyper_[0] = HyperPrior(config_.m1, n, rng);
  }
  {
    Rng rng = init_rng(seed, InitStream::kHyper2);
    hyper_[1] = HyperPrior(config_.m2, n, rng);
  }
}

void Codec::check_image(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != 3) {
    throw Error(kModule, "expected a 3 x H x W image, got " + shape_string(x.shape()));
  }
  if (x.dim(1) % 16 != 0 || x.dim(2) % 16 != 0 || x.dim(1) == 0 || x.dim(2) == 0) {
    throw Error(kModule, "image size " + std::to_string(x.dim(1)) + "x" +
                             std::to_string(x.dim(2)) + " is not a positive multiple of 16");
  }
  if (x.dim(1) > 0xFFFF || x.dim(2) > 0xFFFF) throw Error(kModule, "image too large");
}

void Codec::check_features(const Tensor& x, const Tensor& s) const {
  check_image(x);
  const Shape want{config_.c_s, x.dim(1) / 8, x.dim(2) / 8};
  if (s.shape() != want) {
    throw Error(kModule, "features must have shape " + shape_string(want) + ", got " +
                             shape_string(s.shape()));
  }
}

Tensor Codec::analysis_s(const Tensor& x, const Tensor& s) const {
  check_features(x, s);
  const Tensor small = nn::resize_bicubic(x, x.dim(1) / 8, x.dim(2) / 8);
  Tensor h = es_gdn_[0].forward(es_[0].forward(ops::concat_channels(s, small)));
  h = es_gdn_[1].forward(es_[1].forward(h));
  return es_[2].forward(h);
}

Tensor Codec::analysis_x(const Tensor& x) const {
  check_image(x);
  Tensor h = x;
  for (std::size_t i = 0; i < 3; ++i) h = ex_gdn_[i].forward(ex_[i].forward(h));
  return ex_[3].forward(h);
}

Tensor Codec::synthesis_s(const Tensor& y1) const {
  if (y1.rank() != 3 || y1.dim(0) != config_.m1) {
    throw Error(kModule, "base latent must have " + std::to_string(config_.m1) +
                             " channels, got " + shape_string(y1.shape()));
  }
  Tensor h = ds_gdn_[0].forward(ds_[0].forward(y1));
  h = ds_gdn_[1].forward(ds_[1].forward(h));
  return ds_[2].forward(h);
}

Tensor Codec::synthesis_x(const Tensor& y1, const Tensor& y2) const {
  if (y1.rank() != 3 || y2.rank() != 3 || y1.dim(0) != config_.m1 || y2.dim(0) != config_.m2 ||
      y1.dim(1) != y2.dim(1) || y1.dim(2) != y2.dim(2)) {
    throw Error(kModule, "latent shapes " + shape_string(y1.shape()) + " and " +
                             shape_string(y2.shape()) + " do not match the configuration");
  }
  Tensor h = ops::concat_channels(y1, y2);
  for (std::size_t i = 0; i < 3; ++i) h = dx_gdn_[i].forward(dx_[i].forward(h));
  return dx_[3].forward(h);
}

BranchState Codec::run_branch(const HyperPrior& hp, const Tensor& y, Rng* noise) const {
  BranchState b;
  b.y = y;
  b.z = hp.analyze(y);
  b.z_q = noise ? quantize_noise(b.z, *noise) : quantize_round(b.z);
  b.p_z = hp.density.likelihood(b.z_q);
  b.sigma = hp.scales(b.z_q, y.dim(1), y.dim(2));
  b.y_q = noise ? quantize_noise(y, *noise) : quantize_round(y);
  b.p_y = likelihood_gaussian(b.y_q, b.sigma);
  b.bits_y = bits_of(b.p_y);
  b.bits_z = bits_of(b.p_z);
  return b;
}

TrainForward Codec::forward_train(const Tensor& x, const Tensor& s, double lambda, double gamma,
                                  Rng& noise) const {
  if (!(lambda > 0.0) || !(gamma > 0.0)) {
    throw Error(kModule, "lambda and gamma must be positive");
  }
  TrainForward f;
  f.x = x;
  f.s = s;
  f.pixels = x.dim(1) * x.dim(2);
  const Tensor y1 = analysis_s(x, s);
  const Tensor y2 = analysis_x(x);
  f.base = run_branch(hyper_[0], y1, &noise);
  f.enhancement = run_branch(hyper_[1], y2, &noise);
  f.s_hat = synthesis_s(f.base.y_q);
  f.x_hat = synthesis_x(f.base.y_q, f.enhancement.y_q);

  const double inv_pixels = 1.0 / static_cast<double>(f.pixels);
  const Tensor r1 = ops::scale(ops::add(rate_bits(f.base.p_y), rate_bits(f.base.p_z)), inv_pixels);
  const Tensor r2 = ops::scale(
      ops::add(rate_bits(f.enhancement.p_y), rate_bits(f.enhancement.p_z)), inv_pixels);
  const Tensor dx = ops::scale(ops::mse(x, f.x_hat), kDistortionScale);
  const Tensor ds = ops::scale(ops::mse(s, f.s_hat), kDistortionScale);
  f.total = ops::add(ops::add(r1, r2), ops::add(ops::scale(dx, lambda), ops::scale(ds, gamma)));
  f.loss = LossBreakdown::compose(r1.item(), r2.item(), dx.item(), ds.item(), lambda, gamma);
  require_finite(f.loss.r_y1, "R_y1");
  require_finite(f.loss.r_y2, "R_y2");
  require_finite(f.loss.d_x, "D_x");
  require_finite(f.loss.d_s, "D_s");
  return f;
}

VariationalTerms variational_terms(const TrainForward& f) {
  const double ln2 = std::numbers::ln2;
  const double pixels = static_cast<double>(f.pixels);
  VariationalTerms t;

  // The posterior of each noisy latent is a unit-width box around y, so its
  // log density at the sample is log 1 wherever the sample lies in the box.
  auto log_box = [](const BranchState& b) {
    double acc = 0.0;
    const auto y = b.y.data();
    const auto yq = b.y_q.data();
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double density = std::abs(yq[i] - y[i]) <= 0.5 ? 1.0 : 0.0;
      acc += std::log(density);
    }
    return acc;
  };
  t.q_term = (log_box(f.base) + log_box(f.enhancement)) / (ln2 * pixels);

  auto nll_prior = [&](const BranchState& b) {
    double nats = 0.0;
    for (double p : b.p_y.data()) nats -= std::log(p);
    for (double p : b.p_z.data()) nats -= std::log(p);
    return nats / (ln2 * pixels);
  };
  t.nll_y1 = nll_prior(f.base);
  t.nll_y2 = nll_prior(f.enhancement);

  // Gaussian likelihood with variance chosen so that its negative log,
  // normalised per pixel in bits, carries the weight of the distortion term.
  auto nll_gauss = [&](const Tensor& target, const Tensor& recon, double weight) {
    const auto a = target.data();
    const auto b = recon.data();
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
    const double variance =
        static_cast<double>(a.size()) / (2.0 * ln2 * weight * kDistortionScale * pixels);
    return sq / (2.0 * variance) / (ln2 * pixels);
  };
  t.nll_x = nll_gauss(f.x, f.x_hat, f.loss.lambda);
  t.nll_s = nll_gauss(f.s, f.s_hat, f.loss.gamma);
  t.total = t.q_term + t.nll_x + t.nll_s + t.nll_y1 + t.nll_y2;
  return t;
}

Inference Codec::infer(const Tensor& x, const Tensor& s) const {
  NoGradGuard no_grad;
  Inference r;
  r.pixels = x.dim(1) * x.dim(2);
  r.base = run_branch(hyper_[0], analysis_s(x, s), nullptr);
  r.enhancement = run_branch(hyper_[1], analysis_x(x), nullptr);
  r.s_hat = synthesis_s(r.base.y_q);
  r.x_hat = clamp_unit(synthesis_x(r.base.y_q, r.enhancement.y_q));
  return r;
}

void Codec::update_tables() {
  for (std::size_t b = 0; b < 2; ++b) side_tables_[b] = build_factorized_tables(hyper_[b].density);
}

const QuantizedCdfTable& Codec::side_table(std::size_t branch) const {
  if (branch > 1 || !side_tables_[branch]) {
    throw Error(kModule, "entropy tables not built; call update_tables() after training");
  }
  return *side_tables_[branch];
}

void Codec::set_side_table(std::size_t branch, QuantizedCdfTable table) {
  if (branch > 1) throw Error(kModule, "branch index out of range");
  if (table.contexts.size() != config_.n) {
    throw Error(kModule, "side table has " + std::to_string(table.contexts.size()) +
                             " contexts, expected " + std::to_string(config_.n));
  }
  side_tables_[branch] = std::move(table);
}

namespace {

const QuantizedCdfTable& gaussian_tables() {
  static const QuantizedCdfTable tables = GaussianConditional::build_tables();
  return tables;
}

std::vector<std::uint32_t> channel_contexts(const Shape& shape) {
  const std::size_t plane = shape[1] * shape[2];
  std::vector<std::uint32_t> ctx(shape_numel(shape));
  for (std::size_t i = 0; i < ctx.size(); ++i) ctx[i] = static_cast<std::uint32_t>(i / plane);
  return ctx;
}

std::vector<std::uint8_t> code_main(const BranchState& b) {
  RangeEncoder enc;
  encode_values(enc, to_integers(b.y_q), GaussianConditional::scale_indexes(b.sigma),
                gaussian_tables());
  return enc.finish();
}

std::vector<std::uint8_t> code_side(const BranchState& b, const QuantizedCdfTable& table) {
  RangeEncoder enc;
  encode_values(enc, to_integers(b.z_q), channel_contexts(b.z_q.shape()), table);
  return enc.finish();
}

Tensor to_tensor(const std::vector<std::int32_t>& v, Shape shape) {
  std::vector<double> d(v.begin(), v.end());
  return Tensor(std::move(shape), std::move(d));
}

}  // namespace

LayeredBitstream Codec::encode(const Tensor& x, const Tensor& s) const {
  const auto& t1 = side_table(0);
  const auto& t2 = side_table(1);
  const Inference r = infer(x, s);
  LayeredBitstream bs;
  bs.header = BitstreamHeader{static_cast<std::uint16_t>(config_.c_s),
                              static_cast<std::uint16_t>(config_.n),
                              static_cast<std::uint16_t>(config_.m1),
                              static_cast<std::uint16_t>(config_.m2),
                              static_cast<std::uint16_t>(config_.hyper_blocks),
                              static_cast<std::uint16_t>(x.dim(1)),
                              static_cast<std::uint16_t>(x.dim(2)),
                              kFlagEnhancement};
  bs.part(Substream::kBaseMain) = code_main(r.base);
  bs.part(Substream::kBaseSide) = code_side(r.base, t1);
  bs.part(Substream::kEnhMain) = code_main(r.enhancement);
  bs.part(Substream::kEnhSide) = code_side(r.enhancement, t2);
  bs.has_enhancement = true;
  return bs;
}

void Codec::check_header(const BitstreamHeader& h) const {
  const CodecConfig stream{h.c_s, h.n, h.m1, h.m2, h.hyper_blocks};
  if (!(stream == config_)) {
    throw Error(kModule, "config mismatch: stream has " + stream.to_string() + ", model has " +
                             config_.to_string());
  }
  if (h.height == 0 || h.width == 0 || h.height % 16 != 0 || h.width % 16 != 0) {
    throw Error(kModule, "stream image size " + std::to_string(h.height) + "x" +
                             std::to_string(h.width) + " is not a positive multiple of 16");
  }
}

Tensor Codec::decode_branch(const std::vector<std::uint8_t>& main,
                            const std::vector<std::uint8_t>& side, std::size_t branch,
                            std::size_t channels, std::size_t h, std::size_t w) const {
  const HyperPrior& hp = hyper_[branch];
  const Shape z_shape{config_.n, hyper_latent_size(h), hyper_latent_size(w)};
  RangeDecoder side_dec(side);
  const Tensor z_hat =
      to_tensor(decode_values(side_dec, channel_contexts(z_shape), side_table(branch)), z_shape);
  const Tensor sigma = hp.scales(z_hat, h, w);
  RangeDecoder main_dec(main);
  return to_tensor(
      decode_values(main_dec, GaussianConditional::scale_indexes(sigma), gaussian_tables()),
      Shape{channels, h, w});
}

Decoded Codec::decode_base(const LayeredBitstream& bs) const {
  check_header(bs.header);
  NoGradGuard no_grad;
  const std::size_t h = bs.header.height / 16, w = bs.header.width / 16;
  Decoded d;
  d.y1_hat = decode_branch(bs.part(Substream::kBaseMain), bs.part(Substream::kBaseSide), 0,
                           config_.m1, h, w);
  d.s_hat = synthesis_s(d.y1_hat);
  return d;
}

Decoded Codec::decode_full(const LayeredBitstream& bs) const {
  if (!bs.has_enhancement || (bs.header.flags & kFlagEnhancement) == 0) {
    throw Error(kModule, "bitstream has no enhancement layer");
  }
  Decoded d = decode_base(bs);
  NoGradGuard no_grad;
  const std::size_t h = bs.header.height / 16, w = bs.header.width / 16;
  d.y2_hat = decode_branch(bs.part(Substream::kEnhMain), bs.part(Substream::kEnhSide), 1,
                           config_.m2, h, w);
  d.x_hat = clamp_unit(synthesis_x(d.y1_hat, *d.y2_hat));
  return d;
}

ParamList Codec::parameters() const {
  ParamList out;
  for (std::size_t i = 0; i < es_.size(); ++i) {
    es_[i].collect("g_es.conv" + std::to_string(i), out);
    if (i < es_gdn_.size()) es_gdn_[i].collect("g_es.gdn" + std::to_string(i), out);
  }
  for (std::size_t i = 0; i < ex_.size(); ++i) {
    ex_[i].collect("g_ex.conv" + std::to_string(i), out);
    if (i < ex_gdn_.size()) ex_gdn_[i].collect("g_ex.gdn" + std::to_string(i), out);
  }
  for (std::size_t i = 0; i < ds_.size(); ++i) {
    ds_[i].collect("g_ds.deconv" + std::to_string(i), out);
    if (i < ds_gdn_.size()) ds_gdn_[i].collect("g_ds.igdn" + std::to_string(i), out);
  }
  for (std::size_t i = 0; i < dx_.size(); ++i) {
    dx_[i].collect("g_dx.deconv" + std::to_string(i), out);
    if (i < dx_gdn_.size()) dx_gdn_[i].collect("g_dx.igdn" + std::to_string(i), out);
  }
  hyper_[0].collect("hyper1", out);
  hyper_[1].collect("hyper2", out);
  return out;
}

}  // namespace ldlc
