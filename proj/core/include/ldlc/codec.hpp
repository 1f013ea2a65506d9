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

#ifndef LDLC_CODEC_HPP_
#define LDLC_CODEC_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "ldlc/bitstream.hpp"
#include "ldlc/entropy.hpp"
#include "ldlc/nn.hpp"
#include "ldlc/rng.hpp"
#include "ldlc/tensor.hpp"

namespace ldlc {

// Distortions are measured on the 0..255 pixel scale, so D = 255^2 * MSE of
// [0, 1] tensors. The rate-distortion weights in TrainConfig assume this.
inline constexpr double kDistortionScale = 255.0 * 255.0;
// Lower bound applied to predicted scales in training and coding alike.
inline constexpr double kScaleBound = GaussianConditional::kScaleMin;

inline double gamma_for_lambda(double lambda) { return 0.006 * lambda; }

struct CodecConfig {
  std::size_t c_s = 64;
  std::size_t n = 64;
  std::size_t m1 = 32;
  std::size_t m2 = 48;
  std::size_t hyper_blocks = 1;

  // Throws unless every field is positive, fits the u16 header fields and
  // hyper_blocks == 1.
  void validate() const;
  // C_s = 256, N = 192 with the given latent split.
  static CodecConfig full_scale(std::size_t m1, std::size_t m2);
  std::string to_string() const;

  bool operator==(const CodecConfig&) const = default;
};

struct LossBreakdown {
  double r_y1 = 0.0;  // bits per pixel, main + side of the base layer
  double r_y2 = 0.0;  // bits per pixel, main + side of the enhancement layer
  double d_x = 0.0;
  double d_s = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;
  double total = 0.0;

  static LossBreakdown compose(double r_y1, double r_y2, double d_x, double d_s, double lambda,
                               double gamma);
};

// Hyper-analysis on |y| (conv3s1 M->N, ReLU, conv5s2 N->N, ReLU, conv5s2
// N->N) and a mirrored hyper-synthesis (deconv5s2, ReLU, deconv5s2, ReLU,
// conv3s1 N->M) whose output is exponentiated into scales. The synthesis
// output is cropped to the latent's extent when that is not a multiple of 4.
class HyperPrior {
 public:
  HyperPrior() = default;
  HyperPrior(std::size_t latent_channels, std::size_t n, Rng& rng);

  Tensor analyze(const Tensor& y) const;
  // Scales for a latent of spatial size height x width, bounded below by
  // kScaleBound.
  Tensor scales(const Tensor& z_hat, std::size_t height, std::size_t width) const;
  void collect(const std::string& prefix, ParamList& out) const;

  std::array<Conv2dLayer, 3> analysis;
  Deconv2dLayer synthesis0;
  Deconv2dLayer synthesis1;
  Conv2dLayer synthesis2;
  FactorizedDensity density;
};

// Intermediate tensors of one latent branch.
struct BranchState {
  Tensor y;        // analysis output
  Tensor y_q;      // noisy (training) or rounded (inference) latent
  Tensor z;
  Tensor z_q;
  Tensor sigma;
  Tensor p_y;      // per-element likelihoods, floored
  Tensor p_z;
  double bits_y = 0.0;
  double bits_z = 0.0;
};

struct TrainForward {
  LossBreakdown loss;
  Tensor total;  // differentiable rate-distortion objective
  Tensor x;
  Tensor s;
  Tensor x_hat;  // unclamped
  Tensor s_hat;
  BranchState base;
  BranchState enhancement;
  std::size_t pixels = 0;
};

// The KL-divergence form of the objective for one forward pass, in bits per
// pixel with additive constants dropped. The distortion terms are Gaussian
// negative log-likelihoods whose variances are fixed by lambda and gamma.
struct VariationalTerms {
  double q_term = 0.0;  // log of the unit-width uniform posterior density at y~
  double nll_x = 0.0;
  double nll_s = 0.0;
  double nll_y1 = 0.0;
  double nll_y2 = 0.0;
  double total = 0.0;
};
VariationalTerms variational_terms(const TrainForward& f);

struct Inference {
  BranchState base;
  BranchState enhancement;
  Tensor s_hat;
  Tensor x_hat;  // clamped to [0, 1]
  std::size_t pixels = 0;

  double estimated_bits_base() const { return base.bits_y + base.bits_z; }
  double estimated_bits_enhancement() const { return enhancement.bits_y + enhancement.bits_z; }
};

struct Decoded {
  Tensor y1_hat;
  Tensor s_hat;
  std::optional<Tensor> y2_hat;
  std::optional<Tensor> x_hat;  // clamped to [0, 1]
};

class Codec {
 public:
  Codec(const CodecConfig& config, std::uint64_t seed);

  const CodecConfig& config() const { return config_; }

  Tensor analysis_s(const Tensor& x, const Tensor& s) const;
  Tensor analysis_x(const Tensor& x) const;
  Tensor synthesis_s(const Tensor& y1) const;
  // Unclamped.
  Tensor synthesis_x(const Tensor& y1, const Tensor& y2) const;

  // Noise-quantised pass producing R_y1 + R_y2 + lambda D_x + gamma D_s.
  // Throws on any non-finite loss term.
  TrainForward forward_train(const Tensor& x, const Tensor& s, double lambda, double gamma,
                             Rng& noise) const;
  // Rounded pass with rate estimates from the continuous models.
  Inference infer(const Tensor& x, const Tensor& s) const;

  LayeredBitstream encode(const Tensor& x, const Tensor& s) const;
  Decoded decode_full(const LayeredBitstream& bs) const;
  // Reads only the base substreams.
  Decoded decode_base(const LayeredBitstream& bs) const;

  // Rebuilds the side-information CDF tables from the current densities.
  // Must be called after training and before encode/decode.
  void update_tables();
  bool tables_ready() const { return side_tables_[0].has_value() && side_tables_[1].has_value(); }
  const QuantizedCdfTable& side_table(std::size_t branch) const;
  void set_side_table(std::size_t branch, QuantizedCdfTable table);

  ParamList parameters() const;

  HyperPrior& hyper(std::size_t branch) { return hyper_.at(branch); }
  const HyperPrior& hyper(std::size_t branch) const { return hyper_.at(branch); }

  std::uint64_t step = 0;

 private:
  void check_image(const Tensor& x) const;
  void check_features(const Tensor& x, const Tensor& s) const;
  BranchState run_branch(const HyperPrior& hp, const Tensor& y, Rng* noise) const;
  Tensor decode_branch(const std::vector<std::uint8_t>& main, const std::vector<std::uint8_t>& side,
                       std::size_t branch, std::size_t channels, std::size_t h,
                       std::size_t w) const;
  void check_header(const BitstreamHeader& h) const;

  CodecConfig config_;
  std::array<Conv2dLayer, 3> es_;
  std::array<GdnLayer, 2> es_gdn_;
  std::array<Conv2dLayer, 4> ex_;
  std::array<GdnLayer, 3> ex_gdn_;
  std::array<Deconv2dLayer, 3> ds_;
  std::array<GdnLayer, 2> ds_gdn_;
  std::array<Deconv2dLayer, 4> dx_;
  std::array<GdnLayer, 3> dx_gdn_;
  std::array<HyperPrior, 2> hyper_;
  std::array<std::optional<QuantizedCdfTable>, 2> side_tables_;
};

// Spatial extent of a hyper-latent for a latent of extent `latent`.
std::size_t hyper_latent_size(std::size_t latent);

}  // namespace ldlc

#endif  // LDLC_CODEC_HPP_
