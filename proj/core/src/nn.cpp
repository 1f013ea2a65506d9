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

#include "ldlc/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

#include "ldlc/error.hpp"
#include "ldlc/ops.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "nn-blocks";

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Products only ever see owned, aligned matrices. Eigen peels vectorised
// loops according to operand alignment, so running them on maps of tensor
// storage would make the rounding depend on where a buffer was allocated.
RowMat owned(const double* data, std::size_t rows, std::size_t cols) {
  return ConstMapMat(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void add_into(std::span<double> dst, const RowMat& m) {
  const double* src = m.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

struct Geometry {
  std::size_t channels, height, width;   // the "image" side
  std::size_t kernel, stride, padding;
  std::size_t out_h, out_w;              // the "patch grid" side
};

// cols[(c k + ki) k + kj][oy Wo + ox] = x[c][oy s - p + ki][ox s - p + kj]
void im2col(const double* x, const Geometry& g, double* cols) {
  const std::size_t patches = g.out_h * g.out_w;
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * patches;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + iy * w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-and-adds columns back onto the image.
void col2im(const double* cols, const Geometry& g, double* x) {
  const std::size_t patches = g.out_h * g.out_w;
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * patches;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= h) continue;
          const double* src = row + oy * g.out_w;
          double* dst = plane + iy * w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_rank3(const Tensor& x, const char* what) {
  if (x.rank() != 3) {
    throw Error(kModule, std::string(what) + ": expected C x H x W input, got " +
                             shape_string(x.shape()));
  }
}

}  // namespace

namespace nn {

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
  if (stride == 0) throw Error(kModule, "stride must be positive");
  const auto span = static_cast<std::ptrdiff_t>(in + 2 * padding) -
                    static_cast<std::ptrdiff_t>(kernel);
  if (span < 0) {
    throw Error(kModule, "non-positive output size: input " + std::to_string(in) +
                             " with kernel " + std::to_string(kernel) + " and padding " +
                             std::to_string(padding));
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

std::size_t deconv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding, std::size_t output_padding) {
  if (stride == 0 || in == 0) throw Error(kModule, "stride and input size must be positive");
  const auto out = static_cast<std::ptrdiff_t>((in - 1) * stride + kernel + output_padding) -
                   static_cast<std::ptrdiff_t>(2 * padding);
  if (out <= 0) throw Error(kModule, "non-positive transposed-convolution output size");
  return static_cast<std::size_t>(out);
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  check_rank3(x, "conv2d");
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw Error(kModule, "conv2d: weight must be C_out x C_in x k x k");
  }
  const std::size_t c_out = weight.dim(0), c_in = weight.dim(1), k = weight.dim(2);
  if (x.dim(0) != c_in) {
    throw Error(kModule, "conv2d: channel mismatch, input has " + std::to_string(x.dim(0)) +
                             " channels, weight expects " + std::to_string(c_in));
  }
  if (bias.numel() != c_out) throw Error(kModule, "conv2d: bias length mismatch");
  const Geometry g{c_in,
                   x.dim(1),
                   x.dim(2),
                   k,
                   stride,
                   padding,
                   conv_output_size(x.dim(1), k, stride, padding),
                   conv_output_size(x.dim(2), k, stride, padding)};
  const std::size_t patches = g.out_h * g.out_w;
  const std::size_t rows = c_in * k * k;

  auto cols = std::make_shared<RowMat>(static_cast<Eigen::Index>(rows),
                                       static_cast<Eigen::Index>(patches));
  im2col(x.data().data(), g, cols->data());

  const RowMat o = owned(weight.data().data(), c_out, rows) * *cols;
  std::vector<double> out(o.data(), o.data() + c_out * patches);
  const auto b = bias.data();
  for (std::size_t c = 0; c < c_out; ++c) {
    for (std::size_t i = 0; i < patches; ++i) out[c * patches + i] += b[c];
  }

  return make_result(
      "conv2d", Shape{c_out, g.out_h, g.out_w}, std::move(out), {x, weight, bias},
      [x, weight, bias, g, cols, c_out, rows, patches](std::span<const double> grad) {
        const RowMat go = owned(grad.data(), c_out, patches);
        if (auto gw = grad_buffer(weight); !gw.empty()) add_into(gw, go * cols->transpose());
        if (auto gb = grad_buffer(bias); !gb.empty()) {
          for (std::size_t c = 0; c < c_out; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < patches; ++i) acc += grad[c * patches + i];
            gb[c] += acc;
          }
        }
        if (auto gx = grad_buffer(x); !gx.empty()) {
          const RowMat dcols = owned(weight.data().data(), c_out, rows).transpose() * go;
          col2im(dcols.data(), g, gx.data());
        }
      });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        std::size_t stride, std::size_t padding, std::size_t output_padding) {
  check_rank3(x, "conv_transpose2d");
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw Error(kModule, "conv_transpose2d: weight must be C_in x C_out x k x k");
  }
  const std::size_t c_in = weight.dim(0), c_out = weight.dim(1), k = weight.dim(2);
  if (x.dim(0) != c_in) {
    throw Error(kModule, "conv_transpose2d: channel mismatch, input has " +
                             std::to_string(x.dim(0)) + " channels, weight expects " +
                             std::to_string(c_in));
  }
  if (bias.numel() != c_out) throw Error(kModule, "conv_transpose2d: bias length mismatch");
  if (output_padding >= stride && output_padding > 0) {
    throw Error(kModule, "conv_transpose2d: output_padding must be smaller than stride");
  }
  const std::size_t out_h = deconv_output_size(x.dim(1), k, stride, padding, output_padding);
  const std::size_t out_w = deconv_output_size(x.dim(2), k, stride, padding, output_padding);
  // The output plays the image role and the input grid the patch role.
  const Geometry g{c_out, out_h, out_w, k, stride, padding, x.dim(1), x.dim(2)};
  const std::size_t pixels = x.dim(1) * x.dim(2);
  const std::size_t rows = c_out * k * k;

  const RowMat cols = owned(weight.data().data(), c_in, rows).transpose() *
                      owned(x.data().data(), c_in, pixels);
  std::vector<double> out(c_out * out_h * out_w, 0.0);
  col2im(cols.data(), g, out.data());
  const auto b = bias.data();
  for (std::size_t c = 0; c < c_out; ++c) {
    auto* plane = out.data() + c * out_h * out_w;
    for (std::size_t i = 0; i < out_h * out_w; ++i) plane[i] += b[c];
  }

  return make_result(
      "conv_transpose2d", Shape{c_out, out_h, out_w}, std::move(out), {x, weight, bias},
      [x, weight, bias, g, c_in, c_out, rows, pixels](std::span<const double> grad) {
        RowMat gc(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(pixels));
        im2col(grad.data(), g, gc.data());
        if (auto gx = grad_buffer(x); !gx.empty()) {
          add_into(gx, owned(weight.data().data(), c_in, rows) * gc);
        }
        if (auto gw = grad_buffer(weight); !gw.empty()) {
          add_into(gw, owned(x.data().data(), c_in, pixels) * gc.transpose());
        }
        if (auto gb = grad_buffer(bias); !gb.empty()) {
          const std::size_t plane = g.height * g.width;
          for (std::size_t c = 0; c < c_out; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += grad[c * plane + i];
            gb[c] += s;
          }
        }
      });
}

// Products run on owned (aligned) Eigen matrices and everything else in plain
// loops: vectorised Eigen expressions over tensor storage peel differently
// depending on buffer alignment, which would make results depend on where a
// tensor happens to live.
Tensor gdn(const Tensor& x, const Tensor& beta, const Tensor& gamma, bool inverse) {
  check_rank3(x, "gdn");
  const std::size_t c = x.dim(0);
  const std::size_t p = x.dim(1) * x.dim(2);
  if (beta.numel() != c || gamma.numel() != c * c) {
    throw Error(kModule, "gdn: beta/gamma do not match " + std::to_string(c) + " channels");
  }
  const auto ci = static_cast<Eigen::Index>(c);
  const auto pi = static_cast<Eigen::Index>(p);
  const auto xv = x.data();
  const auto bv = beta.data();
  auto sq = std::make_shared<RowMat>(ci, pi);
  for (std::size_t i = 0; i < c * p; ++i) sq->data()[i] = xv[i] * xv[i];
  const RowMat gm = ConstMapMat(gamma.data().data(), ci, ci);
  auto norm = std::make_shared<RowMat>(ci, pi);
  norm->noalias() = gm * *sq;
  double* nv = norm->data();
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t k = 0; k < p; ++k) nv[i * p + k] += bv[i];
  }

  std::vector<double> out(c * p);
  for (std::size_t i = 0; i < c * p; ++i) {
    const double root = std::sqrt(nv[i]);
    out[i] = inverse ? xv[i] * root : xv[i] / root;
  }

  return make_result(
      "gdn", x.shape(), std::move(out), {x, beta, gamma},
      [x, beta, gamma, sq, norm, inverse, c, p, ci, pi](std::span<const double> grad) {
        const auto xv = x.data();
        const double* nv = norm->data();
        // d(loss)/d(norm) at each element.
        RowMat dnorm(ci, pi);
        double* dv = dnorm.data();
        for (std::size_t i = 0; i < c * p; ++i) {
          const double root = std::sqrt(nv[i]);
          dv[i] = inverse ? grad[i] * xv[i] * 0.5 / root : -0.5 * grad[i] * xv[i] / (nv[i] * root);
        }
        if (auto gx = grad_buffer(x); !gx.empty()) {
          const RowMat gm = ConstMapMat(gamma.data().data(), ci, ci);
          const RowMat back = gm.transpose() * dnorm;
          const double* bk = back.data();
          for (std::size_t i = 0; i < c * p; ++i) {
            const double root = std::sqrt(nv[i]);
            const double direct = inverse ? grad[i] * root : grad[i] / root;
            gx[i] += direct + 2.0 * xv[i] * bk[i];
          }
        }
        if (auto gb = grad_buffer(beta); !gb.empty()) {
          for (std::size_t i = 0; i < c; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < p; ++k) acc += dv[i * p + k];
            gb[i] += acc;
          }
        }
        if (auto gg = grad_buffer(gamma); !gg.empty()) {
          const RowMat dg = dnorm * sq->transpose();
          for (std::size_t i = 0; i < c * c; ++i) gg[i] += dg.data()[i];
        }
      });
}

double cubic_kernel(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::vector<std::array<std::size_t, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

Taps cubic_taps(std::size_t in, std::size_t out) {
  Taps taps;
  taps.index.resize(out);
  taps.weight.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const auto last = static_cast<std::ptrdiff_t>(in) - 1;
  for (std::size_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    for (int j = 0; j < 4; ++j) {
      const auto idx = static_cast<std::ptrdiff_t>(base) - 1 + j;
      taps.index[o][static_cast<std::size_t>(j)] =
          static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, last));
      taps.weight[o][static_cast<std::size_t>(j)] = cubic_kernel(t - (j - 1));
    }
  }
  return taps;
}

}  // namespace

Tensor resize_bicubic(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  check_rank3(x, "resize_bicubic");
  if (out_h == 0 || out_w == 0) throw Error(kModule, "resize_bicubic: degenerate target size");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (out_h == h && out_w == w) return x.detach();
  const Taps th = cubic_taps(h, out_h);
  const Taps tw = cubic_taps(w, out_w);
  const auto in = x.data();
  std::vector<double> horizontal(c * h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* row = in.data() + (ch * h + y) * w;
      double* dst = horizontal.data() + (ch * h + y) * out_w;
      for (std::size_t o = 0; o < out_w; ++o) {
        double s = 0.0;
        for (std::size_t j = 0; j < 4; ++j) s += tw.weight[o][j] * row[tw.index[o][j]];
        dst[o] = s;
      }
    }
  }
  std::vector<double> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = horizontal.data() + ch * h * out_w;
    for (std::size_t o = 0; o < out_h; ++o) {
      double* dst = out.data() + (ch * out_h + o) * out_w;
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        double s = 0.0;
        for (std::size_t j = 0; j < 4; ++j) s += th.weight[o][j] * plane[th.index[o][j] * out_w + xx];
        dst[xx] = s;
      }
    }
  }
  return Tensor(Shape{c, out_h, out_w}, std::move(out));
}

}  // namespace nn

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  const auto n = shape_numel(shape);
  std::vector<double> v(n);
  for (auto& e : v) e = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

Conv2dLayer::Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                         std::size_t stride_, std::size_t padding_, Rng& rng)
    : stride(stride_), padding(padding_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel));
  weight = uniform_tensor({out_channels, in_channels, kernel, kernel}, bound, rng);
  bias = uniform_tensor({out_channels}, bound, rng);
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
  return nn::conv2d(x, weight, bias, stride, padding);
}

void Conv2dLayer::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Deconv2dLayer::Deconv2dLayer(std::size_t in_channels, std::size_t out_channels,
                             std::size_t kernel, std::size_t stride_, std::size_t padding_,
                             std::size_t output_padding_, Rng& rng)
    : stride(stride_), padding(padding_), output_padding(output_padding_) {
  // Each output pixel sees about C_in k^2 / s^2 weighted inputs.
  const double fan_in = static_cast<double>(in_channels * kernel * kernel) /
                        static_cast<double>(stride_ * stride_);
  const double bound = 1.0 / std::sqrt(fan_in);
  weight = uniform_tensor({in_channels, out_channels, kernel, kernel}, bound, rng);
  bias = uniform_tensor({out_channels}, bound, rng);
}

Tensor Deconv2dLayer::forward(const Tensor& x) const {
  return nn::conv_transpose2d(x, weight, bias, stride, padding, output_padding);
}

void Deconv2dLayer::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

GdnLayer::GdnLayer(std::size_t channels, bool inverse_) : inverse(inverse_) {
  std::vector<double> beta(channels, 1.0);
  std::vector<double> gamma(channels * channels, 0.0);
  for (std::size_t i = 0; i < channels; ++i) gamma[i * channels + i] = kGammaInit;
  beta_raw = Tensor({channels}, std::vector<double>(channels), true);
  gamma_raw = Tensor({channels, channels}, std::vector<double>(channels * channels), true);
  set_effective(beta, gamma);
}

void GdnLayer::set_effective(const std::vector<double>& beta, const std::vector<double>& gamma) {
  auto br = beta_raw.mutable_data();
  auto gr = gamma_raw.mutable_data();
  for (std::size_t i = 0; i < br.size(); ++i) {
    br[i] = std::sqrt(std::max(beta[i], kBetaMin) + kPedestal);
  }
  for (std::size_t i = 0; i < gr.size(); ++i) gr[i] = std::sqrt(std::max(gamma[i], 0.0) + kPedestal);
}

Tensor GdnLayer::beta() const {
  const Tensor bounded = ops::lower_bound(beta_raw, std::sqrt(kBetaMin + kPedestal));
  return ops::add_scalar(ops::square(bounded), -kPedestal);
}

Tensor GdnLayer::gamma() const {
  const Tensor bounded = ops::lower_bound(gamma_raw, std::sqrt(kPedestal));
  return ops::add_scalar(ops::square(bounded), -kPedestal);
}

Tensor GdnLayer::forward(const Tensor& x) const { return nn::gdn(x, beta(), gamma(), inverse); }

void GdnLayer::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".beta", beta_raw});
  out.push_back({prefix + ".gamma", gamma_raw});
}

}  // namespace ldlc
