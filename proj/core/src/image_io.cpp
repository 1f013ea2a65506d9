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

#include "ldlc/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <csetjmp>
#include <cctype>
#include <cmath>
#include <cstring>
#include <numbers>

#include "ldlc/binary_io.hpp"
#include "ldlc/error.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "harness-cli";

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (std::isspace(bytes[pos])) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
  if (tok.empty()) throw Error(kModule, "truncated PPM header");
  return tok;
}

std::size_t ppm_number(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  const std::string tok = ppm_token(bytes, pos);
  if (!std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
      tok.size() > 9) {
    throw Error(kModule, "bad PPM header field '" + tok + "'");
  }
  return std::stoul(tok);
}

struct PngSource {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
  std::string error;
};

void png_read_span(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<PngSource*>(png_get_io_ptr(png));
  if (src->pos + n > src->bytes.size()) png_error(png, "truncated PNG data");
  std::memcpy(out, src->bytes.data() + src->pos, n);
  src->pos += n;
}

void png_fail(png_structp png, png_const_charp msg) {
  static_cast<PngSource*>(png_get_error_ptr(png))->error = msg;
  png_longjmp(png, 1);
}
void png_warn(png_structp, png_const_charp) {}

}  // namespace

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  if (ppm_token(bytes, pos) != "P6") throw Error(kModule, "not a binary PPM (P6) image");
  const std::size_t w = ppm_number(bytes, pos);
  const std::size_t h = ppm_number(bytes, pos);
  const std::size_t maxval = ppm_number(bytes, pos);
  if (w == 0 || h == 0) throw Error(kModule, "PPM has zero size");
  if (maxval != 255) throw Error(kModule, "only 8-bit PPM (maxval 255) is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error(kModule, "bad PPM header");
  ++pos;
  if (bytes.size() - pos < 3 * w * h) throw Error(kModule, "truncated PPM pixel data");
  std::vector<double> data(3 * h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t c = 0; c < 3; ++c) data[c * h * w + i] = bytes[pos + 3 * i + c] / 255.0;
  }
  return Tensor({3, h, w}, std::move(data));
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw Error(kModule, "PPM output needs a 3 x H x W image, got " + shape_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto d = image.data();
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t c = 0; c < 3; ++c) out.push_back(to_byte(d[c * h * w + i]));
  }
  return out;
}

Tensor decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(kModule, "not a PNG image");
  }
  PngSource src{bytes, 0, {}};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &src, png_fail, png_warn);
  if (!png) throw Error(kModule, "PNG: cannot allocate decoder");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(kModule, "PNG: cannot allocate info");
  }
  // Declared before setjmp so a longjmp never skips their destructors.
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  std::size_t w = 0, h = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(kModule, "PNG: " + src.error);
  }
  png_set_read_fn(png, &src, png_read_span);
  png_read_info(png, info);
  const auto depth = png_get_bit_depth(png, info);
  const auto type = png_get_color_type(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if ((type == PNG_COLOR_TYPE_GRAY || type == PNG_COLOR_TYPE_GRAY_ALPHA) && depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (type == PNG_COLOR_TYPE_GRAY || type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  if (stride != 3 * w) {
    src.error = "unexpected row layout";
    png_longjmp(png, 1);
  }
  pixels.resize(h * stride);
  rows.resize(h);
  for (std::size_t i = 0; i < h; ++i) rows[i] = pixels.data() + i * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::vector<double> data(3 * h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t c = 0; c < 3; ++c) data[c * h * w + i] = pixels[3 * i + c] / 255.0;
  }
  return Tensor({3, h, w}, std::move(data));
}

Tensor load_image(const std::string& path) {
  const auto bytes = bio::read_file(path, kModule);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes);
  throw Error(kModule, "unsupported image format in " + path + " (expected P6 PPM or PNG)");
}

void save_ppm(const std::string& path, const Tensor& image) {
  bio::write_file(path, encode_ppm(image), kModule);
}

void save_pgm(const std::string& path, const Tensor& plane) {
  std::size_t h = 0, w = 0;
  if (plane.rank() == 2) {
    h = plane.dim(0);
    w = plane.dim(1);
  } else if (plane.rank() == 3 && plane.dim(0) == 1) {
    h = plane.dim(1);
    w = plane.dim(2);
  } else {
    throw Error(kModule, "PGM output needs a single plane, got " + shape_string(plane.shape()));
  }
  const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : plane.data()) out.push_back(to_byte(v));
  bio::write_file(path, out, kModule);
}

Tensor center_crop_multiple(const Tensor& image, std::size_t multiple, bool* cropped) {
  if (image.rank() != 3) throw Error(kModule, "expected a C x H x W image");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::size_t nh = h / multiple * multiple, nw = w / multiple * multiple;
  if (nh == 0 || nw == 0) {
    throw Error(kModule, "image " + std::to_string(h) + "x" + std::to_string(w) +
                             " is smaller than " + std::to_string(multiple) + " pixels");
  }
  if (cropped) *cropped = nh != h || nw != w;
  if (nh == h && nw == w) return image;
  const std::size_t top = (h - nh) / 2, left = (w - nw) / 2;
  std::vector<double> out(c * nh * nw);
  const auto d = image.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < nh; ++i) {
      for (std::size_t j = 0; j < nw; ++j) {
        out[(ch * nh + i) * nw + j] = d[(ch * h + top + i) * w + left + j];
      }
    }
  }
  return Tensor({c, nh, nw}, std::move(out));
}

Tensor random_crop(const Tensor& image, std::size_t size, Rng& rng) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (size > h || size > w) throw Error(kModule, "crop larger than image");
  const std::size_t top = rng.below(h - size + 1), left = rng.below(w - size + 1);
  std::vector<double> out(c * size * size);
  const auto d = image.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) {
        out[(ch * size + i) * size + j] = d[(ch * h + top + i) * w + left + j];
      }
    }
  }
  return Tensor({c, size, size}, std::move(out));
}

std::vector<Tensor> synthesize_corpus(std::uint64_t seed, std::size_t count, std::size_t size) {
  if (size == 0) throw Error(kModule, "synthetic image size must be positive");
  std::vector<Tensor> images;
  images.reserve(count);
  const double s = static_cast<double>(size);
  for (std::size_t n = 0; n < count; ++n) {
    Rng rng(seed ^ (0xD1B54A32D192ED03ull * (n + 1)));
    std::vector<double> img(3 * size * size);

    std::array<double, 3> c0{}, c1{}, tint{};
    for (auto& v : c0) v = rng.uniform(0.1, 0.9);
    for (auto& v : c1) v = rng.uniform(0.1, 0.9);
    for (auto& v : tint) v = rng.uniform(-1.0, 1.0);
    const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = rng.uniform(0.08, 0.3);
    const double freq = rng.uniform(0.04, 0.3);
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double env = rng.uniform(0.25, 0.6) * s;
    const double cy = rng.uniform(0.0, s), cx = rng.uniform(0.0, s);

    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) {
        const double u = static_cast<double>(i) / s, v = static_cast<double>(j) / s;
        const double t = 0.5 + 0.5 * ((u - 0.5) * std::cos(dir) + (v - 0.5) * std::sin(dir)) * 1.4;
        const double dy = static_cast<double>(i) - cy, dx = static_cast<double>(j) - cx;
        const double along = dx * std::cos(theta) + dy * std::sin(theta);
        const double gabor = amp * std::exp(-(dx * dx + dy * dy) / (2.0 * env * env)) *
                             std::cos(2.0 * std::numbers::pi * freq * along + phase);
        for (std::size_t c = 0; c < 3; ++c) {
          img[(c * size + i) * size + j] = c0[c] + (c1[c] - c0[c]) * t + gabor * (0.6 + 0.4 * tint[c]);
        }
      }
    }

    const std::size_t rects = 1 + rng.below(4);
    for (std::size_t r = 0; r < rects; ++r) {
      const std::size_t h = 1 + rng.below(size / 2 + 1), w = 1 + rng.below(size / 2 + 1);
      const std::size_t top = rng.below(size - std::min(h, size) + 1);
      const std::size_t left = rng.below(size - std::min(w, size) + 1);
      const double alpha = rng.uniform(0.5, 1.0);
      std::array<double, 3> color{};
      for (auto& v : color) v = rng.uniform(0.0, 1.0);
      for (std::size_t i = top; i < std::min(size, top + h); ++i) {
        for (std::size_t j = left; j < std::min(size, left + w); ++j) {
          for (std::size_t c = 0; c < 3; ++c) {
            double& px = img[(c * size + i) * size + j];
            px = (1.0 - alpha) * px + alpha * color[c];
          }
        }
      }
    }
    for (auto& v : img) v = std::clamp(v, 0.0, 1.0);
    images.emplace_back(Shape{3, size, size}, std::move(img));
  }
  return images;
}

}  // namespace ldlc
