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

#ifndef LDLC_IMAGE_IO_HPP_
#define LDLC_IMAGE_IO_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ldlc/rng.hpp"
#include "ldlc/tensor.hpp"

namespace ldlc {

// Images are 3 x H x W tensors with values on [0, 1].

Tensor decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Tensor& image);
Tensor decode_png(std::span<const std::uint8_t> bytes);

// Reads binary PPM (P6, maxval 255) or 8-bit PNG, chosen by file signature.
Tensor load_image(const std::string& path);
void save_ppm(const std::string& path, const Tensor& image);
// Writes an H x W plane (rank 2, or rank 3 with one channel) as 8-bit
// binary PGM after clamping to [0, 1].
void save_pgm(const std::string& path, const Tensor& plane);

// Largest centred window whose sides are multiples of `multiple`. Sets
// `cropped` when the input was not already aligned.
Tensor center_crop_multiple(const Tensor& image, std::size_t multiple, bool* cropped = nullptr);
Tensor random_crop(const Tensor& image, std::size_t size, Rng& rng);

// Procedural images: a colour gradient, a Gabor texture and a few random
// rectangles. Image i depends only on (seed, i, size).
std::vector<Tensor> synthesize_corpus(std::uint64_t seed, std::size_t count, std::size_t size);

}  // namespace ldlc

#endif  // LDLC_IMAGE_IO_HPP_
