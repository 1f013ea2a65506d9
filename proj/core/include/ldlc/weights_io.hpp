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

#ifndef LDLC_WEIGHTS_IO_HPP_
#define LDLC_WEIGHTS_IO_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ldlc/codec.hpp"

namespace ldlc {

// LDLW model file, little endian:
//
//   magic "LDLW", u32 version (1)
//   u16 C_s, N, M1, M2, H
//   u64 vision-proxy seed, u64 training step
//   u32 parameter count, then per parameter:
//       u32 name length, UTF-8 name, TNSR tensor record
//   u32 table count (2), then per side-information table:
//       u32 byte length, serialised QuantizedCdfTable
inline constexpr std::uint32_t kWeightsVersion = 1;

struct Model {
  Codec codec;
  std::uint64_t vision_seed = 0;
};

std::vector<std::uint8_t> serialize_model(const Codec& codec, std::uint64_t vision_seed);
Model deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const std::string& path, const Codec& codec, std::uint64_t vision_seed);
Model load_model(const std::string& path);

// Copies parameter values from `src` into `dst`; both must share a config.
void copy_parameters(const Codec& src, Codec& dst);

}  // namespace ldlc

#endif  // LDLC_WEIGHTS_IO_HPP_
