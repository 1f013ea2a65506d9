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

#ifndef LDLC_BITSTREAM_HPP_
#define LDLC_BITSTREAM_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace ldlc {

// LDLC container, all integers little endian:
//
//   offset size  field
//   0      4     magic "LDLC"
//   4      1     version (1)
//   5      2     C_s
//   7      2     N
//   9      2     M1
//   11     2     M2
//   13     2     H (hyperprior blocks per branch)
//   15     2     image height
//   17     2     image width
//   19     1     flags (bit 0: enhancement layer present)
//   20     ...   substreams in order base-main, base-side, enh-main, enh-side,
//                each as u32 length, u32 CRC-32 of the payload, payload.
//
// The base layer occupies a prefix of the file, so a stream cut right after
// the base-side substream is still decodable in base-only mode.
inline constexpr std::uint8_t kBitstreamVersion = 1;
inline constexpr std::size_t kBitstreamHeaderBytes = 20;
inline constexpr std::size_t kSubstreamFrameBytes = 8;
inline constexpr std::uint8_t kFlagEnhancement = 0x01;

enum class Substream : std::size_t { kBaseMain = 0, kBaseSide = 1, kEnhMain = 2, kEnhSide = 3 };
std::string_view substream_name(Substream s);

struct BitstreamHeader {
  std::uint16_t c_s = 0;
  std::uint16_t n = 0;
  std::uint16_t m1 = 0;
  std::uint16_t m2 = 0;
  std::uint16_t hyper_blocks = 1;
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint8_t flags = kFlagEnhancement;

  bool operator==(const BitstreamHeader&) const = default;
};

struct LayeredBitstream {
  BitstreamHeader header;
  std::array<std::vector<std::uint8_t>, 4> parts;
  // False when only the base layer was unpacked.
  bool has_enhancement = true;

  const std::vector<std::uint8_t>& part(Substream s) const {
    return parts[static_cast<std::size_t>(s)];
  }
  std::vector<std::uint8_t>& part(Substream s) { return parts[static_cast<std::size_t>(s)]; }

  bool operator==(const LayeredBitstream&) const = default;
};

enum class UnpackMode { kFull, kBaseOnly };

struct UnpackOptions {
  UnpackMode mode = UnpackMode::kFull;
  // Test hook: skip CRC verification so corrupted payloads reach the decoder.
  bool verify_checksums = true;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> pack_bitstream(const LayeredBitstream& bs);
// Byte count of the base-layer prefix (header plus both base substreams).
std::size_t base_layer_bytes(const LayeredBitstream& bs);
LayeredBitstream unpack_bitstream(std::span<const std::uint8_t> bytes,
                                  const UnpackOptions& options = {});

}  // namespace ldlc

#endif  // LDLC_BITSTREAM_HPP_
