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

#include "ldlc/bitstream.hpp"

#include <zlib.h>

#include <string>

#include "ldlc/binary_io.hpp"
#include "ldlc/error.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "range-coder";
constexpr std::string_view kMagic = "LDLC";

}  // namespace

std::string_view substream_name(Substream s) {
  switch (s) {
    case Substream::kBaseMain: return "base-main";
    case Substream::kBaseSide: return "base-side";
    case Substream::kEnhMain: return "enh-main";
    case Substream::kEnhSide: return "enh-side";
  }
  return "unknown";
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> pack_bitstream(const LayeredBitstream& bs) {
  std::vector<std::uint8_t> out;
  for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
  out.push_back(kBitstreamVersion);
  const auto& h = bs.header;
  for (std::uint16_t v : {h.c_s, h.n, h.m1, h.m2, h.hyper_blocks, h.height, h.width}) {
    bio::put_le<std::uint16_t>(out, v);
  }
  const bool enh = (h.flags & kFlagEnhancement) != 0;
  out.push_back(h.flags);
  const std::size_t count = enh ? 4 : 2;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& payload = bs.parts[i];
    if (payload.size() > UINT32_MAX) throw Error(kModule, "substream too large");
    bio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(payload.size()));
    bio::put_le<std::uint32_t>(out, crc32(payload));
    bio::put_bytes(out, payload);
  }
  return out;
}

std::size_t base_layer_bytes(const LayeredBitstream& bs) {
  return kBitstreamHeaderBytes + 2 * kSubstreamFrameBytes + bs.parts[0].size() +
         bs.parts[1].size();
}

LayeredBitstream unpack_bitstream(std::span<const std::uint8_t> bytes,
                                  const UnpackOptions& options) {
  if (bytes.size() < kBitstreamHeaderBytes) throw Error(kModule, "stream shorter than header");
  bio::Reader r(bytes, kModule);
  const auto magic = r.get_bytes(4);
  if (std::string_view(reinterpret_cast<const char*>(magic.data()), 4) != kMagic) {
    throw Error(kModule, "bad magic, not an LDLC bitstream");
  }
  const auto version = r.get_le<std::uint8_t>();
  if (version != kBitstreamVersion) {
    throw Error(kModule, "unsupported bitstream version " + std::to_string(version));
  }
  LayeredBitstream bs;
  auto& h = bs.header;
  h.c_s = r.get_le<std::uint16_t>();
  h.n = r.get_le<std::uint16_t>();
  h.m1 = r.get_le<std::uint16_t>();
  h.m2 = r.get_le<std::uint16_t>();
  h.hyper_blocks = r.get_le<std::uint16_t>();
  h.height = r.get_le<std::uint16_t>();
  h.width = r.get_le<std::uint16_t>();
  h.flags = r.get_le<std::uint8_t>();

  const bool stream_has_enh = (h.flags & kFlagEnhancement) != 0;
  const bool want_enh = options.mode == UnpackMode::kFull;
  if (want_enh && !stream_has_enh) {
    throw Error(kModule, "stream carries no enhancement layer; use base-only mode");
  }
  const std::size_t count = want_enh ? 4 : 2;
  for (std::size_t i = 0; i < count; ++i) {
    const auto name = std::string(substream_name(static_cast<Substream>(i)));
    if (r.remaining() < kSubstreamFrameBytes) {
      throw Error(kModule, "truncated stream: missing " + name + " substream");
    }
    const auto length = r.get_le<std::uint32_t>();
    const auto expected_crc = r.get_le<std::uint32_t>();
    if (r.remaining() < length) {
      throw Error(kModule, "length overrun in " + name + " substream: declares " +
                               std::to_string(length) + " bytes, " +
                               std::to_string(r.remaining()) + " available");
    }
    const auto payload = r.get_bytes(length);
    if (options.verify_checksums && crc32(payload) != expected_crc) {
      throw Error(kModule, "checksum mismatch in " + name + " substream");
    }
    bs.parts[i].assign(payload.begin(), payload.end());
  }
  if (want_enh && !r.at_end()) {
    throw Error(kModule, "trailing bytes after enh-side substream");
  }
  bs.has_enhancement = want_enh;
  return bs;
}

}  // namespace ldlc
