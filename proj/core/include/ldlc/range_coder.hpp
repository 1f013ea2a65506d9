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

#ifndef LDLC_RANGE_CODER_HPP_
#define LDLC_RANGE_CODER_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ldlc {

// Probabilities are integers out of 2^16.
inline constexpr int kProbabilityBits = 16;
inline constexpr std::uint32_t kProbabilityTotal = 1u << kProbabilityBits;

// A CDF over symbols 0..n-1 is n + 1 nondecreasing values with cdf[0] = 0
// and cdf[n] = 2^16; symbol s has mass cdf[s + 1] - cdf[s], which must be > 0
// for any symbol that is coded.
using CdfView = std::span<const std::uint32_t>;

// 32-bit range encoder: 64-bit low (33 bits live), 32-bit range kept >= 2^24
// by byte-wise renormalisation. Carries resolve through a cached byte plus a
// count of pending 0xFF bytes, so output is never rewritten.
class RangeEncoder {
 public:
  // Codes the interval [start, start + size) out of 2^precision_bits.
  void encode(std::uint32_t start, std::uint32_t size, int precision_bits = kProbabilityBits);
  void encode_symbol(std::uint32_t symbol, CdfView cdf);
  // Equiprobable raw bits, at most 16 per call.
  void encode_bits(std::uint32_t value, int bits);

  // Flushes and returns the stream. The encoder must not be reused.
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
  bool finished_ = false;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);

  std::uint32_t decode_symbol(CdfView cdf);
  std::uint32_t decode_bits(int bits);

  // Bytes consumed so far; equals the stream length once every symbol the
  // encoder wrote has been read.
  std::size_t position() const { return pos_; }

 private:
  std::uint8_t next_byte();
  void normalize();

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

// Codes symbols[i] with cdfs[indexes[i]].
std::vector<std::uint8_t> encode_symbols(std::span<const std::uint32_t> symbols,
                                         std::span<const std::uint32_t> indexes,
                                         std::span<const CdfView> cdfs);
std::vector<std::uint32_t> decode_symbols(std::span<const std::uint8_t> bytes,
                                          std::span<const std::uint32_t> indexes,
                                          std::span<const CdfView> cdfs);

// Ideal code length of symbols under their CDFs, in bits.
double ideal_code_bits(std::span<const std::uint32_t> symbols,
                       std::span<const std::uint32_t> indexes, std::span<const CdfView> cdfs);

}  // namespace ldlc

#endif  // LDLC_RANGE_CODER_HPP_
