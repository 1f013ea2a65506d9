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

#include "ldlc/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ldlc/error.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "range-coder";
constexpr std::uint32_t kTop = 1u << 24;

void check_cdf_symbol(std::uint32_t symbol, CdfView cdf) {
  if (cdf.size() < 2 || symbol + 1 >= cdf.size()) {
    throw Error(kModule, "symbol " + std::to_string(symbol) + " outside table support of " +
                             std::to_string(cdf.empty() ? 0 : cdf.size() - 1) + " symbols");
  }
  if (cdf[symbol + 1] <= cdf[symbol]) {
    throw Error(kModule, "symbol " + std::to_string(symbol) + " has zero probability");
  }
}

}  // namespace

void RangeEncoder::encode(std::uint32_t start, std::uint32_t size, int precision_bits) {
  if (finished_) throw Error(kModule, "encoder already finished");
  const std::uint32_t r = range_ >> precision_bits;
  low_ += static_cast<std::uint64_t>(r) * start;
  range_ = r * size;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode_symbol(std::uint32_t symbol, CdfView cdf) {
  check_cdf_symbol(symbol, cdf);
  encode(cdf[symbol], cdf[symbol + 1] - cdf[symbol]);
}

void RangeEncoder::encode_bits(std::uint32_t value, int bits) {
  if (bits <= 0 || bits > 16) throw Error(kModule, "raw bit count must be in [1, 16]");
  encode(value & ((1u << bits) - 1u), 1, bits);
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t pending = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(pending + carry));
      pending = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  if (finished_) throw Error(kModule, "encoder already finished");
  for (int i = 0; i < 5; ++i) shift_low();
  finished_ = true;
  // The first byte only holds carries out of the initial interval, which
  // cannot occur because coded intervals are nested inside [0, 2^32).
  out_.erase(out_.begin());
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= bytes_.size()) {
    throw Error(kModule, "truncated stream: read past " + std::to_string(bytes_.size()) +
                             " bytes");
  }
  return bytes_[pos_++];
}

void RangeDecoder::normalize() {
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

std::uint32_t RangeDecoder::decode_symbol(CdfView cdf) {
  if (cdf.size() < 2) throw Error(kModule, "empty cdf");
  const std::uint32_t r = range_ >> kProbabilityBits;
  const std::uint32_t target = std::min<std::uint32_t>(code_ / r, kProbabilityTotal - 1);
  // Last s with cdf[s] <= target.
  const auto it = std::upper_bound(cdf.begin(), cdf.end() - 1, target);
  auto symbol = static_cast<std::uint32_t>(std::distance(cdf.begin(), it)) - 1;
  // Zero-mass symbols cannot be hit by a valid stream; skip them on corrupt
  // input so the arithmetic below stays well defined.
  while (symbol + 2 < cdf.size() && cdf[symbol + 1] == cdf[symbol]) ++symbol;
  const std::uint32_t start = cdf[symbol];
  const std::uint32_t size = cdf[symbol + 1] - start;
  code_ -= r * start;
  range_ = r * size;
  normalize();
  return symbol;
}

std::uint32_t RangeDecoder::decode_bits(int bits) {
  if (bits <= 0 || bits > 16) throw Error(kModule, "raw bit count must be in [1, 16]");
  const std::uint32_t r = range_ >> bits;
  const std::uint32_t value = std::min<std::uint32_t>(code_ / r, (1u << bits) - 1u);
  code_ -= r * value;
  range_ = r;
  normalize();
  return value;
}

std::vector<std::uint8_t> encode_symbols(std::span<const std::uint32_t> symbols,
                                         std::span<const std::uint32_t> indexes,
                                         std::span<const CdfView> cdfs) {
  if (symbols.size() != indexes.size()) throw Error(kModule, "symbols/indexes length mismatch");
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (indexes[i] >= cdfs.size()) throw Error(kModule, "table index out of range");
    enc.encode_symbol(symbols[i], cdfs[indexes[i]]);
  }
  return enc.finish();
}

std::vector<std::uint32_t> decode_symbols(std::span<const std::uint8_t> bytes,
                                          std::span<const std::uint32_t> indexes,
                                          std::span<const CdfView> cdfs) {
  RangeDecoder dec(bytes);
  std::vector<std::uint32_t> out(indexes.size());
  for (std::size_t i = 0; i < indexes.size(); ++i) {
    if (indexes[i] >= cdfs.size()) throw Error(kModule, "table index out of range");
    out[i] = dec.decode_symbol(cdfs[indexes[i]]);
  }
  return out;
}

double ideal_code_bits(std::span<const std::uint32_t> symbols,
                       std::span<const std::uint32_t> indexes, std::span<const CdfView> cdfs) {
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const auto cdf = cdfs[indexes[i]];
    const double p = static_cast<double>(cdf[symbols[i] + 1] - cdf[symbols[i]]) /
                     static_cast<double>(kProbabilityTotal);
    bits -= std::log2(p);
  }
  return bits;
}

}  // namespace ldlc
