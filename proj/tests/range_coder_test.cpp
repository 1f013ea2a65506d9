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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "ldlc/bitstream.hpp"
#include "ldlc/error.hpp"
#include "ldlc/range_coder.hpp"
#include "ldlc/rng.hpp"

namespace ldlc {
namespace {

using Bytes = std::vector<std::uint8_t>;

// Random strictly increasing CDF with n symbols.
std::vector<std::uint32_t> random_cdf(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(0.0, 1.0) + 1e-3;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<std::uint32_t> mass(n);
  std::uint32_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mass[i] = 1 + static_cast<std::uint32_t>((kProbabilityTotal - n) * (w[i] / total));
    used += mass[i];
  }
  mass[0] += kProbabilityTotal - used;
  std::vector<std::uint32_t> cdf{0};
  for (auto m : mass) cdf.push_back(cdf.back() + m);
  return cdf;
}

std::vector<std::uint32_t> uniform_cdf(std::size_t n) {
  std::vector<std::uint32_t> cdf(n + 1);
  for (std::size_t i = 0; i <= n; ++i) cdf[i] = static_cast<std::uint32_t>(i * kProbabilityTotal / n);
  return cdf;
}

std::uint32_t sample(const std::vector<std::uint32_t>& cdf, Rng& rng) {
  const auto u = static_cast<std::uint32_t>(rng.below(kProbabilityTotal));
  return static_cast<std::uint32_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin() - 1);
}

Bytes read_hex(const std::string& name) {
  std::ifstream in(std::string(LDLC_TEST_DATA_DIR) + "/" + name);
  EXPECT_TRUE(in) << name;
  Bytes out;
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::getline(in, tok);
      continue;
    }
    out.push_back(static_cast<std::uint8_t>(std::stoul(tok, nullptr, 16)));
  }
  return out;
}

struct Case {
  std::vector<std::vector<std::uint32_t>> tables;
  std::vector<std::uint32_t> symbols, indexes;

  std::vector<CdfView> views() const { return {tables.begin(), tables.end()}; }
};

Case random_case(Rng& rng, std::size_t max_symbols) {
  Case c;
  const std::size_t ntables = 1 + rng.below(4);
  for (std::size_t t = 0; t < ntables; ++t) {
    const std::size_t kind = rng.below(3);
    const std::size_t n = kind == 0 ? 2 : kind == 1 ? 2 + rng.below(30) : 256;
    c.tables.push_back(random_cdf(n, rng));
  }
  const std::size_t count = rng.below(max_symbols + 1);
  for (std::size_t i = 0; i < count; ++i) {
    c.indexes.push_back(static_cast<std::uint32_t>(rng.below(ntables)));
    c.symbols.push_back(sample(c.tables[c.indexes.back()], rng));
  }
  return c;
}

TEST(RangeCoderTest, EmptyStreamIsFlushOnly) {
  const Bytes bytes = encode_symbols({}, {}, {});
  EXPECT_LE(bytes.size(), 8u);
  EXPECT_TRUE(decode_symbols(bytes, {}, {}).empty());
}

TEST(RangeCoderTest, UniformByteTableCostsOneBytePerSymbol) {
  Rng rng(1);
  const auto cdf = uniform_cdf(256);
  const std::vector<CdfView> views{cdf};
  std::vector<std::uint32_t> symbols(10000), indexes(10000, 0);
  for (auto& s : symbols) s = static_cast<std::uint32_t>(rng.below(256));
  const Bytes bytes = encode_symbols(symbols, indexes, views);
  EXPECT_NEAR(static_cast<double>(bytes.size()), 10000.0, 100.0);
  EXPECT_EQ(decode_symbols(bytes, indexes, views), symbols);
}

TEST(RangeCoderTest, FuzzRoundTripAndRateBound) {
  Rng rng(2);
  for (int trial = 0; trial < 10000; ++trial) {
    const Case c = random_case(rng, 200);
    const auto views = c.views();
    const Bytes bytes = encode_symbols(c.symbols, c.indexes, views);
    ASSERT_EQ(decode_symbols(bytes, c.indexes, views), c.symbols) << "trial " << trial;
    ASSERT_LE(8.0 * bytes.size(), ideal_code_bits(c.symbols, c.indexes, views) + 64.0)
        << "trial " << trial;
  }
}

TEST(RangeCoderTest, RoundTripPerTableShape) {
  Rng rng(3);
  const std::vector<std::vector<std::uint32_t>> shapes{
      {0, 32768, 65536},                       // binary
      {0, 65000, 65400, 65530, 65535, 65536},  // skewed
      uniform_cdf(256)};
  for (const auto& cdf : shapes) {
    const std::vector<CdfView> views{cdf};
    std::vector<std::uint32_t> symbols, indexes(5000, 0);
    for (int i = 0; i < 5000; ++i) symbols.push_back(sample(cdf, rng));
    const Bytes bytes = encode_symbols(symbols, indexes, views);
    EXPECT_EQ(decode_symbols(bytes, indexes, views), symbols);
    EXPECT_LE(8.0 * bytes.size(), ideal_code_bits(symbols, indexes, views) + 64.0);
  }
}

TEST(RangeCoderTest, CarryPropagationStress) {
  // Long runs of the top symbol of a skewed table drive low toward 2^32.
  const std::vector<std::uint32_t> cdf{0, 1, 65536};
  const std::vector<CdfView> views{cdf};
  std::vector<std::uint32_t> symbols(20000, 1), indexes(20000, 0);
  for (std::size_t i = 997; i < symbols.size(); i += 1009) symbols[i] = 0;
  const Bytes bytes = encode_symbols(symbols, indexes, views);
  EXPECT_EQ(decode_symbols(bytes, indexes, views), symbols);
}

TEST(RangeCoderTest, RawBitsInterleaveWithSymbols) {
  Rng rng(4);
  const auto cdf = random_cdf(7, rng);
  std::vector<std::pair<int, std::uint32_t>> ops;
  RangeEncoder enc;
  for (int i = 0; i < 3000; ++i) {
    if (rng.below(2)) {
      const int bits = 1 + static_cast<int>(rng.below(16));
      const auto v = static_cast<std::uint32_t>(rng.below(1u << bits));
      enc.encode_bits(v, bits);
      ops.emplace_back(bits, v);
    } else {
      const auto s = sample(cdf, rng);
      enc.encode_symbol(s, cdf);
      ops.emplace_back(0, s);
    }
  }
  const Bytes bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (const auto& [bits, v] : ops) {
    ASSERT_EQ(bits ? dec.decode_bits(bits) : dec.decode_symbol(cdf), v);
  }
}

TEST(RangeCoderTest, RejectsBadInput) {
  const std::vector<std::uint32_t> cdf{0, 65536, 65536};
  RangeEncoder enc;
  EXPECT_THROW(enc.encode_symbol(1, cdf), Error);  // zero mass
  EXPECT_THROW(enc.encode_symbol(2, cdf), Error);  // outside support
  EXPECT_THROW(enc.encode_bits(0, 17), Error);
  EXPECT_THROW(enc.encode_bits(0, 0), Error);
  enc.finish();
  EXPECT_THROW(enc.finish(), Error);
  const std::vector<CdfView> views{cdf};
  const std::vector<std::uint32_t> s{0}, bad_index{1};
  EXPECT_THROW(encode_symbols(s, bad_index, views), Error);
  EXPECT_THROW(encode_symbols(s, {}, views), Error);
}

TEST(RangeCoderTest, TruncatedStreamThrows) {
  const auto cdf = uniform_cdf(256);
  const std::vector<CdfView> views{cdf};
  std::vector<std::uint32_t> symbols(100, 77), indexes(100, 0);
  const Bytes bytes = encode_symbols(symbols, indexes, views);
  EXPECT_THROW(decode_symbols(std::span(bytes).first(bytes.size() / 2), indexes, views), Error);
}

TEST(RangeCoderTest, GoldenStream) {
  // Fixed sequence over a fixed skewed table; bytes frozen on first release.
  const std::vector<std::uint32_t> cdf{0, 40000, 60000, 64000, 65535, 65536};
  const std::vector<CdfView> views{cdf};
  std::vector<std::uint32_t> symbols, indexes;
  for (std::uint32_t i = 0; i < 64; ++i) {
    symbols.push_back((i * 7 + i / 5) % 5);
    indexes.push_back(0);
  }
  const Bytes golden = read_hex("range_coder_golden.hex");
  EXPECT_EQ(encode_symbols(symbols, indexes, views), golden);
  EXPECT_EQ(decode_symbols(golden, indexes, views), symbols);
}

TEST(Crc32Test, StandardCheckValue) {
  const std::string s = "123456789";
  EXPECT_EQ(crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}), 0xCBF43926u);
  EXPECT_EQ(crc32({}), 0u);
}

LayeredBitstream random_bitstream(Rng& rng) {
  LayeredBitstream bs;
  bs.header = {64, 80, 32, 48, 1, 256, 256, kFlagEnhancement};
  for (auto& p : bs.parts) {
    p.resize(rng.below(300));
    for (auto& b : p) b = static_cast<std::uint8_t>(rng.below(256));
  }
  return bs;
}

TEST(BitstreamTest, PackUnpackRoundTrip) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const LayeredBitstream bs = random_bitstream(rng);
    const Bytes bytes = pack_bitstream(bs);
    std::size_t payload = 0;
    for (const auto& p : bs.parts) payload += p.size();
    EXPECT_EQ(bytes.size(), kBitstreamHeaderBytes + 4 * kSubstreamFrameBytes + payload);
    EXPECT_EQ(unpack_bitstream(bytes), bs);
  }
}

TEST(BitstreamTest, TruncatedAfterBaseSideDecodesBaseOnly) {
  Rng rng(6);
  const LayeredBitstream bs = random_bitstream(rng);
  const Bytes bytes = pack_bitstream(bs);
  const auto base = std::span(bytes).first(base_layer_bytes(bs));
  const LayeredBitstream b = unpack_bitstream(base, {UnpackMode::kBaseOnly});
  EXPECT_FALSE(b.has_enhancement);
  EXPECT_EQ(b.header, bs.header);
  EXPECT_EQ(b.part(Substream::kBaseMain), bs.part(Substream::kBaseMain));
  EXPECT_EQ(b.part(Substream::kBaseSide), bs.part(Substream::kBaseSide));
  EXPECT_TRUE(b.part(Substream::kEnhMain).empty());
  try {
    unpack_bitstream(base);
    FAIL() << "full unpack of base prefix succeeded";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("enh-main"), std::string::npos) << e.what();
  }
}

TEST(BitstreamTest, CorruptEnhMainNamesSubstream) {
  Rng rng(7);
  LayeredBitstream bs = random_bitstream(rng);
  bs.part(Substream::kEnhMain).assign(40, 0x5A);
  Bytes bytes = pack_bitstream(bs);
  const std::size_t enh_payload = base_layer_bytes(bs) + kSubstreamFrameBytes;
  bytes[enh_payload + 13] ^= 0x01;
  try {
    unpack_bitstream(bytes);
    FAIL() << "corruption not detected";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("checksum"), std::string::npos) << msg;
    EXPECT_NE(msg.find("enh-main"), std::string::npos) << msg;
  }
  // Base layer is untouched, and the bypass hook lets the payload through.
  EXPECT_NO_THROW(unpack_bitstream(bytes, {UnpackMode::kBaseOnly}));
  const LayeredBitstream raw = unpack_bitstream(bytes, {UnpackMode::kFull, false});
  EXPECT_EQ(raw.part(Substream::kEnhMain)[13], 0x5B);
}

TEST(BitstreamTest, RejectsMalformedContainers) {
  Rng rng(8);
  const LayeredBitstream bs = random_bitstream(rng);
  const Bytes good = pack_bitstream(bs);
  Bytes bad = good;
  bad[0] = 'X';
  EXPECT_THROW(unpack_bitstream(bad), Error);
  bad = good;
  bad[4] = 2;
  EXPECT_THROW(unpack_bitstream(bad), Error);
  bad = good;
  bad[kBitstreamHeaderBytes] = 0xFF;  // base-main length overruns
  bad[kBitstreamHeaderBytes + 3] = 0x7F;
  EXPECT_THROW(unpack_bitstream(bad), Error);
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(unpack_bitstream(bad), Error);
  EXPECT_THROW(unpack_bitstream(std::span(good).first(10)), Error);
}

TEST(BitstreamTest, BaseOnlyStreamWithoutEnhancementFlag) {
  Rng rng(9);
  LayeredBitstream bs = random_bitstream(rng);
  bs.header.flags = 0;
  const Bytes bytes = pack_bitstream(bs);
  EXPECT_EQ(bytes.size(), base_layer_bytes(bs));
  EXPECT_THROW(unpack_bitstream(bytes), Error);
  EXPECT_NO_THROW(unpack_bitstream(bytes, {UnpackMode::kBaseOnly}));
}

TEST(BitstreamTest, GoldenContainerLayout) {
  LayeredBitstream bs;
  bs.header = {64, 80, 32, 48, 1, 256, 192, kFlagEnhancement};
  bs.part(Substream::kBaseMain) = {0x01, 0x02, 0x03};
  bs.part(Substream::kBaseSide) = {};
  bs.part(Substream::kEnhMain) = {0xAA};
  bs.part(Substream::kEnhSide) = {0x10, 0x20};
  const Bytes golden = read_hex("container_golden.hex");
  EXPECT_EQ(pack_bitstream(bs), golden);
  EXPECT_EQ(unpack_bitstream(golden), bs);
}

}  // namespace
}  // namespace ldlc
