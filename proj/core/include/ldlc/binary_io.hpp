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

#ifndef LDLC_BINARY_IO_HPP_
#define LDLC_BINARY_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ldlc/error.hpp"

// Little-endian primitive (de)serialisation shared by the file formats.
namespace ldlc::bio {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

inline void put_f64(std::vector<std::uint8_t>& out, double value) {
  put_le(out, std::bit_cast<std::uint64_t>(value));
}

inline void put_bytes(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> bytes) {
  out.insert(out.end(), bytes.begin(), bytes.end());
}

// Bounds-checked cursor over a byte buffer.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string module)
      : bytes_(bytes), module_(std::move(module)) {}

  template <typename T>
  T get_le() {
    static_assert(std::is_unsigned_v<T>);
    require(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return value;
  }

  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    require(n);
    auto view = bytes_.subspan(pos_, n);
    pos_ += n;
    return view;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void require(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(module_, "unexpected end of data at offset " + std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string module_;
};

std::vector<std::uint8_t> read_file(const std::string& path, const std::string& module);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes,
                const std::string& module);

}  // namespace ldlc::bio

#endif  // LDLC_BINARY_IO_HPP_
