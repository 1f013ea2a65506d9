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

#include "ldlc/weights_io.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <string_view>

#include "ldlc/binary_io.hpp"
#include "ldlc/error.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "codec";
constexpr std::string_view kMagic = "LDLW";

Tensor read_tensor_record(bio::Reader& r) {
  const auto magic = r.get_bytes(4);
  if (std::string_view(reinterpret_cast<const char*>(magic.data()), 4) != "TNSR") {
    throw Error(kModule, "bad tensor record magic");
  }
  const auto rank = r.get_le<std::uint32_t>();
  if (rank > 8) throw Error(kModule, "tensor rank " + std::to_string(rank) + " exceeds 8");
  Shape shape(rank);
  for (auto& d : shape) d = r.get_le<std::uint32_t>();
  const std::size_t n = shape_numel(shape);
  if (n * 8 > r.remaining()) throw Error(kModule, "tensor record truncated");
  std::vector<double> data(n);
  for (auto& v : data) v = r.get_f64();
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Codec& codec, std::uint64_t vision_seed) {
  std::vector<std::uint8_t> out;
  for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
  bio::put_le<std::uint32_t>(out, kWeightsVersion);
  const auto& cfg = codec.config();
  for (std::size_t v : {cfg.c_s, cfg.n, cfg.m1, cfg.m2, cfg.hyper_blocks}) {
    bio::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(v));
  }
  bio::put_le<std::uint64_t>(out, vision_seed);
  bio::put_le<std::uint64_t>(out, codec.step);
  const ParamList params = codec.parameters();
  bio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    bio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    bio::put_bytes(out, std::span(reinterpret_cast<const std::uint8_t*>(p.name.data()),
                                  p.name.size()));
    std::ostringstream os(std::ios::binary);
    write_tensor(os, p.tensor);
    const std::string blob = os.str();
    bio::put_bytes(out, std::span(reinterpret_cast<const std::uint8_t*>(blob.data()), blob.size()));
  }
  bio::put_le<std::uint32_t>(out, 2);
  for (std::size_t b = 0; b < 2; ++b) {
    const auto table = codec.side_table(b).serialize();
    bio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.size()));
    bio::put_bytes(out, table);
  }
  return out;
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  bio::Reader r(bytes, kModule);
  const auto magic = r.get_bytes(4);
  if (std::string_view(reinterpret_cast<const char*>(magic.data()), 4) != kMagic) {
    throw Error(kModule, "bad magic, not an LDLW weights file");
  }
  const auto version = r.get_le<std::uint32_t>();
  if (version != kWeightsVersion) {
    throw Error(kModule, "unsupported weights version " + std::to_string(version));
  }
  CodecConfig cfg;
  cfg.c_s = r.get_le<std::uint16_t>();
  cfg.n = r.get_le<std::uint16_t>();
  cfg.m1 = r.get_le<std::uint16_t>();
  cfg.m2 = r.get_le<std::uint16_t>();
  cfg.hyper_blocks = r.get_le<std::uint16_t>();
  const auto vision_seed = r.get_le<std::uint64_t>();
  Model model{Codec(cfg, 0), vision_seed};
  model.codec.step = r.get_le<std::uint64_t>();

  std::map<std::string, Tensor> by_name;
  for (const auto& p : model.codec.parameters()) by_name.emplace(p.name, p.tensor);
  const auto count = r.get_le<std::uint32_t>();
  if (count != by_name.size()) {
    throw Error(kModule, "weights file has " + std::to_string(count) + " parameters, model has " +
                             std::to_string(by_name.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get_le<std::uint32_t>();
    const auto name_bytes = r.get_bytes(len);
    const std::string name(name_bytes.begin(), name_bytes.end());
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(kModule, "unknown parameter '" + name + "'");
    const Tensor t = read_tensor_record(r);
    if (t.shape() != it->second.shape()) {
      throw Error(kModule, "parameter '" + name + "' has shape " + shape_string(t.shape()) +
                               ", expected " + shape_string(it->second.shape()));
    }
    Tensor dst = it->second;
    std::copy(t.data().begin(), t.data().end(), dst.mutable_data().begin());
    by_name.erase(it);
  }
  const auto tables = r.get_le<std::uint32_t>();
  if (tables != 2) throw Error(kModule, "expected 2 side tables, found " + std::to_string(tables));
  for (std::size_t b = 0; b < 2; ++b) {
    const auto len = r.get_le<std::uint32_t>();
    model.codec.set_side_table(b, QuantizedCdfTable::deserialize(r.get_bytes(len)));
  }
  if (!r.at_end()) throw Error(kModule, "trailing bytes in weights file");
  return model;
}

void save_model(const std::string& path, const Codec& codec, std::uint64_t vision_seed) {
  bio::write_file(path, serialize_model(codec, vision_seed), kModule);
}

Model load_model(const std::string& path) { return deserialize_model(bio::read_file(path, kModule)); }

void copy_parameters(const Codec& src, Codec& dst) {
  if (!(src.config() == dst.config())) throw Error(kModule, "config mismatch in parameter copy");
  const ParamList a = src.parameters();
  ParamList b = dst.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::copy(a[i].tensor.data().begin(), a[i].tensor.data().end(),
              b[i].tensor.mutable_data().begin());
  }
  dst.step = src.step;
}

}  // namespace ldlc
