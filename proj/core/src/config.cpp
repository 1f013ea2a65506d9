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

#include "ldlc/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "ldlc/error.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "harness-cli";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw Error(kModule, "config key '" + key + "': expected a number, got '" + v + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw Error(kModule, "config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw Error(kModule, "config key '" + key + "': integer out of range");
  }
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& source) {
  ConfigFile cfg;
  cfg.source_ = source;
  std::istringstream in(text);
  std::string line, section = "train";
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (body.front() == '[') {
      if (body.back() != ']') throw Error(kModule, where + ": malformed section header");
      section = trim(body.substr(1, body.size() - 2));
      if (section != "train" && section != "probe") {
        throw Error(kModule, where + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(kModule, where + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw Error(kModule, where + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    const std::string full = section + "." + key;
    if (!cfg.values_.emplace(full, value).second) {
      throw Error(kModule, where + ": duplicate key '" + key + "'");
    }
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(kModule, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void apply_config(const ConfigFile& file, TrainConfig* train, ProbeOptions* probe) {
  TrainConfig t_dummy;
  ProbeOptions p_dummy;
  TrainConfig& t = train ? *train : t_dummy;
  ProbeOptions& p = probe ? *probe : p_dummy;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto num = [](double& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = to_double(k, v); };
  };
  auto size = [](std::size_t& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = to_uint(k, v); };
  };
  auto u64 = [](std::uint64_t& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = to_uint(k, v); };
  };
  auto str = [](std::string& dst) -> Setter {
    return [&dst](const std::string&, const std::string& v) { dst = v; };
  };
  const std::map<std::string, Setter> setters{
      {"train.c_s", size(t.codec.c_s)},
      {"train.n", size(t.codec.n)},
      {"train.m1", size(t.codec.m1)},
      {"train.m2", size(t.codec.m2)},
      {"train.hyper_blocks", size(t.codec.hyper_blocks)},
      {"train.lambda", num(t.lambda)},
      {"train.gamma", num(t.gamma)},
      {"train.batch_size", size(t.batch_size)},
      {"train.crop_size", size(t.crop_size)},
      {"train.learning_rate", num(t.learning_rate)},
      {"train.lr_decay", num(t.lr_decay)},
      {"train.max_reductions", size(t.max_reductions)},
      {"train.plateau_patience", size(t.plateau_patience)},
      {"train.plateau_threshold", num(t.plateau_threshold)},
      {"train.max_steps", size(t.max_steps)},
      {"train.eval_interval", size(t.eval_interval)},
      {"train.checkpoint_stride", size(t.checkpoint_stride)},
      {"train.checkpoint_dir", str(t.checkpoint_dir)},
      {"train.seed", u64(t.seed)},
      {"train.vision_seed", u64(t.vision_seed)},
      {"train.train_images", size(t.train_images)},
      {"train.val_images", size(t.val_images)},
      {"train.image_size", size(t.image_size)},
      {"train.data_dir", str(t.data_dir)},
      {"probe.clusters", size(p.clusters)},
      {"probe.kmeans_iterations", size(p.kmeans_iterations)},
      {"probe.fibers_per_image", size(p.fibers_per_image)},
      {"probe.marginal_steps", size(p.marginal.steps)},
      {"probe.marginal_learning_rate", num(p.marginal.learning_rate)},
      {"probe.conditional_steps", size(p.conditional.steps)},
      {"probe.conditional_learning_rate", num(p.conditional.learning_rate)},
      {"probe.min_cluster", size(p.min_cluster)},
      {"probe.seed", u64(p.seed)},
  };
  for (const auto& [key, value] : file.values()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error(kModule, file.source_ + ": unknown config key '" + key + "'");
    it->second(key, value);
  }
}

}  // namespace ldlc
