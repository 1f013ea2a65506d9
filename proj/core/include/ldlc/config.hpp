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

#ifndef LDLC_CONFIG_HPP_
#define LDLC_CONFIG_HPP_

#include <map>
#include <string>

#include "ldlc/probe.hpp"
#include "ldlc/train.hpp"

namespace ldlc {

// Experiment configuration in a TOML-like subset:
//
//   # comment
//   lambda = 0.013
//   [probe]
//   clusters = 128
//
// Keys before any section header, or under [train], configure training and
// the codec; keys under [probe] configure the redundancy probe. Values may
// be double-quoted. Unknown keys and duplicate keys are errors.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, const std::string& source = "<config>");
  static ConfigFile load(const std::string& path);

  // Keys are "section.key"; top-level keys live in section "train".
  const std::map<std::string, std::string>& values() const { return values_; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

 private:
  std::map<std::string, std::string> values_;
  std::string source_;
  friend void apply_config(const ConfigFile&, TrainConfig*, ProbeOptions*);
};

// Applies every key to the matching field; either target may be null, in
// which case its section is still validated for unknown keys but ignored.
void apply_config(const ConfigFile& file, TrainConfig* train, ProbeOptions* probe);

}  // namespace ldlc

#endif  // LDLC_CONFIG_HPP_
