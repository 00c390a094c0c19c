// Copyright 2026 The Lipmark Authors
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

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "error.hpp"

namespace lipmark {

// Flat `key = value` configuration with a fixed, versioned schema. Unknown
// keys are rejected on load/set; values are validated on read.
class Config {
 public:
  Config();  // schema defaults

  static constexpr int kVersion = 1;

  void load_file(const std::string& path);
  void parse_line(const std::string& line, const std::string& where);
  void set(const std::string& key, const std::string& value);
  bool has_key(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int64_t> get_int_list(const std::string& key) const;

  // Serialized `key = value` lines in schema order.
  std::string to_text() const;
  void write_file(const std::string& path) const;

  const std::vector<std::string>& keys() const { return order_; }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

}  // namespace lipmark
