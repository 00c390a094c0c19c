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

#include "config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace lipmark {

namespace {

struct SchemaEntry {
  const char* key;
  const char* def;
};

// Defaults are the desk-scale preset; configs/paper.cfg carries the
// full-size architecture.
const SchemaEntry kSchema[] = {
    {"config_version", "1"},
    {"seed", "7"},
    {"threads", "1"},

    {"corpus.speakers", "8"},
    {"corpus.samples_per_speaker", "150"},
    {"corpus.frames", "64"},
    {"corpus.height", "96"},
    {"corpus.width", "96"},
    {"corpus.noise", "0.02"},

    {"split.mode", "unseen"},
    {"split.held_out", "6,7"},
    {"split.test_per_speaker", "25"},
    {"split.dev_fraction", "0.1"},

    {"model.landmarks", "20"},
    {"model.patch_size", "24"},
    {"model.fps_set", "20,22,24,26,28,30,32"},
    {"model.fps_enabled", "true"},
    {"model.tubelet_channels", "2,4,8"},
    {"model.tubelet_temporal_depth", "5"},
    {"model.relpos_hidden", "16"},
    {"model.fusion_layers", "3"},
    {"model.fusion_heads", "2"},
    {"model.motion_dim", "8"},
    {"model.model_dim", "32"},
    {"model.conformer_blocks", "3"},
    {"model.conformer_ff", "128"},
    {"model.conformer_heads", "4"},
    {"model.conformer_kernel", "31"},
    {"model.decoder_layers", "3"},
    {"model.decoder_ff", "128"},
    {"model.decoder_heads", "4"},
    {"model.speaker_hidden", "16"},
    {"model.use_relpos", "true"},
    {"model.use_motion", "true"},
    {"model.mouth_crop", "false"},

    {"train.batch_size", "8"},
    {"train.lr", "3e-4"},
    {"train.warmup_steps", "60"},
    {"train.total_steps", "600"},
    {"train.lambda_ctc", "0.1"},
    {"train.alpha1", "0.2"},
    {"train.alpha2", "0.2"},
    {"train.use_mi", "true"},
    {"train.grad_clip", "5.0"},
    {"train.stage1_cap_fraction", "0.4"},
    {"train.plateau_epsilon", "0.5"},
    {"train.plateau_epochs", "3"},
    {"train.dev_wer_samples", "32"},
    {"train.target_train_wer", "-1"},
    {"train.wer_check_steps", "0"},
    {"train.mi_hidden", "64"},
    {"train.mi_lr", "3e-4"},

    {"decode.beam_width", "10"},
    {"decode.max_len", "40"},

    {"mi_bench.batch", "512"},
    {"mi_bench.rho", "0.9"},
    {"mi_bench.seeds", "5"},
    {"mi_bench.fit_steps", "500"},
    {"mi_bench.hidden", "64"},
};

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config::Config() {
  for (const auto& entry : kSchema) {
    values_[entry.key] = entry.def;
    order_.push_back(entry.key);
  }
}

bool Config::has_key(const std::string& key) const { return values_.count(key) > 0; }

void Config::set(const std::string& key, const std::string& value) {
  LIPMARK_CHECK(has_key(key), ErrorCode::kParse, "unknown config key: " + key);
  values_[key] = value;
}

void Config::parse_line(const std::string& line, const std::string& where) {
  std::string s = trim(line);
  if (s.empty() || s[0] == '#') return;
  size_t eq = s.find('=');
  LIPMARK_CHECK(eq != std::string::npos, ErrorCode::kParse,
                where + ": expected 'key = value', got: " + s);
  std::string key = trim(s.substr(0, eq));
  std::string value = trim(s.substr(eq + 1));
  set(key, value);
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  LIPMARK_CHECK(in.good(), ErrorCode::kIo, "cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    parse_line(line, path + ":" + std::to_string(lineno));
  }
  LIPMARK_CHECK(get_int("config_version") == kVersion, ErrorCode::kParse,
                "unsupported config_version in " + path);
}

std::string Config::get_string(const std::string& key) const {
  auto it = values_.find(key);
  LIPMARK_CHECK(it != values_.end(), ErrorCode::kParse, "unknown config key: " + key);
  return it->second;
}

int64_t Config::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  char* end = nullptr;
  long long n = std::strtoll(v.c_str(), &end, 10);
  LIPMARK_CHECK(end != nullptr && *end == '\0' && !v.empty(), ErrorCode::kParse,
                "config key " + key + " is not an integer: " + v);
  return static_cast<int64_t>(n);
}

double Config::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  char* end = nullptr;
  double d = std::strtod(v.c_str(), &end);
  LIPMARK_CHECK(end != nullptr && *end == '\0' && !v.empty(), ErrorCode::kParse,
                "config key " + key + " is not a number: " + v);
  return d;
}

bool Config::get_bool(const std::string& key) const {
  std::string v = get_string(key);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw_error(ErrorCode::kParse, "config key " + key + " is not a boolean: " + v);
}

std::vector<int64_t> Config::get_int_list(const std::string& key) const {
  const std::string v = get_string(key);
  std::vector<int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    char* end = nullptr;
    long long n = std::strtoll(item.c_str(), &end, 10);
    LIPMARK_CHECK(end != nullptr && *end == '\0', ErrorCode::kParse,
                  "config key " + key + " has a non-integer element: " + item);
    out.push_back(static_cast<int64_t>(n));
  }
  return out;
}

std::string Config::to_text() const {
  std::ostringstream os;
  for (const std::string& key : order_) {
    os << key << " = " << values_.at(key) << "\n";
  }
  return os.str();
}

void Config::write_file(const std::string& path) const {
  std::ofstream out(path);
  LIPMARK_CHECK(out.good(), ErrorCode::kIo, "cannot write config file: " + path);
  out << to_text();
  LIPMARK_CHECK(out.good(), ErrorCode::kIo, "failed writing config file: " + path);
}

}  // namespace lipmark
