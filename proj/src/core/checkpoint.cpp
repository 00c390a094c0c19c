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

#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lipmark {

namespace {

constexpr char kMagic[8] = {'L', 'M', 'C', 'K', 'P', 'T', '0', '0'};

// All scalar fields are written little-endian. The build targets LE hosts;
// refuse to run elsewhere rather than write mixed-endian files.
static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  LIPMARK_CHECK(in.good(), ErrorCode::kParse, "truncated checkpoint: " + path);
  return v;
}

void put_string(std::ofstream& out, const std::string& s) {
  put<uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream& in, const std::string& path) {
  uint64_t n = get<uint64_t>(in, path);
  LIPMARK_CHECK(n < (1ull << 31), ErrorCode::kParse, "suspicious string length in " + path);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  LIPMARK_CHECK(in.good(), ErrorCode::kParse, "truncated checkpoint: " + path);
  return s;
}

void put_tensor_table(std::ofstream& out, const std::map<std::string, Tensor>& table) {
  put<uint32_t>(out, static_cast<uint32_t>(table.size()));
  for (const auto& [name, t] : table) {
    put_string(out, name);
    put<uint32_t>(out, static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) put<int64_t>(out, t.dim(i));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
}

std::map<std::string, Tensor> get_tensor_table(std::ifstream& in, const std::string& path) {
  std::map<std::string, Tensor> table;
  uint32_t count = get<uint32_t>(in, path);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in, path);
    uint32_t ndim = get<uint32_t>(in, path);
    LIPMARK_CHECK(ndim <= 8, ErrorCode::kParse, "bad tensor rank in " + path);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = get<int64_t>(in, path);
    Tensor t = Tensor::uninit(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    LIPMARK_CHECK(in.good(), ErrorCode::kParse, "truncated tensor payload in " + path);
    table.emplace(std::move(name), std::move(t));
  }
  return table;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  LIPMARK_CHECK(out.good(), ErrorCode::kIo, "cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  put<uint32_t>(out, kFormatVersion);
  put_string(out, config_text);
  put<uint64_t>(out, step);
  put<uint64_t>(out, epoch);
  put<uint32_t>(out, stage);
  put<uint64_t>(out, seed);
  put<uint64_t>(out, adam_t);
  put<double>(out, best_dev_wer);
  put_tensor_table(out, params);
  put_tensor_table(out, opt_state);
  LIPMARK_CHECK(out.good(), ErrorCode::kIo, "failed writing checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  LIPMARK_CHECK(in.good(), ErrorCode::kIo, "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  LIPMARK_CHECK(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorCode::kParse,
                "not a checkpoint file: " + path);
  uint32_t version = get<uint32_t>(in, path);
  LIPMARK_CHECK(version == kFormatVersion, ErrorCode::kParse,
                "unsupported checkpoint version in " + path);
  Checkpoint ck;
  ck.config_text = get_string(in, path);
  ck.step = get<uint64_t>(in, path);
  ck.epoch = get<uint64_t>(in, path);
  ck.stage = get<uint32_t>(in, path);
  ck.seed = get<uint64_t>(in, path);
  ck.adam_t = get<uint64_t>(in, path);
  ck.best_dev_wer = get<double>(in, path);
  ck.params = get_tensor_table(in, path);
  ck.opt_state = get_tensor_table(in, path);
  return ck;
}

}  // namespace lipmark
