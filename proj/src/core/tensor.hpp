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

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "buffer_pool.hpp"
#include "error.hpp"

namespace lipmark {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float64 tensor. Value semantics with a copy-on-write
// pooled buffer, so reshapes and container copies are cheap; any mutable
// access unshares first.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : Tensor(std::move(shape), kUninit) {
    std::fill(data_.get(), data_.get() + size_, fill);
  }

  // Uninitialized contents; caller overwrites every element.
  static Tensor uninit(Shape shape) { return Tensor(std::move(shape), kUninit); }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }

  static Tensor scalar(double v) {
    Tensor t = uninit(Shape{1});
    t.data_[0] = v;
    return t;
  }

  static Tensor from(Shape shape, const std::vector<double>& data) {
    LIPMARK_CHECK(shape_numel(shape) == static_cast<int64_t>(data.size()), ErrorCode::kDimension,
                  "tensor data length does not match shape " + shape_str(shape));
    Tensor t = uninit(std::move(shape));
    std::copy(data.begin(), data.end(), t.data_.get());
    return t;
  }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return size_; }
  bool empty() const { return size_ == 0; }

  double* data() {
    ensure_unique();
    return data_.get();
  }
  const double* data() const { return data_.get(); }

  std::vector<double> to_vector() const { return std::vector<double>(data(), data() + size_); }

  double& operator[](int64_t i) {
    ensure_unique();
    return data_[static_cast<size_t>(i)];
  }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool same_values(const Tensor& other) const {
    if (size_ != other.size_) return false;
    for (int64_t i = 0; i < size_; ++i) {
      if (data_[static_cast<size_t>(i)] != other.data_[static_cast<size_t>(i)]) return false;
    }
    return true;
  }

  // Shares storage; numel must match.
  Tensor reshaped(Shape shape) const {
    LIPMARK_CHECK(shape_numel(shape) == numel(), ErrorCode::kDimension,
                  "reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  void fill(double v) {
    ensure_unique();
    std::fill(data_.get(), data_.get() + size_, v);
  }

  bool all_finite() const;
  double max_abs() const;

 private:
  struct UninitTag {};
  static constexpr UninitTag kUninit{};

  Tensor(Shape shape, UninitTag)
      : shape_(std::move(shape)),
        size_(shape_numel(shape_)),
        data_(acquire_buffer(static_cast<size_t>(size_))) {}

  void ensure_unique() {
    if (data_ && data_.use_count() > 1) {
      auto fresh = acquire_buffer(static_cast<size_t>(size_));
      std::copy(data_.get(), data_.get() + size_, fresh.get());
      data_ = std::move(fresh);
    }
  }

  Shape shape_;
  int64_t size_ = 0;
  std::shared_ptr<double[]> data_;
};

}  // namespace lipmark
