// Copyright 2026 CCOP Authors
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

#ifndef CCOP_TENSOR_HPP_
#define CCOP_TENSOR_HPP_

#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

namespace ccop {

/// Dense row-major tensor of rank <= 4. Value semantics throughout.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel(), T(0));
  }

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  void zero() { std::fill(data.begin(), data.end(), T(0)); }

  T& at(int a) { return data[a]; }
  T& at(int a, int b) { return data[a * shape[1] + b]; }
  T& at(int a, int b, int c) {
    return data[(a * shape[1] + b) * shape[2] + c];
  }
  T& at(int a, int b, int c, int d) {
    return data[((a * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }
  const T& at(int a) const { return data[a]; }
  const T& at(int a, int b) const { return data[a * shape[1] + b]; }
  const T& at(int a, int b, int c) const {
    return data[(a * shape[1] + b) * shape[2] + c];
  }
  const T& at(int a, int b, int c, int d) const {
    return data[((a * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

}  // namespace ccop

#endif  // CCOP_TENSOR_HPP_
