// Copyright 2026 The RG-Fusion Authors
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

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rgf/config.hpp"

RGF_NAMESPACE_BEGIN

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array with shape metadata.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), Real(1)); }
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);
  static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }
  Real* ptr() noexcept { return data_.data(); }
  const Real* ptr() const noexcept { return data_.data(); }
  std::vector<Real>& storage() noexcept { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at(std::size_t i0, std::size_t i1) { return data_[offset({i0, i1})]; }
  Real at(std::size_t i0, std::size_t i1) const { return data_[offset({i0, i1})]; }
  Real& at(std::size_t i0, std::size_t i1, std::size_t i2) { return data_[offset({i0, i1, i2})]; }
  Real at(std::size_t i0, std::size_t i1, std::size_t i2) const {
    return data_[offset({i0, i1, i2})];
  }

  /// Same data with a new shape of equal element count.
  Tensor reshaped(Shape shape) const;
  void fill(Real value);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  Shape shape_;
  std::vector<Real> data_;
};

/// Plain (non-differentiable) 2-D product, [M x K] * [K x N].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Max-stabilized softmax along `axis`. Throws on an empty axis.
Tensor softmax(const Tensor& x, std::size_t axis);

/// One bilinear tap: flat cell index into an H x W grid and its weight.
struct BilinearTap {
  std::size_t cell;
  Real weight;
};

/// In-bounds taps of continuous pixel coordinate (u = row, v = column) on an
/// H x W grid. Out-of-bounds neighbors are dropped (zero padding), so the
/// returned weights sum to less than one near and beyond the border.
std::size_t bilinear_taps(double u, double v, std::size_t height, std::size_t width,
                          std::array<BilinearTap, 4>& taps);

struct PixelCoord {
  double u;  // row
  double v;  // column
};

/// Samples every channel of a [C x H x W] map at each coordinate. Returns
/// [C x coords.size()].
Tensor bilinear_sample_2d(const Tensor& map, std::span<const PixelCoord> coords);

struct SplatResult {
  Tensor accum;   // [C x H x W]
  Tensor weight;  // [H x W]
};

/// Distributes each column of `values` ([C x len]) onto its four neighbors with
/// bilinear weights. Out-of-bounds contributions are dropped.
SplatResult bilinear_splat_2d(const Tensor& values, std::span<const PixelCoord> coords,
                              std::size_t height, std::size_t width);

/// splitmix64 finalizer; used to derive independent seeds from a master seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

RGF_NAMESPACE_END
