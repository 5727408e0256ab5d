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

#include <cstdint>
#include <span>
#include <vector>

#include "rgf/tensor.hpp"

RGF_NAMESPACE_BEGIN

/// Fixed linear map between two flattened spatial grids, stored CSR by output
/// position. Bilinear sampling, normalized splatting, warping, pooling and
/// upsampling are all instances; the adjoint gives their backward pass.
class SparseMap {
 public:
  struct Entry {
    std::uint32_t out;
    std::uint32_t in;
    Real weight;
  };

  SparseMap() = default;
  /// Entries are grouped by output position; order within an output is kept.
  SparseMap(std::size_t in_size, std::size_t out_size, std::vector<Entry> entries);

  std::size_t in_size() const noexcept { return in_size_; }
  std::size_t out_size() const noexcept { return out_size_; }
  std::size_t nnz() const noexcept { return index_.size(); }

  /// out[c, o] = sum_i w(o, i) * in[c, i] for `channels` leading slices.
  void apply(const Real* in, Real* out, std::size_t channels) const;
  /// in_grad[c, i] += sum_o w(o, i) * out_grad[c, o].
  void apply_adjoint(const Real* out_grad, Real* in_grad, std::size_t channels) const;

  /// Sum of weights feeding each output position.
  std::vector<Real> row_sums() const;

  /// Row o samples an H x W grid bilinearly at coords[o] with zero padding.
  static SparseMap bilinear_sample(std::span<const PixelCoord> coords, std::size_t height,
                                   std::size_t width);
  /// Splats len(coords) values onto an H x W grid and divides each cell by its
  /// accumulated weight; cells with weight <= threshold receive nothing.
  static SparseMap normalized_splat(std::span<const PixelCoord> coords, std::size_t height,
                                    std::size_t width, Real threshold);
  /// 2x2 mean pooling of an H x W grid (even extents).
  static SparseMap mean_pool2(std::size_t height, std::size_t width);
  /// Bilinear upsampling by integer `factor` with half-pixel centers; source
  /// coordinates are clamped to the grid.
  static SparseMap upsample(std::size_t height, std::size_t width, std::size_t factor);
  /// Reverses the column order of an H x W grid.
  static SparseMap flip_columns(std::size_t height, std::size_t width);

 private:
  std::size_t in_size_ = 0;
  std::size_t out_size_ = 0;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint32_t> index_;
  std::vector<Real> weight_;
};

RGF_NAMESPACE_END
