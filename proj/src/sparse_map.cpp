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

#include "rgf/sparse_map.hpp"

#include <algorithm>
#include <array>
#include <cmath>

RGF_NAMESPACE_BEGIN

SparseMap::SparseMap(std::size_t in_size, std::size_t out_size, std::vector<Entry> entries)
    : in_size_(in_size), out_size_(out_size) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.out < b.out; });
  offsets_.assign(out_size + 1, 0);
  index_.reserve(entries.size());
  weight_.reserve(entries.size());
  for (const auto& e : entries) {
    require(e.out < out_size && e.in < in_size, "sparse map entry out of range");
    ++offsets_[e.out + 1];
    index_.push_back(e.in);
    weight_.push_back(e.weight);
  }
  for (std::size_t o = 0; o < out_size; ++o) offsets_[o + 1] += offsets_[o];
}

void SparseMap::apply(const Real* in, Real* out, std::size_t channels) const {
  for (std::size_t c = 0; c < channels; ++c) {
    const Real* src = in + c * in_size_;
    Real* dst = out + c * out_size_;
    for (std::size_t o = 0; o < out_size_; ++o) {
      Real acc = 0;
      for (std::uint32_t e = offsets_[o]; e < offsets_[o + 1]; ++e) acc += weight_[e] * src[index_[e]];
      dst[o] = acc;
    }
  }
}

void SparseMap::apply_adjoint(const Real* out_grad, Real* in_grad, std::size_t channels) const {
  for (std::size_t c = 0; c < channels; ++c) {
    const Real* g = out_grad + c * out_size_;
    Real* dst = in_grad + c * in_size_;
    for (std::size_t o = 0; o < out_size_; ++o) {
      const Real go = g[o];
      if (go == Real(0)) continue;
      for (std::uint32_t e = offsets_[o]; e < offsets_[o + 1]; ++e) dst[index_[e]] += weight_[e] * go;
    }
  }
}

std::vector<Real> SparseMap::row_sums() const {
  std::vector<Real> sums(out_size_, Real(0));
  for (std::size_t o = 0; o < out_size_; ++o)
    for (std::uint32_t e = offsets_[o]; e < offsets_[o + 1]; ++e) sums[o] += weight_[e];
  return sums;
}

SparseMap SparseMap::bilinear_sample(std::span<const PixelCoord> coords, std::size_t height,
                                     std::size_t width) {
  std::vector<Entry> entries;
  entries.reserve(coords.size() * 4);
  std::array<BilinearTap, 4> taps{};
  for (std::size_t p = 0; p < coords.size(); ++p) {
    const std::size_t n = bilinear_taps(coords[p].u, coords[p].v, height, width, taps);
    for (std::size_t t = 0; t < n; ++t)
      entries.push_back({static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(taps[t].cell),
                         taps[t].weight});
  }
  return SparseMap(height * width, coords.size(), std::move(entries));
}

SparseMap SparseMap::normalized_splat(std::span<const PixelCoord> coords, std::size_t height,
                                      std::size_t width, Real threshold) {
  std::vector<Entry> entries;
  entries.reserve(coords.size() * 4);
  std::vector<Real> cell_weight(height * width, Real(0));
  std::array<BilinearTap, 4> taps{};
  for (std::size_t p = 0; p < coords.size(); ++p) {
    const std::size_t n = bilinear_taps(coords[p].u, coords[p].v, height, width, taps);
    for (std::size_t t = 0; t < n; ++t) {
      cell_weight[taps[t].cell] += taps[t].weight;
      entries.push_back({static_cast<std::uint32_t>(taps[t].cell), static_cast<std::uint32_t>(p),
                         taps[t].weight});
    }
  }
  std::vector<Entry> kept;
  kept.reserve(entries.size());
  for (auto e : entries) {
    const Real w = cell_weight[e.out];
    if (w <= threshold) continue;
    e.weight /= w;
    kept.push_back(e);
  }
  return SparseMap(coords.size(), height * width, std::move(kept));
}

SparseMap SparseMap::mean_pool2(std::size_t height, std::size_t width) {
  require(height % 2 == 0 && width % 2 == 0,
          "2x2 pooling needs even extents, got " + std::to_string(height) + "x" + std::to_string(width));
  const std::size_t oh = height / 2, ow = width / 2;
  std::vector<Entry> entries;
  entries.reserve(oh * ow * 4);
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c)
      for (std::size_t dr = 0; dr < 2; ++dr)
        for (std::size_t dc = 0; dc < 2; ++dc)
          entries.push_back({static_cast<std::uint32_t>(r * ow + c),
                             static_cast<std::uint32_t>((2 * r + dr) * width + 2 * c + dc), Real(0.25)});
  return SparseMap(height * width, oh * ow, std::move(entries));
}

SparseMap SparseMap::upsample(std::size_t height, std::size_t width, std::size_t factor) {
  require(factor >= 1, "upsample factor must be positive");
  const std::size_t oh = height * factor, ow = width * factor;
  std::vector<Entry> entries;
  entries.reserve(oh * ow * 4);
  auto source = [factor](std::size_t i, std::size_t n) {
    double s = (static_cast<double>(i) + 0.5) / static_cast<double>(factor) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(n - 1));
  };
  std::array<BilinearTap, 4> taps{};
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      const std::size_t n = bilinear_taps(source(r, height), source(c, width), height, width, taps);
      for (std::size_t t = 0; t < n; ++t)
        entries.push_back({static_cast<std::uint32_t>(r * ow + c),
                           static_cast<std::uint32_t>(taps[t].cell), taps[t].weight});
    }
  }
  return SparseMap(height * width, oh * ow, std::move(entries));
}

SparseMap SparseMap::flip_columns(std::size_t height, std::size_t width) {
  std::vector<Entry> entries;
  entries.reserve(height * width);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c)
      entries.push_back({static_cast<std::uint32_t>(r * width + c),
                         static_cast<std::uint32_t>(r * width + (width - 1 - c)), Real(1)});
  return SparseMap(height * width, height * width, std::move(entries));
}

RGF_NAMESPACE_END
