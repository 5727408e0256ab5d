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

#include "rgf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

RGF_NAMESPACE_BEGIN

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)) {
  for (auto e : shape_) require(e > 0, "tensor extents must be positive, got " + shape_to_string(shape_));
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_) require(e > 0, "tensor extents must be positive, got " + shape_to_string(shape_));
  require(shape_numel(shape_) == data_.size(),
          "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
              shape_to_string(shape_));
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : t.data_) x = static_cast<Real>(dist(rng));
  return t;
}

Tensor Tensor::uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& x : t.data_) x = static_cast<Real>(dist(rng));
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < shape_.size(), "axis " + std::to_string(axis) + " out of range for rank " +
                                    std::to_string(shape_.size()));
  return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
  require(shape_numel(shape) == numel(),
          "cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real x) { return std::isfinite(x); });
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> idx) const {
  require(idx.size() == shape_.size(), "index rank mismatch");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    require(i < shape_[axis], "index out of bounds");
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul shape mismatch " + shape_to_string(a.shape()) + " * " + shape_to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    Real* row = out.ptr() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = a[i * k + p];
      const Real* brow = b.ptr() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require(axis < x.rank(), "softmax axis out of range");
  const std::size_t len = x.dim(axis);
  require(len > 0, "softmax over empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  Tensor y(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Real mx = x[base];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, x[base + l * inner]);
      Real sum = 0;
      for (std::size_t l = 0; l < len; ++l) {
        const Real e = std::exp(x[base + l * inner] - mx);
        y[base + l * inner] = e;
        sum += e;
      }
      for (std::size_t l = 0; l < len; ++l) y[base + l * inner] /= sum;
    }
  }
  return y;
}

std::size_t bilinear_taps(double u, double v, std::size_t height, std::size_t width,
                          std::array<BilinearTap, 4>& taps) {
  if (!std::isfinite(u) || !std::isfinite(v)) return 0;
  const double r0f = std::floor(u);
  const double c0f = std::floor(v);
  if (r0f < -1.0 || c0f < -1.0 || r0f > static_cast<double>(height) ||
      c0f > static_cast<double>(width))
    return 0;
  const auto r0 = static_cast<long long>(r0f);
  const auto c0 = static_cast<long long>(c0f);
  const double fr = u - r0f;
  const double fc = v - c0f;
  const long long rows[2] = {r0, r0 + 1};
  const long long cols[2] = {c0, c0 + 1};
  const double wr[2] = {1.0 - fr, fr};
  const double wc[2] = {1.0 - fc, fc};
  std::size_t n = 0;
  for (int i = 0; i < 2; ++i) {
    if (rows[i] < 0 || rows[i] >= static_cast<long long>(height)) continue;
    for (int j = 0; j < 2; ++j) {
      if (cols[j] < 0 || cols[j] >= static_cast<long long>(width)) continue;
      const double w = wr[i] * wc[j];
      if (w == 0.0) continue;
      taps[n++] = {static_cast<std::size_t>(rows[i]) * width + static_cast<std::size_t>(cols[j]),
                   static_cast<Real>(w)};
    }
  }
  return n;
}

Tensor bilinear_sample_2d(const Tensor& map, std::span<const PixelCoord> coords) {
  require(map.rank() == 3, "bilinear_sample_2d expects a [C x H x W] map");
  const std::size_t c = map.dim(0), h = map.dim(1), w = map.dim(2);
  const std::size_t plane = h * w;
  if (coords.empty()) return Tensor();
  Tensor out({c, coords.size()});
  std::array<BilinearTap, 4> taps{};
  for (std::size_t p = 0; p < coords.size(); ++p) {
    const std::size_t n = bilinear_taps(coords[p].u, coords[p].v, h, w, taps);
    for (std::size_t ch = 0; ch < c; ++ch) {
      Real acc = 0;
      for (std::size_t t = 0; t < n; ++t) acc += taps[t].weight * map[ch * plane + taps[t].cell];
      out[ch * coords.size() + p] = acc;
    }
  }
  return out;
}

SplatResult bilinear_splat_2d(const Tensor& values, std::span<const PixelCoord> coords,
                              std::size_t height, std::size_t width) {
  require(values.rank() == 2 && values.dim(1) == coords.size(),
          "bilinear_splat_2d expects values [C x len] matching coords");
  const std::size_t c = values.dim(0);
  const std::size_t plane = height * width;
  SplatResult res{Tensor({c, height, width}), Tensor({height, width})};
  std::array<BilinearTap, 4> taps{};
  for (std::size_t p = 0; p < coords.size(); ++p) {
    const std::size_t n = bilinear_taps(coords[p].u, coords[p].v, height, width, taps);
    for (std::size_t t = 0; t < n; ++t) {
      res.weight[taps[t].cell] += taps[t].weight;
      for (std::size_t ch = 0; ch < c; ++ch)
        res.accum[ch * plane + taps[t].cell] += taps[t].weight * values[ch * coords.size() + p];
    }
  }
  return res;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RGF_NAMESPACE_END
