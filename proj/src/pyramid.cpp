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

#include "rgf/pyramid.hpp"

#include <algorithm>
#include <cmath>

#include "rgf/sparse_map.hpp"

RGF_NAMESPACE_BEGIN

void PyramidConfig::validate() const {
  require(c1 > 0, "pyramid channel count must be positive");
  require(!factors.empty() && factors.front() == 1, "pyramid scales must start at factor 1");
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const std::size_t f = factors[i];
    require(f > 0 && (f & (f - 1)) == 0, "pyramid factors must be powers of two");
    if (i > 0) require(f > factors[i - 1], "pyramid factors must be strictly increasing");
  }
}

PyramidParams make_pyramid_params(const PyramidConfig& cfg, ParameterStore& store, const std::string& prefix,
                                  std::mt19937_64& rng) {
  cfg.validate();
  PyramidParams p;
  p.cfg = cfg;
  const std::size_t c = cfg.c1;
  for (std::size_t s = 0; s < cfg.factors.size(); ++s) {
    const std::string tag = prefix + ".s" + std::to_string(s);
    p.occ_w.push_back(store.add(tag + ".occ_w", Tensor::randn({c, 1}, rng, std::sqrt(1.0 / c))));
    Tensor mix = Tensor::randn({c, c}, rng, 0.1 / std::sqrt(static_cast<double>(c)));
    for (std::size_t i = 0; i < c; ++i) mix.at(i, i) += Real(1);
    p.mix_w.push_back(store.add(tag + ".mix_w", std::move(mix)));
    p.mix_b.push_back(store.add(tag + ".mix_b", Tensor({c})));
  }
  const std::size_t s = cfg.factors.size();
  Tensor fin = Tensor::randn({s * c, c}, rng, 0.1 / std::sqrt(static_cast<double>(s * c)));
  for (std::size_t k = 0; k < s; ++k)
    for (std::size_t i = 0; i < c; ++i) fin.at(k * c + i, i) += static_cast<Real>(1.0 / static_cast<double>(s));
  p.final_w = store.add(prefix + ".final_w", std::move(fin));
  p.final_b = store.add(prefix + ".final_b", Tensor({c}));
  return p;
}

void set_pyramid_identity(PyramidParams& params) {
  const std::size_t c = params.cfg.c1;
  for (std::size_t s = 0; s < params.cfg.factors.size(); ++s) {
    Tensor& m = params.mix_w[s].mutable_value();
    m.fill(0);
    for (std::size_t i = 0; i < c; ++i) m.at(i, i) = 1;
    params.mix_b[s].mutable_value().fill(0);
  }
  Tensor& f = params.final_w.mutable_value();
  f.fill(0);
  for (std::size_t i = 0; i < c; ++i) f.at(i, i) = 1;
  params.final_b.mutable_value().fill(0);
}

WarpedAgentMap warp_to_ego(const Var& feature, const BevSpec& spec, const Transform2& source_to_ego,
                           std::size_t agent_id) {
  require(feature.value().rank() == 3 && feature.dim(1) == spec.h1 && feature.dim(2) == spec.w1,
          "warp_to_ego: feature " + shape_to_string(feature.shape()) + " does not match spec");
  const Transform2 ident = Transform2::identity();
  if (source_to_ego.r == ident.r && source_to_ego.t.x == 0.0 && source_to_ego.t.y == 0.0)
    return {agent_id, feature, Tensor({spec.h1, spec.w1}, Real(1))};
  const Transform2 ego_to_source = source_to_ego.inverse();
  std::vector<PixelCoord> coords(spec.cells());
  for (std::size_t r = 0; r < spec.h1; ++r)
    for (std::size_t c = 0; c < spec.w1; ++c) {
      const Vec2 ego = grid_to_world(spec, {static_cast<double>(r), static_cast<double>(c)});
      coords[r * spec.w1 + c] = world_to_grid(spec, ego_to_source.apply(ego));
    }
  auto map = std::make_shared<const SparseMap>(SparseMap::bilinear_sample(coords, spec.h1, spec.w1));
  const auto sums = map->row_sums();
  WarpedAgentMap out;
  out.agent_id = agent_id;
  out.validity = Tensor({spec.h1, spec.w1}, std::vector<Real>(sums.begin(), sums.end()));
  out.feature = ops::sparse_apply(feature, std::move(map), {spec.h1, spec.w1});
  return out;
}

Var downsample2(const Var& feature) {
  require(feature.value().rank() == 3, "downsample2 expects [C x H x W]");
  const std::size_t h = feature.dim(1), w = feature.dim(2);
  auto map = std::make_shared<const SparseMap>(SparseMap::mean_pool2(h, w));
  return ops::sparse_apply(feature, std::move(map), {h / 2, w / 2});
}

Tensor downsample2(const Tensor& map) {
  require(map.rank() == 2 || map.rank() == 3, "downsample2 expects [H x W] or [C x H x W]");
  const std::size_t c = map.rank() == 3 ? map.dim(0) : 1;
  const std::size_t h = map.dim(map.rank() - 2), w = map.dim(map.rank() - 1);
  const SparseMap pool = SparseMap::mean_pool2(h, w);
  Shape shape = map.shape();
  shape[shape.size() - 2] = h / 2;
  shape[shape.size() - 1] = w / 2;
  Tensor out(shape);
  pool.apply(map.ptr(), out.ptr(), c);
  return out;
}

Var occupancy_weights(const std::vector<WarpedAgentMap>& maps, const Var& head_w, const Var& head_b) {
  require(!maps.empty(), "occupancy_weights: no agent maps");
  const Shape& shape = maps.front().feature.shape();
  std::vector<Var> logits;
  logits.reserve(maps.size());
  for (const auto& m : maps) {
    require(m.feature.shape() == shape, "occupancy_weights: agent maps differ in shape");
    require(m.validity.numel() == shape[1] * shape[2], "occupancy_weights: validity does not match features");
    Var score = ops::channel_linear(m.feature, head_w, head_b);  // [1 x H x W]
    Tensor bias({1, shape[1], shape[2]});
    for (std::size_t i = 0; i < bias.numel(); ++i)
      bias[i] = m.validity[i] > 0
                    ? static_cast<Real>(std::log(static_cast<double>(m.validity[i]) + kValidityEpsilon))
                    : kInvalidLogit;
    logits.push_back(ops::add_const(score, bias));
  }
  return ops::softmax(ops::concat0(logits), 0);
}

Var fuse_scale(const std::vector<WarpedAgentMap>& maps, const PyramidParams& params, std::size_t scale) {
  require(scale < params.cfg.factors.size(), "fuse_scale: scale index out of range");
  Var weights = occupancy_weights(maps, params.occ_w[scale]);
  Var acc;
  for (std::size_t a = 0; a < maps.size(); ++a) {
    Var term = ops::mul_broadcast0(maps[a].feature, ops::select0(weights, a));
    acc = acc.defined() ? ops::add(acc, term) : term;
  }
  return ops::channel_linear(acc, params.mix_w[scale], params.mix_b[scale]);
}

Var merge_scales(const std::vector<Var>& fused, const PyramidParams& params) {
  require(fused.size() == params.cfg.factors.size(), "merge_scales: one fused map per scale required");
  const std::size_t h = fused.front().dim(1), w = fused.front().dim(2);
  std::vector<Var> parts;
  parts.reserve(fused.size());
  for (std::size_t s = 0; s < fused.size(); ++s) {
    const std::size_t f = params.cfg.factors[s];
    if (f == 1) {
      parts.push_back(fused[s]);
      continue;
    }
    auto up = std::make_shared<const SparseMap>(SparseMap::upsample(fused[s].dim(1), fused[s].dim(2), f));
    parts.push_back(ops::sparse_apply(fused[s], std::move(up), {h, w}));
  }
  Var cat = parts.size() == 1 ? parts.front() : ops::concat0(parts);
  return ops::channel_linear(cat, params.final_w, params.final_b);
}

std::vector<WarpedAgentMap> downsample_maps(const std::vector<WarpedAgentMap>& maps, std::size_t factor) {
  std::vector<WarpedAgentMap> out = maps;
  for (std::size_t f = 1; f < factor; f *= 2)
    for (auto& m : out) {
      m.feature = downsample2(m.feature);
      m.validity = downsample2(m.validity);
    }
  return out;
}

Var pyramid_fuse(std::vector<WarpedAgentMap> maps, const PyramidParams& params) {
  require(!maps.empty(), "pyramid_fuse: no agent maps");
  std::stable_sort(maps.begin(), maps.end(),
                   [](const WarpedAgentMap& a, const WarpedAgentMap& b) { return a.agent_id < b.agent_id; });
  std::vector<Var> fused;
  std::vector<WarpedAgentMap> level = maps;
  std::size_t level_factor = 1;
  for (std::size_t s = 0; s < params.cfg.factors.size(); ++s) {
    const std::size_t f = params.cfg.factors[s];
    level = downsample_maps(level, f / level_factor);
    level_factor = f;
    fused.push_back(fuse_scale(level, params, s));
  }
  return merge_scales(fused, params);
}

RGF_NAMESPACE_END
