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

#include <random>
#include <string>
#include <vector>

#include "rgf/autograd.hpp"
#include "rgf/geometry.hpp"
#include "rgf/optim.hpp"

RGF_NAMESPACE_BEGIN

struct PyramidConfig {
  std::size_t c1 = 16;
  /// Downsampling factor per scale, strictly increasing powers of two starting
  /// at 1 (1, 2, 4 gives widths W1, W1/2, W1/4).
  std::vector<std::size_t> factors{1, 2, 4};

  void validate() const;
};

struct PyramidParams {
  PyramidConfig cfg;
  std::vector<Var> occ_w;  // per scale [c1 x 1]
  // no occupancy bias: a shift shared by all agents cancels in the agent softmax
  std::vector<Var> mix_w;  // per scale [c1 x c1]
  std::vector<Var> mix_b;  // per scale [c1]
  Var final_w;             // [(scales * c1) x c1]
  Var final_b;             // [c1]
};

PyramidParams make_pyramid_params(const PyramidConfig& cfg, ParameterStore& store, const std::string& prefix,
                                  std::mt19937_64& rng);

/// Sets every mix to identity and the final mix to select the finest scale, so
/// a single agent passes through unchanged.
void set_pyramid_identity(PyramidParams& params);

struct WarpedAgentMap {
  std::size_t agent_id = 0;
  Var feature;      // [C1 x H1 x W1] in the ego frame
  Tensor validity;  // [H1 x W1], in-bounds bilinear weight of the warp
};

/// Inverse warp: each ego cell samples the source map at T^-1(cell center).
WarpedAgentMap warp_to_ego(const Var& feature, const BevSpec& spec, const Transform2& source_to_ego,
                           std::size_t agent_id = 0);

/// 2x2 mean pooling per channel; throws on odd extents.
Var downsample2(const Var& feature);
Tensor downsample2(const Tensor& map);

/// Epsilon inside the log-validity bias of the agent softmax.
inline constexpr Real kValidityEpsilon = Real(1e-6);
/// Logit bias of a cell with zero validity. exp() of it underflows to 0, so an
/// agent that does not see a cell gets exactly zero weight there.
inline constexpr Real kInvalidLogit = Real(-1e4);

/// Per-cell softmax over agents of head(feature) + log(validity + eps), with
/// zero-validity cells masked out. Returns [A x H x W]; maps are taken in the
/// given order. `head_b` is optional.
Var occupancy_weights(const std::vector<WarpedAgentMap>& maps, const Var& head_w, const Var& head_b = Var());

/// Foreground-weighted agent sum at one scale followed by that scale's mix.
Var fuse_scale(const std::vector<WarpedAgentMap>& maps, const PyramidParams& params, std::size_t scale);
/// Upsamples every fused scale to full resolution, concatenates channels and
/// applies the final mix.
Var merge_scales(const std::vector<Var>& fused, const PyramidParams& params);
/// Maps pooled down to `factor` from full resolution.
std::vector<WarpedAgentMap> downsample_maps(const std::vector<WarpedAgentMap>& maps, std::size_t factor);

/// Multi-scale, validity-aware fusion of agent maps already warped to ego.
/// Agents are reduced in ascending agent_id order.
Var pyramid_fuse(std::vector<WarpedAgentMap> maps, const PyramidParams& params);

RGF_NAMESPACE_END
