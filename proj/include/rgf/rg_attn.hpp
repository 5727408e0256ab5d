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
#include <random>
#include <string>
#include <vector>

#include "rgf/autograd.hpp"
#include "rgf/geometry.hpp"
#include "rgf/optim.hpp"

RGF_NAMESPACE_BEGIN

enum class PositionalEncoding { none, learnable, depth_height };

std::string to_string(PositionalEncoding pe);
PositionalEncoding parse_positional_encoding(const std::string& name);

struct RgAttnConfig {
  std::size_t c1 = 16;           // BEV channels
  std::size_t c2 = 8;            // camera channels
  std::size_t d_model = 0;       // 0 selects c1
  std::size_t heads = 8;
  std::size_t radial_bins = 64;  // h; matches the BEV height by default
  std::size_t cam_h2 = 36;       // camera rows, sizes the learnable camera encoding
  PositionalEncoding encoding = PositionalEncoding::learnable;
  double dropout = 0.1;
  double radius = 0.0;  // 0 selects half the BEV diagonal

  std::size_t model_width() const { return d_model ? d_model : c1; }
  void validate() const;
};

/// Weights of one fusion kernel. Positional tensors exist only for the
/// encoding variant that uses them.
struct RgAttnParams {
  RgAttnConfig cfg;
  Var wq, bq, wk, wv, bv, wo, bo;  // keys have no bias
  Var pos_bev;  // [h x c1], learnable variant
  Var pos_cam;  // [h2 x c2], learnable variant
  Var depth_scale_bev;  // [1 x c1], depth_height variant
  Var height_scale_cam; // [1 x c2], depth_height variant
};

RgAttnParams make_rg_attn_params(const RgAttnConfig& cfg, ParameterStore& store, const std::string& prefix,
                                 std::mt19937_64& rng);

/// Forward-mode switches: dropout is active only when training.
struct AttnRuntime {
  bool training = false;
  std::uint64_t seed = 0;
};

struct SubBevMap {
  Tensor data;  // [C1 x h x W2]
  GridSectorConfig cfg;
};

/// Samples the sector of `bev` ([C1 x H1 x W1]) described by `sector`.
SubBevMap grid_sector_sample(const Tensor& bev, const BevSpec& spec, const SectorGrid& sector);
/// Splats a sub-BEV back to the Cartesian grid, normalizing by splat weight.
Tensor grid_sector_inverse(const SubBevMap& sub, const BevSpec& spec);

Var sector_sample(const Var& bev, const BevSpec& spec, const SectorGrid& sector);
Var sector_inverse(const Var& sub, const BevSpec& spec, const SectorGrid& sector);

/// Splat weights below this are treated as uncovered.
inline constexpr Real kInverseWeightThreshold = Real(1e-8);

enum class TokenRole { query, key, value };

/// Positional encoding, column reshape and projection. [C x H x W] features
/// become [W x H x d] tokens.
Var pl_process(const Var& feature, TokenRole role, const RgAttnParams& params);

/// Multi-head attention restricted to each column: q [W x Hq x d] attends
/// to k, v [W x Hk x d] of the same column only.
Var column_mha(const Var& q, const Var& k, const Var& v, std::size_t heads, double dropout,
               const AttnRuntime& runtime);

/// Fusion delta of one camera on a BEV: sample, attend, project, invert.
/// `cam` is [C2 x H2 x W2] in image column order.
Var rg_attn_delta(const Var& bev, const BevSpec& spec, const Var& cam, const Transform2& t_ij,
                  const CameraRig& rig, const RgAttnParams& params, const AttnRuntime& runtime);

/// bev + delta.
Var rg_attn_apply(const Var& bev, const BevSpec& spec, const Var& cam, const Transform2& t_ij,
                  const CameraRig& rig, const RgAttnParams& params, const AttnRuntime& runtime);

struct CameraInput {
  std::size_t id = 0;  // summation order key
  Var features;        // [C2 x H2 x W2]
  Transform2 to_target;
  CameraRig rig;
};

/// Parallel-delta aggregation: every camera attends to the same input BEV and
/// the deltas, summed in ascending id order, are added once.
Var rg_attn_multi(const Var& bev, const BevSpec& spec, std::vector<CameraInput> cams,
                  const RgAttnParams& params, const AttnRuntime& runtime);

/// Multiply-accumulate count of column attention: w2 * heads * 2 * h1 * h2 *
/// (d / heads). With c1, c2 nonzero, adds the Q/K/V/output projections.
std::uint64_t attention_op_count(std::size_t h1, std::size_t h2, std::size_t w2, std::size_t d,
                                 std::size_t heads, std::size_t c1 = 0, std::size_t c2 = 0);

RGF_NAMESPACE_END
