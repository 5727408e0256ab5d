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

#include "rgf/rg_attn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rgf/sparse_map.hpp"

RGF_NAMESPACE_BEGIN

namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  return Tensor::randn({fan_in, fan_out}, rng, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
}

std::vector<PixelCoord> grid_coords(const BevSpec& spec, const SectorGrid& sector) {
  std::vector<PixelCoord> coords;
  coords.reserve(sector.points.size());
  for (const auto& p : sector.points) coords.push_back(world_to_grid(spec, p));
  return coords;
}

// Normalized position index as a constant [n x 1] column: i / n.
Var position_column(std::size_t n) {
  Tensor t({n, 1});
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<Real>(static_cast<double>(i) / static_cast<double>(n));
  return Var(std::move(t));
}

}  // namespace

std::string to_string(PositionalEncoding pe) {
  switch (pe) {
    case PositionalEncoding::none: return "none";
    case PositionalEncoding::learnable: return "learnable";
    case PositionalEncoding::depth_height: return "depth_height";
  }
  return "none";
}

PositionalEncoding parse_positional_encoding(const std::string& name) {
  if (name == "none") return PositionalEncoding::none;
  if (name == "learnable") return PositionalEncoding::learnable;
  if (name == "depth_height") return PositionalEncoding::depth_height;
  throw ContractError("unknown positional encoding '" + name + "'");
}

void RgAttnConfig::validate() const {
  require(c1 > 0 && c2 > 0 && heads > 0 && radial_bins > 0 && cam_h2 > 0, "rg-attn extents must be positive");
  require(model_width() % heads == 0, "d_model must be divisible by the head count");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
}

RgAttnParams make_rg_attn_params(const RgAttnConfig& cfg, ParameterStore& store, const std::string& prefix,
                                 std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t d = cfg.model_width();
  RgAttnParams p;
  p.cfg = cfg;
  p.wq = store.add(prefix + ".wq", xavier(cfg.c1, d, rng));
  p.bq = store.add(prefix + ".bq", Tensor({d}));
  p.wk = store.add(prefix + ".wk", xavier(cfg.c2, d, rng));
  p.wv = store.add(prefix + ".wv", xavier(cfg.c2, d, rng));
  p.bv = store.add(prefix + ".bv", Tensor({d}));
  p.wo = store.add(prefix + ".wo", xavier(d, cfg.c1, rng));
  p.bo = store.add(prefix + ".bo", Tensor({cfg.c1}));
  if (cfg.encoding == PositionalEncoding::learnable) {
    p.pos_bev = store.add(prefix + ".pos_bev", Tensor::randn({cfg.radial_bins, cfg.c1}, rng, 0.02));
    p.pos_cam = store.add(prefix + ".pos_cam", Tensor::randn({cfg.cam_h2, cfg.c2}, rng, 0.02));
  } else if (cfg.encoding == PositionalEncoding::depth_height) {
    p.depth_scale_bev = store.add(prefix + ".depth_scale_bev", Tensor::randn({1, cfg.c1}, rng, 0.1));
    p.height_scale_cam = store.add(prefix + ".height_scale_cam", Tensor::randn({1, cfg.c2}, rng, 0.1));
  }
  return p;
}

SubBevMap grid_sector_sample(const Tensor& bev, const BevSpec& spec, const SectorGrid& sector) {
  NoGradGuard guard;
  return {sector_sample(Var(bev), spec, sector).value(), sector.cfg};
}

Tensor grid_sector_inverse(const SubBevMap& sub, const BevSpec& spec) {
  NoGradGuard guard;
  const SectorGrid sector =
      build_sector(sub.cfg.origin, sub.cfg.theta_start, sub.cfg.theta_span, sub.cfg.w2, sub.cfg.radius, sub.cfg.h);
  return sector_inverse(Var(sub.data), spec, sector).value();
}

Var sector_sample(const Var& bev, const BevSpec& spec, const SectorGrid& sector) {
  require(bev.value().rank() == 3 && bev.dim(1) == spec.h1 && bev.dim(2) == spec.w1,
          "sector_sample: BEV " + shape_to_string(bev.shape()) + " does not match spec");
  const auto coords = grid_coords(spec, sector);
  auto map = std::make_shared<const SparseMap>(SparseMap::bilinear_sample(coords, spec.h1, spec.w1));
  return ops::sparse_apply(bev, std::move(map), {sector.cfg.h, sector.cfg.w2});
}

Var sector_inverse(const Var& sub, const BevSpec& spec, const SectorGrid& sector) {
  require(sub.value().rank() == 3 && sub.dim(1) == sector.cfg.h && sub.dim(2) == sector.cfg.w2,
          "sector_inverse: sub-BEV " + shape_to_string(sub.shape()) + " does not match its sector");
  auto coords = grid_coords(spec, sector);
  // Samples read partly from zero padding are not written back; they would
  // darken the border cells they land in.
  const double hmax = double(spec.h1 - 1), wmax = double(spec.w1 - 1);
  for (auto& c : coords)
    if (!(c.u >= 0.0 && c.u <= hmax && c.v >= 0.0 && c.v <= wmax)) c = {-2.0, -2.0};
  auto map = std::make_shared<const SparseMap>(
      SparseMap::normalized_splat(coords, spec.h1, spec.w1, kInverseWeightThreshold));
  return ops::sparse_apply(sub, std::move(map), {spec.h1, spec.w1});
}

Var pl_process(const Var& feature, TokenRole role, const RgAttnParams& params) {
  require(feature.value().rank() == 3, "pl_process expects [C x H x W] features");
  const auto& cfg = params.cfg;
  const std::size_t c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  const bool is_query = role == TokenRole::query;
  require(c == (is_query ? cfg.c1 : cfg.c2),
          "pl_process: feature has " + std::to_string(c) + " channels, params expect " +
              std::to_string(is_query ? cfg.c1 : cfg.c2));
  // Columns become sequences of H tokens of width C.
  Var tokens = ops::permute(feature, {2, 1, 0});  // [W x H x C]
  switch (cfg.encoding) {
    case PositionalEncoding::none:
      require(!params.pos_bev.defined() && !params.pos_cam.defined(),
              "pl_process: positional tensors present for the 'none' variant");
      break;
    case PositionalEncoding::learnable: {
      const Var& pos = is_query ? params.pos_bev : params.pos_cam;
      require(pos.defined(), "pl_process: learnable variant without positional tensors");
      require(pos.dim(0) == h, "pl_process: positional table has " + std::to_string(pos.dim(0)) +
                                   " rows, feature has " + std::to_string(h));
      tokens = ops::add_broadcast0(tokens, pos);
      break;
    }
    case PositionalEncoding::depth_height: {
      const Var& scale = is_query ? params.depth_scale_bev : params.height_scale_cam;
      require(scale.defined(), "pl_process: depth_height variant without scale tensors");
      tokens = ops::add_broadcast0(tokens, ops::matmul(position_column(h), scale));
      break;
    }
  }
  const Var& weight = role == TokenRole::query ? params.wq : role == TokenRole::key ? params.wk : params.wv;
  // Keys carry no bias: a per-query constant shift of the logits cancels in softmax.
  const Var& bias = role == TokenRole::query ? params.bq : role == TokenRole::key ? Var() : params.bv;
  Var flat = ops::reshape(tokens, {w * h, c});
  Var projected = ops::linear(flat, weight, bias);
  return ops::reshape(projected, {w, h, weight.dim(1)});
}

Var column_mha(const Var& q, const Var& k, const Var& v, std::size_t heads, double dropout,
               const AttnRuntime& runtime) {
  require(q.value().rank() == 3 && k.value().rank() == 3 && v.value().rank() == 3,
          "column_mha expects rank-3 token tensors");
  const std::size_t w = q.dim(0), hq = q.dim(1), d = q.dim(2);
  const std::size_t hk = k.dim(1);
  require(k.dim(0) == w && v.dim(0) == w, "column_mha: column counts differ");
  require(k.dim(2) == d && v.dim(2) == d, "column_mha: token widths differ");
  require(v.dim(1) == hk, "column_mha: key and value lengths differ");
  require(heads > 0 && d % heads == 0, "column_mha: width not divisible by heads");
  require(dropout >= 0.0 && dropout < 1.0, "column_mha: dropout rate must be in [0, 1)");
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool drop = runtime.training && dropout > 0.0;
  const Real keep = static_cast<Real>(1.0 / (1.0 - dropout));
  const std::uint64_t seed = runtime.seed;

  // Probabilities are laid out [W x heads x Hq x Hk]; the dropout mask index
  // is the flat position in that layout.
  const Real* qv = q.value().ptr();
  const Real* kv = k.value().ptr();
  const Real* vv = v.value().ptr();
  Tensor probs({w, heads, hq, hk});
  Tensor out({w, hq, d});
  std::vector<Real> row(hk);
  for (std::size_t c = 0; c < w; ++c)
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < hq; ++i) {
        const Real* qi = qv + (c * hq + i) * d + off;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < hk; ++j) {
          const Real* kj = kv + (c * hk + j) * d + off;
          Real acc = 0;
          for (std::size_t p = 0; p < dh; ++p) acc += qi[p] * kj[p];
          row[j] = static_cast<Real>(acc * scale);
          mx = std::max(mx, row[j]);
        }
        Real total = 0;
        for (std::size_t j = 0; j < hk; ++j) {
          row[j] = std::exp(row[j] - mx);
          total += row[j];
        }
        const std::size_t base = ((c * heads + h) * hq + i) * hk;
        Real* oi = out.ptr() + (c * hq + i) * d + off;
        for (std::size_t j = 0; j < hk; ++j) {
          const Real p = row[j] / total;
          probs[base + j] = p;
          Real a = p;
          if (drop) a = dropout_uniform(seed, base + j) < dropout ? Real(0) : p * keep;
          if (a == Real(0)) continue;
          const Real* vj = vv + (c * hk + j) * d + off;
          for (std::size_t p2 = 0; p2 < dh; ++p2) oi[p2] += a * vj[p2];
        }
      }
    }
  add_macs(static_cast<std::uint64_t>(w) * heads * 2 * hq * hk * dh);

  return ops::custom(std::move(out), {q, k, v}, [=, probs = std::move(probs)](Node& self) {
    const Real* go = self.grad.ptr();
    Real* gq = q.requires_grad() ? q.grad().ptr() : nullptr;
    Real* gk = k.requires_grad() ? k.grad().ptr() : nullptr;
    Real* gv = v.requires_grad() ? v.grad().ptr() : nullptr;
    const Real* qv2 = q.value().ptr();
    const Real* kv2 = k.value().ptr();
    const Real* vv2 = v.value().ptr();
    std::vector<Real> dp(hk);
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < hq; ++i) {
          const std::size_t base = ((c * heads + h) * hq + i) * hk;
          const Real* goi = go + (c * hq + i) * d + off;
          Real dot = 0;
          for (std::size_t j = 0; j < hk; ++j) {
            Real m = Real(1);
            if (drop) m = dropout_uniform(seed, base + j) < dropout ? Real(0) : keep;
            const Real* vj = vv2 + (c * hk + j) * d + off;
            Real da = 0;
            for (std::size_t p = 0; p < dh; ++p) da += goi[p] * vj[p];
            if (gv && m != Real(0)) {
              const Real a = probs[base + j] * m;
              Real* gvj = gv + (c * hk + j) * d + off;
              for (std::size_t p = 0; p < dh; ++p) gvj[p] += a * goi[p];
            }
            dp[j] = da * m;
            dot += dp[j] * probs[base + j];
          }
          const Real* qi = qv2 + (c * hq + i) * d + off;
          Real* gqi = gq ? gq + (c * hq + i) * d + off : nullptr;
          for (std::size_t j = 0; j < hk; ++j) {
            const Real ds = static_cast<Real>(probs[base + j] * (dp[j] - dot) * scale);
            if (ds == Real(0)) continue;
            const std::size_t kj = (c * hk + j) * d + off;
            if (gqi)
              for (std::size_t p = 0; p < dh; ++p) gqi[p] += ds * kv2[kj + p];
            if (gk)
              for (std::size_t p = 0; p < dh; ++p) gk[kj + p] += ds * qi[p];
          }
        }
      }
  });
}

Var rg_attn_delta(const Var& bev, const BevSpec& spec, const Var& cam, const Transform2& t_ij,
                  const CameraRig& rig, const RgAttnParams& params, const AttnRuntime& runtime) {
  require(cam.value().rank() == 3, "rg_attn: camera features must be [C2 x H2 x W2]");
  const std::size_t c1 = bev.dim(0), h2 = cam.dim(1), w2 = cam.dim(2);
  const auto& cfg = params.cfg;
  require(c1 == cfg.c1, "rg_attn: BEV channel count does not match params");

  // Grid sector: camera origin, FOV span and radial extent on the target BEV.
  const Vec2 origin = camera_origin_in_target(t_ij, rig.mount);
  const AngularSpan span = fov_span_in_target(t_ij, rig.mount, rig.fov);
  const double radius = cfg.radius > 0.0 ? cfg.radius : max_radius(spec);
  const SectorGrid sector = build_sector(origin, span.theta_start, span.theta_span, w2, radius, cfg.radial_bins);

  Var sub = sector_sample(bev, spec, sector);  // [C1 x h x W2]
  // Reorder image columns so camera column w meets sector column w.
  Var cam_sector = cam;
  if constexpr (kImageColumnsDecreaseWithBearing) {
    auto flip = std::make_shared<const SparseMap>(SparseMap::flip_columns(h2, w2));
    cam_sector = ops::sparse_apply(cam, std::move(flip), {h2, w2});
  }
  Var q = pl_process(sub, TokenRole::query, params);
  Var k = pl_process(cam_sector, TokenRole::key, params);
  Var v = pl_process(cam_sector, TokenRole::value, params);
  Var fused = column_mha(q, k, v, cfg.heads, cfg.dropout, runtime);  // [W2 x h x d]
  const std::size_t d = fused.dim(2);
  Var out = ops::linear(ops::reshape(fused, {w2 * cfg.radial_bins, d}), params.wo, params.bo);
  out = ops::permute(ops::reshape(out, {w2, cfg.radial_bins, c1}), {2, 1, 0});  // [C1 x h x W2]
  return sector_inverse(out, spec, sector);
}

Var rg_attn_apply(const Var& bev, const BevSpec& spec, const Var& cam, const Transform2& t_ij,
                  const CameraRig& rig, const RgAttnParams& params, const AttnRuntime& runtime) {
  return ops::add(bev, rg_attn_delta(bev, spec, cam, t_ij, rig, params, runtime));
}

Var rg_attn_multi(const Var& bev, const BevSpec& spec, std::vector<CameraInput> cams,
                  const RgAttnParams& params, const AttnRuntime& runtime) {
  if (cams.empty()) return bev;
  std::stable_sort(cams.begin(), cams.end(), [](const CameraInput& a, const CameraInput& b) { return a.id < b.id; });
  Var total;
  for (const auto& cam : cams) {
    AttnRuntime rt = runtime;
    rt.seed = mix_seed(runtime.seed, cam.id);
    Var delta = rg_attn_delta(bev, spec, cam.features, cam.to_target, cam.rig, params, rt);
    total = total.defined() ? ops::add(total, delta) : delta;
  }
  return ops::add(bev, total);
}

std::uint64_t attention_op_count(std::size_t h1, std::size_t h2, std::size_t w2, std::size_t d,
                                 std::size_t heads, std::size_t c1, std::size_t c2) {
  require(heads > 0 && d % heads == 0, "attention_op_count: width not divisible by heads");
  const std::uint64_t W = w2, H1 = h1, H2 = h2, D = d;
  std::uint64_t count = W * heads * (2 * H1 * H2 * (D / heads));
  if (c1 && c2) count += W * H1 * c1 * D + 2 * W * H2 * c2 * D + W * H1 * D * c1;
  return count;
}

RGF_NAMESPACE_END
