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

#include "rgf/architectures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

RGF_NAMESPACE_BEGIN

bool has_lidar(Modality m) { return m != Modality::camera_only; }
bool has_camera(Modality m) { return m != Modality::lidar_only; }

std::string to_string(Modality m) {
  switch (m) {
    case Modality::lidar_only:
      return "L";
    case Modality::camera_only:
      return "C";
    case Modality::lidar_camera:
      return "LC";
  }
  return "?";
}

Modality parse_modality(const std::string& name) {
  if (name == "L" || name == "lidar_only") return Modality::lidar_only;
  if (name == "C" || name == "camera_only") return Modality::camera_only;
  if (name == "LC" || name == "lidar_camera") return Modality::lidar_camera;
  throw ContractError("unknown modality '" + name + "' (expected L, C or LC)");
}

void AgentObservation::validate() const {
  require(has_lidar(modality) || points.empty(), "agent " + std::to_string(agent_id) + ": points without LiDAR");
  if (has_camera(modality)) {
    require(!rigs.empty(), "agent " + std::to_string(agent_id) + ": camera modality without rigs");
    require(camera_rasters.size() == rigs.size(), "agent " + std::to_string(agent_id) + ": one raster per rig");
    for (std::size_t k = 0; k < rigs.size(); ++k) {
      const Tensor& r = camera_rasters[k];
      require(r.rank() == 3 && r.dim(1) == rigs[k].h2 && r.dim(2) == rigs[k].w2,
              "agent " + std::to_string(agent_id) + ": raster " + shape_to_string(r.shape()) +
                  " does not match its rig");
    }
  } else {
    require(camera_rasters.empty(), "agent " + std::to_string(agent_id) + ": rasters without a camera");
  }
}

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::lidar:
      return "lidar";
    case Architecture::ptp:
      return "ptp";
    case Architecture::coscoco:
      return "coscoco";
    case Architecture::prgaf:
      return "prgaf";
  }
  return "?";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "lidar") return Architecture::lidar;
  if (name == "ptp") return Architecture::ptp;
  if (name == "coscoco" || name == "cos-coco") return Architecture::coscoco;
  if (name == "prgaf") return Architecture::prgaf;
  throw ContractError("unknown architecture '" + name + "' (expected lidar, ptp, coscoco or prgaf)");
}

void ModelConfig::validate() const {
  bev.validate();
  require(c1 > 0 && c2 > 0 && heads > 0, "model: channel and head counts must be positive");
  require(c1 % heads == 0, "model: c1 must be divisible by the head count");
  require(dropout >= 0.0 && dropout < 1.0, "model: dropout must lie in [0, 1)");
  require(lambda_reg >= 0.0 && lambda_dir >= 0.0, "model: loss weights must be non-negative");
  PyramidConfig{c1, factors}.validate();
  for (std::size_t f : factors)
    require(bev.h1 % f == 0 && bev.w1 % f == 0 && cam_h2 % f == 0 && cam_w2 % f == 0,
            "model: every pyramid factor must divide the BEV and camera extents");
}

std::string ModelConfig::hash() const {
  std::ostringstream s;
  s.precision(17);
  s << to_string(arch) << '|' << bev.x_min << ',' << bev.x_max << ',' << bev.y_min << ',' << bev.y_max << ','
    << bev.cell << ',' << bev.h1 << ',' << bev.w1 << '|' << c1 << ',' << c2 << ',' << cam_h2 << ',' << cam_w2 << ','
    << heads << ',' << to_string(encoding) << ',' << dropout << '|';
  for (std::size_t f : factors) s << f << ',';
  s << '|' << lambda_reg << ',' << lambda_dir;
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s.str()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream hex;
  hex << std::hex;
  hex.width(16);
  hex.fill('0');
  hex << h;
  return hex.str();
}

Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  std::mt19937_64 rng(mix_seed(seed, 0x6d6f64656cull));
  m.lidar_w = m.store.add("lidar.w", Tensor::randn({kLidarStats, cfg.c1}, rng, 0.5));
  m.cam_w = m.store.add("camera.w", Tensor::randn({kRawCameraChannels, cfg.c2}, rng, 0.5));
  m.cam_b = m.store.add("camera.b", Tensor({cfg.c2}));
  const bool per_scale = cfg.arch == Architecture::prgaf;
  const std::size_t kernels = cfg.arch == Architecture::lidar ? 0 : (per_scale ? cfg.factors.size() : 1);
  for (std::size_t s = 0; s < kernels; ++s) {
    const std::size_t f = per_scale ? cfg.factors[s] : 1;
    RgAttnConfig ac;
    ac.c1 = cfg.c1;
    ac.c2 = cfg.c2;
    ac.heads = cfg.heads;
    ac.radial_bins = cfg.bev.h1 / f;
    ac.cam_h2 = cfg.cam_h2 / f;
    ac.encoding = cfg.encoding;
    ac.dropout = cfg.dropout;
    m.attn.push_back(make_rg_attn_params(ac, m.store, "attn" + std::to_string(s), rng));
  }
  m.pyramid = make_pyramid_params(PyramidConfig{cfg.c1, cfg.factors}, m.store, "pyramid", rng);
  m.head_w = m.store.add("head.w", Tensor::randn({cfg.c1, kHeadChannels}, rng, 0.1 / std::sqrt(double(cfg.c1))));
  // Prior: rare objects of typical vehicle size, heading along +x.
  m.head_b = m.store.add("head.b", Tensor({kHeadChannels}, {Real(-3.0), Real(0), Real(0), Real(std::log(1.9)),
                                                            Real(std::log(4.3)), Real(0), Real(1)}));
  return m;
}

void zero_attention_outputs(Model& model) {
  for (auto& a : model.attn)
    for (Var* v : {&a.wv, &a.bv, &a.wo, &a.bo}) v->mutable_value().fill(Real(0));
}

Tensor lidar_stats(const std::vector<LidarPoint>& points, const BevSpec& spec) {
  const std::size_t n = spec.cells();
  Tensor out({kLidarStats, spec.h1, spec.w1});
  std::vector<std::size_t> count(n, 0);
  std::vector<double> zsum(n, 0.0), zmax(n, 0.0), isum(n, 0.0);
  for (const auto& p : points) {
    const double fr = std::floor((p.y - spec.y_min) / spec.cell);
    const double fc = std::floor((p.x - spec.x_min) / spec.cell);
    if (fr < 0 || fc < 0 || fr >= double(spec.h1) || fc >= double(spec.w1)) continue;
    const std::size_t i = std::size_t(fr) * spec.w1 + std::size_t(fc);
    zmax[i] = count[i] == 0 ? p.z : std::max(zmax[i], p.z);
    ++count[i];
    zsum[i] += p.z;
    isum[i] += p.intensity;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] == 0) continue;
    const double c = double(count[i]);
    out[i] = Real(std::log1p(c));
    out[n + i] = Real(zsum[i] / c);
    out[2 * n + i] = Real(zmax[i]);
    out[3 * n + i] = Real(isum[i] / c);
  }
  return out;
}

Var lidar_encode(const std::vector<LidarPoint>& points, const BevSpec& spec, const Var& weight) {
  return ops::channel_linear(Var(lidar_stats(points, spec)), weight, Var());
}

Var camera_encode(const Var& raster, const Var& weight, const Var& bias) {
  require(raster.value().rank() == 3, "camera_encode: raster must be [Craw x H2 x W2]");
  return ops::channel_linear(raster, weight, bias);
}

Transform2 agent_to_ego(const AgentObservation& agent, const AgentObservation& ego) {
  if (agent.agent_id == ego.agent_id) return Transform2::identity();
  return relative_transform(agent.pose, ego.pose);
}

namespace {

const AgentObservation& find_ego(const std::vector<AgentObservation>& agents, std::size_t ego_id) {
  for (const auto& a : agents)
    if (a.agent_id == ego_id) return a;
  throw ContractError("ego agent " + std::to_string(ego_id) + " is not among the observations");
}

std::vector<CameraInput> agent_cameras(const Model& model, const AgentObservation& agent, const Transform2& to_target,
                                       std::size_t factor) {
  std::vector<CameraInput> cams;
  if (!has_camera(agent.modality)) return cams;
  for (std::size_t k = 0; k < agent.rigs.size(); ++k) {
    Var feat = camera_encode(Var(agent.camera_rasters[k]), model.cam_w, model.cam_b);
    for (std::size_t f = 1; f < factor; f *= 2) feat = downsample2(feat);
    cams.push_back({agent.agent_id * 64 + k, feat, to_target, agent.rigs[k]});
  }
  return cams;
}

}  // namespace

void check_capability(Architecture arch, const std::vector<AgentObservation>& agents) {
  std::size_t lidar_agents = 0;
  for (const auto& a : agents) {
    a.validate();
    if (has_lidar(a.modality)) ++lidar_agents;
    if ((arch == Architecture::ptp || arch == Architecture::prgaf) && a.modality == Modality::camera_only)
      throw CapabilityError(to_string(arch) + " needs LiDAR on every agent; agent " + std::to_string(a.agent_id) +
                            " is camera-only");
  }
  if (lidar_agents == 0) throw CapabilityError(to_string(arch) + " needs at least one LiDAR-bearing agent");
}

Var lidar_forward(const Model& model, const std::vector<AgentObservation>& agents, std::size_t ego_id) {
  check_capability(Architecture::lidar, agents);
  const auto& ego = find_ego(agents, ego_id);
  const BevSpec& spec = model.cfg.bev;
  std::vector<WarpedAgentMap> maps;
  for (const auto& a : agents) {
    if (!has_lidar(a.modality)) continue;
    maps.push_back(warp_to_ego(lidar_encode(a.points, spec, model.lidar_w), spec, agent_to_ego(a, ego), a.agent_id));
  }
  return pyramid_fuse(std::move(maps), model.pyramid);
}

Var ptp_forward(const Model& model, const std::vector<AgentObservation>& agents, std::size_t ego_id,
                const AttnRuntime& runtime) {
  check_capability(Architecture::ptp, agents);
  require(model.attn.size() == 1, "ptp_forward: model has no single attention kernel");
  const auto& ego = find_ego(agents, ego_id);
  const BevSpec& spec = model.cfg.bev;
  std::vector<WarpedAgentMap> maps;
  for (const auto& a : agents) {
    Var bev = lidar_encode(a.points, spec, model.lidar_w);
    // Intra-agent painting: the agent's own cameras on its own BEV.
    bev = rg_attn_multi(bev, spec, agent_cameras(model, a, Transform2::identity(), 1), model.attn[0], runtime);
    maps.push_back(warp_to_ego(bev, spec, agent_to_ego(a, ego), a.agent_id));
  }
  return pyramid_fuse(std::move(maps), model.pyramid);
}

Var cos_coco_forward(const Model& model, const std::vector<AgentObservation>& agents, std::size_t ego_id,
                     const AttnRuntime& runtime) {
  check_capability(Architecture::coscoco, agents);
  require(model.attn.size() == 1, "cos_coco_forward: model has no single attention kernel");
  const auto& ego = find_ego(agents, ego_id);
  const BevSpec& spec = model.cfg.bev;
  std::vector<WarpedAgentMap> maps;
  std::vector<CameraInput> cams;
  for (const auto& a : agents) {
    const Transform2 t = agent_to_ego(a, ego);
    if (has_lidar(a.modality))
      maps.push_back(warp_to_ego(lidar_encode(a.points, spec, model.lidar_w), spec, t, a.agent_id));
    auto mine = agent_cameras(model, a, t, 1);
    cams.insert(cams.end(), mine.begin(), mine.end());
  }
  Var sketch = pyramid_fuse(std::move(maps), model.pyramid);
  return rg_attn_multi(sketch, spec, std::move(cams), model.attn[0], runtime);
}

Var prgaf_forward(const Model& model, const std::vector<AgentObservation>& agents, std::size_t ego_id,
                  const AttnRuntime& runtime) {
  check_capability(Architecture::prgaf, agents);
  const auto& factors = model.pyramid.cfg.factors;
  require(model.attn.size() == factors.size(), "prgaf_forward: one attention kernel per scale required");
  const auto& ego = find_ego(agents, ego_id);
  const BevSpec& spec = model.cfg.bev;

  // Warp first so each scale is pooled exactly as the plain pyramid pools it;
  // cameras are then placed with their agent-to-ego transform.
  std::vector<WarpedAgentMap> full;
  std::vector<Transform2> to_ego;
  for (const auto& a : agents) {
    to_ego.push_back(agent_to_ego(a, ego));
    full.push_back(warp_to_ego(lidar_encode(a.points, spec, model.lidar_w), spec, to_ego.back(), a.agent_id));
  }
  std::vector<std::size_t> order(agents.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return agents[x].agent_id < agents[y].agent_id; });

  std::vector<Var> fused;
  std::vector<WarpedAgentMap> level(full.size());
  for (std::size_t i = 0; i < order.size(); ++i) level[i] = full[order[i]];
  std::size_t level_factor = 1;
  for (std::size_t s = 0; s < factors.size(); ++s) {
    const std::size_t f = factors[s];
    level = downsample_maps(level, f / level_factor);
    level_factor = f;
    const BevSpec scale_spec = spec.coarsened(f);
    std::vector<WarpedAgentMap> painted = level;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& a = agents[order[i]];
      painted[i].feature = rg_attn_multi(level[i].feature, scale_spec, agent_cameras(model, a, to_ego[order[i]], f),
                                         model.attn[s], runtime);
    }
    fused.push_back(fuse_scale(painted, model.pyramid, s));
  }
  return merge_scales(fused, model.pyramid);
}

Var fuse_forward(const Model& model, const std::vector<AgentObservation>& agents, std::size_t ego_id,
                 const AttnRuntime& runtime) {
  switch (model.cfg.arch) {
    case Architecture::lidar:
      return lidar_forward(model, agents, ego_id);
    case Architecture::ptp:
      return ptp_forward(model, agents, ego_id, runtime);
    case Architecture::coscoco:
      return cos_coco_forward(model, agents, ego_id, runtime);
    case Architecture::prgaf:
      return prgaf_forward(model, agents, ego_id, runtime);
  }
  throw ContractError("fuse_forward: unknown architecture");
}

Var detect_head(const Var& fused, const Var& weight, const Var& bias) {
  require(weight.value().rank() == 2 && weight.dim(1) == kHeadChannels, "detect_head: head must map to 7 channels");
  return ops::channel_linear(fused, weight, bias);
}

DetectionTargets build_targets(const std::vector<DetectionBox>& boxes, const BevSpec& spec) {
  const std::size_t n = spec.cells();
  DetectionTargets t{Tensor({kHeadChannels, spec.h1, spec.w1}), Tensor({spec.h1, spec.w1})};
  for (const auto& b : boxes) {
    require(b.w > 0.0 && b.l > 0.0, "build_targets: box extents must be positive");
    const double reach = 0.5 * std::hypot(b.w, b.l);
    const auto lo = world_to_grid(spec, {b.cx - reach, b.cy - reach});
    const auto hi = world_to_grid(spec, {b.cx + reach, b.cy + reach});
    const long r0 = std::max(0L, long(std::floor(lo.u))), r1 = std::min(long(spec.h1) - 1, long(std::ceil(hi.u)));
    const long c0 = std::max(0L, long(std::floor(lo.v))), c1 = std::min(long(spec.w1) - 1, long(std::ceil(hi.v)));
    for (long r = r0; r <= r1; ++r)
      for (long c = c0; c <= c1; ++c) {
        const Vec2 center = grid_to_world(spec, {double(r), double(c)});
        if (!box_contains(b, center)) continue;
        const std::size_t i = std::size_t(r) * spec.w1 + std::size_t(c);
        t.foreground[i] = 1;
        const Real vals[kHeadChannels] = {1,
                                          Real(b.cx - center.x),
                                          Real(b.cy - center.y),
                                          Real(std::log(b.w)),
                                          Real(std::log(b.l)),
                                          Real(std::sin(b.yaw)),
                                          Real(std::cos(b.yaw))};
        for (std::size_t k = 0; k < kHeadChannels; ++k) t.target[k * n + i] = vals[k];
      }
  }
  return t;
}

LossBreakdown detection_loss(const Var& raw, const Tensor& target, const Tensor& foreground, double lambda_reg,
                             double lambda_dir) {
  require(raw.value().rank() == 3 && raw.dim(0) == kHeadChannels, "detection_loss: raw map must be [7 x H x W]");
  require(target.shape() == raw.shape(), "detection_loss: target shape mismatch");
  const std::size_t n = raw.dim(1) * raw.dim(2);
  require(foreground.numel() == n, "detection_loss: foreground mask shape mismatch");
  const Tensor& x = raw.value();
  // extended accumulators: the loss is a long sum of O(1) terms
  long double cls = 0.0, reg = 0.0, dir = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = x[i], t = target[i];
    cls += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    const double m = foreground[i];
    if (m == 0.0) continue;
    mass += m;
    for (std::size_t k = 1; k <= 4; ++k) reg += m * std::abs(double(x[k * n + i]) - target[k * n + i]);
    for (std::size_t k = 5; k <= 6; ++k) dir += m * std::abs(double(x[k * n + i]) - target[k * n + i]);
  }
  cls /= n;
  if (mass > 0.0) {
    reg /= mass;
    dir /= mass;
  }
  LossBreakdown out;
  out.cls = double(cls);
  out.reg = double(reg);
  out.dir = double(dir);
  const double total = double(cls + lambda_reg * reg + lambda_dir * dir);
  out.total = ops::custom(Tensor({1}, {Real(total)}), {raw}, [raw, target, foreground, n, mass = double(mass), lambda_reg,
                                                            lambda_dir](Node& self) {
    const double g = self.grad[0];
    const Tensor& xv = raw.value();
    Tensor& gx = raw.grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double z = xv[i];
      const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      gx[i] += Real(g * (sig - target[i]) / double(n));
      const double m = foreground[i];
      if (m == 0.0) continue;
      for (std::size_t k = 1; k <= 6; ++k) {
        const double diff = double(xv[k * n + i]) - target[k * n + i];
        const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
        const double lam = k <= 4 ? lambda_reg : lambda_dir;
        gx[k * n + i] += Real(g * lam * m * sign / mass);
      }
    }
  });
  return out;
}

Var frame_loss(const Model& model, const Frame& frame, const AttnRuntime& runtime, LossBreakdown* parts) {
  Var fused = fuse_forward(model, frame.agents, frame.ego_id, runtime);
  Var raw = detect_head(fused, model.head_w, model.head_b);
  const auto targets = build_targets(frame.gt, model.cfg.bev);
  LossBreakdown lb = detection_loss(raw, targets.target, targets.foreground, model.cfg.lambda_reg,
                                    model.cfg.lambda_dir);
  if (parts) *parts = lb;
  return lb.total;
}

std::vector<DetectionBox> detect(const Model& model, const Frame& frame, const DetectConfig& cfg) {
  NoGradGuard guard;
  Var fused = fuse_forward(model, frame.agents, frame.ego_id, AttnRuntime{false, 0});
  Var raw = detect_head(fused, model.head_w, model.head_b);
  return decode_nms(raw.value(), model.cfg.bev, cfg.score_thresh, cfg.nms_iou);
}

TrainHistory train_loop(Model& model, const std::vector<Frame>& frames, const TrainConfig& cfg) {
  require(!frames.empty(), "train_loop: empty dataset");
  // A zero learning rate freezes the model; losses are still recorded.
  const bool frozen = cfg.optimizer.learning_rate == 0.0;
  if (!frozen) cfg.optimizer.validate();
  OptimizerConfig oc = cfg.optimizer;
  if (frozen) oc.learning_rate = 1.0;
  Optimizer opt(oc);
  TrainHistory hist;
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x747261696eull));
  std::size_t step = 0;
  model.store.zero_grad();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double acc = 0.0;
    for (std::size_t idx : order) {
      const AttnRuntime rt{true, mix_seed(cfg.seed, step++)};
      Var loss = frame_loss(model, frames[idx], rt);
      const double v = loss.value()[0];
      if (!std::isfinite(v)) {
        hist.diverged = true;
        hist.report = "non-finite loss at epoch " + std::to_string(epoch) + ", frame " +
                      std::to_string(frames[idx].frame_id);
        model.store.zero_grad();
        return hist;
      }
      acc += v;
      if (frozen) continue;
      loss.backward();
      try {
        opt.step(model.store.all());
      } catch (const NumericError& e) {
        hist.diverged = true;
        hist.report = "epoch " + std::to_string(epoch) + ", frame " + std::to_string(frames[idx].frame_id) + ": " +
                      e.what();
        model.store.zero_grad();
        return hist;
      }
    }
    hist.epoch_loss.push_back(acc / double(frames.size()));
    if (cfg.on_epoch) cfg.on_epoch(epoch, hist.epoch_loss.back());
  }
  return hist;
}

RGF_NAMESPACE_END
