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

#include "rgf/coopsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

RGF_NAMESPACE_BEGIN

namespace {

constexpr std::size_t kPlacementRetries = 2000;
constexpr double kBoxClearance = 0.5;    // inflation used for the overlap test
constexpr double kAgentClearance = 1.5;  // free space around every agent
constexpr double kMountOffset = 0.3;     // cameras sit this far out along their axis

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool inside_bounds(const DetectionBox& b, const WorldBounds& w, double margin) {
  for (const Vec2& c : box_corners(b))
    if (c.x < w.x_min + margin || c.x > w.x_max - margin || c.y < w.y_min + margin || c.y > w.y_max - margin)
      return false;
  return true;
}

// Ray against segment p->q; returns the ray parameter or a negative value.
double ray_segment(Vec2 o, Vec2 d, Vec2 p, Vec2 q) {
  const Vec2 e = q - p;
  const double denom = d.x * e.y - d.y * e.x;
  if (std::abs(denom) < 1e-15) return -1.0;
  const Vec2 w = p - o;
  const double t = (w.x * e.y - w.y * e.x) / denom;
  const double s = (w.x * d.y - w.y * d.x) / denom;
  if (t < 0.0 || s < 0.0 || s > 1.0) return -1.0;
  return t;
}

}  // namespace

std::vector<DetectionBox> Scene::gt_boxes() const {
  std::vector<DetectionBox> out;
  for (const auto& o : obstacles)
    if (o.target) out.push_back(o.box);
  return out;
}

void SceneConfig::validate() const {
  require(n_agents >= 1, "scene: at least one agent is required");
  require(!modalities.empty(), "scene: modality list must not be empty");
  require(bounds.x_max > bounds.x_min && bounds.y_max > bounds.y_min, "scene: world bounds are empty");
  require(camera_fov > 0.0 && camera_fov < std::numbers::pi, "scene: camera fov must lie in (0, pi)");
  require(camera_h2 > 0 && camera_w2 > 0, "scene: camera extents must be positive");
}

std::vector<CameraRig> default_rigs(std::size_t count, double fov, std::size_t h2, std::size_t w2) {
  std::vector<CameraRig> rigs;
  for (std::size_t k = 0; k < count; ++k) {
    double yaw = 2.0 * std::numbers::pi * double(k) / double(count);
    if (count == 4) yaw = std::array<double, 4>{0.0, std::numbers::pi / 2, std::numbers::pi, -std::numbers::pi / 2}[k];
    CameraRig rig;
    rig.mount = Transform2::from_yaw(yaw, {kMountOffset * std::cos(yaw), kMountOffset * std::sin(yaw)});
    rig.fov = fov;
    rig.h2 = h2;
    rig.w2 = w2;
    rig.validate();
    rigs.push_back(rig);
  }
  return rigs;
}

Scene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  Scene scene;
  scene.frame_id = cfg.frame_id;
  scene.seed = cfg.seed;
  scene.bounds = cfg.bounds;
  std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, cfg.frame_id), 0x7363656e65ull));
  const WorldBounds& wb = cfg.bounds;

  const auto rigs = default_rigs(cfg.cameras, cfg.camera_fov, cfg.camera_h2, cfg.camera_w2);
  for (std::size_t a = 0; a < cfg.n_agents; ++a) {
    SceneAgent agent;
    agent.agent_id = a;
    agent.modality = cfg.modalities[std::min(a, cfg.modalities.size() - 1)];
    agent.rigs = rigs;
    if (a > 0) {
      bool placed = false;
      for (std::size_t attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
        const Pose2 p(uniform(rng, wb.x_min + 4.0, wb.x_max - 4.0), uniform(rng, wb.y_min + 2.0, wb.y_max - 2.0),
                      uniform(rng, -std::numbers::pi, std::numbers::pi));
        placed = std::all_of(scene.agents.begin(), scene.agents.end(), [&](const SceneAgent& o) {
          return std::hypot(o.pose.x - p.x, o.pose.y - p.y) >= 6.0;
        });
        if (placed) agent.pose = p;
      }
      require(placed, "generate_scene: could not place agent " + std::to_string(a));
    }
    scene.agents.push_back(agent);
  }

  const std::size_t total = cfg.n_boxes + cfg.n_distractors;
  for (std::size_t i = 0; i < total; ++i) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      Obstacle o;
      o.target = i < cfg.n_boxes;
      o.box.l = uniform(rng, 3.6, 4.8);
      o.box.w = uniform(rng, 1.6, 2.1);
      o.box.yaw = uniform(rng, -std::numbers::pi / 2, std::numbers::pi / 2);
      o.box.cx = uniform(rng, wb.x_min, wb.x_max);
      o.box.cy = uniform(rng, wb.y_min, wb.y_max);
      o.height = uniform(rng, 1.4, 1.9);
      if (!inside_bounds(o.box, wb, 0.5)) continue;
      const double reach = 0.5 * std::hypot(o.box.w, o.box.l) + kAgentClearance;
      bool ok = std::all_of(scene.agents.begin(), scene.agents.end(), [&](const SceneAgent& ag) {
        return std::hypot(ag.pose.x - o.box.cx, ag.pose.y - o.box.cy) >= reach;
      });
      DetectionBox grown = o.box;
      grown.w += 2 * kBoxClearance;
      grown.l += 2 * kBoxClearance;
      for (std::size_t k = 0; ok && k < scene.obstacles.size(); ++k) {
        DetectionBox other = scene.obstacles[k].box;
        other.w += 2 * kBoxClearance;
        other.l += 2 * kBoxClearance;
        ok = rotated_iou(grown, other) == 0.0;
      }
      if (ok) {
        scene.obstacles.push_back(o);
        placed = true;
      }
    }
    require(placed, "generate_scene: could not place box " + std::to_string(i) + " after " +
                        std::to_string(kPlacementRetries) + " attempts");
  }
  return scene;
}

RayHit cast_ray(const Scene& scene, Vec2 origin, double heading, double max_range) {
  const Vec2 d{std::cos(heading), std::sin(heading)};
  RayHit hit;
  hit.distance = max_range;
  for (std::size_t i = 0; i < scene.obstacles.size(); ++i) {
    const auto c = box_corners(scene.obstacles[i].box);
    for (std::size_t e = 0; e < 4; ++e) {
      const double t = ray_segment(origin, d, c[e], c[(e + 1) % 4]);
      if (t >= 0.0 && t < hit.distance) {
        hit.distance = t;
        hit.obstacle = static_cast<std::ptrdiff_t>(i);
      }
    }
  }
  if (hit.obstacle < 0) hit.distance = 0.0;
  return hit;
}

std::vector<LidarPoint> sample_lidar(const Scene& scene, std::size_t agent_index, const LidarConfig& cfg) {
  require(agent_index < scene.agents.size(), "sample_lidar: agent index out of range");
  require(cfg.rays > 0 && cfg.max_range > 0.0 && cfg.noise_std >= 0.0, "sample_lidar: invalid configuration");
  const SceneAgent& agent = scene.agents[agent_index];
  std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, scene.frame_id), mix_seed(agent.agent_id, 0x6c69646172ull)));
  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  std::vector<LidarPoint> points;
  for (std::size_t k = 0; k < cfg.rays; ++k) {
    const double local = 2.0 * std::numbers::pi * double(k) / double(cfg.rays);
    const RayHit hit = cast_ray(scene, {agent.pose.x, agent.pose.y}, agent.pose.yaw + local, cfg.max_range);
    if (hit.obstacle < 0) continue;
    const double r = hit.distance + (cfg.noise_std > 0.0 ? noise(rng) : 0.0);
    const Obstacle& o = scene.obstacles[static_cast<std::size_t>(hit.obstacle)];
    LidarPoint p;
    p.x = r * std::cos(local);
    p.y = r * std::sin(local);
    p.z = uniform(rng, 0.0, o.height);
    p.intensity = uniform(rng, 0.3, 0.7);
    points.push_back(p);
  }
  return points;
}

Tensor render_camera_semantics(const Scene& scene, std::size_t agent_index, std::size_t rig_index,
                               const CameraConfig& cfg) {
  require(agent_index < scene.agents.size(), "render_camera_semantics: agent index out of range");
  const SceneAgent& agent = scene.agents[agent_index];
  require(rig_index < agent.rigs.size(), "render_camera_semantics: rig index out of range");
  const CameraRig& rig = agent.rigs[rig_index];
  const std::size_t h2 = rig.h2, w2 = rig.w2;
  Tensor out({kRawCameraChannels, h2, w2});
  const std::size_t plane = h2 * w2;
  for (std::size_t i = 0; i < plane; ++i) out[kCamBias * plane + i] = 1;

  const Transform2 cam = Transform2::from_pose(agent.pose).compose(rig.mount);
  const double horizon = double(h2) / 2.0, focal = double(h2);
  for (std::size_t col = 0; col < w2; ++col) {
    const double bearing = image_column_bearing(col, w2, rig.fov);
    const RayHit hit = cast_ray(scene, cam.t, cam.yaw() + bearing, cfg.max_range);
    if (hit.obstacle < 0) continue;
    const Obstacle& o = scene.obstacles[static_cast<std::size_t>(hit.obstacle)];
    const double d = std::max(hit.distance, 0.5);
    const double top = horizon - focal * (o.height - cfg.mount_height) / d;
    const double bottom = horizon + focal * cfg.mount_height / d;
    for (std::size_t r = 0; r < h2; ++r) {
      const double center = double(r) + 0.5;
      const std::size_t i = r * w2 + col;
      if (center >= top && center <= bottom) {
        out[(o.target ? kCamTarget : kCamClutter) * plane + i] = 1;
        out[kCamBearing * plane + i] = Real(bearing / (rig.fov / 2.0));
      } else if (center > bottom) {
        out[kCamGround * plane + i] = Real(std::min(1.0, 5.0 / d));
      }
    }
  }
  return out;
}

void PoseNoiseModel::validate() const {
  require(sigma_p >= 0.0 && sigma_r >= 0.0, "pose noise sigmas must be non-negative");
}

Pose2 apply_pose_noise(const Pose2& pose, const PoseNoiseModel& model) {
  model.validate();
  if (model.sigma_p == 0.0 && model.sigma_r == 0.0) return pose;
  std::mt19937_64 rng(mix_seed(model.seed, 0x706f7365ull));
  std::normal_distribution<double> n01(0.0, 1.0);
  const double dx = model.sigma_p * n01(rng);
  const double dy = model.sigma_p * n01(rng);
  const double dyaw = model.sigma_r * n01(rng);
  return Pose2(pose.x + dx, pose.y + dy, pose.yaw + dyaw);
}

Frame observe(const Scene& scene, const ObserveConfig& cfg) {
  require(!scene.agents.empty(), "observe: scene has no agents");
  Frame frame;
  frame.frame_id = scene.frame_id;
  frame.ego_id = scene.agents.front().agent_id;
  const std::size_t n = cfg.modalities.empty() ? scene.agents.size() : std::min(cfg.modalities.size(), scene.agents.size());
  for (std::size_t a = 0; a < n; ++a) {
    const SceneAgent& sa = scene.agents[a];
    AgentObservation obs;
    obs.agent_id = sa.agent_id;
    obs.modality = cfg.modalities.empty() ? sa.modality : cfg.modalities[a];
    obs.pose = sa.pose;
    if (a > 0) {
      PoseNoiseModel noise = cfg.noise;
      noise.seed = mix_seed(mix_seed(cfg.noise.seed, scene.frame_id), sa.agent_id);
      obs.pose = apply_pose_noise(sa.pose, noise);
    }
    if (has_lidar(obs.modality)) obs.points = sample_lidar(scene, a, cfg.lidar);
    if (has_camera(obs.modality)) {
      obs.rigs = sa.rigs;
      for (std::size_t k = 0; k < sa.rigs.size(); ++k)
        obs.camera_rasters.push_back(render_camera_semantics(scene, a, k, cfg.camera));
    }
    frame.agents.push_back(std::move(obs));
  }
  const Transform2 world_to_ego = Transform2::from_pose(scene.agents.front().pose).inverse();
  for (const auto& b : scene.gt_boxes()) frame.gt.push_back(transform_box(b, world_to_ego));
  return frame;
}

std::vector<Modality> parse_modality_mix(const std::string& mix, std::size_t n_agents) {
  std::vector<Modality> parts;
  std::stringstream ss(mix);
  std::string tok;
  while (std::getline(ss, tok, '+')) parts.push_back(parse_modality(tok));
  require(!parts.empty(), "modality mix '" + mix + "' is empty");
  require(n_agents >= 1, "modality mix needs at least one agent");
  if (parts.size() == 2)
    while (parts.size() < n_agents) parts.push_back(parts.back());
  require(parts.size() <= n_agents, "modality mix '" + mix + "' names more agents than the scene holds");
  return parts;
}

nlohmann::ordered_json scene_to_json(const Scene& scene) {
  nlohmann::ordered_json j;
  j["frame_id"] = scene.frame_id;
  j["seed"] = scene.seed;
  j["bounds"] = {{"x_min", scene.bounds.x_min},
                 {"x_max", scene.bounds.x_max},
                 {"y_min", scene.bounds.y_min},
                 {"y_max", scene.bounds.y_max}};
  j["obstacles"] = nlohmann::ordered_json::array();
  for (const auto& o : scene.obstacles)
    j["obstacles"].push_back({{"cx", o.box.cx},
                              {"cy", o.box.cy},
                              {"w", o.box.w},
                              {"l", o.box.l},
                              {"yaw", o.box.yaw},
                              {"height", o.height},
                              {"target", o.target}});
  j["agents"] = nlohmann::ordered_json::array();
  for (const auto& a : scene.agents) {
    nlohmann::ordered_json ja;
    ja["agent_id"] = a.agent_id;
    ja["pose"] = {{"x", a.pose.x}, {"y", a.pose.y}, {"yaw", a.pose.yaw}};
    ja["modality"] = to_string(a.modality);
    ja["rigs"] = nlohmann::ordered_json::array();
    for (const auto& r : a.rigs)
      ja["rigs"].push_back({{"mount", {{"x", r.mount.t.x}, {"y", r.mount.t.y}, {"yaw", r.mount.yaw()}}},
                            {"fov", r.fov},
                            {"h2", r.h2},
                            {"w2", r.w2}});
    j["agents"].push_back(ja);
  }
  return j;
}

Scene scene_from_json(const nlohmann::json& j) {
  try {
    Scene s;
    s.frame_id = j.at("frame_id").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto& b = j.at("bounds");
    s.bounds = {b.at("x_min").get<double>(), b.at("x_max").get<double>(), b.at("y_min").get<double>(),
                b.at("y_max").get<double>()};
    for (const auto& o : j.at("obstacles")) {
      Obstacle ob;
      ob.box = {o.at("cx").get<double>(), o.at("cy").get<double>(), o.at("w").get<double>(),
                o.at("l").get<double>(), o.at("yaw").get<double>(), 1.0};
      ob.height = o.at("height").get<double>();
      ob.target = o.at("target").get<bool>();
      s.obstacles.push_back(ob);
    }
    for (const auto& a : j.at("agents")) {
      SceneAgent sa;
      sa.agent_id = a.at("agent_id").get<std::size_t>();
      const auto& p = a.at("pose");
      sa.pose = Pose2(p.at("x").get<double>(), p.at("y").get<double>(), p.at("yaw").get<double>());
      sa.modality = parse_modality(a.at("modality").get<std::string>());
      for (const auto& r : a.at("rigs")) {
        CameraRig rig;
        const auto& m = r.at("mount");
        rig.mount = Transform2::from_yaw(m.at("yaw").get<double>(), {m.at("x").get<double>(), m.at("y").get<double>()});
        rig.fov = r.at("fov").get<double>();
        rig.h2 = r.at("h2").get<std::size_t>();
        rig.w2 = r.at("w2").get<std::size_t>();
        rig.validate();
        sa.rigs.push_back(rig);
      }
      s.agents.push_back(sa);
    }
    require(!s.agents.empty(), "scene has no agents");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("malformed scene JSON: ") + e.what());
  }
}

RGF_NAMESPACE_END
