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
#include <string>
#include <vector>

#include <json.hpp>

#include "rgf/architectures.hpp"
#include "rgf/detection.hpp"
#include "rgf/geometry.hpp"

RGF_NAMESPACE_BEGIN

/// A box-shaped object. Only targets are ground truth; the rest are clutter
/// that LiDAR cannot tell apart from targets but cameras label differently.
struct Obstacle {
  DetectionBox box;
  double height = 1.6;
  bool target = true;
};

struct SceneAgent {
  std::size_t agent_id = 0;
  Pose2 pose;  // true pose
  Modality modality = Modality::lidar_camera;
  std::vector<CameraRig> rigs;
};

struct WorldBounds {
  double x_min = -25.6;
  double x_max = 25.6;
  double y_min = -12.8;
  double y_max = 12.8;
};

struct Scene {
  std::size_t frame_id = 0;
  std::uint64_t seed = 0;
  WorldBounds bounds;
  std::vector<Obstacle> obstacles;
  std::vector<SceneAgent> agents;  // agents[0] is the ego

  std::vector<DetectionBox> gt_boxes() const;
};

struct SceneConfig {
  std::size_t n_agents = 2;
  /// Per agent; the last entry repeats for the remaining agents.
  std::vector<Modality> modalities{Modality::lidar_camera};
  std::size_t n_boxes = 8;
  std::size_t n_distractors = 6;
  WorldBounds bounds;
  std::size_t cameras = 4;
  double camera_fov = 100.0 * std::numbers::pi / 180.0;
  std::size_t camera_h2 = 36;
  std::size_t camera_w2 = 64;
  std::uint64_t seed = 0;
  std::size_t frame_id = 0;

  void validate() const;
};

/// Default rig set: `count` cameras at yaws 0, pi/2, pi, -pi/2 (then evenly
/// spaced for other counts), each slightly forward of the agent origin.
std::vector<CameraRig> default_rigs(std::size_t count, double fov, std::size_t h2, std::size_t w2);

/// Ego at the world origin; boxes do not overlap (pairwise IoU < 0.05).
Scene generate_scene(const SceneConfig& cfg);

struct RayHit {
  std::ptrdiff_t obstacle = -1;  // -1 on a miss
  double distance = 0.0;
};
/// Nearest obstacle edge crossed by the ray within `max_range`.
RayHit cast_ray(const Scene& scene, Vec2 origin, double heading, double max_range);

struct LidarConfig {
  std::size_t rays = 1440;
  double max_range = 18.0;
  double noise_std = 0.02;
  std::uint64_t seed = 0;
};

/// 360 degree planar scan from the agent origin, one return per ray at the
/// first hit. Points are in the agent frame.
std::vector<LidarPoint> sample_lidar(const Scene& scene, std::size_t agent_index, const LidarConfig& cfg);

/// Raster channel layout.
enum CameraChannel : std::size_t { kCamTarget = 0, kCamClutter = 1, kCamBearing = 2, kCamBias = 3, kCamGround = 4 };

struct CameraConfig {
  double max_range = 60.0;
  double mount_height = 1.0;
};

/// [5 x H2 x W2] semantic raster of rig `rig_index` on agent `agent_index`.
Tensor render_camera_semantics(const Scene& scene, std::size_t agent_index, std::size_t rig_index,
                               const CameraConfig& cfg = {});

struct PoseNoiseModel {
  double sigma_p = 0.0;  // meters, per axis
  double sigma_r = 0.0;  // radians
  std::uint64_t seed = 0;

  void validate() const;
};

Pose2 apply_pose_noise(const Pose2& pose, const PoseNoiseModel& model);

struct ObserveConfig {
  LidarConfig lidar;
  CameraConfig camera;
  PoseNoiseModel noise;
  /// Empty keeps the scene's modalities; otherwise one entry per agent kept
  /// (agents beyond the list are dropped).
  std::vector<Modality> modalities;
};

/// Sensor readings of every agent, expressed for fusion at the ego (agent 0).
/// Non-ego poses receive noise drawn per (frame, agent).
Frame observe(const Scene& scene, const ObserveConfig& cfg);

/// Parses mixes such as "LC", "LC+C" or "L+L"; a two-part mix repeats its
/// second entry for every cooperator up to `n_agents`.
std::vector<Modality> parse_modality_mix(const std::string& mix, std::size_t n_agents);

nlohmann::ordered_json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

RGF_NAMESPACE_END
