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
#include <functional>
#include <string>
#include <vector>

#include "rgf/autograd.hpp"
#include "rgf/detection.hpp"
#include "rgf/geometry.hpp"
#include "rgf/optim.hpp"
#include "rgf/pyramid.hpp"
#include "rgf/rg_attn.hpp"

RGF_NAMESPACE_BEGIN

enum class Modality { lidar_only, camera_only, lidar_camera };

bool has_lidar(Modality m);
bool has_camera(Modality m);
/// Short tags "L", "C", "LC".
std::string to_string(Modality m);
/// Accepts the short tags and the long enumerator names.
Modality parse_modality(const std::string& name);

/// Raised when a pipeline cannot consume the given agent mix.
class CapabilityError : public ContractError {
 public:
  using ContractError::ContractError;
};

struct LidarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
};

struct AgentObservation {
  std::size_t agent_id = 0;
  Pose2 pose;  // may carry localization noise
  Modality modality = Modality::lidar_camera;
  std::vector<LidarPoint> points;     // agent frame
  std::vector<Tensor> camera_rasters; // per rig [Craw x H2 x W2]
  std::vector<CameraRig> rigs;

  void validate() const;
};

enum class Architecture { lidar, ptp, coscoco, prgaf };

std::string to_string(Architecture a);
Architecture parse_architecture(const std::string& name);

/// Raw camera raster channels produced by the simulator.
inline constexpr std::size_t kRawCameraChannels = 5;
/// Per-cell LiDAR statistics fed to the encoder.
inline constexpr std::size_t kLidarStats = 4;

struct ModelConfig {
  Architecture arch = Architecture::ptp;
  BevSpec bev;
  std::size_t c1 = 16;
  std::size_t c2 = 8;
  std::size_t cam_h2 = 36;
  std::size_t cam_w2 = 64;
  std::size_t heads = 8;
  PositionalEncoding encoding = PositionalEncoding::learnable;
  double dropout = 0.1;
  std::vector<std::size_t> factors{1, 2, 4};
  double lambda_reg = 1.0;
  double lambda_dir = 1.0;

  void validate() const;
  /// Stable 64-bit FNV-1a digest of every field, as hex.
  std::string hash() const;
};

/// Trainable state. Parameters live in `store`; the named handles alias it.
struct Model {
  ModelConfig cfg;
  ParameterStore store;
  Var lidar_w;  // [4 x c1], no bias so empty cells stay zero
  Var cam_w;    // [Craw x c2]
  Var cam_b;    // [c2]
  std::vector<RgAttnParams> attn;  // one kernel, or one per scale for prgaf
  PyramidParams pyramid;
  Var head_w;  // [c1 x 7]
  Var head_b;  // [7]
};

Model make_model(const ModelConfig& cfg, std::uint64_t seed);

/// Zeroes every attention value and output projection.
void zero_attention_outputs(Model& model);

/// [4 x H1 x W1]: log(1+count), mean z, max z, mean intensity per cell.
Tensor lidar_stats(const std::vector<LidarPoint>& points, const BevSpec& spec);
Var lidar_encode(const std::vector<LidarPoint>& points, const BevSpec& spec, const Var& weight);
Var camera_encode(const Var& raster, const Var& weight, const Var& bias);

/// Transform from `agent` to `ego`; exactly the identity for the ego itself.
Transform2 agent_to_ego(const AgentObservation& agent, const AgentObservation& ego);

Var lidar_forward(const Model& model, const std::vector<AgentObservation>& agents, std::size_t ego_id);
Var ptp_forward(const Model& model, const std::vector<AgentObservation>& agents, std::size_t ego_id,
                const AttnRuntime& runtime);
Var cos_coco_forward(const Model& model, const std::vector<AgentObservation>& agents, std::size_t ego_id,
                     const AttnRuntime& runtime);
Var prgaf_forward(const Model& model, const std::vector<AgentObservation>& agents, std::size_t ego_id,
                  const AttnRuntime& runtime);
/// Dispatches on model.cfg.arch.
Var fuse_forward(const Model& model, const std::vector<AgentObservation>& agents, std::size_t ego_id,
                 const AttnRuntime& runtime);
/// Throws CapabilityError when the architecture cannot run on this mix.
void check_capability(Architecture arch, const std::vector<AgentObservation>& agents);

Var detect_head(const Var& fused, const Var& weight, const Var& bias);

struct DetectionTargets {
  Tensor target;      // [7 x H1 x W1]
  Tensor foreground;  // [H1 x W1] in {0, 1}
};
/// Cells whose centers fall inside a box regress that box.
DetectionTargets build_targets(const std::vector<DetectionBox>& boxes, const BevSpec& spec);

struct LossBreakdown {
  Var total;
  double cls = 0.0;
  double reg = 0.0;
  double dir = 0.0;
};
/// Mean BCE over all cells plus foreground-weighted L1 regression and
/// orientation terms, each normalized by the foreground mass.
LossBreakdown detection_loss(const Var& raw, const Tensor& target, const Tensor& foreground, double lambda_reg,
                             double lambda_dir);

/// One training or evaluation sample in the ego frame.
struct Frame {
  std::size_t frame_id = 0;
  std::size_t ego_id = 0;
  std::vector<AgentObservation> agents;
  std::vector<DetectionBox> gt;  // ego frame
};

struct DetectConfig {
  double score_thresh = 0.1;
  double nms_iou = 0.1;
};

Var frame_loss(const Model& model, const Frame& frame, const AttnRuntime& runtime, LossBreakdown* parts = nullptr);
std::vector<DetectionBox> detect(const Model& model, const Frame& frame, const DetectConfig& cfg = {});

struct TrainConfig {
  std::size_t epochs = 4;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  bool shuffle = true;
  /// Called after every epoch with (epoch, mean loss).
  std::function<void(std::size_t, double)> on_epoch;
};

struct TrainHistory {
  std::vector<double> epoch_loss;
  bool diverged = false;
  std::string report;
};

/// Batch size one, seeded shuffle. A non-finite loss stops training and is
/// reported; parameters keep their last finite values.
TrainHistory train_loop(Model& model, const std::vector<Frame>& frames, const TrainConfig& cfg);

RGF_NAMESPACE_END
