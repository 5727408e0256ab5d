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

#include <array>
#include <vector>

#include "rgf/geometry.hpp"
#include "rgf/tensor.hpp"

RGF_NAMESPACE_BEGIN

/// Oriented box on the ground plane. `l` runs along the heading, `w` across it.
struct DetectionBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double l = 1.0;
  double yaw = 0.0;
  double score = 1.0;
};

std::array<Vec2, 4> box_corners(const DetectionBox& b);
bool box_contains(const DetectionBox& b, Vec2 p);
/// Re-expresses a box given in frame a in frame b, where `a_to_b` maps a to b.
DetectionBox transform_box(const DetectionBox& b, const Transform2& a_to_b);

/// Convex polygon clipping (Sutherland-Hodgman) of two oriented boxes.
/// Degenerate boxes give 0.
double rotated_iou(const DetectionBox& a, const DetectionBox& b);

/// Number of channels in a raw detection map:
/// objectness logit, dx, dy, log w, log l, sin yaw, cos yaw.
inline constexpr std::size_t kHeadChannels = 7;

/// Decodes cells whose logistic score exceeds `score_thresh` and runs greedy
/// NMS by descending (score, -cell index), suppressing at IoU >= `nms_iou`.
std::vector<DetectionBox> decode_nms(const Tensor& raw, const BevSpec& spec, double score_thresh, double nms_iou);

/// Greedy NMS over already-decoded boxes, in the given priority order.
std::vector<DetectionBox> greedy_nms(const std::vector<DetectionBox>& ordered, double nms_iou);

/// Average precision with global score ranking, greedy one-to-one matching at
/// `iou_threshold`, and all-point interpolation of the PR curve. Throws when
/// no ground-truth box exists.
double ap_eval(const std::vector<std::vector<DetectionBox>>& detections,
               const std::vector<std::vector<DetectionBox>>& ground_truth, double iou_threshold);

RGF_NAMESPACE_END
