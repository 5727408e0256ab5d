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

#include "rgf/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

RGF_NAMESPACE_BEGIN

namespace {

double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

double cross(Vec2 o, Vec2 a, Vec2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

// Clips `subject` by the half-plane left of directed edge a->b.
std::vector<Vec2> clip(const std::vector<Vec2>& subject, Vec2 a, Vec2 b) {
  std::vector<Vec2> out;
  if (subject.empty()) return out;
  for (std::size_t i = 0; i < subject.size(); ++i) {
    const Vec2 cur = subject[i];
    const Vec2 prev = subject[(i + subject.size() - 1) % subject.size()];
    const double dc = cross(a, b, cur);
    const double dp = cross(a, b, prev);
    if (dc >= 0.0) {
      if (dp < 0.0) {
        const double t = dp / (dp - dc);
        out.push_back(prev + t * (cur - prev));
      }
      out.push_back(cur);
    } else if (dp >= 0.0) {
      const double t = dp / (dp - dc);
      out.push_back(prev + t * (cur - prev));
    }
  }
  return out;
}

}  // namespace

std::array<Vec2, 4> box_corners(const DetectionBox& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = b.l / 2.0, hw = b.w / 2.0;
  // Counter-clockwise.
  const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Vec2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i)
    out[i] = {b.cx + c * local[i].x - s * local[i].y, b.cy + s * local[i].x + c * local[i].y};
  return out;
}

bool box_contains(const DetectionBox& b, Vec2 p) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = p.x - b.cx, dy = p.y - b.cy;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= b.l / 2.0 && std::abs(ly) <= b.w / 2.0;
}

DetectionBox transform_box(const DetectionBox& b, const Transform2& a_to_b) {
  DetectionBox out = b;
  const Vec2 c = a_to_b.apply({b.cx, b.cy});
  out.cx = c.x;
  out.cy = c.y;
  out.yaw = normalize_angle(b.yaw + a_to_b.yaw());
  return out;
}

double rotated_iou(const DetectionBox& a, const DetectionBox& b) {
  constexpr double kMinArea = 1e-12;
  const double area_a = a.w * a.l, area_b = b.w * b.l;
  if (!(area_a > kMinArea) || !(area_b > kMinArea)) return 0.0;
  // Circumscribed circles that do not touch cannot overlap.
  const double ra = 0.5 * std::hypot(a.w, a.l), rb = 0.5 * std::hypot(b.w, b.l);
  if (std::hypot(a.cx - b.cx, a.cy - b.cy) >= ra + rb) return 0.0;
  const auto ca = box_corners(a);
  const auto cb = box_corners(b);
  std::vector<Vec2> poly(ca.begin(), ca.end());
  for (std::size_t i = 0; i < 4 && !poly.empty(); ++i) poly = clip(poly, cb[i], cb[(i + 1) % 4]);
  if (poly.size() < 3) return 0.0;
  const double inter = std::max(0.0, polygon_area(poly));
  const double uni = area_a + area_b - inter;
  if (!(uni > kMinArea)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<DetectionBox> greedy_nms(const std::vector<DetectionBox>& ordered, double nms_iou) {
  std::vector<DetectionBox> keep;
  for (const auto& cand : ordered) {
    bool suppressed = false;
    for (const auto& k : keep)
      if (rotated_iou(cand, k) >= nms_iou) {
        suppressed = true;
        break;
      }
    if (!suppressed) keep.push_back(cand);
  }
  return keep;
}

std::vector<DetectionBox> decode_nms(const Tensor& raw, const BevSpec& spec, double score_thresh, double nms_iou) {
  require(raw.rank() == 3 && raw.dim(0) == kHeadChannels && raw.dim(1) == spec.h1 && raw.dim(2) == spec.w1,
          "decode_nms: raw map " + shape_to_string(raw.shape()) + " does not match the head layout");
  require(score_thresh >= 0.0 && score_thresh <= 1.0 && nms_iou >= 0.0 && nms_iou <= 1.0,
          "decode_nms: thresholds must lie in [0, 1]");
  const std::size_t n = spec.cells();
  struct Candidate {
    double score;
    std::size_t cell;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < n; ++i) {
    const double score = 1.0 / (1.0 + std::exp(-static_cast<double>(raw[i])));
    if (score > score_thresh) cands.push_back({score, i});
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return a.score != b.score ? a.score > b.score : a.cell < b.cell;
  });
  std::vector<DetectionBox> ordered;
  ordered.reserve(cands.size());
  for (const auto& c : cands) {
    const std::size_t r = c.cell / spec.w1, col = c.cell % spec.w1;
    const Vec2 center = grid_to_world(spec, {static_cast<double>(r), static_cast<double>(col)});
    auto ch = [&](std::size_t k) { return static_cast<double>(raw[k * n + c.cell]); };
    DetectionBox b;
    b.cx = center.x + ch(1);
    b.cy = center.y + ch(2);
    b.w = std::exp(std::clamp(ch(3), -5.0, 5.0));
    b.l = std::exp(std::clamp(ch(4), -5.0, 5.0));
    b.yaw = std::atan2(ch(5), ch(6));
    b.score = c.score;
    ordered.push_back(b);
  }
  return greedy_nms(ordered, nms_iou);
}

double ap_eval(const std::vector<std::vector<DetectionBox>>& detections,
               const std::vector<std::vector<DetectionBox>>& ground_truth, double iou_threshold) {
  require(detections.size() == ground_truth.size(), "ap_eval: frame counts differ");
  require(iou_threshold > 0.0 && iou_threshold < 1.0, "ap_eval: IoU threshold must lie in (0, 1)");
  std::size_t total_gt = 0;
  for (const auto& g : ground_truth) total_gt += g.size();
  require(total_gt > 0, "ap_eval: no ground-truth boxes, recall is undefined");

  struct Ranked {
    double score;
    std::size_t frame;
    std::size_t index;
  };
  std::vector<Ranked> ranked;
  for (std::size_t f = 0; f < detections.size(); ++f)
    for (std::size_t i = 0; i < detections[f].size(); ++i) ranked.push_back({detections[f][i].score, f, i});
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> matched(ground_truth.size());
  for (std::size_t f = 0; f < ground_truth.size(); ++f) matched[f].assign(ground_truth[f].size(), false);

  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const auto& r : ranked) {
    const auto& det = detections[r.frame][r.index];
    double best = iou_threshold;
    std::ptrdiff_t best_gt = -1;
    for (std::size_t g = 0; g < ground_truth[r.frame].size(); ++g) {
      if (matched[r.frame][g]) continue;
      const double iou = rotated_iou(det, ground_truth[r.frame][g]);
      if (iou >= best) {
        if (best_gt < 0 || iou > best) {
          best = iou;
          best_gt = static_cast<std::ptrdiff_t>(g);
        }
      }
    }
    if (best_gt >= 0) {
      matched[r.frame][static_cast<std::size_t>(best_gt)] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }
  if (ranked.empty()) return 0.0;
  // Precision envelope, then area under the step curve.
  for (std::size_t i = precision.size() - 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

RGF_NAMESPACE_END
