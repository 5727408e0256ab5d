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
#include <cstddef>
#include <numbers>
#include <vector>

#include "rgf/config.hpp"
#include "rgf/tensor.hpp"

RGF_NAMESPACE_BEGIN

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

/// Wraps an angle into (-pi, pi].
double normalize_angle(double radians);

/// Planar agent pose in the world frame.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;  // (-pi, pi]

  Pose2() = default;
  Pose2(double x_, double y_, double yaw_) : x(x_), y(y_), yaw(normalize_angle(yaw_)) {}
};

/// Rigid planar transform p' = r * p + t.
struct Transform2 {
  std::array<double, 4> r{1.0, 0.0, 0.0, 1.0};  // row-major 2x2
  Vec2 t{};

  static Transform2 identity() { return {}; }
  static Transform2 from_yaw(double yaw, Vec2 translation = {});
  static Transform2 from_pose(const Pose2& pose) { return from_yaw(pose.yaw, {pose.x, pose.y}); }

  Vec2 apply(Vec2 p) const { return {r[0] * p.x + r[1] * p.y + t.x, r[2] * p.x + r[3] * p.y + t.y}; }
  Vec2 rotate(Vec2 p) const { return {r[0] * p.x + r[1] * p.y, r[2] * p.x + r[3] * p.y}; }
  double yaw() const;
  Transform2 inverse() const;
  /// (*this) after `rhs`: applies rhs first.
  Transform2 compose(const Transform2& rhs) const;
  bool is_valid(double tol = 1e-9) const;
};

/// Maps points expressed in frame i to frame j.
Transform2 relative_transform(const Pose2& pose_i, const Pose2& pose_j);

/// Camera mounted on an agent: `mount` places the camera in the agent frame.
struct CameraRig {
  Transform2 mount{};
  double fov = 100.0 * std::numbers::pi / 180.0;
  std::size_t w2 = 64;
  std::size_t h2 = 36;
  std::size_t c2 = 8;

  void validate() const;
};

/// Metric BEV grid. Rows follow +y, columns follow +x.
struct BevSpec {
  double x_min = -25.6;
  double x_max = 25.6;
  double y_min = -12.8;
  double y_max = 12.8;
  double cell = 0.4;
  std::size_t h1 = 64;
  std::size_t w1 = 128;

  /// Builds a spec from its extent, deriving the grid size. Throws when the
  /// extent is not an exact multiple of `cell`.
  static BevSpec from_extent(double x_min, double x_max, double y_min, double y_max, double cell);
  /// Same extent with `factor`-times coarser cells.
  BevSpec coarsened(std::size_t factor) const;
  void validate() const;
  std::size_t cells() const { return h1 * w1; }
};

/// Grid-sector sampling configuration: polar grid anchored at the camera origin
/// in the target BEV, spanning [theta_start, theta_start + theta_span].
struct GridSectorConfig {
  Vec2 origin{};
  double theta_start = 0.0;
  double theta_span = 0.0;
  std::size_t w2 = 0;
  double radius = 0.0;
  std::size_t h = 0;

  void validate() const;
};

/// Sample points of a sector in target-BEV meters, [h x w2] row-major
/// (radial index major).
struct SectorGrid {
  GridSectorConfig cfg;
  std::vector<Vec2> points;
};

// Image columns run from the +fov/2 boundary (column 0) to the -fov/2 boundary
// (column W2-1), so bearing decreases with image column. Sectors are stored
// with a positive span starting at the -fov/2 boundary; sector column w
// therefore corresponds to image column W2-1-w.
inline constexpr bool kImageColumnsDecreaseWithBearing = true;

/// Bearing, relative to the camera axis, at the center of image column `col`.
double image_column_bearing(std::size_t col, std::size_t w2, double fov);
/// Image column index feeding sector column `w`.
std::size_t image_column_for_sector_column(std::size_t w, std::size_t w2);

/// t_{ik->j}: the camera origin expressed in the target frame.
Vec2 camera_origin_in_target(const Transform2& t_ij, const Transform2& mount);

struct AngularSpan {
  double theta_start = 0.0;  // (-pi, pi]
  double theta_span = 0.0;   // > 0
};
/// Target-frame angular span of the camera FOV. Throws unless 0 < fov < pi.
AngularSpan fov_span_in_target(const Transform2& t_ij, const Transform2& mount, double fov);

/// Half the diagonal of the BEV extent.
double max_radius(const BevSpec& spec);

SectorGrid build_sector(Vec2 origin, double theta_start, double theta_span, std::size_t w2,
                        double radius, std::size_t h);

/// Complete sector for camera `rig` of agent i on the BEV of agent j. The
/// radial bin count defaults to spec.h1 when `radial_bins` is 0.
SectorGrid sector_for_camera(const BevSpec& spec, const Transform2& t_ij, const CameraRig& rig,
                             std::size_t radial_bins = 0, double radius = 0.0);

/// Continuous pixel coordinates (cell-center convention).
PixelCoord world_to_grid(const BevSpec& spec, Vec2 p);
Vec2 grid_to_world(const BevSpec& spec, PixelCoord c);

/// Fraction of the sector's sample points inside the BEV extent.
double sector_coverage(const SectorGrid& sector, const BevSpec& spec);

RGF_NAMESPACE_END
