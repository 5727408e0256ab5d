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

#include "rgf/geometry.hpp"

#include <cmath>

RGF_NAMESPACE_BEGIN

namespace {
constexpr double kPi = std::numbers::pi;
}

double normalize_angle(double radians) {
  double a = std::fmod(radians, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

Transform2 Transform2::from_yaw(double yaw, Vec2 translation) {
  Transform2 t;
  const double c = std::cos(yaw), s = std::sin(yaw);
  t.r = {c, -s, s, c};
  t.t = translation;
  return t;
}

double Transform2::yaw() const { return std::atan2(r[2], r[0]); }

Transform2 Transform2::inverse() const {
  Transform2 inv;
  inv.r = {r[0], r[2], r[1], r[3]};
  const Vec2 rt = inv.rotate(t);
  inv.t = {-rt.x, -rt.y};
  return inv;
}

Transform2 Transform2::compose(const Transform2& rhs) const {
  Transform2 out;
  out.r = {r[0] * rhs.r[0] + r[1] * rhs.r[2], r[0] * rhs.r[1] + r[1] * rhs.r[3],
           r[2] * rhs.r[0] + r[3] * rhs.r[2], r[2] * rhs.r[1] + r[3] * rhs.r[3]};
  out.t = apply(rhs.t);
  return out;
}

bool Transform2::is_valid(double tol) const {
  const double det = r[0] * r[3] - r[1] * r[2];
  const double c0 = r[0] * r[0] + r[2] * r[2];
  const double c1 = r[1] * r[1] + r[3] * r[3];
  const double dot = r[0] * r[1] + r[2] * r[3];
  return std::abs(det - 1.0) <= tol && std::abs(c0 - 1.0) <= tol && std::abs(c1 - 1.0) <= tol &&
         std::abs(dot) <= tol && std::isfinite(t.x) && std::isfinite(t.y);
}

Transform2 relative_transform(const Pose2& pose_i, const Pose2& pose_j) {
  return Transform2::from_pose(pose_j).inverse().compose(Transform2::from_pose(pose_i));
}

void CameraRig::validate() const {
  require(fov > 0.0 && fov < kPi, "camera fov must lie in (0, pi)");
  require(w2 > 0 && h2 > 0 && c2 > 0, "camera feature extents must be positive");
  require(mount.is_valid(), "camera mount is not a rigid transform");
}

BevSpec BevSpec::from_extent(double x_min, double x_max, double y_min, double y_max, double cell) {
  require(cell > 0.0, "BEV cell size must be positive");
  const double w = (x_max - x_min) / cell;
  const double h = (y_max - y_min) / cell;
  require(w >= 1.0 && h >= 1.0, "BEV extent must be positive");
  const double wr = std::round(w), hr = std::round(h);
  require(std::abs(w - wr) < 1e-9 * wr && std::abs(h - hr) < 1e-9 * hr,
          "BEV extent must be an exact multiple of the cell size");
  BevSpec s{x_min, x_max, y_min, y_max, cell, static_cast<std::size_t>(hr), static_cast<std::size_t>(wr)};
  return s;
}

BevSpec BevSpec::coarsened(std::size_t factor) const {
  require(factor >= 1 && h1 % factor == 0 && w1 % factor == 0,
          "BEV grid is not divisible by factor " + std::to_string(factor));
  BevSpec s = *this;
  s.cell = cell * static_cast<double>(factor);
  s.h1 = h1 / factor;
  s.w1 = w1 / factor;
  return s;
}

void BevSpec::validate() const {
  require(cell > 0.0 && h1 > 0 && w1 > 0, "BEV spec needs positive cell size and extents");
  const double w = (x_max - x_min) / cell;
  const double h = (y_max - y_min) / cell;
  require(std::abs(w - static_cast<double>(w1)) < 1e-9 * static_cast<double>(w1) &&
              std::abs(h - static_cast<double>(h1)) < 1e-9 * static_cast<double>(h1),
          "BEV extent does not match grid size and cell");
}

void GridSectorConfig::validate() const {
  require(theta_span > 0.0 && theta_span < 2.0 * kPi, "sector span must lie in (0, 2pi)");
  require(radius > 0.0, "sector radius must be positive");
  require(w2 > 0 && h > 0, "sector bin counts must be positive");
  require(std::isfinite(origin.x) && std::isfinite(origin.y) && std::isfinite(theta_start),
          "sector origin and start must be finite");
}

double image_column_bearing(std::size_t col, std::size_t w2, double fov) {
  const double frac = (static_cast<double>(col) + 0.5) / static_cast<double>(w2);
  if constexpr (kImageColumnsDecreaseWithBearing) return fov / 2.0 - frac * fov;
  return -fov / 2.0 + frac * fov;
}

std::size_t image_column_for_sector_column(std::size_t w, std::size_t w2) {
  if constexpr (kImageColumnsDecreaseWithBearing) return w2 - 1 - w;
  return w;
}

Vec2 camera_origin_in_target(const Transform2& t_ij, const Transform2& mount) { return t_ij.apply(mount.t); }

AngularSpan fov_span_in_target(const Transform2& t_ij, const Transform2& mount, double fov) {
  require(fov > 0.0 && fov < kPi, "camera fov must lie in (0, pi)");
  const Transform2 r_ikj = t_ij.compose(mount);  // R_{ik->j} = R_{i->j} R_{ik->i}
  // The sector sweeps counter-clockwise from the rotated u(-fov/2) boundary to
  // u(+fov/2); storing the span instead of the end angle avoids the branch cut.
  const Vec2 lo = r_ikj.rotate({std::cos(-fov / 2.0), std::sin(-fov / 2.0)});
  return {normalize_angle(std::atan2(lo.y, lo.x)), fov};
}

double max_radius(const BevSpec& spec) {
  const double dx = spec.x_max - spec.x_min;
  const double dy = spec.y_max - spec.y_min;
  return std::sqrt(dx * dx + dy * dy) / 2.0;
}

SectorGrid build_sector(Vec2 origin, double theta_start, double theta_span, std::size_t w2, double radius,
                        std::size_t h) {
  SectorGrid grid;
  grid.cfg = {origin, theta_start, theta_span, w2, radius, h};
  grid.cfg.validate();
  grid.points.resize(h * w2);
  std::vector<double> cs(w2), sn(w2);
  for (std::size_t w = 0; w < w2; ++w) {
    const double theta = theta_start + (static_cast<double>(w) + 0.5) / static_cast<double>(w2) * theta_span;
    cs[w] = std::cos(theta);
    sn[w] = std::sin(theta);
  }
  for (std::size_t r = 0; r < h; ++r) {
    const double rho = (static_cast<double>(r) + 0.5) / static_cast<double>(h) * radius;
    for (std::size_t w = 0; w < w2; ++w) grid.points[r * w2 + w] = {origin.x + rho * cs[w], origin.y + rho * sn[w]};
  }
  return grid;
}

SectorGrid sector_for_camera(const BevSpec& spec, const Transform2& t_ij, const CameraRig& rig,
                             std::size_t radial_bins, double radius) {
  rig.validate();
  const Vec2 origin = camera_origin_in_target(t_ij, rig.mount);
  const AngularSpan span = fov_span_in_target(t_ij, rig.mount, rig.fov);
  return build_sector(origin, span.theta_start, span.theta_span, rig.w2, radius > 0.0 ? radius : max_radius(spec),
                      radial_bins > 0 ? radial_bins : spec.h1);
}

PixelCoord world_to_grid(const BevSpec& spec, Vec2 p) {
  return {(p.y - spec.y_min) / spec.cell - 0.5, (p.x - spec.x_min) / spec.cell - 0.5};
}

Vec2 grid_to_world(const BevSpec& spec, PixelCoord c) {
  return {spec.x_min + (c.v + 0.5) * spec.cell, spec.y_min + (c.u + 0.5) * spec.cell};
}

double sector_coverage(const SectorGrid& sector, const BevSpec& spec) {
  if (sector.points.empty()) return 0.0;
  std::size_t inside = 0;
  for (const auto& p : sector.points)
    if (p.x >= spec.x_min && p.x <= spec.x_max && p.y >= spec.y_min && p.y <= spec.y_max) ++inside;
  return static_cast<double>(inside) / static_cast<double>(sector.points.size());
}

RGF_NAMESPACE_END
