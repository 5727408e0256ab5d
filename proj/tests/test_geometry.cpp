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

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rgf/geometry.hpp"

using namespace rgf;
using std::numbers::pi;

namespace {

double deg(double d) { return d * pi / 180.0; }

double angle_diff(double a, double b) { return std::abs(normalize_angle(a - b)); }

bool transforms_close(const Transform2& a, const Transform2& b, double tol) {
  for (int i = 0; i < 4; ++i)
    if (std::abs(a.r[i] - b.r[i]) > tol) return false;
  return std::abs(a.t.x - b.t.x) <= tol && std::abs(a.t.y - b.t.y) <= tol;
}

Pose2 random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-30, 30), yaw(-pi, pi);
  return Pose2(pos(rng), pos(rng), yaw(rng));
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("angle normalization") {
    CHECK(normalize_angle(pi) == doctest::Approx(pi));
    CHECK(normalize_angle(-pi) == doctest::Approx(pi));
    CHECK(normalize_angle(3 * pi / 2) == doctest::Approx(-pi / 2));
    CHECK(Pose2(0, 0, 7.0).yaw == doctest::Approx(7.0 - 2 * pi));
  }

  TEST_CASE("relative transform") {
    SUBCASE("same pose gives identity") {
      const Pose2 p(3, -2, 0.7);
      CHECK(transforms_close(relative_transform(p, p), Transform2::identity(), 1e-12));
    }
    SUBCASE("pure translation") {
      const auto t = relative_transform(Pose2(1, 0, 0), Pose2(0, 0, 0));
      CHECK(transforms_close(t, Transform2::from_yaw(0, {1, 0}), 1e-12));
    }
    SUBCASE("quarter turn") {
      const Vec2 q = relative_transform(Pose2(0, 0, pi / 2), Pose2()).apply({1, 0});
      CHECK(q.x == doctest::Approx(0).epsilon(1e-12));
      CHECK(q.y == doctest::Approx(1));
    }
    SUBCASE("matches world composition") {
      std::mt19937_64 rng(5);
      for (int i = 0; i < 50; ++i) {
        const Pose2 a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
        const auto ab = relative_transform(a, b), ba = relative_transform(b, a);
        CHECK(transforms_close(ab.compose(ba), Transform2::identity(), 1e-9));
        const Transform2 expect = Transform2::from_pose(b).inverse().compose(Transform2::from_pose(a));
        CHECK(transforms_close(ab, expect, 1e-9));
        CHECK(ab.is_valid());
        // associativity
        const auto bc = relative_transform(b, c), ca = relative_transform(c, a);
        CHECK(transforms_close(ab.compose(bc).compose(ca), ab.compose(bc.compose(ca)), 1e-9));
      }
    }
  }

  TEST_CASE("camera origin in target") {
    const auto o1 = camera_origin_in_target(Transform2::identity(), Transform2::from_yaw(0.3, {2, 1}));
    CHECK(o1.x == doctest::Approx(2));
    CHECK(o1.y == doctest::Approx(1));
    const auto o2 = camera_origin_in_target(Transform2::from_yaw(0, {5, 0}), Transform2::identity());
    CHECK(o2.x == doctest::Approx(5));
    CHECK(o2.y == doctest::Approx(0));
    const auto o3 = camera_origin_in_target(Transform2::from_yaw(pi / 2), Transform2::from_yaw(0, {1, 0}));
    CHECK(std::abs(o3.x) < 1e-12);
    CHECK(o3.y == doctest::Approx(1));
  }

  TEST_CASE("fov span") {
    SUBCASE("centered") {
      const auto s = fov_span_in_target(Transform2::identity(), Transform2::identity(), deg(100));
      CHECK(s.theta_start == doctest::Approx(deg(-50)));
      CHECK(s.theta_span == doctest::Approx(deg(100)));
    }
    SUBCASE("crossing the branch cut") {
      const auto s = fov_span_in_target(Transform2::from_yaw(pi), Transform2::identity(), deg(90));
      CHECK(s.theta_start == doctest::Approx(deg(135)));
      CHECK(s.theta_span == doctest::Approx(deg(90)));
    }
    SUBCASE("rotation equivariance") {
      std::mt19937_64 rng(7);
      std::uniform_real_distribution<double> yaw(-pi, pi), fov(0.1, 3.0);
      for (int i = 0; i < 100; ++i) {
        const double a = yaw(rng), m = yaw(rng), d = yaw(rng), f = fov(rng);
        const auto base = fov_span_in_target(Transform2::from_yaw(a, {1, 2}), Transform2::from_yaw(m), f);
        const auto rot = fov_span_in_target(Transform2::from_yaw(a + d, {3, -1}), Transform2::from_yaw(m), f);
        CHECK(angle_diff(rot.theta_start, base.theta_start + d) < 1e-9);
        CHECK(rot.theta_span == doctest::Approx(f));
        CHECK(base.theta_start > -pi);
        CHECK(base.theta_start <= pi);
      }
    }
    SUBCASE("image column zero is the positive boundary") {
      const double f = deg(80);
      CHECK(image_column_bearing(0, 64, f) > 0);
      CHECK(image_column_bearing(0, 64, f) == doctest::Approx(f / 2 - f / 128));
      CHECK(image_column_bearing(63, 64, f) == doctest::Approx(-(f / 2 - f / 128)));
      CHECK(image_column_for_sector_column(0, 64) == 63);
    }
    SUBCASE("invalid fov") {
      CHECK_THROWS_AS(fov_span_in_target({}, {}, 0.0), ContractError);
      CHECK_THROWS_AS(fov_span_in_target({}, {}, pi), ContractError);
    }
  }

  TEST_CASE("max radius") {
    const auto paper = BevSpec::from_extent(-102.4, 102.4, -51.2, 51.2, 0.4);
    CHECK(std::abs(max_radius(paper) - std::sqrt(204.8 * 204.8 + 102.4 * 102.4) / 2) < 1e-12);
    CHECK(max_radius(paper) == doctest::Approx(114.4867).epsilon(1e-6));
    CHECK(paper.w1 == 512);
    CHECK(paper.h1 == 256);
    CHECK(max_radius(BevSpec::from_extent(-1, 1, -1, 1, 0.5)) == doctest::Approx(std::sqrt(2.0)));
    CHECK_THROWS_AS(BevSpec::from_extent(0, 0, -1, 1, 0.5), ContractError);
    CHECK_THROWS_AS(BevSpec::from_extent(0, 1.1, 0, 1, 0.5), ContractError);
  }

  TEST_CASE("build sector") {
    SUBCASE("single point") {
      const auto g = build_sector({1, 2}, 0.2, 0.6, 1, 10, 1);
      REQUIRE(g.points.size() == 1);
      CHECK(g.points[0].x == doctest::Approx(1 + 5 * std::cos(0.5)));
      CHECK(g.points[0].y == doctest::Approx(2 + 5 * std::sin(0.5)));
    }
    SUBCASE("polar formula oracle") {
      std::mt19937_64 rng(11);
      std::uniform_real_distribution<double> u(-1, 1);
      for (int trial = 0; trial < 10; ++trial) {
        const Vec2 o{10 * u(rng), 10 * u(rng)};
        const double start = pi * u(rng), span = 1.5 + u(rng), radius = 20 + 5 * u(rng);
        const std::size_t w2 = 3 + trial, h = 2 + trial % 4;
        const auto g = build_sector(o, start, span, w2, radius, h);
        REQUIRE(g.points.size() == w2 * h);
        for (std::size_t r = 0; r < h; ++r)
          for (std::size_t w = 0; w < w2; ++w) {
            const double th = start + (w + 0.5) / double(w2) * span;
            const double rho = (r + 0.5) / double(h) * radius;
            const Vec2 p = g.points[r * w2 + w];
            CHECK(std::abs(p.x - (o.x + rho * std::cos(th))) < 1e-12);
            CHECK(std::abs(p.y - (o.y + rho * std::sin(th))) < 1e-12);
            // inverse polar decomposition
            const Vec2 d = p - o;
            CHECK(std::abs(std::hypot(d.x, d.y) - rho) < 1e-9);
            CHECK(angle_diff(std::atan2(d.y, d.x), th) < 1e-9);
            CHECK(std::hypot(d.x, d.y) <= radius);
          }
      }
    }
    SUBCASE("invalid config") {
      CHECK_THROWS_AS(build_sector({}, 0, 0, 4, 1, 1), ContractError);
      CHECK_THROWS_AS(build_sector({}, 0, 1, 0, 1, 1), ContractError);
      CHECK_THROWS_AS(build_sector({}, 0, 1, 4, -1, 1), ContractError);
    }
  }

  TEST_CASE("world to grid") {
    const BevSpec spec;
    const auto c0 = world_to_grid(spec, {spec.x_min + 0.2, spec.y_min + 0.2});
    CHECK(std::abs(c0.u) < 1e-12);
    CHECK(std::abs(c0.v) < 1e-12);
    const auto corner = world_to_grid(spec, {spec.x_min, spec.y_min});
    CHECK(corner.u == doctest::Approx(-0.5));
    CHECK(corner.v == doctest::Approx(-0.5));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> x(-40, 40);
    for (int i = 0; i < 100; ++i) {
      const Vec2 p{x(rng), x(rng)};
      const Vec2 q = grid_to_world(spec, world_to_grid(spec, p));
      CHECK(std::abs(p.x - q.x) < 1e-12);
      CHECK(std::abs(p.y - q.y) < 1e-12);
    }
  }

  TEST_CASE("sector coverage") {
    const BevSpec spec;
    CHECK(sector_coverage(build_sector({0, 0}, -3.0, 6.0, 16, 12.0, 8), spec) == 1.0);
    CHECK(sector_coverage(build_sector({100, 100}, 0, 1, 16, 5.0, 8), spec) == 0.0);
    const auto straddle = build_sector({25.6, 0}, -3.0, 6.0, 32, 10.0, 8);
    std::size_t inside = 0;
    for (const Vec2& p : straddle.points)
      inside += p.x >= spec.x_min && p.x <= spec.x_max && p.y >= spec.y_min && p.y <= spec.y_max;
    CHECK(sector_coverage(straddle, spec) == doctest::Approx(double(inside) / straddle.points.size()));
    CHECK(sector_coverage(straddle, spec) > 0.3);
    CHECK(sector_coverage(straddle, spec) < 0.7);
  }

  TEST_CASE("coarsened spec") {
    const BevSpec spec;
    const auto c = spec.coarsened(4);
    CHECK(c.h1 == 16);
    CHECK(c.w1 == 32);
    CHECK(c.cell == doctest::Approx(1.6));
    CHECK(max_radius(c) == doctest::Approx(max_radius(spec)));
  }
}
