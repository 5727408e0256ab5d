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

#include "rgf/coopsim.hpp"
#include "test_util.hpp"

using namespace rgf;

namespace {

Scene empty_scene() {
  Scene s;
  s.agents.push_back({0, Pose2(0, 0, 0), Modality::lidar_camera, {}});
  return s;
}

Obstacle obstacle(double cx, double cy, double w, double l, double yaw, bool target = true) {
  Obstacle o;
  o.box = {cx, cy, w, l, yaw, 1.0};
  o.target = target;
  return o;
}

CameraRig forward_rig(std::size_t w2 = 64) {
  CameraRig rig;
  rig.fov = 100.0 * std::numbers::pi / 180.0;
  rig.w2 = w2;
  rig.h2 = 36;
  return rig;
}

// Slab test in the box frame: distance to the nearest box along the ray.
RayHit slab_oracle(const Scene& s, Vec2 o, double heading, double max_range) {
  RayHit best;
  double bd = max_range;
  for (std::size_t i = 0; i < s.obstacles.size(); ++i) {
    const auto& b = s.obstacles[i].box;
    const double c = std::cos(-b.yaw), sn = std::sin(-b.yaw);
    const double px = c * (o.x - b.cx) - sn * (o.y - b.cy), py = sn * (o.x - b.cx) + c * (o.y - b.cy);
    const double dx = c * std::cos(heading) - sn * std::sin(heading);
    const double dy = sn * std::cos(heading) + c * std::sin(heading);
    double t0 = -1e300, t1 = 1e300;
    bool miss = false;
    for (auto [p, d, half] : {std::tuple{px, dx, b.l / 2}, std::tuple{py, dy, b.w / 2}}) {
      if (std::abs(d) < 1e-15) {
        if (std::abs(p) > half) miss = true;
        continue;
      }
      double a = (-half - p) / d, z = (half - p) / d;
      if (a > z) std::swap(a, z);
      t0 = std::max(t0, a);
      t1 = std::min(t1, z);
    }
    if (miss || t0 > t1 || t1 < 0) continue;
    const double t = t0 >= 0 ? t0 : t1;  // origin inside: exit face
    if (t < bd) {
      bd = t;
      best.obstacle = std::ptrdiff_t(i);
      best.distance = t;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("coopsim") {
  TEST_CASE("scene generation") {
    SceneConfig cfg;
    cfg.n_agents = 3;
    cfg.modalities = {Modality::lidar_camera, Modality::camera_only};
    cfg.seed = 4;
    const Scene s = generate_scene(cfg);
    REQUIRE(s.agents.size() == 3);
    CHECK(s.agents[0].pose.x == 0.0);
    CHECK(s.agents[0].pose.yaw == 0.0);
    CHECK(s.agents[1].modality == Modality::camera_only);
    CHECK(s.agents[2].modality == Modality::camera_only);
    CHECK(s.agents[0].rigs.size() == 4);
    CHECK(s.obstacles.size() == cfg.n_boxes + cfg.n_distractors);
    CHECK(s.gt_boxes().size() == cfg.n_boxes);
    for (std::size_t i = 0; i < s.obstacles.size(); ++i) {
      for (const Vec2& c : box_corners(s.obstacles[i].box)) {
        CHECK(c.x >= cfg.bounds.x_min);
        CHECK(c.x <= cfg.bounds.x_max);
        CHECK(c.y >= cfg.bounds.y_min);
        CHECK(c.y <= cfg.bounds.y_max);
      }
      for (std::size_t j = i + 1; j < s.obstacles.size(); ++j)
        CHECK(rotated_iou(s.obstacles[i].box, s.obstacles[j].box) < 0.05);
      for (const auto& a : s.agents) CHECK_FALSE(box_contains(s.obstacles[i].box, {a.pose.x, a.pose.y}));
    }

    CHECK(scene_to_json(generate_scene(cfg)).dump() == scene_to_json(s).dump());
    SceneConfig other = cfg;
    other.seed = 5;
    CHECK(scene_to_json(generate_scene(other)).dump() != scene_to_json(s).dump());
    other = cfg;
    other.frame_id = 1;
    CHECK(scene_to_json(generate_scene(other)).dump() != scene_to_json(s).dump());

    SceneConfig none = cfg;
    none.n_boxes = 0;
    none.n_distractors = 0;
    CHECK(generate_scene(none).gt_boxes().empty());

    SceneConfig crowded = cfg;
    crowded.bounds = {-4, 4, -4, 4};
    crowded.n_agents = 1;
    crowded.n_boxes = 40;
    CHECK_THROWS_AS(generate_scene(crowded), ContractError);
    SceneConfig zero = cfg;
    zero.n_agents = 0;
    CHECK_THROWS_AS(generate_scene(zero), ContractError);
  }

  TEST_CASE("default rigs") {
    const auto rigs = default_rigs(4, 1.7, 36, 64);
    const double yaws[] = {0, std::numbers::pi / 2, std::numbers::pi, -std::numbers::pi / 2};
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(std::abs(normalize_angle(rigs[k].mount.yaw() - yaws[k])) < 1e-12);
      CHECK(rigs[k].fov == 1.7);
    }
    CHECK(default_rigs(3, 1.7, 36, 64).size() == 3);
  }

  TEST_CASE("ray casting matches a slab oracle") {
    SceneConfig cfg;
    cfg.seed = 12;
    const Scene s = generate_scene(cfg);
    for (std::size_t k = 0; k < 720; ++k) {
      const double h = 2 * std::numbers::pi * k / 720.0;
      const RayHit got = cast_ray(s, {0.0, 0.0}, h, 30.0);
      const RayHit want = slab_oracle(s, {0.0, 0.0}, h, 30.0);
      CAPTURE(h);
      REQUIRE(got.obstacle == want.obstacle);
      if (got.obstacle >= 0) CHECK(got.distance == doctest::Approx(want.distance).epsilon(1e-9));
    }
    // a ray from inside a box leaves through the far side
    Scene one = empty_scene();
    one.obstacles.push_back(obstacle(0, 0, 2, 4, 0));
    const RayHit inside = cast_ray(one, {0.0, 0.0}, 0.0, 10.0);
    CHECK(inside.obstacle == 0);
    CHECK(inside.distance == doctest::Approx(2.0));
  }

  TEST_CASE("lidar") {
    LidarConfig lc;
    lc.noise_std = 0;
    SUBCASE("no boxes, no points") { CHECK(sample_lidar(empty_scene(), 0, lc).empty()); }
    SUBCASE("first hit occludes the far box") {
      Scene s = empty_scene();
      s.obstacles.push_back(obstacle(5, 0, 6, 2, 0));   // wide wall across x = 4..6
      s.obstacles.push_back(obstacle(10, 0, 1, 2, 0));  // hidden behind it
      const auto pts = sample_lidar(s, 0, lc);
      REQUIRE_FALSE(pts.empty());
      for (const auto& p : pts) {
        CHECK(p.x < 6.0);
        CHECK(box_contains(s.obstacles[0].box, {p.x * 1.001, p.y * 1.001}));
        CHECK(p.z >= 0.0);
        CHECK(p.z <= s.obstacles[0].height);
      }
    }
    SUBCASE("points sit on the hit face, in the agent frame") {
      Scene s = empty_scene();
      s.agents[0].pose = Pose2(2.0, 1.0, std::numbers::pi / 2);
      s.obstacles.push_back(obstacle(2.0, 6.0, 2.0, 2.0, 0));
      const auto pts = sample_lidar(s, 0, lc);
      REQUIRE_FALSE(pts.empty());
      // the box is straight ahead (+x in the agent frame), near face 4 m away
      for (const auto& p : pts) CHECK(p.x == doctest::Approx(4.0));
    }
    SUBCASE("noise is seeded") {
      SceneConfig cfg;
      cfg.seed = 3;
      const Scene s = generate_scene(cfg);
      LidarConfig noisy;
      noisy.seed = 8;
      const auto a = sample_lidar(s, 1, noisy), b = sample_lidar(s, 1, noisy);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].x == b[i].x);
      noisy.seed = 9;
      const auto c = sample_lidar(s, 1, noisy);
      CHECK(c.size() == a.size());
      CHECK(c[0].x != a[0].x);
    }
  }

  TEST_CASE("camera semantics") {
    Scene s = empty_scene();
    s.agents[0].rigs = {forward_rig()};
    SUBCASE("empty scene renders the bias channel only") {
      const Tensor r = render_camera_semantics(s, 0, 0);
      CHECK(r.shape() == Shape{kRawCameraChannels, 36, 64});
      const std::size_t plane = 36 * 64;
      for (std::size_t i = 0; i < plane; ++i) {
        CHECK(r[kCamBias * plane + i] == 1);
        for (auto ch : {kCamTarget, kCamClutter, kCamBearing, kCamGround}) CHECK(r[ch * plane + i] == 0);
      }
    }
    SUBCASE("box dead ahead lights the middle columns") {
      s.obstacles.push_back(obstacle(8, 0, 2, 2, 0));
      const Tensor r = render_camera_semantics(s, 0, 0);
      double sum = 0, count = 0;
      for (std::size_t c = 0; c < 64; ++c)
        if (r.at(kCamTarget, 18, c) > 0) {
          sum += c;
          ++count;
        }
      REQUIRE(count > 0);
      CHECK(sum / count == doctest::Approx(31.5));
      CHECK(r.at(kCamClutter, 18, 31) == 0);
      // rows under the object see ground
      CHECK(r.at(kCamGround, 35, 0) == 0);
    }
    SUBCASE("clutter uses its own channel") {
      s.obstacles.push_back(obstacle(8, 0, 2, 2, 0, false));
      const Tensor r = render_camera_semantics(s, 0, 0);
      CHECK(r.at(kCamClutter, 18, 31) == 1);
      CHECK(r.at(kCamTarget, 18, 31) == 0);
    }
    SUBCASE("column visibility agrees with the ray oracle") {
      SceneConfig cfg;
      cfg.seed = 21;
      const Scene g = generate_scene(cfg);
      for (std::size_t a = 0; a < g.agents.size(); ++a)
        for (std::size_t k = 0; k < g.agents[a].rigs.size(); ++k) {
          const Tensor r = render_camera_semantics(g, a, k);
          const CameraRig& rig = g.agents[a].rigs[k];
          const Transform2 cam = Transform2::from_pose(g.agents[a].pose).compose(rig.mount);
          for (std::size_t c = 0; c < rig.w2; ++c) {
            const RayHit hit = slab_oracle(g, cam.t, cam.yaw() + image_column_bearing(c, rig.w2, rig.fov), 60.0);
            const bool target = hit.obstacle >= 0 && g.obstacles[std::size_t(hit.obstacle)].target;
            const bool clutter = hit.obstacle >= 0 && !target;
            CHECK((r.at(kCamTarget, rig.h2 / 2, c) == 1) == target);
            CHECK((r.at(kCamClutter, rig.h2 / 2, c) == 1) == clutter);
          }
        }
    }
    CHECK_THROWS_AS(render_camera_semantics(s, 0, 1), ContractError);
  }

  TEST_CASE("pose noise") {
    const Pose2 p(1.0, -2.0, 0.3);
    const Pose2 same = apply_pose_noise(p, {0.0, 0.0, 5});
    CHECK(same.x == p.x);
    CHECK(same.y == p.y);
    CHECK(same.yaw == p.yaw);
    const PoseNoiseModel m{0.5, 0.05, 11};
    const Pose2 a = apply_pose_noise(p, m), b = apply_pose_noise(p, m);
    CHECK(a.x == b.x);
    CHECK(a.yaw == b.yaw);
    CHECK(apply_pose_noise(p, {0.5, 0.05, 12}).x != a.x);
    CHECK_THROWS_AS(apply_pose_noise(p, {-0.1, 0.0, 0}), ContractError);

    const std::size_t n = 100000;
    double sx = 0, sy = 0, syaw = 0, vx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Pose2 q = apply_pose_noise(p, {m.sigma_p, m.sigma_r, i});
      sx += q.x - p.x;
      sy += q.y - p.y;
      syaw += q.yaw - p.yaw;
      vx += (q.x - p.x) * (q.x - p.x);
    }
    CHECK(std::abs(sx / n) < 3 * m.sigma_p / std::sqrt(double(n)));
    CHECK(std::abs(sy / n) < 3 * m.sigma_p / std::sqrt(double(n)));
    CHECK(std::abs(syaw / n) < 3 * m.sigma_r / std::sqrt(double(n)));
    CHECK(std::sqrt(vx / n) == doctest::Approx(m.sigma_p).epsilon(0.02));

    // yaw stays in (-pi, pi]
    const Pose2 edge = apply_pose_noise(Pose2(0, 0, std::numbers::pi), {0.0, 0.5, 3});
    CHECK(edge.yaw > -std::numbers::pi);
    CHECK(edge.yaw <= std::numbers::pi);
  }

  TEST_CASE("observation") {
    SceneConfig sc;
    sc.n_agents = 3;
    sc.seed = 6;
    sc.camera_h2 = 8;
    sc.camera_w2 = 16;
    const Scene s = generate_scene(sc);
    ObserveConfig oc;
    const Frame clean = observe(s, oc);
    REQUIRE(clean.agents.size() == 3);
    CHECK(clean.ego_id == 0);
    for (std::size_t a = 0; a < 3; ++a) {
      CHECK(clean.agents[a].pose.x == s.agents[a].pose.x);
      CHECK(clean.agents[a].pose.yaw == s.agents[a].pose.yaw);
      CHECK_NOTHROW(clean.agents[a].validate());
      CHECK(clean.agents[a].camera_rasters.size() == 4);
    }
    CHECK(clean.gt.size() == sc.n_boxes);

    oc.noise = {0.4, 0.02, 1};
    const Frame noisy = observe(s, oc);
    CHECK(noisy.agents[0].pose.x == 0.0);
    CHECK(noisy.agents[0].pose.yaw == 0.0);
    CHECK(noisy.agents[1].pose.x != s.agents[1].pose.x);
    // the sensor readings do not depend on the pose noise
    CHECK(noisy.agents[1].points.size() == clean.agents[1].points.size());

    oc.modalities = parse_modality_mix("LC+C", 2);
    const Frame mixed = observe(s, oc);
    REQUIRE(mixed.agents.size() == 2);
    CHECK(mixed.agents[1].modality == Modality::camera_only);
    CHECK(mixed.agents[1].points.empty());
    CHECK(mixed.agents[1].camera_rasters.size() == 4);
  }

  TEST_CASE("modality mixes") {
    using M = Modality;
    CHECK(parse_modality_mix("LC", 3) == std::vector<M>{M::lidar_camera});
    CHECK(parse_modality_mix("LC+C", 3) == std::vector<M>{M::lidar_camera, M::camera_only, M::camera_only});
    CHECK(parse_modality_mix("L+L", 2) == std::vector<M>{M::lidar_only, M::lidar_only});
    CHECK_THROWS_AS(parse_modality_mix("LC+LC", 1), ContractError);
    CHECK_THROWS_AS(parse_modality_mix("LC+L+C", 2), ContractError);
    CHECK_THROWS_AS(parse_modality_mix("LC+X", 2), ContractError);
    CHECK_THROWS_AS(parse_modality_mix("", 2), ContractError);
  }

  TEST_CASE("scene JSON") {
    SceneConfig cfg;
    cfg.n_agents = 2;
    cfg.seed = 77;
    const Scene s = generate_scene(cfg);
    const auto j = scene_to_json(s);
    const Scene back = scene_from_json(nlohmann::json::parse(j.dump()));
    CHECK(scene_to_json(back).dump() == j.dump());
    REQUIRE(back.obstacles.size() == s.obstacles.size());
    CHECK(back.obstacles[3].box.cx == s.obstacles[3].box.cx);
    CHECK(back.agents[1].rigs[2].mount.t.x == doctest::Approx(s.agents[1].rigs[2].mount.t.x).epsilon(1e-15));

    auto broken = nlohmann::json::parse(j.dump());
    broken.erase("bounds");
    CHECK_THROWS_AS(scene_from_json(broken), ContractError);
    auto noagents = nlohmann::json::parse(j.dump());
    noagents["agents"] = nlohmann::json::array();
    CHECK_THROWS_AS(scene_from_json(noagents), ContractError);
  }
}
