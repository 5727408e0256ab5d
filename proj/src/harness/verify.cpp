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

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>

#include "rgf/architectures.hpp"
#include "rgf/harness.hpp"
#include "rgf/sparse_map.hpp"

namespace rgf::harness {

namespace {

Tensor randn(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  return Tensor::randn(std::move(shape), rng, scale);
}

// |w| in [0.5, 1.5] with random sign; keeps every output's gradient O(1).
Tensor loss_weights(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.5, 1.5);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = Real((rng() & 1 ? 1.0 : -1.0) * mag(rng));
  return t;
}

Var weighted_sum(const Var& x, std::uint64_t seed) { return ops::sum(ops::mul(x, Var(loss_weights(x.shape(), seed)))); }

// Attention over all W*Hk keys at once with cross-column pairs masked out.
Tensor dense_masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  const std::size_t w = q.dim(0), hq = q.dim(1), d = q.dim(2), hk = k.dim(1), dh = d / heads;
  const std::size_t nq = w * hq, nk = w * hk;
  Tensor out({w, hq, d});
  std::vector<double> logits(nk);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t a = 0; a < nq; ++a) {
      for (std::size_t b = 0; b < nk; ++b) {
        if (a / hq != b / hk) {
          logits[b] = -std::numeric_limits<double>::infinity();
          continue;
        }
        double dot = 0;
        for (std::size_t p = 0; p < dh; ++p) dot += q[a * d + h * dh + p] * k[b * d + h * dh + p];
        logits[b] = dot / std::sqrt(double(dh));
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0;
      for (double& l : logits) z += (l = std::exp(l - mx));
      for (std::size_t p = 0; p < dh; ++p) {
        double acc = 0;
        for (std::size_t b = 0; b < nk; ++b) acc += logits[b] / z * v[b * d + h * dh + p];
        out[a * d + h * dh + p] = Real(acc);
      }
    }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

CameraRig tiny_rig(double yaw) {
  CameraRig r;
  r.mount = Transform2::from_yaw(yaw, {0.3, -0.2});
  r.fov = 1.6;
  r.w2 = 6;
  r.h2 = 5;
  r.c2 = 3;
  return r;
}

ModelConfig tiny_model(Architecture arch) {
  ModelConfig c;
  c.arch = arch;
  c.bev = BevSpec::from_extent(-4, 4, -2, 2, 0.5);
  c.c1 = 4;
  c.c2 = 3;
  c.cam_h2 = 4;
  c.cam_w2 = 8;
  c.heads = 2;
  c.factors = {1, 2};
  c.dropout = 0.1;
  return c;
}

// Three agents at fixed poses with seeded points and rasters. CoS-CoCo gets a
// camera-only cooperator.
Frame tiny_frame(Architecture arch, std::uint64_t seed) {
  Frame f;
  f.ego_id = 10;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> x(-4.5, 4.5), y(-2.5, 2.5), z(0, 2), in(0, 1);
  const Pose2 poses[] = {{0, 0, 0}, {1.5, 0.4, 0.3}, {-1, -0.6, -0.5}};
  const Modality mods[] = {Modality::lidar_camera,
                           arch == Architecture::coscoco ? Modality::camera_only : Modality::lidar_camera,
                           Modality::lidar_only};
  for (std::size_t a = 0; a < 3; ++a) {
    AgentObservation o;
    o.agent_id = 10 + a;
    o.pose = poses[a];
    o.modality = mods[a];
    if (has_lidar(o.modality))
      for (int i = 0; i < 60; ++i) o.points.push_back({x(rng), y(rng), z(rng), in(rng)});
    if (has_camera(o.modality))
      for (std::size_t k = 0; k < 2; ++k) {
        CameraRig r;
        r.mount = Transform2::from_yaw(double(k) * std::numbers::pi, {0.3, 0});
        r.fov = 1.6;
        r.w2 = 8;
        r.h2 = 4;
        r.c2 = 3;
        o.rigs.push_back(r);
        o.camera_rasters.push_back(randn({kRawCameraChannels, 4, 8}, seed * 10 + a * 2 + k));
      }
    f.agents.push_back(std::move(o));
  }
  f.gt = {{0.8, 0.3, 1.2, 2.1, 0.4, 1.0}, {-2.2, -0.9, 1.0, 1.8, -1.1, 1.0}};
  return f;
}

struct Suite {
  double eps;
  std::vector<GradcheckRow> rows;

  void run(const std::string& name, std::uint64_t seed, const std::function<Var()>& fn, ParameterStore& store,
           double tol = 1e-5) {
    const auto r = finite_diff_check(fn, store.all(), eps);
    GradcheckRow row;
    row.name = name;
    row.seed = seed;
    row.max_rel_error = r.max_rel_error;
    row.tolerance = tol;
    row.worst_parameter = r.worst_parameter;
    row.pass = r.max_rel_error < tol;
    rows.push_back(row);
  }
};

}  // namespace

std::vector<GradcheckRow> cmd_gradcheck(double epsilon) {
  Suite s{epsilon, {}};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    {
      ParameterStore st;
      const Var a = st.add("a", randn({3, 4}, seed)), b = st.add("b", randn({3, 4}, seed + 10));
      const Var m = st.add("m", randn({4, 5}, seed + 20)), bias = st.add("bias", randn({5}, seed + 30));
      const Var t3 = st.add("t3", randn({2, 3, 4}, seed + 40)), u3 = st.add("u3", randn({2, 4, 3}, seed + 50));
      const Var v3 = st.add("v3", randn({2, 5, 4}, seed + 60)), p34 = st.add("p34", randn({3, 4}, seed + 70));
      s.run("linear", seed, [&] { return weighted_sum(ops::linear(a, m, bias), 7); }, st);
      s.run("add", seed, [&] { return weighted_sum(ops::add(a, b), 1); }, st);
      s.run("sub", seed, [&] { return weighted_sum(ops::sub(a, b), 2); }, st);
      s.run("mul", seed, [&] { return weighted_sum(ops::mul(a, b), 3); }, st);
      s.run("scale", seed, [&] { return weighted_sum(ops::scale(a, Real(-1.7)), 4); }, st);
      s.run("add_const", seed, [&] { return weighted_sum(ops::add_const(a, randn({3, 4}, 9)), 5); }, st);
      s.run("matmul", seed, [&] { return weighted_sum(ops::matmul(a, m), 6); }, st);
      s.run("bmm", seed, [&] { return weighted_sum(ops::bmm(t3, u3), 9); }, st);
      s.run("bmm_transposed", seed, [&] { return weighted_sum(ops::bmm(t3, v3, true), 10); }, st);
      s.run("softmax", seed, [&] { return weighted_sum(ops::softmax(t3, 2), 11); }, st);
      s.run("softmax_axis0", seed, [&] { return weighted_sum(ops::softmax(t3, 0), 12); }, st);
      s.run("permute", seed, [&] { return weighted_sum(ops::permute(t3, {2, 0, 1}), 13); }, st);
      s.run("concat0", seed, [&] { return weighted_sum(ops::concat0({t3, t3}), 14); }, st);
      s.run("select0", seed, [&] { return weighted_sum(ops::select0(t3, 1), 15); }, st);
      s.run("add_broadcast0", seed, [&] { return weighted_sum(ops::add_broadcast0(t3, p34), 17); }, st);
      s.run("dropout", seed, [&] { return weighted_sum(ops::dropout(t3, Real(0.3), 77, true), 18); }, st);
      s.run("reshape", seed, [&] { return weighted_sum(ops::reshape(t3, {4, 6}), 19); }, st);
    }
    {
      // positive operands keep the reduced broadcast gradient away from cancellation
      ParameterStore st;
      Tensor xt = loss_weights({2, 3, 4}, seed), wt = loss_weights({3, 4}, seed + 1), lw = loss_weights({2, 3, 4}, seed + 2);
      for (auto* t : {&xt, &wt, &lw})
        for (std::size_t i = 0; i < t->numel(); ++i) (*t)[i] = std::abs((*t)[i]);
      const Var x = st.add("x", xt), w = st.add("w", wt);
      s.run("mul_broadcast0", seed, [&] { return ops::sum(ops::mul(ops::mul_broadcast0(x, w), Var(lw))); }, st);
    }
    {
      ParameterStore st;
      const Var x = st.add("x", randn({3, 2, 5}, seed)), w = st.add("w", randn({3, 4}, seed + 1));
      const Var b = st.add("b", randn({4}, seed + 2));
      s.run("channel_linear", seed, [&] { return weighted_sum(ops::channel_linear(x, w, b), seed); }, st);
    }
    {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(-0.5, 3.5);
      std::vector<PixelCoord> coords;
      for (int i = 0; i < 6; ++i) coords.push_back({u(rng) * 0.75, u(rng)});
      auto map = std::make_shared<const SparseMap>(SparseMap::bilinear_sample(coords, 3, 4));
      ParameterStore st;
      const Var x = st.add("x", randn({2, 3, 4}, seed + 8));
      s.run("sparse_apply", seed, [&] { return weighted_sum(ops::sparse_apply(x, map, {6}), 1); }, st);
    }
    {
      // logits kept O(1): saturated ones leave only roundoff-sized gradients
      ParameterStore st;
      const Var x = st.add("x", randn({4, 6}, seed + 20, 0.5)), w = st.add("w", randn({6, 3}, seed + 21, 0.5));
      s.run("softmax_cross_entropy", seed,
            [&] {
              const Var p = ops::softmax(ops::matmul(x, w), 1);
              double nll = 0;
              for (std::size_t i = 0; i < 4; ++i) nll -= std::log(double(p.value().at(i, i % 3)));
              return ops::custom(Tensor({1}, {Real(nll / 4)}), {p}, [p](Node& self) {
                for (std::size_t i = 0; i < 4; ++i) p.grad().at(i, i % 3) -= self.grad[0] / (4 * p.value().at(i, i % 3));
              });
            },
            st);
    }
    {
      ParameterStore st;
      const Var q = st.add("q", randn({3, 4, 4}, seed)), k = st.add("k", randn({3, 5, 4}, seed + 1));
      const Var v = st.add("v", randn({3, 5, 4}, seed + 2));
      const Tensor wgt = loss_weights({3, 4, 4}, seed + 3);
      s.run("column_mha", seed,
            [&] { return ops::sum(ops::mul(column_mha(q, k, v, 2, 0.2, AttnRuntime{true, seed}), Var(wgt))); }, st);
    }
    for (auto pe : {PositionalEncoding::learnable, PositionalEncoding::depth_height}) {
      const BevSpec spec = BevSpec::from_extent(-4, 4, -2, 2, 0.5);
      RgAttnConfig cfg;
      cfg.c1 = 4;
      cfg.c2 = 3;
      cfg.heads = 2;
      cfg.radial_bins = spec.h1;
      cfg.cam_h2 = 5;
      cfg.encoding = pe;
      ParameterStore st;
      std::mt19937_64 rng(seed);
      const RgAttnParams params = make_rg_attn_params(cfg, st, "attn", rng);
      for (auto& p : st.all())
        if (p.name.find(".b") != std::string::npos) p.value() = randn(p.value().shape(), seed + 99, 0.1);
      const CameraRig rig = tiny_rig(0.4);
      const Var bev = st.add("bev", randn({4, spec.h1, spec.w1}, seed + 10));
      const Var cam = st.add("cam", randn({3, rig.h2, rig.w2}, seed + 11));
      const Tensor wgt = loss_weights({4, spec.h1, spec.w1}, seed + 12);
      const Transform2 t = Transform2::from_yaw(0.25 * double(seed), {0.4, -0.3});
      s.run("rg_attn_apply." + to_string(pe), seed,
            [&] {
              return ops::sum(
                  ops::mul(rg_attn_apply(bev, spec, cam, t, rig, params, AttnRuntime{true, seed}), Var(wgt)));
            },
            st);
    }
    {
      PyramidConfig cfg;
      cfg.c1 = 2;
      cfg.factors = {1, 2};
      ParameterStore st;
      std::mt19937_64 rng(seed);
      const PyramidParams params = make_pyramid_params(cfg, st, "pyr", rng);
      for (auto& p : st.all()) {
        const Tensor noise = randn(p.value().shape(), seed + p.value().numel(), 0.3);
        for (std::size_t i = 0; i < noise.numel(); ++i) p.value()[i] += noise[i];
      }
      const BevSpec spec = BevSpec::from_extent(-2, 2, -1, 1, 0.5);
      const Var f0 = st.add("f0", randn({2, 4, 8}, seed + 40)), f1 = st.add("f1", randn({2, 4, 8}, seed + 41));
      const Tensor wgt = loss_weights({2, 4, 8}, seed + 42);
      const Transform2 t = Transform2::from_yaw(0.3, {0.35, 0.2});
      s.run("pyramid_fuse", seed,
            [&] {
              const std::vector<WarpedAgentMap> maps{warp_to_ego(f0, spec, Transform2::identity(), 0),
                                                     warp_to_ego(f1, spec, t, 1)};
              return ops::sum(ops::mul(pyramid_fuse(maps, params), Var(wgt)));
            },
            st);
    }
    {
      const BevSpec spec = BevSpec::from_extent(-4, 4, -2, 2, 0.5);
      const DetectionTargets tg = build_targets({{0.8, 0.3, 1.2, 2.1, 0.4, 1.0}, {-2.2, -0.9, 1.0, 1.8, -1.1, 1.0}}, spec);
      ParameterStore st;
      const Var raw = st.add("raw", randn({7, spec.h1, spec.w1}, seed + 14));  // unsaturated logits
      s.run("detection_loss", seed, [&] { return detection_loss(raw, tg.target, tg.foreground, 0.7, 1.3).total; },
            st);
    }
    for (auto arch : {Architecture::ptp, Architecture::coscoco, Architecture::prgaf}) {
      Model m = make_model(tiny_model(arch), 100 + seed);
      const Frame f = tiny_frame(arch, seed);
      s.run("pipeline." + to_string(arch), seed, [&] { return frame_loss(m, f, AttnRuntime{true, 5}); }, m.store);
    }
  }
  // A backward with a missing factor of two must be flagged.
  {
    ParameterStore st;
    const Var x = st.add("x", randn({4}, 3));
    Suite probe{epsilon, {}};
    probe.run("corrupted_backward", 0,
              [&] {
                return ops::custom(Tensor({1}, {x.value()[0] * x.value()[0]}), {x},
                                   [x](Node& self) { x.grad()[0] += self.grad[0] * x.value()[0]; });
              },
              st, 0.1);
    GradcheckRow row = probe.rows.front();
    row.expect_failure = true;
    row.pass = row.max_rel_error > row.tolerance;
    s.rows.push_back(row);
  }
  return s.rows;
}

CheckResult attention_oracle_check(std::size_t shapes) {
  std::mt19937_64 rng(2024);
  double worst = 0;
  for (std::size_t trial = 0; trial < shapes; ++trial) {
    const std::size_t heads = std::array<std::size_t, 3>{1, 2, 4}[trial % 3];
    const std::size_t dh = 1 + rng() % (16 / heads);
    const std::size_t w = 1 + rng() % 4, hq = 1 + rng() % 8, hk = 1 + rng() % 8, d = heads * dh;
    const Tensor q = randn({w, hq, d}, rng()), k = randn({w, hk, d}, rng()), v = randn({w, hk, d}, rng());
    const Var out = column_mha(Var(q), Var(k), Var(v), heads, 0.1, AttnRuntime{false, 0});
    worst = std::max(worst, max_abs_diff(out.value(), dense_masked_attention(q, k, v, heads)));
  }
  std::ostringstream d;
  d << shapes << " shapes, max abs diff " << worst;
  return {shapes >= 20 && worst < 1e-10, d.str()};
}

CheckResult geometric_identity_check() {
  std::ostringstream d;
  bool ok = true;

  // zeroed value/output projections reduce every camera pipeline to LiDAR-only
  std::size_t mismatched = 0;
  for (auto arch : {Architecture::ptp, Architecture::coscoco, Architecture::prgaf})
    for (std::uint64_t seed : {1u, 2u}) {
      Model m = make_model(tiny_model(arch), seed);
      zero_attention_outputs(m);
      Frame f = tiny_frame(arch, seed);
      if (arch == Architecture::coscoco) f.agents[1].modality = Modality::lidar_camera;
      if (has_lidar(f.agents[1].modality) && f.agents[1].points.empty()) {
        std::mt19937_64 rng(seed + 7);
        std::uniform_real_distribution<double> u(-2, 2);
        for (int i = 0; i < 40; ++i) f.agents[1].points.push_back({u(rng), u(rng), 1.0, 0.5});
      }
      NoGradGuard guard;
      const Tensor fused = fuse_forward(m, f.agents, f.ego_id, AttnRuntime{true, 3}).value();
      const Tensor lidar = lidar_forward(m, f.agents, f.ego_id).value();
      if (max_abs_diff(fused, lidar) != 0.0) ++mismatched;
    }
  ok &= mismatched == 0;
  d << "residual identity mismatches " << mismatched << "/6";

  // constant field through sector sampling and inversion
  const BevSpec spec;
  const Tensor bev({3, spec.h1, spec.w1}, Real(2.5));
  double worst_const = 0;
  std::size_t covered = 0;
  for (const auto& [origin, start, span] : std::vector<std::tuple<Vec2, double, double>>{
           {{0, 0}, -0.9, 1.8}, {{20, 10}, 2.0, 1.5}, {{-30, 0}, -0.5, 1.0}, {{5, -12}, -3.0, 1.745}}) {
    const auto sector = build_sector(origin, start, span, 64, max_radius(spec), spec.h1);
    const Tensor back = grid_sector_inverse(grid_sector_sample(bev, spec, sector), spec);
    for (std::size_t i = 0; i < back.numel(); ++i)
      if (back[i] != 0) {
        ++covered;
        worst_const = std::max(worst_const, std::abs(double(back[i]) - 2.5));
      }
  }
  ok &= covered > 0 && worst_const < 1e-6;
  d << "; constant field error " << worst_const << " over " << covered << " cells";

  // relative transforms compose to the identity and invert exactly
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> pos(-50, 50), yaw(-std::numbers::pi, std::numbers::pi);
  double worst_rt = 0;
  for (int i = 0; i < 1000; ++i) {
    const Pose2 a{pos(rng), pos(rng), yaw(rng)}, b{pos(rng), pos(rng), yaw(rng)}, c{pos(rng), pos(rng), yaw(rng)};
    const Transform2 ab = relative_transform(a, b), ba = relative_transform(b, a);
    const Transform2 chain = relative_transform(b, c).compose(ab), direct = relative_transform(a, c);
    const Vec2 p{pos(rng), pos(rng)};
    const Vec2 loop = ba.apply(ab.apply(p)), inv = ab.inverse().apply(ab.apply(p));
    const Vec2 c1 = chain.apply(p), c2 = direct.apply(p);
    for (double e : {loop.x - p.x, loop.y - p.y, inv.x - p.x, inv.y - p.y, c1.x - c2.x, c1.y - c2.y})
      worst_rt = std::max(worst_rt, std::abs(e));
  }
  ok &= worst_rt < 1e-9;
  d << "; transform round trip error " << worst_rt;
  return {ok, d.str()};
}

}  // namespace rgf::harness
