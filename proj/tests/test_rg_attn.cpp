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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "rgf/rg_attn.hpp"
#include "test_util.hpp"

using namespace rgf;
using rgf::testing::max_abs_diff;
using rgf::testing::random_tensor;

namespace {

// Attention over all W*Hk keys at once, with cross-column pairs masked out.
Tensor dense_masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  const std::size_t w = q.dim(0), hq = q.dim(1), d = q.dim(2), hk = k.dim(1), dh = d / heads;
  const std::size_t nq = w * hq, nk = w * hk;
  Tensor out({w, hq, d});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t a = 0; a < nq; ++a) {
      std::vector<double> logits(nk);
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
        out[a * d + h * dh + p] = acc;
      }
    }
  return out;
}

struct Fixture {
  BevSpec spec = BevSpec::from_extent(-4, 4, -2, 2, 0.5);  // 8 x 16
  RgAttnConfig cfg;
  ParameterStore store;
  RgAttnParams params;
  CameraRig rig;

  explicit Fixture(std::uint64_t seed, PositionalEncoding pe = PositionalEncoding::learnable) {
    cfg.c1 = 4;
    cfg.c2 = 3;
    cfg.heads = 2;
    cfg.radial_bins = spec.h1;
    cfg.cam_h2 = 5;
    cfg.encoding = pe;
    cfg.dropout = 0.1;
    rig.mount = Transform2::from_yaw(0.4, {0.3, -0.2});
    rig.fov = 1.6;
    rig.w2 = 6;
    rig.h2 = 5;
    rig.c2 = 3;
    std::mt19937_64 rng(seed);
    params = make_rg_attn_params(cfg, store, "attn", rng);
    // nonzero biases so their gradients are exercised
    for (auto& p : store.all())
      if (p.name.find(".b") != std::string::npos) p.value() = random_tensor(p.value().shape(), seed + 99, 0.1);
  }
  Tensor bev(std::uint64_t s) const { return random_tensor({cfg.c1, spec.h1, spec.w1}, s); }
  Tensor cam(std::uint64_t s) const { return random_tensor({cfg.c2, rig.h2, rig.w2}, s); }
};

}  // namespace

TEST_SUITE("rg_attn") {
  TEST_CASE("column attention matches the dense masked oracle") {
    std::mt19937_64 rng(2024);
    int shapes = 0;
    for (std::size_t trial = 0; trial < 24; ++trial) {
      const std::size_t heads = std::array<std::size_t, 3>{1, 2, 4}[trial % 3];
      const std::size_t dh = 1 + rng() % (16 / heads);
      const std::size_t w = 1 + rng() % 4, hq = 1 + rng() % 8, hk = 1 + rng() % 8, d = heads * dh;
      CAPTURE(w);
      CAPTURE(hq);
      CAPTURE(hk);
      CAPTURE(d);
      const Tensor q = random_tensor({w, hq, d}, rng()), k = random_tensor({w, hk, d}, rng()),
                   v = random_tensor({w, hk, d}, rng());
      const Var out = column_mha(Var(q), Var(k), Var(v), heads, 0.1, AttnRuntime{false, 0});
      CHECK(max_abs_diff(out.value(), dense_masked_attention(q, k, v, heads)) < 1e-10);
      ++shapes;
    }
    CHECK(shapes >= 20);
  }

  TEST_CASE("single key returns its value") {
    const Tensor q = random_tensor({3, 5, 4}, 1), v = random_tensor({3, 1, 4}, 3);
    const Var out = column_mha(Var(q), Var(random_tensor({3, 1, 4}, 2)), Var(v), 2, 0.0, {});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t p = 0; p < 4; ++p) CHECK(out.value().at(c, i, p) == v.at(c, 0, p));
  }

  TEST_CASE("identical keys average the values") {
    Tensor k({2, 4, 4});
    const Tensor row = random_tensor({4}, 5);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t p = 0; p < 4; ++p) k.at(c, j, p) = row[p];
    const Tensor v = random_tensor({2, 4, 4}, 6);
    const Var out = column_mha(Var(random_tensor({2, 3, 4}, 7)), Var(k), Var(v), 4, 0.0, {});
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t p = 0; p < 4; ++p) {
        double mean = 0;
        for (std::size_t j = 0; j < 4; ++j) mean += v.at(c, j, p) / 4;
        CHECK(std::abs(out.value().at(c, 0, p) - mean) < 1e-12);
      }
  }

  TEST_CASE("camera column perturbation stays in its column before inversion") {
    Fixture f(3);
    const Tensor sub = random_tensor({f.cfg.c1, f.cfg.radial_bins, f.rig.w2}, 4);
    Tensor cam = f.cam(5);
    auto fused = [&](const Tensor& c) {
      const Var q = pl_process(Var(sub), TokenRole::query, f.params);
      const Var k = pl_process(Var(c), TokenRole::key, f.params);
      const Var v = pl_process(Var(c), TokenRole::value, f.params);
      return column_mha(q, k, v, f.cfg.heads, 0.0, {}).value();  // [W2 x h x d]
    };
    const Tensor base = fused(cam);
    const std::size_t col = 2;
    for (std::size_t ch = 0; ch < f.cfg.c2; ++ch)
      for (std::size_t r = 0; r < f.rig.h2; ++r) cam.at(ch, r, col) += 1.5;
    const Tensor moved = fused(cam);
    for (std::size_t c = 0; c < f.rig.w2; ++c) {
      double diff = 0;
      for (std::size_t i = 0; i < base.numel() / f.rig.w2; ++i) {
        const std::size_t idx = c * (base.numel() / f.rig.w2) + i;
        diff = std::max(diff, std::abs(double(base[idx] - moved[idx])));
      }
      if (c == col)
        CHECK(diff > 1e-3);
      else
        CHECK(diff == 0.0);
    }
  }

  TEST_CASE("zeroed value and output projections give the identity") {
    for (auto pe : {PositionalEncoding::none, PositionalEncoding::learnable, PositionalEncoding::depth_height}) {
      Fixture f(7, pe);
      for (Var* v : {&f.params.wv, &f.params.bv, &f.params.wo, &f.params.bo}) v->mutable_value().fill(0);
      const Tensor bev = f.bev(1);
      const Var out = rg_attn_apply(Var(bev), f.spec, Var(f.cam(2)), Transform2::from_yaw(0.3, {1, 0.5}), f.rig,
                                    f.params, AttnRuntime{true, 9});
      CHECK(rgf::testing::bitwise_equal(out.value(), bev));
    }
  }

  TEST_CASE("shape is preserved") {
    Fixture f(8);
    const Var out = rg_attn_apply(Var(f.bev(1)), f.spec, Var(f.cam(2)), Transform2::identity(), f.rig, f.params, {});
    CHECK(out.shape() == Shape{f.cfg.c1, f.spec.h1, f.spec.w1});
  }

  TEST_CASE("constant field survives sector sampling and inversion") {
    const BevSpec spec;
    const Tensor bev({3, spec.h1, spec.w1}, Real(2.5));
    for (const auto& [origin, start, span] :
         std::vector<std::tuple<Vec2, double, double>>{{{0, 0}, -0.9, 1.8}, {{20, 10}, 2.0, 1.5}, {{-30, 0}, -0.5, 1.0}}) {
      const auto sector = build_sector(origin, start, span, 64, max_radius(spec), spec.h1);
      const SubBevMap sub = grid_sector_sample(bev, spec, sector);
      const Tensor back = grid_sector_inverse(sub, spec);
      std::size_t covered = 0;
      for (std::size_t i = 0; i < back.numel(); ++i)
        if (back[i] != 0) {
          ++covered;
          CHECK(std::abs(back[i] - 2.5) < 1e-6);
        }
      CHECK(covered > 0);
    }
  }

  TEST_CASE("multi-camera aggregation ignores input order") {
    Fixture f(11);
    std::vector<CameraInput> cams;
    for (std::size_t i = 0; i < 4; ++i)
      cams.push_back({i * 3 + 1, Var(f.cam(20 + i)), Transform2::from_yaw(0.7 * double(i), {0.5, 0.1}), f.rig});
    const Var bev(f.bev(3));
    const AttnRuntime rt{true, 5};
    const Tensor a = rg_attn_multi(bev, f.spec, cams, f.params, rt).value();
    std::reverse(cams.begin(), cams.end());
    const Tensor b = rg_attn_multi(bev, f.spec, cams, f.params, rt).value();
    std::swap(cams[0], cams[2]);
    const Tensor c = rg_attn_multi(bev, f.spec, cams, f.params, rt).value();
    CHECK(rgf::testing::bitwise_equal(a, b));
    CHECK(rgf::testing::bitwise_equal(a, c));
    CHECK(rgf::testing::bitwise_equal(rg_attn_multi(bev, f.spec, {}, f.params, rt).value(), bev.value()));
  }

  TEST_CASE("parallel deltas sum over cameras") {
    Fixture f(12);
    const Var bev(f.bev(3));
    std::vector<CameraInput> cams{{0, Var(f.cam(1)), Transform2::identity(), f.rig},
                                  {1, Var(f.cam(2)), Transform2::from_yaw(2.0), f.rig}};
    const Tensor both = rg_attn_multi(bev, f.spec, cams, f.params, {}).value();
    const Tensor d0 = rg_attn_delta(bev, f.spec, cams[0].features, cams[0].to_target, f.rig, f.params, {}).value();
    const Tensor d1 = rg_attn_delta(bev, f.spec, cams[1].features, cams[1].to_target, f.rig, f.params, {}).value();
    Tensor expect = bev.value();
    for (std::size_t i = 0; i < expect.numel(); ++i) expect[i] += d0[i] + d1[i];
    CHECK(max_abs_diff(both, expect) < 1e-12);
  }

  TEST_CASE("operation count") {
    CHECK(attention_op_count(64, 36, 128, 16, 8) == 2 * attention_op_count(64, 36, 64, 16, 8));
    CHECK(attention_op_count(64, 36, 0, 16, 8) == 0);
    CHECK(attention_op_count(64, 36, 64, 16, 8) == 64ull * 8 * 2 * 64 * 36 * 2);
    CHECK(attention_op_count(256, 144, 512, 256, 8, 256, 8) ==
          2 * attention_op_count(256, 144, 256, 256, 8, 256, 8));

    const Tensor q = random_tensor({5, 7, 8}, 1), k = random_tensor({5, 3, 8}, 2);
    reset_mac_counter();
    column_mha(Var(q), Var(k), Var(k), 2, 0.0, {});
    CHECK(mac_counter() == attention_op_count(7, 3, 5, 8, 2));

    // full kernel: attention plus the four projections
    Fixture f(13, PositionalEncoding::none);
    reset_mac_counter();
    rg_attn_delta(Var(f.bev(1)), f.spec, Var(f.cam(2)), Transform2::identity(), f.rig, f.params, {});
    CHECK(mac_counter() ==
          attention_op_count(f.cfg.radial_bins, f.rig.h2, f.rig.w2, f.cfg.c1, f.cfg.heads, f.cfg.c1, f.cfg.c2));
  }

  TEST_CASE("dropout is seeded and training-only") {
    const Tensor q = random_tensor({2, 4, 4}, 1), k = random_tensor({2, 6, 4}, 2), v = random_tensor({2, 6, 4}, 3);
    const auto run = [&](bool training, std::uint64_t seed) {
      return column_mha(Var(q), Var(k), Var(v), 2, 0.5, AttnRuntime{training, seed}).value();
    };
    CHECK(rgf::testing::bitwise_equal(run(true, 4), run(true, 4)));
    CHECK_FALSE(rgf::testing::bitwise_equal(run(true, 4), run(true, 5)));
    CHECK(rgf::testing::bitwise_equal(run(false, 4), run(false, 5)));
    CHECK(max_abs_diff(run(false, 0), dense_masked_attention(q, k, v, 2)) < 1e-12);
  }

  TEST_CASE("gradients") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      CAPTURE(seed);
      SUBCASE("column attention with dropout") {
        ParameterStore s;
        const Var q = s.add("q", random_tensor({3, 4, 4}, seed));
        const Var k = s.add("k", random_tensor({3, 5, 4}, seed + 1));
        const Var v = s.add("v", random_tensor({3, 5, 4}, seed + 2));
        const Tensor wgt = rgf::testing::loss_weights({3, 4, 4}, seed + 3);
        auto fn = [&] {
          return ops::sum(ops::mul(column_mha(q, k, v, 2, 0.2, AttnRuntime{true, seed}), Var(wgt)));
        };
        CHECK(finite_diff_check(fn, s.all(), 1e-6).max_rel_error < 1e-5);
      }
      for (auto pe : {PositionalEncoding::learnable, PositionalEncoding::depth_height}) {
        SUBCASE(("full kernel, " + to_string(pe)).c_str()) {
          Fixture f(seed, pe);
          const Var bev = f.store.add("bev", f.bev(seed + 10));
          const Var cam = f.store.add("cam", f.cam(seed + 11));
          const Tensor wgt = rgf::testing::loss_weights({f.cfg.c1, f.spec.h1, f.spec.w1}, seed + 12);
          const Transform2 t = Transform2::from_yaw(0.25 * double(seed), {0.4, -0.3});
          auto fn = [&] {
            return ops::sum(ops::mul(rg_attn_apply(bev, f.spec, cam, t, f.rig, f.params, AttnRuntime{true, seed}),
                                     Var(wgt)));
          };
          const auto r = finite_diff_check(fn, f.store.all(), 1e-6);
          CAPTURE(r.worst_parameter);
          CHECK(r.max_rel_error < 1e-5);
        }
      }
    }
  }
}
