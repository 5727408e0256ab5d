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
#include <limits>
#include <memory>

#include "rgf/autograd.hpp"
#include "rgf/optim.hpp"
#include "rgf/sparse_map.hpp"
#include "test_util.hpp"

using namespace rgf;
using rgf::testing::random_tensor;

namespace {

// Fixed random weighting turns any tensor into a scalar with O(1) gradients.
Var weighted_sum(const Var& x, std::uint64_t seed) {
  return ops::sum(ops::mul(x, Var(rgf::testing::loss_weights(x.shape(), seed))));
}

double check(const std::function<Var()>& fn, ParameterStore& store) {
  return finite_diff_check(fn, store.all(), 1e-6).max_rel_error;
}

}  // namespace

TEST_SUITE("autograd") {
  TEST_CASE("linear forward") {
    const Var x(random_tensor({3, 2}, 1)), w(random_tensor({2, 4}, 2));
    SUBCASE("zero input, zero bias") {
      const Var y = ops::linear(Var(Tensor({3, 2})), w, Var(Tensor({4})));
      for (Real v : y.value().data()) CHECK(v == 0);
    }
    SUBCASE("identity weight") {
      Tensor eye({2, 2});
      eye.at(0, 0) = eye.at(1, 1) = 1;
      const Var y = ops::linear(x, Var(eye), Var());
      CHECK(rgf::testing::bitwise_equal(y.value(), x.value()));
    }
    SUBCASE("triple-loop oracle") {
      const Tensor b = random_tensor({4}, 3);
      const Var y = ops::linear(x, w, Var(b));
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          double acc = b[j];
          for (std::size_t p = 0; p < 2; ++p) acc += x.value().at(i, p) * w.value().at(p, j);
          CHECK(std::abs(y.value().at(i, j) - acc) < 1e-12);
        }
    }
  }

  TEST_CASE("gradient checks over every op") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      CAPTURE(seed);
      ParameterStore s;
      const Var a = s.add("a", random_tensor({3, 4}, seed));
      const Var b = s.add("b", random_tensor({3, 4}, seed + 10));
      const Var m = s.add("m", random_tensor({4, 5}, seed + 20));
      const Var bias = s.add("bias", random_tensor({5}, seed + 30));
      const Var t3 = s.add("t3", random_tensor({2, 3, 4}, seed + 40));
      const Var u3 = s.add("u3", random_tensor({2, 4, 3}, seed + 50));
      const Var v3 = s.add("v3", random_tensor({2, 5, 4}, seed + 60));
      const Var p34 = s.add("p34", random_tensor({3, 4}, seed + 70));

      CHECK(check([&] { return weighted_sum(ops::add(a, b), 1); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::sub(a, b), 2); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::mul(a, b), 3); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::scale(a, Real(-1.7)), 4); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::add_const(a, random_tensor({3, 4}, 9)), 5); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::matmul(a, m), 6); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::linear(a, m, bias), 7); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::bmm(t3, u3), 9); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::bmm(t3, v3, true), 10); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::softmax(t3, 2), 11); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::softmax(t3, 0), 12); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::permute(t3, {2, 0, 1}), 13); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::concat0({t3, t3}), 14); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::select0(t3, 1), 15); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::add_broadcast0(t3, p34), 17); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::dropout(t3, Real(0.3), 77, true), 18); }, s) < 1e-5);
      CHECK(check([&] { return weighted_sum(ops::reshape(t3, {4, 6}), 19); }, s) < 1e-5);
    }
  }

  TEST_CASE("mul_broadcast0 gradient") {
    // positive operands keep the reduced broadcast gradient away from cancellation
    for (std::uint64_t seed : {7u, 8u, 9u}) {
      ParameterStore s;
      Tensor xt = rgf::testing::loss_weights({2, 3, 4}, seed), wt = rgf::testing::loss_weights({3, 4}, seed + 1);
      Tensor lw = rgf::testing::loss_weights({2, 3, 4}, seed + 2);
      for (auto* t : {&xt, &wt, &lw})
        for (std::size_t i = 0; i < t->numel(); ++i) (*t)[i] = std::abs((*t)[i]);
      const Var x = s.add("x", xt), w = s.add("w", wt);
      CHECK(check([&] { return ops::sum(ops::mul(ops::mul_broadcast0(x, w), Var(lw))); }, s) < 1e-5);
    }
  }

  TEST_CASE("channel_linear gradient") {
    for (std::uint64_t seed : {4u, 5u, 6u}) {
      ParameterStore s;
      const Var x = s.add("x", random_tensor({3, 2, 5}, seed));
      const Var w = s.add("w", random_tensor({3, 4}, seed + 1));
      const Var b = s.add("b", random_tensor({4}, seed + 2));
      CHECK(check([&] { return weighted_sum(ops::channel_linear(x, w, b), seed); }, s) < 1e-5);
    }
  }

  TEST_CASE("sparse_apply gradient") {
    std::vector<PixelCoord> coords{{0.3, 1.7}, {2.2, 0.1}, {1.5, 1.5}, {-0.4, 2.9}};
    auto map = std::make_shared<const SparseMap>(SparseMap::bilinear_sample(coords, 3, 4));
    ParameterStore s;
    const Var x = s.add("x", random_tensor({2, 3, 4}, 8));
    CHECK(check([&] { return weighted_sum(ops::sparse_apply(x, map, {4}), 1); }, s) < 1e-5);
  }

  TEST_CASE("softmax cross-entropy toy") {
    for (std::uint64_t seed : {21u, 22u, 23u}) {
      ParameterStore s;
      // init scale keeps logits O(1); saturated logits leave only roundoff-sized gradients
      const Var x = s.add("x", random_tensor({4, 6}, seed, 0.5));
      const Var w = s.add("w", random_tensor({6, 3}, seed + 1, 0.5));
      auto fn = [&] {
        const Var p = ops::softmax(ops::matmul(x, w), 1);
        // mean negative log-likelihood of the labelled class
        double nll = 0;
        for (std::size_t i = 0; i < 4; ++i) nll -= std::log(double(p.value().at(i, i % 3)));
        return ops::custom(Tensor({1}, {Real(nll / 4)}), {p}, [p](Node& self) {
          for (std::size_t i = 0; i < 4; ++i)
            p.grad().at(i, i % 3) -= self.grad[0] / (4 * p.value().at(i, i % 3));
        });
      };
      const auto r = finite_diff_check(fn, s.all(), 1e-6);
      CHECK(r.max_rel_error < 1e-6);
    }
  }

  TEST_CASE("exact gradient of a linear scalar") {
    ParameterStore s;
    const Var x = s.add("x", random_tensor({7}, 30));
    // unit weights keep the function value O(1), so roundoff stays far below the bound
    const auto r = finite_diff_check([&] { return ops::sum(ops::scale(x, Real(3))); }, s.all(), 1e-6);
    CHECK(r.max_rel_error < 1e-9);
    CHECK(r.checked == 7);
  }

  TEST_CASE("leaf used twice accumulates") {
    const Var x(Tensor({1}, {3.0}), true);
    ops::sum(ops::mul(x, x)).backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0));
  }

  TEST_CASE("no-grad guard records nothing") {
    const Var x(Tensor({2}, {1.0, 2.0}), true);
    Var y;
    {
      NoGradGuard g;
      CHECK_FALSE(grad_enabled());
      y = ops::scale(x, 2);
    }
    CHECK(grad_enabled());
    CHECK_FALSE(y.requires_grad());
  }

  TEST_CASE("mac counter counts gemm work") {
    reset_mac_counter();
    ops::matmul(Var(random_tensor({3, 5}, 1)), Var(random_tensor({5, 2}, 2)));
    CHECK(mac_counter() == 30);
  }

  TEST_CASE("dropout") {
    const Var x(Tensor({10000}, Real(1)));
    CHECK(ops::dropout(x, Real(0.5), 1, false).node() == x.node());
    const Var a = ops::dropout(x, Real(0.25), 9, true), b = ops::dropout(x, Real(0.25), 9, true);
    CHECK(rgf::testing::bitwise_equal(a.value(), b.value()));
    double kept = 0, mean = 0;
    for (Real v : a.value().data()) {
      kept += v != 0;
      mean += v;
    }
    CHECK(kept / 10000 == doctest::Approx(0.75).epsilon(0.03));
    CHECK(mean / 10000 == doctest::Approx(1.0).epsilon(0.03));
    CHECK_THROWS_AS(ops::dropout(x, Real(1.0), 1, true), ContractError);
  }
}

TEST_SUITE("optim") {
  TEST_CASE("sgd") {
    ParameterStore s;
    Var w = s.add("w", Tensor({2}, {1.0, -1.0}));
    OptimizerConfig cfg;
    cfg.kind = OptimizerConfig::Kind::sgd;
    cfg.learning_rate = 0.1;
    Optimizer opt(cfg);
    SUBCASE("zero gradient") {
      w.grad().fill(0);
      opt.step(s.all());
      CHECK(w.value()[0] == 1.0);
    }
    SUBCASE("unit gradient") {
      w.grad().fill(1);
      opt.step(s.all());
      CHECK(w.value()[0] == doctest::Approx(0.9));
      CHECK(w.value()[1] == doctest::Approx(-1.1));
      CHECK(w.grad()[0] == 0);
    }
  }

  TEST_CASE("adam first step matches the formula") {
    ParameterStore s;
    Var w = s.add("w", Tensor({3}, {0.5, -2.0, 1.0}));
    w.grad() = Tensor({3}, {0.2, -0.7, 0.0});
    OptimizerConfig cfg;
    cfg.learning_rate = 0.01;
    Optimizer opt(cfg);
    opt.step(s.all());
    const double g[3] = {0.2, -0.7, 0.0}, w0[3] = {0.5, -2.0, 1.0};
    for (int i = 0; i < 3; ++i) {
      const double m = (1 - 0.9) * g[i], v = (1 - 0.999) * g[i] * g[i];
      const double mh = m / (1 - 0.9), vh = v / (1 - 0.999);
      CHECK(std::abs(w.value()[i] - (w0[i] - 0.01 * mh / (std::sqrt(vh) + 1e-8))) < 1e-15);
    }
  }

  TEST_CASE("non-finite gradient aborts before any update") {
    ParameterStore s;
    Var a = s.add("a", Tensor({1}, {1.0}));
    Var b = s.add("b", Tensor({1}, {2.0}));
    a.grad()[0] = 1;
    b.grad()[0] = std::numeric_limits<Real>::quiet_NaN();
    Optimizer opt(OptimizerConfig{});
    try {
      opt.step(s.all());
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("b") != std::string::npos);
    }
    CHECK(a.value()[0] == 1.0);
  }

  TEST_CASE("learning rate must be positive") {
    OptimizerConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(Optimizer{cfg}, ContractError);
    cfg.learning_rate = -1e-3;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
  }

  TEST_CASE("a corrupted backward is caught") {
    ParameterStore s;
    const Var x = s.add("x", random_tensor({4}, 3));
    auto broken = [&] {
      const Var y = ops::custom(Tensor({1}, {x.value()[0] * x.value()[0]}), {x}, [x](Node& self) {
        x.grad()[0] += self.grad[0] * x.value()[0];  // missing factor of two
      });
      return y;
    };
    CHECK(finite_diff_check(broken, s.all(), 1e-6).max_rel_error > 0.1);
  }
}
