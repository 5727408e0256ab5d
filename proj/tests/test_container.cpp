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
#include <cstring>
#include <filesystem>
#include <limits>

#include "rgf/container.hpp"
#include "test_util.hpp"

using namespace rgf;
using rgf::testing::random_tensor;

TEST_SUITE("container") {
  TEST_CASE("half precision known values") {
    CHECK(float_to_half(0.0f) == 0x0000);
    CHECK(float_to_half(-0.0f) == 0x8000);
    CHECK(float_to_half(1.0f) == 0x3c00);
    CHECK(float_to_half(-2.0f) == 0xc000);
    CHECK(float_to_half(65504.0f) == 0x7bff);
    CHECK(float_to_half(1e6f) == 0x7c00);  // overflow saturates to inf
    CHECK(float_to_half(std::ldexp(1.0f, -24)) == 0x0001);  // smallest subnormal
    CHECK(float_to_half(1.0f + std::ldexp(1.0f, -11)) == 0x3c00);  // tie rounds to even
    CHECK(float_to_half(1.0f + 3 * std::ldexp(1.0f, -11)) == 0x3c02);
    CHECK(half_to_float(0x3555) == 0.333251953125f);
    CHECK(std::isinf(half_to_float(0x7c00)));
    CHECK(std::isnan(half_to_float(0x7e00)));
    for (std::uint32_t b = 0; b < 0x7c00; ++b) CHECK_MESSAGE(float_to_half(half_to_float(std::uint16_t(b))) == b, b);
  }

  TEST_CASE("round trips") {
    const Tensor t = random_tensor({3, 5, 2}, 4);
    SUBCASE("f64 is exact") {
      const auto bytes = encode_tensor(t, DType::f64);
      CHECK(bytes.size() == container_size(t.shape(), DType::f64));
      const auto d = decode_tensor(bytes);
      CHECK(d.dtype == DType::f64);
      CHECK(rgf::testing::bitwise_equal(d.tensor, t));
    }
    SUBCASE("f32 rounds each value once") {
      const auto d = decode_tensor(encode_tensor(t, DType::f32));
      for (std::size_t i = 0; i < t.numel(); ++i) CHECK(d.tensor[i] == Real(float(t[i])));
    }
    SUBCASE("f16 relative error within half an ulp") {
      const auto d = decode_tensor(encode_tensor(t, DType::f16));
      for (std::size_t i = 0; i < t.numel(); ++i)
        CHECK(std::abs(d.tensor[i] - t[i]) <= std::ldexp(std::abs(double(t[i])), -11) + 1e-7);
    }
    SUBCASE("header layout") {
      const auto bytes = encode_tensor(t, DType::f32);
      CHECK(std::memcmp(bytes.data(), "RGTN", 4) == 0);
      CHECK(bytes[4] == 1);
      CHECK(bytes[5] == 0);
      CHECK(bytes[6] == 0);  // f32
      CHECK(bytes[7] == 3);  // rank
      CHECK(bytes[8] == 3);
      CHECK(container_header_size(3) == 8 + 12);
    }
  }

  TEST_CASE("rejects malformed input") {
    auto bytes = encode_tensor(random_tensor({4}, 1), DType::f32);
    SUBCASE("bad magic") {
      bytes[0] = 'X';
      CHECK_THROWS_AS(decode_tensor(bytes), ContractError);
    }
    SUBCASE("short buffer") {
      bytes.pop_back();
      CHECK_THROWS_AS(decode_tensor(bytes), ContractError);
    }
    SUBCASE("unknown dtype") {
      bytes[6] = 9;
      CHECK_THROWS_AS(decode_tensor(bytes), ContractError);
    }
    SUBCASE("unsupported version") {
      bytes[4] = 7;
      CHECK_THROWS_AS(decode_tensor(bytes), ContractError);
    }
    CHECK_THROWS_AS(parse_dtype("f8"), ContractError);
  }

  TEST_CASE("parameter files") {
    const auto dir = std::filesystem::temp_directory_path() / "rgf_container_test";
    std::filesystem::create_directories(dir);
    ParameterStore a;
    a.add("w", random_tensor({3, 4}, 1));
    a.add("b", random_tensor({4}, 2));
    save_parameters(dir / "p", a, "ptp", "abc123");
    CHECK(std::filesystem::exists(dir / "p.bin"));
    CHECK(std::filesystem::exists(dir / "p.json"));

    ParameterStore b;
    b.add("w", Tensor({3, 4}));
    b.add("b", Tensor({4}));
    const auto m = load_parameters(dir / "p", b);
    CHECK(m.architecture == "ptp");
    CHECK(m.config_hash == "abc123");
    CHECK(rgf::testing::bitwise_equal(b.get("w").value(), a.get("w").value()));
    CHECK(rgf::testing::bitwise_equal(b.get("b").value(), a.get("b").value()));

    ParameterStore wrong;
    wrong.add("w", Tensor({4, 3}));
    wrong.add("b", Tensor({4}));
    CHECK_THROWS_AS(load_parameters(dir / "p", wrong), ContractError);
    std::filesystem::remove_all(dir);
  }
}
