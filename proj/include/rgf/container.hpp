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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rgf/optim.hpp"
#include "rgf/tensor.hpp"

RGF_NAMESPACE_BEGIN

// Binary tensor container ("RGTN"):
//   magic   4 bytes  "RGTN"
//   version u16      kContainerVersion
//   dtype   u8       0 = f32, 1 = f16, 2 = f64
//   rank    u8
//   extents u32[rank]
//   payload product(extents) * sizeof(dtype) bytes
// All multi-byte fields are little-endian.

enum class DType : std::uint8_t { f32 = 0, f16 = 1, f64 = 2 };

inline constexpr std::uint16_t kContainerVersion = 1;

std::size_t dtype_size(DType dtype);
std::string dtype_name(DType dtype);
DType parse_dtype(const std::string& name);

std::size_t container_header_size(std::size_t rank);
/// Exact encoded size of a tensor of `shape` at `dtype`.
std::size_t container_size(const Shape& shape, DType dtype);

std::uint16_t float_to_half(float value);
float half_to_float(std::uint16_t bits);

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor, DType dtype);

struct DecodedTensor {
  Tensor tensor;
  DType dtype;
  std::size_t bytes_consumed;
};
/// Parses one container from the front of `bytes`. Throws ContractError on a
/// bad magic, unsupported version or dtype, or a short buffer.
DecodedTensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

void save_tensor(const std::filesystem::path& path, const Tensor& tensor, DType dtype);
Tensor load_tensor(const std::filesystem::path& path);

/// Writes every parameter as consecutive containers to `<stem>.bin` plus a
/// `<stem>.json` manifest (names, shapes, dtype, offsets, and the caller's
/// `architecture` tag and `config_hash`).
void save_parameters(const std::filesystem::path& stem, const ParameterStore& store,
                     const std::string& architecture, const std::string& config_hash);

struct ParameterManifest {
  std::string architecture;
  std::string config_hash;
};
/// Loads values into an existing store whose names and shapes must match.
ParameterManifest load_parameters(const std::filesystem::path& stem, ParameterStore& store);

RGF_NAMESPACE_END
