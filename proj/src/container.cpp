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

#include "rgf/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

RGF_NAMESPACE_BEGIN

namespace {

constexpr char kMagic[4] = {'R', 'G', 'T', 'N'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
  U bits;
  if constexpr (sizeof(T) == 1) {
    out.push_back(static_cast<std::uint8_t>(value));
    return;
  } else {
    std::memcpy(&bits, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

template <typename T>
T get_le(const std::uint8_t* p) {
  if constexpr (sizeof(T) == 1) {
    return static_cast<T>(p[0]);
  } else {
    using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
  }
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::f32: return 4;
    case DType::f16: return 2;
    case DType::f64: return 8;
  }
  throw ContractError("unknown dtype code");
}

std::string dtype_name(DType dtype) {
  switch (dtype) {
    case DType::f32: return "f32";
    case DType::f16: return "f16";
    case DType::f64: return "f64";
  }
  throw ContractError("unknown dtype code");
}

DType parse_dtype(const std::string& name) {
  if (name == "f32") return DType::f32;
  if (name == "f16") return DType::f16;
  if (name == "f64") return DType::f64;
  throw ContractError("unknown dtype '" + name + "' (expected f16, f32 or f64)");
}

std::size_t container_header_size(std::size_t rank) { return 4 + 2 + 1 + 1 + 4 * rank; }

std::size_t container_size(const Shape& shape, DType dtype) {
  return container_header_size(shape.size()) + shape_numel(shape) * dtype_size(dtype);
}

std::uint16_t float_to_half(float value) {
  const auto x = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::uint32_t abs = x & 0x7FFFFFFFu;
  if (abs >= 0x7F800000u) {  // inf / nan
    return static_cast<std::uint16_t>(sign | 0x7C00u | (abs > 0x7F800000u ? 0x200u : 0u));
  }
  if (abs >= 0x477FF000u) return static_cast<std::uint16_t>(sign | 0x7C00u);  // overflow rounds to inf
  if (abs < 0x38800000u) {  // subnormal or zero in half
    if (abs < 0x33000000u) return static_cast<std::uint16_t>(sign);
    const std::uint32_t exp = abs >> 23;
    const std::uint32_t mant = (abs & 0x7FFFFFu) | 0x800000u;
    const std::uint32_t shift = 126 - exp;  // half subnormal unit is 2^-24
    std::uint32_t half_mant = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (half_mant & 1u))) ++half_mant;
    return static_cast<std::uint16_t>(sign | half_mant);
  }
  std::uint32_t h = ((abs - 0x38000000u) >> 13);
  const std::uint32_t rem = abs & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;
  return static_cast<std::uint16_t>(sign | h);
}

float half_to_float(std::uint16_t bits) {
  const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  const std::uint32_t exp = (bits >> 10) & 0x1Fu;
  const std::uint32_t mant = bits & 0x3FFu;
  std::uint32_t out;
  if (exp == 0) {
    if (mant == 0) {
      out = sign;
    } else {
      const float v = std::ldexp(static_cast<float>(mant), -24);
      return sign ? -v : v;
    }
  } else if (exp == 0x1F) {
    out = sign | 0x7F800000u | (mant << 13);
  } else {
    out = sign | ((exp + 112u) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(out);
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor, DType dtype) {
  require(tensor.rank() <= 255, "container rank exceeds 255");
  std::vector<std::uint8_t> out;
  out.reserve(container_size(tensor.shape(), dtype));
  out.insert(out.end(), kMagic, kMagic + 4);
  put_le<std::uint16_t>(out, kContainerVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  for (auto e : tensor.shape()) {
    require(e <= 0xFFFFFFFFu, "container extent exceeds u32");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  }
  for (auto x : tensor.data()) {
    switch (dtype) {
      case DType::f32: put_le<float>(out, static_cast<float>(x)); break;
      case DType::f16: put_le<std::uint16_t>(out, float_to_half(static_cast<float>(x))); break;
      case DType::f64: put_le<double>(out, static_cast<double>(x)); break;
    }
  }
  return out;
}

DecodedTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= container_header_size(0), "tensor container truncated (header)");
  require(std::memcmp(bytes.data(), kMagic, 4) == 0, "tensor container has bad magic");
  const auto version = get_le<std::uint16_t>(bytes.data() + 4);
  require(version == kContainerVersion, "unsupported tensor container version " + std::to_string(version));
  const std::uint8_t code = bytes[6];
  require(code <= 2, "unsupported tensor dtype code " + std::to_string(code));
  const auto dtype = static_cast<DType>(code);
  const std::size_t rank = bytes[7];
  const std::size_t header = container_header_size(rank);
  require(bytes.size() >= header, "tensor container truncated (extents)");
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_le<std::uint32_t>(bytes.data() + 8 + 4 * i);
    require(shape[i] > 0, "tensor container has a zero extent");
  }
  const std::size_t n = shape_numel(shape);
  const std::size_t esize = dtype_size(dtype);
  require(bytes.size() >= header + n * esize, "tensor container truncated (payload)");
  Tensor t(shape);
  const std::uint8_t* p = bytes.data() + header;
  for (std::size_t i = 0; i < n; ++i, p += esize) {
    switch (dtype) {
      case DType::f32: t[i] = static_cast<Real>(get_le<float>(p)); break;
      case DType::f16: t[i] = static_cast<Real>(half_to_float(get_le<std::uint16_t>(p))); break;
      case DType::f64: t[i] = static_cast<Real>(get_le<double>(p)); break;
    }
  }
  return {std::move(t), dtype, header + n * esize};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), {});
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor, DType dtype) {
  write_bytes(path, encode_tensor(tensor, dtype));
}

Tensor load_tensor(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return decode_tensor(bytes).tensor;
}

void save_parameters(const std::filesystem::path& stem, const ParameterStore& store,
                     const std::string& architecture, const std::string& config_hash) {
  const DType dtype = sizeof(Real) == 4 ? DType::f32 : DType::f64;
  std::vector<std::uint8_t> blob;
  nlohmann::ordered_json manifest;
  manifest["format"] = "rgtn-params";
  manifest["architecture"] = architecture;
  manifest["config_hash"] = config_hash;
  manifest["dtype"] = dtype_name(dtype);
  manifest["tensors"] = nlohmann::ordered_json::array();
  for (const auto& p : store.all()) {
    const auto bytes = encode_tensor(p.value(), dtype);
    manifest["tensors"].push_back({{"name", p.name},
                                   {"shape", p.value().shape()},
                                   {"offset", blob.size()},
                                   {"length", bytes.size()},
                                   {"trainable", p.trainable}});
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  auto bin = stem;
  bin += ".bin";
  auto json_path = stem;
  json_path += ".json";
  write_bytes(bin, blob);
  const std::string text = manifest.dump(2) + "\n";
  write_bytes(json_path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ParameterManifest load_parameters(const std::filesystem::path& stem, ParameterStore& store) {
  auto bin = stem;
  bin += ".bin";
  auto json_path = stem;
  json_path += ".json";
  const auto text = read_bytes(json_path);
  const auto manifest = nlohmann::json::parse(text.begin(), text.end());
  const auto blob = read_bytes(bin);
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name");
    Parameter& p = store.get(name);
    const std::size_t offset = entry.at("offset");
    const std::size_t length = entry.at("length");
    require(offset + length <= blob.size(), "parameter blob truncated at '" + name + "'");
    auto decoded = decode_tensor(std::span(blob).subspan(offset, length));
    require(decoded.tensor.shape() == p.value().shape(),
            "parameter '" + name + "' has shape " + shape_to_string(decoded.tensor.shape()) + ", expected " +
                shape_to_string(p.value().shape()));
    p.value() = std::move(decoded.tensor);
  }
  require(manifest.at("tensors").size() == store.all().size(), "parameter manifest does not cover the model");
  return {manifest.at("architecture"), manifest.at("config_hash")};
}

RGF_NAMESPACE_END
