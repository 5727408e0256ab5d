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

#include "rgf/payload.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>

RGF_NAMESPACE_BEGIN

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  require(pos + sizeof(T) <= bytes.size(), "V2X message truncated (header)");
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

std::string to_string(PayloadKind kind) {
  return kind == PayloadKind::bev_feature ? "bev_feature" : "camera_feature";
}

EncodedPayload encode_payload(const Tensor& tensor, PayloadKind kind, DType precision, bool compress,
                              const PayloadMeta& meta) {
  require(tensor.all_finite(), "encode_payload: tensor holds non-finite values");
  require(precision == DType::f32 || precision == DType::f16, "encode_payload: precision must be f32 or f16");
  EncodedPayload out;
  V2XMessage& m = out.message;
  m.agent_id = meta.agent_id;
  m.frame_id = meta.frame_id;
  m.pose = meta.pose;
  m.kind = kind;
  m.rig_index = meta.rig_index;
  m.shape = tensor.shape();
  m.dtype = precision;
  std::vector<std::uint8_t> raw = encode_tensor(tensor, precision);
  out.stats.raw_bytes = raw.size();
  if (compress) {
    uLongf len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> packed(len);
    const int rc = compress2(packed.data(), &len, raw.data(), static_cast<uLong>(raw.size()), Z_DEFAULT_COMPRESSION);
    if (rc != Z_OK) throw NumericError("encode_payload: DEFLATE failed with code " + std::to_string(rc));
    if (len < raw.size()) {
      packed.resize(len);
      m.body = std::move(packed);
      m.compressed = true;
    }
  }
  if (!m.compressed) m.body = std::move(raw);
  out.stats.sent_bytes = m.body.size();
  out.stats.compression_ratio =
      m.compressed ? 1.0 - double(out.stats.sent_bytes) / double(out.stats.raw_bytes) : 0.0;
  return out;
}

Tensor decode_payload(const V2XMessage& message) {
  const std::size_t raw_size = container_size(message.shape, message.dtype);
  std::vector<std::uint8_t> raw;
  std::span<const std::uint8_t> container(message.body);
  if (message.compressed) {
    raw.resize(raw_size);
    uLongf len = static_cast<uLongf>(raw_size);
    const int rc = uncompress(raw.data(), &len, message.body.data(), static_cast<uLong>(message.body.size()));
    require(rc == Z_OK, "decode_payload: corrupt compressed body (zlib code " + std::to_string(rc) + ")");
    require(len == raw_size, "decode_payload: decompressed length does not match the declared shape");
    container = raw;
  } else {
    require(message.body.size() == raw_size, "decode_payload: body length " + std::to_string(message.body.size()) +
                                                 " does not match the declared shape (" + std::to_string(raw_size) +
                                                 ")");
  }
  DecodedTensor d = decode_tensor(container);
  require(d.bytes_consumed == container.size(), "decode_payload: trailing bytes after the tensor");
  require(d.dtype == message.dtype && d.tensor.shape() == message.shape,
          "decode_payload: header shape or dtype disagrees with the body");
  return std::move(d.tensor);
}

std::size_t message_header_size(std::size_t rank) {
  // magic, version, agent, frame, pose, kind, rig, dtype, compressed, rank,
  // extents, body length
  return 4 + 2 + 4 + 8 + 3 * 8 + 1 + 1 + 1 + 1 + 1 + 4 * rank + 8;
}

std::vector<std::uint8_t> serialize_message(const V2XMessage& m) {
  require(m.shape.size() <= 255, "serialize_message: rank exceeds 255");
  std::vector<std::uint8_t> out;
  out.reserve(message_header_size(m.shape.size()) + m.body.size());
  out.insert(out.end(), kMessageMagic, kMessageMagic + 4);
  put_le<std::uint16_t>(out, kMessageVersion);
  put_le<std::uint32_t>(out, m.agent_id);
  put_le<std::uint64_t>(out, m.frame_id);
  put_le<double>(out, m.pose.x);
  put_le<double>(out, m.pose.y);
  put_le<double>(out, m.pose.yaw);
  out.push_back(static_cast<std::uint8_t>(m.kind));
  out.push_back(m.rig_index);
  out.push_back(static_cast<std::uint8_t>(m.dtype));
  out.push_back(m.compressed ? 1 : 0);
  out.push_back(static_cast<std::uint8_t>(m.shape.size()));
  for (auto e : m.shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  put_le<std::uint64_t>(out, m.body.size());
  out.insert(out.end(), m.body.begin(), m.body.end());
  return out;
}

V2XMessage parse_message(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 4 && std::memcmp(bytes.data(), kMessageMagic, 4) == 0, "V2X message has bad magic");
  std::size_t pos = 4;
  const auto version = get_le<std::uint16_t>(bytes, pos);
  require(version == kMessageVersion, "unsupported V2X message version " + std::to_string(version));
  V2XMessage m;
  m.agent_id = get_le<std::uint32_t>(bytes, pos);
  m.frame_id = get_le<std::uint64_t>(bytes, pos);
  const double x = get_le<double>(bytes, pos);
  const double y = get_le<double>(bytes, pos);
  const double yaw = get_le<double>(bytes, pos);
  m.pose = Pose2(x, y, yaw);
  const auto kind = get_le<std::uint8_t>(bytes, pos);
  require(kind <= 1, "V2X message has unknown payload kind " + std::to_string(kind));
  m.kind = static_cast<PayloadKind>(kind);
  m.rig_index = get_le<std::uint8_t>(bytes, pos);
  const auto dtype = get_le<std::uint8_t>(bytes, pos);
  require(dtype <= 2, "V2X message has unknown dtype " + std::to_string(dtype));
  m.dtype = static_cast<DType>(dtype);
  const auto flag = get_le<std::uint8_t>(bytes, pos);
  require(flag <= 1, "V2X message has an invalid compression flag");
  m.compressed = flag == 1;
  const auto rank = get_le<std::uint8_t>(bytes, pos);
  for (std::size_t i = 0; i < rank; ++i) m.shape.push_back(get_le<std::uint32_t>(bytes, pos));
  const auto body_len = get_le<std::uint64_t>(bytes, pos);
  require(bytes.size() - pos == body_len, "V2X message body length " + std::to_string(bytes.size() - pos) +
                                              " does not match the header (" + std::to_string(body_len) + ")");
  m.body.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return m;
}

Tensor truncate_channels(const Tensor& map, std::size_t keep_fraction_den) {
  require(map.rank() >= 1 && keep_fraction_den > 0, "truncate_channels: invalid input");
  const std::size_t c = map.dim(0);
  const std::size_t keep = (c + keep_fraction_den - 1) / keep_fraction_den;
  Shape shape = map.shape();
  shape[0] = keep;
  const std::size_t slice = map.numel() / c;
  Tensor out(shape);
  std::copy(map.ptr(), map.ptr() + keep * slice, out.ptr());
  return out;
}

RGF_NAMESPACE_END
