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
#include <span>
#include <vector>

#include "rgf/container.hpp"
#include "rgf/geometry.hpp"

RGF_NAMESPACE_BEGIN

enum class PayloadKind : std::uint8_t { bev_feature = 0, camera_feature = 1 };

std::string to_string(PayloadKind kind);

/// One cooperative feature message. The body is a tensor container,
/// DEFLATE-compressed when `compressed` is set. See docs/wire_format.md.
struct V2XMessage {
  std::uint32_t agent_id = 0;
  std::uint64_t frame_id = 0;
  Pose2 pose;
  PayloadKind kind = PayloadKind::bev_feature;
  std::uint8_t rig_index = 0;
  Shape shape;
  DType dtype = DType::f16;
  bool compressed = false;
  std::vector<std::uint8_t> body;
};

struct PayloadStats {
  std::size_t raw_bytes = 0;   // uncompressed container size
  std::size_t sent_bytes = 0;  // body bytes on the wire
  double compression_ratio = 0.0;  // 1 - sent / raw
};

struct EncodedPayload {
  V2XMessage message;
  PayloadStats stats;
};

struct PayloadMeta {
  std::uint32_t agent_id = 0;
  std::uint64_t frame_id = 0;
  Pose2 pose;
  std::uint8_t rig_index = 0;
};

/// Throws on non-finite values. When DEFLATE would not shrink the body the
/// message is sent uncompressed and the ratio is 0.
EncodedPayload encode_payload(const Tensor& tensor, PayloadKind kind, DType precision, bool compress,
                              const PayloadMeta& meta = {});
/// Exact inverse at the declared precision. Throws on inconsistent headers or
/// a body of the wrong length.
Tensor decode_payload(const V2XMessage& message);

inline constexpr char kMessageMagic[4] = {'V', '2', 'X', 'M'};
inline constexpr std::uint16_t kMessageVersion = 1;

/// Size of the fixed-order message header for a tensor of the given rank.
std::size_t message_header_size(std::size_t rank);
std::vector<std::uint8_t> serialize_message(const V2XMessage& message);
V2XMessage parse_message(std::span<const std::uint8_t> bytes);

/// Keeps the first ceil(C / keep_fraction_den) channels of a [C x ...] map;
/// stands in for a learned channel compressor without any accuracy claim.
Tensor truncate_channels(const Tensor& map, std::size_t keep_fraction_den = 32);

RGF_NAMESPACE_END
