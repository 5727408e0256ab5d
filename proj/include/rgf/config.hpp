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
#include <stdexcept>
#include <string>

// Scalar precision is fixed per build target. Test and verification targets
// use 64-bit; experiment targets define RGF_USE_FLOAT32. The inline namespace
// keeps both variants linkable into one binary.
#if defined(RGF_USE_FLOAT32)
#define RGF_PRECISION_NS p32
#else
#define RGF_PRECISION_NS p64
#endif

#define RGF_NAMESPACE_BEGIN \
  namespace rgf {           \
  inline namespace RGF_PRECISION_NS {
#define RGF_NAMESPACE_END \
  }                       \
  }

RGF_NAMESPACE_BEGIN

#if defined(RGF_USE_FLOAT32)
using Real = float;
#else
using Real = double;
#endif

/// Raised when an operation is called with arguments that violate its contract
/// (shape mismatch, invalid configuration, unsupported modality mix, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numeric computation produces non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

/// Name of the active precision, "f32" or "f64".
constexpr const char* precision_name() {
  return sizeof(Real) == 4 ? "f32" : "f64";
}

RGF_NAMESPACE_END
