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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rgf/tensor.hpp"

RGF_NAMESPACE_BEGIN

class SparseMap;

/// A recorded value on the tape. Gradients are allocated on first use.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
};

/// Handle to a tape node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Gradient accumulated so far; allocated (zeros) on first access.
  Tensor& grad() const { return node_->grad_buffer(); }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  void zero_grad() const;

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate.
  void backward() const;

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Multiply-accumulate count of all matrix products executed on this thread.
std::uint64_t mac_counter();
void reset_mac_counter();
/// Adds to the counter for fused kernels that bypass gemm_accumulate.
void add_macs(std::uint64_t count);

/// Uniform [0, 1) draw at 16-bit resolution for element `index` of a dropout
/// mask. A pure function of (seed, index), so fused kernels can rebuild masks
/// without storing them.
double dropout_uniform(std::uint64_t seed, std::uint64_t index);

/// C += op(A) * op(B), row-major; op(A) is M x K, op(B) is K x N.
void gemm_accumulate(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                     const Real* a, const Real* b, Real* c);

namespace ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);
/// a + c where c is a constant of the same shape.
Var add_const(const Var& a, const Tensor& c);
Var sum(const Var& a);

/// [M x K] * [K x N].
Var matmul(const Var& a, const Var& b);
/// x [N x Din] * w [Din x Dout] + b [Dout]; `b` may be undefined.
Var linear(const Var& x, const Var& w, const Var& b);
/// 1x1 projection over the leading axis: x [Cin x ...] with w [Cin x Cout] and
/// b [Cout] (optional) gives [Cout x ...].
Var channel_linear(const Var& x, const Var& w, const Var& b);
/// Batched product: a [B x M x K], b [B x K x N] (or [B x N x K] when
/// `transpose_b`).
Var bmm(const Var& a, const Var& b, bool transpose_b = false);

Var softmax(const Var& x, std::size_t axis);
Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& perm);

/// Applies a spatial linear map to every leading-axis slice:
/// x [C x in...] -> [C x out_shape...].
Var sparse_apply(const Var& x, std::shared_ptr<const SparseMap> map, const Shape& out_spatial);

/// Concatenation along axis 0.
Var concat0(const std::vector<Var>& parts);
/// Slice i of axis 0 (the axis is dropped).
Var select0(const Var& x, std::size_t i);
/// x [C x ...] scaled per position by w [...] (broadcast over axis 0).
Var mul_broadcast0(const Var& x, const Var& w);
/// x [B x ...] plus p [...] added to every leading slice.
Var add_broadcast0(const Var& x, const Var& p);
/// Inverted dropout with a mask drawn from `seed`; identity when !training or
/// rate == 0.
Var dropout(const Var& x, Real rate, std::uint64_t seed, bool training);

/// Records a fused op computed outside this namespace. `backward` reads
/// self.grad and accumulates into the inputs' grad() buffers.
Var custom(Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> backward);

}  // namespace ops

RGF_NAMESPACE_END
