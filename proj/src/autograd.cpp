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

#include "rgf/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "rgf/sparse_map.hpp"

RGF_NAMESPACE_BEGIN

namespace {

thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_mac_counter = 0;

using BackwardFn = std::function<void(Node&)>;

Var make_result(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& in : inputs)
    if (in.requires_grad()) node.parents.push_back(in.node());
  node.backward_fn = std::move(fn);
  return out;
}

Var make_result(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& in : inputs)
    if (in.requires_grad()) node.parents.push_back(in.node());
  node.backward_fn = std::move(fn);
  return out;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.defined() && b.defined(), std::string(op) + ": undefined operand");
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                                      " vs " + shape_to_string(b.shape()));
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() const {
  if (node_ && !node_->grad.empty()) node_->grad.fill(Real(0));
}

void Var::backward() const {
  require(defined() && numel() == 1, "backward() needs a scalar root");
  if (!node_->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Release interior gradients; leaves keep theirs for the optimizer.
  for (Node* n : order)
    if (n->backward_fn && n != node_.get()) n->grad = Tensor();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

std::uint64_t mac_counter() { return g_mac_counter; }
void reset_mac_counter() { g_mac_counter = 0; }

void add_macs(std::uint64_t count) { g_mac_counter += count; }

double dropout_uniform(std::uint64_t seed, std::uint64_t index) {
  // One hash feeds four consecutive elements, 16 bits each.
  const std::uint64_t h = mix_seed(seed, index >> 2);
  return static_cast<double>((h >> (16 * (index & 3))) & 0xFFFFu) * 0x1.0p-16;
}

void gemm_accumulate(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                     const Real* a, const Real* b, Real* c) {
  g_mac_counter += static_cast<std::uint64_t>(m) * n * k;
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      Real* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const Real aip = a[i * k + p];
        const Real* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const Real* arow = a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const Real* brow = b + j * k;
        Real acc = 0;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        c[i * n + j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < k; ++p) {
      const Real* arow = a + p * m;
      const Real* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const Real api = arow[i];
        Real* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        Real acc = 0;
        for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        c[i * n + j] += acc;
      }
  }
}

namespace ops {

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    for (const Var* v : {&a, &b}) {
      if (!v->requires_grad()) continue;
      Tensor& g = v->grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) {
      Tensor& g = a.grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (b.requires_grad()) {
      Tensor& g = b.grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) {
      Tensor& g = a.grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      Tensor& g = b.grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * a.value()[i];
    }
  });
}

Var scale(const Var& a, Real s) {
  Tensor out = a.value();
  for (auto& x : out.data()) x *= s;
  return make_result(std::move(out), {a}, [a, s](Node& self) {
    Tensor& g = a.grad();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_const(const Var& a, const Tensor& c) {
  require(a.shape() == c.shape(), "add_const: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c[i];
  return make_result(std::move(out), {a}, [a](Node& self) {
    Tensor& g = a.grad();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

Var sum(const Var& a) {
  Real acc = 0;
  for (auto x : a.value().data()) acc += x;
  return make_result(Tensor({1}, {acc}), {a}, [a](Node& self) {
    Tensor& g = a.grad();
    const Real s = self.grad[0];
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s;
  });
}

Var matmul(const Var& a, const Var& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2 && a.dim(1) == b.dim(0),
          "matmul shape mismatch " + shape_to_string(a.shape()) + " * " + shape_to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  gemm_accumulate(false, false, m, n, k, a.value().ptr(), b.value().ptr(), out.ptr());
  return make_result(std::move(out), {a, b}, [a, b, m, n, k](Node& self) {
    if (a.requires_grad()) gemm_accumulate(false, true, m, k, n, self.grad.ptr(), b.value().ptr(), a.grad().ptr());
    if (b.requires_grad()) gemm_accumulate(true, false, k, n, m, a.value().ptr(), self.grad.ptr(), b.grad().ptr());
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require(x.value().rank() == 2 && w.value().rank() == 2 && x.dim(1) == w.dim(0),
          "linear: shape mismatch " + shape_to_string(x.shape()) + " * " + shape_to_string(w.shape()));
  const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(1);
  if (b.defined())
    require(b.value().rank() == 1 && b.dim(0) == dout, "linear: bias must be [" + std::to_string(dout) + "]");
  Tensor out({n, dout});
  if (b.defined())
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t o = 0; o < dout; ++o) out[r * dout + o] = b.value()[o];
  gemm_accumulate(false, false, n, dout, din, x.value().ptr(), w.value().ptr(), out.ptr());
  return make_result(std::move(out), {x, w, b}, [x, w, b, n, din, dout](Node& self) {
    if (x.requires_grad()) gemm_accumulate(false, true, n, din, dout, self.grad.ptr(), w.value().ptr(), x.grad().ptr());
    if (w.requires_grad()) gemm_accumulate(true, false, din, dout, n, x.value().ptr(), self.grad.ptr(), w.grad().ptr());
    if (b.requires_grad()) {
      Tensor& gb = b.grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < dout; ++o) gb[o] += self.grad[r * dout + o];
    }
  });
}

Var channel_linear(const Var& x, const Var& w, const Var& b) {
  require(x.value().rank() >= 1 && w.value().rank() == 2 && x.dim(0) == w.dim(0),
          "channel_linear: shape mismatch " + shape_to_string(x.shape()) + " with weight " +
              shape_to_string(w.shape()));
  const std::size_t cin = w.dim(0), cout = w.dim(1);
  const std::size_t n = x.numel() / cin;
  if (b.defined())
    require(b.value().rank() == 1 && b.dim(0) == cout, "channel_linear: bias must be [" + std::to_string(cout) + "]");
  Shape shape = x.shape();
  shape[0] = cout;
  Tensor out(shape);
  if (b.defined())
    for (std::size_t o = 0; o < cout; ++o)
      std::fill(out.ptr() + o * n, out.ptr() + (o + 1) * n, b.value()[o]);
  gemm_accumulate(true, false, cout, n, cin, w.value().ptr(), x.value().ptr(), out.ptr());
  return make_result(std::move(out), {x, w, b}, [x, w, b, cin, cout, n](Node& self) {
    if (x.requires_grad()) gemm_accumulate(false, false, cin, n, cout, w.value().ptr(), self.grad.ptr(), x.grad().ptr());
    if (w.requires_grad()) gemm_accumulate(false, true, cin, cout, n, x.value().ptr(), self.grad.ptr(), w.grad().ptr());
    if (b.requires_grad()) {
      Tensor& gb = b.grad();
      for (std::size_t o = 0; o < cout; ++o) {
        Real acc = 0;
        for (std::size_t i = 0; i < n; ++i) acc += self.grad[o * n + i];
        gb[o] += acc;
      }
    }
  });
}

Var bmm(const Var& a, const Var& b, bool transpose_b) {
  require(a.value().rank() == 3 && b.value().rank() == 3 && a.dim(0) == b.dim(0),
          "bmm: expects matching [B x M x K] operands");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  require((transpose_b ? b.dim(2) : b.dim(1)) == k,
          "bmm: inner extent mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  Tensor out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i)
    gemm_accumulate(false, transpose_b, m, n, k, a.value().ptr() + i * m * k, b.value().ptr() + i * k * n,
                    out.ptr() + i * m * n);
  return make_result(std::move(out), {a, b}, [a, b, transpose_b, batch, m, n, k](Node& self) {
    for (std::size_t i = 0; i < batch; ++i) {
      const Real* g = self.grad.ptr() + i * m * n;
      const Real* av = a.value().ptr() + i * m * k;
      const Real* bv = b.value().ptr() + i * k * n;
      if (a.requires_grad()) {
        // dA = G * op(B)^T
        gemm_accumulate(false, !transpose_b, m, k, n, g, bv, a.grad().ptr() + i * m * k);
      }
      if (b.requires_grad()) {
        if (transpose_b)  // dB [N x K] = G^T * A
          gemm_accumulate(true, false, n, k, m, g, av, b.grad().ptr() + i * k * n);
        else  // dB [K x N] = A^T * G
          gemm_accumulate(true, false, k, n, m, av, g, b.grad().ptr() + i * k * n);
      }
    }
  });
}

Var softmax(const Var& x, std::size_t axis) {
  Tensor y = rgf::softmax(x.value(), axis);
  std::size_t outer = 1, inner = 1;
  const std::size_t len = x.dim(axis);
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.value().rank(); ++i) inner *= x.dim(i);
  return make_result(std::move(y), {x}, [x, outer, inner, len](Node& self) {
    Tensor& gx = x.grad();
    const Tensor& y = self.value;
    const Tensor& gy = self.grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        Real dot = 0;
        for (std::size_t l = 0; l < len; ++l) dot += gy[base + l * inner] * y[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t idx = base + l * inner;
          gx[idx] += y[idx] * (gy[idx] - dot);
        }
      }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [x](Node& self) {
    Tensor& g = x.grad();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

namespace {

// Gathers `src` into permuted order; when `adjoint`, scatters back instead.
void permute_copy(const Real* src, Real* dst, const Shape& in_shape, const std::vector<std::size_t>& perm,
                  bool adjoint) {
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> stride_of_out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[perm[i]];
    stride_of_out[i] = in_strides[perm[i]];
  }
  const std::size_t total = shape_numel(in_shape);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t in_off = 0;
  const std::size_t last = rank - 1;
  for (std::size_t out_off = 0; out_off < total;) {
    // Inner loop over the last output axis.
    const std::size_t n = out_shape[last];
    const std::size_t s = stride_of_out[last];
    if (adjoint)
      for (std::size_t j = 0; j < n; ++j) dst[in_off + j * s] += src[out_off + j];
    else
      for (std::size_t j = 0; j < n; ++j) dst[out_off + j] = src[in_off + j * s];
    out_off += n;
    for (std::size_t ax = last; ax-- > 0;) {
      ++idx[ax];
      in_off += stride_of_out[ax];
      if (idx[ax] < out_shape[ax]) break;
      in_off -= stride_of_out[ax] * out_shape[ax];
      idx[ax] = 0;
    }
  }
}

}  // namespace

Var permute(const Var& x, const std::vector<std::size_t>& perm) {
  const Shape& in_shape = x.shape();
  require(perm.size() == in_shape.size(), "permute: rank mismatch");
  std::vector<bool> used(perm.size(), false);
  for (auto p : perm) {
    require(p < perm.size() && !used[p], "permute: invalid permutation");
    used[p] = true;
  }
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  Tensor out(out_shape);
  permute_copy(x.value().ptr(), out.ptr(), in_shape, perm, false);
  return make_result(std::move(out), {x}, [x, perm](Node& self) {
    permute_copy(self.grad.ptr(), x.grad().ptr(), x.shape(), perm, true);
  });
}

Var sparse_apply(const Var& x, std::shared_ptr<const SparseMap> map, const Shape& out_spatial) {
  require(x.value().rank() >= 2, "sparse_apply: expects [C x spatial...]");
  const std::size_t channels = x.dim(0);
  require(x.numel() == channels * map->in_size(), "sparse_apply: input spatial size does not match map");
  require(shape_numel(out_spatial) == map->out_size(), "sparse_apply: output shape does not match map");
  Shape shape{channels};
  shape.insert(shape.end(), out_spatial.begin(), out_spatial.end());
  Tensor out(shape);
  map->apply(x.value().ptr(), out.ptr(), channels);
  return make_result(std::move(out), {x}, [x, map, channels](Node& self) {
    map->apply_adjoint(self.grad.ptr(), x.grad().ptr(), channels);
  });
}

Var concat0(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat0: no inputs");
  Shape shape = parts.front().shape();
  std::size_t lead = 0;
  for (const auto& p : parts) {
    require(p.value().rank() == shape.size(), "concat0: rank mismatch");
    for (std::size_t i = 1; i < shape.size(); ++i)
      require(p.dim(i) == shape[i], "concat0: trailing extents must match");
    lead += p.dim(0);
  }
  shape[0] = lead;
  Tensor out(shape);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.ptr() + off);
    off += p.numel();
  }
  return make_result(std::move(out), parts, [parts](Node& self) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) {
        Tensor& g = p.grad();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[off + i];
      }
      off += p.numel();
    }
  });
}

Var select0(const Var& x, std::size_t i) {
  require(x.value().rank() >= 2 && i < x.dim(0), "select0: index out of range");
  Shape shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t n = shape_numel(shape);
  Tensor out(shape, std::vector<Real>(x.value().ptr() + i * n, x.value().ptr() + (i + 1) * n));
  return make_result(std::move(out), {x}, [x, i, n](Node& self) {
    Real* g = x.grad().ptr() + i * n;
    for (std::size_t k = 0; k < n; ++k) g[k] += self.grad[k];
  });
}

Var mul_broadcast0(const Var& x, const Var& w) {
  const std::size_t n = w.numel();
  require(x.value().rank() >= 2 && x.numel() == x.dim(0) * n, "mul_broadcast0: trailing extents mismatch");
  const std::size_t c = x.dim(0);
  Tensor out = x.value();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < n; ++i) out[ch * n + i] *= w.value()[i];
  return make_result(std::move(out), {x, w}, [x, w, c, n](Node& self) {
    if (x.requires_grad()) {
      Tensor& g = x.grad();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) g[ch * n + i] += self.grad[ch * n + i] * w.value()[i];
    }
    if (w.requires_grad()) {
      Tensor& g = w.grad();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[ch * n + i] * x.value()[ch * n + i];
    }
  });
}

Var add_broadcast0(const Var& x, const Var& p) {
  const std::size_t n = p.numel();
  require(x.value().rank() >= 2 && x.numel() == x.dim(0) * n, "add_broadcast0: trailing extents mismatch");
  const std::size_t b = x.dim(0);
  Tensor out = x.value();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < n; ++k) out[i * n + k] += p.value()[k];
  return make_result(std::move(out), {x, p}, [x, p, b, n](Node& self) {
    if (x.requires_grad()) {
      Tensor& g = x.grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (p.requires_grad()) {
      Tensor& g = p.grad();
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t k = 0; k < n; ++k) g[k] += self.grad[i * n + k];
    }
  });
}

Var dropout(const Var& x, Real rate, std::uint64_t seed, bool training) {
  require(rate >= 0 && rate < 1, "dropout rate must be in [0, 1)");
  if (!training || rate == Real(0)) return x;
  Tensor mask(x.shape());
  const Real keep = Real(1) / (Real(1) - rate);
  for (std::size_t i = 0; i < mask.numel(); ++i) mask[i] = dropout_uniform(seed, i) < rate ? Real(0) : keep;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  return make_result(std::move(out), {x}, [x, mask = std::move(mask)](Node& self) {
    Tensor& g = x.grad();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

Var custom(Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> backward) {
  return make_result(std::move(value), inputs, std::move(backward));
}

}  // namespace ops

RGF_NAMESPACE_END
