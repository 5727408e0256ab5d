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

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rgf/autograd.hpp"

RGF_NAMESPACE_BEGIN

struct Parameter {
  std::string name;
  Var var;
  bool trainable = true;

  Tensor& value() { return var.mutable_value(); }
  const Tensor& value() const { return var.value(); }
  Tensor& grad() const { return var.grad(); }
};

/// Ordered, named collection of parameters. Registration order is the
/// serialization order and the gradient-reduction order.
class ParameterStore {
 public:
  Var add(std::string name, Tensor init, bool trainable = true);
  const Parameter& get(const std::string& name) const;
  Parameter& get(const std::string& name);
  bool contains(const std::string& name) const;
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t total_elements() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

struct OptimizerConfig {
  enum class Kind { sgd, adam };
  Kind kind = Kind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// SGD or Adam over a fixed parameter list. Gradients are zeroed after each
/// step; a non-finite gradient aborts the step before any value changes.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);
  void step(std::span<Parameter> params);
  std::size_t steps_taken() const noexcept { return t_; }
  const OptimizerConfig& config() const noexcept { return config_; }

 private:
  OptimizerConfig config_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares the tape gradient of scalar `fn` against central differences over
/// every element of `params`. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8).
GradCheckResult finite_diff_check(const std::function<Var()>& fn, std::span<Parameter> params,
                                  double epsilon);

RGF_NAMESPACE_END
