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

#include "rgf/optim.hpp"

#include <algorithm>
#include <cmath>

RGF_NAMESPACE_BEGIN

Var ParameterStore::add(std::string name, Tensor init, bool trainable) {
  require(!contains(name), "duplicate parameter name '" + name + "'");
  Var v(std::move(init), trainable);
  params_.push_back(Parameter{std::move(name), v, trainable});
  return v;
}

const Parameter& ParameterStore::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("unknown parameter '" + name + "'");
}

Parameter& ParameterStore::get(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("unknown parameter '" + name + "'");
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value().numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void OptimizerConfig::validate() const {
  require(learning_rate > 0 && std::isfinite(learning_rate), "learning_rate must be positive");
  if (kind == Kind::adam) {
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "adam betas must be in [0, 1)");
    require(epsilon > 0, "adam epsilon must be positive");
  }
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::step(std::span<Parameter> params) {
  for (const auto& p : params) {
    if (!p.trainable || !p.var.has_grad()) continue;
    if (!p.var.grad().all_finite()) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
  }
  if (config_.kind == OptimizerConfig::Kind::adam && m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.emplace_back(p.value().shape());
      v_.emplace_back(p.value().shape());
    }
  }
  ++t_;
  const double lr = config_.learning_rate;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.trainable || !p.var.has_grad()) continue;
    Tensor& value = p.value();
    const Tensor& grad = p.grad();
    if (config_.kind == OptimizerConfig::Kind::sgd) {
      for (std::size_t i = 0; i < value.numel(); ++i) value[i] -= static_cast<Real>(lr * grad[i]);
    } else {
      const double b1 = config_.beta1, b2 = config_.beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
      Tensor& m = m_[k];
      Tensor& v = v_[k];
      for (std::size_t i = 0; i < value.numel(); ++i) {
        const double g = grad[i];
        m[i] = static_cast<Real>(b1 * m[i] + (1.0 - b1) * g);
        v[i] = static_cast<Real>(b2 * v[i] + (1.0 - b2) * g * g);
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        value[i] -= static_cast<Real>(lr * mhat / (std::sqrt(vhat) + config_.epsilon));
      }
    }
    p.var.zero_grad();
  }
}

GradCheckResult finite_diff_check(const std::function<Var()>& fn, std::span<Parameter> params,
                                  double epsilon) {
  require(epsilon > 0, "finite_diff_check: epsilon must be positive");
  for (auto& p : params) p.var.zero_grad();
  Var loss = fn();
  require(loss.numel() == 1, "finite_diff_check: fn must return a scalar");
  if (!std::isfinite(static_cast<double>(loss.value()[0])))
    throw NumericError("finite_diff_check: non-finite function value");
  loss.backward();

  auto eval = [&]() {
    NoGradGuard guard;
    const double v = fn().value()[0];
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite function value");
    return v;
  };

  GradCheckResult result;
  for (auto& p : params) {
    const Tensor analytic = p.var.has_grad() ? p.grad() : Tensor(p.value().shape());
    Tensor& value = p.value();
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const Real saved = value[i];
      const Real hi = static_cast<Real>(saved + epsilon), lo = static_cast<Real>(saved - epsilon);
      value[i] = hi;
      const double plus = eval();
      value[i] = lo;
      const double minus = eval();
      value[i] = saved;
      // divide by the step actually representable at this precision
      const double numeric = (plus - minus) / (double(hi) - double(lo));
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_parameter.empty()) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_parameter = p.name;
          result.worst_index = i;
          result.analytic = a;
          result.numeric = numeric;
        }
      }
    }
    p.var.zero_grad();
  }
  return result;
}

RGF_NAMESPACE_END
