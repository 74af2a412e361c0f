// Copyright 2026 The PDPA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pdpa/optimizer.h"

#include <cmath>

#include "pdpa/errors.h"

namespace pdpa {
namespace {

Parameter& TargetOf(ParameterRegistry& params, const ParameterLayout::Entry& e) {
  if (e.registry_index >= params.size()) {
    throw ContractError("update layout does not match the registry");
  }
  Parameter& p = params.at(e.registry_index);
  if (p.name != e.name || !p.trainable || p.value.size() != e.size) {
    throw ContractError("update for '" + e.name +
                        "' does not match a trainable registry entry");
  }
  return p;
}

}  // namespace

bool AppliesWeightDecay(std::string_view name) {
  const bool bias = name.ends_with(".bias");
  const bool norm = name.find("LayerNorm") != std::string_view::npos ||
                    name.find("layer_norm") != std::string_view::npos;
  return !bias && !norm;
}

void Sgd::Step(ParameterRegistry& params, const GradientMap& direction) {
  std::span<const double> d = direction.flat();
  for (const ParameterLayout::Entry& e : direction.layout().entries()) {
    std::span<double> w = TargetOf(params, e).value.mutable_data();
    for (std::size_t i = 0; i < e.size; ++i) w[i] -= learning_rate_ * d[e.offset + i];
  }
}

void AdamW::Step(ParameterRegistry& params, const GradientMap& direction) {
  const std::size_t n = direction.layout().total();
  if (m_.empty()) {
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
  } else if (m_.size() != n) {
    throw ContractError("AdamW state was created for a different parameter layout");
  }
  ++step_;
  const AdamWOptions& o = options_;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step_));
  std::span<const double> g = direction.flat();
  for (const ParameterLayout::Entry& e : direction.layout().entries()) {
    std::span<double> w = TargetOf(params, e).value.mutable_data();
    const double decay = AppliesWeightDecay(e.name) ? o.learning_rate * o.weight_decay : 0.0;
    for (std::size_t i = 0; i < e.size; ++i) {
      const std::size_t k = e.offset + i;
      m_[k] = o.beta1 * m_[k] + (1.0 - o.beta1) * g[k];
      v_[k] = o.beta2 * v_[k] + (1.0 - o.beta2) * g[k] * g[k];
      const double m_hat = m_[k] / bc1;
      const double v_hat = v_[k] / bc2;
      w[i] -= decay * w[i];
      w[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

}  // namespace pdpa
