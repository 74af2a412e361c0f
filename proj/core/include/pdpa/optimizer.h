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

#ifndef PDPA_OPTIMIZER_H_
#define PDPA_OPTIMIZER_H_

#include <memory>
#include <string_view>
#include <vector>

#include "pdpa/registry.h"

namespace pdpa {

// Applies an update direction (a mean gradient, possibly noisy) to the
// trainable parameters of a registry. Frozen parameters are never written.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void Step(ParameterRegistry& params, const GradientMap& direction) = 0;
};

class Sgd : public Optimizer {
 public:
  explicit Sgd(double learning_rate) : learning_rate_(learning_rate) {}
  void Step(ParameterRegistry& params, const GradientMap& direction) override;

 private:
  double learning_rate_;
};

struct AdamWOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay, skipped for biases and layer-norm parameters.
class AdamW : public Optimizer {
 public:
  explicit AdamW(AdamWOptions options) : options_(options) {}
  void Step(ParameterRegistry& params, const GradientMap& direction) override;

 private:
  AdamWOptions options_;
  std::vector<double> m_, v_;
  long step_ = 0;
};

bool AppliesWeightDecay(std::string_view parameter_name);

}  // namespace pdpa

#endif  // PDPA_OPTIMIZER_H_
