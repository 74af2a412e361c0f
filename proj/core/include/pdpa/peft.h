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

// Parameter-efficient fine-tuning: LoRA, bottleneck adapters and (IA)^3.
//
// Injection freezes the base model, optionally keeps the classifier head
// trainable, and appends the new parameters to the registry:
//
//   LoRA     <module>.lora_A [in, r] ~ N(0, 1/r), <module>.lora_B [r, out] = 0;
//            the module output gains (alpha / r) * x A B.
//   Adapter  layer.<i>.adapter.<placement>.{down,up}.{weight,bias}; applied as
//            h + up(gelu(down(h))) after the sublayer's layer-norm, with the
//            up projection zero-initialized.
//   (IA)^3   <module>.ia3 [out] = 1, multiplying the module output.
//
// Every mechanism starts as an exact identity, so an injected model produces
// the same logits as its base model until the first update.

#ifndef PDPA_PEFT_H_
#define PDPA_PEFT_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pdpa/model.h"
#include "pdpa/peft_config.h"

namespace pdpa {

// Throws ContractError when `config` is inconsistent with `model_config`.
void ValidatePeftConfig(const PeftConfig& config, const ModelConfig& model_config);

// Throws ContractError for mode kFull, for an already injected model, and
// for unknown target modules.
void InjectPeft(Model& model, const PeftConfig& config, std::uint64_t seed);

// Trainable-parameter count implied by a configuration, by arithmetic only.
// In full mode this is every base parameter except frozen positional
// embeddings. In PEFT modes it is the injected parameters plus, when
// config.HeadCounted(), the pre-classifier and classifier.
std::size_t CountTrainableParameters(const ModelConfig& model_config,
                                     const PeftConfig& config);
// Size of the pre-classifier plus classifier.
std::size_t HeadParameterCount(const ModelConfig& model_config);

std::vector<std::string> TrainableParameterNames(const ParameterRegistry& registry);

}  // namespace pdpa

#endif  // PDPA_PEFT_H_
