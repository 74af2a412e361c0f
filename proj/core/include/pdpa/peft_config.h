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

#ifndef PDPA_PEFT_CONFIG_H_
#define PDPA_PEFT_CONFIG_H_

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pdpa {

enum class PeftMode { kFull, kLora, kAdapter, kIa3 };

enum class AdapterPlacement { kPostAttention, kPostFf };

std::string_view PeftModeName(PeftMode mode);
PeftMode ParsePeftMode(std::string_view name);
std::string_view AdapterPlacementName(AdapterPlacement placement);
AdapterPlacement ParseAdapterPlacement(std::string_view name);

// Which parameter-efficient mechanism is injected, and where. Fields that do
// not belong to `mode` are ignored.
struct PeftConfig {
  PeftMode mode = PeftMode::kFull;

  std::size_t lora_rank = 8;
  double lora_alpha = 16.0;
  double lora_dropout = 0.1;
  std::vector<std::string> lora_targets = {"q_lin", "v_lin"};

  std::size_t adapter_bottleneck = 32;
  std::vector<AdapterPlacement> adapter_placement = {
      AdapterPlacement::kPostAttention, AdapterPlacement::kPostFf};

  std::vector<std::string> ia3_targets = {"q_lin", "v_lin", "out_lin"};

  bool head_trainable = true;
  // Whether the classifier head enters the trainable-parameter count. Unset
  // means the per-mode default: counted for LoRA and (IA)^3, not for Adapter.
  std::optional<bool> head_counted;

  bool HeadCounted() const;
  double LoraScaling() const {
    return lora_alpha / static_cast<double>(lora_rank);
  }
};

}  // namespace pdpa

#endif  // PDPA_PEFT_CONFIG_H_
