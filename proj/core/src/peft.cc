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

#include "pdpa/peft.h"

#include <algorithm>
#include <random>
#include <set>

#include "pdpa/errors.h"
#include "pdpa/rng.h"

namespace pdpa {
namespace {

std::string PlacementPrefix(AdapterPlacement placement, std::size_t layer) {
  return "layer." + std::to_string(layer) + ".adapter." +
         std::string(AdapterPlacementName(placement));
}

void CheckTargets(const std::vector<std::string>& targets, const char* field) {
  if (targets.empty()) {
    throw ContractError(std::string("peft.") + field + " must not be empty");
  }
  std::set<std::string> seen;
  for (const std::string& t : targets) {
    ModulePrefix(t, 0);  // throws on unknown names
    if (!seen.insert(t).second) {
      throw ContractError(std::string("peft.") + field + " lists '" + t + "' twice");
    }
  }
}

}  // namespace

std::string_view PeftModeName(PeftMode mode) {
  switch (mode) {
    case PeftMode::kFull: return "full";
    case PeftMode::kLora: return "lora";
    case PeftMode::kAdapter: return "adapter";
    case PeftMode::kIa3: return "ia3";
  }
  return "full";
}

PeftMode ParsePeftMode(std::string_view name) {
  if (name == "full") return PeftMode::kFull;
  if (name == "lora") return PeftMode::kLora;
  if (name == "adapter") return PeftMode::kAdapter;
  if (name == "ia3") return PeftMode::kIa3;
  throw ContractError("unknown peft mode '" + std::string(name) +
                      "' (full|lora|adapter|ia3)");
}

std::string_view AdapterPlacementName(AdapterPlacement placement) {
  return placement == AdapterPlacement::kPostAttention ? "post_attention" : "post_ff";
}

AdapterPlacement ParseAdapterPlacement(std::string_view name) {
  if (name == "post-attention" || name == "post_attention") {
    return AdapterPlacement::kPostAttention;
  }
  if (name == "post-ff" || name == "post_ff") return AdapterPlacement::kPostFf;
  throw ContractError("unknown adapter placement '" + std::string(name) +
                      "' (post-attention|post-ff)");
}

bool PeftConfig::HeadCounted() const {
  if (head_counted) return *head_counted;
  return mode != PeftMode::kAdapter;
}

void ValidatePeftConfig(const PeftConfig& config, const ModelConfig& model_config) {
  switch (config.mode) {
    case PeftMode::kFull:
      return;
    case PeftMode::kLora:
      if (config.lora_rank == 0 || config.lora_rank > model_config.d_model) {
        throw ContractError("peft.lora_rank must lie in [1, d_model=" +
                            std::to_string(model_config.d_model) + "], got " +
                            std::to_string(config.lora_rank));
      }
      if (!(config.lora_alpha > 0.0)) {
        throw ContractError("peft.lora_alpha must be positive");
      }
      if (!(config.lora_dropout >= 0.0 && config.lora_dropout < 1.0)) {
        throw ContractError("peft.lora_dropout must lie in [0, 1)");
      }
      CheckTargets(config.lora_targets, "lora_targets");
      return;
    case PeftMode::kAdapter: {
      if (config.adapter_bottleneck == 0 ||
          config.adapter_bottleneck > model_config.d_ff) {
        throw ContractError("peft.adapter_bottleneck must lie in [1, d_ff=" +
                            std::to_string(model_config.d_ff) + "], got " +
                            std::to_string(config.adapter_bottleneck));
      }
      if (config.adapter_placement.empty()) {
        throw ContractError("peft.adapter_placement must not be empty");
      }
      std::set<AdapterPlacement> seen(config.adapter_placement.begin(),
                                      config.adapter_placement.end());
      if (seen.size() != config.adapter_placement.size()) {
        throw ContractError("peft.adapter_placement lists a placement twice");
      }
      return;
    }
    case PeftMode::kIa3:
      CheckTargets(config.ia3_targets, "ia3_targets");
      return;
  }
}

void InjectPeft(Model& model, const PeftConfig& config, std::uint64_t seed) {
  if (config.mode == PeftMode::kFull) {
    throw ContractError("peft injection requested with mode=full");
  }
  if (model.peft.mode != PeftMode::kFull) {
    throw ContractError("model already carries a " +
                        std::string(PeftModeName(model.peft.mode)) + " injection");
  }
  ValidatePeftConfig(config, model.config);
  const ModelConfig& mc = model.config;
  ParameterRegistry& reg = model.params;

  reg.FreezeAll();
  if (config.head_trainable) {
    for (Parameter& p : reg) {
      if (IsHeadParameter(p.name)) p.trainable = true;
    }
  }

  Rng rng = RngStreams(seed).Stream("peft-init");
  for (std::size_t layer = 0; layer < mc.n_layers; ++layer) {
    switch (config.mode) {
      case PeftMode::kLora: {
        const double stddev = 1.0 / static_cast<double>(config.lora_rank);
        std::normal_distribution<double> normal(0.0, stddev);
        for (const std::string& target : config.lora_targets) {
          const auto [in, out] = ModuleDims(mc, target);
          Tensor a({in, config.lora_rank});
          for (double& v : a.mutable_data()) v = normal(rng);
          const std::string prefix = ModulePrefix(target, layer);
          reg.Add(prefix + ".lora_A", std::move(a));
          reg.Add(prefix + ".lora_B", Tensor({config.lora_rank, out}));
        }
        break;
      }
      case PeftMode::kAdapter: {
        std::normal_distribution<double> normal(0.0, 0.02);
        const std::size_t b = config.adapter_bottleneck;
        for (AdapterPlacement placement : config.adapter_placement) {
          const std::string prefix = PlacementPrefix(placement, layer);
          Tensor down({mc.d_model, b});
          for (double& v : down.mutable_data()) v = normal(rng);
          reg.Add(prefix + ".down.weight", std::move(down));
          reg.Add(prefix + ".down.bias", Tensor({b}));
          reg.Add(prefix + ".up.weight", Tensor({b, mc.d_model}));
          reg.Add(prefix + ".up.bias", Tensor({mc.d_model}));
        }
        break;
      }
      case PeftMode::kIa3:
        for (const std::string& target : config.ia3_targets) {
          const auto [in, out] = ModuleDims(mc, target);
          (void)in;
          reg.Add(ModulePrefix(target, layer) + ".ia3", Tensor::Full({out}, 1.0));
        }
        break;
      case PeftMode::kFull:
        break;
    }
  }
  model.peft = config;
}

std::size_t HeadParameterCount(const ModelConfig& model_config) {
  std::size_t n = 0;
  for (const ParameterSpec& spec : DescribeBaseParameters(model_config)) {
    if (spec.role == ParameterRole::kHead) n += spec.size();
  }
  return n;
}

std::size_t CountTrainableParameters(const ModelConfig& model_config,
                                     const PeftConfig& config) {
  ValidatePeftConfig(config, model_config);
  const std::size_t layers = model_config.n_layers;
  std::size_t injected = 0;
  switch (config.mode) {
    case PeftMode::kFull: {
      std::size_t n = 0;
      for (const ParameterSpec& spec : DescribeBaseParameters(model_config)) {
        if (spec.role == ParameterRole::kPositional &&
            !model_config.positional_embeddings_trainable) {
          continue;
        }
        n += spec.size();
      }
      return n;
    }
    case PeftMode::kLora:
      for (const std::string& target : config.lora_targets) {
        const auto [in, out] = ModuleDims(model_config, target);
        injected += layers * (in * config.lora_rank + config.lora_rank * out);
      }
      break;
    case PeftMode::kAdapter: {
      const std::size_t d = model_config.d_model, b = config.adapter_bottleneck;
      injected = layers * config.adapter_placement.size() * (d * b + b + b * d + d);
      break;
    }
    case PeftMode::kIa3:
      for (const std::string& target : config.ia3_targets) {
        injected += layers * ModuleDims(model_config, target).second;
      }
      break;
  }
  return injected + (config.HeadCounted() ? HeadParameterCount(model_config) : 0);
}

std::vector<std::string> TrainableParameterNames(const ParameterRegistry& registry) {
  return registry.TrainableNames();
}

}  // namespace pdpa
