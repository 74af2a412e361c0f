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

// Transformer encoder classifier over a named parameter registry.

#ifndef PDPA_MODEL_H_
#define PDPA_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pdpa/autodiff.h"
#include "pdpa/peft_config.h"
#include "pdpa/registry.h"
#include "pdpa/rng.h"
#include "pdpa/tensor.h"

namespace pdpa {

// How the encoder output is reduced to one vector before the head.
enum class Pooling { kFirstToken, kMean };

std::string_view PoolingName(Pooling pooling);
Pooling ParsePooling(std::string_view name);

struct ModelConfig {
  std::size_t vocab_size = 2000;
  std::size_t max_len = 64;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 256;
  std::size_t n_classes = 2;
  bool has_token_type_embeddings = false;
  std::size_t n_token_types = 2;
  bool has_pooler = false;
  bool has_pre_classifier = false;
  bool positional_embeddings_trainable = true;
  Pooling pooling = Pooling::kMean;
  double dropout = 0.1;

  // Throws ContractError on inconsistent dimensions.
  void Validate() const;
  std::size_t head_dim() const { return d_model / n_heads; }
};

struct ArchitectureProfile {
  std::string name;
  ModelConfig config;
};

// "distilbert-dims", "bert-base-dims" and "desk".
std::span<const ArchitectureProfile> Profiles();
const ArchitectureProfile& FindProfile(std::string_view name);

enum class ParameterRole {
  kEmbedding,   // token and token-type tables, embedding layer-norm
  kPositional,  // positional table
  kEncoder,     // transformer layers
  kPooler,
  kHead,        // pre-classifier and classifier
};

struct ParameterSpec {
  std::string name;
  Shape shape;
  ParameterRole role;
  std::size_t size() const { return NumElements(shape); }
};

// Names and shapes of every base parameter in registry order, without
// allocating values.
std::vector<ParameterSpec> DescribeBaseParameters(const ModelConfig& config);

// Registry name prefix of an attention or feed-forward module, e.g.
// ("q_lin", 2) -> "layer.2.attention.q_lin". Throws on unknown module names.
std::string ModulePrefix(std::string_view module, std::size_t layer);
// Input and output widths of a target module.
std::pair<std::size_t, std::size_t> ModuleDims(const ModelConfig& config,
                                               std::string_view module);
bool IsHeadParameter(std::string_view name);

struct Model {
  ModelConfig config;
  ParameterRegistry params;
  PeftConfig peft;  // mode kFull until peft injection
};

// Normal(0, 0.02) weights and embeddings, zero biases, unit layer-norm gains.
Model BuildModel(const ModelConfig& config, std::uint64_t seed);

// Padded token-id sequences; mask is 1 on real tokens.
struct TokenBatch {
  std::size_t seq_len = 0;
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;

  std::size_t size() const { return seq_len == 0 ? 0 : ids.size() / seq_len; }
  std::span<const int> ids_of(std::size_t i) const {
    return std::span<const int>(ids).subspan(i * seq_len, seq_len);
  }
  std::span<const std::uint8_t> mask_of(std::size_t i) const {
    return std::span<const std::uint8_t>(mask).subspan(i * seq_len, seq_len);
  }
};

// Binds registry parameters to tape leaves on first use. Trainable
// parameters become gradient-tracking leaves; frozen ones do not.
class ParameterBinding {
 public:
  ParameterBinding(const ParameterRegistry& registry, ad::Tape& tape);

  ad::Var operator()(std::string_view name);
  bool Has(std::string_view name) const { return registry_.Contains(name); }
  ad::Tape& tape() { return tape_; }

  // Gradients of the last backward pass for every entry of `layout`;
  // parameters the loss did not reach get zeros.
  GradientMap Gradients(std::shared_ptr<const ParameterLayout> layout) const;

 private:
  const ParameterRegistry& registry_;
  ad::Tape& tape_;
  std::vector<std::optional<ad::Var>> leaves_;
};

struct ForwardOptions {
  bool training = false;        // enables dropout
  Rng* dropout_rng = nullptr;   // required when training with dropout
};

// Logits [1, n_classes] for one sequence. Only the masked-in positions are
// processed, so padding never reaches the output.
ad::Var ForwardSequence(const Model& model, ParameterBinding& params,
                        std::span<const int> ids,
                        std::span<const std::uint8_t> mask,
                        const ForwardOptions& options = {});

// Evaluation-mode logits [batch, n_classes].
Tensor ForwardClassify(const Model& model, const TokenBatch& batch);

// Per-sample softmax cross-entropy of `logits` [m, c].
std::vector<double> LossPerSample(const Tensor& logits, std::span<const int> labels);

}  // namespace pdpa

#endif  // PDPA_MODEL_H_
