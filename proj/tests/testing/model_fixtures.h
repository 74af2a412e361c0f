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

// Small random transformer configurations and a finite-difference oracle
// over every trainable parameter of a model. Test-only.

#ifndef PDPA_TESTS_TESTING_MODEL_FIXTURES_H_
#define PDPA_TESTS_TESTING_MODEL_FIXTURES_H_

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "pdpa/autodiff.h"
#include "pdpa/model.h"
#include "pdpa/peft.h"
#include "testing/gradient_check.h"

namespace pdpa::testing {

// A configuration with at most a few thousand parameters.
inline ModelConfig RandomSmallConfig(std::mt19937_64& rng) {
  auto pick = [&](std::initializer_list<std::size_t> options) {
    std::uniform_int_distribution<std::size_t> d(0, options.size() - 1);
    return *(options.begin() + d(rng));
  };
  std::bernoulli_distribution coin(0.5);
  ModelConfig c;
  c.n_heads = pick({1, 2});
  c.d_model = c.n_heads * pick({4, 6});
  c.n_layers = pick({1, 2});
  c.d_ff = pick({8, 12});
  c.vocab_size = pick({12, 20});
  c.max_len = 8;
  c.n_classes = pick({2, 3});
  c.has_token_type_embeddings = coin(rng);
  c.has_pooler = coin(rng);
  c.has_pre_classifier = coin(rng);
  c.positional_embeddings_trainable = coin(rng);
  c.pooling = coin(rng) ? Pooling::kMean : Pooling::kFirstToken;
  return c;
}

inline PeftConfig SmallPeft(PeftMode mode, const ModelConfig& c) {
  PeftConfig p;
  p.mode = mode;
  p.lora_rank = std::min<std::size_t>(2, c.d_model);
  p.adapter_bottleneck = std::min<std::size_t>(3, c.d_ff);
  return p;
}

struct Sequence {
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;
};

inline Sequence RandomSequence(const ModelConfig& c, std::size_t real, std::size_t padded,
                               std::mt19937_64& rng) {
  std::uniform_int_distribution<int> token(2, static_cast<int>(c.vocab_size) - 1);
  Sequence s;
  for (std::size_t i = 0; i < padded; ++i) {
    s.ids.push_back(i < real ? token(rng) : 0);
    s.mask.push_back(i < real ? 1 : 0);
  }
  return s;
}

// Sets every parameter to small random values so that zero-initialized
// PEFT pieces also carry gradient signal through the whole network.
inline void Randomize(Model& model, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> normal(0.0, scale);
  for (Parameter& p : model.params) {
    for (double& v : p.value.mutable_data()) v = normal(rng);
  }
}

inline double SequenceLoss(const Model& model, const Sequence& s, int label, bool training,
                           std::uint64_t dropout_seed) {
  ad::Tape tape(/*recording=*/false);
  ParameterBinding params(model.params, tape);
  Rng rng(dropout_seed);
  ForwardOptions options{training, &rng};
  ad::Var logits = ForwardSequence(model, params, s.ids, s.mask, options);
  return ad::Sum(ad::CrossEntropyWithLogits(logits, std::span<const int>(&label, 1)))
      .value()
      .item();
}

// Max relative error between backpropagated and central-difference gradients
// over all trainable parameters. With `training` set, dropout masks are
// replayed from `dropout_seed` for every evaluation.
inline GradientCheckResult CheckModelGradients(Model& model, const Sequence& s, int label,
                                               bool training = false,
                                               std::uint64_t dropout_seed = 1,
                                               double h = 1e-5, double floor = 1e-6) {
  const auto layout = ParameterLayout::Trainable(model.params);
  GradientMap analytic;
  {
    ad::Tape tape;
    ParameterBinding params(model.params, tape);
    Rng rng(dropout_seed);
    ForwardOptions options{training, &rng};
    ad::Var logits = ForwardSequence(model, params, s.ids, s.mask, options);
    tape.Backward(ad::Sum(ad::CrossEntropyWithLogits(logits, std::span<const int>(&label, 1))));
    analytic = params.Gradients(layout);
  }
  GradientCheckResult result;
  for (const ParameterLayout::Entry& e : layout->entries()) {
    Tensor& value = model.params.at(e.registry_index).value;
    for (std::size_t i = 0; i < e.size; ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = SequenceLoss(model, s, label, training, dropout_seed);
      value[i] = saved - h;
      const double down = SequenceLoss(model, s, label, training, dropout_seed);
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      result.max_relative_error = std::max(
          result.max_relative_error, RelativeError(analytic.flat()[e.offset + i], numeric, floor));
      ++result.entries_checked;
    }
  }
  return result;
}

}  // namespace pdpa::testing

#endif  // PDPA_TESTS_TESTING_MODEL_FIXTURES_H_
