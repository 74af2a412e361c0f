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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pdpa/accountant.h"
#include "pdpa/attack.h"
#include "pdpa/autodiff.h"
#include "pdpa/dp.h"
#include "pdpa/model.h"
#include "pdpa/peft.h"

namespace pdpa {
namespace {

struct Example {
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;
};

Example RandomExample(const ModelConfig& c, std::size_t length, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> token(2, static_cast<int>(c.vocab_size) - 1);
  Example e{std::vector<int>(c.max_len, 0), std::vector<std::uint8_t>(c.max_len, 0)};
  for (std::size_t i = 0; i < length; ++i) {
    e.ids[i] = token(rng);
    e.mask[i] = 1;
  }
  return e;
}

// One per-sample forward and backward pass on the desk model.
void BM_PerSampleGradient(benchmark::State& state) {
  Model model = BuildModel(FindProfile("desk").config, 1);
  const auto mode = static_cast<PeftMode>(state.range(0));
  if (mode != PeftMode::kFull) {
    PeftConfig p;
    p.mode = mode;
    InjectPeft(model, p, 1);
  }
  const auto layout = ParameterLayout::Trainable(model.params);
  std::mt19937_64 rng(2);
  const Example e = RandomExample(model.config, 40, rng);
  const int label = 1;
  for (auto _ : state) {
    ad::Tape tape;
    ParameterBinding params(model.params, tape);
    Rng dropout(3);
    const ad::Var logits = ForwardSequence(model, params, e.ids, e.mask, {true, &dropout});
    tape.Backward(ad::Sum(ad::CrossEntropyWithLogits(logits, std::span<const int>(&label, 1))));
    GradientMap g = params.Gradients(layout);
    benchmark::DoNotOptimize(g.flat().data());
  }
  state.SetLabel(std::string(PeftModeName(mode)));
}
BENCHMARK(BM_PerSampleGradient)
    ->Arg(static_cast<int>(PeftMode::kFull))
    ->Arg(static_cast<int>(PeftMode::kLora))
    ->Unit(benchmark::kMicrosecond);

void BM_EvaluationForward(benchmark::State& state) {
  const Model model = BuildModel(FindProfile("desk").config, 1);
  std::mt19937_64 rng(4);
  TokenBatch batch;
  batch.seq_len = model.config.max_len;
  for (int i = 0; i < state.range(0); ++i) {
    const Example e = RandomExample(model.config, 20 + i % 40, rng);
    batch.ids.insert(batch.ids.end(), e.ids.begin(), e.ids.end());
    batch.mask.insert(batch.mask.end(), e.mask.begin(), e.mask.end());
  }
  for (auto _ : state) benchmark::DoNotOptimize(ForwardClassify(model, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EvaluationForward)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ClipAndNoise(benchmark::State& state) {
  ParameterRegistry r;
  r.Add("w", Tensor({static_cast<std::size_t>(state.range(0))}));
  const auto layout = ParameterLayout::Trainable(r);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::vector<GradientMap> grads(32, GradientMap(layout));
  for (GradientMap& g : grads) {
    for (double& v : g.flat()) v = normal(rng);
  }
  Rng noise(6);
  for (auto _ : state) {
    std::vector<GradientMap> clipped = ClipPerSample(grads, 1.5);
    benchmark::DoNotOptimize(DpSgdStep(clipped, 1.0, 1.5, 32.0, noise));
  }
}
BENCHMARK(BM_ClipAndNoise)->Arg(1 << 12)->Arg(1 << 17)->Unit(benchmark::kMicrosecond);

void BM_Epsilon(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(ComputeEpsilon(32.0 / 25000.0, 0.8, 2344, 1e-5));
}
BENCHMARK(BM_Epsilon)->Unit(benchmark::kMicrosecond);

void BM_CalibrateNoise(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(CalibrateNoise(4.0, 1e-5, 32.0 / 25000.0, 2344));
  }
}
BENCHMARK(BM_CalibrateNoise)->Unit(benchmark::kMillisecond);

void BM_RankAuc(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit;
  std::vector<double> members(state.range(0)), nonmembers(state.range(0));
  for (double& v : members) v = unit(rng);
  for (double& v : nonmembers) v = unit(rng) + 0.1;
  for (auto _ : state) benchmark::DoNotOptimize(RankAuc(members, nonmembers));
  state.SetItemsProcessed(state.iterations() * 2 * state.range(0));
}
BENCHMARK(BM_RankAuc)->Arg(1000)->Arg(100000)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace pdpa

BENCHMARK_MAIN();
