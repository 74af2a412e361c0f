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

#include "pdpa/dp.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "pdpa/errors.h"
#include "pdpa/model.h"
#include "pdpa/optimizer.h"
#include "pdpa/peft.h"

namespace pdpa {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// A registry of a few differently shaped parameters.
ParameterRegistry SmallRegistry() {
  ParameterRegistry r;
  r.Add("a.weight", Tensor({3, 4}));
  r.Add("a.bias", Tensor({4}));
  r.Add("frozen.weight", Tensor({2, 2}), /*trainable=*/false);
  r.Add("b.layer_norm.weight", Tensor({5}));
  return r;
}

GradientMap RandomGradient(const std::shared_ptr<const ParameterLayout>& layout,
                           std::mt19937_64& rng, double scale) {
  GradientMap g(layout);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : g.flat()) v = normal(rng);
  return g;
}

double Norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

TEST(ClipTest, ScalesDownToTheBound) {
  ParameterRegistry r;
  r.Add("w", Tensor({2}));
  const auto layout = ParameterLayout::Trainable(r);
  GradientMap g(layout);
  g.flat()[0] = 3.0 * 0.6;
  g.flat()[1] = 3.0 * 0.8;  // norm 3
  EXPECT_DOUBLE_EQ(ClipInPlace(g, 1.5), 3.0);
  EXPECT_NEAR(g.flat()[0], 0.9, 1e-15);
  EXPECT_NEAR(g.flat()[1], 1.2, 1e-15);
}

TEST(ClipTest, LeavesGradientsInsideTheBall) {
  ParameterRegistry r;
  r.Add("w", Tensor({2}));
  GradientMap g(ParameterLayout::Trainable(r));
  g.flat()[0] = 0.6;
  g.flat()[1] = 0.8;  // norm 1
  ClipInPlace(g, 1.5);
  EXPECT_EQ(g.flat()[0], 0.6);
  EXPECT_EQ(g.flat()[1], 0.8);
  GradientMap zero(ParameterLayout::Trainable(r));
  EXPECT_EQ(ClipInPlace(zero, 1.5), 0.0);
  EXPECT_EQ(zero.flat()[0], 0.0);
}

TEST(ClipTest, GlobalNormBoundHoldsOnRandomSets) {
  std::mt19937_64 rng(1);
  const ParameterRegistry r = SmallRegistry();
  const auto layout = ParameterLayout::Trainable(r);
  std::uniform_real_distribution<double> log_scale(-4.0, 4.0);
  for (int set = 0; set < 1000; ++set) {
    std::vector<GradientMap> grads;
    for (int i = 0; i < 8; ++i) {
      grads.push_back(RandomGradient(layout, rng, std::pow(10.0, log_scale(rng))));
    }
    for (const GradientMap& g : ClipPerSample(grads, 1.5)) {
      EXPECT_LE(Norm(g.flat()), 1.5 + 1e-9);
    }
  }
}

TEST(ClipTest, RejectsBadInputs) {
  ParameterRegistry r;
  r.Add("w", Tensor({1}));
  GradientMap g(ParameterLayout::Trainable(r));
  EXPECT_THROW(ClipInPlace(g, 0.0), ContractError);
  EXPECT_THROW(ClipInPlace(g, -1.0), ContractError);
  g.flat()[0] = std::nan("");
  EXPECT_THROW(ClipInPlace(g, 1.0), NumericError);
}

TEST(ClipTest, InfiniteBoundDisablesClipping) {
  std::mt19937_64 rng(2);
  const auto layout = ParameterLayout::Trainable(SmallRegistry());
  GradientMap g = RandomGradient(layout, rng, 100.0);
  const std::vector<double> before(g.flat().begin(), g.flat().end());
  ClipInPlace(g, kInf);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), g.flat().begin()));
}

TEST(DpStepTest, ZeroNoiseIsPlainMeanOfClippedGradients) {
  std::mt19937_64 rng(3);
  const auto layout = ParameterLayout::Trainable(SmallRegistry());
  std::vector<GradientMap> grads;
  for (int i = 0; i < 5; ++i) grads.push_back(RandomGradient(layout, rng, 2.0));
  const std::vector<GradientMap> clipped = ClipPerSample(grads, 1.5);
  Rng noise(7);
  const GradientMap step = DpSgdStep(clipped, 0.0, 1.5, 5.0, noise);
  for (std::size_t k = 0; k < layout->total(); ++k) {
    double sum = 0.0;
    for (const GradientMap& g : clipped) sum += g.flat()[k];
    EXPECT_EQ(step.flat()[k], sum / 5.0);
  }
}

TEST(DpStepTest, MicrobatchSumsAreAssociative) {
  std::mt19937_64 rng(4);
  const auto layout = ParameterLayout::Trainable(SmallRegistry());
  std::vector<GradientMap> all;
  for (int i = 0; i < 9; ++i) all.push_back(RandomGradient(layout, rng, 1.0));
  GradientSum first(layout), second(layout), single(layout);
  for (int i = 0; i < 4; ++i) first.Add(all[i]);
  for (int i = 4; i < 9; ++i) second.Add(all[i]);
  for (const GradientMap& g : all) single.Add(g);
  Rng noise(1);
  const GradientMap whole = single.NoisyAverage(0.0, 1.0, 9.0, noise);
  const GradientMap a = first.NoisyAverage(0.0, 1.0, 9.0, noise);
  const GradientMap b = second.NoisyAverage(0.0, 1.0, 9.0, noise);
  for (std::size_t k = 0; k < layout->total(); ++k) {
    EXPECT_NEAR(a.flat()[k] + b.flat()[k], whole.flat()[k], 1e-12);
  }
}

TEST(DpStepTest, NoiseHasConfiguredStandardDeviation) {
  ParameterRegistry r;
  r.Add("w", Tensor({1'000'000}));
  const auto layout = ParameterLayout::Trainable(r);
  GradientSum sum(layout);
  sum.Add(GradientMap(layout));
  Rng noise(12345);
  const GradientMap out = sum.NoisyAverage(1.0, 1.5, 1.0, noise);
  double mean = 0.0;
  for (double v : out.flat()) mean += v;
  mean /= 1e6;
  double var = 0.0;
  for (double v : out.flat()) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / (1e6 - 1.0));
  EXPECT_NEAR(stddev, 1.5, 0.015);
  EXPECT_NEAR(mean, 0.0, 0.01);
}

TEST(DpStepTest, ExpectedBatchSizeNormalizes) {
  ParameterRegistry r;
  r.Add("w", Tensor({1}));
  const auto layout = ParameterLayout::Trainable(r);
  GradientMap g(layout);
  g.flat()[0] = 1.0;
  Rng noise(1);
  const std::vector<GradientMap> one = {g};
  EXPECT_EQ(DpSgdStep(one, 0.0, 1.5, 4.0, noise).flat()[0], 0.25);
}

TEST(DpStepTest, RejectsInvalidArguments) {
  ParameterRegistry r;
  r.Add("w", Tensor({1}));
  const auto layout = ParameterLayout::Trainable(r);
  const std::vector<GradientMap> one = {GradientMap(layout)};
  Rng noise(1);
  EXPECT_THROW(DpSgdStep(one, -0.1, 1.5, 1.0, noise), ContractError);
  EXPECT_THROW(DpSgdStep(one, 1.0, 1.5, 0.0, noise), ContractError);
  EXPECT_THROW(DpSgdStep(one, 1.0, kInf, 1.0, noise), ContractError);
  EXPECT_THROW(DpSgdStep(std::vector<GradientMap>{}, 1.0, 1.5, 1.0, noise), ContractError);
}

TEST(DpStepTest, NoiseCoversExactlyThePeftTrainableSet) {
  Model m = BuildModel(ModelConfig{}, 1);
  PeftConfig p;
  p.mode = PeftMode::kLora;
  InjectPeft(m, p, 1);
  const auto layout = ParameterLayout::Trainable(m.params);
  EXPECT_EQ(layout->total(), CountTrainableParameters(m.config, p));
  std::size_t names = 0;
  for (const auto& e : layout->entries()) {
    EXPECT_TRUE(m.params.Get(e.name).trainable);
    ++names;
  }
  EXPECT_EQ(names, TrainableParameterNames(m.params).size());
  GradientSum sum(layout);
  Rng noise(3);
  const GradientMap noisy = sum.NoisyAverage(1.0, 1.5, 32.0, noise);
  std::size_t nonzero = 0;
  for (double v : noisy.flat()) nonzero += v != 0.0;
  EXPECT_EQ(nonzero, layout->total());
}

TEST(DpStepTest, ZeroNoiseInfiniteClipStepEqualsPlainOptimizerStep) {
  std::mt19937_64 rng(5);
  ParameterRegistry dp = SmallRegistry();
  std::normal_distribution<double> normal;
  for (Parameter& p : dp) {
    for (double& v : p.value.mutable_data()) v = normal(rng);
  }
  ParameterRegistry plain = dp;
  const auto layout = ParameterLayout::Trainable(dp);
  AdamW dp_opt(AdamWOptions{}), plain_opt(AdamWOptions{});
  Rng noise(9);
  for (int step = 0; step < 20; ++step) {
    std::vector<GradientMap> grads;
    for (int i = 0; i < 6; ++i) grads.push_back(RandomGradient(layout, rng, 3.0));
    dp_opt.Step(dp, DpSgdStep(ClipPerSample(grads, kInf), 0.0, kInf, 6.0, noise));
    plain_opt.Step(plain, MeanGradient(grads, 6.0));
  }
  for (std::size_t i = 0; i < dp.size(); ++i) EXPECT_EQ(dp.at(i).value, plain.at(i).value);
}

TEST(OptimizerTest, WeightDecaySkipsBiasesAndLayerNorms) {
  EXPECT_TRUE(AppliesWeightDecay("layer.0.attention.q_lin.weight"));
  EXPECT_TRUE(AppliesWeightDecay("layer.0.attention.q_lin.lora_A"));
  EXPECT_FALSE(AppliesWeightDecay("layer.0.attention.q_lin.bias"));
  EXPECT_FALSE(AppliesWeightDecay("embeddings.LayerNorm.weight"));
  EXPECT_FALSE(AppliesWeightDecay("layer.1.output_layer_norm.weight"));
}

TEST(OptimizerTest, AdamWFirstStepMatchesClosedForm) {
  ParameterRegistry r;
  r.Add("w.weight", Tensor({2}, {1.0, -2.0}));
  r.Add("w.bias", Tensor({1}, {0.5}));
  const auto layout = ParameterLayout::Trainable(r);
  GradientMap g(layout);
  g.flat()[0] = 0.3;
  g.flat()[1] = -4.0;
  g.flat()[2] = 1e-3;
  AdamWOptions o;
  o.learning_rate = 0.1;
  AdamW adam(o);
  adam.Step(r, g);
  // After one step m_hat = g and v_hat = g^2.
  auto expected = [&](double w, double grad, bool decay) {
    if (decay) w -= 0.1 * 0.01 * w;
    return w - 0.1 * grad / (std::abs(grad) + 1e-8);
  };
  EXPECT_NEAR(r.Get("w.weight").value[0], expected(1.0, 0.3, true), 1e-15);
  EXPECT_NEAR(r.Get("w.weight").value[1], expected(-2.0, -4.0, true), 1e-15);
  EXPECT_NEAR(r.Get("w.bias").value[0], expected(0.5, 1e-3, false), 1e-15);
}

TEST(OptimizerTest, SgdStep) {
  ParameterRegistry r;
  r.Add("w", Tensor({2}, {1.0, 2.0}));
  GradientMap g(ParameterLayout::Trainable(r));
  g.flat()[0] = 1.0;
  g.flat()[1] = -1.0;
  Sgd(0.5).Step(r, g);
  EXPECT_EQ(r.Get("w").value, Tensor({2}, {0.5, 2.5}));
}

}  // namespace
}  // namespace pdpa
