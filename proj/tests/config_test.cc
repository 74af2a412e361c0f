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

#include "pdpa/config.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "pdpa/accountant.h"
#include "pdpa/errors.h"

namespace pdpa {
namespace {

TEST(ConfigTest, DefaultsMatchShippedValues) {
  const ExperimentConfig c;
  EXPECT_EQ(c.Get("train.batch_size"), "32");
  EXPECT_EQ(c.Get("privacy.clip_norm"), "1.5");
  EXPECT_EQ(c.Get("privacy.epsilons"), "1,4,8");
  EXPECT_EQ(c.Get("privacy.delta"), "1e-05");
  EXPECT_TRUE(c.IsAuto("train.epochs"));
  EXPECT_TRUE(c.IsAuto("train.learning_rate"));
  EXPECT_EQ(c.Get("model.profile"), "desk");
}

TEST(ConfigTest, ParsesSectionsCommentsAndLists) {
  const ExperimentConfig c = ExperimentConfig::Parse(
      "# leading comment\n"
      "[peft]\n"
      "mode = lora   # trailing comment\n"
      "lora_targets = q_lin, k_lin ,v_lin\n"
      "adapter_placement = post-attention\n"
      "\n"
      "[train]\n"
      "epochs=4\n"
      "learning_rate = 0.00100\n");
  EXPECT_EQ(c.Get("peft.mode"), "lora");
  EXPECT_EQ(c.Get("peft.lora_targets"), "q_lin,k_lin,v_lin");
  EXPECT_EQ(c.Get("peft.adapter_placement"), "post_attention");
  EXPECT_EQ(c.Get("train.epochs"), "4");
  EXPECT_EQ(std::stod(c.Get("train.learning_rate")), 1e-3);
}

TEST(ConfigTest, SemanticErrorsAreContractErrors) {
  EXPECT_THROW(ExperimentConfig::Parse("[train]\nbogus = 1\n"), ContractError);
  EXPECT_THROW(ExperimentConfig::Parse("[nowhere]\nx = 1\n"), ContractError);
  EXPECT_THROW(ExperimentConfig::Parse("[train]\nepochs = 2\nepochs = 3\n"), ContractError);
  EXPECT_THROW(ExperimentConfig::Parse("[train]\nbatch_size = -3\n"), ContractError);
  EXPECT_THROW(ExperimentConfig::Parse("[train]\nbatch_size = 3.5\n"), ContractError);
  EXPECT_THROW(ExperimentConfig::Parse("[peft]\nmode = prefix\n"), ContractError);
  EXPECT_THROW(ExperimentConfig::Parse("[privacy]\nenabled = maybe\n"), ContractError);
  EXPECT_THROW(Interpret(ExperimentConfig::Parse("[privacy]\nenabled = true\ndelta = 1.5\n")),
               ContractError);
  ExperimentConfig c;
  EXPECT_THROW(c.ApplyOverride("train.nope=1"), ContractError);
  EXPECT_THROW(c.ApplyOverride("train.epochs"), ContractError);
  EXPECT_THROW(c.Get("train.nope"), ContractError);
}

TEST(ConfigTest, SyntaxErrorsAreFormatErrors) {
  EXPECT_THROW(ExperimentConfig::Parse("[train\nepochs = 1\n"), FormatError);
  EXPECT_THROW(ExperimentConfig::Parse("[train]\nepochs 1\n"), FormatError);
  EXPECT_THROW(ExperimentConfig::Parse("epochs = 1\n"), FormatError);
  EXPECT_THROW(ExperimentConfig::Load("/nonexistent/path.conf"), IoError);
}

TEST(ConfigTest, OverridesReplaceValues) {
  ExperimentConfig c;
  c.ApplyOverride("peft.mode=adapter");
  c.ApplyOverride("train.seed = 9");
  EXPECT_EQ(c.Get("peft.mode"), "adapter");
  EXPECT_EQ(c.Get("train.seed"), "9");
}

TEST(ConfigTest, ResolveFillsModeAndPrivacyDependentDefaults) {
  struct Case {
    std::string mode;
    bool dp;
    double lr;
    int epochs;
  };
  const std::vector<Case> cases = {
      {"full", false, 5e-5, 3},  {"adapter", false, 5e-4, 5}, {"lora", false, 5e-4, 3},
      {"ia3", false, 7e-3, 3},   {"full", true, 7e-5, 3},     {"adapter", true, 1e-3, 5},
      {"lora", true, 8e-4, 3},
  };
  for (const Case& k : cases) {
    ExperimentConfig c;
    c.Set("model.profile", "distilbert-dims");
    c.Set("peft.mode", k.mode);
    c.Set("privacy.enabled", k.dp ? "true" : "false");
    const RunSettings s = Interpret(Resolve(c));
    EXPECT_DOUBLE_EQ(s.train.learning_rate, k.lr) << k.mode << " dp=" << k.dp;
    EXPECT_EQ(s.train.epochs, k.epochs) << k.mode;
    c.Set("model.profile", "desk");
    EXPECT_DOUBLE_EQ(Interpret(Resolve(c)).train.learning_rate, 10.0 * k.lr);
  }
}

TEST(ConfigTest, HeadCountingFollowsMode) {
  for (const auto& [mode, counted] :
       std::vector<std::pair<std::string, bool>>{{"full", true}, {"lora", true},
                                                 {"ia3", true}, {"adapter", false}}) {
    ExperimentConfig c;
    c.Set("peft.mode", mode);
    EXPECT_EQ(Interpret(Resolve(c)).peft.head_counted, counted) << mode;
  }
}

TEST(ConfigTest, ResolveCalibratesNoiseOnceTrainSizeIsKnown) {
  ExperimentConfig c;
  c.Set("privacy.enabled", "true");
  const ExperimentConfig r = Resolve(c, 2000);
  const double sigma = std::stod(r.Get("privacy.noise_multiplier"));
  const double eps =
      ComputeEpsilon(32.0 / 2000.0, sigma, StepsForEpochs(2000, 32, 3), 1e-5).epsilon;
  EXPECT_LE(eps, 4.0);
  EXPECT_GE(eps, 4.0 - 1e-3);
  EXPECT_TRUE(Resolve(c, std::nullopt).IsAuto("privacy.noise_multiplier") ||
              Resolve(c, std::nullopt).Get("privacy.noise_multiplier") ==
                  r.Get("privacy.noise_multiplier"));
}

// Draws a random but valid configuration.
ExperimentConfig RandomConfig(std::mt19937_64& rng) {
  auto pick = [&](std::vector<std::string> options) {
    return options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ExperimentConfig c;
  c.Set("peft.mode", pick({"full", "lora", "adapter", "ia3"}));
  c.Set("model.profile", pick({"desk", "distilbert-dims", "bert-base-dims"}));
  c.Set("privacy.enabled", pick({"true", "false"}));
  c.Set("privacy.epsilon", std::to_string(0.5 + 10 * unit(rng)));
  c.Set("train.batch_size", pick({"8", "16", "32"}));
  c.Set("train.learning_rate", pick({"auto", "0.001", "3.3e-5"}));
  c.Set("data.signal_strength", std::to_string(0.51 + 0.49 * unit(rng)));
  c.Set("data.train_fraction", pick({"1", "0.5", "0.25"}));
  c.Set("peft.lora_rank", pick({"1", "4", "16"}));
  c.Set("peft.lora_targets", pick({"q_lin", "q_lin,v_lin", "q_lin,k_lin,v_lin,out_lin"}));
  c.Set("attack.canaries", pick({"0", "5", "30"}));
  c.Set("train.sweep_seeds", pick({"1", "1,2,3"}));
  c.Set("model.dropout", std::to_string(0.3 * unit(rng)));
  return c;
}

TEST(ConfigTest, ParseResolveEmitIsAFixpoint) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    const ExperimentConfig c = RandomConfig(rng);
    const ExperimentConfig resolved = Resolve(c, 1000);
    const std::string text = resolved.Emit();
    const ExperimentConfig reparsed = ExperimentConfig::Parse(text);
    EXPECT_EQ(reparsed, resolved);
    EXPECT_EQ(reparsed.Emit(), text);
    EXPECT_EQ(Resolve(reparsed, 1000).Emit(), text);
    EXPECT_EQ(reparsed.Hash(), resolved.Hash());
    // Parsing the unresolved emission and resolving again gives the same text.
    EXPECT_EQ(Resolve(ExperimentConfig::Parse(c.Emit()), 1000).Emit(), text);
  }
}

TEST(ConfigTest, HashSeparatesDifferentConfigs) {
  ExperimentConfig a, b;
  b.Set("train.seed", "2");
  EXPECT_NE(a.Hash(), b.Hash());
  EXPECT_EQ(a.Hash(), ExperimentConfig().Hash());
}

TEST(ConfigTest, ShippedConfigsLoadAndResolve) {
  for (const char* name : {"desk.conf", "distilbert.conf"}) {
    const ExperimentConfig c =
        ExperimentConfig::Load(std::filesystem::path(PDPA_SOURCE_DIR) / "configs" / name);
    const ExperimentConfig resolved = Resolve(c, 2000);
    EXPECT_EQ(ExperimentConfig::Parse(resolved.Emit()), resolved) << name;
    EXPECT_NO_THROW(Interpret(resolved)) << name;
  }
}

TEST(ConfigTest, InterpretValidatesModelShapes) {
  ExperimentConfig c;
  c.Set("model.d_model", "30");
  c.Set("model.n_heads", "4");
  EXPECT_THROW(Interpret(Resolve(c)), ContractError);
}

}  // namespace
}  // namespace pdpa
