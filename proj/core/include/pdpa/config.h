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

// Experiment configuration.
//
// Grammar, one statement per line:
//
//   # comment                   (also allowed after a value)
//   [section]                   data | model | peft | train | privacy | attack
//   key = value                 lists are comma separated
//
// Every key has a fixed type and default; unknown keys and sections are
// errors. Some keys accept `auto`, which Resolve() replaces with a concrete
// value derived from the rest of the configuration. Values are stored in
// canonical text form so that Emit() of a resolved configuration parses and
// resolves back to the same text.

#ifndef PDPA_CONFIG_H_
#define PDPA_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pdpa/model.h"
#include "pdpa/peft_config.h"

namespace pdpa {

class ExperimentConfig {
 public:
  ExperimentConfig();  // all defaults

  static ExperimentConfig Parse(std::string_view text, std::string_view origin = "<config>");
  static ExperimentConfig Load(const std::filesystem::path& path);

  // `key` is "section.key"; the value is validated and canonicalized.
  void Set(std::string_view key, std::string_view value);
  // Applies "section.key=value".
  void ApplyOverride(std::string_view assignment);

  const std::string& Get(std::string_view key) const;
  bool IsAuto(std::string_view key) const { return Get(key) == "auto"; }

  std::string Emit() const;
  std::uint64_t Hash() const;  // of Emit()

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

// Fills every `auto` that can be decided. The noise multiplier of a private
// run is calibrated from the training-set size, which defaults to the
// synthetic size implied by the [data] section; for other sources it stays
// `auto` until a size is given.
ExperimentConfig Resolve(const ExperimentConfig& config,
                         std::optional<std::size_t> train_size = std::nullopt);

struct DataSettings {
  std::string source;  // synthetic | jsonl
  std::string train_path;
  std::string test_path;
  std::string dataset_path;  // encoded cache; overrides the other sources
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t background_vocab = 0;
  double signal_strength = 0.0;
  std::uint64_t seed = 0;
  double train_fraction = 1.0;
  std::uint64_t subsample_seed = 0;
};

enum class OptimizerKind { kAdamW, kSgd };
enum class SweepKind { kParameters, kEpsilon };

struct TrainSettings {
  std::size_t batch_size = 0;
  int epochs = 0;
  double learning_rate = 0.0;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;  // 0: no limit
  std::vector<std::uint64_t> sweep_seeds;
  SweepKind sweep = SweepKind::kParameters;
};

struct PrivacySettings {
  bool enabled = false;
  double epsilon = 0.0;
  std::vector<double> epsilons;
  double delta = 0.0;
  double clip_norm = 0.0;
  std::optional<double> noise_multiplier;  // unset until resolved
};

struct AttackSettings {
  std::size_t canaries = 0;
  bool trace_every_epoch = false;
  std::string checkpoint;
  std::string manifest;
};

struct SweepSettings {
  std::vector<std::size_t> lora_ranks;
  std::vector<std::size_t> adapter_bottlenecks;
  std::size_t reference_width = 0;  // 0 disables width scaling
};

struct RunSettings {
  DataSettings data;
  std::string profile;
  ModelConfig model;
  PeftConfig peft;
  SweepSettings sweep;
  TrainSettings train;
  PrivacySettings privacy;
  AttackSettings attack;
};

// Typed view of a resolved configuration; throws if a required value is
// still `auto`. An unresolved noise multiplier is left unset.
RunSettings Interpret(const ExperimentConfig& config);

// Learning rate used when train.learning_rate is `auto`.
double DefaultLearningRate(PeftMode mode, bool private_training, std::string_view profile);
int DefaultEpochs(PeftMode mode);

}  // namespace pdpa

#endif  // PDPA_CONFIG_H_
