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

// Experiment orchestration: dataset preparation, training with or without
// DP-SGD, per-epoch evaluation, artifacts and sweeps.

#ifndef PDPA_EXPERIMENT_H_
#define PDPA_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pdpa/attack.h"
#include "pdpa/config.h"
#include "pdpa/data.h"
#include "pdpa/model.h"

namespace pdpa {

// Clean dataset as described by the [data] and [model] sections.
EncodedDataset LoadOrBuildDataset(const RunSettings& settings);

struct PreparedData {
  EncodedDataset dataset;  // with canaries flipped
  CanaryManifest manifest;
};

// Builds the dataset and flips `attack.canaries` samples per split using the
// canary-selection stream of `train.seed`.
PreparedData PrepareData(const RunSettings& settings);

// The untrained model a run starts from: base weights from the run seed and,
// for PEFT modes, the injected modules with the base frozen.
Model BuildConfiguredModel(const RunSettings& settings);

// Throws when the dataset cannot be fed to a model of this configuration.
void CheckCompatible(const EncodedDataset& dataset, const ModelConfig& model);

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_acc = 0.0;
  double test_acc = 0.0;
  double train_loss = 0.0;
  std::optional<double> auc_full;
  std::optional<double> auc_flipped;
  std::optional<double> flipped_train_acc;
  std::optional<double> epsilon_spent;
};

struct RunRecord {
  std::string run_id;
  std::uint64_t config_hash = 0;
  ExperimentConfig resolved;
  std::vector<EpochMetrics> epochs;
  LossTrace trace;
  AttackReport report;
  std::size_t trainable_parameters = 0;
  std::size_t steps = 0;
  std::filesystem::path checkpoint_path;
  std::filesystem::path attack_report_path;
};

struct TrainResult {
  RunRecord record;
  Model model;
};

using ProgressFn = std::function<void(const EpochMetrics&)>;

// Trains per the resolved configuration on already prepared data.
TrainResult Train(const ExperimentConfig& resolved, const PreparedData& data,
                  const ProgressFn& progress = nullptr);

// Resolves the configuration against the prepared data, then trains.
TrainResult RunExperiment(const ExperimentConfig& config, const ProgressFn& progress = nullptr);

// Builds the model described by `settings` (with PEFT injected) and fills it
// from a checkpoint whose structure must match exactly.
Model RestoreModel(const RunSettings& settings, const std::filesystem::path& checkpoint);

// Attack of a trained model: full-set ROC/AUC over the train and test splits
// plus the canary audit when the manifest is non-empty.
AttackReport AttackModel(const Model& model, const PreparedData& data);

// Header `epoch,metric,value`.
void EmitMetrics(const RunRecord& record, const std::filesystem::path& path);

struct MetricRow {
  int epoch = 0;
  std::string metric;
  double value = 0.0;
  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};
std::vector<MetricRow> MetricRows(const RunRecord& record);
std::vector<MetricRow> ReadMetrics(const std::filesystem::path& path);

// `auc_full=<v> auc_flipped=<v>`; auc_flipped is `nan` without canaries.
std::string SummaryLine(const AttackReport& report);

// Writes metrics.csv, checkpoint.pdpa, trace.csv, roc.csv, summary.txt,
// manifest.csv and config.resolved.conf, and records the paths.
void WriteRunArtifacts(TrainResult& result, const CanaryManifest& manifest,
                       const std::filesystem::path& dir);

// Parameter-variation sweep value after width scaling: a variation v of the
// reference width maps to max(1, round(v * width / reference)).
std::size_t ScaleVariation(std::size_t value, std::size_t width, std::size_t reference);

struct SweepRow {
  std::string mode;
  double variation = 0.0;        // rank, bottleneck or epsilon
  std::size_t applied = 0;       // value used on this model (rank or bottleneck)
  std::size_t trainable_parameters = 0;
  std::size_t reference_parameters = 0;  // same variation on distilbert-dims
  double noise_multiplier = 0.0;
  double auc_full = 0.0;         // averaged over sweep seeds
  double auc_flipped = 0.0;
  double test_acc = 0.0;
};

using RunObserver = std::function<void(const SweepRow& row, std::uint64_t seed,
                                       const TrainResult& run)>;

// One row per variation, each averaged over train.sweep_seeds.
std::vector<SweepRow> SweepParameterVariation(const ExperimentConfig& base,
                                              const RunObserver& observer = nullptr);
std::vector<SweepRow> SweepEpsilon(const ExperimentConfig& base,
                                   const RunObserver& observer = nullptr);
void WriteSweepCsv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace pdpa

#endif  // PDPA_EXPERIMENT_H_
