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

#include "pdpa/experiment.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "pdpa/accountant.h"
#include "pdpa/autodiff.h"
#include "pdpa/checkpoint.h"
#include "pdpa/csv.h"
#include "pdpa/dp.h"
#include "pdpa/errors.h"
#include "pdpa/optimizer.h"
#include "pdpa/peft.h"
#include "pdpa/rng.h"

namespace pdpa {

Model BuildConfiguredModel(const RunSettings& s) {
  Model model = BuildModel(s.model, s.train.seed);
  if (s.peft.mode != PeftMode::kFull) InjectPeft(model, s.peft, s.train.seed);
  return model;
}

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

std::unique_ptr<Optimizer> MakeOptimizer(const TrainSettings& train) {
  if (train.optimizer == OptimizerKind::kSgd) {
    return std::make_unique<Sgd>(train.learning_rate);
  }
  AdamWOptions options;
  options.learning_rate = train.learning_rate;
  options.weight_decay = train.weight_decay;
  return std::make_unique<AdamW>(options);
}

struct SampleOutcome {
  double loss = 0.0;
  bool correct = false;
};

// Forward and backward pass of one training sample with dropout enabled.
GradientMap SampleGradient(const Model& model,
                           const std::shared_ptr<const ParameterLayout>& layout,
                           const EncodedSplit& split, std::size_t row, Rng& dropout_rng,
                           SampleOutcome& outcome) {
  ad::Tape tape;
  ParameterBinding params(model.params, tape);
  ForwardOptions options;
  options.training = true;
  options.dropout_rng = &dropout_rng;
  const ad::Var logits = ForwardSequence(model, params, split.tokens.ids_of(row),
                                         split.tokens.mask_of(row), options);
  const int label = split.labels[row];
  const ad::Var loss = ad::Sum(ad::CrossEntropyWithLogits(logits, std::span<const int>(&label, 1)));
  tape.Backward(loss);
  const auto values = logits.value().data();
  outcome.loss = loss.value().item();
  outcome.correct =
      std::max_element(values.begin(), values.end()) - values.begin() == label;
  return params.Gradients(layout);
}

// Per-sample backward passes allocate and free megabyte-sized gradient
// buffers. Keeping those on the heap instead of fresh mmap pages removes most
// of the kernel time spent zero-filling pages.
void KeepLargeBuffersOnHeap() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)done;
#endif
}

std::string HexId(std::uint64_t hash) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, hash >>= 4) out[static_cast<std::size_t>(i)] = kDigits[hash & 0xF];
  return out;
}

std::vector<double> Pick(const std::vector<double>& values, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(values[r]);
  return out;
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

EncodedDataset LoadOrBuildDataset(const RunSettings& s) {
  EncodedDataset dataset;
  if (!s.data.dataset_path.empty()) {
    dataset = LoadEncodedDataset(s.data.dataset_path);
  } else {
    Corpus train, test;
    if (s.data.source == "synthetic") {
      SyntheticTaskOptions options;
      options.n_train = s.data.n_train;
      options.n_test = s.data.n_test;
      options.vocab_size = s.data.background_vocab;
      options.signal_strength = s.data.signal_strength;
      options.seed = s.data.seed;
      std::tie(train, test) = GenerateSyntheticTask(options);
    } else {
      if (s.data.train_path.empty() || s.data.test_path.empty()) {
        throw ContractError("data.source = jsonl needs data.train_path and data.test_path");
      }
      train = LoadJsonl(s.data.train_path, Split::kTrain);
      test = LoadJsonl(s.data.test_path, Split::kTest);
    }
    if (s.data.train_fraction < 1.0) {
      train = SubsampleSplit(train, s.data.train_fraction, s.data.subsample_seed);
    }
    dataset = BuildVocabAndEncode(train, test, s.model.vocab_size, s.model.max_len);
  }
  CheckCompatible(dataset, s.model);
  return dataset;
}

void CheckCompatible(const EncodedDataset& dataset, const ModelConfig& model) {
  if (dataset.vocab.size() > model.vocab_size) {
    throw ContractError("dataset vocabulary (" + std::to_string(dataset.vocab.size()) +
                        " tokens) exceeds the model vocabulary (" +
                        std::to_string(model.vocab_size) + ")");
  }
  if (dataset.max_len > model.max_len) {
    throw ContractError("dataset sequences of length " + std::to_string(dataset.max_len) +
                        " exceed model max_len " + std::to_string(model.max_len));
  }
  for (const EncodedSplit* split : {&dataset.train, &dataset.test}) {
    for (int label : split->labels) {
      if (label < 0 || static_cast<std::size_t>(label) >= model.n_classes) {
        throw ContractError("label " + std::to_string(label) + " in the " +
                            std::string(SplitName(split->split)) + " split is outside [0, " +
                            std::to_string(model.n_classes) + ")");
      }
    }
  }
}

PreparedData PrepareData(const RunSettings& s) {
  const EncodedDataset clean = LoadOrBuildDataset(s);
  Rng rng = RngStreams(s.train.seed).Stream("canary-selection");
  auto [poisoned, manifest] = FlipCanaries(clean, s.attack.canaries, s.model.n_classes, rng);
  return {std::move(poisoned), std::move(manifest)};
}

TrainResult Train(const ExperimentConfig& resolved, const PreparedData& data,
                  const ProgressFn& progress) {
  KeepLargeBuffersOnHeap();
  const RunSettings s = Interpret(resolved);
  if (s.privacy.enabled && !s.privacy.noise_multiplier) {
    throw ContractError("privacy.noise_multiplier is unresolved for a private run");
  }
  CheckCompatible(data.dataset, s.model);
  const EncodedSplit& train = data.dataset.train;
  const EncodedSplit& test = data.dataset.test;
  const std::size_t n = train.size();
  const std::size_t batch = s.train.batch_size;
  if (n == 0 || test.size() == 0) throw ContractError("training needs non-empty splits");
  if (batch > n) throw ContractError("train.batch_size exceeds the training-set size");

  TrainResult result{RunRecord{}, BuildConfiguredModel(s)};
  Model& model = result.model;
  RunRecord& record = result.record;
  record.resolved = resolved;
  record.config_hash = resolved.Hash();
  record.run_id = HexId(record.config_hash);
  record.trainable_parameters = model.params.TrainableParameters();

  const auto layout = ParameterLayout::Trainable(model.params);
  std::unique_ptr<Optimizer> optimizer = MakeOptimizer(s.train);
  const RngStreams streams(s.train.seed);
  Rng order_rng = streams.Stream("data-order");
  Rng noise_rng = streams.Stream("noise");

  const bool dp = s.privacy.enabled;
  const double sigma = dp ? *s.privacy.noise_multiplier : 0.0;
  const double clip = dp ? s.privacy.clip_norm : kInfinity;
  const double q = static_cast<double>(batch) / static_cast<double>(n);
  RdpAccountant accountant;

  const std::vector<std::size_t> member_canaries =
      RowsOf(train, data.manifest.IdsOf(Split::kTrain));
  const std::vector<std::size_t> nonmember_canaries =
      RowsOf(test, data.manifest.IdsOf(Split::kTest));
  const std::unordered_set<std::size_t> member_flipped(member_canaries.begin(),
                                                       member_canaries.end());
  const std::unordered_set<std::size_t> nonmember_flipped(nonmember_canaries.begin(),
                                                          nonmember_canaries.end());

  std::size_t step = 0;
  bool stop = false;
  for (int epoch = 1; epoch <= s.train.epochs && !stop; ++epoch) {
    // Each step's sample rows.
    std::vector<std::vector<std::size_t>> batches;
    if (dp) {
      auto cumulative = [&](int e) -> std::int64_t {
        if (e == 0) return 0;
        return StepsForEpochs(static_cast<std::int64_t>(n), static_cast<std::int64_t>(batch), e);
      };
      std::bernoulli_distribution include(q);
      for (std::int64_t k = cumulative(epoch - 1); k < cumulative(epoch); ++k) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < n; ++i) {
          if (include(order_rng)) rows.push_back(i);
        }
        batches.push_back(std::move(rows));
      }
    } else {
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), order_rng);
      for (std::size_t i = 0; i < n; i += batch) {
        batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                             perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
      }
    }

    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    for (const std::vector<std::size_t>& rows : batches) {
      Rng dropout_rng = streams.Stream("dropout", step);
      GradientSum sum(layout);
      for (std::size_t row : rows) {
        SampleOutcome outcome;
        GradientMap grad = SampleGradient(model, layout, train, row, dropout_rng, outcome);
        if (dp) ClipInPlace(grad, clip);
        sum.Add(grad);
        loss_sum += outcome.loss;
        correct += outcome.correct ? 1 : 0;
        ++seen;
      }
      const double denominator = dp ? static_cast<double>(batch)
                                    : static_cast<double>(std::max<std::size_t>(1, rows.size()));
      optimizer->Step(model.params, sum.NoisyAverage(sigma, clip, denominator, noise_rng));
      if (dp) accountant.Record(q, sigma, 1);
      ++step;
      if (s.train.max_steps > 0 && step >= s.train.max_steps) {
        stop = true;
        break;
      }
    }
    record.steps = step;

    const bool final_epoch = stop || epoch == s.train.epochs;
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    m.train_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;

    const SplitEvaluation test_eval = EvaluateRows(model, test);
    m.test_acc = test_eval.Accuracy();
    for (std::size_t i = 0; i < test.size(); ++i) {
      record.trace.Add({test.sample_ids[i], false, nonmember_flipped.contains(i), epoch,
                        test_eval.losses[i]});
    }
    const bool full_train = final_epoch || s.attack.trace_every_epoch;
    std::vector<std::size_t> train_rows;
    if (full_train) {
      train_rows.resize(n);
      std::iota(train_rows.begin(), train_rows.end(), 0);
    } else {
      train_rows = member_canaries;
    }
    const SplitEvaluation train_eval =
        train_rows.empty() ? SplitEvaluation{} : EvaluateRows(model, train, train_rows);
    for (std::size_t k = 0; k < train_rows.size(); ++k) {
      const std::size_t row = train_rows[k];
      record.trace.Add({train.sample_ids[row], true, member_flipped.contains(row), epoch,
                        train_eval.losses[k]});
    }
    if (full_train) m.auc_full = RankAuc(train_eval.losses, test_eval.losses);
    if (!member_canaries.empty() && !nonmember_canaries.empty()) {
      std::vector<double> member_losses;
      std::size_t member_correct = 0;
      for (std::size_t k = 0; k < train_rows.size(); ++k) {
        if (!member_flipped.contains(train_rows[k])) continue;
        member_losses.push_back(train_eval.losses[k]);
        member_correct += train_eval.correct[k] ? 1 : 0;
      }
      m.auc_flipped = RankAuc(member_losses, Pick(test_eval.losses, nonmember_canaries));
      m.flipped_train_acc =
          static_cast<double>(member_correct) / static_cast<double>(member_losses.size());
      record.report.flipped_train_accuracy.push_back(*m.flipped_train_acc);
      record.report.flipped_subset_size = member_canaries.size() + nonmember_canaries.size();
    }
    if (dp) m.epsilon_spent = accountant.Epsilon(s.privacy.delta).epsilon;
    if (final_epoch) {
      record.report.roc = RocCurve(train_eval.losses, test_eval.losses);
      record.report.auc_full = *m.auc_full;
      record.report.auc_flipped = m.auc_flipped;
    }
    record.epochs.push_back(m);
    if (progress) progress(m);
  }
  return result;
}

TrainResult RunExperiment(const ExperimentConfig& config, const ProgressFn& progress) {
  const PreparedData data = PrepareData(Interpret(Resolve(config)));
  return Train(Resolve(config, data.dataset.train.size()), data, progress);
}

Model RestoreModel(const RunSettings& s, const std::filesystem::path& checkpoint) {
  Model model = BuildConfiguredModel(s);
  const ParameterRegistry stored = LoadCheckpoint(checkpoint);
  if (stored.size() != model.params.size()) {
    throw ContractError("checkpoint holds " + std::to_string(stored.size()) +
                        " parameters but the configured model has " +
                        std::to_string(model.params.size()));
  }
  for (std::size_t i = 0; i < stored.size(); ++i) {
    const Parameter& src = stored.at(i);
    Parameter& dst = model.params.at(i);
    if (src.name != dst.name || src.value.shape() != dst.value.shape()) {
      throw ContractError("checkpoint parameter '" + src.name + "' " +
                          ShapeToString(src.value.shape()) +
                          " does not match the configured model's '" + dst.name + "' " +
                          ShapeToString(dst.value.shape()));
    }
    dst.value = src.value;
    dst.trainable = src.trainable;
  }
  return model;
}

AttackReport AttackModel(const Model& model, const PreparedData& data) {
  const SplitEvaluation members = EvaluateRows(model, data.dataset.train);
  const SplitEvaluation nonmembers = EvaluateRows(model, data.dataset.test);
  AttackReport report = MiaLossAttack(members.losses, nonmembers.losses);
  if (!data.manifest.flips.empty()) {
    const AttackReport audit = CanaryAudit(model, data.dataset, data.manifest);
    report.auc_flipped = audit.auc_flipped;
    report.flipped_train_accuracy = audit.flipped_train_accuracy;
    report.flipped_subset_size = audit.flipped_subset_size;
  }
  return report;
}

std::vector<MetricRow> MetricRows(const RunRecord& record) {
  std::vector<MetricRow> rows;
  for (const EpochMetrics& m : record.epochs) {
    rows.push_back({m.epoch, "train_acc", m.train_acc});
    rows.push_back({m.epoch, "test_acc", m.test_acc});
    rows.push_back({m.epoch, "train_loss", m.train_loss});
    if (m.auc_full) rows.push_back({m.epoch, "auc_full", *m.auc_full});
    if (m.auc_flipped) rows.push_back({m.epoch, "auc_flipped", *m.auc_flipped});
    if (m.flipped_train_acc) rows.push_back({m.epoch, "flipped_train_acc", *m.flipped_train_acc});
    if (m.epsilon_spent) rows.push_back({m.epoch, "epsilon_spent", *m.epsilon_spent});
  }
  return rows;
}

void EmitMetrics(const RunRecord& record, const std::filesystem::path& path) {
  std::string text = "epoch,metric,value\n";
  for (const MetricRow& r : MetricRows(record)) {
    text += std::to_string(r.epoch) + "," + r.metric + "," + FormatDouble(r.value) + "\n";
  }
  WriteText(path, text);
}

std::vector<MetricRow> ReadMetrics(const std::filesystem::path& path) {
  std::vector<MetricRow> rows;
  const std::string ctx = path.string();
  for (const auto& f : ReadCsv(path, "epoch,metric,value")) {
    rows.push_back({static_cast<int>(ParseInt(f[0], ctx)), f[1], ParseDouble(f[2], ctx)});
  }
  return rows;
}

std::string SummaryLine(const AttackReport& report) {
  return "auc_full=" + FormatDouble(report.auc_full) + " auc_flipped=" +
         (report.auc_flipped ? FormatDouble(*report.auc_flipped) : std::string("nan"));
}

void WriteRunArtifacts(TrainResult& result, const CanaryManifest& manifest,
                       const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  RunRecord& record = result.record;
  record.checkpoint_path = dir / "checkpoint.pdpa";
  record.attack_report_path = dir / "summary.txt";
  EmitMetrics(record, dir / "metrics.csv");
  SaveCheckpoint(result.model.params, record.checkpoint_path);
  record.trace.WriteCsv(dir / "trace.csv");
  WriteRocCsv(record.report.roc, dir / "roc.csv");
  manifest.WriteCsv(dir / "manifest.csv");
  WriteText(dir / "config.resolved.conf", record.resolved.Emit());
  WriteText(record.attack_report_path,
            "run_id=" + record.run_id + "\n" + SummaryLine(record.report) + "\n");
}

std::size_t ScaleVariation(std::size_t value, std::size_t width, std::size_t reference) {
  if (reference == 0) return value;
  const auto scaled = std::llround(static_cast<double>(value) * static_cast<double>(width) /
                                   static_cast<double>(reference));
  return static_cast<std::size_t>(std::max<long long>(1, scaled));
}

namespace {

// Runs `cell` once per sweep seed and averages the attack metrics into `row`.
void RunCell(const ExperimentConfig& cell, const std::vector<std::uint64_t>& seeds,
             SweepRow& row, const RunObserver& observer) {
  if (seeds.empty()) throw ContractError("train.sweep_seeds is empty");
  double auc_full = 0.0, auc_flipped = 0.0, test_acc = 0.0;
  for (std::uint64_t seed : seeds) {
    ExperimentConfig seeded = cell;
    seeded.Set("train.seed", std::to_string(seed));
    const TrainResult run = RunExperiment(seeded);
    const RunSettings s = Interpret(run.record.resolved);
    row.noise_multiplier = s.privacy.enabled ? *s.privacy.noise_multiplier : 0.0;
    auc_full += run.record.report.auc_full;
    auc_flipped += run.record.report.auc_flipped.value_or(0.5);
    test_acc += run.record.epochs.back().test_acc;
    if (observer) observer(row, seed, run);
  }
  const auto k = static_cast<double>(seeds.size());
  row.auc_full = auc_full / k;
  row.auc_flipped = auc_flipped / k;
  row.test_acc = test_acc / k;
}

}  // namespace

std::vector<SweepRow> SweepParameterVariation(const ExperimentConfig& base,
                                              const RunObserver& observer) {
  const RunSettings s = Interpret(Resolve(base));
  const ModelConfig& reference_model = FindProfile("distilbert-dims").config;
  std::vector<SweepRow> rows;
  auto sweep = [&](PeftMode mode, const std::vector<std::size_t>& values) {
    for (std::size_t v : values) {
      SweepRow row;
      row.mode = PeftModeName(mode);
      row.variation = static_cast<double>(v);
      row.applied = ScaleVariation(v, s.model.d_model, s.sweep.reference_width);
      ExperimentConfig cell = base;
      cell.Set("peft.mode", row.mode);
      cell.Set(mode == PeftMode::kLora ? "peft.lora_rank" : "peft.adapter_bottleneck",
               std::to_string(row.applied));
      const RunSettings cs = Interpret(Resolve(cell));
      row.trainable_parameters = CountTrainableParameters(cs.model, cs.peft);
      PeftConfig reference = cs.peft;
      (mode == PeftMode::kLora ? reference.lora_rank : reference.adapter_bottleneck) = v;
      row.reference_parameters = CountTrainableParameters(reference_model, reference);
      RunCell(cell, s.train.sweep_seeds, row, observer);
      rows.push_back(row);
    }
  };
  sweep(PeftMode::kAdapter, s.sweep.adapter_bottlenecks);
  sweep(PeftMode::kLora, s.sweep.lora_ranks);
  return rows;
}

std::vector<SweepRow> SweepEpsilon(const ExperimentConfig& base, const RunObserver& observer) {
  const RunSettings s = Interpret(Resolve(base));
  std::vector<SweepRow> rows;
  for (double epsilon : s.privacy.epsilons) {
    SweepRow row;
    row.mode = PeftModeName(s.peft.mode);
    row.variation = epsilon;
    ExperimentConfig cell = base;
    cell.Set("privacy.enabled", "true");
    cell.Set("privacy.epsilon", FormatDouble(epsilon));
    cell.Set("privacy.noise_multiplier", "auto");
    const RunSettings cs = Interpret(Resolve(cell));
    row.applied = cs.peft.mode == PeftMode::kLora      ? cs.peft.lora_rank
                  : cs.peft.mode == PeftMode::kAdapter ? cs.peft.adapter_bottleneck
                                                       : 0;
    row.trainable_parameters = CountTrainableParameters(cs.model, cs.peft);
    row.reference_parameters =
        CountTrainableParameters(FindProfile("distilbert-dims").config, cs.peft);
    RunCell(cell, s.train.sweep_seeds, row, observer);
    rows.push_back(row);
  }
  return rows;
}

void WriteSweepCsv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::string text =
      "mode,variation,applied,trainable_parameters,reference_parameters,noise_multiplier,"
      "auc_full,auc_flipped,test_acc\n";
  for (const SweepRow& r : rows) {
    text += r.mode + "," + FormatDouble(r.variation) + "," + std::to_string(r.applied) + "," +
            std::to_string(r.trainable_parameters) + "," +
            std::to_string(r.reference_parameters) + "," + FormatDouble(r.noise_multiplier) +
            "," + FormatDouble(r.auc_full) + "," + FormatDouble(r.auc_flipped) + "," +
            FormatDouble(r.test_acc) + "\n";
  }
  WriteText(path, text);
}

}  // namespace pdpa
