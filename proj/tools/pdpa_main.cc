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

// pdpa: command-line front end of the experiment harness.
//
// Exit status: 0 on success, 1 on contract errors (bad configuration or
// arguments, infeasible budgets), 2 on IO and format errors.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdpa/accountant.h"
#include "pdpa/attack.h"
#include "pdpa/checkpoint.h"
#include "pdpa/config.h"
#include "pdpa/csv.h"
#include "pdpa/data.h"
#include "pdpa/errors.h"
#include "pdpa/experiment.h"
#include "pdpa/model.h"
#include "pdpa/peft.h"

namespace {

namespace fs = std::filesystem;
using pdpa::ExperimentConfig;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void AddCommon(CLI::App* cmd, CommonOptions& opts, bool with_out) {
  cmd->add_option("--config", opts.config_path, "configuration file");
  cmd->add_option("--set", opts.overrides, "override, section.key=value")->take_all();
  if (with_out) cmd->add_option("--out", opts.out_dir, "output directory");
}

ExperimentConfig LoadConfig(const CommonOptions& opts) {
  ExperimentConfig config =
      opts.config_path.empty() ? ExperimentConfig() : ExperimentConfig::Load(opts.config_path);
  for (const std::string& o : opts.overrides) config.ApplyOverride(o);
  return config;
}

fs::path OutDir(const CommonOptions& opts, const std::string& fallback) {
  return opts.out_dir.empty() ? fs::path(fallback) : fs::path(opts.out_dir);
}

void PrintEpoch(const pdpa::EpochMetrics& m) {
  std::fprintf(stderr, "epoch %d: train_loss=%.4f train_acc=%.4f test_acc=%.4f", m.epoch,
               m.train_loss, m.train_acc, m.test_acc);
  if (m.auc_flipped) std::fprintf(stderr, " auc_flipped=%.4f", *m.auc_flipped);
  if (m.flipped_train_acc) std::fprintf(stderr, " flipped_train_acc=%.4f", *m.flipped_train_acc);
  if (m.auc_full) std::fprintf(stderr, " auc_full=%.4f", *m.auc_full);
  if (m.epsilon_spent) std::fprintf(stderr, " epsilon=%.4f", *m.epsilon_spent);
  std::fprintf(stderr, "\n");
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text)) throw pdpa::IoError("cannot write " + path.string());
}

void EnsureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw pdpa::IoError("cannot create " + dir.string() + ": " + ec.message());
}

int GenData(const CommonOptions& opts) {
  const pdpa::RunSettings s = pdpa::Interpret(pdpa::Resolve(LoadConfig(opts)));
  const fs::path dir = OutDir(opts, "data");
  EnsureDir(dir);
  if (s.data.source == "synthetic" && s.data.dataset_path.empty()) {
    pdpa::SyntheticTaskOptions options;
    options.n_train = s.data.n_train;
    options.n_test = s.data.n_test;
    options.vocab_size = s.data.background_vocab;
    options.signal_strength = s.data.signal_strength;
    options.seed = s.data.seed;
    auto [train, test] = pdpa::GenerateSyntheticTask(options);
    pdpa::WriteJsonl(train, dir / "train.jsonl");
    pdpa::WriteJsonl(test, dir / "test.jsonl");
  }
  const pdpa::EncodedDataset dataset = pdpa::LoadOrBuildDataset(s);
  pdpa::SaveEncodedDataset(dataset, dir / "dataset.pdpa");
  std::cout << "dataset=" << (dir / "dataset.pdpa").string() << " train=" << dataset.train.size()
            << " test=" << dataset.test.size() << " vocab=" << dataset.vocab.size()
            << " max_len=" << dataset.max_len << "\n";
  return 0;
}

int TrainCommand(const CommonOptions& opts, bool audit) {
  const ExperimentConfig config = LoadConfig(opts);
  const pdpa::PreparedData data = pdpa::PrepareData(pdpa::Interpret(pdpa::Resolve(config)));
  const ExperimentConfig resolved = pdpa::Resolve(config, data.dataset.train.size());
  pdpa::TrainResult result = pdpa::Train(resolved, data, PrintEpoch);
  const fs::path dir = OutDir(opts, "runs/" + result.record.run_id);
  pdpa::WriteRunArtifacts(result, data.manifest, dir);
  std::cout << "run_id=" << result.record.run_id << " out=" << dir.string() << "\n";
  if (audit) {
    // Attack stage on the stored checkpoint, independent of the training loop.
    const pdpa::Model restored =
        pdpa::RestoreModel(pdpa::Interpret(resolved), result.record.checkpoint_path);
    const pdpa::AttackReport report = pdpa::AttackModel(restored, data);
    pdpa::WriteRocCsv(report.roc, dir / "roc.csv");
    const auto& last = result.record.epochs.back();
    std::string text = "run_id=" + result.record.run_id + "\n" + pdpa::SummaryLine(report) +
                       "\ntest_acc=" + pdpa::FormatDouble(last.test_acc) + "\n";
    if (last.flipped_train_acc) {
      text += "flipped_train_acc=" + pdpa::FormatDouble(*last.flipped_train_acc) + "\n";
    }
    if (last.epsilon_spent) text += "epsilon_spent=" + pdpa::FormatDouble(*last.epsilon_spent) + "\n";
    WriteFile(dir / "summary.txt", text);
    std::cout << text;
  } else {
    std::cout << pdpa::SummaryLine(result.record.report) << "\n";
  }
  return 0;
}

int AttackCommand(const CommonOptions& opts) {
  const ExperimentConfig config = LoadConfig(opts);
  pdpa::RunSettings s = pdpa::Interpret(pdpa::Resolve(config));
  if (s.attack.checkpoint.empty()) {
    throw pdpa::ContractError("attack needs attack.checkpoint");
  }
  pdpa::PreparedData data;
  if (!s.attack.manifest.empty()) {
    data.manifest = pdpa::CanaryManifest::ReadCsv(s.attack.manifest);
    data.dataset = pdpa::ApplyManifest(pdpa::LoadOrBuildDataset(s), data.manifest);
  } else {
    data = pdpa::PrepareData(s);
  }
  const pdpa::Model model = pdpa::RestoreModel(s, s.attack.checkpoint);
  const pdpa::AttackReport report = pdpa::AttackModel(model, data);
  const fs::path dir = OutDir(opts, fs::path(s.attack.checkpoint).parent_path().string());
  EnsureDir(dir);
  pdpa::WriteRocCsv(report.roc, dir / "roc.csv");
  WriteFile(dir / "attack_summary.txt", pdpa::SummaryLine(report) + "\n");
  std::cout << pdpa::SummaryLine(report) << "\n";
  return 0;
}

int SweepCommand(const CommonOptions& opts) {
  const ExperimentConfig config = LoadConfig(opts);
  const pdpa::RunSettings s = pdpa::Interpret(pdpa::Resolve(config));
  auto observer = [](const pdpa::SweepRow& row, std::uint64_t seed, const pdpa::TrainResult& run) {
    std::fprintf(stderr, "%s %g seed=%llu auc_full=%.4f auc_flipped=%.4f\n", row.mode.c_str(),
                 row.variation, static_cast<unsigned long long>(seed), run.record.report.auc_full,
                 run.record.report.auc_flipped.value_or(NAN));
  };
  const std::vector<pdpa::SweepRow> rows = s.train.sweep == pdpa::SweepKind::kEpsilon
                                               ? pdpa::SweepEpsilon(config, observer)
                                               : pdpa::SweepParameterVariation(config, observer);
  const fs::path dir = OutDir(opts, "sweep");
  EnsureDir(dir);
  pdpa::WriteSweepCsv(rows, dir / "sweep.csv");
  for (const pdpa::SweepRow& r : rows) {
    std::cout << r.mode << " variation=" << pdpa::FormatDouble(r.variation)
              << " applied=" << r.applied << " trainable=" << r.trainable_parameters
              << " reference=" << r.reference_parameters
              << " auc_full=" << pdpa::FormatDouble(r.auc_full)
              << " auc_flipped=" << pdpa::FormatDouble(r.auc_flipped) << "\n";
  }
  return 0;
}

std::size_t BaseTotal(const pdpa::ModelConfig& model) {
  std::size_t total = 0;
  for (const pdpa::ParameterSpec& spec : pdpa::DescribeBaseParameters(model)) total += spec.size();
  return total;
}

void PrintReferenceTable() {
  using pdpa::PeftConfig;
  using pdpa::PeftMode;
  const pdpa::ModelConfig distil = pdpa::FindProfile("distilbert-dims").config;
  const pdpa::ModelConfig bert = pdpa::FindProfile("bert-base-dims").config;
  auto row = [](const std::string& label, std::size_t n) {
    std::cout << label << " trainable=" << n << "\n";
  };
  PeftConfig full;
  row("distilbert-dims full", pdpa::CountTrainableParameters(distil, full));
  pdpa::ModelConfig frozen = distil;
  frozen.positional_embeddings_trainable = false;
  row("distilbert-dims full frozen-positional", pdpa::CountTrainableParameters(frozen, full));
  row("bert-base-dims full", pdpa::CountTrainableParameters(bert, full));
  for (std::size_t b : {32, 128, 512}) {
    PeftConfig p;
    p.mode = PeftMode::kAdapter;
    p.adapter_bottleneck = b;
    row("distilbert-dims adapter bottleneck=" + std::to_string(b),
        pdpa::CountTrainableParameters(distil, p));
  }
  for (std::size_t r : {8, 96, 480}) {
    PeftConfig p;
    p.mode = PeftMode::kLora;
    p.lora_rank = r;
    row("distilbert-dims lora rank=" + std::to_string(r), pdpa::CountTrainableParameters(distil, p));
  }
  PeftConfig ia3;
  ia3.mode = PeftMode::kIa3;
  row("distilbert-dims ia3", pdpa::CountTrainableParameters(distil, ia3));
  row("distilbert-dims head", pdpa::HeadParameterCount(distil));
}

int CountParams(const CommonOptions& opts, bool table) {
  if (table) {
    PrintReferenceTable();
    return 0;
  }
  const pdpa::RunSettings s = pdpa::Interpret(pdpa::Resolve(LoadConfig(opts)));
  if (s.peft.mode != pdpa::PeftMode::kFull) pdpa::ValidatePeftConfig(s.peft, s.model);
  std::cout << "profile=" << s.profile << " mode=" << pdpa::PeftModeName(s.peft.mode)
            << " trainable=" << pdpa::CountTrainableParameters(s.model, s.peft)
            << " base_total=" << BaseTotal(s.model) << "\n";
  return 0;
}

int Calibrate(const CommonOptions& opts) {
  ExperimentConfig config = LoadConfig(opts);
  config.Set("privacy.enabled", "true");
  const pdpa::RunSettings s = pdpa::Interpret(pdpa::Resolve(config));
  std::size_t n = 0;
  if (s.data.source == "synthetic" && s.data.dataset_path.empty()) {
    n = static_cast<std::size_t>(
        std::llround(s.data.train_fraction * static_cast<double>(s.data.n_train)));
  } else {
    n = pdpa::LoadOrBuildDataset(s).train.size();
  }
  if (n == 0 || s.train.batch_size > n) {
    throw pdpa::ContractError("calibration needs 0 < batch_size <= training-set size");
  }
  std::int64_t steps = pdpa::StepsForEpochs(static_cast<std::int64_t>(n),
                                            static_cast<std::int64_t>(s.train.batch_size),
                                            s.train.epochs);
  if (s.train.max_steps > 0) steps = std::min<std::int64_t>(steps, s.train.max_steps);
  const double q = static_cast<double>(s.train.batch_size) / static_cast<double>(n);
  const pdpa::Calibration cal =
      pdpa::CalibrateNoise(s.privacy.epsilon, s.privacy.delta, q, steps);
  std::cout << "sigma=" << pdpa::FormatDouble(cal.noise_multiplier)
            << " alpha=" << cal.achieved.order
            << " epsilon=" << pdpa::FormatDouble(cal.achieved.epsilon) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdpa: private fine-tuning and membership-inference laboratory"};
  app.require_subcommand(1);
  CommonOptions opts;
  bool table = false;

  CLI::App* gen = app.add_subcommand("gen-data", "generate or encode a dataset");
  CLI::App* train = app.add_subcommand("train", "train a model and write run artifacts");
  CLI::App* attack = app.add_subcommand("attack", "membership inference on a checkpoint");
  CLI::App* audit = app.add_subcommand("audit", "flip canaries, train, attack and report");
  CLI::App* sweep = app.add_subcommand("sweep", "parameter-variation or epsilon sweep");
  CLI::App* count = app.add_subcommand("count-params", "count trainable parameters");
  CLI::App* calibrate = app.add_subcommand("calibrate", "calibrate the DP noise multiplier");
  for (CLI::App* cmd : {gen, train, attack, audit, sweep}) AddCommon(cmd, opts, true);
  for (CLI::App* cmd : {count, calibrate}) AddCommon(cmd, opts, false);
  count->add_flag("--table", table, "print the reference counts of the large profiles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen) return GenData(opts);
    if (*train) return TrainCommand(opts, false);
    if (*audit) return TrainCommand(opts, true);
    if (*attack) return AttackCommand(opts);
    if (*sweep) return SweepCommand(opts);
    if (*count) return CountParams(opts, table);
    if (*calibrate) return Calibrate(opts);
  } catch (const pdpa::InfeasibleBudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const pdpa::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const pdpa::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
