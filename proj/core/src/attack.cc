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

#include "pdpa/attack.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "pdpa/csv.h"
#include "pdpa/errors.h"

namespace pdpa {
namespace {

constexpr std::string_view kTraceHeader = "sample_id,split,flipped,epoch,loss";
constexpr std::string_view kManifestHeader = "sample_id,split,original_label,new_label";

void CheckLosses(std::span<const double> members, std::span<const double> nonmembers) {
  if (members.empty() || nonmembers.empty()) {
    throw ContractError("membership attack needs non-empty member and nonmember sets");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(members.begin(), members.end(), finite) ||
      !std::all_of(nonmembers.begin(), nonmembers.end(), finite)) {
    throw NumericError("membership attack received a non-finite loss");
  }
}

struct Scored {
  double loss;
  bool member;
};

// Losses of both sets, sorted ascending (best membership score first).
std::vector<Scored> SortedScores(std::span<const double> members,
                                 std::span<const double> nonmembers) {
  std::vector<Scored> all;
  all.reserve(members.size() + nonmembers.size());
  for (double v : members) all.push_back({v, true});
  for (double v : nonmembers) all.push_back({v, false});
  std::sort(all.begin(), all.end(),
            [](const Scored& a, const Scored& b) { return a.loss < b.loss; });
  return all;
}

std::ofstream OpenForWrite(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

Split ParseSplitName(const std::string& s, const std::filesystem::path& path) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw FormatError(path.string() + ": unknown split '" + s + "'");
}

}  // namespace

void LossTrace::Add(const LossRecord& record) {
  if (record.epoch < 0) throw ContractError("loss trace epochs start at 0");
  if (!(record.loss >= 0.0) || !std::isfinite(record.loss)) {
    throw NumericError("loss trace entries must be finite and non-negative");
  }
  if (!seen_.emplace(record.epoch, record.member, record.sample_id).second) {
    throw ContractError("sample " + std::to_string(record.sample_id) +
                        " appears twice in epoch " + std::to_string(record.epoch));
  }
  records_.push_back(record);
}

int LossTrace::FinalEpoch() const {
  if (records_.empty()) throw ContractError("loss trace is empty");
  int last = 0;
  for (const LossRecord& r : records_) last = std::max(last, r.epoch);
  return last;
}

void LossTrace::WriteCsv(const std::filesystem::path& path) const {
  std::ofstream out = OpenForWrite(path);
  out << kTraceHeader << '\n';
  for (const LossRecord& r : records_) {
    out << r.sample_id << ',' << (r.member ? "member" : "nonmember") << ','
        << (r.flipped ? 1 : 0) << ',' << r.epoch << ',' << FormatDouble(r.loss) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

LossTrace LossTrace::ReadCsv(const std::filesystem::path& path) {
  LossTrace trace;
  const std::string ctx = path.string();
  for (const auto& f : pdpa::ReadCsv(path, kTraceHeader)) {
    LossRecord r;
    r.sample_id = ParseInt(f[0], ctx);
    if (f[1] != "member" && f[1] != "nonmember") {
      throw FormatError(ctx + ": split must be member or nonmember");
    }
    r.member = f[1] == "member";
    if (f[2] != "0" && f[2] != "1") throw FormatError(ctx + ": flipped must be 0 or 1");
    r.flipped = f[2] == "1";
    r.epoch = static_cast<int>(ParseInt(f[3], ctx));
    r.loss = ParseDouble(f[4], ctx);
    trace.Add(r);
  }
  return trace;
}

std::int64_t TwiceMannWhitneyU(std::span<const double> member_losses,
                               std::span<const double> nonmember_losses) {
  CheckLosses(member_losses, nonmember_losses);
  const std::vector<Scored> all = SortedScores(member_losses, nonmember_losses);
  // Walk from the highest loss down; every nonmember already passed has a
  // strictly higher loss than the current tie group.
  std::int64_t twice_u = 0;
  std::int64_t nonmembers_above = 0;
  std::size_t end = all.size();
  while (end > 0) {
    std::size_t begin = end - 1;
    while (begin > 0 && all[begin - 1].loss == all[end - 1].loss) --begin;
    std::int64_t a = 0, b = 0;
    for (std::size_t i = begin; i < end; ++i) (all[i].member ? a : b) += 1;
    twice_u += 2 * a * nonmembers_above + a * b;
    nonmembers_above += b;
    end = begin;
  }
  return twice_u;
}

double RankAuc(std::span<const double> member_losses,
               std::span<const double> nonmember_losses) {
  const double pairs = static_cast<double>(member_losses.size()) *
                       static_cast<double>(nonmember_losses.size());
  return static_cast<double>(TwiceMannWhitneyU(member_losses, nonmember_losses)) /
         (2.0 * pairs);
}

std::vector<RocPoint> RocCurve(std::span<const double> member_losses,
                               std::span<const double> nonmember_losses) {
  CheckLosses(member_losses, nonmember_losses);
  const std::vector<Scored> all = SortedScores(member_losses, nonmember_losses);
  const double m = static_cast<double>(member_losses.size());
  const double n = static_cast<double>(nonmember_losses.size());
  std::vector<RocPoint> roc = {{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].loss == all[i].loss) {
      (all[j].member ? tp : fp) += 1;
      ++j;
    }
    roc.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / m});
    i = j;
  }
  return roc;
}

double TrapezoidArea(std::span<const RocPoint> roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  }
  return area;
}

AttackReport MiaLossAttack(std::span<const double> member_losses,
                           std::span<const double> nonmember_losses) {
  AttackReport report;
  report.roc = RocCurve(member_losses, nonmember_losses);
  report.auc_full = RankAuc(member_losses, nonmember_losses);
  return report;
}

std::vector<std::int64_t> CanaryManifest::IdsOf(Split split) const {
  std::vector<std::int64_t> ids;
  for (const CanaryFlip& f : flips) {
    if (f.split == split) ids.push_back(f.sample_id);
  }
  return ids;
}

void CanaryManifest::WriteCsv(const std::filesystem::path& path) const {
  std::ofstream out = OpenForWrite(path);
  out << kManifestHeader << '\n';
  for (const CanaryFlip& f : flips) {
    out << f.sample_id << ',' << SplitName(f.split) << ',' << f.original_label << ','
        << f.new_label << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

CanaryManifest CanaryManifest::ReadCsv(const std::filesystem::path& path) {
  CanaryManifest manifest;
  const std::string ctx = path.string();
  for (const auto& f : pdpa::ReadCsv(path, kManifestHeader)) {
    manifest.flips.push_back({ParseInt(f[0], ctx), ParseSplitName(f[1], path),
                              static_cast<int>(ParseInt(f[2], ctx)),
                              static_cast<int>(ParseInt(f[3], ctx))});
  }
  return manifest;
}

std::pair<EncodedDataset, CanaryManifest> FlipCanaries(const EncodedDataset& dataset,
                                                       std::size_t k, std::size_t n_classes,
                                                       Rng& rng) {
  if (n_classes < 2) throw ContractError("label flipping needs at least two classes");
  EncodedDataset poisoned = dataset;
  CanaryManifest manifest;
  std::uniform_int_distribution<std::size_t> shift(1, n_classes - 1);
  for (EncodedSplit* split : {&poisoned.train, &poisoned.test}) {
    if (k > split->size()) {
      throw ContractError("cannot flip " + std::to_string(k) + " canaries in the " +
                          std::string(SplitName(split->split)) + " split of size " +
                          std::to_string(split->size()));
    }
    std::vector<std::size_t> rows(split->size());
    std::iota(rows.begin(), rows.end(), 0);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(k);
    std::sort(rows.begin(), rows.end());
    for (std::size_t row : rows) {
      const int old_label = split->labels[row];
      if (old_label < 0 || static_cast<std::size_t>(old_label) >= n_classes) {
        throw ContractError("label " + std::to_string(old_label) + " out of range");
      }
      const int new_label =
          static_cast<int>((static_cast<std::size_t>(old_label) + shift(rng)) % n_classes);
      split->labels[row] = new_label;
      manifest.flips.push_back({split->sample_ids[row], split->split, old_label, new_label});
    }
  }
  return {std::move(poisoned), std::move(manifest)};
}

EncodedDataset ApplyManifest(const EncodedDataset& clean, const CanaryManifest& manifest) {
  EncodedDataset poisoned = clean;
  for (const CanaryFlip& f : manifest.flips) {
    EncodedSplit& split = f.split == Split::kTrain ? poisoned.train : poisoned.test;
    const std::int64_t id = f.sample_id;
    const std::size_t row = RowsOf(split, std::span<const std::int64_t>(&id, 1)).front();
    if (split.labels[row] != f.original_label) {
      throw ContractError("canary manifest does not match the dataset at sample " +
                          std::to_string(f.sample_id));
    }
    split.labels[row] = f.new_label;
  }
  return poisoned;
}

double SplitEvaluation::Accuracy() const {
  if (correct.empty()) return 0.0;
  return static_cast<double>(std::count(correct.begin(), correct.end(), true)) /
         static_cast<double>(correct.size());
}

double SplitEvaluation::MeanLoss() const {
  if (losses.empty()) return 0.0;
  return std::accumulate(losses.begin(), losses.end(), 0.0) /
         static_cast<double>(losses.size());
}

SplitEvaluation EvaluateRows(const Model& model, const EncodedSplit& split,
                             std::span<const std::size_t> rows) {
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(split.size());
    std::iota(all.begin(), all.end(), 0);
    rows = all;
  }
  TokenBatch batch;
  batch.seq_len = split.tokens.seq_len;
  std::vector<int> labels;
  for (std::size_t row : rows) {
    if (row >= split.size()) throw ContractError("evaluation row out of range");
    const auto ids = split.tokens.ids_of(row);
    const auto mask = split.tokens.mask_of(row);
    batch.ids.insert(batch.ids.end(), ids.begin(), ids.end());
    batch.mask.insert(batch.mask.end(), mask.begin(), mask.end());
    labels.push_back(split.labels[row]);
  }
  const Tensor logits = ForwardClassify(model, batch);
  SplitEvaluation eval;
  eval.losses = LossPerSample(logits, labels);
  const std::size_t c = logits.cols();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = logits.raw() + i * c;
    const auto best = static_cast<int>(std::max_element(row, row + c) - row);
    eval.correct.push_back(best == labels[i]);
  }
  return eval;
}

std::vector<std::size_t> RowsOf(const EncodedSplit& split,
                                std::span<const std::int64_t> ids) {
  std::unordered_map<std::int64_t, std::size_t> row_of;
  for (std::size_t i = 0; i < split.size(); ++i) row_of.emplace(split.sample_ids[i], i);
  std::vector<std::size_t> rows;
  for (std::int64_t id : ids) {
    auto it = row_of.find(id);
    if (it == row_of.end()) {
      throw ContractError("sample " + std::to_string(id) + " is not in the " +
                          std::string(SplitName(split.split)) + " split");
    }
    rows.push_back(it->second);
  }
  return rows;
}

AttackReport CanaryAudit(const Model& model, const EncodedDataset& poisoned,
                         const CanaryManifest& manifest) {
  for (const CanaryFlip& f : manifest.flips) {
    const EncodedSplit& split = f.split == Split::kTrain ? poisoned.train : poisoned.test;
    const std::int64_t id = f.sample_id;
    const std::size_t row = RowsOf(split, std::span<const std::int64_t>(&id, 1)).front();
    if (split.labels[row] != f.new_label) {
      throw ContractError("canary manifest does not match the dataset at sample " +
                          std::to_string(f.sample_id));
    }
  }
  const std::vector<std::int64_t> train_ids = manifest.IdsOf(Split::kTrain);
  const std::vector<std::int64_t> test_ids = manifest.IdsOf(Split::kTest);
  const SplitEvaluation members =
      EvaluateRows(model, poisoned.train, RowsOf(poisoned.train, train_ids));
  const SplitEvaluation nonmembers =
      EvaluateRows(model, poisoned.test, RowsOf(poisoned.test, test_ids));
  AttackReport report;
  report.auc_flipped = RankAuc(members.losses, nonmembers.losses);
  report.flipped_train_accuracy = {members.Accuracy()};
  report.flipped_subset_size = manifest.flips.size();
  return report;
}

double AucAtFinalEpoch(const LossTrace& trace, bool flipped_only) {
  const int epoch = trace.FinalEpoch();
  std::vector<double> members, nonmembers;
  for (const LossRecord& r : trace.records()) {
    if (r.epoch != epoch || (flipped_only && !r.flipped)) continue;
    (r.member ? members : nonmembers).push_back(r.loss);
  }
  if (members.empty() || nonmembers.empty()) {
    throw ContractError("loss trace lacks " +
                        std::string(members.empty() ? "member" : "nonmember") +
                        " records at epoch " + std::to_string(epoch));
  }
  return RankAuc(members, nonmembers);
}

void WriteRocCsv(std::span<const RocPoint> roc, const std::filesystem::path& path) {
  std::ofstream out = OpenForWrite(path);
  out << "fpr,tpr\n";
  for (const RocPoint& p : roc) out << FormatDouble(p.fpr) << ',' << FormatDouble(p.tpr) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace pdpa
