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

// Loss-based membership inference and the label-flip canary audit.
//
// The membership score of a sample is its negative loss, so a lower loss
// makes a sample look more like a training member.

#ifndef PDPA_ATTACK_H_
#define PDPA_ATTACK_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "pdpa/data.h"
#include "pdpa/model.h"

namespace pdpa {

struct LossRecord {
  std::int64_t sample_id = 0;
  bool member = false;  // training split
  bool flipped = false;
  int epoch = 0;
  double loss = 0.0;
};

// Per-sample losses collected over epochs. A sample id appears at most once
// per (split, epoch).
class LossTrace {
 public:
  void Add(const LossRecord& record);
  const std::vector<LossRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }
  int FinalEpoch() const;  // throws on an empty trace

  // Header `sample_id,split,flipped,epoch,loss`; split is member|nonmember.
  void WriteCsv(const std::filesystem::path& path) const;
  static LossTrace ReadCsv(const std::filesystem::path& path);

 private:
  std::vector<LossRecord> records_;
  std::set<std::tuple<int, bool, std::int64_t>> seen_;  // (epoch, member, id)
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

// Twice the Mann-Whitney U statistic of members over nonmembers, counting
// a tie as half a win. Integer valued, so it is exact.
std::int64_t TwiceMannWhitneyU(std::span<const double> member_losses,
                               std::span<const double> nonmember_losses);
// Probability that a random member has a lower loss than a random
// nonmember, ties counting one half.
double RankAuc(std::span<const double> member_losses,
               std::span<const double> nonmember_losses);
// ROC of the threshold rule "member iff loss <= t" swept over every
// distinct loss, from (0,0) to (1,1).
std::vector<RocPoint> RocCurve(std::span<const double> member_losses,
                               std::span<const double> nonmember_losses);
double TrapezoidArea(std::span<const RocPoint> roc);

struct AttackReport {
  std::vector<RocPoint> roc;
  double auc_full = 0.5;
  std::optional<double> auc_flipped;
  std::vector<double> flipped_train_accuracy;  // one entry per epoch
  std::size_t flipped_subset_size = 0;
};

// Full-set attack; both loss sets must be non-empty.
AttackReport MiaLossAttack(std::span<const double> member_losses,
                           std::span<const double> nonmember_losses);

struct CanaryFlip {
  std::int64_t sample_id = 0;
  Split split = Split::kTrain;
  int original_label = 0;
  int new_label = 0;
};

struct CanaryManifest {
  std::vector<CanaryFlip> flips;

  std::vector<std::int64_t> IdsOf(Split split) const;
  void WriteCsv(const std::filesystem::path& path) const;
  static CanaryManifest ReadCsv(const std::filesystem::path& path);
};

// Relabels `k` uniformly chosen training samples and `k` test samples with
// y -> (y + u) mod n_classes, u uniform in 1..n_classes-1.
std::pair<EncodedDataset, CanaryManifest> FlipCanaries(const EncodedDataset& dataset,
                                                       std::size_t k, std::size_t n_classes,
                                                       Rng& rng);

// Applies a manifest to a clean dataset; every entry's original label must
// match the dataset.
EncodedDataset ApplyManifest(const EncodedDataset& clean, const CanaryManifest& manifest);

struct SplitEvaluation {
  std::vector<double> losses;
  std::vector<bool> correct;

  double Accuracy() const;
  double MeanLoss() const;
};

// Evaluation-mode losses and correctness for the given rows (all rows when
// `rows` is empty), measured against the labels stored in `split`.
SplitEvaluation EvaluateRows(const Model& model, const EncodedSplit& split,
                             std::span<const std::size_t> rows = {});

// Row indices of `ids` inside `split`; throws when an id is absent.
std::vector<std::size_t> RowsOf(const EncodedSplit& split, std::span<const std::int64_t> ids);

// Flipped-subset attack on a model trained with the poisoned training split.
// Losses use the flipped labels for members and nonmembers alike.
AttackReport CanaryAudit(const Model& model, const EncodedDataset& poisoned,
                         const CanaryManifest& manifest);

// Full-set AUC of the last epoch in the trace. With `flipped_only` set, only
// canary records enter the statistic.
double AucAtFinalEpoch(const LossTrace& trace, bool flipped_only = false);

// Header `fpr,tpr`.
void WriteRocCsv(std::span<const RocPoint> roc, const std::filesystem::path& path);

}  // namespace pdpa

#endif  // PDPA_ATTACK_H_
