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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "pdpa/data.h"
#include "pdpa/errors.h"
#include "pdpa/model.h"

namespace pdpa {
namespace {

// Pairwise enumeration: a member beats a nonmember when its loss is lower.
double PairwiseAuc(const std::vector<double>& members, const std::vector<double>& nonmembers) {
  double wins = 0.0;
  for (double m : members) {
    for (double n : nonmembers) wins += m < n ? 1.0 : (m == n ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(members.size()) * nonmembers.size());
}

std::vector<double> RandomLosses(std::mt19937_64& rng, std::size_t n, int distinct) {
  std::uniform_int_distribution<int> level(0, distinct - 1);
  std::vector<double> out(n);
  for (double& v : out) v = 0.05 * level(rng);  // coarse levels force ties
  return out;
}

std::filesystem::path TempPath(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         (std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
          name);
}

TEST(AucTest, HandEnumerableExample) {
  const std::vector<double> members = {0.1, 0.2, 0.3};
  const std::vector<double> nonmembers = {0.25, 0.35, 0.4};
  EXPECT_EQ(TwiceMannWhitneyU(members, nonmembers), 16);
  EXPECT_DOUBLE_EQ(RankAuc(members, nonmembers), 8.0 / 9.0);
  EXPECT_NEAR(TrapezoidArea(RocCurve(members, nonmembers)), 8.0 / 9.0, 1e-12);
}

TEST(AucTest, PerfectSeparationAndTies) {
  const std::vector<double> low(5, 0.1), high(7, 0.9);
  EXPECT_EQ(RankAuc(low, high), 1.0);
  EXPECT_EQ(RankAuc(high, low), 0.0);
  const std::vector<double> same = {0.3, 0.1, 0.2};
  EXPECT_EQ(RankAuc(same, same), 0.5);
  EXPECT_EQ(TrapezoidArea(RocCurve(same, same)), 0.5);
}

TEST(AucTest, RankStatisticEqualsRocAreaOnRandomInstances) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> size(1, 60);
  for (int i = 0; i < 100; ++i) {
    const auto members = RandomLosses(rng, size(rng), 1 + i % 40);
    const auto nonmembers = RandomLosses(rng, size(rng), 1 + i % 40);
    const double rank = RankAuc(members, nonmembers);
    EXPECT_NEAR(rank, TrapezoidArea(RocCurve(members, nonmembers)), 1e-12);
    EXPECT_NEAR(rank, PairwiseAuc(members, nonmembers), 1e-12);
  }
}

TEST(AucTest, InvariantUnderStrictlyMonotoneTransforms) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> coef(0.1, 3.0);
  for (int i = 0; i < 100; ++i) {
    const auto members = RandomLosses(rng, 25, 15);
    const auto nonmembers = RandomLosses(rng, 30, 15);
    const double a = coef(rng), b = coef(rng);
    auto transform = [&](std::vector<double> v) {
      for (double& x : v) x = a * std::exp(b * x) + std::pow(x, 3) + 1.0;
      return v;
    };
    EXPECT_EQ(RankAuc(members, nonmembers), RankAuc(transform(members), transform(nonmembers)));
  }
}

TEST(AucTest, LabelSwapMapsToComplement) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto members = RandomLosses(rng, 17, 9);
    const auto nonmembers = RandomLosses(rng, 23, 9);
    // The statistic itself is an exact integer; the double AUC is that
    // rational rounded once, so its complement agrees to rounding.
    EXPECT_EQ(TwiceMannWhitneyU(nonmembers, members),
              2 * 17 * 23 - TwiceMannWhitneyU(members, nonmembers));
    EXPECT_DOUBLE_EQ(RankAuc(nonmembers, members), 1.0 - RankAuc(members, nonmembers));
  }
}

TEST(AucTest, RocShape) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto roc = RocCurve(RandomLosses(rng, 20, 6), RandomLosses(rng, 11, 6));
    ASSERT_GE(roc.size(), 2u);
    EXPECT_EQ(roc.front(), (RocPoint{0.0, 0.0}));
    EXPECT_EQ(roc.back(), (RocPoint{1.0, 1.0}));
    for (std::size_t k = 1; k < roc.size(); ++k) {
      EXPECT_GE(roc[k].fpr, roc[k - 1].fpr);
      EXPECT_GE(roc[k].tpr, roc[k - 1].tpr);
    }
  }
}

TEST(AucTest, AttackErrors) {
  const std::vector<double> some = {0.1}, none;
  EXPECT_THROW(MiaLossAttack(none, some), ContractError);
  EXPECT_THROW(MiaLossAttack(some, none), ContractError);
  const std::vector<double> bad = {std::nan("")};
  EXPECT_THROW(MiaLossAttack(bad, some), NumericError);
  const AttackReport r = MiaLossAttack(std::vector<double>{0.1, 0.2}, std::vector<double>{0.3});
  EXPECT_EQ(r.auc_full, 1.0);
  EXPECT_NEAR(TrapezoidArea(r.roc), r.auc_full, 1e-12);
}

LossTrace HandTrace() {
  LossTrace t;
  // Epoch 1 is the reverse of epoch 2 and must not influence the result.
  t.Add({1, true, true, 1, 0.9});
  t.Add({2, true, false, 1, 0.8});
  t.Add({3, false, true, 1, 0.1});
  t.Add({4, false, false, 1, 0.2});
  t.Add({1, true, true, 2, 0.05});
  t.Add({2, true, false, 2, 0.5});
  t.Add({3, false, true, 2, 0.4});
  t.Add({4, false, false, 2, 0.5});
  return t;
}

TEST(TraceTest, FinalEpochAucMatchesEnumeration) {
  const LossTrace t = HandTrace();
  EXPECT_EQ(t.FinalEpoch(), 2);
  EXPECT_DOUBLE_EQ(AucAtFinalEpoch(t), PairwiseAuc({0.05, 0.5}, {0.4, 0.5}));
  EXPECT_DOUBLE_EQ(AucAtFinalEpoch(t), 0.625);
  EXPECT_EQ(AucAtFinalEpoch(t, /*flipped_only=*/true), 1.0);
}

TEST(TraceTest, SingleEpochEqualsDirectAttack) {
  LossTrace t;
  const std::vector<double> m = {0.3, 0.7, 0.2}, n = {0.4, 0.9};
  for (std::size_t i = 0; i < m.size(); ++i) t.Add({static_cast<std::int64_t>(i), true, false, 1, m[i]});
  for (std::size_t i = 0; i < n.size(); ++i) t.Add({static_cast<std::int64_t>(i), false, false, 1, n[i]});
  EXPECT_EQ(AucAtFinalEpoch(t), MiaLossAttack(m, n).auc_full);
}

TEST(TraceTest, ContractErrors) {
  LossTrace t;
  EXPECT_THROW(t.FinalEpoch(), ContractError);
  t.Add({1, true, false, 1, 0.2});
  EXPECT_THROW(t.Add({1, true, false, 1, 0.3}), ContractError);
  t.Add({1, false, false, 1, 0.3});  // same id in the other split is fine
  t.Add({1, true, false, 2, 0.3});
  EXPECT_THROW(AucAtFinalEpoch(t), ContractError);  // no nonmember at epoch 2
  EXPECT_THROW(t.Add({2, true, false, 2, -0.1}), ContractError);
}

TEST(TraceTest, CsvRoundTrip) {
  const LossTrace t = HandTrace();
  const auto path = TempPath("trace.csv");
  t.WriteCsv(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "sample_id,split,flipped,epoch,loss");
  const LossTrace back = LossTrace::ReadCsv(path);
  ASSERT_EQ(back.records().size(), t.records().size());
  for (std::size_t i = 0; i < t.records().size(); ++i) {
    const LossRecord &a = t.records()[i], &b = back.records()[i];
    EXPECT_EQ(a.sample_id, b.sample_id);
    EXPECT_EQ(a.member, b.member);
    EXPECT_EQ(a.flipped, b.flipped);
    EXPECT_EQ(a.epoch, b.epoch);
    EXPECT_EQ(a.loss, b.loss);
  }
  std::filesystem::remove(path);
}

EncodedDataset SmallDataset(std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  SyntheticTaskOptions o;
  o.n_train = n_train;
  o.n_test = n_test;
  o.seed = seed;
  o.vocab_size = 200;
  const auto [train, test] = GenerateSyntheticTask(o);
  return BuildVocabAndEncode(train, test, 300, 32);
}

TEST(CanaryTest, FlipsDistinctSamplesWithFreshLabels) {
  const EncodedDataset clean = SmallDataset(2000, 200, 1);
  Rng rng(5);
  const auto [poisoned, manifest] = FlipCanaries(clean, 30, 2, rng);
  ASSERT_EQ(manifest.flips.size(), 60u);
  for (Split s : {Split::kTrain, Split::kTest}) {
    const auto ids = manifest.IdsOf(s);
    EXPECT_EQ(ids.size(), 30u);
    EXPECT_EQ(std::set<std::int64_t>(ids.begin(), ids.end()).size(), 30u);
  }
  std::size_t changed = 0;
  for (std::size_t i = 0; i < clean.train.size(); ++i) {
    changed += clean.train.labels[i] != poisoned.train.labels[i];
  }
  EXPECT_EQ(changed, 30u);
  for (const CanaryFlip& f : manifest.flips) EXPECT_EQ(f.new_label, 1 - f.original_label);
}

TEST(CanaryTest, MultiClassShiftNeverKeepsTheLabel) {
  EncodedDataset clean = SmallDataset(300, 300, 2);
  for (std::size_t i = 0; i < clean.train.size(); ++i) clean.train.labels[i] = i % 5;
  for (std::size_t i = 0; i < clean.test.size(); ++i) clean.test.labels[i] = i % 5;
  Rng rng(6);
  const auto [poisoned, manifest] = FlipCanaries(clean, 100, 5, rng);
  std::set<int> new_labels;
  for (const CanaryFlip& f : manifest.flips) {
    EXPECT_NE(f.new_label, f.original_label);
    EXPECT_GE(f.new_label, 0);
    EXPECT_LT(f.new_label, 5);
    new_labels.insert(f.new_label);
  }
  EXPECT_EQ(new_labels.size(), 5u);
}

TEST(CanaryTest, SeededAndReproducible) {
  const EncodedDataset clean = SmallDataset(200, 200, 3);
  Rng a(9), b(9), c(10);
  const auto first = FlipCanaries(clean, 30, 2, a).second;
  const auto second = FlipCanaries(clean, 30, 2, b).second;
  const auto other = FlipCanaries(clean, 30, 2, c).second;
  EXPECT_EQ(first.IdsOf(Split::kTrain), second.IdsOf(Split::kTrain));
  EXPECT_EQ(first.IdsOf(Split::kTest), second.IdsOf(Split::kTest));
  EXPECT_NE(first.IdsOf(Split::kTrain), other.IdsOf(Split::kTrain));
}

TEST(CanaryTest, RejectsOversizedRequests) {
  const EncodedDataset clean = SmallDataset(20, 10, 4);
  Rng rng(1);
  EXPECT_THROW(FlipCanaries(clean, 11, 2, rng), ContractError);
  EXPECT_THROW(FlipCanaries(clean, 5, 1, rng), ContractError);
}

TEST(CanaryTest, ManifestCsvRoundTripAndReapply) {
  const EncodedDataset clean = SmallDataset(100, 100, 5);
  Rng rng(2);
  const auto [poisoned, manifest] = FlipCanaries(clean, 10, 2, rng);
  const auto path = TempPath("manifest.csv");
  manifest.WriteCsv(path);
  const CanaryManifest back = CanaryManifest::ReadCsv(path);
  ASSERT_EQ(back.flips.size(), manifest.flips.size());
  const EncodedDataset reapplied = ApplyManifest(clean, back);
  EXPECT_EQ(reapplied.train.labels, poisoned.train.labels);
  EXPECT_EQ(reapplied.test.labels, poisoned.test.labels);
  EXPECT_THROW(ApplyManifest(poisoned, back), ContractError);
  std::filesystem::remove(path);
}

ModelConfig ConfigFor(const EncodedDataset& d) {
  ModelConfig c = FindProfile("desk").config;
  c.vocab_size = d.vocab.size();
  c.max_len = d.max_len;
  return c;
}

TEST(CanaryTest, AuditOfUntrainedModelIsNearChance) {
  const EncodedDataset clean = SmallDataset(300, 300, 6);
  double total = 0.0;
  const int seeds = 5;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng(100 + seed);
    const auto [poisoned, manifest] = FlipCanaries(clean, 30, 2, rng);
    const Model model = BuildModel(ConfigFor(clean), 200 + seed);
    const AttackReport r = CanaryAudit(model, poisoned, manifest);
    EXPECT_EQ(r.flipped_subset_size, 60u);
    ASSERT_TRUE(r.auc_flipped.has_value());
    total += *r.auc_flipped;
  }
  EXPECT_NEAR(total / seeds, 0.5, 0.15);
}

TEST(CanaryTest, AuditRejectsMismatchedManifest) {
  const EncodedDataset clean = SmallDataset(100, 100, 7);
  Rng rng(3);
  const auto [poisoned, manifest] = FlipCanaries(clean, 5, 2, rng);
  const Model model = BuildModel(ConfigFor(clean), 1);
  EXPECT_THROW(CanaryAudit(model, clean, manifest), ContractError);
}

TEST(CanaryTest, EvaluationMatchesForwardPass) {
  const EncodedDataset d = SmallDataset(40, 10, 8);
  const Model model = BuildModel(ConfigFor(d), 3);
  const SplitEvaluation e = EvaluateRows(model, d.test);
  const Tensor logits = ForwardClassify(model, d.test.tokens);
  const std::vector<double> losses = LossPerSample(logits, d.test.labels);
  ASSERT_EQ(e.losses.size(), d.test.size());
  for (std::size_t i = 0; i < losses.size(); ++i) EXPECT_EQ(e.losses[i], losses[i]);
}

}  // namespace
}  // namespace pdpa
