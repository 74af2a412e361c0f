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

// Corpus ingestion, tokenization and the synthetic desk-scale task.

#ifndef PDPA_DATA_H_
#define PDPA_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pdpa/model.h"

namespace pdpa {

enum class Split { kTrain, kTest };

std::string_view SplitName(Split split);

struct Record {
  std::int64_t id = 0;
  std::string text;
  int label = 0;
};

struct Corpus {
  Split split = Split::kTrain;
  std::vector<Record> records;

  std::size_t size() const { return records.size(); }
};

// One JSON object per line with a string `text` and an integer `label`.
// Optional fields: integer `id` (defaults to the 0-based line number) and
// string `text_pair`, appended to `text` after a "[SEP]" token. Blank lines
// are skipped; anything else malformed is a FormatError naming the line.
Corpus LoadJsonl(const std::filesystem::path& path, Split split = Split::kTrain);
void WriteJsonl(const Corpus& corpus, const std::filesystem::path& path);

// Lowercased; whitespace separates tokens and every ASCII punctuation
// character is a token of its own. "[sep]" stays a single token.
std::vector<std::string> Tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();  // only the reserved tokens

  // Keeps the `vocab_size - 2` most frequent training tokens; equal counts
  // are ordered lexicographically.
  static Vocabulary Build(const Corpus& train, std::size_t vocab_size);
  static Vocabulary FromTokens(std::vector<std::string> tokens);

  int IdOf(std::string_view token) const;  // kUnk when absent
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;  // id -> token
  std::unordered_map<std::string, int> ids_;
};

struct EncodedSplit {
  Split split = Split::kTrain;
  std::vector<std::int64_t> sample_ids;
  TokenBatch tokens;  // every row exactly max_len long
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct EncodedDataset {
  Vocabulary vocab;
  std::size_t max_len = 0;
  EncodedSplit train;
  EncodedSplit test;
};

// Truncates or PAD-fills every text to `max_len`.
EncodedSplit Encode(const Corpus& corpus, const Vocabulary& vocab, std::size_t max_len);

// The vocabulary is built from `train` only.
EncodedDataset BuildVocabAndEncode(const Corpus& train, const Corpus& test,
                                   std::size_t vocab_size, std::size_t max_len);

struct SyntheticTaskOptions {
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  std::size_t vocab_size = 2000;   // background words
  double signal_strength = 0.8;    // p
  std::uint64_t seed = 0;
  std::size_t min_length = 20;
  std::size_t max_length = 60;
  std::size_t planted_per_document = 5;
  std::size_t class_tokens = 10;   // indicative words per class
  double zipf_exponent = 1.1;
};

// Binary task. Each document holds 20-60 words drawn from a Zipf background
// over "w<rank>". Five positions are then overwritten with indicative words;
// each comes from the document's own class list ("c<label>k<j>") with
// probability p and from the other class's list otherwise.
std::pair<Corpus, Corpus> GenerateSyntheticTask(const SyntheticTaskOptions& options);

// Uniform sample without replacement of round(fraction * N) records,
// returned in id order.
Corpus SubsampleSplit(const Corpus& corpus, double fraction, std::uint64_t seed);

// Encoded datasets share the checkpoint container; see checkpoint.h.
void SaveEncodedDataset(const EncodedDataset& dataset, const std::filesystem::path& path);
EncodedDataset LoadEncodedDataset(const std::filesystem::path& path);

}  // namespace pdpa

#endif  // PDPA_DATA_H_
