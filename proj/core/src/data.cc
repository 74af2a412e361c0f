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

#include "pdpa/data.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "pdpa/checkpoint.h"
#include "pdpa/errors.h"
#include "pdpa/rng.h"

namespace pdpa {
namespace {

constexpr std::string_view kSeparator = "[sep]";

// Record type tags of the encoded-dataset container.
enum DatasetTag : std::uint8_t {
  kTagTokenIds = 0x10,
  kTagMask = 0x11,
  kTagLabels = 0x12,
  kTagSampleIds = 0x13,
  kTagVocabToken = 0x14,
};

constexpr double kMaxExactFloatInt = 16777216.0;  // 2^24

[[noreturn]] void LineError(const std::filesystem::path& path, std::size_t line,
                            const std::string& what) {
  throw FormatError(path.string() + ": line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::string_view SplitName(Split split) {
  return split == Split::kTrain ? "train" : "test";
}

Corpus LoadJsonl(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Corpus corpus;
  corpus.split = split;
  std::set<std::int64_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(),
                    [](unsigned char c) { return std::isspace(c) != 0; })) {
      continue;
    }
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      LineError(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) LineError(path, line_no, "expected a JSON object");
    if (!obj.contains("text")) LineError(path, line_no, "missing field 'text'");
    if (!obj.contains("label")) LineError(path, line_no, "missing field 'label'");
    if (!obj["text"].is_string()) LineError(path, line_no, "'text' is not a string");
    if (!obj["label"].is_number_integer()) {
      LineError(path, line_no, "'label' is not an integer");
    }
    Record rec;
    rec.text = obj["text"].get<std::string>();
    if (obj.contains("text_pair")) {
      if (!obj["text_pair"].is_string()) {
        LineError(path, line_no, "'text_pair' is not a string");
      }
      rec.text += " [SEP] " + obj["text_pair"].get<std::string>();
    }
    const std::int64_t label = obj["label"].get<std::int64_t>();
    if (label < 0 || label > std::numeric_limits<int>::max()) {
      LineError(path, line_no, "'label' must be a non-negative int");
    }
    rec.label = static_cast<int>(label);
    if (obj.contains("id")) {
      if (!obj["id"].is_number_integer()) LineError(path, line_no, "'id' is not an integer");
      rec.id = obj["id"].get<std::int64_t>();
    } else {
      rec.id = static_cast<std::int64_t>(line_no - 1);
    }
    if (!seen.insert(rec.id).second) {
      LineError(path, line_no, "duplicate id " + std::to_string(rec.id));
    }
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

void WriteJsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const Record& r : corpus.records) {
    nlohmann::json obj = {{"id", r.id}, {"text", r.text}, {"label", r.label}};
    out << obj.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == '[' && i + kSeparator.size() <= text.size()) {
      std::string candidate(text.substr(i, kSeparator.size()));
      std::transform(candidate.begin(), candidate.end(), candidate.begin(),
                     [](unsigned char ch) { return std::tolower(ch); });
      if (candidate == kSeparator) {
        flush();
        tokens.emplace_back(kSeparator);
        i += kSeparator.size() - 1;
        continue;
      }
    }
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary() : tokens_{"[pad]", "[unk]"} {
  ids_.emplace(tokens_[0], kPad);
  ids_.emplace(tokens_[1], kUnk);
}

Vocabulary Vocabulary::FromTokens(std::vector<std::string> tokens) {
  if (tokens.size() < 2) throw ContractError("vocabulary needs the reserved tokens");
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.ids_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.ids_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw FormatError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

Vocabulary Vocabulary::Build(const Corpus& train, std::size_t vocab_size) {
  if (vocab_size < 2) throw ContractError("vocab_size must be at least 2");
  std::map<std::string, std::size_t> counts;
  for (const Record& r : train.records) {
    for (std::string& t : Tokenize(r.text)) ++counts[std::move(t)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is lexicographic; a stable sort on count keeps that
  // order among ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [token, count] : ranked) {
    if (v.tokens_.size() >= vocab_size) break;
    if (v.ids_.contains(token)) continue;
    v.ids_.emplace(token, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(token);
  }
  return v;
}

int Vocabulary::IdOf(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

EncodedSplit Encode(const Corpus& corpus, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len == 0) throw ContractError("max_len must be positive");
  EncodedSplit out;
  out.split = corpus.split;
  out.tokens.seq_len = max_len;
  out.tokens.ids.assign(corpus.size() * max_len, Vocabulary::kPad);
  out.tokens.mask.assign(corpus.size() * max_len, 0);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Record& r = corpus.records[i];
    const std::vector<std::string> tokens = Tokenize(r.text);
    const std::size_t n = std::min(tokens.size(), max_len);
    for (std::size_t k = 0; k < n; ++k) {
      out.tokens.ids[i * max_len + k] = vocab.IdOf(tokens[k]);
      out.tokens.mask[i * max_len + k] = 1;
    }
    out.sample_ids.push_back(r.id);
    out.labels.push_back(r.label);
  }
  return out;
}

EncodedDataset BuildVocabAndEncode(const Corpus& train, const Corpus& test,
                                   std::size_t vocab_size, std::size_t max_len) {
  EncodedDataset ds;
  ds.vocab = Vocabulary::Build(train, vocab_size);
  ds.max_len = max_len;
  ds.train = Encode(train, ds.vocab, max_len);
  ds.test = Encode(test, ds.vocab, max_len);
  return ds;
}

std::pair<Corpus, Corpus> GenerateSyntheticTask(const SyntheticTaskOptions& o) {
  if (!(o.signal_strength > 0.5 && o.signal_strength <= 1.0)) {
    throw ContractError("signal strength p must lie in (0.5, 1]");
  }
  if (o.n_train == 0 || o.n_test == 0) {
    throw ContractError("synthetic task needs positive n_train and n_test");
  }
  if (o.vocab_size == 0 || o.class_tokens == 0) {
    throw ContractError("synthetic task needs a non-empty vocabulary");
  }
  if (o.min_length == 0 || o.min_length > o.max_length ||
      o.planted_per_document > o.min_length) {
    throw ContractError("synthetic document lengths are inconsistent");
  }
  constexpr int kClasses = 2;
  Rng rng = RngStreams(o.seed).Stream("synthetic-data");
  std::vector<double> weights(o.vocab_size);
  for (std::size_t k = 0; k < o.vocab_size; ++k) {
    weights[k] = std::pow(static_cast<double>(k + 1), -o.zipf_exponent);
  }
  std::discrete_distribution<std::size_t> background(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> length(o.min_length, o.max_length);
  std::uniform_int_distribution<int> label_dist(0, kClasses - 1);
  std::uniform_int_distribution<std::size_t> class_word(0, o.class_tokens - 1);
  std::bernoulli_distribution own_class(o.signal_strength);

  auto make = [&](Split split, std::size_t n) {
    Corpus c;
    c.split = split;
    for (std::size_t i = 0; i < n; ++i) {
      const int label = label_dist(rng);
      std::vector<std::string> words(length(rng));
      for (std::string& w : words) w = "w" + std::to_string(background(rng));
      std::vector<std::size_t> positions(words.size());
      std::iota(positions.begin(), positions.end(), 0);
      std::shuffle(positions.begin(), positions.end(), rng);
      for (std::size_t k = 0; k < o.planted_per_document; ++k) {
        const int source = own_class(rng) ? label : 1 - label;
        words[positions[k]] = "c" + std::to_string(source) + "k" +
                              std::to_string(class_word(rng));
      }
      std::string text;
      for (const std::string& w : words) {
        if (!text.empty()) text += ' ';
        text += w;
      }
      c.records.push_back({static_cast<std::int64_t>(i), std::move(text), label});
    }
    return c;
  };
  Corpus train = make(Split::kTrain, o.n_train);
  Corpus test = make(Split::kTest, o.n_test);
  return {std::move(train), std::move(test)};
}

Corpus SubsampleSplit(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ContractError("subsample fraction must lie in (0, 1]");
  }
  const auto keep = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(corpus.size())));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = RngStreams(seed).Stream("subsample");
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(keep);
  Corpus out;
  out.split = corpus.split;
  for (std::size_t i : order) out.records.push_back(corpus.records[i]);
  std::sort(out.records.begin(), out.records.end(),
            [](const Record& a, const Record& b) { return a.id < b.id; });
  return out;
}

void SaveEncodedDataset(const EncodedDataset& ds, const std::filesystem::path& path) {
  std::vector<ContainerRecord> records;
  for (std::size_t i = 0; i < ds.vocab.size(); ++i) {
    records.push_back({"vocab:" + ds.vocab.tokens()[i], {}, kTagVocabToken,
                       {static_cast<float>(i)}});
  }
  for (const EncodedSplit* split : {&ds.train, &ds.test}) {
    const std::string prefix(SplitName(split->split));
    const std::size_t n = split->size();
    ContainerRecord ids{prefix + ".token_ids", {n, ds.max_len}, kTagTokenIds, {}};
    ContainerRecord mask{prefix + ".mask", {n, ds.max_len}, kTagMask, {}};
    ContainerRecord labels{prefix + ".labels", {n}, kTagLabels, {}};
    ContainerRecord sample_ids{prefix + ".sample_ids", {n}, kTagSampleIds, {}};
    for (int v : split->tokens.ids) ids.values.push_back(static_cast<float>(v));
    for (std::uint8_t v : split->tokens.mask) mask.values.push_back(v);
    for (int v : split->labels) labels.values.push_back(static_cast<float>(v));
    for (std::int64_t v : split->sample_ids) {
      if (std::abs(static_cast<double>(v)) > kMaxExactFloatInt) {
        throw ContractError("sample id " + std::to_string(v) +
                            " is not representable in the dataset cache");
      }
      sample_ids.values.push_back(static_cast<float>(v));
    }
    records.push_back(std::move(ids));
    records.push_back(std::move(mask));
    records.push_back(std::move(labels));
    records.push_back(std::move(sample_ids));
  }
  WriteContainer(path, records);
}

EncodedDataset LoadEncodedDataset(const std::filesystem::path& path) {
  EncodedDataset ds;
  std::vector<std::pair<int, std::string>> vocab;
  std::map<std::string, ContainerRecord> by_name;
  for (ContainerRecord& rec : ReadContainer(path)) {
    if (rec.flag == kTagVocabToken) {
      if (!rec.name.starts_with("vocab:") || rec.values.size() != 1) {
        throw FormatError(path.string() + ": malformed vocabulary record");
      }
      vocab.emplace_back(static_cast<int>(rec.values[0]), rec.name.substr(6));
    } else if (rec.flag >= kTagTokenIds && rec.flag <= kTagSampleIds) {
      by_name.emplace(rec.name, std::move(rec));
    } else {
      throw FormatError(path.string() + ": record '" + rec.name +
                        "' has unknown dataset tag " + std::to_string(rec.flag));
    }
  }
  std::sort(vocab.begin(), vocab.end());
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i].first != static_cast<int>(i)) {
      throw FormatError(path.string() + ": vocabulary ids are not contiguous");
    }
    tokens.push_back(vocab[i].second);
  }
  ds.vocab = Vocabulary::FromTokens(std::move(tokens));

  auto take = [&](const std::string& name, std::uint8_t tag) -> ContainerRecord& {
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second.flag != tag) {
      throw FormatError(path.string() + ": missing dataset record '" + name + "'");
    }
    return it->second;
  };
  for (Split s : {Split::kTrain, Split::kTest}) {
    const std::string prefix(SplitName(s));
    const ContainerRecord& ids = take(prefix + ".token_ids", kTagTokenIds);
    const ContainerRecord& mask = take(prefix + ".mask", kTagMask);
    const ContainerRecord& labels = take(prefix + ".labels", kTagLabels);
    const ContainerRecord& sample_ids = take(prefix + ".sample_ids", kTagSampleIds);
    if (ids.shape.size() != 2 || mask.shape != ids.shape ||
        labels.shape != Shape{ids.shape[0]} || sample_ids.shape != labels.shape) {
      throw FormatError(path.string() + ": inconsistent shapes in split " + prefix);
    }
    EncodedSplit& split = s == Split::kTrain ? ds.train : ds.test;
    split.split = s;
    split.tokens.seq_len = ids.shape[1];
    ds.max_len = ids.shape[1];
    for (float v : ids.values) split.tokens.ids.push_back(static_cast<int>(v));
    for (float v : mask.values) split.tokens.mask.push_back(static_cast<std::uint8_t>(v));
    for (float v : labels.values) split.labels.push_back(static_cast<int>(v));
    for (float v : sample_ids.values) split.sample_ids.push_back(static_cast<std::int64_t>(v));
  }
  return ds;
}

}  // namespace pdpa
