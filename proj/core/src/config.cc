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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "pdpa/accountant.h"
#include "pdpa/errors.h"
#include "pdpa/rng.h"

namespace pdpa {
namespace {

enum class Kind { kInt, kDouble, kBool, kString, kChoice, kIntList, kDoubleList, kNameList };

struct KeySpec {
  std::string_view section;
  std::string_view key;
  Kind kind;
  std::string_view default_value;
  bool allows_auto = false;
  std::vector<std::string_view> choices = {};  // kChoice, and kNameList when non-empty
};

const std::vector<std::string_view>& Sections() {
  static const std::vector<std::string_view> kSections = {"data",  "model",   "peft",
                                                          "train", "privacy", "attack"};
  return kSections;
}

const std::vector<KeySpec>& Schema() {
  static const std::vector<KeySpec> kSchema = {
      {"data", "source", Kind::kChoice, "synthetic", false, {"synthetic", "jsonl"}},
      {"data", "train_path", Kind::kString, ""},
      {"data", "test_path", Kind::kString, ""},
      {"data", "dataset_path", Kind::kString, ""},
      {"data", "n_train", Kind::kInt, "2000"},
      {"data", "n_test", Kind::kInt, "1000"},
      {"data", "background_vocab", Kind::kInt, "2000"},
      {"data", "signal_strength", Kind::kDouble, "0.8"},
      {"data", "seed", Kind::kInt, "7"},
      {"data", "train_fraction", Kind::kDouble, "1"},
      {"data", "subsample_seed", Kind::kInt, "42"},

      {"model", "profile", Kind::kString, "desk"},
      {"model", "vocab_size", Kind::kInt, "auto", true},
      {"model", "max_len", Kind::kInt, "auto", true},
      {"model", "d_model", Kind::kInt, "auto", true},
      {"model", "n_heads", Kind::kInt, "auto", true},
      {"model", "n_layers", Kind::kInt, "auto", true},
      {"model", "d_ff", Kind::kInt, "auto", true},
      {"model", "n_classes", Kind::kInt, "auto", true},
      {"model", "has_token_type_embeddings", Kind::kBool, "auto", true},
      {"model", "has_pooler", Kind::kBool, "auto", true},
      {"model", "has_pre_classifier", Kind::kBool, "auto", true},
      {"model", "positional_embeddings_trainable", Kind::kBool, "auto", true},
      {"model", "pooling", Kind::kChoice, "auto", true, {"mean", "first"}},
      {"model", "dropout", Kind::kDouble, "0.1"},

      {"peft", "mode", Kind::kChoice, "full", false, {"full", "lora", "adapter", "ia3"}},
      {"peft", "lora_rank", Kind::kInt, "8"},
      {"peft", "lora_alpha", Kind::kDouble, "16"},
      {"peft", "lora_dropout", Kind::kDouble, "0.1"},
      {"peft", "lora_targets", Kind::kNameList, "q_lin,v_lin"},
      {"peft", "adapter_bottleneck", Kind::kInt, "32"},
      {"peft", "adapter_placement", Kind::kNameList, "post_attention,post_ff", false,
       {"post_attention", "post_ff"}},
      {"peft", "ia3_targets", Kind::kNameList, "q_lin,v_lin,out_lin"},
      {"peft", "head_trainable", Kind::kBool, "true"},
      {"peft", "head_counted", Kind::kBool, "auto", true},
      {"peft", "sweep_lora_ranks", Kind::kIntList, "8,96,480"},
      {"peft", "sweep_adapter_bottlenecks", Kind::kIntList, "32,128,512"},
      {"peft", "sweep_reference_width", Kind::kInt, "768"},

      {"train", "batch_size", Kind::kInt, "32"},
      {"train", "epochs", Kind::kInt, "auto", true},
      {"train", "learning_rate", Kind::kDouble, "auto", true},
      {"train", "optimizer", Kind::kChoice, "adamw", false, {"adamw", "sgd"}},
      {"train", "weight_decay", Kind::kDouble, "0.01"},
      {"train", "seed", Kind::kInt, "1"},
      {"train", "max_steps", Kind::kInt, "0"},
      {"train", "sweep_seeds", Kind::kIntList, "1"},
      {"train", "sweep", Kind::kChoice, "parameters", false, {"parameters", "epsilon"}},

      {"privacy", "enabled", Kind::kBool, "false"},
      {"privacy", "epsilon", Kind::kDouble, "4"},
      {"privacy", "epsilons", Kind::kDoubleList, "1,4,8"},
      {"privacy", "delta", Kind::kDouble, "1e-05"},
      {"privacy", "clip_norm", Kind::kDouble, "1.5"},
      {"privacy", "noise_multiplier", Kind::kDouble, "auto", true},

      {"attack", "canaries", Kind::kInt, "30"},
      {"attack", "trace_every_epoch", Kind::kBool, "false"},
      {"attack", "checkpoint", Kind::kString, ""},
      {"attack", "manifest", Kind::kString, ""},
  };
  return kSchema;
}

std::string FullKey(const KeySpec& spec) {
  return std::string(spec.section) + "." + std::string(spec.key);
}

const KeySpec& FindKey(std::string_view full_key) {
  for (const KeySpec& spec : Schema()) {
    if (FullKey(spec) == full_key) return spec;
  }
  throw ContractError("unknown configuration key '" + std::string(full_key) + "'");
}

std::string_view Trim(std::string_view s) {
  const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r'; };
  while (!s.empty() && !not_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && !not_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> SplitList(std::string_view s) {
  std::vector<std::string_view> items;
  if (Trim(s).empty()) return items;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(',', start);
    items.push_back(Trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) return items;
    start = pos + 1;
  }
}

[[noreturn]] void BadValue(std::string_view key, std::string_view value, std::string_view want) {
  throw ContractError("configuration key '" + std::string(key) + "' expects " +
                      std::string(want) + ", got '" + std::string(value) + "'");
}

std::string CanonicalInt(std::string_view key, std::string_view v) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    BadValue(key, v, "a non-negative integer");
  }
  return std::to_string(x);
}

std::string FormatShortest(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

std::string CanonicalDouble(std::string_view key, std::string_view v) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x)) {
    BadValue(key, v, "a finite number");
  }
  return FormatShortest(x);
}

std::string Canonicalize(const KeySpec& spec, std::string_view raw) {
  const std::string key = FullKey(spec);
  const std::string_view v = Trim(raw);
  if (v == "auto") {
    if (!spec.allows_auto) BadValue(key, v, "an explicit value");
    return "auto";
  }
  auto join = [](const std::vector<std::string>& items) {
    std::string out;
    for (const std::string& s : items) out += (out.empty() ? "" : ",") + s;
    return out;
  };
  switch (spec.kind) {
    case Kind::kInt:
      return CanonicalInt(key, v);
    case Kind::kDouble:
      return CanonicalDouble(key, v);
    case Kind::kBool:
      if (v == "true" || v == "false") return std::string(v);
      BadValue(key, v, "true or false");
    case Kind::kString:
      return std::string(v);
    case Kind::kChoice:
      if (std::find(spec.choices.begin(), spec.choices.end(), v) == spec.choices.end()) {
        std::string options;
        for (std::string_view c : spec.choices) options += (options.empty() ? "" : "|") + std::string(c);
        BadValue(key, v, "one of " + options);
      }
      return std::string(v);
    case Kind::kIntList: {
      std::vector<std::string> items;
      for (std::string_view item : SplitList(v)) items.push_back(CanonicalInt(key, item));
      return join(items);
    }
    case Kind::kDoubleList: {
      std::vector<std::string> items;
      for (std::string_view item : SplitList(v)) items.push_back(CanonicalDouble(key, item));
      return join(items);
    }
    case Kind::kNameList: {
      std::vector<std::string> items;
      for (std::string_view item : SplitList(v)) {
        std::string name(item);
        // Hyphenated spellings are accepted for choice lists.
        if (!spec.choices.empty()) std::replace(name.begin(), name.end(), '-', '_');
        if (name.empty()) BadValue(key, v, "a list without empty items");
        if (!spec.choices.empty() &&
            std::find(spec.choices.begin(), spec.choices.end(), name) == spec.choices.end()) {
          BadValue(key, item, "a known name");
        }
        items.push_back(std::move(name));
      }
      return join(items);
    }
  }
  return std::string(v);
}

std::uint64_t AsUint(const ExperimentConfig& c, std::string_view key) {
  const std::string& v = c.Get(key);
  if (v == "auto") throw ContractError("configuration key '" + std::string(key) + "' is unresolved");
  return std::stoull(v);
}

double AsDouble(const ExperimentConfig& c, std::string_view key) {
  const std::string& v = c.Get(key);
  if (v == "auto") throw ContractError("configuration key '" + std::string(key) + "' is unresolved");
  double x = 0.0;
  std::from_chars(v.data(), v.data() + v.size(), x);
  return x;
}

bool AsBool(const ExperimentConfig& c, std::string_view key) {
  const std::string& v = c.Get(key);
  if (v == "auto") throw ContractError("configuration key '" + std::string(key) + "' is unresolved");
  return v == "true";
}

std::vector<std::string> AsNames(const ExperimentConfig& c, std::string_view key) {
  std::vector<std::string> out;
  for (std::string_view s : SplitList(c.Get(key))) out.emplace_back(s);
  return out;
}

std::size_t AsSize(const ExperimentConfig& c, std::string_view key) {
  return static_cast<std::size_t>(AsUint(c, key));
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (const KeySpec& spec : Schema()) {
    values_.emplace(FullKey(spec), std::string(spec.default_value));
  }
}

ExperimentConfig ExperimentConfig::Parse(std::string_view text, std::string_view origin) {
  ExperimentConfig config;
  std::string section;
  std::set<std::string> assigned;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    std::string_view line = raw;
    // A comment starts at '#' at the beginning of a line or after whitespace.
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line = line.substr(0, i);
        break;
      }
    }
    line = Trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError(where + ": malformed section header");
      section = std::string(Trim(line.substr(1, line.size() - 2)));
      if (std::find(Sections().begin(), Sections().end(), section) == Sections().end()) {
        throw ContractError(where + ": unknown section [" + section + "]");
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError(where + ": expected 'key = value'");
    if (section.empty()) throw FormatError(where + ": assignment outside of a section");
    const std::string key = section + "." + std::string(Trim(line.substr(0, eq)));
    if (!assigned.insert(key).second) {
      throw ContractError(where + ": key '" + key + "' assigned twice");
    }
    try {
      config.Set(key, line.substr(eq + 1));
    } catch (const ContractError& e) {
      throw ContractError(where + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig ExperimentConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open configuration " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return Parse(buffer.str(), path.string());
}

void ExperimentConfig::Set(std::string_view key, std::string_view value) {
  const KeySpec& spec = FindKey(key);
  values_[FullKey(spec)] = Canonicalize(spec, value);
}

void ExperimentConfig::ApplyOverride(std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ContractError("override '" + std::string(assignment) +
                        "' is not of the form section.key=value");
  }
  Set(Trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& ExperimentConfig::Get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw ContractError("unknown configuration key '" + std::string(key) + "'");
  }
  return it->second;
}

std::string ExperimentConfig::Emit() const {
  std::string out;
  std::string_view section;
  for (const KeySpec& spec : Schema()) {
    if (spec.section != section) {
      if (!section.empty()) out += "\n";
      section = spec.section;
      out += "[" + std::string(section) + "]\n";
    }
    out += std::string(spec.key) + " = " + Get(FullKey(spec)) + "\n";
  }
  return out;
}

std::uint64_t ExperimentConfig::Hash() const { return Fnv1a64(Emit()); }

double DefaultLearningRate(PeftMode mode, bool private_training, std::string_view profile) {
  double rate = 0.0;
  switch (mode) {
    case PeftMode::kFull: rate = private_training ? 7e-5 : 5e-5; break;
    case PeftMode::kAdapter: rate = private_training ? 1e-3 : 5e-4; break;
    case PeftMode::kLora: rate = private_training ? 8e-4 : 5e-4; break;
    case PeftMode::kIa3: rate = 7e-3; break;
  }
  // The small desk model trains with ten times the reference rates.
  return profile == "desk" ? rate * 10.0 : rate;
}

int DefaultEpochs(PeftMode mode) { return mode == PeftMode::kAdapter ? 5 : 3; }

ExperimentConfig Resolve(const ExperimentConfig& config, std::optional<std::size_t> train_size) {
  ExperimentConfig out = config;
  const ArchitectureProfile& profile = FindProfile(config.Get("model.profile"));
  const ModelConfig& base = profile.config;
  auto fill = [&](std::string_view key, const std::string& value) {
    if (out.IsAuto(key)) out.Set(key, value);
  };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  fill("model.vocab_size", std::to_string(base.vocab_size));
  fill("model.max_len", std::to_string(base.max_len));
  fill("model.d_model", std::to_string(base.d_model));
  fill("model.n_heads", std::to_string(base.n_heads));
  fill("model.n_layers", std::to_string(base.n_layers));
  fill("model.d_ff", std::to_string(base.d_ff));
  fill("model.n_classes", std::to_string(base.n_classes));
  fill("model.has_token_type_embeddings", b(base.has_token_type_embeddings));
  fill("model.has_pooler", b(base.has_pooler));
  fill("model.has_pre_classifier", b(base.has_pre_classifier));
  fill("model.positional_embeddings_trainable", b(base.positional_embeddings_trainable));
  fill("model.pooling", std::string(PoolingName(base.pooling)));

  const PeftMode mode = ParsePeftMode(config.Get("peft.mode"));
  const bool private_training = AsBool(config, "privacy.enabled");
  PeftConfig peft;
  peft.mode = mode;
  fill("peft.head_counted", b(peft.HeadCounted()));
  fill("train.epochs", std::to_string(DefaultEpochs(mode)));
  fill("train.learning_rate",
       FormatShortest(DefaultLearningRate(mode, private_training, profile.name)));

  if (private_training && out.IsAuto("privacy.noise_multiplier")) {
    std::size_t n = 0;
    if (train_size) {
      n = *train_size;
    } else if (out.Get("data.source") == "synthetic" && out.Get("data.dataset_path").empty()) {
      n = static_cast<std::size_t>(std::llround(AsDouble(out, "data.train_fraction") *
                                                AsDouble(out, "data.n_train")));
    } else {
      return out;  // calibrated once the training split is known
    }
    const std::size_t batch = AsSize(out, "train.batch_size");
    if (n == 0 || batch == 0 || batch > n) {
      throw ContractError("private training needs 0 < batch_size <= training-set size");
    }
    std::int64_t steps = StepsForEpochs(static_cast<std::int64_t>(n),
                                        static_cast<std::int64_t>(batch),
                                        AsDouble(out, "train.epochs"));
    const std::size_t max_steps = AsSize(out, "train.max_steps");
    if (max_steps > 0) steps = std::min<std::int64_t>(steps, static_cast<std::int64_t>(max_steps));
    const Calibration cal = CalibrateNoise(
        AsDouble(out, "privacy.epsilon"), AsDouble(out, "privacy.delta"),
        static_cast<double>(batch) / static_cast<double>(n), steps);
    out.Set("privacy.noise_multiplier", FormatShortest(cal.noise_multiplier));
  }
  return out;
}

RunSettings Interpret(const ExperimentConfig& c) {
  RunSettings s;
  s.data.source = c.Get("data.source");
  s.data.train_path = c.Get("data.train_path");
  s.data.test_path = c.Get("data.test_path");
  s.data.dataset_path = c.Get("data.dataset_path");
  s.data.n_train = AsSize(c, "data.n_train");
  s.data.n_test = AsSize(c, "data.n_test");
  s.data.background_vocab = AsSize(c, "data.background_vocab");
  s.data.signal_strength = AsDouble(c, "data.signal_strength");
  s.data.seed = AsUint(c, "data.seed");
  s.data.train_fraction = AsDouble(c, "data.train_fraction");
  s.data.subsample_seed = AsUint(c, "data.subsample_seed");

  s.profile = c.Get("model.profile");
  FindProfile(s.profile);
  ModelConfig& m = s.model;
  m.vocab_size = AsSize(c, "model.vocab_size");
  m.max_len = AsSize(c, "model.max_len");
  m.d_model = AsSize(c, "model.d_model");
  m.n_heads = AsSize(c, "model.n_heads");
  m.n_layers = AsSize(c, "model.n_layers");
  m.d_ff = AsSize(c, "model.d_ff");
  m.n_classes = AsSize(c, "model.n_classes");
  m.has_token_type_embeddings = AsBool(c, "model.has_token_type_embeddings");
  m.has_pooler = AsBool(c, "model.has_pooler");
  m.has_pre_classifier = AsBool(c, "model.has_pre_classifier");
  m.positional_embeddings_trainable = AsBool(c, "model.positional_embeddings_trainable");
  m.pooling = ParsePooling(c.Get("model.pooling"));
  m.dropout = AsDouble(c, "model.dropout");
  m.Validate();

  PeftConfig& p = s.peft;
  p.mode = ParsePeftMode(c.Get("peft.mode"));
  p.lora_rank = AsSize(c, "peft.lora_rank");
  p.lora_alpha = AsDouble(c, "peft.lora_alpha");
  p.lora_dropout = AsDouble(c, "peft.lora_dropout");
  p.lora_targets = AsNames(c, "peft.lora_targets");
  p.adapter_bottleneck = AsSize(c, "peft.adapter_bottleneck");
  p.adapter_placement.clear();
  for (const std::string& name : AsNames(c, "peft.adapter_placement")) {
    p.adapter_placement.push_back(ParseAdapterPlacement(name));
  }
  p.ia3_targets = AsNames(c, "peft.ia3_targets");
  p.head_trainable = AsBool(c, "peft.head_trainable");
  if (!c.IsAuto("peft.head_counted")) p.head_counted = AsBool(c, "peft.head_counted");

  for (const std::string& v : AsNames(c, "peft.sweep_lora_ranks")) s.sweep.lora_ranks.push_back(std::stoull(v));
  for (const std::string& v : AsNames(c, "peft.sweep_adapter_bottlenecks")) {
    s.sweep.adapter_bottlenecks.push_back(std::stoull(v));
  }
  s.sweep.reference_width = AsSize(c, "peft.sweep_reference_width");

  s.train.batch_size = AsSize(c, "train.batch_size");
  s.train.epochs = static_cast<int>(AsUint(c, "train.epochs"));
  s.train.learning_rate = AsDouble(c, "train.learning_rate");
  s.train.optimizer = c.Get("train.optimizer") == "sgd" ? OptimizerKind::kSgd : OptimizerKind::kAdamW;
  s.train.weight_decay = AsDouble(c, "train.weight_decay");
  s.train.seed = AsUint(c, "train.seed");
  s.train.max_steps = AsSize(c, "train.max_steps");
  for (const std::string& v : AsNames(c, "train.sweep_seeds")) s.train.sweep_seeds.push_back(std::stoull(v));
  s.train.sweep = c.Get("train.sweep") == "epsilon" ? SweepKind::kEpsilon : SweepKind::kParameters;
  if (s.train.batch_size == 0) throw ContractError("train.batch_size must be positive");
  if (s.train.epochs == 0) throw ContractError("train.epochs must be positive");
  if (!(s.train.learning_rate > 0.0)) throw ContractError("train.learning_rate must be positive");

  s.privacy.enabled = AsBool(c, "privacy.enabled");
  s.privacy.epsilon = AsDouble(c, "privacy.epsilon");
  for (const std::string& v : AsNames(c, "privacy.epsilons")) s.privacy.epsilons.push_back(std::stod(v));
  s.privacy.delta = AsDouble(c, "privacy.delta");
  s.privacy.clip_norm = AsDouble(c, "privacy.clip_norm");
  if (!c.IsAuto("privacy.noise_multiplier")) {
    s.privacy.noise_multiplier = AsDouble(c, "privacy.noise_multiplier");
  }
  if (s.privacy.enabled) {
    if (!(s.privacy.delta > 0.0 && s.privacy.delta < 1.0)) {
      throw ContractError("privacy.delta must lie in (0, 1)");
    }
    if (!(s.privacy.clip_norm > 0.0)) throw ContractError("privacy.clip_norm must be positive");
  }

  s.attack.canaries = AsSize(c, "attack.canaries");
  s.attack.trace_every_epoch = AsBool(c, "attack.trace_every_epoch");
  s.attack.checkpoint = c.Get("attack.checkpoint");
  s.attack.manifest = c.Get("attack.manifest");
  return s;
}

}  // namespace pdpa
