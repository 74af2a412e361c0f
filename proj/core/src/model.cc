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

#include "pdpa/model.h"

#include <array>
#include <cmath>
#include <random>
#include <string>

#include "pdpa/errors.h"

namespace pdpa {
namespace {

bool IsLayerNormName(std::string_view name) {
  return name.find("LayerNorm") != std::string_view::npos ||
         name.find("layer_norm") != std::string_view::npos;
}

bool EndsWith(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

ad::Var Dropout(ad::Var x, double rate, const ForwardOptions& options) {
  if (!options.training || rate <= 0.0) return x;
  if (options.dropout_rng == nullptr) {
    throw ContractError("training forward needs a dropout generator");
  }
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  Tensor mask(x.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = keep(*options.dropout_rng) ? scale : 0.0;
  }
  return ad::ApplyMask(x, mask);
}

// Dense projection with any LoRA / (IA)^3 hooks registered under `prefix`.
ad::Var Project(const Model& model, ParameterBinding& p, const std::string& prefix,
                ad::Var x, const ForwardOptions& options) {
  ad::Var y = ad::AddBias(ad::MatMul(x, p(prefix + ".weight")), p(prefix + ".bias"));
  const std::string lora_a = prefix + ".lora_A";
  if (p.Has(lora_a)) {
    ad::Var in = Dropout(x, model.peft.lora_dropout, options);
    ad::Var delta = ad::MatMul(ad::MatMul(in, p(lora_a)), p(prefix + ".lora_B"));
    y = ad::Add(y, ad::Scale(delta, model.peft.LoraScaling()));
  }
  const std::string ia3 = prefix + ".ia3";
  if (p.Has(ia3)) y = ad::ScaleColumns(y, p(ia3));
  return y;
}

ad::Var AdapterBlock(ParameterBinding& p, const std::string& prefix, ad::Var h) {
  if (!p.Has(prefix + ".down.weight")) return h;
  ad::Var down = ad::AddBias(ad::MatMul(h, p(prefix + ".down.weight")),
                             p(prefix + ".down.bias"));
  ad::Var up = ad::AddBias(ad::MatMul(ad::Gelu(down), p(prefix + ".up.weight")),
                           p(prefix + ".up.bias"));
  return ad::Add(h, up);
}

ad::Var SelfAttention(const Model& model, ParameterBinding& p, std::size_t layer,
                      ad::Var h, const ForwardOptions& options) {
  const ModelConfig& cfg = model.config;
  ad::Var q = Project(model, p, ModulePrefix("q_lin", layer), h, options);
  ad::Var k = Project(model, p, ModulePrefix("k_lin", layer), h, options);
  ad::Var v = Project(model, p, ModulePrefix("v_lin", layer), h, options);
  const std::size_t dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Var> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t head = 0; head < cfg.n_heads; ++head) {
    ad::Var qh = ad::SliceColumns(q, head * dh, dh);
    ad::Var kh = ad::SliceColumns(k, head * dh, dh);
    ad::Var vh = ad::SliceColumns(v, head * dh, dh);
    ad::Var weights = ad::Softmax(ad::Scale(ad::MatMulTransposed(qh, kh), scale));
    weights = Dropout(weights, cfg.dropout, options);
    heads.push_back(ad::MatMul(weights, vh));
  }
  ad::Var context = heads.size() == 1 ? heads[0] : ad::ConcatColumns(heads);
  return Project(model, p, ModulePrefix("out_lin", layer), context, options);
}

}  // namespace

std::string_view PoolingName(Pooling pooling) {
  return pooling == Pooling::kMean ? "mean" : "first";
}

Pooling ParsePooling(std::string_view name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "first") return Pooling::kFirstToken;
  throw ContractError("unknown pooling '" + std::string(name) + "' (mean|first)");
}

void ModelConfig::Validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ContractError(std::string("model.") + what + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(max_len, "max_len");
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(n_layers, "n_layers");
  positive(d_ff, "d_ff");
  if (d_model % n_heads != 0) {
    throw ContractError("model.d_model (" + std::to_string(d_model) +
                        ") must be divisible by model.n_heads (" +
                        std::to_string(n_heads) + ")");
  }
  if (n_classes < 2) throw ContractError("model.n_classes must be at least 2");
  if (has_token_type_embeddings && n_token_types == 0) {
    throw ContractError("model.n_token_types must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ContractError("model.dropout must lie in [0, 1)");
  }
}

std::span<const ArchitectureProfile> Profiles() {
  static const std::array<ArchitectureProfile, 3> kProfiles = [] {
    ModelConfig distil;
    distil.vocab_size = 30522;
    distil.max_len = 512;
    distil.d_model = 768;
    distil.n_heads = 12;
    distil.n_layers = 6;
    distil.d_ff = 3072;
    distil.n_classes = 2;
    distil.has_pre_classifier = true;
    distil.pooling = Pooling::kFirstToken;

    ModelConfig bert = distil;
    bert.n_layers = 12;
    bert.has_token_type_embeddings = true;
    bert.n_token_types = 2;
    bert.has_pooler = true;
    bert.has_pre_classifier = false;

    ModelConfig desk;  // struct defaults
    return std::array<ArchitectureProfile, 3>{
        ArchitectureProfile{"distilbert-dims", distil},
        ArchitectureProfile{"bert-base-dims", bert},
        ArchitectureProfile{"desk", desk}};
  }();
  return kProfiles;
}

const ArchitectureProfile& FindProfile(std::string_view name) {
  for (const ArchitectureProfile& p : Profiles()) {
    if (p.name == name) return p;
  }
  throw ContractError("unknown architecture profile '" + std::string(name) +
                      "' (distilbert-dims|bert-base-dims|desk)");
}

std::string ModulePrefix(std::string_view module, std::size_t layer) {
  const std::string base = "layer." + std::to_string(layer);
  if (module == "q_lin" || module == "k_lin" || module == "v_lin" ||
      module == "out_lin") {
    return base + ".attention." + std::string(module);
  }
  if (module == "lin1" || module == "lin2") return base + ".ffn." + std::string(module);
  throw ContractError("unknown target module '" + std::string(module) +
                      "' (q_lin|k_lin|v_lin|out_lin|lin1|lin2)");
}

std::pair<std::size_t, std::size_t> ModuleDims(const ModelConfig& config,
                                               std::string_view module) {
  if (module == "lin1") return {config.d_model, config.d_ff};
  if (module == "lin2") return {config.d_ff, config.d_model};
  ModulePrefix(module, 0);  // validates the name
  return {config.d_model, config.d_model};
}

bool IsHeadParameter(std::string_view name) {
  return name.starts_with("classifier.") || name.starts_with("pre_classifier.");
}

std::vector<ParameterSpec> DescribeBaseParameters(const ModelConfig& config) {
  config.Validate();
  const std::size_t d = config.d_model;
  std::vector<ParameterSpec> specs;
  auto add = [&specs](std::string name, Shape shape, ParameterRole role) {
    specs.push_back({std::move(name), std::move(shape), role});
  };
  auto add_linear = [&](const std::string& prefix, std::size_t in, std::size_t out,
                        ParameterRole role) {
    add(prefix + ".weight", {in, out}, role);
    add(prefix + ".bias", {out}, role);
  };
  auto add_norm = [&](const std::string& prefix, ParameterRole role) {
    add(prefix + ".weight", {d}, role);
    add(prefix + ".bias", {d}, role);
  };

  add("embeddings.word_embeddings.weight", {config.vocab_size, d},
      ParameterRole::kEmbedding);
  add("embeddings.position_embeddings.weight", {config.max_len, d},
      ParameterRole::kPositional);
  if (config.has_token_type_embeddings) {
    add("embeddings.token_type_embeddings.weight", {config.n_token_types, d},
        ParameterRole::kEmbedding);
  }
  add_norm("embeddings.LayerNorm", ParameterRole::kEmbedding);

  for (std::size_t layer = 0; layer < config.n_layers; ++layer) {
    const std::string base = "layer." + std::to_string(layer);
    for (const char* m : {"q_lin", "k_lin", "v_lin", "out_lin"}) {
      add_linear(ModulePrefix(m, layer), d, d, ParameterRole::kEncoder);
    }
    add_norm(base + ".sa_layer_norm", ParameterRole::kEncoder);
    add_linear(ModulePrefix("lin1", layer), d, config.d_ff, ParameterRole::kEncoder);
    add_linear(ModulePrefix("lin2", layer), config.d_ff, d, ParameterRole::kEncoder);
    add_norm(base + ".output_layer_norm", ParameterRole::kEncoder);
  }

  if (config.has_pooler) add_linear("pooler.dense", d, d, ParameterRole::kPooler);
  if (config.has_pre_classifier) {
    add_linear("pre_classifier", d, d, ParameterRole::kHead);
  }
  add_linear("classifier", d, config.n_classes, ParameterRole::kHead);
  return specs;
}

Model BuildModel(const ModelConfig& config, std::uint64_t seed) {
  Model model;
  model.config = config;
  Rng rng = RngStreams(seed).Stream("init");
  std::normal_distribution<double> normal(0.0, 0.02);
  for (ParameterSpec& spec : DescribeBaseParameters(config)) {
    Tensor value(spec.shape);
    if (IsLayerNormName(spec.name)) {
      if (EndsWith(spec.name, ".weight")) value = Tensor::Full(spec.shape, 1.0);
    } else if (!EndsWith(spec.name, ".bias")) {
      for (double& v : value.mutable_data()) v = normal(rng);
    }
    const bool trainable = spec.role != ParameterRole::kPositional ||
                           config.positional_embeddings_trainable;
    model.params.Add(std::move(spec.name), std::move(value), trainable);
  }
  return model;
}

ParameterBinding::ParameterBinding(const ParameterRegistry& registry, ad::Tape& tape)
    : registry_(registry), tape_(tape), leaves_(registry.size()) {}

ad::Var ParameterBinding::operator()(std::string_view name) {
  const auto idx = registry_.IndexOf(name);
  if (!idx) throw ContractError("model is missing parameter " + std::string(name));
  std::optional<ad::Var>& leaf = leaves_[*idx];
  if (!leaf) {
    const Parameter& p = registry_.at(*idx);
    leaf = tape_.Watch(p.value, p.trainable);
  }
  return *leaf;
}

GradientMap ParameterBinding::Gradients(
    std::shared_ptr<const ParameterLayout> layout) const {
  GradientMap grads(layout);
  std::span<double> flat = grads.flat();
  for (const ParameterLayout::Entry& e : layout->entries()) {
    if (e.registry_index >= leaves_.size() || !leaves_[e.registry_index]) continue;
    const Tensor* g = tape_.FindGrad(*leaves_[e.registry_index]);
    if (g == nullptr) continue;
    std::copy(g->data().begin(), g->data().end(), flat.begin() + e.offset);
  }
  return grads;
}

ad::Var ForwardSequence(const Model& model, ParameterBinding& p,
                        std::span<const int> ids, std::span<const std::uint8_t> mask,
                        const ForwardOptions& options) {
  const ModelConfig& cfg = model.config;
  if (ids.size() != mask.size()) {
    throw ContractError("token ids and padding mask differ in length");
  }
  if (ids.size() > cfg.max_len) {
    throw ContractError("sequence length " + std::to_string(ids.size()) +
                        " exceeds max_len " + std::to_string(cfg.max_len));
  }
  std::vector<int> tokens, positions;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (mask[i] == 0) continue;
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= cfg.vocab_size) {
      throw ContractError("token id " + std::to_string(ids[i]) +
                          " out of range for vocab_size " +
                          std::to_string(cfg.vocab_size));
    }
    tokens.push_back(ids[i]);
    positions.push_back(static_cast<int>(i));
  }
  if (tokens.empty()) throw ContractError("sequence has no unmasked tokens");

  ad::Var h = ad::Add(ad::Embedding(p("embeddings.word_embeddings.weight"), tokens),
                      ad::Embedding(p("embeddings.position_embeddings.weight"), positions));
  if (cfg.has_token_type_embeddings) {
    const std::vector<int> segment(tokens.size(), 0);
    h = ad::Add(h, ad::Embedding(p("embeddings.token_type_embeddings.weight"), segment));
  }
  h = ad::LayerNorm(h, p("embeddings.LayerNorm.weight"), p("embeddings.LayerNorm.bias"));
  h = Dropout(h, cfg.dropout, options);

  for (std::size_t layer = 0; layer < cfg.n_layers; ++layer) {
    const std::string base = "layer." + std::to_string(layer);
    ad::Var attn = SelfAttention(model, p, layer, h, options);
    attn = Dropout(attn, cfg.dropout, options);
    h = ad::LayerNorm(ad::Add(h, attn), p(base + ".sa_layer_norm.weight"),
                      p(base + ".sa_layer_norm.bias"));
    h = AdapterBlock(p, base + ".adapter.post_attention", h);

    ad::Var ff = ad::Gelu(Project(model, p, ModulePrefix("lin1", layer), h, options));
    ff = Project(model, p, ModulePrefix("lin2", layer), ff, options);
    ff = Dropout(ff, cfg.dropout, options);
    h = ad::LayerNorm(ad::Add(h, ff), p(base + ".output_layer_norm.weight"),
                      p(base + ".output_layer_norm.bias"));
    h = AdapterBlock(p, base + ".adapter.post_ff", h);
  }

  ad::Var pooled = cfg.pooling == Pooling::kMean ? ad::MeanRows(h) : ad::SelectRow(h, 0);
  if (cfg.has_pooler) {
    pooled = ad::Tanh(ad::AddBias(ad::MatMul(pooled, p("pooler.dense.weight")),
                                  p("pooler.dense.bias")));
  }
  if (cfg.has_pre_classifier) {
    pooled = ad::Relu(ad::AddBias(ad::MatMul(pooled, p("pre_classifier.weight")),
                                  p("pre_classifier.bias")));
  }
  pooled = Dropout(pooled, cfg.dropout, options);
  return ad::AddBias(ad::MatMul(pooled, p("classifier.weight")), p("classifier.bias"));
}

Tensor ForwardClassify(const Model& model, const TokenBatch& batch) {
  const std::size_t n = batch.size();
  const std::size_t c = model.config.n_classes;
  Tensor logits({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    ad::Tape tape(/*recording=*/false);
    ParameterBinding params(model.params, tape);
    ad::Var out = ForwardSequence(model, params, batch.ids_of(i), batch.mask_of(i));
    std::copy_n(out.value().raw(), c, logits.raw() + i * c);
  }
  return logits;
}

std::vector<double> LossPerSample(const Tensor& logits, std::span<const int> labels) {
  ad::Tape tape(/*recording=*/false);
  ad::Var losses = ad::CrossEntropyWithLogits(tape.Constant(logits), labels);
  const auto data = losses.value().data();
  return std::vector<double>(data.begin(), data.end());
}

}  // namespace pdpa
