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

#include "pdpa/registry.h"

#include <cmath>

#include "pdpa/errors.h"

namespace pdpa {

void ParameterRegistry::Add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) {
    throw ContractError("duplicate parameter name: " + name);
  }
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value), trainable});
}

bool ParameterRegistry::Contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::optional<std::size_t> ParameterRegistry::IndexOf(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Parameter& ParameterRegistry::Get(std::string_view name) const {
  auto idx = IndexOf(name);
  if (!idx) throw ContractError("unknown parameter: " + std::string(name));
  return entries_[*idx];
}

Parameter& ParameterRegistry::Get(std::string_view name) {
  auto idx = IndexOf(name);
  if (!idx) throw ContractError("unknown parameter: " + std::string(name));
  return entries_[*idx];
}

void ParameterRegistry::SetTrainable(std::string_view name, bool trainable) {
  Get(name).trainable = trainable;
}

void ParameterRegistry::FreezeAll() {
  for (Parameter& p : entries_) p.trainable = false;
}

std::size_t ParameterRegistry::TotalParameters() const {
  std::size_t n = 0;
  for (const Parameter& p : entries_) n += p.value.size();
  return n;
}

std::size_t ParameterRegistry::TrainableParameters() const {
  std::size_t n = 0;
  for (const Parameter& p : entries_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

std::vector<std::string> ParameterRegistry::TrainableNames() const {
  std::vector<std::string> names;
  for (const Parameter& p : entries_) {
    if (p.trainable) names.push_back(p.name);
  }
  return names;
}

std::shared_ptr<const ParameterLayout> ParameterLayout::Trainable(
    const ParameterRegistry& registry) {
  auto layout = std::make_shared<ParameterLayout>();
  layout->slot_by_registry_index_.resize(registry.size());
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const Parameter& p = registry.at(i);
    if (!p.trainable) continue;
    layout->slot_by_registry_index_[i] = layout->entries_.size();
    layout->entries_.push_back(
        {p.name, p.value.shape(), i, layout->total_, p.value.size()});
    layout->total_ += p.value.size();
  }
  return layout;
}

std::optional<std::size_t> ParameterLayout::SlotOf(std::size_t registry_index) const {
  if (registry_index >= slot_by_registry_index_.size()) return std::nullopt;
  return slot_by_registry_index_[registry_index];
}

std::optional<std::size_t> ParameterLayout::SlotOf(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

GradientMap::GradientMap(std::shared_ptr<const ParameterLayout> layout)
    : layout_(std::move(layout)), values_(layout_->total(), 0.0) {}

std::span<const double> GradientMap::Get(std::string_view name) const {
  auto slot = layout_->SlotOf(name);
  if (!slot) throw ContractError("no gradient for parameter: " + std::string(name));
  const auto& e = layout_->entries()[*slot];
  return std::span<const double>(values_).subspan(e.offset, e.size);
}

std::span<double> GradientMap::Get(std::string_view name) {
  auto slot = layout_->SlotOf(name);
  if (!slot) throw ContractError("no gradient for parameter: " + std::string(name));
  const auto& e = layout_->entries()[*slot];
  return std::span<double>(values_).subspan(e.offset, e.size);
}

Tensor GradientMap::AsTensor(std::string_view name) const {
  auto slot = layout_->SlotOf(name);
  if (!slot) throw ContractError("no gradient for parameter: " + std::string(name));
  const auto& e = layout_->entries()[*slot];
  return Tensor(e.shape, std::vector<double>(values_.begin() + e.offset,
                                             values_.begin() + e.offset + e.size));
}

double GradientMap::L2Norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

bool GradientMap::AllFinite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace pdpa
