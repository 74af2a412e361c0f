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

#ifndef PDPA_REGISTRY_H_
#define PDPA_REGISTRY_H_

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pdpa/tensor.h"

namespace pdpa {

struct Parameter {
  std::string name;  // hierarchical, e.g. "layer.3.attention.q_lin.weight"
  Tensor value;
  bool trainable = true;
};

// Named model parameters in insertion order. Names are unique.
class ParameterRegistry {
 public:
  void Add(std::string name, Tensor value, bool trainable = true);

  bool Contains(std::string_view name) const;
  std::optional<std::size_t> IndexOf(std::string_view name) const;
  const Parameter& Get(std::string_view name) const;
  Parameter& Get(std::string_view name);
  const Parameter& at(std::size_t i) const { return entries_[i]; }
  Parameter& at(std::size_t i) { return entries_[i]; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  void SetTrainable(std::string_view name, bool trainable);
  void FreezeAll();

  std::size_t TotalParameters() const;
  std::size_t TrainableParameters() const;
  std::vector<std::string> TrainableNames() const;

 private:
  std::vector<Parameter> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Flat layout of the trainable parameters of a registry, in registry order.
// Per-sample gradients, clipping, noise and optimizer state all use it.
class ParameterLayout {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t registry_index;
    std::size_t offset;
    std::size_t size;
  };

  static std::shared_ptr<const ParameterLayout> Trainable(
      const ParameterRegistry& registry);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t total() const { return total_; }
  // Layout position of a registry index, if that parameter is trainable.
  std::optional<std::size_t> SlotOf(std::size_t registry_index) const;
  std::optional<std::size_t> SlotOf(std::string_view name) const;

 private:
  std::vector<Entry> entries_;
  std::vector<std::optional<std::size_t>> slot_by_registry_index_;
  std::size_t total_ = 0;
};

// Gradient keyed by parameter name, stored as one flat vector so that norms
// are taken jointly over all trainable parameters.
class GradientMap {
 public:
  GradientMap() = default;
  explicit GradientMap(std::shared_ptr<const ParameterLayout> layout);

  const ParameterLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ParameterLayout>& shared_layout() const {
    return layout_;
  }

  std::span<const double> Get(std::string_view name) const;
  std::span<double> Get(std::string_view name);
  Tensor AsTensor(std::string_view name) const;

  std::span<const double> flat() const { return values_; }
  std::span<double> flat() { return values_; }

  double L2Norm() const;
  bool AllFinite() const;

 private:
  std::shared_ptr<const ParameterLayout> layout_;
  std::vector<double> values_;
};

}  // namespace pdpa

#endif  // PDPA_REGISTRY_H_
