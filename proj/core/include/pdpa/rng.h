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

#ifndef PDPA_RNG_H_
#define PDPA_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace pdpa {

using Rng = std::mt19937_64;

// Derives independent generators from one master seed. A stream is named
// by role ("init", "data-order", "dropout", "noise", "canary-selection") and
// an optional counter, so turning on DP noise never shifts the data order.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t master_seed) : master_(master_seed) {}

  Rng Stream(std::string_view name, std::uint64_t counter = 0) const;
  std::uint64_t master() const { return master_; }

 private:
  std::uint64_t master_;
};

std::uint64_t SplitMix64(std::uint64_t x);
std::uint64_t Fnv1a64(std::string_view bytes);

}  // namespace pdpa

#endif  // PDPA_RNG_H_
