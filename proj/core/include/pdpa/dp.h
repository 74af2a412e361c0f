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

// Sample-level DP-SGD: per-sample clipping and the noisy averaged update.

#ifndef PDPA_DP_H_
#define PDPA_DP_H_

#include <span>
#include <vector>

#include "pdpa/registry.h"
#include "pdpa/rng.h"

namespace pdpa {

// Rescales `grad` to g * min(1, C / ||g||) where the norm is taken jointly
// over all trainable parameters. Returns the norm before clipping. An
// infinite `clip_norm` leaves the gradient untouched.
double ClipInPlace(GradientMap& grad, double clip_norm);

std::vector<GradientMap> ClipPerSample(std::span<const GradientMap> grads,
                                       double clip_norm);

// Running sum of per-sample gradients, added in call order.
class GradientSum {
 public:
  explicit GradientSum(std::shared_ptr<const ParameterLayout> layout)
      : sum_(std::move(layout)) {}

  void Add(const GradientMap& grad);
  const GradientMap& sum() const { return sum_; }
  std::size_t count() const { return count_; }

  // (sum + N(0, (sigma*C)^2 I)) / expected_batch_size. sigma = 0 adds no
  // noise, making the result the plain mean of the summed gradients.
  GradientMap NoisyAverage(double noise_multiplier, double clip_norm,
                           double expected_batch_size, Rng& noise_rng) const;

 private:
  GradientMap sum_;
  std::size_t count_ = 0;
};

// DP-SGD update direction from already clipped per-sample gradients.
GradientMap DpSgdStep(std::span<const GradientMap> clipped, double noise_multiplier,
                      double clip_norm, double expected_batch_size, Rng& noise_rng);

// Non-private update direction: the sum of `grads` divided by `batch_size`.
GradientMap MeanGradient(std::span<const GradientMap> grads, double batch_size);

}  // namespace pdpa

#endif  // PDPA_DP_H_
