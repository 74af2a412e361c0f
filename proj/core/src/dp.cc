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

#include "pdpa/dp.h"

#include <cmath>
#include <random>
#include <string>

#include "pdpa/errors.h"

namespace pdpa {

double ClipInPlace(GradientMap& grad, double clip_norm) {
  if (!(clip_norm > 0.0)) throw ContractError("clip norm must be positive");
  if (!grad.AllFinite()) throw NumericError("non-finite per-sample gradient");
  const double norm = grad.L2Norm();
  if (std::isinf(clip_norm) || norm <= clip_norm) return norm;
  const double factor = clip_norm / norm;
  for (double& v : grad.flat()) v *= factor;
  return norm;
}

std::vector<GradientMap> ClipPerSample(std::span<const GradientMap> grads,
                                       double clip_norm) {
  std::vector<GradientMap> out(grads.begin(), grads.end());
  for (GradientMap& g : out) ClipInPlace(g, clip_norm);
  return out;
}

void GradientSum::Add(const GradientMap& grad) {
  if (grad.layout().total() != sum_.layout().total()) {
    throw ContractError("gradient layout does not match the accumulator");
  }
  std::span<double> dst = sum_.flat();
  std::span<const double> src = grad.flat();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  ++count_;
}

GradientMap GradientSum::NoisyAverage(double noise_multiplier, double clip_norm,
                                      double expected_batch_size,
                                      Rng& noise_rng) const {
  if (noise_multiplier < 0.0 || std::isnan(noise_multiplier)) {
    throw ContractError("noise multiplier must be non-negative");
  }
  if (!(expected_batch_size > 0.0)) {
    throw ContractError("expected batch size must be positive");
  }
  GradientMap out = sum_;
  std::span<double> values = out.flat();
  if (noise_multiplier > 0.0) {
    const double stddev = noise_multiplier * clip_norm;
    if (!std::isfinite(stddev)) {
      throw ContractError("noise needs a finite clip norm");
    }
    std::normal_distribution<double> noise(0.0, stddev);
    for (double& v : values) v += noise(noise_rng);
  }
  for (double& v : values) v /= expected_batch_size;
  return out;
}

GradientMap DpSgdStep(std::span<const GradientMap> clipped, double noise_multiplier,
                      double clip_norm, double expected_batch_size, Rng& noise_rng) {
  if (clipped.empty()) throw ContractError("DP step needs at least one gradient");
  GradientSum sum(clipped.front().shared_layout());
  for (const GradientMap& g : clipped) sum.Add(g);
  return sum.NoisyAverage(noise_multiplier, clip_norm, expected_batch_size, noise_rng);
}

GradientMap MeanGradient(std::span<const GradientMap> grads, double batch_size) {
  if (grads.empty()) throw ContractError("mean of an empty gradient set");
  if (!(batch_size > 0.0)) throw ContractError("batch size must be positive");
  GradientMap mean(grads.front().shared_layout());
  std::span<double> dst = mean.flat();
  for (const GradientMap& g : grads) {
    std::span<const double> src = g.flat();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  for (double& v : dst) v /= batch_size;
  return mean;
}

}  // namespace pdpa
