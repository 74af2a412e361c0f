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

// Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism under
// add/remove adjacency, and noise calibration to an (epsilon, delta) target.
//
// Per step and integer order alpha >= 2:
//
//   rdp(alpha) = 1/(alpha-1) * log( sum_{k=0..alpha} C(alpha,k) (1-q)^(alpha-k)
//                                    q^k exp(k(k-1) / (2 sigma^2)) )
//
// evaluated in log space. RDP composes additively over steps and converts
// to (epsilon, delta)-DP as min_alpha [ rdp(alpha) + log(1/delta)/(alpha-1) ].

#ifndef PDPA_ACCOUNTANT_H_
#define PDPA_ACCOUNTANT_H_

#include <cstdint>
#include <vector>

#include "pdpa/errors.h"

namespace pdpa {

// Integer orders 2..64.
std::vector<int> DefaultRdpOrders();

double RdpSubsampledGaussian(double sampling_rate, double noise_multiplier, int order);

struct EpsilonResult {
  double epsilon = 0.0;
  int order = 0;  // minimizing alpha
};

EpsilonResult EpsilonFromRdp(const std::vector<int>& orders,
                             const std::vector<double>& rdp, double delta);

class RdpAccountant {
 public:
  explicit RdpAccountant(std::vector<int> orders = DefaultRdpOrders());

  // Composes `steps` further steps of the subsampled Gaussian mechanism.
  void Record(double sampling_rate, double noise_multiplier, std::int64_t steps = 1);

  EpsilonResult Epsilon(double delta) const;  // throws on an empty accountant

  const std::vector<int>& orders() const { return orders_; }
  const std::vector<double>& rdp() const { return rdp_; }
  std::int64_t steps() const { return steps_; }

 private:
  std::vector<int> orders_;
  std::vector<double> rdp_;
  std::int64_t steps_ = 0;
};

// Epsilon after `steps` steps at a fixed (q, sigma).
EpsilonResult ComputeEpsilon(double sampling_rate, double noise_multiplier,
                             std::int64_t steps, double delta,
                             const std::vector<int>& orders = DefaultRdpOrders());

// Steps for `epochs` passes of expected batch size `batch_size` over
// `dataset_size` records: round(epochs * N / B).
std::int64_t StepsForEpochs(std::int64_t dataset_size, std::int64_t batch_size,
                            double epochs);

inline constexpr double kMinNoiseMultiplier = 0.3;
inline constexpr double kMaxNoiseMultiplier = 64.0;
inline constexpr double kCalibrationTolerance = 1e-3;

struct Calibration {
  double noise_multiplier = 0.0;
  EpsilonResult achieved;
};

// The budget cannot be met even at the largest supported noise multiplier.
class InfeasibleBudgetError : public ContractError {
 public:
  InfeasibleBudgetError(const std::string& what, double smallest_epsilon)
      : ContractError(what), smallest_epsilon_(smallest_epsilon) {}
  double smallest_epsilon() const { return smallest_epsilon_; }

 private:
  double smallest_epsilon_;
};

// Binary search over sigma in [0.3, 64] for epsilon in
// [target - 1e-3, target]. The result never exceeds the target. If even
// sigma = 0.3 stays below the band, 0.3 is returned.
Calibration CalibrateNoise(double epsilon_target, double delta, double sampling_rate,
                           std::int64_t steps,
                           const std::vector<int>& orders = DefaultRdpOrders());

}  // namespace pdpa

#endif  // PDPA_ACCOUNTANT_H_
