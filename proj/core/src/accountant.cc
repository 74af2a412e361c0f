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

#include "pdpa/accountant.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace pdpa {
namespace {

double LogBinomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// exponent * log(base) with the convention 0 * log(0) = 0.
double PowLog(double exponent, double log_base) {
  return exponent == 0.0 ? 0.0 : exponent * log_base;
}

void CheckDelta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ContractError("delta must lie in (0, 1)");
}

}  // namespace

std::vector<int> DefaultRdpOrders() {
  std::vector<int> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  return orders;
}

double RdpSubsampledGaussian(double q, double sigma, int order) {
  if (!(sigma > 0.0)) throw ContractError("noise multiplier must be positive for RDP");
  if (!(q > 0.0 && q <= 1.0)) throw ContractError("sampling rate must lie in (0, 1]");
  if (order < 2) throw ContractError("RDP order must be an integer >= 2");
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> terms;
  terms.reserve(order + 1);
  for (int k = 0; k <= order; ++k) {
    const double kd = k;
    terms.push_back(LogBinomial(order, k) + PowLog(order - kd, log_1mq) +
                    PowLog(kd, log_q) + kd * (kd - 1.0) * inv_two_var);
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double total = 0.0;
  for (double t : terms) total += std::exp(t - mx);
  const double value = (mx + std::log(total)) / (order - 1.0);
  return std::max(value, 0.0);
}

EpsilonResult EpsilonFromRdp(const std::vector<int>& orders,
                             const std::vector<double>& rdp, double delta) {
  CheckDelta(delta);
  if (orders.empty() || orders.size() != rdp.size()) {
    throw ContractError("RDP curve and order grid differ in size");
  }
  const double log_inv_delta = -std::log(delta);
  EpsilonResult best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < orders.size(); ++i) {
    const double eps = rdp[i] + log_inv_delta / (orders[i] - 1.0);
    if (eps < best.epsilon) best = {eps, orders[i]};
  }
  return best;
}

RdpAccountant::RdpAccountant(std::vector<int> orders)
    : orders_(std::move(orders)), rdp_(orders_.size(), 0.0) {
  if (orders_.empty()) throw ContractError("RDP order grid is empty");
  for (int a : orders_) {
    if (a < 2) throw ContractError("RDP orders must be integers >= 2");
  }
}

void RdpAccountant::Record(double q, double sigma, std::int64_t steps) {
  if (steps <= 0) throw ContractError("step count must be positive");
  for (std::size_t i = 0; i < orders_.size(); ++i) {
    rdp_[i] += static_cast<double>(steps) * RdpSubsampledGaussian(q, sigma, orders_[i]);
  }
  steps_ += steps;
}

EpsilonResult RdpAccountant::Epsilon(double delta) const {
  if (steps_ == 0) throw ContractError("accountant has no recorded steps");
  return EpsilonFromRdp(orders_, rdp_, delta);
}

EpsilonResult ComputeEpsilon(double q, double sigma, std::int64_t steps, double delta,
                             const std::vector<int>& orders) {
  RdpAccountant acc(orders);
  acc.Record(q, sigma, steps);
  return acc.Epsilon(delta);
}

std::int64_t StepsForEpochs(std::int64_t dataset_size, std::int64_t batch_size,
                            double epochs) {
  if (dataset_size <= 0 || batch_size <= 0 || !(epochs > 0.0)) {
    throw ContractError("dataset size, batch size and epochs must be positive");
  }
  const double steps =
      std::round(epochs * static_cast<double>(dataset_size) / static_cast<double>(batch_size));
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(steps));
}

Calibration CalibrateNoise(double target, double delta, double q, std::int64_t steps,
                           const std::vector<int>& orders) {
  if (!(target > 0.0)) throw ContractError("target epsilon must be positive");
  CheckDelta(delta);
  auto eps_at = [&](double sigma) { return ComputeEpsilon(q, sigma, steps, delta, orders); };

  double lo = kMinNoiseMultiplier;  // largest epsilon
  double hi = kMaxNoiseMultiplier;  // smallest epsilon
  EpsilonResult at_hi = eps_at(hi);
  if (at_hi.epsilon > target) {
    std::ostringstream msg;
    msg.precision(6);
    msg << "epsilon target " << target << " is infeasible for q=" << q
        << ", steps=" << steps << ", delta=" << delta
        << "; the smallest achievable epsilon (sigma=" << kMaxNoiseMultiplier
        << ") is " << at_hi.epsilon;
    throw InfeasibleBudgetError(msg.str(), at_hi.epsilon);
  }
  const EpsilonResult at_lo = eps_at(lo);
  if (at_lo.epsilon <= target) return {lo, at_lo};

  // Invariant: eps(lo) > target >= eps(hi).
  for (int iter = 0; iter < 200; ++iter) {
    if (at_hi.epsilon >= target - kCalibrationTolerance) break;
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const EpsilonResult at_mid = eps_at(mid);
    if (at_mid.epsilon > target) {
      lo = mid;
    } else {
      hi = mid;
      at_hi = at_mid;
    }
  }
  return {hi, at_hi};
}

}  // namespace pdpa
