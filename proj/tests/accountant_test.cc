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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "pdpa/errors.h"

namespace pdpa {
namespace {

// Independent evaluation of the subsampled-Gaussian RDP bound: the binomial
// sum taken directly in extended precision, without log-space tricks.
long double OracleRdp(long double q, long double sigma, int alpha) {
  long double sum = 0.0L;
  long double binom = 1.0L;  // C(alpha, k), built incrementally
  for (int k = 0; k <= alpha; ++k) {
    if (k > 0) binom = binom * (alpha - k + 1) / k;
    sum += binom * std::pow(1.0L - q, static_cast<long double>(alpha - k)) *
           std::pow(q, static_cast<long double>(k)) *
           std::exp(static_cast<long double>(k) * (k - 1) / (2.0L * sigma * sigma));
  }
  return std::log(sum) / (alpha - 1);
}

// min over the integer grid of T * rdp(alpha) + log(1/delta) / (alpha - 1).
std::pair<double, int> OracleEpsilon(double q, double sigma, long long steps, double delta,
                                     int max_order = 64) {
  double best = std::numeric_limits<double>::infinity();
  int best_alpha = 0;
  for (int a = 2; a <= max_order; ++a) {
    const long double eps =
        static_cast<long double>(steps) * OracleRdp(q, sigma, a) - std::log((long double)delta) / (a - 1);
    if (static_cast<double>(eps) < best) {
      best = static_cast<double>(eps);
      best_alpha = a;
    }
  }
  return {best, best_alpha};
}

TEST(RdpTest, FullBatchReducesToGaussianMechanism) {
  for (double sigma : {0.5, 1.0, 2.5, 10.0}) {
    for (int a = 2; a <= 64; ++a) {
      EXPECT_NEAR(RdpSubsampledGaussian(1.0, sigma, a), a / (2.0 * sigma * sigma), 1e-12)
          << "sigma=" << sigma << " alpha=" << a;
    }
  }
  EXPECT_EQ(RdpSubsampledGaussian(1.0, 1.0, 4), 2.0);
}

TEST(RdpTest, VanishesAsSamplingRateVanishes) {
  double previous = INFINITY;
  for (double q : {1e-1, 1e-2, 1e-3, 1e-4, 1e-6}) {
    const double v = RdpSubsampledGaussian(q, 1.0, 8);
    EXPECT_LT(v, previous);
    EXPECT_GE(v, 0.0);
    previous = v;
  }
  EXPECT_LT(previous, 1e-9);
}

TEST(RdpTest, SmallExampleMatchesClosedForm) {
  const double q = 0.01;
  const double expected = std::log1p(q * q * (std::exp(1.0) - 1.0));
  EXPECT_NEAR(RdpSubsampledGaussian(q, 1.0, 2), expected, 1e-15);
  EXPECT_NEAR(expected, 1.718134e-4, 1e-9);
}

TEST(RdpTest, AgreesWithDirectSummation) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> uq(1e-4, 1.0), us(0.6, 8.0);
  std::uniform_int_distribution<int> ua(2, 64);
  for (int i = 0; i < 500; ++i) {
    const double q = uq(rng), sigma = us(rng);
    const int a = ua(rng);
    const double oracle = static_cast<double>(OracleRdp(q, sigma, a));
    EXPECT_NEAR(RdpSubsampledGaussian(q, sigma, a), oracle, 1e-9 * std::max(1.0, oracle));
  }
}

TEST(RdpTest, RejectsInvalidArguments) {
  EXPECT_THROW(RdpSubsampledGaussian(0.1, 0.0, 2), ContractError);
  EXPECT_THROW(RdpSubsampledGaussian(0.0, 1.0, 2), ContractError);
  EXPECT_THROW(RdpSubsampledGaussian(1.5, 1.0, 2), ContractError);
  EXPECT_THROW(RdpSubsampledGaussian(0.1, 1.0, 1), ContractError);
}

TEST(RdpTest, LargeOrdersDoNotOverflow) {
  const double v = RdpSubsampledGaussian(0.5, 0.3, 64);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(v, 0.0);
}

TEST(EpsilonTest, WorkedConversionExample) {
  const EpsilonResult r = ComputeEpsilon(1.0, 1.0, 1, 1e-5);
  const auto [oracle, oracle_alpha] = OracleEpsilon(1.0, 1.0, 1, 1e-5);
  EXPECT_NEAR(r.epsilon, oracle, 1e-3);
  EXPECT_NEAR(r.epsilon, 5.3026, 1e-3);
  EXPECT_EQ(r.order, 6);
  EXPECT_EQ(oracle_alpha, 6);
}

TEST(EpsilonTest, DoublingStepsIncreasesEpsilon) {
  for (double q : {0.01, 0.1, 1.0}) {
    EXPECT_LT(ComputeEpsilon(q, 1.1, 100, 1e-5).epsilon,
              ComputeEpsilon(q, 1.1, 200, 1e-5).epsilon);
  }
}

TEST(EpsilonTest, LargeNoiseGivesTinyEpsilon) {
  EXPECT_LT(ComputeEpsilon(0.01, 100.0, 1, 1e-5).epsilon + 0.0, 1.0);
  // The conversion term alone is log(1/delta)/63 for the largest order, so
  // the tiny-epsilon regime needs a larger delta on this grid.
  EXPECT_LT(RdpSubsampledGaussian(0.01, 100.0, 64), 0.01);
}

TEST(EpsilonTest, AccountantComposesAdditively) {
  RdpAccountant acc;
  acc.Record(0.02, 1.0, 10);
  acc.Record(0.02, 1.0, 5);
  RdpAccountant once;
  once.Record(0.02, 1.0, 15);
  for (std::size_t i = 0; i < acc.rdp().size(); ++i) {
    EXPECT_NEAR(acc.rdp()[i], once.rdp()[i], 1e-12);
  }
  EXPECT_EQ(acc.steps(), 15);
  EXPECT_THROW(RdpAccountant().Epsilon(1e-5), ContractError);
  EXPECT_THROW(acc.Epsilon(0.0), ContractError);
  EXPECT_THROW(acc.Epsilon(1.0), ContractError);
}

TEST(EpsilonTest, MonotonicityOverRandomTriples) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> uq(1e-4, 0.5), us(0.4, 10.0), grow(1.01, 2.0);
  std::uniform_int_distribution<long long> ut(1, 5000);
  for (int i = 0; i < 200; ++i) {
    const double q = uq(rng), sigma = us(rng);
    const long long t = ut(rng);
    const double base = ComputeEpsilon(q, sigma, t, 1e-5).epsilon;
    EXPECT_LE(base, ComputeEpsilon(q, sigma, t + ut(rng), 1e-5).epsilon);
    EXPECT_LE(base, ComputeEpsilon(std::min(1.0, q * grow(rng)), sigma, t, 1e-5).epsilon);
    EXPECT_GE(base, ComputeEpsilon(q, sigma * grow(rng), t, 1e-5).epsilon);
  }
}

TEST(EpsilonTest, OrderGridSlackIsSmall) {
  std::vector<int> wide;
  for (int a = 2; a <= 512; ++a) wide.push_back(a);
  for (double target : {1.0, 4.0, 8.0}) {
    const double q = 32.0 / 2000.0;
    const auto steps = StepsForEpochs(2000, 32, 3);
    const Calibration cal = CalibrateNoise(target, 1e-5, q, steps);
    const double narrow = cal.achieved.epsilon;
    const double widened = ComputeEpsilon(q, cal.noise_multiplier, steps, 1e-5, wide).epsilon;
    EXPECT_LE(narrow - widened, 0.005 * narrow) << "target " << target;
  }
}

TEST(CalibrationTest, RoundTripStaysWithinBudget) {
  for (double target : {1.0, 4.0, 8.0}) {
    for (double q : {32.0 / 2000.0, 32.0 / 25000.0}) {
      const auto steps = StepsForEpochs(static_cast<std::int64_t>(32.0 / q), 32, 3);
      const Calibration cal = CalibrateNoise(target, 1e-5, q, steps);
      const double eps = ComputeEpsilon(q, cal.noise_multiplier, steps, 1e-5).epsilon;
      EXPECT_LE(eps, target);
      EXPECT_GE(eps, target - 1e-3);
      EXPECT_EQ(eps, cal.achieved.epsilon);
    }
  }
}

TEST(CalibrationTest, LargerBudgetNeedsLessNoise) {
  const double q = 32.0 / 25000.0;
  const auto steps = StepsForEpochs(25000, 32, 3);
  EXPECT_LT(CalibrateNoise(8.0, 1e-5, q, steps).noise_multiplier,
            CalibrateNoise(1.0, 1e-5, q, steps).noise_multiplier);
}

TEST(CalibrationTest, MatchesBruteForceGrid) {
  const double q = 32.0 / 25000.0;
  const long long steps = 2344;
  const double target = 4.0;
  double grid_sigma = 0.0;
  for (double sigma = 0.3; sigma <= 64.0; sigma += 1e-3) {
    if (OracleEpsilon(q, sigma, steps, 1e-5).first <= target) {
      grid_sigma = sigma;
      break;
    }
  }
  ASSERT_GT(grid_sigma, 0.0);
  const Calibration cal = CalibrateNoise(target, 1e-5, q, steps);
  EXPECT_NEAR(cal.noise_multiplier, grid_sigma, 1e-3);
}

TEST(CalibrationTest, InfeasibleBudgetNamesSmallestEpsilon) {
  const double q = 0.5;
  const long long steps = 100000;
  try {
    CalibrateNoise(1e-3, 1e-5, q, steps);
    FAIL() << "expected InfeasibleBudgetError";
  } catch (const InfeasibleBudgetError& e) {
    const double smallest = ComputeEpsilon(q, kMaxNoiseMultiplier, steps, 1e-5).epsilon;
    EXPECT_DOUBLE_EQ(e.smallest_epsilon(), smallest);
    EXPECT_NE(std::string(e.what()).find("smallest achievable epsilon"), std::string::npos);
  }
  EXPECT_THROW(CalibrateNoise(0.0, 1e-5, q, 10), ContractError);
}

TEST(CalibrationTest, StepsForEpochs) {
  EXPECT_EQ(StepsForEpochs(25000, 32, 3), 2344);
  EXPECT_EQ(StepsForEpochs(2000, 32, 3), 188);
  EXPECT_THROW(StepsForEpochs(0, 32, 3), ContractError);
}

}  // namespace
}  // namespace pdpa
