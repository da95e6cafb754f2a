/*
 * Copyright 2026 The mfoesim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mfoesim/vm_core.hpp"

namespace mfoesim {

/// Latency and throughput constants shared by the simulator and the trace
/// model. Defaults are the measured values the model was calibrated with.
struct ModelParameters {
  double mfoe_hit_cycles = 78;
  double mfoe_miss_penalty_cycles = 14;
  double baseline_fault_mean_cycles = 2552;
  double baseline_fault_p95_cycles = 6432;
  double background_throughput_pages_per_s = 580169;
  double init_throughput_pages_per_s = 1093075;
  double clock_hz = 3e9;
  double sw_emulation_mean_ns = 795;
  double sw_emulation_p95_ns = 1757;

  /// Every field strictly positive and every p95 at least its mean.
  /// Returns the list of violations, empty when valid.
  std::vector<std::string> violations() const;
  void validate() const;

  Cycles hit_cycles() const { return static_cast<Cycles>(mfoe_hit_cycles); }
  Cycles miss_penalty_cycles() const { return static_cast<Cycles>(mfoe_miss_penalty_cycles); }
  Cycles ns_to_cycles(double ns) const;
  double cycles_to_ns(Cycles c) const { return static_cast<double>(c) * 1e9 / clock_hz; }
};

/// Pages a producer running at `pages_per_s` has finished after `elapsed`
/// cycles: floor(elapsed * pages_per_s / clock_hz). Negative elapsed gives 0.
std::int64_t pages_completed(Cycles elapsed, double pages_per_s, double clock_hz);

/// Smallest elapsed cycle count at which `pages` pages are complete.
Cycles cycles_for_pages(std::int64_t pages, double pages_per_s, double clock_hz);

/// Positive latency distribution described by its mean and 95th percentile.
///
/// Lognormal fit: with z = Phi^-1(0.95), sigma is the smaller root of
/// sigma^2/2 - z*sigma + ln(p95/mean) = 0 and mu = ln(mean) - sigma^2/2.
/// Equal mean and p95 degenerates to a constant.
class LatencyDistribution {
 public:
  static LatencyDistribution constant(double value);
  static LatencyDistribution lognormal(double mean, double p95);

  double sample(std::mt19937_64& rng) const;
  double mean() const noexcept { return mean_; }
  double quantile(double p) const;
  bool is_constant() const noexcept { return sigma_ == 0.0; }
  double mu() const noexcept { return mu_; }
  double sigma() const noexcept { return sigma_; }

 private:
  LatencyDistribution(double mean, double mu, double sigma) : mean_(mean), mu_(mu), sigma_(sigma) {}

  double mean_;
  double mu_;
  double sigma_;
};

inline constexpr double kZ95 = 1.6448536269514722;

}  // namespace mfoesim
