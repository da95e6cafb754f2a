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

#include "mfoesim/params.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mfoesim {

std::vector<std::string> ModelParameters::violations() const {
  std::vector<std::string> out;
  auto positive = [&](const char* name, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) out.push_back(std::string(name) + " must be > 0");
  };
  positive("mfoe_hit_cycles", mfoe_hit_cycles);
  positive("mfoe_miss_penalty_cycles", mfoe_miss_penalty_cycles);
  positive("baseline_fault_mean_cycles", baseline_fault_mean_cycles);
  positive("baseline_fault_p95_cycles", baseline_fault_p95_cycles);
  positive("background_throughput_pages_per_s", background_throughput_pages_per_s);
  positive("init_throughput_pages_per_s", init_throughput_pages_per_s);
  positive("clock_hz", clock_hz);
  positive("sw_emulation_mean_ns", sw_emulation_mean_ns);
  positive("sw_emulation_p95_ns", sw_emulation_p95_ns);
  if (baseline_fault_p95_cycles < baseline_fault_mean_cycles) {
    out.emplace_back("baseline_fault_p95_cycles must be >= baseline_fault_mean_cycles");
  }
  if (sw_emulation_p95_ns < sw_emulation_mean_ns) out.emplace_back("sw_emulation_p95_ns must be >= sw_emulation_mean_ns");
  return out;
}

void ModelParameters::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::ostringstream os;
  os << "invalid model parameters:";
  for (const auto& s : v) os << ' ' << s << ';';
  throw std::invalid_argument(os.str());
}

Cycles ModelParameters::ns_to_cycles(double ns) const { return std::llround(ns * clock_hz / 1e9); }

std::int64_t pages_completed(Cycles elapsed, double pages_per_s, double clock_hz) {
  if (elapsed <= 0) return 0;
  return static_cast<std::int64_t>(
      std::floor(static_cast<long double>(elapsed) * pages_per_s / static_cast<long double>(clock_hz)));
}

Cycles cycles_for_pages(std::int64_t pages, double pages_per_s, double clock_hz) {
  if (pages <= 0) return 0;
  auto guess = static_cast<Cycles>(std::ceil(static_cast<long double>(pages) * clock_hz / pages_per_s));
  while (pages_completed(guess, pages_per_s, clock_hz) < pages) ++guess;
  while (guess > 0 && pages_completed(guess - 1, pages_per_s, clock_hz) >= pages) --guess;
  return guess;
}

LatencyDistribution LatencyDistribution::constant(double value) {
  if (!(value > 0.0)) throw std::invalid_argument("latency must be positive");
  return LatencyDistribution(value, std::log(value), 0.0);
}

LatencyDistribution LatencyDistribution::lognormal(double mean, double p95) {
  if (!(mean > 0.0) || p95 < mean) throw std::invalid_argument("lognormal fit needs 0 < mean <= p95");
  const double r = std::log(p95 / mean);
  if (r == 0.0) return constant(mean);
  const double disc = kZ95 * kZ95 - 2.0 * r;
  if (disc < 0.0) throw std::invalid_argument("p95/mean ratio too large for a lognormal fit");
  const double sigma = kZ95 - std::sqrt(disc);
  return LatencyDistribution(mean, std::log(mean) - sigma * sigma / 2.0, sigma);
}

double LatencyDistribution::sample(std::mt19937_64& rng) const {
  if (sigma_ == 0.0) return mean_;
  std::lognormal_distribution<double> d(mu_, sigma_);
  return d(rng);
}

double LatencyDistribution::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile needs 0 < p < 1");
  if (sigma_ == 0.0) return mean_;
  // Inverse normal CDF by bisection on erfc; only used for reporting.
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = (lo + hi) / 2.0;
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return std::exp(mu_ + sigma_ * (lo + hi) / 2.0);
}

}  // namespace mfoesim
