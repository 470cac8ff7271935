// Copyright 2026 The Tiereval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tiereval/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tiereval/rng.hpp"

namespace tiereval {

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of no values");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapCI bootstrap_ci(std::size_t roster_size,
                         const ResampleStatistic& statistic,
                         std::size_t iterations, double level,
                         std::uint64_t seed) {
  if (roster_size == 0) throw std::invalid_argument("bootstrap over an empty roster");
  if (iterations == 0) throw std::invalid_argument("bootstrap needs iterations >= 1");
  if (!(level > 0.0 && level < 100.0)) {
    throw std::invalid_argument("bootstrap level must lie in (0, 100)");
  }
  BootstrapCI ci;
  ci.iterations = iterations;
  ci.level = level;
  ci.seed = seed;

  std::vector<std::uint32_t> multiplicity(roster_size, 1);
  ci.point = statistic(multiplicity);

  Rng rng(seed);
  std::vector<double> values(iterations);
  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(multiplicity.begin(), multiplicity.end(), 0);
    for (std::size_t k = 0; k < roster_size; ++k) {
      ++multiplicity[rng.uniform_below(roster_size)];
    }
    values[it] = statistic(multiplicity);
  }
  std::sort(values.begin(), values.end());
  const double alpha = (1.0 - level / 100.0) / 2.0;
  ci.lo = quantile_sorted(values, alpha);
  ci.hi = quantile_sorted(values, 1.0 - alpha);
  return ci;
}

ResampleStatistic model_tier1_statistic(const ScoringMatrix& matrix,
                                        const SchemaRegistry& registry) {
  return [&matrix, &registry](std::span<const std::uint32_t> multiplicity) {
    const auto tallies = tally(matrix, registry, multiplicity);
    return model_tier1(tallies);
  };
}

}  // namespace tiereval
