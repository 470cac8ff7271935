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

#ifndef TIEREVAL_BOOTSTRAP_HPP_
#define TIEREVAL_BOOTSTRAP_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tiereval/metrics.hpp"

namespace tiereval {

// Maps per-sample multiplicities (how often each roster sample was drawn)
// to a statistic. An all-ones vector is the original roster.
using ResampleStatistic =
    std::function<double(std::span<const std::uint32_t> multiplicity)>;

// Linear-interpolated quantile of sorted values, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

// Percentile bootstrap over `roster_size` independent units. Each iteration
// draws roster_size units with replacement. Deterministic for a fixed seed.
// Throws std::invalid_argument on an empty roster, zero iterations, or a
// level outside (0, 100).
BootstrapCI bootstrap_ci(std::size_t roster_size,
                         const ResampleStatistic& statistic,
                         std::size_t iterations, double level,
                         std::uint64_t seed);

// Model-level Tier 1 of a scoring matrix, recomputed per resample from the
// full per-attribute tallies.
ResampleStatistic model_tier1_statistic(const ScoringMatrix& matrix,
                                        const SchemaRegistry& registry);

}  // namespace tiereval

#endif  // TIEREVAL_BOOTSTRAP_HPP_
