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

#ifndef TIEREVAL_DIAGNOSTICS_HPP_
#define TIEREVAL_DIAGNOSTICS_HPP_

#include <optional>
#include <vector>

#include "json.hpp"
#include "tiereval/metrics.hpp"

namespace tiereval {

// All values are fractions in [0, 1] (0.02 = two percentage points).
struct DiagnosticThresholds {
  double equal = 0.02;       // |T1 - T3| at or below: tiers agree
  double gap = 0.05;         // T3 - T1 at or above: NA drags T1 down
  double low = 0.30;         // NA precision / recall / T2 below: low
  double high = 0.50;        // T2 at or above: high
  double low_tier3 = 0.50;   // T3 below: low
  double high_tier3 = 0.60;  // T3 at or above: high
};

nlohmann::json to_json(const DiagnosticThresholds& t);
DiagnosticThresholds thresholds_from_json(const nlohmann::json& j);

struct DiagnosticInput {
  double tier1 = 0.0;
  std::optional<double> tier3;
  std::optional<double> tier2_f1;
  std::optional<double> na_precision;
  std::optional<double> na_recall;
};

DiagnosticInput diagnostic_input(const AttributeTierScores& scores);
DiagnosticInput diagnostic_input(const ModelSummary& summary);

// Every matching pattern, in table order. Rows needing an absent tier are
// skipped.
std::vector<DiagnosticPattern> classify_diagnostic(
    const DiagnosticInput& scores, const DiagnosticThresholds& thresholds = {});

}  // namespace tiereval

#endif  // TIEREVAL_DIAGNOSTICS_HPP_
