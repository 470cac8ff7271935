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

#include "tiereval/diagnostics.hpp"

#include <cmath>

namespace tiereval {

nlohmann::json to_json(const DiagnosticThresholds& t) {
  return {{"equal", t.equal},       {"gap", t.gap},
          {"low", t.low},           {"high", t.high},
          {"low_tier3", t.low_tier3}, {"high_tier3", t.high_tier3}};
}

DiagnosticThresholds thresholds_from_json(const nlohmann::json& j) {
  DiagnosticThresholds t;
  t.equal = j.value("equal", t.equal);
  t.gap = j.value("gap", t.gap);
  t.low = j.value("low", t.low);
  t.high = j.value("high", t.high);
  t.low_tier3 = j.value("low_tier3", t.low_tier3);
  t.high_tier3 = j.value("high_tier3", t.high_tier3);
  return t;
}

DiagnosticInput diagnostic_input(const AttributeTierScores& scores) {
  DiagnosticInput in;
  in.tier1 = scores.tier1;
  in.tier3 = scores.tier3;
  if (scores.tier2) {
    in.tier2_f1 = scores.tier2->f1;
    in.na_precision = scores.tier2->precision;
    in.na_recall = scores.tier2->recall;
  }
  return in;
}

DiagnosticInput diagnostic_input(const ModelSummary& summary) {
  return {summary.means.tier1, summary.means.tier3, summary.means.tier2,
          summary.means.na_precision, summary.means.na_recall};
}

std::vector<DiagnosticPattern> classify_diagnostic(
    const DiagnosticInput& s, const DiagnosticThresholds& t) {
  std::vector<DiagnosticPattern> out;
  if (s.tier3) {
    if (std::abs(s.tier1 - *s.tier3) <= t.equal) {
      out.push_back(DiagnosticPattern::kNaNotMajorFactor);
    }
    if (*s.tier3 - s.tier1 >= t.gap) {
      out.push_back(DiagnosticPattern::kStrugglesWithNa);
    }
  }
  if (s.na_recall && *s.na_recall < t.low) {
    out.push_back(DiagnosticPattern::kFalseVisibility);
  }
  if (s.na_precision && *s.na_precision < t.low) {
    out.push_back(DiagnosticPattern::kFalseNa);
  }
  if (s.tier2_f1 && s.tier3) {
    if (*s.tier2_f1 >= t.high && *s.tier3 < t.low_tier3) {
      out.push_back(DiagnosticPattern::kKnowsWhenNotWhat);
    }
    if (*s.tier2_f1 < t.low && *s.tier3 >= t.high_tier3) {
      out.push_back(DiagnosticPattern::kGoodDiscriminationPoorApplicability);
    }
  }
  return out;
}

}  // namespace tiereval
