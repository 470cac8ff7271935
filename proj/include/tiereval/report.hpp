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

// Table and figure renderers over ModelSummary values, plus the run
// manifest. Every renderer is a pure function of its inputs.

#ifndef TIEREVAL_REPORT_HPP_
#define TIEREVAL_REPORT_HPP_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tiereval/diagnostics.hpp"
#include "tiereval/metrics.hpp"

namespace tiereval::report {

// Rounds half away from zero at `decimals` places. The scaled value is first
// snapped to the nearest 1e-6 so binary noise (0.1449999... for 0.145) does
// not flip a tie.
double round_half_away(double value, int decimals);
// Fixed notation after round_half_away; never renders "-0.0".
std::string fixed(double value, int decimals);
// As fixed(), with an explicit '+' for positive values.
std::string signed_fixed(double value, int decimals);
// Two-decimal fraction without the leading zero: 0.7 -> ".70", 1 -> "1.00".
std::string fraction2(double value);

inline constexpr const char* kAbsent = "--";
inline constexpr const char* kEmDash = "—";

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // Parallel to rows: a group label opening a new section before the row.
  std::vector<std::string> section_before;
};

std::string to_markdown(const Table& table);
std::string to_csv(const Table& table);
std::string csv_escape(const std::string& cell);

// Model | Tier 1 F1 | 95% CI | Tier 2 NA-F1 | Tier 3 F1 | Gap, in percent
// with one decimal. Absent values render as "--".
std::vector<std::string> tier_row_cells(const ModelSummary& summary);
// Grouped by `group` in order of first appearance.
Table render_tier_table(std::span<const ModelSummary> summaries);
// Numeric twin: model, group, tier1, ci_lo, ci_hi, tier2, tier3, gap.
Table tier_table_data(std::span<const ModelSummary> summaries);

// Model | Hall. | Rate (%) | Cost ($/5K), ascending by count (stable).
// Absent costs render as an em-dash.
std::vector<std::string> hallucination_row_cells(const ModelSummary& summary,
                                                 RateMode mode);
Table render_hallucination_table(std::span<const ModelSummary> summaries,
                                 RateMode mode);

// Rows T1/T2/T3 x Shape/Fabric/Pattern; one column per model.
Table render_category_table(std::span<const ModelSummary> summaries);

// model, vendor, cost_per_5k, tier1_f1, variant_tag. Models without a cost
// are skipped. Cost has two decimals, tier 1 (percent) one.
std::string emit_cost_scatter(std::span<const ModelSummary> summaries);
// Log-x scatter of the same points.
std::string render_cost_scatter_svg(std::span<const ModelSummary> summaries);

// Per-model diagnostic patterns with the thresholds used.
Table render_diagnostics_table(std::span<const ModelSummary> summaries);

struct BootstrapSpec {
  std::size_t iterations = 10000;
  double level = 95.0;
  std::uint64_t seed = 0;
};

struct RunManifest {
  std::string timestamp;
  std::string registry_version;
  std::optional<std::uint64_t> split_seed;
  std::size_t exclusion_count = 0;
  std::size_t scored_samples = 0;
  // provider_id -> SHA-256 of its configuration.
  std::map<std::string, std::string> provider_digests;
  // provider_id -> configuration as run (decoding parameters verbatim).
  std::map<std::string, nlohmann::json> provider_configs;
  Tier3Mode tier3_mode = Tier3Mode::kSupported;
  RateMode rate_mode = RateMode::kPerImage;
  DiagnosticThresholds thresholds;
  BootstrapSpec bootstrap;
  std::string software_version;
};

nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);

// report.md: all tables plus the manifest's metric flags.
std::string render_report(std::span<const ModelSummary> summaries,
                          const RunManifest& manifest);

// Writes report.md, tier_table.csv, hallucinations.csv, categories.csv,
// cost_scatter.csv, cost_scatter.svg, and manifest.json into `dir`.
void write_report_bundle(const std::string& dir,
                         std::span<const ModelSummary> summaries,
                         const RunManifest& manifest);

}  // namespace tiereval::report

#endif  // TIEREVAL_REPORT_HPP_
