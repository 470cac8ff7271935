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

// Pipeline commands over the shared file formats. Output layout under the
// run's output directory:
//
//   split.json             split assignment
//   exclusions.json        safety-blocked samples, shared by every model
//   cache/<provider>.jsonl response envelopes
//   predictions/<id>.jsonl parsed prediction sets
//   scores/<id>.json       model summaries
//   baseline/<id>.json     trained classifiers and CV results
//   report/                rendered tables, figures, and manifest.json
//   simulate.json          engine-versus-oracle validation

#ifndef TIEREVAL_CLI_HPP_
#define TIEREVAL_CLI_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tiereval/baseline.hpp"
#include "tiereval/dataset.hpp"
#include "tiereval/diagnostics.hpp"
#include "tiereval/gateway.hpp"
#include "tiereval/metrics.hpp"
#include "tiereval/report.hpp"
#include "tiereval/synth.hpp"

namespace tiereval {

enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitMissingInput = 3,
  kExitValidation = 4,
};

struct BaselineRunSpec {
  std::string id;
  std::string display_name;
  // "image" or "image+text".
  std::string modality = "image";
};

struct BaselineConfig {
  std::string image_embeddings;
  std::string text_embeddings;
  std::vector<BaselineRunSpec> runs;
  TrainOptions train;
};

struct SimulateConfig {
  std::size_t samples = 500;
  std::size_t instances = 20;
  // Probability of gold NA for attributes that have an NA class.
  double na_probability = 0.3;
  synth::ErrorSpec errors;
  std::uint64_t seed = 0;
};

struct RunConfig {
  // Relative paths in the config file resolve against this directory.
  std::string base_dir;
  // Empty: the built-in registry.
  std::string registry;
  std::string annotations;
  std::string images_dir;
  SplitSpec split;
  std::uint64_t split_seed = 0;
  std::vector<ProviderConfig> models;
  std::string pricing;
  std::string out = "out";
  Tier3Mode tier3_mode = Tier3Mode::kSupported;
  RateMode rate_mode = RateMode::kPerImage;
  report::BootstrapSpec bootstrap;
  DiagnosticThresholds thresholds;
  ParseOptions parse;
  std::optional<BaselineConfig> baseline;
  SimulateConfig simulate;
};

// Throws ConfigError on unknown keys, bad values, or duplicate model ids.
RunConfig run_config_from_json(const nlohmann::json& j, const std::string& base_dir);
// Throws MissingInputError when the file is absent.
RunConfig load_run_config(const std::string& path);

struct GlobalOverrides {
  // Replaces the split, bootstrap, baseline, and simulate seeds.
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<Tier3Mode> tier3_mode;
  std::optional<RateMode> rate_mode;
};

void apply_overrides(RunConfig& config, const GlobalOverrides& overrides);

struct EvalModelStats {
  std::string provider_id;
  std::size_t requests = 0;
  std::size_t submitted = 0;
  std::size_t from_cache = 0;
  std::size_t blocked = 0;
  std::size_t failed = 0;
};

struct EvalResult {
  std::vector<EvalModelStats> models;
  std::size_t new_exclusions = 0;
};

// Submits every test-split sample to every configured model through the
// response cache. Safety blocks are appended to the shared exclusion set.
EvalResult cmd_eval(const RunConfig& config, std::ostream& log,
                    const Sleeper& sleeper = real_sleep);

// Parses cached responses, scores every model over the shared roster, and
// renders the report. Throws MissingInputError for an absent cache.
std::vector<ModelSummary> cmd_score(const RunConfig& config, std::ostream& log);

// Trains one classifier per attribute and modality on train+dev, scores
// the test roster, and re-renders the report.
std::vector<ModelSummary> cmd_baseline(const RunConfig& config, std::ostream& log);

struct SimulateResult {
  double max_abs_diff = 0.0;
  std::size_t values_compared = 0;
  std::vector<std::string> mismatches;
  // Means over instances of the attribute-averaged quantities.
  double tier1 = 0.0;
  // Over attributes whose NA class has gold support.
  double na_recall = 0.0;
  // Mean recall of supported non-NA classes, over attributes with an NA class.
  double gold_recall = 0.0;
  bool passed() const { return mismatches.empty() && max_abs_diff <= 1e-12; }
};

// Runs generate, corrupt, score, and oracle comparison per instance.
SimulateResult cmd_simulate(const RunConfig& config, std::ostream& log);

// Renders report/ from the score files of the configured models and
// baseline runs, in configuration order.
std::vector<ModelSummary> cmd_report(const RunConfig& config, std::ostream& log);

// Full scoring of one prediction roster: tallies, tiers, aggregate,
// hallucination rates, bootstrap CI, and diagnostics.
ModelSummary score_model(const SchemaRegistry& registry, const GroundTruthTable& gold,
                         std::span<const std::string> roster,
                         std::span<const ParsedPredictionSet> preds,
                         const RunConfig& config);

// Entry point behind the tiereval executable. Maps exceptions to ExitCode.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace tiereval

#endif  // TIEREVAL_CLI_HPP_
