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

// Synthetic ground truth, controlled corruption, and a brute-force rescoring
// used to validate the metric engine. The oracle shares no code with
// metrics.cpp: it recounts everything with direct loops over samples.

#ifndef TIEREVAL_SYNTH_HPP_
#define TIEREVAL_SYNTH_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tiereval/dataset.hpp"
#include "tiereval/embeddings.hpp"
#include "tiereval/parser.hpp"
#include "tiereval/schema.hpp"

namespace tiereval::synth {

inline constexpr std::string_view kHallucinationToken = "unlisted-value";

struct ErrorSpec {
  // Gold NA -> uniformly random non-NA class.
  double false_visibility = 0.0;
  // Gold non-NA -> NA.
  double false_na = 0.0;
  // Gold non-NA -> uniformly random other non-NA class.
  double confusion = 0.0;
  // Gold non-NA -> out-of-space value.
  double hallucination = 0.0;
  std::uint64_t seed = 0;

  // Throws ConfigError unless every rate is in [0, 1] and
  // false_na + confusion + hallucination <= 1.
  void validate() const;
};

nlohmann::json to_json(const ErrorSpec& spec);
ErrorSpec error_spec_from_json(const nlohmann::json& j);

// Per attribute, one probability per class.
using ClassPriors = std::vector<std::vector<double>>;

ClassPriors uniform_priors(const SchemaRegistry& registry);
// NA gets `na_probability`; the remaining mass is uniform over the other
// classes. Attributes without NA are uniform.
ClassPriors na_priors(const SchemaRegistry& registry, double na_probability);

struct SyntheticDataset {
  AnnotationSet annotations;
  ClassPriors priors;
  std::uint64_t seed = 0;
};

// n iid samples. Throws ConfigError if priors do not match the registry or
// an attribute's priors do not sum to 1 within 1e-9.
SyntheticDataset generate(const SchemaRegistry& registry, std::size_t n,
                          const ClassPriors& priors, std::uint64_t seed);

// One prediction set per gold sample, in gold order.
std::vector<ParsedPredictionSet> corrupt(const GroundTruthTable& gold,
                                         const SchemaRegistry& registry,
                                         const ErrorSpec& spec);

// Class-conditional Gaussian features: each (attribute, class) pair owns a
// random unit direction, and a sample's row is `signal` times the sum of its
// classes' directions plus standard normal noise. L2-normalized on request.
EmbeddingMatrix synthetic_embeddings(const GroundTruthTable& gold,
                                     std::span<const std::string> ids,
                                     const SchemaRegistry& registry,
                                     std::size_t dim, double signal,
                                     std::uint64_t seed, bool normalize);

struct OraclePRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct OracleAttributeScores {
  std::vector<OraclePRF> tier1_classes;
  double tier1 = 0.0;
  std::optional<OraclePRF> tier2;
  std::vector<OraclePRF> tier3_classes;
  std::optional<double> tier3_supported;
  std::optional<double> tier3_literal;
  std::uint64_t hallucinations = 0;
  std::uint64_t missing = 0;
};

std::vector<OracleAttributeScores> brute_force_score(
    const GroundTruthTable& gold, std::span<const ParsedPredictionSet> preds,
    std::span<const std::string> roster, const SchemaRegistry& registry);

// Engine-versus-oracle agreement over one instance. Structural mismatches
// (a value present on one side only, or differing counts) are listed in
// `mismatches`; numeric ones contribute to max_abs_diff.
struct OracleComparison {
  double max_abs_diff = 0.0;
  std::size_t values_compared = 0;
  std::vector<std::string> mismatches;
};

OracleComparison compare_with_oracle(const GroundTruthTable& gold,
                                     std::span<const ParsedPredictionSet> preds,
                                     std::span<const std::string> roster,
                                     const SchemaRegistry& registry);

}  // namespace tiereval::synth

#endif  // TIEREVAL_SYNTH_HPP_
