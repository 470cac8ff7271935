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

// Three-tier metric engine.
//
//   Tier 1  macro-F1 over the whole label space, NA included.
//   Tier 2  binary NA detection (precision, recall, F1 of the NA class).
//   Tier 3  macro-F1 on samples whose gold label is not NA; NA stays a
//           possible (wrong) prediction.
//
// Hallucinated and missing predictions count as a false negative for the
// gold class and never as a false positive for any class. Every ratio with
// a zero denominator is 0.

#ifndef TIEREVAL_METRICS_HPP_
#define TIEREVAL_METRICS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tiereval/dataset.hpp"
#include "tiereval/parser.hpp"
#include "tiereval/schema.hpp"

namespace tiereval {

enum class Tier3Mode {
  // Average over non-NA classes with gold support in the applicable subset.
  kSupported,
  // Average over every class of the label space, NA included.
  kLiteral,
};

enum class RateMode { kPerImage, kPerPrediction };

std::string_view tier3_mode_name(Tier3Mode mode);
Tier3Mode parse_tier3_mode(std::string_view name);
std::string_view rate_mode_name(RateMode mode);
RateMode parse_rate_mode(std::string_view name);

// Dense (gold, prediction) codes for one roster: row-major samples x attrs.
// Prediction codes follow ResolvedLabel::code().
class ScoringMatrix {
 public:
  ScoringMatrix(std::size_t num_attributes, std::vector<std::string> ids,
                std::vector<std::uint16_t> gold, std::vector<std::int16_t> pred);

  std::size_t num_samples() const { return ids_.size(); }
  std::size_t num_attributes() const { return num_attributes_; }
  const std::vector<std::string>& ids() const { return ids_; }

  std::uint16_t gold(std::size_t sample, std::size_t attr) const {
    return gold_[sample * num_attributes_ + attr];
  }
  std::int16_t pred(std::size_t sample, std::size_t attr) const {
    return pred_[sample * num_attributes_ + attr];
  }

 private:
  std::size_t num_attributes_;
  std::vector<std::string> ids_;
  std::vector<std::uint16_t> gold_;
  std::vector<std::int16_t> pred_;
};

// Predictions are matched by sample_id; a roster sample without a set, or
// with a failed parse, is Missing on every attribute. Throws DataError if a
// roster id lacks gold labels.
ScoringMatrix build_scoring_matrix(const SchemaRegistry& registry,
                                   const GroundTruthTable& gold,
                                   std::span<const std::string> roster,
                                   std::span<const ParsedPredictionSet> preds);

// Confusion counts for one attribute. Rows are gold classes; columns are the
// K predicted classes followed by hallucination and missing.
class ConfusionTally {
 public:
  ConfusionTally(std::size_t num_classes, std::optional<std::size_t> na_index);

  void add(std::size_t gold, int pred_code, std::uint64_t weight = 1);

  std::size_t num_classes() const { return k_; }
  std::optional<std::size_t> na_index() const { return na_; }
  std::uint64_t cell(std::size_t gold, std::size_t column) const {
    return counts_[gold * (k_ + 2) + column];
  }

  // Full-task view.
  std::uint64_t tp(std::size_t c) const;
  std::uint64_t fp(std::size_t c) const;
  std::uint64_t fn(std::size_t c) const;
  std::uint64_t support(std::size_t c) const;

  // Applicable-subset view: rows with gold NA dropped.
  std::uint64_t applicable_fp(std::size_t c) const;
  std::uint64_t applicable_samples() const;

  std::uint64_t hallucination_count() const { return hallucinations_; }
  std::uint64_t missing_count() const { return missing_; }
  std::uint64_t scored_sample_count() const { return total_; }

 private:
  std::size_t k_;
  std::optional<std::size_t> na_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t hallucinations_ = 0;
  std::uint64_t missing_ = 0;
  std::uint64_t total_ = 0;
};

// One tally per attribute. `weights`, when non-empty, gives each roster
// sample a multiplicity (bootstrap resampling).
std::vector<ConfusionTally> tally(const ScoringMatrix& matrix,
                                  const SchemaRegistry& registry,
                                  std::span<const std::uint32_t> weights = {});
std::vector<ConfusionTally> tally(const GroundTruthTable& gold,
                                  std::span<const ParsedPredictionSet> preds,
                                  std::span<const std::string> roster,
                                  const SchemaRegistry& registry);

struct ClassPRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

ClassPRF class_prf(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);

std::vector<ClassPRF> tier1_class_scores(const ConfusionTally& t);
double tier1(const ConfusionTally& t);

// nullopt for an attribute without NA.
std::optional<ClassPRF> tier2(const ConfusionTally& t);

// Per-class scores on the applicable subset (all K classes).
std::vector<ClassPRF> tier3_class_scores(const ConfusionTally& t);
// nullopt when the applicable subset is empty. Without an NA class the
// applicable subset is the whole roster and Tier 3 is Tier 1 by definition.
std::optional<double> tier3(const ConfusionTally& t, Tier3Mode mode);

struct AttributeTierScores {
  std::string name;
  AttributeCategory category = AttributeCategory::kShape;
  double tier1 = 0.0;
  std::optional<ClassPRF> tier2;
  std::optional<double> tier3;
  std::optional<double> gap;
  std::uint64_t hallucinations = 0;
  std::uint64_t missing = 0;
};

// tier3 - tier1; throws std::domain_error when tier3 is absent.
double gap(const AttributeTierScores& scores);

std::vector<AttributeTierScores> score_attributes(
    std::span<const ConfusionTally> tallies, const SchemaRegistry& registry,
    Tier3Mode mode);

// Mean of tier1 over all attributes, in registry order.
double model_tier1(std::span<const ConfusionTally> tallies);

struct TierMeans {
  double tier1 = 0.0;
  // Over attributes with an NA class only.
  std::optional<double> tier2;
  std::optional<double> na_precision;
  std::optional<double> na_recall;
  // Over attributes with a defined tier 3.
  std::optional<double> tier3;
};

struct BootstrapCI {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t iterations = 0;
  double level = 95.0;
  std::uint64_t seed = 0;
};

enum class DiagnosticPattern {
  kNaNotMajorFactor,
  kStrugglesWithNa,
  kFalseVisibility,
  kFalseNa,
  kKnowsWhenNotWhat,
  kGoodDiscriminationPoorApplicability,
};

struct ModelSummary {
  std::string model_id;
  std::string display_name;
  std::string group;
  std::string vendor;
  std::string variant;

  std::vector<AttributeTierScores> attributes;
  TierMeans means;
  std::map<AttributeCategory, TierMeans> categories;

  std::uint64_t hallucination_count = 0;
  std::uint64_t missing_count = 0;
  std::uint64_t scored_samples = 0;
  std::size_t num_attributes = 0;
  std::optional<double> rate_per_image;
  std::optional<double> rate_per_prediction;

  std::optional<double> cost_total;
  std::optional<double> cost_per_5k;
  std::optional<BootstrapCI> tier1_ci;
  std::vector<DiagnosticPattern> diagnostics;
  Tier3Mode tier3_mode = Tier3Mode::kSupported;
};

// Model-level and per-category means. Throws DataError when `scores` does
// not cover the registry.
ModelSummary aggregate(std::span<const AttributeTierScores> scores,
                       const SchemaRegistry& registry);

// Percent. per_image: count / images; per_prediction:
// count / (attributes * images). Throws std::domain_error on a zero
// denominator.
double hallucination_rate(std::uint64_t count, std::uint64_t scored_images,
                          std::size_t num_attributes, RateMode mode);

// {model, attributes:{name:{tier1, tier2:{p,r,f1}, tier3, gap}},
//  summary:{t1, t2, t3, ci, categories, hallucinations, diagnostics, ...}}
nlohmann::json summary_to_json(const ModelSummary& summary);
ModelSummary summary_from_json(const nlohmann::json& j);

std::string_view diagnostic_name(DiagnosticPattern p);
DiagnosticPattern parse_diagnostic(std::string_view name);

}  // namespace tiereval

#endif  // TIEREVAL_METRICS_HPP_
