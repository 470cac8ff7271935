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

// Converts raw model text into per-attribute predictions, tracking schema
// compliance and out-of-space (hallucinated) values.

#ifndef TIEREVAL_PARSER_HPP_
#define TIEREVAL_PARSER_HPP_

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tiereval/schema.hpp"

namespace tiereval {

struct AttributePrediction {
  std::string attr_name;
  std::string raw_value;
  ResolvedLabel resolved = ResolvedLabel::missing();
  std::string reasoning;
  // Clamped into [0, 1]; see confidence_clamped.
  std::optional<double> confidence;
  bool confidence_clamped = false;

  friend bool operator==(const AttributePrediction&,
                         const AttributePrediction&) = default;
};

struct Compliance {
  bool used_code_fence = false;
  bool parse_failed = false;
  std::vector<std::string> missing_attrs;
  // Keys that match no registry attribute, or repeat one already read.
  std::vector<std::string> extra_attrs;
  // Attributes found outside their category group (salvaged).
  std::vector<std::string> misplaced_attrs;
  // Attributes keyed by an alias instead of the canonical name.
  std::vector<std::string> aliased_attrs;
  // Entries that were not {value, reasoning, confidence} objects.
  std::vector<std::string> malformed_attrs;
  std::vector<std::string> clamped_confidences;
  std::string error;

  // True when the output followed the requested format exactly.
  bool clean() const;

  friend bool operator==(const Compliance&, const Compliance&) = default;
};

struct ParsedPredictionSet {
  std::string sample_id;
  std::string model;
  // Indexed by registry attribute position; nullopt = Missing.
  std::vector<std::optional<AttributePrediction>> predictions;
  Compliance compliance;

  ResolvedLabel resolved(std::size_t attr) const {
    if (attr >= predictions.size() || !predictions[attr]) {
      return ResolvedLabel::missing();
    }
    return predictions[attr]->resolved;
  }
  std::size_t prediction_count() const;
  std::size_t hallucination_count() const;

  friend bool operator==(const ParsedPredictionSet&,
                         const ParsedPredictionSet&) = default;
};

struct ParseOptions {
  // Reject fences, misplaced keys, aliases, and malformed entries.
  bool strict = false;
  MatchMode match = MatchMode::kNormalized;
};

// Removes one surrounding ``` fence (with optional language tag). Returns
// nullopt when `text` is not fenced.
std::optional<std::string> strip_code_fence(std::string_view text);

// Never throws on bad model output: unparsable text yields parse_failed.
ParsedPredictionSet parse_output(std::string_view raw_text,
                                 const SchemaRegistry& registry,
                                 const ParseOptions& options = {});

std::size_t count_hallucinations(std::span<const ParsedPredictionSet> sets);

// {sample_id, model, attrs:{name:{value, resolved, reasoning, confidence}},
//  compliance}
nlohmann::json to_json(const ParsedPredictionSet& set,
                       const SchemaRegistry& registry);
ParsedPredictionSet prediction_set_from_json(const nlohmann::json& j,
                                             const SchemaRegistry& registry);

void write_prediction_sets(std::ostream& out,
                           std::span<const ParsedPredictionSet> sets,
                           const SchemaRegistry& registry);
std::vector<ParsedPredictionSet> read_prediction_sets(
    std::istream& in, const SchemaRegistry& registry);

// Renders predictions in the requested output shape (grouped by category).
// Hallucinated entries carry raw_value verbatim; Missing ones are omitted.
std::string render_model_output(const ParsedPredictionSet& set,
                                const SchemaRegistry& registry);

}  // namespace tiereval

#endif  // TIEREVAL_PARSER_HPP_
