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

#ifndef TIEREVAL_DATASET_HPP_
#define TIEREVAL_DATASET_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tiereval/schema.hpp"

namespace tiereval {

struct SampleMeta {
  std::string sample_id;
  std::string image_ref;
  std::string gender;
  std::string product_category;
  std::string view;
};

// Gold labels: one label index per registry attribute per sample.
class GroundTruthTable {
 public:
  explicit GroundTruthTable(std::size_t num_attributes = 0)
      : num_attributes_(num_attributes) {}

  // Throws DataError on a duplicate id or a row of the wrong width.
  void add(const std::string& sample_id, std::vector<std::uint16_t> labels);

  bool contains(const std::string& sample_id) const {
    return index_.count(sample_id) > 0;
  }
  // Throws DataError if absent.
  std::span<const std::uint16_t> row(const std::string& sample_id) const;

  std::size_t size() const { return ids_.size(); }
  std::size_t num_attributes() const { return num_attributes_; }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::size_t num_attributes_;
  std::vector<std::string> ids_;
  std::vector<std::uint16_t> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AnnotationSet {
  std::vector<SampleMeta> samples;
  GroundTruthTable gold;
};

// One JSON record per line:
//   {"sample_id", "image", "gender", "category", "view", "labels": {attr: class}}
// Gold labels must lie in the label space (exact match) and every registry
// attribute must be labelled. Throws DataError naming the offending line.
AnnotationSet parse_annotations(std::istream& in, const SchemaRegistry& registry);
AnnotationSet load_annotations(const std::string& path,
                               const SchemaRegistry& registry);
void write_annotations(std::ostream& out, const AnnotationSet& set,
                       const SchemaRegistry& registry);

// "A {gender}'s {category} photographed from {view} view".
// Throws DataError when any field is empty.
std::string render_description(const SampleMeta& meta);

enum class Split : std::uint8_t { kTrain = 0, kDev = 1, kTest = 2 };
std::string_view split_name(Split split);

struct SplitSpec {
  // Absolute bucket sizes; take precedence over ratios when set.
  std::optional<std::array<std::size_t, 3>> counts;
  std::array<double, 3> ratios = {1.0, 0.0, 0.0};
};

struct SplitAssignment {
  std::uint64_t seed = 0;
  std::map<std::string, Split> assignment;
  // Samples left out when absolute counts sum below the sample count.
  std::vector<std::string> unassigned;

  std::vector<std::string> ids_in(Split split) const;
  std::array<std::size_t, 3> counts() const;
};

// Stratified by product_category. Within each category the proportions match
// the bucket targets to within one sample; per-bucket totals are exact.
// Deterministic for a fixed seed regardless of input order.
// Throws ConfigError on empty input, bad ratios, or counts exceeding N.
SplitAssignment stratified_split(std::span<const SampleMeta> samples,
                                 const SplitSpec& spec, std::uint64_t seed);

// {seed, counts:{train,dev,test,unassigned}, assignment:{id: split}}
nlohmann::json split_manifest(const SplitAssignment& split);
SplitAssignment split_from_manifest(const nlohmann::json& manifest);

class ExclusionSet {
 public:
  // Returns false if the id was already present (first reason kept).
  bool add(const std::string& sample_id, const std::string& reason);
  bool contains(const std::string& sample_id) const {
    return reasons_.count(sample_id) > 0;
  }
  std::size_t size() const { return reasons_.size(); }
  const std::map<std::string, std::string>& entries() const { return reasons_; }

 private:
  std::map<std::string, std::string> reasons_;
};

// JSON-lines {sample_id, reason}. A missing file gives an empty set.
ExclusionSet load_exclusions(const std::string& path);
void save_exclusions(const std::string& path, const ExclusionSet& set);

struct ScoringRoster {
  std::vector<std::string> ids;
  // Exclusion ids that were not in the test split.
  std::vector<std::string> ignored;
};

// Test ids (sorted) minus exclusions; the same roster for every model.
ScoringRoster apply_exclusions(const SplitAssignment& split,
                               const ExclusionSet& exclusions);

}  // namespace tiereval

#endif  // TIEREVAL_DATASET_HPP_
