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

// Attribute registry: label spaces, NA flags, categories, the zero-shot
// system prompt, and resolution of raw model strings to label indices.

#ifndef TIEREVAL_SCHEMA_HPP_
#define TIEREVAL_SCHEMA_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace tiereval {

enum class AttributeCategory { kShape, kFabric, kPattern };

inline constexpr std::array<AttributeCategory, 3> kAllCategories = {
    AttributeCategory::kShape, AttributeCategory::kFabric,
    AttributeCategory::kPattern};

std::string_view category_name(AttributeCategory category);
// Throws ConfigError on an unknown name.
AttributeCategory parse_category(std::string_view name);

inline constexpr std::string_view kNaLabel = "NA";

struct AttributeSpec {
  std::string name;
  AttributeCategory category = AttributeCategory::kShape;
  std::vector<std::string> labels;
  bool has_na = false;
  // Short human description used in the prompt.
  std::string description;
  // Alternate keys accepted when reading model output.
  std::vector<std::string> aliases;

  std::size_t num_classes() const { return labels.size(); }

  friend bool operator==(const AttributeSpec&, const AttributeSpec&) = default;
};

// A model prediction mapped into an attribute's label space.
class ResolvedLabel {
 public:
  enum class Kind : std::uint8_t { kIndex, kHallucination, kMissing };

  static constexpr int kHallucinationCode = -1;
  static constexpr int kMissingCode = -2;

  static ResolvedLabel index(std::size_t i) {
    return ResolvedLabel(Kind::kIndex, i);
  }
  static ResolvedLabel hallucination() {
    return ResolvedLabel(Kind::kHallucination, 0);
  }
  static ResolvedLabel missing() { return ResolvedLabel(Kind::kMissing, 0); }
  // Inverse of code(). Throws std::invalid_argument on codes below -2.
  static ResolvedLabel from_code(int code);

  Kind kind() const { return kind_; }
  bool is_index() const { return kind_ == Kind::kIndex; }
  bool is_hallucination() const { return kind_ == Kind::kHallucination; }
  bool is_missing() const { return kind_ == Kind::kMissing; }
  // Only meaningful when is_index().
  std::size_t value() const { return index_; }

  // Index, -1 for a hallucination, -2 for a missing prediction.
  int code() const;

  friend bool operator==(const ResolvedLabel&, const ResolvedLabel&) = default;

 private:
  ResolvedLabel(Kind kind, std::size_t index) : kind_(kind), index_(index) {}

  Kind kind_;
  std::size_t index_;
};

enum class MatchMode {
  // NFC, trim, case-fold; then compare.
  kNormalized,
  // Byte-exact comparison.
  kExact,
};

// NFC-normalize, trim Unicode whitespace, and case-fold a UTF-8 string.
std::string normalize_label(std::string_view raw);

// Immutable after construction.
class SchemaRegistry {
 public:
  // Validates and indexes `attributes`. Throws ConfigError on duplicate
  // attribute names or labels, has_na inconsistent with labels, empty label
  // spaces, or (strict) category counts other than 12/3/3.
  SchemaRegistry(std::vector<AttributeSpec> attributes, std::string version,
                 bool strict);

  const std::vector<AttributeSpec>& attributes() const { return attributes_; }
  const std::string& version() const { return version_; }
  std::size_t size() const { return attributes_.size(); }
  const AttributeSpec& operator[](std::size_t i) const {
    return attributes_[i];
  }

  // Attribute position by canonical name or alias.
  std::optional<std::size_t> find(std::string_view name) const;
  // Throws std::out_of_range for an unknown name.
  std::size_t index_of(std::string_view name) const;
  const AttributeSpec& at(std::string_view name) const;

  // Index of "NA" in attribute `attr`, if it has one.
  std::optional<std::size_t> na_index(std::size_t attr) const {
    return na_index_[attr];
  }

  std::size_t count_in(AttributeCategory category) const;
  std::size_t count_with_na() const;

  ResolvedLabel resolve(std::size_t attr, std::string_view raw,
                        MatchMode mode = MatchMode::kNormalized) const;

  nlohmann::json to_json() const;

  friend bool operator==(const SchemaRegistry& a, const SchemaRegistry& b) {
    return a.version_ == b.version_ && a.attributes_ == b.attributes_;
  }

 private:
  std::vector<AttributeSpec> attributes_;
  std::string version_;
  std::unordered_map<std::string, std::size_t> by_name_;
  std::vector<std::optional<std::size_t>> na_index_;
  // Per attribute: normalized label -> index.
  std::vector<std::unordered_map<std::string, std::size_t>> normalized_;
};

struct RegistryOptions {
  bool strict = true;
};

// The 18-attribute registry used by the zero-shot prompt.
SchemaRegistry default_registry();

// Builds a registry from a config document: either an array of
// {name, category, labels, has_na[, description, aliases]} or an object
// {"version": ..., "attributes": [...]}. With no source, the default.
SchemaRegistry load_registry(const std::optional<nlohmann::json>& source,
                             RegistryOptions options = {});
SchemaRegistry load_registry_file(const std::string& path,
                                  RegistryOptions options = {});

// Throws std::out_of_range for an unknown attribute name.
ResolvedLabel resolve_label(const SchemaRegistry& registry,
                            std::string_view attr_name, std::string_view raw,
                            MatchMode mode = MatchMode::kNormalized);

// The complete zero-shot system prompt; byte-stable for a fixed registry.
std::string render_system_prompt(const SchemaRegistry& registry);

}  // namespace tiereval

#endif  // TIEREVAL_SCHEMA_HPP_
