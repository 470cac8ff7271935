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

#include "tiereval/schema.hpp"

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "tiereval/errors.hpp"

namespace tiereval {
namespace {

using nlohmann::json;

const std::vector<std::string> kFabricLabels = {
    "denim", "cotton", "leather", "furry", "knitted", "chiffon", "other", "NA"};
const std::vector<std::string> kPatternLabels = {
    "floral",  "graphic", "striped",     "pure color",
    "lattice", "other",   "color block", "NA"};

std::vector<AttributeSpec> default_attributes() {
  using C = AttributeCategory;
  auto spec = [](std::string name, C cat, std::string description,
                 std::vector<std::string> labels,
                 std::vector<std::string> aliases = {}) {
    AttributeSpec s;
    s.name = std::move(name);
    s.category = cat;
    s.description = std::move(description);
    s.has_na = std::find(labels.begin(), labels.end(), kNaLabel) != labels.end();
    s.labels = std::move(labels);
    s.aliases = std::move(aliases);
    return s;
  };
  return {
      spec("sleeve_length", C::kShape, "Length of sleeves on upper clothing",
           {"sleeveless", "short-sleeve", "medium-sleeve", "long-sleeve"}),
      spec("lower_clothing_length", C::kShape,
           "Length of pants/skirts/shorts",
           {"three-point", "medium short", "three-quarter", "long", "NA"},
           {"lower_clothing_len"}),
      spec("socks", C::kShape, "Type of leg covering worn",
           {"no", "socks", "leggings", "NA"}),
      spec("hat", C::kShape, "Whether person is wearing a hat",
           {"no", "yes", "NA"}),
      spec("glasses", C::kShape, "Type of eyewear",
           {"no", "sunglasses", "have a glasses in hand or clothes", "NA"}),
      spec("neckwear", C::kShape, "Whether wearing necklace/scarf/tie",
           {"no", "yes", "NA"}),
      spec("wrist_wearing", C::kShape, "Whether wearing bracelet/watch",
           {"no", "yes", "NA"}),
      spec("ring", C::kShape, "Whether wearing a ring", {"no", "yes", "NA"}),
      spec("waist_accessories", C::kShape, "Accessories at waist",
           {"no", "belt", "have a clothing", "NA"}),
      spec("neckline", C::kShape, "Style of neckline on upper clothing",
           {"V-shape", "square", "round", "standing", "lapel", "suspenders",
            "NA"}),
      spec("outer_clothing_cardigan", C::kShape,
           "Whether outer layer is a cardigan", {"yes", "no"},
           {"outer_cardigan"}),
      spec("upper_clothing_covering_navel", C::kShape,
           "Whether upper clothing covers navel", {"no", "yes", "NA"},
           {"upper_covering_navel"}),
      spec("upper_fabric", C::kFabric, "Fabric type of upper body clothing",
           kFabricLabels),
      spec("lower_fabric", C::kFabric, "Fabric type of lower body clothing",
           kFabricLabels),
      spec("outer_fabric", C::kFabric,
           "Fabric type of outer layer (jacket/coat)", kFabricLabels),
      spec("upper_pattern", C::kPattern, "Pattern on upper body clothing",
           kPatternLabels),
      spec("lower_pattern", C::kPattern, "Pattern on lower body clothing",
           kPatternLabels),
      spec("outer_pattern", C::kPattern, "Pattern on outer layer",
           kPatternLabels),
  };
}

const char* kDefaultVersion = "deepfashion-mm-18/v1";

}  // namespace

std::string_view category_name(AttributeCategory category) {
  switch (category) {
    case AttributeCategory::kShape:
      return "shape";
    case AttributeCategory::kFabric:
      return "fabric";
    case AttributeCategory::kPattern:
      return "pattern";
  }
  return "shape";
}

AttributeCategory parse_category(std::string_view name) {
  for (auto c : kAllCategories) {
    if (category_name(c) == name) return c;
  }
  throw ConfigError("unknown attribute category '" + std::string(name) + "'");
}

ResolvedLabel ResolvedLabel::from_code(int code) {
  if (code >= 0) return index(static_cast<std::size_t>(code));
  if (code == kHallucinationCode) return hallucination();
  if (code == kMissingCode) return missing();
  throw std::invalid_argument("invalid resolved label code " +
                              std::to_string(code));
}

int ResolvedLabel::code() const {
  switch (kind_) {
    case Kind::kIndex:
      return static_cast<int>(index_);
    case Kind::kHallucination:
      return kHallucinationCode;
    case Kind::kMissing:
      return kMissingCode;
  }
  return kMissingCode;
}

std::string normalize_label(std::string_view raw) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC unavailable");
  icu::UnicodeString text = icu::UnicodeString::fromUTF8(
      icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  text = nfc->normalize(text, status);
  text.trim();
  text.foldCase();
  // Case folding can produce unnormalized sequences.
  text = nfc->normalize(text, status);
  if (U_FAILURE(status)) return std::string(raw);
  std::string out;
  text.toUTF8String(out);
  return out;
}

SchemaRegistry::SchemaRegistry(std::vector<AttributeSpec> attributes,
                               std::string version, bool strict)
    : attributes_(std::move(attributes)), version_(std::move(version)) {
  if (attributes_.empty()) throw ConfigError("registry has no attributes");
  na_index_.reserve(attributes_.size());
  normalized_.reserve(attributes_.size());
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    const AttributeSpec& a = attributes_[i];
    if (a.name.empty()) throw ConfigError("attribute with empty name");
    if (!by_name_.emplace(a.name, i).second) {
      throw ConfigError("duplicate attribute name '" + a.name + "'");
    }
    if (a.labels.empty()) {
      throw ConfigError("attribute '" + a.name + "' has no labels");
    }
    std::unordered_set<std::string> seen;
    std::unordered_map<std::string, std::size_t> norm;
    std::optional<std::size_t> na;
    for (std::size_t c = 0; c < a.labels.size(); ++c) {
      if (!seen.insert(a.labels[c]).second) {
        throw ConfigError("attribute '" + a.name + "' repeats label '" +
                          a.labels[c] + "'");
      }
      if (!norm.emplace(normalize_label(a.labels[c]), c).second) {
        throw ConfigError("attribute '" + a.name + "' has labels that collide "
                          "after normalization: '" + a.labels[c] + "'");
      }
      if (a.labels[c] == kNaLabel) na = c;
    }
    if (a.has_na != na.has_value()) {
      throw ConfigError("attribute '" + a.name + "': has_na is " +
                        (a.has_na ? "true" : "false") + " but labels " +
                        (na ? "contain" : "do not contain") + " \"NA\"");
    }
    na_index_.push_back(na);
    normalized_.push_back(std::move(norm));
  }
  // Aliases are registered after canonical names so they never shadow one.
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    for (const auto& alias : attributes_[i].aliases) {
      auto [it, inserted] = by_name_.emplace(alias, i);
      if (!inserted && it->second != i) {
        throw ConfigError("alias '" + alias + "' of '" + attributes_[i].name +
                          "' collides with another attribute");
      }
    }
  }
  if (strict) {
    const std::array<std::size_t, 3> expected = {12, 3, 3};
    for (std::size_t k = 0; k < kAllCategories.size(); ++k) {
      if (count_in(kAllCategories[k]) != expected[k]) {
        throw ConfigError(
            "strict registry requires 12/3/3 shape/fabric/pattern attributes, "
            "got " + std::to_string(count_in(AttributeCategory::kShape)) + "/" +
            std::to_string(count_in(AttributeCategory::kFabric)) + "/" +
            std::to_string(count_in(AttributeCategory::kPattern)));
      }
    }
  }
}

std::optional<std::size_t> SchemaRegistry::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

std::size_t SchemaRegistry::index_of(std::string_view name) const {
  auto i = find(name);
  if (!i) throw std::out_of_range("unknown attribute '" + std::string(name) + "'");
  return *i;
}

const AttributeSpec& SchemaRegistry::at(std::string_view name) const {
  return attributes_[index_of(name)];
}

std::size_t SchemaRegistry::count_in(AttributeCategory category) const {
  return static_cast<std::size_t>(
      std::count_if(attributes_.begin(), attributes_.end(),
                    [&](const AttributeSpec& a) { return a.category == category; }));
}

std::size_t SchemaRegistry::count_with_na() const {
  return static_cast<std::size_t>(
      std::count_if(attributes_.begin(), attributes_.end(),
                    [](const AttributeSpec& a) { return a.has_na; }));
}

ResolvedLabel SchemaRegistry::resolve(std::size_t attr, std::string_view raw,
                                      MatchMode mode) const {
  const AttributeSpec& a = attributes_.at(attr);
  if (mode == MatchMode::kExact) {
    for (std::size_t c = 0; c < a.labels.size(); ++c) {
      if (a.labels[c] == raw) return ResolvedLabel::index(c);
    }
    return ResolvedLabel::hallucination();
  }
  const auto& table = normalized_[attr];
  auto it = table.find(normalize_label(raw));
  if (it == table.end()) return ResolvedLabel::hallucination();
  return ResolvedLabel::index(it->second);
}

json SchemaRegistry::to_json() const {
  json attrs = json::array();
  for (const auto& a : attributes_) {
    json j = {{"name", a.name},
              {"category", std::string(category_name(a.category))},
              {"labels", a.labels},
              {"has_na", a.has_na}};
    if (!a.description.empty()) j["description"] = a.description;
    if (!a.aliases.empty()) j["aliases"] = a.aliases;
    attrs.push_back(std::move(j));
  }
  return {{"version", version_}, {"attributes", std::move(attrs)}};
}

SchemaRegistry default_registry() {
  return SchemaRegistry(default_attributes(), kDefaultVersion, true);
}

SchemaRegistry load_registry(const std::optional<json>& source,
                             RegistryOptions options) {
  if (!source) return default_registry();
  const json* list = &*source;
  std::string version = "custom";
  if (source->is_object()) {
    if (!source->contains("attributes")) {
      throw ConfigError("registry document lacks an 'attributes' array");
    }
    list = &(*source)["attributes"];
    version = source->value("version", version);
  }
  if (!list->is_array()) throw ConfigError("registry attributes must be an array");
  std::vector<AttributeSpec> attrs;
  for (const auto& entry : *list) {
    try {
      AttributeSpec a;
      a.name = entry.at("name").get<std::string>();
      a.category = parse_category(entry.at("category").get<std::string>());
      a.labels = entry.at("labels").get<std::vector<std::string>>();
      a.has_na = entry.at("has_na").get<bool>();
      a.description = entry.value("description", std::string());
      a.aliases = entry.value("aliases", std::vector<std::string>{});
      attrs.push_back(std::move(a));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed registry entry: ") + e.what());
    }
  }
  return SchemaRegistry(std::move(attrs), version, options.strict);
}

SchemaRegistry load_registry_file(const std::string& path,
                                  RegistryOptions options) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open registry file " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("registry file " + path + " is not JSON");
  return load_registry(doc, options);
}

ResolvedLabel resolve_label(const SchemaRegistry& registry,
                            std::string_view attr_name, std::string_view raw,
                            MatchMode mode) {
  return registry.resolve(registry.index_of(attr_name), raw, mode);
}

std::string render_system_prompt(const SchemaRegistry& registry) {
  std::ostringstream out;
  auto upper = [](std::string_view s) {
    std::string u(s);
    for (auto& ch : u) {
      if (ch >= 'a' && ch <= 'z') ch = static_cast<char>(ch - 'a' + 'A');
    }
    return u;
  };
  auto title = [](std::string_view s) {
    std::string t(s);
    if (!t.empty() && t[0] >= 'a' && t[0] <= 'z') {
      t[0] = static_cast<char>(t[0] - 'a' + 'A');
    }
    return t;
  };

  std::vector<AttributeCategory> present;
  for (auto c : kAllCategories) {
    if (registry.count_in(c) > 0) present.push_back(c);
  }
  std::string category_list;
  for (std::size_t i = 0; i < present.size(); ++i) {
    if (i > 0) category_list += (i + 1 == present.size()) ? (present.size() > 2 ? ", and " : " and ") : ", ";
    category_list += title(category_name(present[i]));
  }
  static const char* kCountWords[] = {"zero", "one", "two", "three"};
  const std::string n_categories = present.size() < 4
                                       ? kCountWords[present.size()]
                                       : std::to_string(present.size());

  out << "You are an expert fashion attribute analyzer. Your task is to analyze "
         "fashion images and predict specific attributes about the clothing "
         "items shown.\n";
  out << "## Task Description\n";
  out << "Given an image of a fashion item and its text description, predict "
         "the values for "
      << registry.size() << " different fashion attributes organized into "
      << n_categories << " categories: " << category_list << ".\n";
  out << "## Attribute Categories and Valid Values\n";

  std::size_t number = 0;
  for (auto c : present) {
    out << "### " << upper(category_name(c)) << " ATTRIBUTES ("
        << registry.count_in(c) << " total)\n";
    for (const auto& a : registry.attributes()) {
      if (a.category != c) continue;
      ++number;
      const std::string num = std::to_string(number);
      out << num << ". **" << a.name << "**";
      if (!a.description.empty()) out << " - " << a.description;
      out << "\n" << std::string(num.size() + 2, ' ') << "Valid values: ";
      for (std::size_t l = 0; l < a.labels.size(); ++l) {
        if (l > 0) out << ", ";
        out << '"' << a.labels[l] << '"';
      }
      out << "\n";
    }
  }

  out << R"(## Important Guidelines
1. **Use "NA"** when:
   - The item doesn't exist or is not visible in the image (e.g., no lower clothing visible, so lower_fabric = "NA")
   - The attribute doesn't apply to the item shown
   - The attribute cannot be determined from the image
2. **Be precise**: Choose the most specific value that matches what you see
3. **Provide reasoning**: For each attribute, explain in 1-2 sentences why you chose that specific value based on what you observe in the image
4. **Assign confidence scores**: Rate your certainty for each prediction on a scale of 0.0 to 1.0:
   Force yourself to use the full range. The confidence score reflects how certain you are about the ASSIGNED VALUE (including "NA").
   - **1.0**: Completely certain about the assigned value
     - For regular values: attribute is clearly visible and unambiguous
     - For "NA": completely certain the item doesn't exist or isn't applicable (e.g., dress clearly has no separate lower clothing)
   - **0.8-0.9**: Very confident about the assigned value
     - For regular values: attribute is clearly visible with minor ambiguity
     - For "NA": very confident the item doesn't exist, with only slight uncertainty
   - **0.6-0.7**: Moderately confident about the assigned value
     - For regular values: attribute is visible but has some uncertainty
     - For "NA": moderately confident it doesn't exist, but could be hidden/unclear
   - **0.4-0.5**: Uncertain about the assigned value
     - For regular values: difficult to determine, making an educated guess
     - For "NA": unclear if item exists or not (e.g., can't tell if there's a belt under clothing)
   - **0.2-0.3**: Very uncertain about the assigned value
     - For regular values: barely visible or highly ambiguous
     - For "NA": very unsure if item is absent or just not visible
   - **0.0-0.1**: Extremely uncertain - essentially guessing
5. **Output format**: For each attribute, provide three fields (value, reasoning, confidence). Return predictions as a JSON object with exactly this structure:
)";

  // Output schema: the first attribute of the first group is spelled out,
  // every other group shows its first key and a count.
  bool first_group = true;
  for (std::size_t g = 0; g < present.size(); ++g) {
    const auto c = present[g];
    const std::string group = std::string(category_name(c)) + "_attributes";
    const std::size_t count = registry.count_in(c);
    std::vector<const AttributeSpec*> members;
    for (const auto& a : registry.attributes()) {
      if (a.category == c) members.push_back(&a);
    }
    out << (first_group ? "{" : " ") << '"' << group << "\": {";
    if (first_group) {
      out << '"' << members[0]->name
          << R"(": {"value": "<predicted_value>", "reasoning": "<explanation>", "confidence": <0-1>})";
      if (members.size() > 1) {
        out << ",\n  \"" << members[1]->name << "\": {...}";
      }
    } else {
      out << '"' << members[0]->name << "\": {...}";
    }
    out << ", ... (all " << count << " " << category_name(c)
        << " attributes)}";
    out << (g + 1 == present.size() ? "}\n" : ",\n");
    first_group = false;
  }

  out << "Analyze the image carefully and provide your prediction in the exact "
         "JSON format specified above.\n";
  out << "CRITICAL: Return ONLY the JSON object. No markdown code blocks, no "
         "preamble, no explanatory text before or after.\n";
  return out.str();
}

}  // namespace tiereval
