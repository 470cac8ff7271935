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

#include "tiereval/parser.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>

#include "tiereval/errors.hpp"

namespace tiereval {
namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string group_key(AttributeCategory c) {
  return std::string(category_name(c)) + "_attributes";
}

std::optional<AttributeCategory> group_category(std::string_view key) {
  for (auto c : kAllCategories) {
    if (group_key(c) == key) return c;
  }
  return std::nullopt;
}

struct Reader {
  const SchemaRegistry& registry;
  const ParseOptions& options;
  ParsedPredictionSet& out;

  // Returns false when strict mode rejects the document.
  bool read_entry(std::size_t attr, const std::string& key, const json& entry) {
    const AttributeSpec& spec = registry[attr];
    if (out.predictions[attr]) {
      out.compliance.extra_attrs.push_back(key);
      return !options.strict;
    }
    if (key != spec.name) {
      out.compliance.aliased_attrs.push_back(spec.name);
      if (options.strict) return false;
    }
    AttributePrediction p;
    p.attr_name = spec.name;
    if (entry.is_string()) {
      out.compliance.malformed_attrs.push_back(spec.name);
      if (options.strict) return false;
      p.raw_value = entry.get<std::string>();
      p.resolved = registry.resolve(attr, p.raw_value, options.match);
      out.predictions[attr] = std::move(p);
      return true;
    }
    if (!entry.is_object() || !entry.contains("value")) {
      out.compliance.malformed_attrs.push_back(spec.name);
      return !options.strict;
    }
    const json& value = entry["value"];
    if (value.is_string()) {
      p.raw_value = value.get<std::string>();
      p.resolved = registry.resolve(attr, p.raw_value, options.match);
    } else {
      // null, numbers, arrays: never inside a label space.
      p.raw_value = value.dump();
      p.resolved = ResolvedLabel::hallucination();
    }
    if (auto it = entry.find("reasoning"); it != entry.end() && it->is_string()) {
      p.reasoning = it->get<std::string>();
    }
    if (auto it = entry.find("confidence"); it != entry.end() && it->is_number()) {
      double c = it->get<double>();
      if (c < 0.0 || c > 1.0) {
        c = std::clamp(c, 0.0, 1.0);
        p.confidence_clamped = true;
        out.compliance.clamped_confidences.push_back(spec.name);
      }
      p.confidence = c;
    }
    out.predictions[attr] = std::move(p);
    return true;
  }
};

void fail(ParsedPredictionSet& out, std::size_t n, std::string error) {
  out.predictions.assign(n, std::nullopt);
  out.compliance.parse_failed = true;
  out.compliance.error = std::move(error);
}

}  // namespace

bool Compliance::clean() const {
  return !used_code_fence && !parse_failed && missing_attrs.empty() &&
         extra_attrs.empty() && misplaced_attrs.empty() &&
         aliased_attrs.empty() && malformed_attrs.empty() &&
         clamped_confidences.empty();
}

std::size_t ParsedPredictionSet::prediction_count() const {
  return static_cast<std::size_t>(std::count_if(
      predictions.begin(), predictions.end(),
      [](const auto& p) { return p.has_value(); }));
}

std::size_t ParsedPredictionSet::hallucination_count() const {
  return static_cast<std::size_t>(std::count_if(
      predictions.begin(), predictions.end(), [](const auto& p) {
        return p.has_value() && p->resolved.is_hallucination();
      }));
}

std::optional<std::string> strip_code_fence(std::string_view text) {
  std::string_view s = trim(text);
  constexpr std::string_view kFence = "```";
  if (s.size() < 2 * kFence.size() || s.substr(0, 3) != kFence ||
      s.substr(s.size() - 3) != kFence) {
    return std::nullopt;
  }
  s.remove_prefix(3);
  s.remove_suffix(3);
  // Optional language tag directly after the opening fence.
  std::size_t tag = 0;
  while (tag < s.size() && (std::isalnum(static_cast<unsigned char>(s[tag])) ||
                            s[tag] == '_' || s[tag] == '-')) {
    ++tag;
  }
  s.remove_prefix(tag);
  return std::string(trim(s));
}

ParsedPredictionSet parse_output(std::string_view raw_text,
                                 const SchemaRegistry& registry,
                                 const ParseOptions& options) {
  ParsedPredictionSet out;
  const std::size_t n = registry.size();
  out.predictions.assign(n, std::nullopt);

  std::string body(trim(raw_text));
  if (auto stripped = strip_code_fence(body)) {
    out.compliance.used_code_fence = true;
    if (options.strict) {
      fail(out, n, "output wrapped in a code fence");
      return out;
    }
    body = std::move(*stripped);
  }
  if (body.empty()) {
    fail(out, n, "empty output");
    return out;
  }
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    fail(out, n, doc.is_discarded() ? "output is not valid JSON"
                                    : "output is not a JSON object");
    return out;
  }

  Reader reader{registry, options, out};
  bool ok = true;
  // Pass 1: attributes inside their own category group.
  for (auto c : kAllCategories) {
    auto it = doc.find(group_key(c));
    if (it == doc.end() || !it->is_object()) continue;
    for (const auto& [key, entry] : it->items()) {
      auto attr = registry.find(key);
      if (attr && registry[*attr].category == c) {
        ok = reader.read_entry(*attr, key, entry) && ok;
      }
    }
  }
  // Pass 2: salvage keys in the wrong group or at the top level.
  for (const auto& [top_key, top_value] : doc.items()) {
    const auto group = group_category(top_key);
    if (group && top_value.is_object()) {
      for (const auto& [key, entry] : top_value.items()) {
        auto attr = registry.find(key);
        if (!attr) {
          out.compliance.extra_attrs.push_back(top_key + "." + key);
          ok = ok && !options.strict;
          continue;
        }
        if (registry[*attr].category == *group) continue;
        out.compliance.misplaced_attrs.push_back(registry[*attr].name);
        ok = ok && !options.strict;
        ok = reader.read_entry(*attr, key, entry) && ok;
      }
      continue;
    }
    auto attr = registry.find(top_key);
    if (!attr) {
      out.compliance.extra_attrs.push_back(top_key);
      ok = ok && !options.strict;
      continue;
    }
    out.compliance.misplaced_attrs.push_back(registry[*attr].name);
    ok = ok && !options.strict;
    ok = reader.read_entry(*attr, top_key, top_value) && ok;
  }
  if (!ok) {
    Compliance flags = std::move(out.compliance);
    fail(out, n, "output deviates from the required structure");
    out.compliance.extra_attrs = std::move(flags.extra_attrs);
    out.compliance.misplaced_attrs = std::move(flags.misplaced_attrs);
    out.compliance.aliased_attrs = std::move(flags.aliased_attrs);
    out.compliance.malformed_attrs = std::move(flags.malformed_attrs);
    return out;
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (!out.predictions[a]) out.compliance.missing_attrs.push_back(registry[a].name);
  }
  return out;
}

std::size_t count_hallucinations(std::span<const ParsedPredictionSet> sets) {
  std::size_t total = 0;
  for (const auto& s : sets) total += s.hallucination_count();
  return total;
}

json to_json(const ParsedPredictionSet& set, const SchemaRegistry& registry) {
  json attrs = json::object();
  for (std::size_t a = 0; a < set.predictions.size() && a < registry.size(); ++a) {
    const auto& p = set.predictions[a];
    if (!p) continue;
    json entry = {{"value", p->raw_value}, {"resolved", p->resolved.code()}};
    if (!p->reasoning.empty()) entry["reasoning"] = p->reasoning;
    entry["confidence"] = p->confidence ? json(*p->confidence) : json(nullptr);
    if (p->confidence_clamped) entry["confidence_clamped"] = true;
    attrs[registry[a].name] = std::move(entry);
  }
  const Compliance& c = set.compliance;
  json compliance = {{"used_code_fence", c.used_code_fence},
                     {"parse_failed", c.parse_failed},
                     {"missing_attrs", c.missing_attrs},
                     {"extra_attrs", c.extra_attrs},
                     {"misplaced_attrs", c.misplaced_attrs},
                     {"aliased_attrs", c.aliased_attrs},
                     {"malformed_attrs", c.malformed_attrs},
                     {"clamped_confidences", c.clamped_confidences}};
  if (!c.error.empty()) compliance["error"] = c.error;
  return {{"sample_id", set.sample_id},
          {"model", set.model},
          {"attrs", std::move(attrs)},
          {"compliance", std::move(compliance)}};
}

ParsedPredictionSet prediction_set_from_json(const json& j,
                                             const SchemaRegistry& registry) {
  ParsedPredictionSet set;
  try {
    set.sample_id = j.at("sample_id").get<std::string>();
    set.model = j.value("model", std::string());
    set.predictions.assign(registry.size(), std::nullopt);
    for (const auto& [name, entry] : j.at("attrs").items()) {
      const std::size_t a = registry.index_of(name);
      AttributePrediction p;
      p.attr_name = registry[a].name;
      p.raw_value = entry.at("value").get<std::string>();
      p.resolved = ResolvedLabel::from_code(entry.at("resolved").get<int>());
      if (p.resolved.is_index() && p.resolved.value() >= registry[a].num_classes()) {
        throw DataError("resolved index out of range for " + name);
      }
      p.reasoning = entry.value("reasoning", std::string());
      if (entry.contains("confidence") && entry["confidence"].is_number()) {
        p.confidence = entry["confidence"].get<double>();
      }
      p.confidence_clamped = entry.value("confidence_clamped", false);
      set.predictions[a] = std::move(p);
    }
    const json& c = j.at("compliance");
    auto list = [&](const char* key) {
      return c.value(key, std::vector<std::string>{});
    };
    set.compliance.used_code_fence = c.value("used_code_fence", false);
    set.compliance.parse_failed = c.value("parse_failed", false);
    set.compliance.missing_attrs = list("missing_attrs");
    set.compliance.extra_attrs = list("extra_attrs");
    set.compliance.misplaced_attrs = list("misplaced_attrs");
    set.compliance.aliased_attrs = list("aliased_attrs");
    set.compliance.malformed_attrs = list("malformed_attrs");
    set.compliance.clamped_confidences = list("clamped_confidences");
    set.compliance.error = c.value("error", std::string());
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed prediction record: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw DataError(std::string("prediction record: ") + e.what());
  }
  return set;
}

void write_prediction_sets(std::ostream& out,
                           std::span<const ParsedPredictionSet> sets,
                           const SchemaRegistry& registry) {
  for (const auto& s : sets) out << to_json(s, registry).dump() << '\n';
}

std::vector<ParsedPredictionSet> read_prediction_sets(
    std::istream& in, const SchemaRegistry& registry) {
  std::vector<ParsedPredictionSet> sets;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError("prediction line is not JSON");
    sets.push_back(prediction_set_from_json(j, registry));
  }
  return sets;
}

std::string render_model_output(const ParsedPredictionSet& set,
                                const SchemaRegistry& registry) {
  // ordered_json keeps registry order, matching the requested structure.
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (auto c : kAllCategories) {
    nlohmann::ordered_json group = nlohmann::ordered_json::object();
    for (std::size_t a = 0; a < registry.size(); ++a) {
      if (registry[a].category != c) continue;
      if (a >= set.predictions.size() || !set.predictions[a]) continue;
      const auto& p = *set.predictions[a];
      nlohmann::ordered_json entry;
      entry["value"] = p.raw_value;
      entry["reasoning"] = p.reasoning;
      entry["confidence"] = p.confidence.value_or(1.0);
      group[registry[a].name] = std::move(entry);
    }
    if (registry.count_in(c) > 0) doc[group_key(c)] = std::move(group);
  }
  return doc.dump();
}

}  // namespace tiereval
