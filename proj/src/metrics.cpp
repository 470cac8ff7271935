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

#include "tiereval/metrics.hpp"

#include <stdexcept>
#include <unordered_map>

#include "tiereval/errors.hpp"

namespace tiereval {
namespace {

using nlohmann::json;

double mean_of(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

TierMeans means_over(std::span<const AttributeTierScores> scores,
                     const SchemaRegistry& registry,
                     std::optional<AttributeCategory> only) {
  std::vector<double> t1, t2, na_p, na_r, t3;
  for (std::size_t a = 0; a < scores.size(); ++a) {
    if (only && registry[a].category != *only) continue;
    t1.push_back(scores[a].tier1);
    if (scores[a].tier2) {
      t2.push_back(scores[a].tier2->f1);
      na_p.push_back(scores[a].tier2->precision);
      na_r.push_back(scores[a].tier2->recall);
    }
    if (scores[a].tier3) t3.push_back(*scores[a].tier3);
  }
  TierMeans m;
  if (!t1.empty()) m.tier1 = mean_of(t1);
  if (!t2.empty()) {
    m.tier2 = mean_of(t2);
    m.na_precision = mean_of(na_p);
    m.na_recall = mean_of(na_r);
  }
  if (!t3.empty()) m.tier3 = mean_of(t3);
  return m;
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> optional_double(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

json means_to_json(const TierMeans& m) {
  return {{"t1", m.tier1},
          {"t2", optional_json(m.tier2)},
          {"t3", optional_json(m.tier3)},
          {"na_precision", optional_json(m.na_precision)},
          {"na_recall", optional_json(m.na_recall)}};
}

TierMeans means_from_json(const json& j) {
  TierMeans m;
  m.tier1 = j.at("t1").get<double>();
  m.tier2 = optional_double(j, "t2");
  m.tier3 = optional_double(j, "t3");
  m.na_precision = optional_double(j, "na_precision");
  m.na_recall = optional_double(j, "na_recall");
  return m;
}

}  // namespace

std::string_view tier3_mode_name(Tier3Mode mode) {
  return mode == Tier3Mode::kSupported ? "supported" : "literal";
}

Tier3Mode parse_tier3_mode(std::string_view name) {
  if (name == "supported") return Tier3Mode::kSupported;
  if (name == "literal") return Tier3Mode::kLiteral;
  throw ConfigError("unknown tier3 mode '" + std::string(name) + "'");
}

std::string_view rate_mode_name(RateMode mode) {
  return mode == RateMode::kPerImage ? "per-image" : "per-prediction";
}

RateMode parse_rate_mode(std::string_view name) {
  if (name == "per-image" || name == "per_image") return RateMode::kPerImage;
  if (name == "per-prediction" || name == "per_prediction") {
    return RateMode::kPerPrediction;
  }
  throw ConfigError("unknown rate mode '" + std::string(name) + "'");
}

ScoringMatrix::ScoringMatrix(std::size_t num_attributes,
                             std::vector<std::string> ids,
                             std::vector<std::uint16_t> gold,
                             std::vector<std::int16_t> pred)
    : num_attributes_(num_attributes), ids_(std::move(ids)),
      gold_(std::move(gold)), pred_(std::move(pred)) {
  const std::size_t cells = ids_.size() * num_attributes_;
  if (gold_.size() != cells || pred_.size() != cells) {
    throw std::invalid_argument("scoring matrix dimensions do not match");
  }
}

ScoringMatrix build_scoring_matrix(const SchemaRegistry& registry,
                                   const GroundTruthTable& gold,
                                   std::span<const std::string> roster,
                                   std::span<const ParsedPredictionSet> preds) {
  std::unordered_map<std::string, const ParsedPredictionSet*> by_id;
  for (const auto& p : preds) by_id.emplace(p.sample_id, &p);
  const std::size_t n_attr = registry.size();
  std::vector<std::uint16_t> g;
  std::vector<std::int16_t> p;
  g.reserve(roster.size() * n_attr);
  p.reserve(roster.size() * n_attr);
  for (const auto& id : roster) {
    const auto row = gold.row(id);
    auto it = by_id.find(id);
    const ParsedPredictionSet* set = it == by_id.end() ? nullptr : it->second;
    for (std::size_t a = 0; a < n_attr; ++a) {
      g.push_back(row[a]);
      const ResolvedLabel r = (set && !set->compliance.parse_failed)
                                  ? set->resolved(a)
                                  : ResolvedLabel::missing();
      p.push_back(static_cast<std::int16_t>(r.code()));
    }
  }
  return ScoringMatrix(n_attr, std::vector<std::string>(roster.begin(), roster.end()),
                       std::move(g), std::move(p));
}

ConfusionTally::ConfusionTally(std::size_t num_classes,
                               std::optional<std::size_t> na_index)
    : k_(num_classes), na_(na_index), counts_(num_classes * (num_classes + 2), 0) {}

void ConfusionTally::add(std::size_t gold, int pred_code, std::uint64_t weight) {
  std::size_t column;
  if (pred_code >= 0) {
    column = static_cast<std::size_t>(pred_code);
  } else if (pred_code == ResolvedLabel::kHallucinationCode) {
    column = k_;
    hallucinations_ += weight;
  } else {
    column = k_ + 1;
    missing_ += weight;
  }
  counts_[gold * (k_ + 2) + column] += weight;
  total_ += weight;
}

std::uint64_t ConfusionTally::tp(std::size_t c) const { return cell(c, c); }

std::uint64_t ConfusionTally::fp(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t g = 0; g < k_; ++g) {
    if (g != c) s += cell(g, c);
  }
  return s;
}

std::uint64_t ConfusionTally::fn(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < k_ + 2; ++p) {
    if (p != c) s += cell(c, p);
  }
  return s;
}

std::uint64_t ConfusionTally::support(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < k_ + 2; ++p) s += cell(c, p);
  return s;
}

std::uint64_t ConfusionTally::applicable_fp(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t g = 0; g < k_; ++g) {
    if (g != c && g != na_) s += cell(g, c);
  }
  return s;
}

std::uint64_t ConfusionTally::applicable_samples() const {
  return na_ ? total_ - support(*na_) : total_;
}

std::vector<ConfusionTally> tally(const ScoringMatrix& matrix,
                                  const SchemaRegistry& registry,
                                  std::span<const std::uint32_t> weights) {
  if (matrix.num_attributes() != registry.size()) {
    throw std::invalid_argument("scoring matrix does not match the registry");
  }
  if (!weights.empty() && weights.size() != matrix.num_samples()) {
    throw std::invalid_argument("bootstrap weights do not match the roster");
  }
  std::vector<ConfusionTally> out;
  out.reserve(registry.size());
  for (std::size_t a = 0; a < registry.size(); ++a) {
    out.emplace_back(registry[a].num_classes(), registry.na_index(a));
  }
  for (std::size_t s = 0; s < matrix.num_samples(); ++s) {
    const std::uint64_t w = weights.empty() ? 1 : weights[s];
    if (w == 0) continue;
    for (std::size_t a = 0; a < registry.size(); ++a) {
      out[a].add(matrix.gold(s, a), matrix.pred(s, a), w);
    }
  }
  return out;
}

std::vector<ConfusionTally> tally(const GroundTruthTable& gold,
                                  std::span<const ParsedPredictionSet> preds,
                                  std::span<const std::string> roster,
                                  const SchemaRegistry& registry) {
  return tally(build_scoring_matrix(registry, gold, roster, preds), registry);
}

ClassPRF class_prf(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  ClassPRF r;
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  }
  return r;
}

std::vector<ClassPRF> tier1_class_scores(const ConfusionTally& t) {
  std::vector<ClassPRF> out;
  out.reserve(t.num_classes());
  for (std::size_t c = 0; c < t.num_classes(); ++c) {
    out.push_back(class_prf(t.tp(c), t.fp(c), t.fn(c)));
  }
  return out;
}

double tier1(const ConfusionTally& t) {
  double sum = 0.0;
  for (const auto& s : tier1_class_scores(t)) sum += s.f1;
  return sum / static_cast<double>(t.num_classes());
}

std::optional<ClassPRF> tier2(const ConfusionTally& t) {
  if (!t.na_index()) return std::nullopt;
  const std::size_t na = *t.na_index();
  return class_prf(t.tp(na), t.fp(na), t.fn(na));
}

std::vector<ClassPRF> tier3_class_scores(const ConfusionTally& t) {
  std::vector<ClassPRF> out;
  out.reserve(t.num_classes());
  for (std::size_t c = 0; c < t.num_classes(); ++c) {
    if (c == t.na_index()) {
      out.push_back(class_prf(0, t.applicable_fp(c), 0));
    } else {
      out.push_back(class_prf(t.tp(c), t.applicable_fp(c), t.fn(c)));
    }
  }
  return out;
}

std::optional<double> tier3(const ConfusionTally& t, Tier3Mode mode) {
  if (!t.na_index()) return tier1(t);
  if (t.applicable_samples() == 0) return std::nullopt;
  const auto scores = tier3_class_scores(t);
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < t.num_classes(); ++c) {
    if (mode == Tier3Mode::kSupported && (c == t.na_index() || t.support(c) == 0)) {
      continue;
    }
    sum += scores[c].f1;
    ++used;
  }
  return sum / static_cast<double>(used);
}

double gap(const AttributeTierScores& scores) {
  if (!scores.tier3) {
    throw std::domain_error("gap undefined for '" + scores.name +
                            "': tier 3 is absent");
  }
  return *scores.tier3 - scores.tier1;
}

std::vector<AttributeTierScores> score_attributes(
    std::span<const ConfusionTally> tallies, const SchemaRegistry& registry,
    Tier3Mode mode) {
  if (tallies.size() != registry.size()) {
    throw DataError("tally count does not match the registry");
  }
  std::vector<AttributeTierScores> out;
  out.reserve(tallies.size());
  for (std::size_t a = 0; a < tallies.size(); ++a) {
    AttributeTierScores s;
    s.name = registry[a].name;
    s.category = registry[a].category;
    s.tier1 = tier1(tallies[a]);
    s.tier2 = tier2(tallies[a]);
    s.tier3 = tier3(tallies[a], mode);
    if (s.tier3) s.gap = gap(s);
    s.hallucinations = tallies[a].hallucination_count();
    s.missing = tallies[a].missing_count();
    out.push_back(std::move(s));
  }
  return out;
}

double model_tier1(std::span<const ConfusionTally> tallies) {
  double sum = 0.0;
  for (const auto& t : tallies) sum += tier1(t);
  return sum / static_cast<double>(tallies.size());
}

ModelSummary aggregate(std::span<const AttributeTierScores> scores,
                       const SchemaRegistry& registry) {
  if (scores.size() != registry.size()) {
    throw DataError("expected " + std::to_string(registry.size()) +
                    " attribute scores, got " + std::to_string(scores.size()));
  }
  for (std::size_t a = 0; a < scores.size(); ++a) {
    if (scores[a].name != registry[a].name) {
      throw DataError("attribute scores out of registry order at '" +
                      scores[a].name + "'");
    }
  }
  ModelSummary m;
  m.attributes.assign(scores.begin(), scores.end());
  m.num_attributes = registry.size();
  m.means = means_over(scores, registry, std::nullopt);
  for (auto c : kAllCategories) {
    if (registry.count_in(c) > 0) m.categories[c] = means_over(scores, registry, c);
  }
  for (const auto& s : scores) {
    m.hallucination_count += s.hallucinations;
    m.missing_count += s.missing;
  }
  return m;
}

double hallucination_rate(std::uint64_t count, std::uint64_t scored_images,
                          std::size_t num_attributes, RateMode mode) {
  const double denom = mode == RateMode::kPerImage
                           ? static_cast<double>(scored_images)
                           : static_cast<double>(scored_images) *
                                 static_cast<double>(num_attributes);
  if (denom == 0.0) throw std::domain_error("hallucination rate over zero predictions");
  return 100.0 * static_cast<double>(count) / denom;
}

std::string_view diagnostic_name(DiagnosticPattern p) {
  switch (p) {
    case DiagnosticPattern::kNaNotMajorFactor:
      return "na_not_major_factor";
    case DiagnosticPattern::kStrugglesWithNa:
      return "struggles_with_na";
    case DiagnosticPattern::kFalseVisibility:
      return "false_visibility";
    case DiagnosticPattern::kFalseNa:
      return "false_na";
    case DiagnosticPattern::kKnowsWhenNotWhat:
      return "knows_when_not_what";
    case DiagnosticPattern::kGoodDiscriminationPoorApplicability:
      return "good_discrimination_poor_applicability";
  }
  return "";
}

DiagnosticPattern parse_diagnostic(std::string_view name) {
  for (auto p : {DiagnosticPattern::kNaNotMajorFactor,
                 DiagnosticPattern::kStrugglesWithNa,
                 DiagnosticPattern::kFalseVisibility, DiagnosticPattern::kFalseNa,
                 DiagnosticPattern::kKnowsWhenNotWhat,
                 DiagnosticPattern::kGoodDiscriminationPoorApplicability}) {
    if (diagnostic_name(p) == name) return p;
  }
  throw DataError("unknown diagnostic pattern '" + std::string(name) + "'");
}

json summary_to_json(const ModelSummary& m) {
  json attrs = json::object();
  for (const auto& s : m.attributes) {
    json a = {{"category", std::string(category_name(s.category))},
              {"tier1", s.tier1},
              {"tier3", optional_json(s.tier3)},
              {"gap", optional_json(s.gap)},
              {"hallucinations", s.hallucinations},
              {"missing", s.missing}};
    a["tier2"] = s.tier2 ? json{{"p", s.tier2->precision},
                                {"r", s.tier2->recall},
                                {"f1", s.tier2->f1}}
                         : json(nullptr);
    attrs[s.name] = std::move(a);
  }
  json order = json::array();
  for (const auto& s : m.attributes) order.push_back(s.name);

  json categories = json::object();
  for (const auto& [c, means] : m.categories) {
    categories[std::string(category_name(c))] = means_to_json(means);
  }
  json diagnostics = json::array();
  for (auto d : m.diagnostics) diagnostics.push_back(std::string(diagnostic_name(d)));

  json summary = means_to_json(m.means);
  summary["ci"] = m.tier1_ci ? json{m.tier1_ci->lo, m.tier1_ci->hi} : json(nullptr);
  if (m.tier1_ci) {
    summary["bootstrap"] = {{"point", m.tier1_ci->point},
                            {"iterations", m.tier1_ci->iterations},
                            {"level", m.tier1_ci->level},
                            {"seed", m.tier1_ci->seed}};
  }
  summary["categories"] = std::move(categories);
  summary["hallucinations"] = {{"count", m.hallucination_count},
                               {"rate_per_image", optional_json(m.rate_per_image)},
                               {"rate_per_prediction",
                                optional_json(m.rate_per_prediction)}};
  summary["missing"] = m.missing_count;
  summary["scored_samples"] = m.scored_samples;
  summary["num_attributes"] = m.num_attributes;
  summary["cost"] = {{"total", optional_json(m.cost_total)},
                     {"per_5k", optional_json(m.cost_per_5k)}};
  summary["diagnostics"] = std::move(diagnostics);
  summary["tier3_mode"] = std::string(tier3_mode_name(m.tier3_mode));

  return {{"model", m.model_id},
          {"display_name", m.display_name},
          {"group", m.group},
          {"vendor", m.vendor},
          {"variant", m.variant},
          {"attribute_order", std::move(order)},
          {"attributes", std::move(attrs)},
          {"summary", std::move(summary)}};
}

ModelSummary summary_from_json(const json& j) {
  ModelSummary m;
  try {
    m.model_id = j.at("model").get<std::string>();
    m.display_name = j.value("display_name", m.model_id);
    m.group = j.value("group", std::string());
    m.vendor = j.value("vendor", std::string());
    m.variant = j.value("variant", std::string());
    const json& attrs = j.at("attributes");
    for (const auto& name : j.at("attribute_order")) {
      const json& a = attrs.at(name.get<std::string>());
      AttributeTierScores s;
      s.name = name.get<std::string>();
      s.category = parse_category(a.at("category").get<std::string>());
      s.tier1 = a.at("tier1").get<double>();
      if (a.contains("tier2") && !a["tier2"].is_null()) {
        s.tier2 = ClassPRF{a["tier2"].at("p").get<double>(),
                           a["tier2"].at("r").get<double>(),
                           a["tier2"].at("f1").get<double>()};
      }
      s.tier3 = optional_double(a, "tier3");
      s.gap = optional_double(a, "gap");
      s.hallucinations = a.value("hallucinations", std::uint64_t{0});
      s.missing = a.value("missing", std::uint64_t{0});
      m.attributes.push_back(std::move(s));
    }
    const json& s = j.at("summary");
    m.means = means_from_json(s);
    for (const auto& [name, means] : s.at("categories").items()) {
      m.categories[parse_category(name)] = means_from_json(means);
    }
    if (s.contains("ci") && s["ci"].is_array()) {
      BootstrapCI ci;
      ci.lo = s["ci"][0].get<double>();
      ci.hi = s["ci"][1].get<double>();
      ci.point = m.means.tier1;
      if (s.contains("bootstrap")) {
        ci.point = s["bootstrap"].value("point", ci.point);
        ci.iterations = s["bootstrap"].value("iterations", std::size_t{0});
        ci.level = s["bootstrap"].value("level", 95.0);
        ci.seed = s["bootstrap"].value("seed", std::uint64_t{0});
      }
      m.tier1_ci = ci;
    }
    const json& h = s.at("hallucinations");
    m.hallucination_count = h.at("count").get<std::uint64_t>();
    m.rate_per_image = optional_double(h, "rate_per_image");
    m.rate_per_prediction = optional_double(h, "rate_per_prediction");
    m.missing_count = s.value("missing", std::uint64_t{0});
    m.scored_samples = s.value("scored_samples", std::uint64_t{0});
    m.num_attributes = s.value("num_attributes", m.attributes.size());
    if (s.contains("cost")) {
      m.cost_total = optional_double(s["cost"], "total");
      m.cost_per_5k = optional_double(s["cost"], "per_5k");
    }
    for (const auto& d : s.value("diagnostics", json::array())) {
      m.diagnostics.push_back(parse_diagnostic(d.get<std::string>()));
    }
    m.tier3_mode = parse_tier3_mode(s.value("tier3_mode", std::string("supported")));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed score document: ") + e.what());
  }
  return m;
}

}  // namespace tiereval
