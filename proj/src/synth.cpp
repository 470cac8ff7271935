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

#include "tiereval/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "tiereval/errors.hpp"
#include "tiereval/metrics.hpp"
#include "tiereval/rng.hpp"

namespace tiereval::synth {
namespace {

const char* kGenders[] = {"women", "men"};
const char* kCategories[] = {"dress", "shirt", "pants", "skirt", "jacket",
                             "shorts", "sweater"};
const char* kViews[] = {"front", "side", "back", "full"};

// Rng seeded per stream so generation and corruption never share draws.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::size_t draw_class(Rng& rng, const std::vector<double>& p) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    acc += p[c];
    if (u < acc) return c;
  }
  // u landed in the rounding slack above the last cumulative sum.
  for (std::size_t c = p.size(); c-- > 0;) {
    if (p[c] > 0.0) return c;
  }
  return 0;
}

// Ratio with the zero-denominator convention, written out separately from
// the engine's helper on purpose.
double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

OraclePRF score_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  OraclePRF r;
  r.precision = ratio(tp, tp + fp);
  r.recall = ratio(tp, tp + fn);
  r.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  return r;
}

// Standard normal by Box-Muller on two 53-bit uniforms.
double gaussian(Rng& rng) {
  double u1 = rng.uniform01();
  while (u1 <= 0.0) u1 = rng.uniform01();
  const double u2 = rng.uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace

void ErrorSpec::validate() const {
  for (double r : {false_visibility, false_na, confusion, hallucination}) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw ConfigError("error rates must lie in [0, 1]");
    }
  }
  if (false_na + confusion + hallucination > 1.0 + 1e-12) {
    throw ConfigError("false_na + confusion + hallucination must not exceed 1");
  }
}

nlohmann::json to_json(const ErrorSpec& s) {
  return {{"false_visibility", s.false_visibility},
          {"false_na", s.false_na},
          {"confusion", s.confusion},
          {"hallucination", s.hallucination},
          {"seed", s.seed}};
}

ErrorSpec error_spec_from_json(const nlohmann::json& j) {
  ErrorSpec s;
  s.false_visibility = j.value("false_visibility", 0.0);
  s.false_na = j.value("false_na", 0.0);
  s.confusion = j.value("confusion", 0.0);
  s.hallucination = j.value("hallucination", 0.0);
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

ClassPriors uniform_priors(const SchemaRegistry& registry) {
  ClassPriors p;
  for (const auto& a : registry.attributes()) {
    p.emplace_back(a.num_classes(), 1.0 / static_cast<double>(a.num_classes()));
  }
  return p;
}

ClassPriors na_priors(const SchemaRegistry& registry, double na_probability) {
  ClassPriors p;
  for (std::size_t a = 0; a < registry.size(); ++a) {
    const std::size_t k = registry[a].num_classes();
    const auto na = registry.na_index(a);
    if (!na || k == 1) {
      p.emplace_back(k, 1.0 / static_cast<double>(k));
      continue;
    }
    std::vector<double> row(k, (1.0 - na_probability) / static_cast<double>(k - 1));
    row[*na] = na_probability;
    p.push_back(std::move(row));
  }
  return p;
}

SyntheticDataset generate(const SchemaRegistry& registry, std::size_t n,
                          const ClassPriors& priors, std::uint64_t seed) {
  if (priors.size() != registry.size()) {
    throw ConfigError("priors must cover every registry attribute");
  }
  for (std::size_t a = 0; a < registry.size(); ++a) {
    if (priors[a].size() != registry[a].num_classes()) {
      throw ConfigError("priors for '" + registry[a].name +
                        "' do not match its label space");
    }
    double sum = 0.0;
    for (double v : priors[a]) {
      if (!(v >= 0.0)) throw ConfigError("negative prior for '" + registry[a].name + "'");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("priors for '" + registry[a].name + "' do not sum to 1");
    }
  }
  SyntheticDataset ds{{{}, GroundTruthTable(registry.size())}, priors, seed};
  Rng rng(mix_seed(seed, 0));
  ds.annotations.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%06zu", i);
    SampleMeta meta;
    meta.sample_id = id;
    meta.image_ref = std::string(id) + ".jpg";
    meta.gender = kGenders[rng.uniform_below(std::size(kGenders))];
    meta.product_category = kCategories[rng.uniform_below(std::size(kCategories))];
    meta.view = kViews[rng.uniform_below(std::size(kViews))];
    std::vector<std::uint16_t> row(registry.size());
    for (std::size_t a = 0; a < registry.size(); ++a) {
      row[a] = static_cast<std::uint16_t>(draw_class(rng, priors[a]));
    }
    ds.annotations.gold.add(meta.sample_id, std::move(row));
    ds.annotations.samples.push_back(std::move(meta));
  }
  return ds;
}

std::vector<ParsedPredictionSet> corrupt(const GroundTruthTable& gold,
                                         const SchemaRegistry& registry,
                                         const ErrorSpec& spec) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, 1));
  std::vector<ParsedPredictionSet> out;
  out.reserve(gold.size());
  for (const auto& id : gold.ids()) {
    const auto row = gold.row(id);
    ParsedPredictionSet set;
    set.sample_id = id;
    set.model = "synthetic";
    set.predictions.resize(registry.size());
    for (std::size_t a = 0; a < registry.size(); ++a) {
      const AttributeSpec& attr = registry[a];
      const auto na = registry.na_index(a);
      const std::size_t g = row[a];
      std::vector<std::size_t> others;  // non-NA classes other than gold
      for (std::size_t c = 0; c < attr.num_classes(); ++c) {
        if (c != g && c != na) others.push_back(c);
      }
      // One uniform draw selects the failure mode, a second the class.
      const double u = rng.uniform01();
      const std::size_t pick = static_cast<std::size_t>(rng.next() >> 1);
      AttributePrediction p;
      p.attr_name = attr.name;
      p.reasoning = "synthetic";
      p.confidence = 1.0;
      p.resolved = ResolvedLabel::index(g);
      if (na && g == *na) {
        if (u < spec.false_visibility && !others.empty()) {
          p.resolved = ResolvedLabel::index(others[pick % others.size()]);
        }
      } else if (u < spec.false_na) {
        if (na) p.resolved = ResolvedLabel::index(*na);
      } else if (u < spec.false_na + spec.confusion) {
        if (!others.empty()) {
          p.resolved = ResolvedLabel::index(others[pick % others.size()]);
        }
      } else if (u < spec.false_na + spec.confusion + spec.hallucination) {
        p.resolved = ResolvedLabel::hallucination();
      }
      p.raw_value = p.resolved.is_index() ? attr.labels[p.resolved.value()]
                                          : std::string(kHallucinationToken);
      set.predictions[a] = std::move(p);
    }
    out.push_back(std::move(set));
  }
  return out;
}

EmbeddingMatrix synthetic_embeddings(const GroundTruthTable& gold,
                                     std::span<const std::string> ids,
                                     const SchemaRegistry& registry,
                                     std::size_t dim, double signal,
                                     std::uint64_t seed, bool normalize) {
  Rng rng(mix_seed(seed, 2));
  const auto d = static_cast<Eigen::Index>(dim);
  std::vector<std::vector<Eigen::VectorXd>> directions(registry.size());
  for (std::size_t a = 0; a < registry.size(); ++a) {
    for (std::size_t c = 0; c < registry[a].num_classes(); ++c) {
      Eigen::VectorXd v(d);
      for (Eigen::Index j = 0; j < d; ++j) v(j) = gaussian(rng);
      directions[a].push_back(v / v.norm());
    }
  }
  EmbeddingMatrix m;
  m.modality = dim == kImageDim ? "image" : "synthetic";
  m.ids.assign(ids.begin(), ids.end());
  m.rows.resize(static_cast<Eigen::Index>(ids.size()), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto row = gold.row(ids[i]);
    Eigen::VectorXd x(d);
    for (Eigen::Index j = 0; j < d; ++j) x(j) = gaussian(rng);
    for (std::size_t a = 0; a < registry.size(); ++a) x += signal * directions[a][row[a]];
    m.rows.row(static_cast<Eigen::Index>(i)) = x.transpose();
  }
  if (normalize) {
    l2_normalize_rows(m.rows);
    m.normalized = true;
  }
  return m;
}

std::vector<OracleAttributeScores> brute_force_score(
    const GroundTruthTable& gold, std::span<const ParsedPredictionSet> preds,
    std::span<const std::string> roster, const SchemaRegistry& registry) {
  // Predicted class per roster sample and attribute; -1 hallucination,
  // -2 missing.
  const std::size_t n = roster.size();
  const std::size_t m = registry.size();
  std::vector<std::vector<int>> gold_cls(m, std::vector<int>(n));
  std::vector<std::vector<int>> pred_cls(m, std::vector<int>(n, -2));
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = gold.row(roster[i]);
    const ParsedPredictionSet* found = nullptr;
    for (const auto& p : preds) {
      if (p.sample_id == roster[i]) {
        found = &p;
        break;
      }
    }
    for (std::size_t a = 0; a < m; ++a) {
      gold_cls[a][i] = row[a];
      if (found == nullptr || found->compliance.parse_failed) continue;
      if (a >= found->predictions.size() || !found->predictions[a]) continue;
      const ResolvedLabel& r = found->predictions[a]->resolved;
      if (r.is_index()) {
        pred_cls[a][i] = static_cast<int>(r.value());
      } else if (r.is_hallucination()) {
        pred_cls[a][i] = -1;
      }
    }
  }

  std::vector<OracleAttributeScores> out(m);
  for (std::size_t a = 0; a < m; ++a) {
    OracleAttributeScores& s = out[a];
    const int k = static_cast<int>(registry[a].num_classes());
    int na = -1;
    for (int c = 0; c < k; ++c) {
      if (registry[a].labels[static_cast<std::size_t>(c)] == "NA") na = c;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (pred_cls[a][i] == -1) ++s.hallucinations;
      if (pred_cls[a][i] == -2) ++s.missing;
    }

    // Tier 1: every class over every roster sample.
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      std::uint64_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool is_gold = gold_cls[a][i] == c;
        const bool is_pred = pred_cls[a][i] == c;
        if (is_gold && is_pred) ++tp;
        if (!is_gold && is_pred) ++fp;
        if (is_gold && !is_pred) ++fn;
      }
      s.tier1_classes.push_back(score_counts(tp, fp, fn));
      sum += s.tier1_classes.back().f1;
    }
    s.tier1 = sum / k;

    if (na < 0) {
      s.tier3_classes = s.tier1_classes;
      s.tier3_supported = s.tier1;
      s.tier3_literal = s.tier1;
      continue;
    }

    // Tier 2: explicit binarization.
    std::vector<bool> y_true(n), y_pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      y_true[i] = gold_cls[a][i] == na;
      y_pred[i] = pred_cls[a][i] == na;
    }
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y_true[i] && y_pred[i]) ++tp;
      if (!y_true[i] && y_pred[i]) ++fp;
      if (y_true[i] && !y_pred[i]) ++fn;
    }
    s.tier2 = score_counts(tp, fp, fn);

    // Tier 3: materialize the applicable subset and recount from scratch.
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < n; ++i) {
      if (gold_cls[a][i] != na) subset.push_back(i);
    }
    double sum_all = 0.0, sum_supported = 0.0;
    int supported = 0;
    for (int c = 0; c < k; ++c) {
      std::uint64_t ctp = 0, cfp = 0, cfn = 0, support = 0;
      for (std::size_t i : subset) {
        const bool is_gold = gold_cls[a][i] == c;
        const bool is_pred = pred_cls[a][i] == c;
        if (is_gold) ++support;
        if (is_gold && is_pred) ++ctp;
        if (!is_gold && is_pred) ++cfp;
        if (is_gold && !is_pred) ++cfn;
      }
      const OraclePRF prf = score_counts(ctp, cfp, cfn);
      s.tier3_classes.push_back(prf);
      sum_all += prf.f1;
      if (support > 0) {
        sum_supported += prf.f1;
        ++supported;
      }
    }
    if (!subset.empty()) {
      s.tier3_literal = sum_all / k;
      s.tier3_supported = sum_supported / supported;
    }
  }
  return out;
}

OracleComparison compare_with_oracle(const GroundTruthTable& gold,
                                     std::span<const ParsedPredictionSet> preds,
                                     std::span<const std::string> roster,
                                     const SchemaRegistry& registry) {
  OracleComparison out;
  const auto oracle = brute_force_score(gold, preds, roster, registry);
  const auto tallies = tally(gold, preds, roster, registry);
  auto check = [&](double engine, double expected) {
    out.max_abs_diff = std::max(out.max_abs_diff, std::fabs(engine - expected));
    ++out.values_compared;
  };
  auto check_prf = [&](const ClassPRF& e, const OraclePRF& o) {
    check(e.precision, o.precision);
    check(e.recall, o.recall);
    check(e.f1, o.f1);
  };
  auto check_opt = [&](const std::string& what, const std::optional<double>& e,
                       const std::optional<double>& o) {
    if (e.has_value() != o.has_value()) {
      out.mismatches.push_back(what + ": presence differs");
    } else if (e) {
      check(*e, *o);
    }
  };
  for (std::size_t a = 0; a < registry.size(); ++a) {
    const std::string& name = registry[a].name;
    const ConfusionTally& t = tallies[a];
    const OracleAttributeScores& o = oracle[a];
    const auto t1 = tier1_class_scores(t);
    const auto t3 = tier3_class_scores(t);
    if (t1.size() != o.tier1_classes.size() || t3.size() != o.tier3_classes.size()) {
      out.mismatches.push_back(name + ": class count differs");
      continue;
    }
    for (std::size_t c = 0; c < t1.size(); ++c) check_prf(t1[c], o.tier1_classes[c]);
    for (std::size_t c = 0; c < t3.size(); ++c) check_prf(t3[c], o.tier3_classes[c]);
    check(tier1(t), o.tier1);
    const auto t2 = tier2(t);
    if (t2.has_value() != o.tier2.has_value()) {
      out.mismatches.push_back(name + ": tier 2 presence differs");
    } else if (t2) {
      check_prf(*t2, *o.tier2);
    }
    check_opt(name + " supported tier 3", tier3(t, Tier3Mode::kSupported),
              o.tier3_supported);
    check_opt(name + " literal tier 3", tier3(t, Tier3Mode::kLiteral), o.tier3_literal);
    if (t.hallucination_count() != o.hallucinations) {
      out.mismatches.push_back(name + ": hallucination count differs");
    }
    if (t.missing_count() != o.missing) {
      out.mismatches.push_back(name + ": missing count differs");
    }
  }
  return out;
}

}  // namespace tiereval::synth
