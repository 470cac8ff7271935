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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tiereval/errors.hpp"
#include "tiereval/rng.hpp"
#include "tiereval/synth.hpp"
#include "test_util.hpp"

namespace tiereval {
namespace {

using testing::add_gold;
using testing::make_predictions;
using testing::small_registry;

struct Instance {
  SchemaRegistry registry;
  GroundTruthTable gold;
  std::vector<ParsedPredictionSet> preds;
  std::vector<std::string> roster;
};

// One attribute over {a, b, NA}; gold and predictions per sample.
Instance single_attribute(const std::vector<std::string>& gold,
                          const std::vector<std::string>& pred) {
  Instance in{small_registry({{"x", {"a", "b", "NA"}}}), GroundTruthTable(1), {}, {}};
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const std::string id = "s" + std::to_string(i);
    add_gold(in.gold, in.registry, id, {gold[i]});
    in.preds.push_back(make_predictions(in.registry, id, {pred[i]}));
    in.roster.push_back(id);
  }
  return in;
}

ConfusionTally tally_one(const Instance& in) {
  return tally(in.gold, in.preds, in.roster, in.registry).at(0);
}

TEST(MetricsTest, WorkedConfusionExample) {
  const auto in = single_attribute({"a", "a", "b", "NA"}, {"a", "b", "b", "a"});
  const ConfusionTally t = tally_one(in);
  EXPECT_NEAR(tier1(t), 7.0 / 18.0, 1e-12);
  const auto t2 = tier2(t);
  ASSERT_TRUE(t2.has_value());
  EXPECT_EQ(t2->f1, 0.0);
  EXPECT_EQ(t2->precision, 0.0);
  EXPECT_EQ(t2->recall, 0.0);
  const auto t3 = tier3(t, Tier3Mode::kSupported);
  ASSERT_TRUE(t3.has_value());
  EXPECT_NEAR(*t3, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(*tier3(t, Tier3Mode::kLiteral), 4.0 / 9.0, 1e-12);
  const auto scores = score_attributes(std::vector<ConfusionTally>{t}, in.registry,
                                       Tier3Mode::kSupported);
  EXPECT_NEAR(*scores[0].gap, 5.0 / 18.0, 1e-12);

  const auto classes = tier1_class_scores(t);
  EXPECT_NEAR(classes[0].f1, 0.5, 1e-15);
  EXPECT_NEAR(classes[1].precision, 0.5, 1e-15);
  EXPECT_NEAR(classes[1].recall, 1.0, 1e-15);
  EXPECT_NEAR(classes[1].f1, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(t.applicable_samples(), 3u);
}

TEST(MetricsTest, ZeroDivisionYieldsZero) {
  const ClassPRF z = class_prf(0, 0, 0);
  EXPECT_EQ(z.precision, 0.0);
  EXPECT_EQ(z.recall, 0.0);
  EXPECT_EQ(z.f1, 0.0);
  const ClassPRF p = class_prf(0, 3, 0);
  EXPECT_EQ(p.f1, 0.0);
}

TEST(MetricsTest, HallucinationAndMissingAreFalseNegativesOnly) {
  const auto in = single_attribute({"a", "b", "NA", "a"}, {"unicorn", "", "NA", "a"});
  const ConfusionTally t = tally_one(in);
  EXPECT_EQ(t.hallucination_count(), 1u);
  EXPECT_EQ(t.missing_count(), 1u);
  EXPECT_EQ(t.fn(0), 1u);
  EXPECT_EQ(t.fn(1), 1u);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(t.fp(c), 0u) << c;
  EXPECT_EQ(t.tp(0), 1u);
  EXPECT_EQ(t.tp(2), 1u);
  EXPECT_EQ(t.scored_sample_count(), 4u);
}

TEST(MetricsTest, NoNaAttributesHaveTier3EqualTier1) {
  const SchemaRegistry r = default_registry();
  const auto data = synth::generate(r, 300, synth::na_priors(r, 0.3), 5);
  synth::ErrorSpec spec;
  spec.confusion = 0.3;
  spec.hallucination = 0.05;
  spec.false_na = 0.1;
  spec.false_visibility = 0.2;
  spec.seed = 9;
  const auto preds = synth::corrupt(data.annotations.gold, r, spec);
  const auto tallies = tally(data.annotations.gold, preds, data.annotations.gold.ids(), r);
  for (auto mode : {Tier3Mode::kSupported, Tier3Mode::kLiteral}) {
    const auto scores = score_attributes(tallies, r, mode);
    for (const char* name : {"sleeve_length", "outer_clothing_cardigan"}) {
      const auto& s = scores[r.index_of(name)];
      ASSERT_TRUE(s.tier3.has_value());
      EXPECT_EQ(std::memcmp(&s.tier1, &*s.tier3, sizeof(double)), 0) << name;
      EXPECT_FALSE(s.tier2.has_value()) << name;
      EXPECT_EQ(*s.gap, 0.0);
    }
  }
}

TEST(MetricsTest, AllNaGoldLeavesTier3Absent) {
  const auto in = single_attribute({"NA", "NA"}, {"NA", "a"});
  const auto t = tally_one(in);
  EXPECT_FALSE(tier3(t, Tier3Mode::kSupported).has_value());
  EXPECT_FALSE(tier3(t, Tier3Mode::kLiteral).has_value());
  const auto scores =
      score_attributes(std::vector<ConfusionTally>{t}, in.registry, Tier3Mode::kSupported);
  EXPECT_FALSE(scores[0].gap.has_value());
  EXPECT_THROW(gap(scores[0]), std::domain_error);
  EXPECT_NEAR(tier2(t)->recall, 0.5, 1e-15);
}

TEST(MetricsTest, PerfectPredictionsScoreOne) {
  const SchemaRegistry r = default_registry();
  const auto data = synth::generate(r, 400, synth::na_priors(r, 0.3), 2);
  const auto preds = synth::corrupt(data.annotations.gold, r, synth::ErrorSpec{});
  const auto tallies = tally(data.annotations.gold, preds, data.annotations.gold.ids(), r);
  const auto scores = score_attributes(tallies, r, Tier3Mode::kSupported);
  for (const auto& s : scores) {
    // Classes absent from a 400-sample draw are impossible at these priors.
    EXPECT_DOUBLE_EQ(s.tier1, 1.0) << s.name;
    EXPECT_DOUBLE_EQ(*s.tier3, 1.0) << s.name;
    if (s.tier2) {
      EXPECT_DOUBLE_EQ(s.tier2->f1, 1.0) << s.name;
    }
  }
  const ModelSummary m = aggregate(scores, r);
  EXPECT_DOUBLE_EQ(m.means.tier1, 1.0);
  EXPECT_EQ(m.hallucination_count, 0u);
}

// Properties over random instances.
class MetricsPropertyTest : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(MetricsPropertyTest, BoundsAndPermutationInvariance) {
  const SchemaRegistry r = default_registry();
  Rng rng(GetParam());
  const std::size_t n = 1 + rng.uniform_below(120);
  const auto data = synth::generate(r, n, synth::na_priors(r, rng.uniform01()), GetParam());
  synth::ErrorSpec spec;
  spec.false_visibility = rng.uniform01();
  spec.false_na = 0.3 * rng.uniform01();
  spec.confusion = 0.3 * rng.uniform01();
  spec.hallucination = 0.3 * rng.uniform01();
  spec.seed = GetParam() + 1;
  const auto& gold = data.annotations.gold;
  const auto preds = synth::corrupt(gold, r, spec);
  std::vector<std::string> roster = gold.ids();
  const auto base = score_attributes(tally(gold, preds, roster, r), r, Tier3Mode::kSupported);

  std::vector<std::string> shuffled = roster;
  rng.shuffle(std::span<std::string>(shuffled));
  const auto perm = score_attributes(tally(gold, preds, shuffled, r), r, Tier3Mode::kSupported);

  // Duplicating every sample scales every count and leaves every ratio unchanged.
  const ScoringMatrix matrix = build_scoring_matrix(r, gold, roster, preds);
  const std::vector<std::uint32_t> twos(roster.size(), 2);
  const auto doubled = score_attributes(tally(matrix, r, twos), r, Tier3Mode::kSupported);

  for (std::size_t a = 0; a < r.size(); ++a) {
    const auto& s = base[a];
    EXPECT_GE(s.tier1, 0.0);
    EXPECT_LE(s.tier1, 1.0);
    EXPECT_EQ(s.tier1, perm[a].tier1);
    EXPECT_NEAR(s.tier1, doubled[a].tier1, 1e-15);
    EXPECT_EQ(s.tier3.has_value(), perm[a].tier3.has_value());
    if (s.tier3) {
      EXPECT_GE(*s.tier3, 0.0);
      EXPECT_LE(*s.tier3, 1.0);
      EXPECT_NEAR(*s.tier3, *doubled[a].tier3, 1e-15);
    }
    EXPECT_EQ(s.tier2.has_value(), r[a].has_na);
    if (s.tier2) {
      EXPECT_GE(s.tier2->f1, 0.0);
      EXPECT_LE(s.tier2->f1, 1.0);
      EXPECT_NEAR(s.tier2->f1, doubled[a].tier2->f1, 1e-15);
    }
  }
}

TEST_P(MetricsPropertyTest, MatchesBruteForceOracle) {
  const SchemaRegistry r = default_registry();
  Rng rng(GetParam() * 7919 + 1);
  const std::size_t n = 1 + rng.uniform_below(200);
  const auto data = synth::generate(r, n, synth::na_priors(r, rng.uniform01()), GetParam());
  synth::ErrorSpec spec;
  spec.false_visibility = rng.uniform01();
  spec.false_na = 0.25 * rng.uniform01();
  spec.confusion = 0.25 * rng.uniform01();
  spec.hallucination = 0.25 * rng.uniform01();
  spec.seed = GetParam();
  auto preds = synth::corrupt(data.annotations.gold, r, spec);
  // Drop a few predictions to exercise Missing.
  for (auto& p : preds) {
    if (rng.uniform01() < 0.1) p.predictions[rng.uniform_below(r.size())].reset();
  }
  const auto cmp =
      synth::compare_with_oracle(data.annotations.gold, preds, data.annotations.gold.ids(), r);
  EXPECT_TRUE(cmp.mismatches.empty()) << cmp.mismatches.front();
  EXPECT_LE(cmp.max_abs_diff, 1e-12);
  EXPECT_GT(cmp.values_compared, 0u);
}

INSTANTIATE_TEST_SUITE_P(Seeds, MetricsPropertyTest, ::testing::Range<std::uint64_t>(0, 50));

TEST(MetricsTest, WeightedTallyEqualsReplicatedRoster) {
  const auto in = single_attribute({"a", "b", "NA", "b"}, {"b", "b", "a", "NA"});
  const ScoringMatrix m = build_scoring_matrix(in.registry, in.gold, in.roster, in.preds);
  const std::vector<std::uint32_t> w = {3, 0, 1, 2};
  const auto weighted = tally(m, in.registry, w).at(0);
  std::vector<std::string> replicated = {"s0", "s0", "s0", "s2", "s3", "s3"};
  const auto direct = tally(in.gold, in.preds, replicated, in.registry).at(0);
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(weighted.cell(g, c), direct.cell(g, c));
  }
}

TEST(MetricsTest, AggregateMeansAndCategories) {
  const SchemaRegistry r = default_registry();
  std::vector<AttributeTierScores> scores;
  for (std::size_t a = 0; a < r.size(); ++a) {
    AttributeTierScores s;
    s.name = r[a].name;
    s.category = r[a].category;
    s.tier1 = static_cast<double>(a) / 100.0;
    s.tier3 = s.tier1 + 0.1;
    if (r[a].has_na) s.tier2 = ClassPRF{0.2, 0.4, 0.3};
    s.hallucinations = a;
    scores.push_back(s);
  }
  const ModelSummary m = aggregate(scores, r);
  EXPECT_NEAR(m.means.tier1, 8.5 / 100.0, 1e-15);
  EXPECT_NEAR(*m.means.tier2, 0.3, 1e-15);
  EXPECT_NEAR(*m.means.na_precision, 0.2, 1e-15);
  EXPECT_NEAR(*m.means.na_recall, 0.4, 1e-15);
  EXPECT_NEAR(*m.means.tier3, 0.185, 1e-15);
  EXPECT_NEAR(m.categories.at(AttributeCategory::kFabric).tier1, 0.13, 1e-15);
  EXPECT_NEAR(m.categories.at(AttributeCategory::kPattern).tier1, 0.16, 1e-15);
  EXPECT_EQ(m.hallucination_count, 153u);
  std::swap(scores[0], scores[1]);
  EXPECT_THROW(aggregate(scores, r), DataError);
}

TEST(MetricsTest, HallucinationRateConventions) {
  EXPECT_NEAR(hallucination_rate(139, 5000, 18, RateMode::kPerImage), 2.78, 1e-12);
  EXPECT_NEAR(hallucination_rate(2, 5000, 18, RateMode::kPerImage), 0.04, 1e-12);
  EXPECT_NEAR(hallucination_rate(7, 100, 18, RateMode::kPerImage), 7.0, 1e-12);
  EXPECT_NEAR(hallucination_rate(18, 100, 18, RateMode::kPerPrediction), 1.0, 1e-12);
  EXPECT_THROW(hallucination_rate(1, 0, 18, RateMode::kPerImage), std::domain_error);
}

TEST(MetricsTest, ModeNamesRoundTrip) {
  for (auto m : {Tier3Mode::kSupported, Tier3Mode::kLiteral}) {
    EXPECT_EQ(parse_tier3_mode(tier3_mode_name(m)), m);
  }
  for (auto m : {RateMode::kPerImage, RateMode::kPerPrediction}) {
    EXPECT_EQ(parse_rate_mode(rate_mode_name(m)), m);
  }
  EXPECT_THROW(parse_tier3_mode("average"), ConfigError);
}

TEST(MetricsTest, SummaryJsonRoundTrip) {
  const SchemaRegistry r = default_registry();
  const auto data = synth::generate(r, 150, synth::na_priors(r, 0.4), 3);
  synth::ErrorSpec spec;
  spec.confusion = 0.2;
  spec.hallucination = 0.02;
  const auto preds = synth::corrupt(data.annotations.gold, r, spec);
  const auto tallies = tally(data.annotations.gold, preds, data.annotations.gold.ids(), r);
  ModelSummary m = aggregate(score_attributes(tallies, r, Tier3Mode::kLiteral), r);
  m.model_id = "m";
  m.display_name = "Model M";
  m.group = "Efficient";
  m.vendor = "Acme";
  m.variant = "think";
  m.tier3_mode = Tier3Mode::kLiteral;
  m.scored_samples = 150;
  m.rate_per_image = 1.5;
  m.cost_total = 2.25;
  m.cost_per_5k = 75.0;
  m.tier1_ci = BootstrapCI{m.means.tier1, 0.1, 0.2, 1000, 95.0, 4};
  m.diagnostics = {DiagnosticPattern::kFalseNa};
  const ModelSummary back = summary_from_json(nlohmann::json::parse(summary_to_json(m).dump()));
  EXPECT_EQ(summary_to_json(back), summary_to_json(m));
  EXPECT_EQ(back.means.tier1, m.means.tier1);
  EXPECT_EQ(back.tier1_ci->hi, 0.2);
  EXPECT_EQ(back.tier3_mode, Tier3Mode::kLiteral);
  EXPECT_THROW(summary_from_json(nlohmann::json{{"model", "x"}}), DataError);
}

}  // namespace
}  // namespace tiereval
