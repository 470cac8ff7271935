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


#include "tiereval/dataset.hpp"

#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "tiereval/errors.hpp"
#include "tiereval/synth.hpp"
#include "test_util.hpp"

namespace tiereval {
namespace {

std::string annotation_line(const std::string& id, const std::string& category,
                            const std::string& hat) {
  return R"({"sample_id": ")" + id + R"(", "image": ")" + id +
         R"(.jpg", "gender": "women", "category": ")" + category +
         R"(", "view": "front", "labels": {"sleeve_length": "long-sleeve", "hat": ")" +
         hat + R"("}})" + "\n";
}

SchemaRegistry two_attribute_registry() {
  return testing::small_registry(
      {{"sleeve_length", {"sleeveless", "short-sleeve", "long-sleeve"}},
       {"hat", {"no", "yes", "NA"}}});
}

std::vector<SampleMeta> metas(std::size_t n, std::size_t categories) {
  std::vector<SampleMeta> out;
  for (std::size_t i = 0; i < n; ++i) {
    SampleMeta m;
    m.sample_id = "s" + std::to_string(1000 + i);
    m.product_category = "cat" + std::to_string(i % categories + (i % 7 == 0 ? 1 : 0));
    out.push_back(m);
  }
  return out;
}

TEST(AnnotationsTest, ParsesRecords) {
  const auto registry = two_attribute_registry();
  std::istringstream in(annotation_line("a", "dress", "no") + "\n" +
                        annotation_line("b", "shirt", "NA"));
  const AnnotationSet set = parse_annotations(in, registry);
  ASSERT_EQ(set.samples.size(), 2u);
  EXPECT_EQ(set.samples[1].product_category, "shirt");
  EXPECT_EQ(set.samples[0].image_ref, "a.jpg");
  EXPECT_EQ(set.gold.row("a")[1], 0);
  EXPECT_EQ(set.gold.row("b")[1], 2);
  EXPECT_EQ(set.gold.row("b")[0], 2);
}

TEST(AnnotationsTest, RejectsBadRecords) {
  const auto registry = two_attribute_registry();
  auto parse = [&](const std::string& text) {
    std::istringstream in(text);
    return parse_annotations(in, registry);
  };
  EXPECT_THROW(parse("not json\n"), DataError);
  EXPECT_THROW(parse(annotation_line("a", "dress", "maybe")), DataError);
  EXPECT_THROW(parse(annotation_line("a", "dress", "no") + annotation_line("a", "dress", "no")),
               DataError);
  EXPECT_THROW(parse(R"({"sample_id": "a", "labels": {"hat": "no"}})"), DataError);
  EXPECT_THROW(parse(R"({"sample_id": "a", "labels": {"hat": "no", "sleeve_length": "long-sleeve", "cap": "no"}})"),
               DataError);
  EXPECT_THROW(load_annotations("/nonexistent/annotations.jsonl", registry),
               MissingInputError);
}

TEST(AnnotationsTest, WriteParseRoundTrip) {
  const SchemaRegistry registry = default_registry();
  const auto data = synth::generate(registry, 25, synth::uniform_priors(registry), 7);
  std::stringstream buf;
  write_annotations(buf, data.annotations, registry);
  const AnnotationSet back = parse_annotations(buf, registry);
  ASSERT_EQ(back.gold.ids(), data.annotations.gold.ids());
  for (const auto& id : back.gold.ids()) {
    const auto a = back.gold.row(id);
    const auto b = data.annotations.gold.row(id);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  EXPECT_EQ(back.samples[3].view, data.annotations.samples[3].view);
}

TEST(AnnotationsTest, DescriptionTemplate) {
  SampleMeta m{"x", "x.jpg", "women", "dress", "front"};
  EXPECT_EQ(render_description(m), "A women's dress photographed from front view");
  m.view.clear();
  EXPECT_THROW(render_description(m), DataError);
}

TEST(GroundTruthTest, RowWidthAndLookup) {
  GroundTruthTable t(2);
  t.add("a", {0, 1});
  EXPECT_THROW(t.add("a", {0, 1}), DataError);
  EXPECT_THROW(t.add("b", {0}), DataError);
  EXPECT_THROW(t.row("zzz"), DataError);
  EXPECT_TRUE(t.contains("a"));
  EXPECT_EQ(t.size(), 1u);
}

TEST(SplitTest, AbsoluteCountsAreExact) {
  const auto samples = metas(1000, 5);
  SplitSpec spec;
  spec.counts = std::array<std::size_t, 3>{600, 150, 250};
  const auto split = stratified_split(samples, spec, 42);
  const auto c = split.counts();
  EXPECT_EQ(c[0], 600u);
  EXPECT_EQ(c[1], 150u);
  EXPECT_EQ(c[2], 250u);
  EXPECT_TRUE(split.unassigned.empty());
}

TEST(SplitTest, EachCategoryIsProportionalWithinOne) {
  const auto samples = metas(997, 6);
  SplitSpec spec;
  spec.ratios = {0.5, 0.2, 0.3};
  const auto split = stratified_split(samples, spec, 3);
  std::map<std::string, std::array<std::size_t, 3>> per;
  std::map<std::string, std::size_t> sizes;
  for (const auto& m : samples) {
    ++per[m.product_category][static_cast<int>(split.assignment.at(m.sample_id))];
    ++sizes[m.product_category];
  }
  const auto totals = split.counts();
  for (const auto& [cat, counts] : per) {
    for (int b = 0; b < 3; ++b) {
      const double expected = static_cast<double>(sizes[cat]) * totals[b] / 997.0;
      EXPECT_LE(std::abs(static_cast<double>(counts[b]) - expected), 1.0)
          << cat << " bucket " << b;
    }
  }
}

TEST(SplitTest, DeterministicAndOrderInvariant) {
  auto samples = metas(300, 4);
  SplitSpec spec;
  spec.ratios = {0.6, 0.2, 0.2};
  const auto a = stratified_split(samples, spec, 11);
  std::reverse(samples.begin(), samples.end());
  const auto b = stratified_split(samples, spec, 11);
  EXPECT_EQ(a.assignment, b.assignment);
  const auto c = stratified_split(samples, spec, 12);
  EXPECT_NE(a.assignment, c.assignment);
}

TEST(SplitTest, ShortCountsLeaveUnassigned) {
  const auto samples = metas(100, 3);
  SplitSpec spec;
  spec.counts = std::array<std::size_t, 3>{10, 10, 50};
  const auto split = stratified_split(samples, spec, 1);
  EXPECT_EQ(split.unassigned.size(), 30u);
  EXPECT_EQ(split.ids_in(Split::kTest).size(), 50u);
  spec.counts = std::array<std::size_t, 3>{50, 50, 50};
  EXPECT_THROW(stratified_split(samples, spec, 1), ConfigError);
  SplitSpec bad;
  bad.ratios = {0.5, 0.5, 0.5};
  EXPECT_THROW(stratified_split(samples, bad, 1), ConfigError);
}

TEST(SplitTest, ManifestRoundTrip) {
  const auto samples = metas(120, 3);
  SplitSpec spec;
  spec.counts = std::array<std::size_t, 3>{50, 20, 40};
  const auto split = stratified_split(samples, spec, 9);
  const auto back = split_from_manifest(split_manifest(split));
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.assignment, split.assignment);
  EXPECT_EQ(back.unassigned, split.unassigned);
}

TEST(ExclusionTest, FirstReasonWinsAndPersists) {
  testing::TempDir dir;
  ExclusionSet set;
  EXPECT_TRUE(set.add("s3", "safety_blocked:a"));
  EXPECT_FALSE(set.add("s3", "safety_blocked:b"));
  EXPECT_TRUE(set.add("s1", "safety_blocked:b"));
  save_exclusions(dir.file("ex.jsonl"), set);
  const auto back = load_exclusions(dir.file("ex.jsonl"));
  EXPECT_EQ(back.entries(), set.entries());
  EXPECT_EQ(back.entries().at("s3"), "safety_blocked:a");
  EXPECT_EQ(load_exclusions(dir.file("absent.jsonl")).size(), 0u);
}

TEST(ExclusionTest, RosterDropsExcludedTestSamples) {
  SplitAssignment split;
  split.assignment = {{"a", Split::kTest}, {"b", Split::kTest}, {"c", Split::kTrain}};
  ExclusionSet ex;
  ex.add("b", "blocked");
  ex.add("c", "blocked");
  ex.add("zzz", "blocked");
  const auto roster = apply_exclusions(split, ex);
  EXPECT_EQ(roster.ids, std::vector<std::string>{"a"});
  EXPECT_EQ(roster.ignored.size(), 2u);
}

}  // namespace
}  // namespace tiereval
