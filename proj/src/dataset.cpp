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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "tiereval/errors.hpp"
#include "tiereval/rng.hpp"

namespace tiereval {
namespace {

using nlohmann::json;

constexpr std::size_t kBuckets = 4;  // train, dev, test, unassigned

// Bipartite 0/1 completion used by the controlled rounding below: finds a
// 0/1 matrix over the allowed cells with the given row and column sums.
class CellFlow {
 public:
  CellFlow(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), allowed_(rows * cols, false),
        used_(rows * cols, false) {}

  void allow(std::size_t r, std::size_t c) { allowed_[r * cols_ + c] = true; }
  bool used(std::size_t r, std::size_t c) const { return used_[r * cols_ + c]; }

  // Assigns each row `row_need[r]` cells subject to column capacities.
  bool solve(std::vector<std::size_t> row_need, std::vector<std::size_t> col_cap) {
    col_left_ = std::move(col_cap);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t k = 0; k < row_need[r]; ++k) {
        std::vector<bool> seen(cols_, false);
        if (!augment(r, seen)) return false;
      }
    }
    return true;
  }

 private:
  // Kuhn-style augmenting path where columns have capacity col_left_.
  bool augment(std::size_t r, std::vector<bool>& seen) {
    for (std::size_t c = 0; c < cols_; ++c) {
      const std::size_t cell = r * cols_ + c;
      if (!allowed_[cell] || used_[cell] || seen[c]) continue;
      seen[c] = true;
      if (col_left_[c] > 0) {
        --col_left_[c];
        used_[cell] = true;
        return true;
      }
      // Column full: try to move one of its cells to another column.
      for (std::size_t other = 0; other < rows_; ++other) {
        const std::size_t occupied = other * cols_ + c;
        if (other == r || !used_[occupied]) continue;
        used_[occupied] = false;
        if (augment(other, seen)) {
          used_[cell] = true;
          return true;
        }
        used_[occupied] = true;
      }
    }
    return false;
  }

  std::size_t rows_, cols_;
  std::vector<bool> allowed_, used_;
  std::vector<std::size_t> col_left_;
};

// Splits `total` into integer parts proportional to `ratios` (largest
// remainder, ties to the lower bucket).
std::array<std::size_t, 3> apportion(std::size_t total,
                                     const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> out{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    const double exact = static_cast<double>(total) * ratios[b];
    out[b] = static_cast<std::size_t>(std::floor(exact));
    frac[b] = exact - std::floor(exact);
    assigned += out[b];
  }
  while (assigned < total) {
    std::size_t best = 0;
    for (std::size_t b = 1; b < 3; ++b) {
      if (frac[b] > frac[best]) best = b;
    }
    ++out[best];
    frac[best] = -1.0;
    ++assigned;
  }
  while (assigned > total) {
    for (std::size_t b = 3; b-- > 0;) {
      if (out[b] > 0) {
        --out[b];
        --assigned;
        break;
      }
    }
  }
  return out;
}

std::string require_string(const json& record, const char* key,
                           std::size_t line_no) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    throw DataError("annotation line " + std::to_string(line_no) +
                    ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

void GroundTruthTable::add(const std::string& sample_id,
                           std::vector<std::uint16_t> labels) {
  if (labels.size() != num_attributes_) {
    throw DataError("gold row for '" + sample_id + "' has " +
                    std::to_string(labels.size()) + " labels, expected " +
                    std::to_string(num_attributes_));
  }
  if (!index_.emplace(sample_id, ids_.size()).second) {
    throw DataError("duplicate sample_id '" + sample_id + "'");
  }
  ids_.push_back(sample_id);
  labels_.insert(labels_.end(), labels.begin(), labels.end());
}

std::span<const std::uint16_t> GroundTruthTable::row(
    const std::string& sample_id) const {
  auto it = index_.find(sample_id);
  if (it == index_.end()) {
    throw DataError("sample '" + sample_id + "' has no gold labels");
  }
  return {labels_.data() + it->second * num_attributes_, num_attributes_};
}

AnnotationSet parse_annotations(std::istream& in, const SchemaRegistry& registry) {
  AnnotationSet set{{}, GroundTruthTable(registry.size())};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record = json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) {
      throw DataError("annotation line " + std::to_string(line_no) +
                      " is not a JSON object");
    }
    SampleMeta meta;
    meta.sample_id = require_string(record, "sample_id", line_no);
    meta.image_ref = record.value("image", std::string());
    meta.gender = record.value("gender", std::string());
    meta.product_category = record.value("category", std::string());
    meta.view = record.value("view", std::string());

    auto labels_it = record.find("labels");
    if (labels_it == record.end() || !labels_it->is_object()) {
      throw DataError("annotation line " + std::to_string(line_no) +
                      ": missing 'labels' object");
    }
    std::vector<std::uint16_t> row(registry.size());
    std::vector<bool> seen(registry.size(), false);
    for (const auto& [key, value] : labels_it->items()) {
      auto attr = registry.find(key);
      if (!attr) {
        throw DataError("annotation line " + std::to_string(line_no) +
                        ": unknown attribute '" + key + "'");
      }
      if (!value.is_string()) {
        throw DataError("annotation line " + std::to_string(line_no) +
                        ": label for '" + key + "' is not a string");
      }
      const auto resolved =
          registry.resolve(*attr, value.get<std::string>(), MatchMode::kExact);
      if (!resolved.is_index()) {
        throw DataError("annotation line " + std::to_string(line_no) +
                        ": gold label '" + value.get<std::string>() +
                        "' is outside the label space of '" +
                        registry[*attr].name + "'");
      }
      row[*attr] = static_cast<std::uint16_t>(resolved.value());
      seen[*attr] = true;
    }
    for (std::size_t a = 0; a < registry.size(); ++a) {
      if (!seen[a]) {
        throw DataError("annotation line " + std::to_string(line_no) +
                        ": sample '" + meta.sample_id + "' lacks a label for '" +
                        registry[a].name + "'");
      }
    }
    set.gold.add(meta.sample_id, std::move(row));
    set.samples.push_back(std::move(meta));
  }
  return set;
}

AnnotationSet load_annotations(const std::string& path,
                               const SchemaRegistry& registry) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open annotation file " + path);
  return parse_annotations(in, registry);
}

void write_annotations(std::ostream& out, const AnnotationSet& set,
                       const SchemaRegistry& registry) {
  for (const auto& meta : set.samples) {
    json labels = json::object();
    const auto row = set.gold.row(meta.sample_id);
    for (std::size_t a = 0; a < registry.size(); ++a) {
      labels[registry[a].name] = registry[a].labels[row[a]];
    }
    json record = {{"sample_id", meta.sample_id}, {"image", meta.image_ref},
                   {"gender", meta.gender},       {"category", meta.product_category},
                   {"view", meta.view},           {"labels", std::move(labels)}};
    out << record.dump() << '\n';
  }
}

std::string render_description(const SampleMeta& meta) {
  auto need = [&](const std::string& value, const char* field) {
    if (value.empty()) {
      throw DataError("sample '" + meta.sample_id + "' has no " + field +
                      " for its description");
    }
  };
  need(meta.gender, "gender");
  need(meta.product_category, "category");
  need(meta.view, "view");
  return "A " + meta.gender + "'s " + meta.product_category +
         " photographed from " + meta.view + " view";
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kDev:
      return "dev";
    case Split::kTest:
      return "test";
  }
  return "train";
}

std::vector<std::string> SplitAssignment::ids_in(Split split) const {
  std::vector<std::string> out;
  for (const auto& [id, s] : assignment) {
    if (s == split) out.push_back(id);
  }
  return out;
}

std::array<std::size_t, 3> SplitAssignment::counts() const {
  std::array<std::size_t, 3> c{};
  for (const auto& [id, s] : assignment) ++c[static_cast<std::size_t>(s)];
  return c;
}

SplitAssignment stratified_split(std::span<const SampleMeta> samples,
                                 const SplitSpec& spec, std::uint64_t seed) {
  if (samples.empty()) throw ConfigError("cannot split an empty sample list");
  const std::size_t n = samples.size();

  std::array<std::size_t, kBuckets> targets{};
  if (spec.counts) {
    const auto& c = *spec.counts;
    const std::size_t sum = c[0] + c[1] + c[2];
    if (sum > n) {
      throw ConfigError("split counts sum to " + std::to_string(sum) +
                        " but only " + std::to_string(n) + " samples exist");
    }
    targets = {c[0], c[1], c[2], n - sum};
  } else {
    double sum = 0.0;
    for (double r : spec.ratios) {
      if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("split ratios must sum to 1");
    }
    const auto parts = apportion(n, spec.ratios);
    targets = {parts[0], parts[1], parts[2], 0};
  }

  // Group by product category; ids sorted so input order never matters.
  std::map<std::string, std::vector<std::string>> groups;
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.sample_id).second) {
      throw DataError("duplicate sample_id '" + s.sample_id + "'");
    }
    groups[s.product_category].push_back(s.sample_id);
  }

  // Controlled rounding of quota n_g * T_b / n: every cell is the floor or
  // the ceiling of its quota, rows sum to n_g, columns sum to T_b.
  const std::size_t g_count = groups.size();
  std::vector<std::array<std::size_t, kBuckets>> alloc(g_count);
  CellFlow flow(g_count, kBuckets);
  std::vector<std::size_t> row_need(g_count, 0);
  std::vector<std::size_t> col_cap(kBuckets, 0);
  std::array<std::size_t, kBuckets> col_floor{};
  std::size_t g = 0;
  for (const auto& [category, ids] : groups) {
    const std::size_t size = ids.size();
    std::size_t floor_sum = 0;
    for (std::size_t b = 0; b < kBuckets; ++b) {
      const unsigned __int128 num =
          static_cast<unsigned __int128>(size) * targets[b];
      alloc[g][b] = static_cast<std::size_t>(num / n);
      if (num % n != 0) flow.allow(g, b);
      floor_sum += alloc[g][b];
      col_floor[b] += alloc[g][b];
    }
    row_need[g] = size - floor_sum;
    ++g;
  }
  for (std::size_t b = 0; b < kBuckets; ++b) col_cap[b] = targets[b] - col_floor[b];
  if (!flow.solve(row_need, col_cap)) {
    throw std::logic_error("stratified split rounding has no solution");
  }

  SplitAssignment out;
  out.seed = seed;
  Rng rng(seed);
  g = 0;
  for (auto& [category, ids] : groups) {
    std::sort(ids.begin(), ids.end());
    rng.shuffle(std::span<std::string>(ids));
    std::size_t pos = 0;
    for (std::size_t b = 0; b < kBuckets; ++b) {
      const std::size_t take = alloc[g][b] + (flow.used(g, b) ? 1 : 0);
      for (std::size_t k = 0; k < take; ++k, ++pos) {
        if (b < 3) {
          out.assignment.emplace(ids[pos], static_cast<Split>(b));
        } else {
          out.unassigned.push_back(ids[pos]);
        }
      }
    }
    ++g;
  }
  std::sort(out.unassigned.begin(), out.unassigned.end());
  return out;
}

json split_manifest(const SplitAssignment& split) {
  const auto c = split.counts();
  json assignment = json::object();
  for (const auto& [id, s] : split.assignment) {
    assignment[id] = std::string(split_name(s));
  }
  return {{"seed", split.seed},
          {"counts",
           {{"train", c[0]}, {"dev", c[1]}, {"test", c[2]},
            {"unassigned", split.unassigned.size()}}},
          {"assignment", std::move(assignment)},
          {"unassigned", split.unassigned}};
}

SplitAssignment split_from_manifest(const json& manifest) {
  SplitAssignment out;
  try {
    out.seed = manifest.at("seed").get<std::uint64_t>();
    for (const auto& [id, name] : manifest.at("assignment").items()) {
      const auto s = name.get<std::string>();
      if (s == "train") {
        out.assignment.emplace(id, Split::kTrain);
      } else if (s == "dev") {
        out.assignment.emplace(id, Split::kDev);
      } else if (s == "test") {
        out.assignment.emplace(id, Split::kTest);
      } else {
        throw ConfigError("unknown split '" + s + "' for sample " + id);
      }
    }
    out.unassigned =
        manifest.value("unassigned", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed split manifest: ") + e.what());
  }
  return out;
}

bool ExclusionSet::add(const std::string& sample_id, const std::string& reason) {
  return reasons_.emplace(sample_id, reason).second;
}

ExclusionSet load_exclusions(const std::string& path) {
  ExclusionSet set;
  if (!std::filesystem::exists(path)) return set;
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot read exclusion file " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record = json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.contains("sample_id")) {
      throw DataError("exclusion line " + std::to_string(line_no) +
                      " is malformed");
    }
    set.add(record["sample_id"].get<std::string>(),
            record.value("reason", std::string("unspecified")));
  }
  return set;
}

void save_exclusions(const std::string& path, const ExclusionSet& set) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw MissingInputError("cannot write exclusion file " + path);
  for (const auto& [id, reason] : set.entries()) {
    out << json{{"sample_id", id}, {"reason", reason}}.dump() << '\n';
  }
}

ScoringRoster apply_exclusions(const SplitAssignment& split,
                               const ExclusionSet& exclusions) {
  ScoringRoster roster;
  for (const auto& [id, s] : split.assignment) {
    if (s == Split::kTest && !exclusions.contains(id)) roster.ids.push_back(id);
  }
  for (const auto& [id, reason] : exclusions.entries()) {
    auto it = split.assignment.find(id);
    if (it == split.assignment.end() || it->second != Split::kTest) {
      roster.ignored.push_back(id);
    }
  }
  return roster;
}

}  // namespace tiereval
