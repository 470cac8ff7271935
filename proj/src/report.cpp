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

#include "tiereval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tiereval/errors.hpp"

namespace tiereval::report {
namespace {

double pct(double fraction) { return fraction * 100.0; }

std::string opt_pct(const std::optional<double>& v) {
  return v ? fixed(pct(*v), 1) : std::string(kAbsent);
}

std::string money(double amount) { return "$" + fixed(amount, 2); }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingInputError("cannot write '" + path.string() + "'");
  out << content;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

const std::string& label_of(const ModelSummary& s) {
  return s.display_name.empty() ? s.model_id : s.display_name;
}

}  // namespace

double round_half_away(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double snapped = std::round(value * scale * 1e6) / 1e6;
  return std::round(snapped) / scale;
}

std::string fixed(double value, int decimals) {
  double r = round_half_away(value, decimals);
  if (r == 0.0) r = 0.0;  // drops the sign of -0.0
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, r);
  return buf;
}

std::string signed_fixed(double value, int decimals) {
  const std::string s = fixed(value, decimals);
  return round_half_away(value, decimals) > 0.0 ? "+" + s : s;
}

std::string fraction2(double value) {
  std::string s = fixed(value, 2);
  if (s.rfind("0.", 0) == 0) return s.substr(1);
  return s;
}

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string to_markdown(const Table& t) {
  std::ostringstream out;
  auto row = [&](const std::vector<std::string>& cells) {
    out << '|';
    for (const auto& c : cells) out << ' ' << c << " |";
    out << '\n';
  };
  row(t.header);
  out << '|';
  for (std::size_t i = 0; i < t.header.size(); ++i) out << (i == 0 ? " :--- |" : " ---: |");
  out << '\n';
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (r < t.section_before.size() && !t.section_before[r].empty()) {
      std::vector<std::string> section(t.header.size());
      section[0] = "*" + t.section_before[r] + "*";
      row(section);
    }
    row(t.rows[r]);
  }
  return out.str();
}

std::string to_csv(const Table& t) {
  std::ostringstream out;
  auto row = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out << ',';
      out << csv_escape(cells[i]);
    }
    out << '\n';
  };
  row(t.header);
  for (const auto& r : t.rows) row(r);
  return out.str();
}

std::vector<std::string> tier_row_cells(const ModelSummary& s) {
  std::string ci = kAbsent;
  if (s.tier1_ci) {
    ci = "[" + fixed(pct(s.tier1_ci->lo), 1) + "--" + fixed(pct(s.tier1_ci->hi), 1) + "]";
  }
  std::string gap = kAbsent;
  if (s.means.tier3) gap = signed_fixed(pct(*s.means.tier3 - s.means.tier1), 1);
  return {label_of(s),          fixed(pct(s.means.tier1), 1), ci,
          opt_pct(s.means.tier2), opt_pct(s.means.tier3),      gap};
}

namespace {

// Model indices grouped by group, groups in order of first appearance.
std::vector<std::size_t> grouped_order(std::span<const ModelSummary> summaries) {
  std::vector<std::string> groups;
  for (const auto& s : summaries) {
    if (std::find(groups.begin(), groups.end(), s.group) == groups.end()) {
      groups.push_back(s.group);
    }
  }
  std::vector<std::size_t> order;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < summaries.size(); ++i) {
      if (summaries[i].group == g) order.push_back(i);
    }
  }
  return order;
}

}  // namespace

Table render_tier_table(std::span<const ModelSummary> summaries) {
  Table t;
  t.header = {"Model", "Tier 1 F1", "95% CI", "Tier 2 NA-F1", "Tier 3 F1", "Gap"};
  std::string current;
  bool first = true;
  for (std::size_t i : grouped_order(summaries)) {
    const auto& s = summaries[i];
    t.section_before.push_back((first || s.group != current) ? s.group : "");
    current = s.group;
    first = false;
    t.rows.push_back(tier_row_cells(s));
  }
  return t;
}

Table tier_table_data(std::span<const ModelSummary> summaries) {
  Table t;
  t.header = {"model", "group", "tier1", "ci_lo", "ci_hi", "tier2", "tier3", "gap"};
  for (std::size_t i : grouped_order(summaries)) {
    const auto& s = summaries[i];
    t.rows.push_back({label_of(s), s.group, fixed(pct(s.means.tier1), 1),
                      s.tier1_ci ? fixed(pct(s.tier1_ci->lo), 1) : "",
                      s.tier1_ci ? fixed(pct(s.tier1_ci->hi), 1) : "",
                      s.means.tier2 ? fixed(pct(*s.means.tier2), 1) : "",
                      s.means.tier3 ? fixed(pct(*s.means.tier3), 1) : "",
                      s.means.tier3 ? signed_fixed(pct(*s.means.tier3 - s.means.tier1), 1)
                                    : ""});
  }
  return t;
}

std::vector<std::string> hallucination_row_cells(const ModelSummary& s, RateMode mode) {
  const auto& rate = mode == RateMode::kPerImage ? s.rate_per_image : s.rate_per_prediction;
  return {label_of(s), std::to_string(s.hallucination_count),
          rate ? fixed(*rate, 2) : std::string(kAbsent),
          s.cost_per_5k ? money(*s.cost_per_5k) : std::string(kEmDash)};
}

Table render_hallucination_table(std::span<const ModelSummary> summaries,
                                 RateMode mode) {
  Table t;
  t.header = {"Model", "Hall.", "Rate (%)", "Cost ($/5K)"};
  std::vector<std::size_t> order(summaries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return summaries[a].hallucination_count < summaries[b].hallucination_count;
  });
  for (std::size_t i : order) t.rows.push_back(hallucination_row_cells(summaries[i], mode));
  return t;
}

Table render_category_table(std::span<const ModelSummary> summaries) {
  Table t;
  t.header = {"Tier", "Type"};
  for (const auto& s : summaries) t.header.push_back(label_of(s));
  const char* tiers[] = {"T1", "T2", "T3"};
  for (int tier = 0; tier < 3; ++tier) {
    for (AttributeCategory cat : kAllCategories) {
      std::string type(category_name(cat));
      type[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(type[0])));
      std::vector<std::string> row = {tiers[tier], type};
      for (const auto& s : summaries) {
        const auto it = s.categories.find(cat);
        std::optional<double> v;
        if (it != s.categories.end()) {
          v = tier == 0 ? std::optional<double>(it->second.tier1)
                        : tier == 1 ? it->second.tier2 : it->second.tier3;
        }
        row.push_back(v ? fraction2(*v) : std::string(kAbsent));
      }
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

std::string emit_cost_scatter(std::span<const ModelSummary> summaries) {
  std::ostringstream out;
  out << "model,vendor,cost_per_5k,tier1_f1,variant_tag\n";
  for (const auto& s : summaries) {
    if (!s.cost_per_5k) continue;
    out << csv_escape(label_of(s)) << ',' << csv_escape(s.vendor) << ','
        << fixed(*s.cost_per_5k, 2) << ',' << fixed(pct(s.means.tier1), 1) << ','
        << csv_escape(s.variant) << '\n';
  }
  return out.str();
}

std::string render_cost_scatter_svg(std::span<const ModelSummary> summaries) {
  constexpr double kW = 640, kH = 400, kL = 60, kR = 20, kT = 20, kB = 50;
  std::vector<const ModelSummary*> pts;
  for (const auto& s : summaries) {
    if (s.cost_per_5k && *s.cost_per_5k > 0.0) pts.push_back(&s);
  }
  double x0 = 0, x1 = 1, y0 = 0, y1 = 100;
  if (!pts.empty()) {
    double cmin = pts[0]->cost_per_5k.value(), cmax = cmin;
    double tmin = pct(pts[0]->means.tier1), tmax = tmin;
    for (const auto* p : pts) {
      cmin = std::min(cmin, *p->cost_per_5k);
      cmax = std::max(cmax, *p->cost_per_5k);
      tmin = std::min(tmin, pct(p->means.tier1));
      tmax = std::max(tmax, pct(p->means.tier1));
    }
    x0 = std::floor(std::log10(cmin));
    x1 = std::max(x0 + 1, std::ceil(std::log10(cmax)));
    y0 = std::floor(tmin / 5.0) * 5.0 - 5.0;
    y1 = std::ceil(tmax / 5.0) * 5.0 + 5.0;
  }
  auto px = [&](double cost) {
    return kL + (std::log10(cost) - x0) / (x1 - x0) * (kW - kL - kR);
  };
  auto py = [&](double t1) { return kH - kB - (t1 - y0) / (y1 - y0) * (kH - kT - kB); };
  std::ostringstream out;
  char buf[256];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\" font-family=\"sans-serif\" font-size=\"10\">\n";
  std::snprintf(buf, sizeof(buf),
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" "
                "stroke=\"#444\"/>\n",
                kL, kT, kW - kL - kR, kH - kT - kB);
  out << buf;
  for (double e = x0; e <= x1 + 1e-9; e += 1.0) {
    const double x = kL + (e - x0) / (x1 - x0) * (kW - kL - kR);
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%g</text>\n", x,
                  kH - kB + 15, std::pow(10.0, e));
    out << buf;
  }
  for (double v = y0; v <= y1 + 1e-9; v += 5.0) {
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%g</text>\n", kL - 5,
                  py(v) + 3, v);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">Cost per 5K images "
                "(USD, log scale)</text>\n",
                (kL + kW - kR) / 2, kH - 10);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"15\" y=\"%.1f\" text-anchor=\"middle\" transform=\"rotate(-90 "
                "15 %.1f)\">Tier 1 F1 (%%)</text>\n",
                (kT + kH - kB) / 2, (kT + kH - kB) / 2);
  out << buf;
  for (const auto* p : pts) {
    const std::string color = p->vendor == "Google"   ? "#1f4fd1"
                              : p->vendor == "OpenAI" ? "#c62828"
                                                      : "#555555";
    const bool hollow = !p->variant.empty() && p->variant != "standard";
    const double x = px(*p->cost_per_5k), y = py(pct(p->means.tier1));
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"4\" fill=\"%s\" stroke=\"%s\"/>\n", x,
                  y, hollow ? "none" : color.c_str(), color.c_str());
    out << buf;
    std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">",
                  x, y - 7);
    out << buf << xml_escape(label_of(*p)) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

Table render_diagnostics_table(std::span<const ModelSummary> summaries) {
  Table t;
  t.header = {"Model", "Patterns"};
  for (const auto& s : summaries) {
    std::string cell;
    for (auto p : s.diagnostics) {
      if (!cell.empty()) cell += ", ";
      cell += diagnostic_name(p);
    }
    t.rows.push_back({label_of(s), cell.empty() ? std::string(kAbsent) : cell});
  }
  return t;
}

nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json providers = nlohmann::json::object();
  for (const auto& [id, digest] : m.provider_digests) {
    providers[id] = {{"digest", digest}};
    const auto it = m.provider_configs.find(id);
    if (it != m.provider_configs.end()) providers[id]["config"] = it->second;
  }
  return {{"timestamp", m.timestamp},
          {"registry_version", m.registry_version},
          {"split_seed", m.split_seed ? nlohmann::json(*m.split_seed) : nlohmann::json()},
          {"exclusion_count", m.exclusion_count},
          {"scored_samples", m.scored_samples},
          {"providers", providers},
          {"tier3_mode", tier3_mode_name(m.tier3_mode)},
          {"rate_mode", rate_mode_name(m.rate_mode)},
          {"thresholds", to_json(m.thresholds)},
          {"bootstrap",
           {{"iterations", m.bootstrap.iterations},
            {"level", m.bootstrap.level},
            {"seed", m.bootstrap.seed}}},
          {"software_version", m.software_version}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.timestamp = j.value("timestamp", std::string());
  m.registry_version = j.value("registry_version", std::string());
  if (j.contains("split_seed") && j["split_seed"].is_number()) {
    m.split_seed = j["split_seed"].get<std::uint64_t>();
  }
  m.exclusion_count = j.value("exclusion_count", std::size_t{0});
  m.scored_samples = j.value("scored_samples", std::size_t{0});
  if (j.contains("providers")) {
    for (const auto& [id, p] : j["providers"].items()) {
      m.provider_digests[id] = p.value("digest", std::string());
      if (p.contains("config")) m.provider_configs[id] = p["config"];
    }
  }
  m.tier3_mode = parse_tier3_mode(j.value("tier3_mode", std::string("supported")));
  m.rate_mode = parse_rate_mode(j.value("rate_mode", std::string("per-image")));
  if (j.contains("thresholds")) m.thresholds = thresholds_from_json(j["thresholds"]);
  if (j.contains("bootstrap")) {
    const auto& b = j["bootstrap"];
    m.bootstrap.iterations = b.value("iterations", m.bootstrap.iterations);
    m.bootstrap.level = b.value("level", m.bootstrap.level);
    m.bootstrap.seed = b.value("seed", m.bootstrap.seed);
  }
  m.software_version = j.value("software_version", std::string());
  return m;
}

std::string render_report(std::span<const ModelSummary> summaries,
                          const RunManifest& manifest) {
  std::ostringstream out;
  out << "# Evaluation report\n\n";
  out << "- Registry: " << manifest.registry_version << "\n";
  out << "- Scored samples per model: " << manifest.scored_samples << " ("
      << manifest.exclusion_count << " excluded)\n";
  out << "- Tier 3 averaging: " << tier3_mode_name(manifest.tier3_mode) << "\n";
  out << "- Hallucination rate: " << rate_mode_name(manifest.rate_mode) << "\n";
  out << "- Bootstrap: " << manifest.bootstrap.iterations << " iterations, "
      << fixed(manifest.bootstrap.level, 0) << "% level, seed " << manifest.bootstrap.seed
      << "\n\n";
  out << "## Three-tier results\n\n" << to_markdown(render_tier_table(summaries)) << "\n";
  out << "## Hallucinations and cost\n\n"
      << to_markdown(render_hallucination_table(summaries, manifest.rate_mode)) << "\n";
  out << "## Per-category F1\n\n" << to_markdown(render_category_table(summaries)) << "\n";
  out << "## Diagnostic patterns\n\n"
      << to_markdown(render_diagnostics_table(summaries)) << "\n";
  out << "Thresholds: " << to_json(manifest.thresholds).dump() << "\n";
  return out.str();
}

void write_report_bundle(const std::string& dir, std::span<const ModelSummary> summaries,
                         const RunManifest& manifest) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path d(dir);
  write_file(d / "report.md", render_report(summaries, manifest));
  write_file(d / "tier_table.csv", to_csv(tier_table_data(summaries)));
  write_file(d / "hallucinations.csv",
             to_csv(render_hallucination_table(summaries, manifest.rate_mode)));
  write_file(d / "categories.csv", to_csv(render_category_table(summaries)));
  write_file(d / "cost_scatter.csv", emit_cost_scatter(summaries));
  write_file(d / "cost_scatter.svg", render_cost_scatter_svg(summaries));
  write_file(d / "manifest.json", to_json(manifest).dump(2) + "\n");
}

}  // namespace tiereval::report
