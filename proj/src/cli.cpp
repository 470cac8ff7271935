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

#include "tiereval/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <unordered_set>

#include "CLI11.hpp"
#include "tiereval/bootstrap.hpp"
#include "tiereval/embeddings.hpp"
#include "tiereval/errors.hpp"
#include "tiereval/parser.hpp"

#ifndef TIEREVAL_VERSION
#define TIEREVAL_VERSION "0.0.0"
#endif

namespace tiereval {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string resolve_path(const std::string& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  if (path.is_absolute() || base.empty()) return path.string();
  return (fs::path(base) / path).lexically_normal().string();
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
std::array<T, 3> triple(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) {
    throw ConfigError(what + " must be an array of three values (train, dev, test)");
  }
  return {j[0].get<T>(), j[1].get<T>(), j[2].get<T>()};
}

std::string required(const std::string& value, const std::string& key) {
  if (value.empty()) throw ConfigError("config key '" + key + "' is required");
  return value;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MissingInputError("cannot write '" + path.string() + "'");
  out << text;
}

std::string run_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Inputs {
  SchemaRegistry registry;
  AnnotationSet annotations;
  SplitAssignment split;
  ExclusionSet exclusions;
};

SchemaRegistry registry_for(const RunConfig& config) {
  if (config.registry.empty()) return default_registry();
  return load_registry_file(config.registry);
}

fs::path exclusions_path(const RunConfig& c) { return fs::path(c.out) / "exclusions.jsonl"; }
fs::path cache_path(const RunConfig& c, const std::string& id) {
  return fs::path(c.out) / "cache" / (id + ".jsonl");
}
fs::path scores_path(const RunConfig& c, const std::string& id) {
  return fs::path(c.out) / "scores" / (id + ".json");
}

// Registry, annotations, split (persisted to split.json), and exclusions.
Inputs load_inputs(const RunConfig& config) {
  SchemaRegistry registry = registry_for(config);
  AnnotationSet annotations =
      load_annotations(required(config.annotations, "annotations"), registry);
  SplitAssignment split =
      stratified_split(annotations.samples, config.split, config.split_seed);
  write_text(fs::path(config.out) / "split.json", split_manifest(split).dump(2) + "\n");
  ExclusionSet exclusions = load_exclusions(exclusions_path(config).string());
  return {std::move(registry), std::move(annotations), std::move(split),
          std::move(exclusions)};
}

std::vector<Request> test_requests(const RunConfig& config, const Inputs& in) {
  const std::string system_prompt = render_system_prompt(in.registry);
  std::unordered_set<std::string> test;
  for (const auto& id : in.split.ids_in(Split::kTest)) test.insert(id);
  std::vector<Request> requests;
  for (const auto& meta : in.annotations.samples) {
    if (test.count(meta.sample_id) == 0) continue;
    std::string image = meta.image_ref;
    if (!config.images_dir.empty()) image = (fs::path(config.images_dir) / image).string();
    requests.push_back({meta.sample_id, system_prompt, render_description(meta), image});
  }
  std::sort(requests.begin(), requests.end(),
            [](const Request& a, const Request& b) { return a.sample_id < b.sample_id; });
  return requests;
}

void write_predictions(const RunConfig& config, const std::string& id,
                       std::span<const ParsedPredictionSet> preds,
                       const SchemaRegistry& registry) {
  std::ostringstream out;
  write_prediction_sets(out, preds, registry);
  write_text(fs::path(config.out) / "predictions" / (id + ".jsonl"), out.str());
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

RunConfig run_config_from_json(const json& j, const std::string& base_dir) {
  check_keys(j, "run config",
             {"registry", "annotations", "images_dir", "split", "models", "pricing", "out",
              "tier3_mode", "rate_mode", "bootstrap", "thresholds", "parse", "baseline",
              "simulate"});
  RunConfig c;
  c.base_dir = base_dir;
  c.split.ratios = {0.0, 0.0, 1.0};
  try {
    c.registry = resolve_path(base_dir, j.value("registry", std::string()));
    c.annotations = resolve_path(base_dir, j.value("annotations", std::string()));
    c.images_dir = resolve_path(base_dir, j.value("images_dir", std::string()));
    c.pricing = resolve_path(base_dir, j.value("pricing", std::string()));
    c.out = resolve_path(base_dir, j.value("out", std::string("out")));
    if (j.contains("split")) {
      const auto& s = j["split"];
      check_keys(s, "split", {"counts", "ratios", "seed"});
      if (s.contains("counts")) c.split.counts = triple<std::size_t>(s["counts"], "split.counts");
      if (s.contains("ratios")) c.split.ratios = triple<double>(s["ratios"], "split.ratios");
      c.split_seed = s.value("seed", c.split_seed);
    }
    std::set<std::string> ids;
    for (const auto& m : j.value("models", json::array())) {
      c.models.push_back(provider_from_json(m, base_dir));
      if (!ids.insert(c.models.back().provider_id).second) {
        throw ConfigError("duplicate model id '" + c.models.back().provider_id + "'");
      }
    }
    c.tier3_mode = parse_tier3_mode(j.value("tier3_mode", std::string("supported")));
    c.rate_mode = parse_rate_mode(j.value("rate_mode", std::string("per-image")));
    if (j.contains("bootstrap")) {
      const auto& b = j["bootstrap"];
      check_keys(b, "bootstrap", {"iterations", "level", "seed"});
      c.bootstrap.iterations = b.value("iterations", c.bootstrap.iterations);
      c.bootstrap.level = b.value("level", c.bootstrap.level);
      c.bootstrap.seed = b.value("seed", c.bootstrap.seed);
      if (!(c.bootstrap.level > 0.0 && c.bootstrap.level < 100.0)) {
        throw ConfigError("bootstrap.level must be in (0, 100)");
      }
    }
    if (j.contains("thresholds")) {
      check_keys(j["thresholds"], "thresholds",
                 {"equal", "gap", "low", "high", "low_tier3", "high_tier3"});
      c.thresholds = thresholds_from_json(j["thresholds"]);
    }
    if (j.contains("parse")) {
      const auto& p = j["parse"];
      check_keys(p, "parse", {"strict", "match"});
      c.parse.strict = p.value("strict", false);
      const std::string match = p.value("match", std::string("normalized"));
      if (match == "normalized") {
        c.parse.match = MatchMode::kNormalized;
      } else if (match == "exact") {
        c.parse.match = MatchMode::kExact;
      } else {
        throw ConfigError("parse.match must be 'normalized' or 'exact'");
      }
    }
    if (j.contains("baseline")) {
      const auto& b = j["baseline"];
      check_keys(b, "baseline",
                 {"image_embeddings", "text_embeddings", "runs", "c_values", "folds",
                  "class_balanced", "l2_normalize", "warm_start", "metric", "seed",
                  "max_iterations", "gradient_tolerance"});
      BaselineConfig bc;
      bc.image_embeddings = resolve_path(base_dir, b.value("image_embeddings", std::string()));
      bc.text_embeddings = resolve_path(base_dir, b.value("text_embeddings", std::string()));
      for (const auto& r : b.value("runs", json::array())) {
        check_keys(r, "baseline run", {"id", "display_name", "modality"});
        BaselineRunSpec run;
        run.id = r.at("id").get<std::string>();
        run.modality = r.value("modality", std::string("image"));
        run.display_name = r.value("display_name", run.id);
        if (run.modality != "image" && run.modality != "image+text") {
          throw ConfigError("baseline run '" + run.id +
                            "': modality must be 'image' or 'image+text'");
        }
        if (!ids.insert(run.id).second) {
          throw ConfigError("duplicate model id '" + run.id + "'");
        }
        bc.runs.push_back(run);
      }
      if (bc.runs.empty()) bc.runs.push_back({"baseline-image", "Baseline (Image)", "image"});
      auto& t = bc.train;
      t.grid.c_values = b.value("c_values", t.grid.c_values);
      t.grid.folds = b.value("folds", t.grid.folds);
      t.class_balanced = b.value("class_balanced", t.class_balanced);
      t.l2_normalize = b.value("l2_normalize", t.l2_normalize);
      t.warm_start = b.value("warm_start", t.warm_start);
      t.seed = b.value("seed", t.seed);
      t.optimizer.max_iterations = b.value("max_iterations", t.optimizer.max_iterations);
      t.optimizer.gradient_tolerance =
          b.value("gradient_tolerance", t.optimizer.gradient_tolerance);
      const std::string metric = b.value("metric", std::string("macro_f1"));
      if (metric == "macro_f1") {
        t.metric = CvMetric::kMacroF1;
      } else if (metric == "accuracy") {
        t.metric = CvMetric::kAccuracy;
      } else {
        throw ConfigError("baseline.metric must be 'macro_f1' or 'accuracy'");
      }
      t.grid.validate();
      c.baseline = std::move(bc);
    }
    if (j.contains("simulate")) {
      const auto& s = j["simulate"];
      check_keys(s, "simulate", {"samples", "instances", "na_probability", "errors", "seed"});
      c.simulate.samples = s.value("samples", c.simulate.samples);
      c.simulate.instances = s.value("instances", c.simulate.instances);
      c.simulate.na_probability = s.value("na_probability", c.simulate.na_probability);
      c.simulate.seed = s.value("seed", c.simulate.seed);
      if (s.contains("errors")) {
        check_keys(s["errors"], "simulate.errors",
                   {"false_visibility", "false_na", "confusion", "hallucination", "seed"});
        c.simulate.errors = synth::error_spec_from_json(s["errors"]);
      }
      c.simulate.errors.validate();
      if (!(c.simulate.na_probability >= 0.0 && c.simulate.na_probability <= 1.0)) {
        throw ConfigError("simulate.na_probability must be in [0, 1]");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("config file '" + path + "' not found");
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
  return run_config_from_json(j, fs::path(path).parent_path().string());
}

void apply_overrides(RunConfig& config, const GlobalOverrides& o) {
  if (o.seed) {
    config.split_seed = *o.seed;
    config.bootstrap.seed = *o.seed;
    config.simulate.seed = *o.seed;
    config.simulate.errors.seed = *o.seed;
    if (config.baseline) config.baseline->train.seed = *o.seed;
  }
  if (o.out) config.out = *o.out;
  if (o.tier3_mode) config.tier3_mode = *o.tier3_mode;
  if (o.rate_mode) config.rate_mode = *o.rate_mode;
}

ModelSummary score_model(const SchemaRegistry& registry, const GroundTruthTable& gold,
                         std::span<const std::string> roster,
                         std::span<const ParsedPredictionSet> preds,
                         const RunConfig& config) {
  const ScoringMatrix matrix = build_scoring_matrix(registry, gold, roster, preds);
  const auto tallies = tally(matrix, registry);
  const auto scores = score_attributes(tallies, registry, config.tier3_mode);
  ModelSummary s = aggregate(scores, registry);
  s.tier3_mode = config.tier3_mode;
  s.scored_samples = roster.size();
  if (!roster.empty()) {
    s.rate_per_image = hallucination_rate(s.hallucination_count, roster.size(),
                                          registry.size(), RateMode::kPerImage);
    s.rate_per_prediction = hallucination_rate(s.hallucination_count, roster.size(),
                                               registry.size(), RateMode::kPerPrediction);
    if (config.bootstrap.iterations > 0) {
      s.tier1_ci = bootstrap_ci(roster.size(), model_tier1_statistic(matrix, registry),
                                config.bootstrap.iterations, config.bootstrap.level,
                                config.bootstrap.seed);
    }
  }
  s.diagnostics = classify_diagnostic(diagnostic_input(s), config.thresholds);
  return s;
}

EvalResult cmd_eval(const RunConfig& config, std::ostream& log, const Sleeper& sleeper) {
  if (config.models.empty()) throw ConfigError("no models configured");
  Inputs in = load_inputs(config);
  const auto requests = test_requests(config, in);
  EvalResult result;
  for (const auto& model : config.models) {
    model.validate();
    auto adapter = make_adapter(model);
    fs::create_directories(cache_path(config, model.provider_id).parent_path());
    ResponseCache cache(cache_path(config, model.provider_id).string());
    const BatchResult batch = run_batch(requests, model, *adapter, &cache, nullptr, sleeper);
    EvalModelStats stats{model.provider_id, requests.size(), batch.submitted,
                         batch.from_cache, 0, 0};
    for (const auto& env : batch.envelopes) {
      if (env.status == ResponseStatus::kSafetyBlocked) {
        ++stats.blocked;
        if (in.exclusions.add(env.sample_id, "safety_blocked:" + model.provider_id)) {
          ++result.new_exclusions;
        }
      } else if (env.status != ResponseStatus::kOk) {
        ++stats.failed;
      }
    }
    log << model.provider_id << ": " << stats.requests << " samples, " << stats.submitted
        << " submitted, " << stats.from_cache << " cached, " << stats.blocked
        << " blocked, " << stats.failed << " failed\n";
    result.models.push_back(stats);
  }
  save_exclusions(exclusions_path(config).string(), in.exclusions);
  log << "exclusions: " << in.exclusions.size() << " (" << result.new_exclusions
      << " new)\n";
  return result;
}

std::vector<ModelSummary> cmd_score(const RunConfig& config, std::ostream& log) {
  if (config.models.empty()) throw ConfigError("no models configured");
  Inputs in = load_inputs(config);
  const ScoringRoster roster = apply_exclusions(in.split, in.exclusions);
  const std::unordered_set<std::string> scored(roster.ids.begin(), roster.ids.end());
  std::optional<PricingSpec> pricing;
  if (!config.pricing.empty()) pricing = load_pricing(config.pricing);
  const auto requests = test_requests(config, in);

  std::vector<ModelSummary> summaries;
  for (const auto& model : config.models) {
    const fs::path path = cache_path(config, model.provider_id);
    if (!fs::exists(path)) {
      throw MissingInputError("response cache '" + path.string() + "' not found; run eval");
    }
    const ResponseCache cache(path.string());
    std::optional<ModelPrice> price;
    if (pricing && pricing->contains(model.model_name)) {
      price = pricing->at(model.model_name);
    } else if (pricing && pricing->contains(model.provider_id)) {
      price = pricing->at(model.provider_id);
    }
    CostLedger ledger;
    std::size_t billed = 0, failures = 0;
    std::vector<ParsedPredictionSet> preds;
    for (const auto& req : requests) {
      const auto env = cache.find(model.provider_id, req.sample_id, prompt_hash(req));
      if (env) {
        ++billed;
        if (price) ledger.add(model.provider_id, env->usage, *price);
      }
      if (scored.count(req.sample_id) == 0) continue;
      if (!env || env->status != ResponseStatus::kOk) {
        ++failures;
        continue;
      }
      ParsedPredictionSet set = parse_output(*env->raw_text, in.registry, config.parse);
      set.sample_id = req.sample_id;
      set.model = model.provider_id;
      preds.push_back(std::move(set));
    }
    write_predictions(config, model.provider_id, preds, in.registry);
    ModelSummary s =
        score_model(in.registry, in.annotations.gold, roster.ids, preds, config);
    s.model_id = model.provider_id;
    s.display_name = model.display_name;
    s.group = model.group;
    s.vendor = model.vendor;
    s.variant = model.variant;
    if (price && billed > 0) {
      s.cost_total = pico_to_currency(ledger.total_pico(model.provider_id));
      s.cost_per_5k = *s.cost_total * 5000.0 / static_cast<double>(billed);
    }
    write_text(scores_path(config, model.provider_id), summary_to_json(s).dump(2) + "\n");
    log << model.provider_id << ": tier1 " << report::fixed(100.0 * s.means.tier1, 1)
        << ", " << s.hallucination_count << " hallucinations, " << failures
        << " responses without output\n";
    summaries.push_back(std::move(s));
  }
  cmd_report(config, log);
  return summaries;
}

std::vector<ModelSummary> cmd_baseline(const RunConfig& config, std::ostream& log) {
  if (!config.baseline) throw ConfigError("config has no 'baseline' section");
  const BaselineConfig& bc = *config.baseline;
  Inputs in = load_inputs(config);
  const ScoringRoster roster = apply_exclusions(in.split, in.exclusions);
  const EmbeddingMatrix image =
      load_embeddings(required(bc.image_embeddings, "baseline.image_embeddings"));
  std::optional<EmbeddingMatrix> text;

  std::vector<std::string> train_ids = in.split.ids_in(Split::kTrain);
  for (const auto& id : in.split.ids_in(Split::kDev)) train_ids.push_back(id);
  std::sort(train_ids.begin(), train_ids.end());
  if (train_ids.empty()) throw DataError("train and dev splits are empty");

  std::vector<ModelSummary> summaries;
  for (const auto& run : bc.runs) {
    EmbeddingMatrix features;
    if (run.modality == "image") {
      features = image;
    } else {
      if (!text) {
        text = load_embeddings(required(bc.text_embeddings, "baseline.text_embeddings"));
      }
      features = build_multimodal(image, *text);
    }
    const Eigen::MatrixXd x_train = select_rows(features, train_ids).rows;
    const Eigen::MatrixXd x_test = select_rows(features, roster.ids).rows;

    std::vector<ParsedPredictionSet> preds(roster.ids.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
      preds[i].sample_id = roster.ids[i];
      preds[i].model = run.id;
      preds[i].predictions.resize(in.registry.size());
    }
    json models = json::array();
    for (std::size_t a = 0; a < in.registry.size(); ++a) {
      const AttributeSpec& spec = in.registry[a];
      std::vector<std::uint16_t> y;
      y.reserve(train_ids.size());
      for (const auto& id : train_ids) y.push_back(in.annotations.gold.row(id)[a]);
      const TrainResult trained =
          train(x_train, y, spec.num_classes(), bc.train, spec.name);
      const auto labels = predict(trained.model, x_test);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        AttributePrediction p;
        p.attr_name = spec.name;
        p.raw_value = spec.labels[labels[i]];
        p.resolved = ResolvedLabel::index(labels[i]);
        preds[i].predictions[a] = std::move(p);
      }
      models.push_back({{"model", to_json(trained.model)}, {"cv", to_json(trained.cv)}});
      log << run.id << " " << spec.name << ": C=" << trained.model.chosen_c << ", "
          << trained.model.iterations << " iterations\n";
    }
    write_text(fs::path(config.out) / "baseline" / (run.id + ".json"),
               json{{"id", run.id}, {"modality", run.modality}, {"attributes", models}}
                       .dump(2) +
                   "\n");
    write_predictions(config, run.id, preds, in.registry);
    ModelSummary s =
        score_model(in.registry, in.annotations.gold, roster.ids, preds, config);
    s.model_id = run.id;
    s.display_name = run.display_name;
    s.group = "Baseline";
    s.variant = run.modality;
    write_text(scores_path(config, run.id), summary_to_json(s).dump(2) + "\n");
    log << run.id << ": tier1 " << report::fixed(100.0 * s.means.tier1, 1) << "\n";
    summaries.push_back(std::move(s));
  }
  cmd_report(config, log);
  return summaries;
}

SimulateResult cmd_simulate(const RunConfig& config, std::ostream& log) {
  const SimulateConfig& sc = config.simulate;
  sc.errors.validate();
  const SchemaRegistry registry = registry_for(config);
  const synth::ClassPriors priors = synth::na_priors(registry, sc.na_probability);
  SimulateResult result;
  std::vector<double> tier1s, na_recalls, gold_recalls;
  for (std::size_t inst = 0; inst < sc.instances; ++inst) {
    const auto data = synth::generate(registry, sc.samples, priors, sc.seed + inst);
    synth::ErrorSpec spec = sc.errors;
    spec.seed = sc.errors.seed + inst;
    const GroundTruthTable& gold = data.annotations.gold;
    const auto preds = synth::corrupt(gold, registry, spec);
    const auto& roster = gold.ids();
    const auto cmp = synth::compare_with_oracle(gold, preds, roster, registry);
    result.max_abs_diff = std::max(result.max_abs_diff, cmp.max_abs_diff);
    result.values_compared += cmp.values_compared;
    for (const auto& m : cmp.mismatches) {
      result.mismatches.push_back("instance " + std::to_string(inst) + ": " + m);
    }

    const auto tallies = tally(gold, preds, roster, registry);
    tier1s.push_back(model_tier1(tallies));
    std::vector<double> na, recall;
    for (std::size_t a = 0; a < registry.size(); ++a) {
      if (const auto t2 = tier2(tallies[a]); t2 && tallies[a].support(*tallies[a].na_index()) > 0) {
        na.push_back(t2->recall);
      }
      // False NA only applies where an NA class exists.
      if (!tallies[a].na_index()) continue;
      const auto classes = tier1_class_scores(tallies[a]);
      std::vector<double> per;
      for (std::size_t c = 0; c < classes.size(); ++c) {
        if (c == tallies[a].na_index() || tallies[a].support(c) == 0) continue;
        per.push_back(classes[c].recall);
      }
      if (!per.empty()) recall.push_back(mean_of(per));
    }
    na_recalls.push_back(mean_of(na));
    gold_recalls.push_back(mean_of(recall));
  }
  result.tier1 = mean_of(tier1s);
  result.na_recall = mean_of(na_recalls);
  result.gold_recall = mean_of(gold_recalls);

  const json out = {{"instances", sc.instances},
                    {"samples", sc.samples},
                    {"na_probability", sc.na_probability},
                    {"errors", synth::to_json(sc.errors)},
                    {"seed", sc.seed},
                    {"max_abs_diff", result.max_abs_diff},
                    {"values_compared", result.values_compared},
                    {"mismatches", result.mismatches},
                    {"mean_tier1", result.tier1},
                    {"mean_na_recall", result.na_recall},
                    {"mean_gold_recall", result.gold_recall},
                    {"passed", result.passed()}};
  write_text(fs::path(config.out) / "simulate.json", out.dump(2) + "\n");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e", result.max_abs_diff);
  log << "instances: " << sc.instances << " x " << sc.samples << " samples\n"
      << "max discrepancy: " << buf << " over " << result.values_compared << " values\n"
      << "structural mismatches: " << result.mismatches.size() << "\n"
      << "mean tier1: " << report::fixed(result.tier1, 4) << "\n"
      << "mean NA recall: " << report::fixed(result.na_recall, 4) << "\n"
      << "mean gold-class recall: " << report::fixed(result.gold_recall, 4) << "\n"
      << (result.passed() ? "PASS" : "FAIL") << "\n";
  return result;
}

std::vector<ModelSummary> cmd_report(const RunConfig& config, std::ostream& log) {
  std::vector<std::string> ids;
  std::map<std::string, const ProviderConfig*> providers;
  for (const auto& m : config.models) {
    ids.push_back(m.provider_id);
    providers[m.provider_id] = &m;
  }
  if (config.baseline) {
    for (const auto& r : config.baseline->runs) ids.push_back(r.id);
  }
  std::vector<ModelSummary> summaries;
  report::RunManifest manifest;
  for (const auto& id : ids) {
    const fs::path path = scores_path(config, id);
    if (!fs::exists(path)) continue;
    std::ifstream in(path);
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("score file '" + path.string() + "' is not JSON");
    summaries.push_back(summary_from_json(j));
    if (const auto it = providers.find(id); it != providers.end()) {
      manifest.provider_digests[id] = provider_digest(*it->second);
      manifest.provider_configs[id] = to_json(*it->second);
    }
  }
  if (summaries.empty()) {
    throw MissingInputError("no score files under '" +
                            (fs::path(config.out) / "scores").string() +
                            "'; run score or baseline");
  }
  const std::uint64_t n = summaries.front().scored_samples;
  for (const auto& s : summaries) {
    if (s.scored_samples != n) {
      throw DataError("model '" + s.model_id + "' was scored on " +
                      std::to_string(s.scored_samples) + " samples, expected " +
                      std::to_string(n));
    }
  }
  manifest.timestamp = run_timestamp();
  manifest.registry_version = registry_for(config).version();
  manifest.split_seed = config.split_seed;
  manifest.exclusion_count = load_exclusions(exclusions_path(config).string()).size();
  manifest.scored_samples = n;
  manifest.tier3_mode = summaries.front().tier3_mode;
  manifest.rate_mode = config.rate_mode;
  manifest.thresholds = config.thresholds;
  manifest.bootstrap = config.bootstrap;
  manifest.software_version = TIEREVAL_VERSION;
  const fs::path dir = fs::path(config.out) / "report";
  report::write_report_bundle(dir.string(), summaries, manifest);
  log << "report: " << summaries.size() << " models -> " << dir.string() << "\n";
  return summaries;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Three-tier evaluation of multi-attribute predictions"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::string tier3_mode, rate_mode;
  app.add_option("--config", config_path, "Run configuration (JSON)");
  app.add_option("--seed", seed, "Seed for split, bootstrap, baseline, and simulation");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--tier3-mode", tier3_mode, "Tier 3 averaging")
      ->check(CLI::IsMember({"supported", "literal"}));
  app.add_option("--rate-mode", rate_mode, "Hallucination rate denominator")
      ->check(CLI::IsMember({"per-image", "per-prediction"}));
  app.fallthrough();
  app.add_subcommand("eval", "Submit test samples to each model through the cache");
  app.add_subcommand("score", "Parse cached responses, score, and render the report");
  app.add_subcommand("baseline", "Train embedding classifiers and score them");
  app.add_subcommand("simulate", "Validate the metric engine against the oracle");
  app.add_subcommand("report", "Render the report from existing score files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    RunConfig config;
    config.split.ratios = {0.0, 0.0, 1.0};
    if (!config_path.empty()) config = load_run_config(config_path);
    GlobalOverrides overrides;
    overrides.seed = seed;
    overrides.out = out_dir;
    if (!tier3_mode.empty()) overrides.tier3_mode = parse_tier3_mode(tier3_mode);
    if (!rate_mode.empty()) overrides.rate_mode = parse_rate_mode(rate_mode);
    apply_overrides(config, overrides);

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "eval") {
      cmd_eval(config, out);
    } else if (cmd == "score") {
      cmd_score(config, out);
    } else if (cmd == "baseline") {
      cmd_baseline(config, out);
    } else if (cmd == "simulate") {
      if (!cmd_simulate(config, out).passed()) return kExitValidation;
    } else {
      cmd_report(config, out);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingInputError& e) {
    err << "missing input: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const DataError& e) {
    err << "validation failed: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitOther;
  }
}

}  // namespace tiereval
