#include "experiment.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "headlens/artifact_store.h"
#include "headlens/digest.h"
#include "headlens/errors.h"
#include "headlens/judge.h"
#include "headlens/lexicon.h"
#include "headlens/textspan.h"

namespace headlens::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kBadManifest, path.string() + ": " + e.what());
  }
}

// Appends a trailing config_digest column to every line of a CSV document.
std::string with_digest_column(const std::string& csv, const std::string& digest) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    out << line << ',' << (header ? std::string("config_digest") : digest) << '\n';
    header = false;
  }
  return out.str();
}

std::string file_stem(const std::string& name) {
  std::string out;
  for (const char c : name) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out.push_back(keep ? c : '_');
  }
  return out;
}

// Labels from a hosted model are remembered per span list so warm reruns make
// no remote calls at all.
class CachedLabeler : public Labeler {
 public:
  CachedLabeler(Labeler& inner, const fs::path& file) : inner_(inner) {
    if (std::ifstream in(file); in) {
      std::string line;
      while (std::getline(in, line)) {
        try {
          const auto doc = json::parse(line);
          labels_[doc.at("key").get<std::string>()] = doc.at("label").get<std::string>();
        } catch (const json::exception&) {
          // torn trailing line from an interrupted run
        }
      }
    }
    out_.open(file, std::ios::app);
  }

  std::string label(std::span<const std::string> spans, std::span<const Exemplar> exemplars) override {
    std::string joined;
    for (const auto& s : spans) joined += s + '\n';
    const auto key = hex_digest(joined);
    if (const auto it = labels_.find(key); it != labels_.end()) return it->second;
    auto value = inner_.label(spans, exemplars);
    labels_[key] = value;
    out_ << json{{"key", key}, {"label", value}}.dump() << '\n';
    out_.flush();
    return value;
  }

 private:
  Labeler& inner_;
  std::map<std::string, std::string> labels_;
  std::ofstream out_;
};

Eigen::MatrixXd to_double(const MatrixF& m) { return m.cast<double>(); }

struct ClassTask {
  Eigen::MatrixXd prototypes;
  std::vector<std::string> classes;
  std::vector<std::size_t> labels;
};

ClassTask class_task(const Bundle& bundle, const std::string& set_name) {
  const auto& set = bundle.manifest().class_prompt_sets.at(set_name);
  const Eigen::MatrixXd prompts = to_double(bundle.prompt_embeddings(set_name));
  ClassTask task;
  std::map<std::string, std::size_t> index;
  for (const auto& p : set.prompts) {
    if (index.emplace(p.label, task.classes.size()).second) task.classes.push_back(p.label);
  }
  task.prototypes = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(task.classes.size()), prompts.cols());
  for (std::size_t r = 0; r < set.prompts.size(); ++r) {
    task.prototypes.row(static_cast<Eigen::Index>(index.at(set.prompts[r].label))) +=
        prompts.row(static_cast<Eigen::Index>(r));
  }
  for (Eigen::Index c = 0; c < task.prototypes.rows(); ++c) task.prototypes.row(c).normalize();
  for (const auto& label : set.image_labels) {
    const auto it = index.find(label);
    if (it == index.end()) throw MetricError("dataset " + set_name + ": image label '" + label + "' has no prompt");
    task.labels.push_back(it->second);
  }
  return task;
}

std::vector<EvalReport> evaluate_representations(const Bundle& bundle, const ExperimentConfig& config,
                                                 const Eigen::MatrixXd& reps) {
  const auto& manifest = bundle.manifest();
  std::vector<EvalReport> out;
  for (const auto& ds : config.classification) {
    const auto task = class_task(bundle, ds.set);
    const auto preds = zero_shot_classify(reps, task.prototypes, manifest.image_ids);
    EvalReport r;
    r.dataset = ds.set;
    r.metric = "accuracy";
    r.value = accuracy(preds, task.labels);
    for (std::size_t c = 0; c < task.classes.size(); ++c) {
      std::size_t seen = 0, right = 0;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (task.labels[i] != c) continue;
        ++seen;
        right += preds[i] == c ? 1 : 0;
      }
      r.breakdown.emplace_back(task.classes[c], seen ? static_cast<double>(right) / static_cast<double>(seen) : 0.0);
    }
    out.push_back(std::move(r));
  }
  for (const auto& ds : config.retrieval) {
    const auto& set = manifest.retrieval_sets.at(ds.set);
    const Eigen::MatrixXd queries = to_double(bundle.retrieval_embeddings(ds.set));
    std::vector<RelevancePair> pairs;
    for (std::size_t q = 0; q < set.queries.size(); ++q) {
      for (const auto& target : set.queries[q].targets) pairs.push_back({q, *bundle.image_index(target)});
    }
    for (const auto k : ds.ks) {
      EvalReport r;
      r.dataset = ds.set;
      r.metric = "recall";
      r.k = k;
      r.value = retrieval_recall_at_k(queries, reps, pairs, k);
      out.push_back(std::move(r));
    }
  }
  for (const auto& ds : config.bias) {
    const auto& set = manifest.class_prompt_sets.at(ds.set);
    std::vector<std::string> occupations;
    for (const auto& p : set.prompts) occupations.push_back(p.label);
    const auto suite = occupation_skew_suite(reps, manifest.image_ids, to_double(bundle.prompt_embeddings(ds.set)),
                                             occupations, bundle.attributes(), ds.attributes, ds.k);
    for (const auto& attribute : ds.attributes) {
      EvalReport r;
      r.dataset = ds.set;
      r.metric = "max_skew_" + attribute;
      r.k = ds.k;
      r.value = suite.mean_max_skew.at(attribute);
      for (const auto& [occupation, v] : suite.per_occupation.at(attribute)) r.breakdown.emplace_back(occupation, v);
      out.push_back(std::move(r));
    }
  }
  return out;
}

// Element-wise mean of replicate reports that share one layout.
std::vector<EvalReport> mean_reports(const std::vector<std::vector<EvalReport>>& replicates) {
  auto out = replicates.front();
  const auto n = static_cast<double>(replicates.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double sum = 0.0;
    for (const auto& rep : replicates) sum += rep[i].value;
    out[i].value = sum / n;
    for (std::size_t b = 0; b < out[i].breakdown.size(); ++b) {
      double bsum = 0.0;
      for (const auto& rep : replicates) bsum += rep[i].breakdown[b].second;
      out[i].breakdown[b].second = bsum / n;
    }
  }
  return out;
}

std::vector<HeadProfile> load_profiles(const ExperimentConfig& config, std::string* model_name) {
  const auto path = config.output_dir / "profiles.json";
  if (!fs::exists(path)) throw IoError("no profiles at " + path.string() + "; run `profile` first");
  const auto doc = read_json(path);
  std::vector<HeadProfile> profiles;
  try {
    if (doc.at("k").get<int>() != config.k) {
      throw ConfigError("profiles.json was built with k=" + std::to_string(doc.at("k").get<int>()) +
                        ", config asks for k=" + std::to_string(config.k));
    }
    if (model_name) *model_name = doc.at("model").get<std::string>();
    for (const auto& p : doc.at("profiles")) profiles.push_back(profile_from_json(p));
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kBadManifest, path.string() + ": " + e.what());
  }
  return profiles;
}

LoadOptions load_options(const ExperimentConfig& config) {
  LoadOptions options;
  options.sample_seed = config.seed;
  return options;
}

}  // namespace

ExperimentConfig config_from_json(const json& input, const fs::path& base_dir, const Overrides& overrides) {
  json doc = input;
  ExperimentConfig c;
  try {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    if (overrides.k) doc["k"] = *overrides.k;
    if (overrides.seed) doc["seed"] = *overrides.seed;
    if (overrides.judges) doc["judges"]["mode"] = *overrides.judges;

    c.manifest = resolve(base_dir, doc.at("manifest").get<std::string>());
    c.k = doc.value("k", kDefaultSpanCount);
    if (c.k < 1) throw ConfigError("k must be >= 1");
    c.seed = doc.value("seed", std::uint64_t{0});
    c.threads = doc.value("threads", 1u);
    if (c.threads == 0) c.threads = 1;
    c.mean_ablation = doc.value("mean_ablation", false);

    const json judges = doc.value("judges", json::object());
    const json labeler = doc.value("labeler", json::object());
    c.judges.mode = judges.value("mode", "lexical");
    c.labeler.mode = labeler.value("mode", "lexicon");
    const std::string judge_lexicon = judges.value("lexicon", labeler.value("lexicon", ""));
    const std::string labeler_lexicon = labeler.value("lexicon", judge_lexicon);

    if (c.judges.mode == "lexical") {
      if (judge_lexicon.empty()) throw ConfigError("lexical judges need a lexicon path");
      c.judges.lexicon = resolve(base_dir, judge_lexicon);
    } else if (c.judges.mode == "remote") {
      for (const auto& e : judges.value("endpoints", json::array())) c.judges.endpoints.push_back(endpoint_from_json(e));
      std::set<std::string> ids;
      for (const auto& e : c.judges.endpoints) ids.insert(e.id);
      if (c.judges.endpoints.size() != 3 || ids.size() != 3) {
        throw ConfigError("remote judging needs exactly 3 endpoints with distinct ids");
      }
    } else {
      throw ConfigError("unknown judge mode '" + c.judges.mode + "'");
    }

    if (c.labeler.mode == "lexicon") {
      if (labeler_lexicon.empty()) throw ConfigError("lexicon labeler needs a lexicon path");
      c.labeler.lexicon = resolve(base_dir, labeler_lexicon);
    } else if (c.labeler.mode == "remote") {
      c.labeler.endpoint = endpoint_from_json(labeler.at("endpoint"));
    } else {
      throw ConfigError("unknown labeler mode '" + c.labeler.mode + "'");
    }
    for (const auto& e : labeler.value("exemplars", json::array())) {
      c.labeler.exemplars.push_back({e.at("spans").get<std::vector<std::string>>(), e.at("label").get<std::string>()});
    }
    if (c.labeler.mode == "remote" && c.labeler.exemplars.size() < kMinExemplars) {
      throw ConfigError("remote labeler needs at least " + std::to_string(kMinExemplars) + " exemplars");
    }

    std::set<std::string> names{"Original"};
    for (const auto& p : doc.value("prune", json::array())) {
      PruneSettings s;
      s.strategy = parse_strategy(p.at("strategy").get<std::string>());
      s.name = p.value("name", std::string(strategy_name(s.strategy)));
      if (!names.insert(s.name).second) throw ConfigError("duplicate prune name '" + s.name + "'");
      if (p.contains("count")) s.count = p.at("count").get<std::size_t>();
      s.concept_label = p.value("concept", "");
      for (const auto& h : p.value("heads", json::array())) s.heads.push_back(parse_head_id(h.get<std::string>()));
      s.replicates = p.value("replicates", std::size_t{5});
      s.seeds = p.value("seeds", std::vector<std::uint64_t>{});
      if (s.strategy == PruneStrategy::kRandom) {
        if (s.seeds.empty()) {
          for (std::size_t r = 0; r < s.replicates; ++r) s.seeds.push_back(c.seed + r);
        }
        std::sort(s.seeds.begin(), s.seeds.end());
        s.seeds.erase(std::unique(s.seeds.begin(), s.seeds.end()), s.seeds.end());
        if (s.seeds.empty()) throw ConfigError("random pruning '" + s.name + "' needs at least one replicate");
      }
      if (s.strategy == PruneStrategy::kConcept && s.concept_label.empty()) {
        throw ConfigError("concept pruning '" + s.name + "' needs a concept");
      }
      c.prune.push_back(std::move(s));
    }

    const json datasets = doc.value("datasets", json::object());
    for (const auto& d : datasets.value("classification", json::array())) c.classification.push_back({d.at("set")});
    for (const auto& d : datasets.value("retrieval", json::array())) {
      RetrievalSettings r;
      r.set = d.at("set").get<std::string>();
      if (d.contains("k")) r.ks = d.at("k").get<std::vector<std::size_t>>();
      c.retrieval.push_back(std::move(r));
    }
    for (const auto& d : datasets.value("bias", json::array())) {
      BiasSettings b;
      b.set = d.at("set").get<std::string>();
      b.k = d.at("k").get<std::size_t>();
      b.attributes = d.at("attributes").get<std::vector<std::string>>();
      c.bias.push_back(std::move(b));
    }

    c.output_dir = overrides.out ? *overrides.out : resolve(base_dir, doc.value("output_dir", "out"));
    doc.erase("output_dir");
    c.digest = hex_digest(doc.dump());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path, const Overrides& overrides) {
  json doc;
  try {
    doc = read_json(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(doc, path.parent_path(), overrides);
}

void check_datasets(const ExperimentConfig& config, const Manifest& manifest) {
  auto prompt_set = [&](const std::string& name) -> const PromptSet& {
    const auto it = manifest.class_prompt_sets.find(name);
    if (it == manifest.class_prompt_sets.end()) throw ConfigError("manifest has no prompt set '" + name + "'");
    return it->second;
  };
  for (const auto& ds : config.classification) {
    if (prompt_set(ds.set).image_labels.size() != manifest.image_ids.size()) {
      throw ConfigError("prompt set '" + ds.set + "' has no per-image labels");
    }
  }
  for (const auto& ds : config.retrieval) {
    if (!manifest.retrieval_sets.count(ds.set)) throw ConfigError("manifest has no retrieval set '" + ds.set + "'");
  }
  for (const auto& ds : config.bias) {
    prompt_set(ds.set);
    if (ds.k == 0 || ds.k > manifest.image_ids.size()) {
      throw ConfigError("bias set '" + ds.set + "': k must be in [1, number of images]");
    }
  }
}

ProfileOutcome run_profile(const ExperimentConfig& config) {
  const Bundle bundle = load_bundle(config.manifest, load_options(config));
  const auto& manifest = bundle.manifest();
  const auto results = describe_all_heads(bundle, static_cast<std::size_t>(config.k), config.threads);
  fs::create_directories(config.output_dir);

  std::ostringstream spans;
  for (const auto& r : results) {
    auto doc = textspan_to_json(r, manifest);
    doc["config_digest"] = config.digest;
    spans << doc.dump() << '\n';
  }
  write_text(config.output_dir / "textspan.jsonl", spans.str());

  std::vector<std::unique_ptr<Judge>> owned;
  if (config.judges.mode == "lexical") {
    auto lexicon = std::make_shared<const Lexicon>(Lexicon::load(config.judges.lexicon));
    for (const char* id : {"lexical-1", "lexical-2", "lexical-3"}) owned.push_back(std::make_unique<LexicalJudge>(id, lexicon));
  } else {
    for (const auto& e : config.judges.endpoints) owned.push_back(std::make_unique<RemoteJudge>(e));
  }
  std::vector<Judge*> judges;
  for (auto& j : owned) judges.push_back(j.get());

  std::unique_ptr<Labeler> inner;
  std::unique_ptr<Labeler> cached;
  Labeler* labeler = nullptr;
  if (config.labeler.mode == "lexicon") {
    inner = std::make_unique<LexiconLabeler>(std::make_shared<const Lexicon>(Lexicon::load(config.labeler.lexicon)));
    labeler = inner.get();
  } else {
    inner = std::make_unique<RemoteLabeler>(*config.labeler.endpoint);
    cached = std::make_unique<CachedLabeler>(*inner, config.output_dir / "label_cache.jsonl");
    labeler = cached.get();
  }

  VerdictCache cache(config.output_dir / "judge_cache.jsonl");
  ProfileOutcome outcome;
  for (const auto& r : results) {
    outcome.profiles.push_back(profile_head(r, manifest, *labeler, config.labeler.exemplars, judges, &cache));
  }
  outcome.judge_calls = cache.misses();
  outcome.cache_hits = cache.hits();
  outcome.summary = summarize(manifest.model_name, outcome.profiles, manifest.window_heads().size(), config.k);

  json profiles = json::array();
  for (const auto& p : outcome.profiles) profiles.push_back(profile_to_json(p));
  const json profile_doc = {{"config_digest", config.digest},
                            {"model", manifest.model_name},
                            {"k", config.k},
                            {"profile_digest", profile_digest(outcome.profiles)},
                            {"profiles", profiles}};
  write_text(config.output_dir / "profiles.json", profile_doc.dump(2) + '\n');

  auto summary = summary_to_json(outcome.summary);
  summary["config_digest"] = config.digest;
  write_text(config.output_dir / "summary.json", summary.dump(2) + '\n');
  write_text(config.output_dir / "summary.csv",
             with_digest_column(summary_csv_header(config.k) + '\n' + summary_csv_row(outcome.summary) + '\n',
                                config.digest));
  return outcome;
}

EvaluateOutcome run_evaluate(const ExperimentConfig& config) {
  const Bundle bundle = load_bundle(config.manifest, load_options(config));
  const auto& manifest = bundle.manifest();
  check_datasets(config, manifest);
  std::string model = manifest.model_name;
  const auto profiles = load_profiles(config, &model);
  const Ablation ablation = config.mean_ablation ? Ablation::kMean : Ablation::kZero;
  std::size_t high = 0;
  for (const auto& p : profiles) high += p.band == Band::kHigh ? 1 : 0;

  EvaluateOutcome outcome;
  std::vector<std::pair<std::string, std::vector<PruneSpec>>> columns;
  SelectOptions original;
  original.name = "Original";
  original.model_name = model;
  columns.push_back({"Original", {select_heads(profiles, PruneStrategy::kExplicit, original)}});
  for (const auto& p : config.prune) {
    SelectOptions opt;
    opt.model_name = model;
    opt.count = p.count;
    opt.concept_label = p.concept_label;
    opt.heads = p.heads;
    std::vector<PruneSpec> specs;
    if (p.strategy == PruneStrategy::kRandom) {
      if (!opt.count) opt.count = high;
      for (const auto seed : p.seeds) {
        opt.seed = seed;
        opt.name = p.name + "-seed" + std::to_string(seed);
        specs.push_back(select_heads(profiles, p.strategy, opt));
      }
    } else {
      opt.name = p.name;
      specs.push_back(select_heads(profiles, p.strategy, opt));
    }
    columns.push_back({p.name, std::move(specs)});
  }

  fs::create_directories(config.output_dir / "prune_specs");
  for (const auto& [column, specs] : columns) {
    outcome.columns.push_back(column);
    std::vector<std::vector<EvalReport>> replicates;
    for (const auto& spec : specs) {
      auto doc = prune_spec_to_json(spec);
      doc["config_digest"] = config.digest;
      write_text(config.output_dir / "prune_specs" / (file_stem(spec.name) + ".json"), doc.dump(2) + '\n');
      outcome.specs.push_back(spec);
      replicates.push_back(evaluate_representations(bundle, config, pruned_representations(bundle, spec, ablation)));
    }
    for (auto& r : mean_reports(replicates)) {
      r.model = model;
      r.prune_spec = column;
      outcome.reports.push_back(std::move(r));
    }
  }

  json reports = json::array();
  for (const auto& r : outcome.reports) reports.push_back(eval_report_to_json(r));
  json spec_names = json::array();
  for (const auto& s : outcome.specs) spec_names.push_back(s.name);
  const json eval_doc = {{"config_digest", config.digest},
                         {"model", model},
                         {"ablation", config.mean_ablation ? "mean" : "zero"},
                         {"columns", outcome.columns},
                         {"prune_specs", spec_names},
                         {"reports", reports}};
  write_text(config.output_dir / "eval.json", eval_doc.dump(2) + '\n');
  write_text(config.output_dir / "eval_grid.csv",
             with_digest_column(eval_grid_csv(outcome.reports, outcome.columns), config.digest));

  for (const auto& ds : config.bias) {
    // attribute,occupation,<column...>
    std::map<std::pair<std::string, std::string>, std::map<std::string, double>> cells;
    for (const auto& r : outcome.reports) {
      if (r.dataset != ds.set || r.metric.rfind("max_skew_", 0) != 0) continue;
      const auto attribute = r.metric.substr(9);
      for (const auto& [occupation, v] : r.breakdown) cells[{attribute, occupation}][r.prune_spec] = v;
    }
    std::ostringstream os;
    os.precision(10);
    os << "attribute,occupation";
    for (const auto& c : outcome.columns) os << ',' << c;
    os << '\n';
    for (const auto& [key, row] : cells) {
      os << key.first << ',' << key.second;
      for (const auto& c : outcome.columns) {
        os << ',';
        if (const auto it = row.find(c); it != row.end()) os << it->second;
      }
      os << '\n';
    }
    write_text(config.output_dir / ("skew_" + file_stem(ds.set) + ".csv"), with_digest_column(os.str(), config.digest));
  }
  return outcome;
}

std::string run_report(const ExperimentConfig& config) {
  const auto summary_path = config.output_dir / "summary.json";
  if (!fs::exists(summary_path)) throw IoError("no summary at " + summary_path.string() + "; run `profile` first");
  const auto summary = read_json(summary_path);
  std::string model;
  const auto profiles = load_profiles(config, &model);

  std::ostringstream os;
  os.precision(4);
  os << "# " << model << "\n\n";
  os << "config digest: " << config.digest << "\n\n";
  os << "## Heads\n\n| head | concept | CCS | band |\n|---|---|---|---|\n";
  for (const auto& p : profiles) {
    os << "| " << to_string(p.head) << " | " << p.concept_label << " | " << p.ccs << " | " << band_name(p.band)
       << " |\n";
  }
  os << "\n## Summary\n\n";
  try {
    os << "H = " << summary.at("H").get<std::size_t>() << "\n\n";
    for (const auto& [key, value] : summary.at("ccs_at").items()) {
      os << "- " << key << ": " << value.get<double>() << '\n';
    }
    for (const auto& [key, value] : summary.at("counts").items()) {
      os << "- " << key << ": " << value.get<std::size_t>() << '\n';
    }
    if (summary.contains("ccr") && !summary["ccr"].is_null()) os << "- CCR: " << summary["ccr"].get<double>() << '\n';
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kBadManifest, summary_path.string() + ": " + e.what());
  }

  const auto eval_path = config.output_dir / "eval.json";
  if (fs::exists(eval_path)) {
    const auto doc = read_json(eval_path);
    std::vector<EvalReport> reports;
    std::vector<std::string> columns;
    try {
      for (const auto& r : doc.at("reports")) reports.push_back(eval_report_from_json(r));
      columns = doc.at("columns").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw FormatError(FormatError::Kind::kBadManifest, eval_path.string() + ": " + e.what());
    }
    os << "\n## Evaluation\n\n```\n" << eval_grid_csv(reports, columns) << "```\n";
  }
  const auto text = os.str();
  write_text(config.output_dir / "report.md", text);
  return text;
}

}  // namespace headlens::cli
