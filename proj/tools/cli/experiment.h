#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headlens/concepts.h"
#include "headlens/endpoint.h"
#include "headlens/head_id.h"
#include "headlens/metrics.h"
#include "headlens/pruning.h"

namespace headlens::cli {

struct JudgeSettings {
  std::string mode = "lexical";  // lexical | remote
  std::filesystem::path lexicon;
  std::vector<EndpointConfig> endpoints;
};

struct LabelerSettings {
  std::string mode = "lexicon";  // lexicon | remote
  std::filesystem::path lexicon;
  std::optional<EndpointConfig> endpoint;
  std::vector<Exemplar> exemplars;
};

struct PruneSettings {
  std::string name;
  PruneStrategy strategy = PruneStrategy::kExplicit;
  std::optional<std::size_t> count;
  std::string concept_label;
  std::vector<HeadId> heads;
  std::size_t replicates = 5;         // kRandom
  std::vector<std::uint64_t> seeds;   // kRandom; default seed + 0..replicates-1
};

struct ClassificationSettings {
  std::string set;
};

struct RetrievalSettings {
  std::string set;
  std::vector<std::size_t> ks{1, 5, 10};
};

struct BiasSettings {
  std::string set;
  std::size_t k = 0;
  std::vector<std::string> attributes;
};

struct ExperimentConfig {
  std::filesystem::path manifest;
  int k = kDefaultSpanCount;
  JudgeSettings judges;
  LabelerSettings labeler;
  std::vector<PruneSettings> prune;
  bool mean_ablation = false;
  std::vector<ClassificationSettings> classification;
  std::vector<RetrievalSettings> retrieval;
  std::vector<BiasSettings> bias;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  // Digest of the resolved settings (everything except output_dir).
  std::string digest;
};

struct Overrides {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> judges;
  std::optional<int> k;
};

// Relative paths resolve against the config file's directory. Throws
// ConfigError for malformed or inconsistent settings, IoError when the file
// cannot be read.
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});
ExperimentConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                                  const Overrides& overrides = {});

// Checks that every prompt/retrieval set named by the datasets exists.
void check_datasets(const ExperimentConfig& config, const Manifest& manifest);

struct ProfileOutcome {
  ModelSummary summary;
  std::vector<HeadProfile> profiles;
  std::size_t judge_calls = 0;
  std::size_t cache_hits = 0;
};

// describe_all_heads -> label -> consensus -> summary. Writes textspan.jsonl,
// profiles.json, summary.json, summary.csv and judge_cache.jsonl under the
// output directory.
ProfileOutcome run_profile(const ExperimentConfig& config);

struct EvaluateOutcome {
  std::vector<PruneSpec> specs;            // every resolved spec, random replicates included
  std::vector<EvalReport> reports;         // one per (column, dataset, metric, k)
  std::vector<std::string> columns;        // "Original" then the configured prune names
};

// Reads profiles.json from the output directory and writes prune_specs/,
// eval.json, eval_grid.csv and skew_<set>.csv.
EvaluateOutcome run_evaluate(const ExperimentConfig& config);

// Human-readable summary of profiles and the evaluation grid; also written to
// report.md in the output directory.
std::string run_report(const ExperimentConfig& config);

}  // namespace headlens::cli
