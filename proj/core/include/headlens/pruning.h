#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "headlens/artifact_store.h"
#include "headlens/concepts.h"
#include "headlens/head_id.h"

namespace headlens {

enum class PruneStrategy { kHighCcs, kLowCcs, kRandom, kConcept, kExplicit };

std::string_view strategy_name(PruneStrategy strategy);
PruneStrategy parse_strategy(std::string_view name);

// A named, replayable selection of heads to ablate.
struct PruneSpec {
  std::string name;
  PruneStrategy strategy = PruneStrategy::kExplicit;
  std::vector<HeadId> heads;  // sorted by (layer, head)
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> count;
  std::string concept_label;   // kConcept only
  std::string source_summary;  // "<model>@<profile digest>"

  bool operator==(const PruneSpec&) const = default;
};

struct SelectOptions {
  std::optional<std::size_t> count;   // equal-count truncation or random sample size
  std::optional<std::uint64_t> seed;  // kRandom
  std::string concept_label;          // kConcept
  std::vector<HeadId> heads;          // kExplicit
  std::string name;                   // defaults to the strategy name
  std::string model_name;
};

// Digest of the profile set (heads, labels, scores) used to tie prune specs to
// the profiles they were built from.
std::string profile_digest(std::span<const HeadProfile> profiles);

// Resolves a strategy against a full window's profiles.
//   kHighCcs  every High head (ccs == k)
//   kLowCcs   every Low head (ccs <= 1 for k = 5)
//   kRandom   `count` heads drawn uniformly with `seed` from the non-High heads
//   kConcept  High heads whose label equals concept_label
//   kExplicit the caller's heads, validated against the profiled window
// With a count, High/Low pools are ranked (ccs, then first-span variance
// descending, then (layer, head)) and truncated; High ranks by ccs descending
// and Low ascending. Throws MetricError for missing arguments, counts larger
// than the pool, unknown labels, or heads outside the window.
PruneSpec select_heads(std::span<const HeadProfile> profiles, PruneStrategy strategy, const SelectOptions& options = {});

enum class Ablation { kZero, kMean };

// total - sum of the spec's head contributions (kMean subtracts each head's
// deviation from its dataset mean instead). The bundle is not modified.
// Throws InvariantError for heads outside the window.
Eigen::MatrixXd pruned_representations(const Bundle& bundle, const PruneSpec& spec, Ablation ablation = Ablation::kZero);

// Removes `heads` from already-computed representations.
Eigen::MatrixXd prune_further(const Bundle& bundle, const Eigen::MatrixXd& representations,
                              std::span<const HeadId> heads, Ablation ablation = Ablation::kZero);

nlohmann::json prune_spec_to_json(const PruneSpec& spec);
PruneSpec prune_spec_from_json(const nlohmann::json& doc);

}  // namespace headlens
