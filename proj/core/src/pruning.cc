#include "headlens/pruning.h"

#include <algorithm>
#include <set>

#include "headlens/digest.h"
#include "headlens/errors.h"
#include "headlens/sampling.h"

namespace headlens {

using nlohmann::json;

std::string_view strategy_name(PruneStrategy strategy) {
  switch (strategy) {
    case PruneStrategy::kHighCcs:
      return "high_ccs";
    case PruneStrategy::kLowCcs:
      return "low_ccs";
    case PruneStrategy::kRandom:
      return "random";
    case PruneStrategy::kConcept:
      return "concept";
    case PruneStrategy::kExplicit:
      return "explicit";
  }
  return "explicit";
}

PruneStrategy parse_strategy(std::string_view name) {
  const auto key = normalize_label(name);
  for (const auto s : {PruneStrategy::kHighCcs, PruneStrategy::kLowCcs, PruneStrategy::kRandom, PruneStrategy::kConcept,
                       PruneStrategy::kExplicit}) {
    if (key == strategy_name(s)) return s;
  }
  throw ConfigError("unknown prune strategy '" + std::string(name) + "'");
}

std::string profile_digest(std::span<const HeadProfile> profiles) {
  std::vector<const HeadProfile*> ordered;
  for (const auto& p : profiles) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->head < b->head; });
  std::string canonical;
  for (const auto* p : ordered) {
    canonical += to_string(p->head) + '|' + p->concept_label + '|' + std::to_string(p->ccs) + '|';
    for (const auto& id : p->span_ids) canonical += id + ',';
    canonical += '\n';
  }
  return hex_digest(canonical);
}

namespace {

int span_count(std::span<const HeadProfile> profiles) {
  int k = 0;
  for (const auto& p : profiles) k = std::max(k, static_cast<int>(p.spans.size()));
  return k == 0 ? kDefaultSpanCount : k;
}

std::vector<HeadId> ranked_truncate(std::vector<const HeadProfile*> pool, std::optional<std::size_t> count,
                                    bool high_first) {
  if (count) {
    if (*count > pool.size()) {
      throw MetricError("requested " + std::to_string(*count) + " heads from a pool of " + std::to_string(pool.size()));
    }
    std::sort(pool.begin(), pool.end(), [high_first](const HeadProfile* a, const HeadProfile* b) {
      if (a->ccs != b->ccs) return high_first ? a->ccs > b->ccs : a->ccs < b->ccs;
      if (a->lead_variance() != b->lead_variance()) return a->lead_variance() > b->lead_variance();
      return a->head < b->head;
    });
    pool.resize(*count);
  }
  std::vector<HeadId> heads;
  for (const auto* p : pool) heads.push_back(p->head);
  return heads;
}

}  // namespace

PruneSpec select_heads(std::span<const HeadProfile> profiles, PruneStrategy strategy, const SelectOptions& options) {
  if (profiles.empty()) throw MetricError("no head profiles to select from");
  const int k = span_count(profiles);

  PruneSpec spec;
  spec.strategy = strategy;
  spec.name = options.name.empty() ? std::string(strategy_name(strategy)) : options.name;
  spec.count = options.count;
  spec.source_summary = options.model_name + "@" + profile_digest(profiles);

  std::vector<const HeadProfile*> ordered;
  std::set<HeadId> window;
  for (const auto& p : profiles) {
    ordered.push_back(&p);
    window.insert(p.head);
  }
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->head < b->head; });

  auto band_of = [k](const HeadProfile* p) { return categorize(p->ccs, k); };
  std::vector<const HeadProfile*> pool;
  switch (strategy) {
    case PruneStrategy::kHighCcs:
      for (const auto* p : ordered) {
        if (band_of(p) == Band::kHigh) pool.push_back(p);
      }
      spec.heads = ranked_truncate(pool, options.count, true);
      break;
    case PruneStrategy::kLowCcs:
      for (const auto* p : ordered) {
        if (band_of(p) == Band::kLow) pool.push_back(p);
      }
      spec.heads = ranked_truncate(pool, options.count, false);
      break;
    case PruneStrategy::kRandom: {
      if (!options.count || !options.seed) throw MetricError("random pruning needs both a count and a seed");
      for (const auto* p : ordered) {
        if (band_of(p) != Band::kHigh) pool.push_back(p);
      }
      spec.seed = options.seed;
      for (const auto i : sample_without_replacement(pool.size(), *options.count, *options.seed)) {
        spec.heads.push_back(pool[i]->head);
      }
      break;
    }
    case PruneStrategy::kConcept: {
      if (normalize_label(options.concept_label).empty()) throw MetricError("concept pruning needs a concept label");
      spec.concept_label = options.concept_label;
      for (const auto* p : ordered) {
        if (band_of(p) == Band::kHigh && normalize_label(p->concept_label) == normalize_label(options.concept_label)) {
          pool.push_back(p);
        }
      }
      if (pool.empty()) throw MetricError("no High-band head is labeled '" + options.concept_label + "'");
      spec.heads = ranked_truncate(pool, options.count, true);
      break;
    }
    case PruneStrategy::kExplicit: {
      std::set<HeadId> seen;
      for (const auto h : options.heads) {
        if (!window.count(h)) throw MetricError("head " + to_string(h) + " is not in the profiled window");
        if (!seen.insert(h).second) throw MetricError("head " + to_string(h) + " listed twice");
        spec.heads.push_back(h);
      }
      break;
    }
  }
  std::sort(spec.heads.begin(), spec.heads.end());
  return spec;
}

Eigen::MatrixXd prune_further(const Bundle& bundle, const Eigen::MatrixXd& representations,
                              std::span<const HeadId> heads, Ablation ablation) {
  Eigen::MatrixXd out = representations;
  std::vector<HeadId> ordered(heads.begin(), heads.end());
  std::sort(ordered.begin(), ordered.end());
  for (const auto h : ordered) {
    if (!bundle.manifest().in_window(h)) throw InvariantError("head " + to_string(h) + " is outside the analysis window");
    const Eigen::MatrixXd contrib = bundle.contribution(h).cast<double>();
    if (ablation == Ablation::kMean) {
      out -= contrib.rowwise() - contrib.colwise().mean();
    } else {
      out -= contrib;
    }
  }
  return out;
}

Eigen::MatrixXd pruned_representations(const Bundle& bundle, const PruneSpec& spec, Ablation ablation) {
  return prune_further(bundle, bundle.total().cast<double>(), spec.heads, ablation);
}

json prune_spec_to_json(const PruneSpec& spec) {
  json heads = json::array();
  for (const auto h : spec.heads) heads.push_back(to_string(h));
  json doc = {{"name", spec.name},
              {"strategy", strategy_name(spec.strategy)},
              {"heads", heads},
              {"source_summary", spec.source_summary}};
  doc["seed"] = spec.seed ? json(*spec.seed) : json(nullptr);
  doc["count"] = spec.count ? json(*spec.count) : json(nullptr);
  if (spec.strategy == PruneStrategy::kConcept) doc["concept"] = spec.concept_label;
  return doc;
}

PruneSpec prune_spec_from_json(const json& doc) {
  PruneSpec spec;
  try {
    spec.name = doc.at("name").get<std::string>();
    spec.strategy = parse_strategy(doc.at("strategy").get<std::string>());
    for (const auto& h : doc.at("heads")) spec.heads.push_back(parse_head_id(h.get<std::string>()));
    if (doc.contains("seed") && !doc["seed"].is_null()) spec.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("count") && !doc["count"].is_null()) spec.count = doc["count"].get<std::size_t>();
    spec.concept_label = doc.value("concept", "");
    spec.source_summary = doc.value("source_summary", "");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("prune spec: ") + e.what());
  }
  std::sort(spec.heads.begin(), spec.heads.end());
  return spec;
}

}  // namespace headlens
