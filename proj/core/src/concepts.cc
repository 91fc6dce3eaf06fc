#include "headlens/concepts.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "headlens/errors.h"

namespace headlens {

using nlohmann::json;

std::string_view band_name(Band band) {
  switch (band) {
    case Band::kHigh:
      return "High";
    case Band::kModerate:
      return "Moderate";
    case Band::kLow:
      return "Low";
    case Band::kUncategorized:
      return "Uncategorized";
  }
  return "Uncategorized";
}

Band parse_band(std::string_view name) {
  for (const auto b : {Band::kHigh, Band::kModerate, Band::kLow, Band::kUncategorized}) {
    if (normalize_label(name) == normalize_label(band_name(b))) return b;
  }
  throw FormatError(FormatError::Kind::kBadManifest, "unknown band '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Labeling

std::string LexiconLabeler::label(std::span<const std::string> spans, std::span<const Exemplar>) {
  std::string best;
  std::size_t best_count = 0;
  for (const auto& concept_label : lexicon_->concepts()) {  // sorted, so the first maximum wins ties
    std::size_t count = 0;
    for (const auto& span : spans) count += lexicon_->first_match(span, concept_label).has_value();
    if (best.empty() || count > best_count) {
      best = concept_label;
      best_count = count;
    }
  }
  if (best.empty()) throw JudgeError(JudgeError::Kind::kConfig, "lexicon labeler has an empty lexicon");
  return best;
}

std::string render_label_prompt(std::span<const std::string> spans, std::span<const Exemplar> exemplars) {
  std::ostringstream os;
  os << "Each group of image descriptions below shares one dominant property. "
        "Give a short concept label (one or two words) for the last group.\n\n";
  auto group = [&os](std::span<const std::string> items) {
    os << "Descriptions:\n";
    for (const auto& s : items) os << "- " << s << '\n';
  };
  for (const auto& ex : exemplars) {
    group(ex.spans);
    os << "Label: " << ex.label << "\n\n";
  }
  group(spans);
  os << "Label:";
  return os.str();
}

std::string RemoteLabeler::label(std::span<const std::string> spans, std::span<const Exemplar> exemplars) {
  if (exemplars.size() < kMinExemplars) {
    throw JudgeError(JudgeError::Kind::kConfig, "in-context labeling needs at least " + std::to_string(kMinExemplars) +
                                                    " exemplars, got " + std::to_string(exemplars.size()));
  }
  const auto reply = complete(endpoint_, render_label_prompt(spans, exemplars));
  std::istringstream lines(reply);
  std::string line;
  while (std::getline(lines, line)) {
    auto trimmed = line;
    if (trimmed.rfind("Label:", 0) == 0) trimmed = trimmed.substr(6);
    trimmed.erase(std::remove(trimmed.begin(), trimmed.end(), '"'), trimmed.end());
    const auto first = trimmed.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = trimmed.find_last_not_of(" \t\r.");
    return trimmed.substr(first, last - first + 1);
  }
  throw JudgeError(JudgeError::Kind::kUnparseable, "labeler '" + endpoint_.id + "' returned no label");
}

std::string assign_label(std::span<const std::string> spans, std::span<const Exemplar> exemplars, Labeler& labeler) {
  if (spans.empty()) throw MetricError("cannot label a head with no spans");
  auto label = labeler.label(spans, exemplars);
  if (normalize_label(label).empty()) throw JudgeError(JudgeError::Kind::kUnparseable, "labeler returned an empty label");
  return label;
}

// ---------------------------------------------------------------------------
// Scores

int ccs(std::span<const ConsensusVerdict> verdicts, std::size_t k) {
  if (verdicts.size() != k) {
    throw MetricError("ccs expects " + std::to_string(k) + " verdicts, got " + std::to_string(verdicts.size()));
  }
  return static_cast<int>(std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.consistent; }));
}

Band categorize(int ccs_value, int k) {
  if (k < 1) throw MetricError("span count must be positive");
  if (ccs_value < 0 || ccs_value > k) {
    throw MetricError("ccs " + std::to_string(ccs_value) + " outside [0, " + std::to_string(k) + "]");
  }
  if (ccs_value == k) return Band::kHigh;
  if (5 * ccs_value <= k) return Band::kLow;
  if (ccs_value == (6 * k + 5) / 10) return Band::kModerate;
  return Band::kUncategorized;
}

namespace {

void check_coverage(std::span<const HeadProfile> profiles, std::size_t expected_heads) {
  if (profiles.empty()) throw MetricError("no head profiles");
  std::set<HeadId> heads;
  for (const auto& p : profiles) {
    if (!heads.insert(p.head).second) throw MetricError("duplicate profile for head " + to_string(p.head));
  }
  if (heads.size() != expected_heads) {
    throw MetricError("profiles cover " + std::to_string(heads.size()) + " heads, expected " +
                      std::to_string(expected_heads));
  }
}

}  // namespace

double ccs_at_k(std::span<const HeadProfile> profiles, int k_value, std::size_t expected_heads) {
  check_coverage(profiles, expected_heads);
  const auto hits = std::count_if(profiles.begin(), profiles.end(), [&](const auto& p) { return p.ccs == k_value; });
  return static_cast<double>(hits) / static_cast<double>(expected_heads);
}

double ccr(std::span<const HeadProfile> profiles) {
  std::map<std::string, std::size_t> per_concept;
  std::size_t high = 0;
  for (const auto& p : profiles) {
    if (p.band != Band::kHigh) continue;
    ++high;
    ++per_concept[normalize_label(p.concept_label)];
  }
  if (high == 0) throw MetricError("CCR is undefined without High-band heads");
  const auto multi = std::count_if(per_concept.begin(), per_concept.end(), [](const auto& e) { return e.second >= 2; });
  return static_cast<double>(multi) / static_cast<double>(high);
}

ModelSummary summarize(const std::string& model_name, std::span<const HeadProfile> profiles, std::size_t expected_heads,
                       int k) {
  check_coverage(profiles, expected_heads);
  ModelSummary s;
  s.model_name = model_name;
  s.heads = expected_heads;
  s.k = k;
  for (int v = 0; v <= k; ++v) s.ccs_at[v] = ccs_at_k(profiles, v, expected_heads);
  for (const auto b : {Band::kHigh, Band::kModerate, Band::kLow, Band::kUncategorized}) s.counts[b] = 0;
  for (const auto& p : profiles) ++s.counts[categorize(p.ccs, k)];
  if (s.counts[Band::kHigh] > 0) s.ccr = ccr(profiles);
  return s;
}

std::map<Band, std::size_t> band_counts_from_distribution(const std::map<int, double>& ccs_at, std::size_t heads,
                                                          int k) {
  std::map<Band, double> mass;
  for (const auto& [value, fraction] : ccs_at) mass[categorize(value, k)] += fraction;
  std::map<Band, std::size_t> counts;
  for (const auto b : {Band::kHigh, Band::kModerate, Band::kLow, Band::kUncategorized}) {
    counts[b] = static_cast<std::size_t>(std::llround(mass[b] * static_cast<double>(heads)));
  }
  return counts;
}

// ---------------------------------------------------------------------------

HeadProfile profile_head(const TextSpanResult& spans, const Manifest& manifest, Labeler& labeler,
                         std::span<const Exemplar> exemplars, std::span<Judge* const> judges, VerdictCache* cache) {
  HeadProfile p;
  p.head = spans.head;
  for (const auto& s : spans.selections) {
    const auto& candidate = manifest.candidate_span_ids.at(s.candidate);
    p.span_ids.push_back(candidate.id);
    p.spans.push_back(candidate.text);
    p.variances.push_back(s.explained_variance);
  }
  p.concept_label = assign_label(p.spans, exemplars, labeler);
  for (std::size_t i = 0; i < p.spans.size(); ++i) {
    p.consensus.push_back(consensus(p.span_ids[i], p.spans[i], p.concept_label, judges, cache));
  }
  p.ccs = ccs(p.consensus, p.spans.size());
  p.band = categorize(p.ccs, static_cast<int>(p.spans.size()));
  return p;
}

json profile_to_json(const HeadProfile& p) {
  json spans = json::array();
  for (std::size_t i = 0; i < p.spans.size(); ++i) {
    spans.push_back({{"span_id", p.span_ids.at(i)}, {"text", p.spans[i]}, {"variance", p.variances.at(i)}});
  }
  json verdicts = json::array();
  for (const auto& c : p.consensus) verdicts.push_back(consensus_to_json(c));
  return {{"head", to_string(p.head)},
          {"layer", p.head.layer},
          {"head_index", p.head.head},
          {"spans", spans},
          {"concept", p.concept_label},
          {"consensus", verdicts},
          {"ccs", p.ccs},
          {"band", band_name(p.band)}};
}

HeadProfile profile_from_json(const json& doc) {
  HeadProfile p;
  try {
    p.head = parse_head_id(doc.at("head").get<std::string>());
    for (const auto& s : doc.at("spans")) {
      p.span_ids.push_back(s.at("span_id").get<std::string>());
      p.spans.push_back(s.at("text").get<std::string>());
      p.variances.push_back(s.at("variance").get<double>());
    }
    p.concept_label = doc.at("concept").get<std::string>();
    for (const auto& c : doc.at("consensus")) p.consensus.push_back(consensus_from_json(c));
    p.ccs = doc.at("ccs").get<int>();
    p.band = parse_band(doc.at("band").get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kBadManifest, std::string("head profile: ") + e.what());
  }
  return p;
}

json summary_to_json(const ModelSummary& s) {
  json ccs_at = json::object();
  for (const auto& [k, v] : s.ccs_at) ccs_at["CCS@" + std::to_string(k)] = v;
  json counts = json::object();
  for (const auto& [b, c] : s.counts) counts[std::string(band_name(b))] = c;
  json doc = {{"model_name", s.model_name}, {"H", s.heads}, {"k", s.k}, {"ccs_at", ccs_at}, {"counts", counts}};
  doc["ccr"] = s.ccr ? json(*s.ccr) : json(nullptr);
  return doc;
}

std::string summary_csv_header(int k) {
  std::ostringstream os;
  os << "model,H";
  for (int v = 0; v <= k; ++v) os << ",CCS@" << v;
  os << ",High,Moderate,Low,Uncategorized,CCR";
  return os.str();
}

std::string summary_csv_row(const ModelSummary& s) {
  std::ostringstream os;
  os.precision(6);
  os << s.model_name << ',' << s.heads;
  for (const auto& [_, v] : s.ccs_at) os << ',' << v;
  for (const auto b : {Band::kHigh, Band::kModerate, Band::kLow, Band::kUncategorized}) {
    const auto it = s.counts.find(b);
    os << ',' << (it == s.counts.end() ? 0 : it->second);
  }
  os << ',';
  if (s.ccr) os << *s.ccr;
  return os.str();
}

}  // namespace headlens
