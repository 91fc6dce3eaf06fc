#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "headlens/artifact_store.h"
#include "headlens/endpoint.h"
#include "headlens/head_id.h"
#include "headlens/judge.h"
#include "headlens/lexicon.h"
#include "headlens/textspan.h"

namespace headlens {

inline constexpr int kDefaultSpanCount = 5;

enum class Band { kHigh, kModerate, kLow, kUncategorized };

std::string_view band_name(Band band);
Band parse_band(std::string_view name);

struct HeadProfile {
  HeadId head;
  std::vector<std::string> span_ids;
  std::vector<std::string> spans;
  std::vector<double> variances;
  std::string concept_label;
  std::vector<ConsensusVerdict> consensus;
  int ccs = 0;
  Band band = Band::kLow;

  // Explained variance of the first TextSpan selection; 0 when absent.
  double lead_variance() const { return variances.empty() ? 0.0 : variances.front(); }
};

// A hand-labeled demonstration for in-context labeling.
struct Exemplar {
  std::vector<std::string> spans;
  std::string label;
};

class Labeler {
 public:
  virtual ~Labeler() = default;
  virtual std::string label(std::span<const std::string> spans, std::span<const Exemplar> exemplars) = 0;
};

// Picks the lexicon concept matched by the most spans; ties go to the
// lexicographically smallest concept name.
class LexiconLabeler : public Labeler {
 public:
  explicit LexiconLabeler(std::shared_ptr<const Lexicon> lexicon) : lexicon_(std::move(lexicon)) {}
  std::string label(std::span<const std::string> spans, std::span<const Exemplar> exemplars) override;

 private:
  std::shared_ptr<const Lexicon> lexicon_;
};

inline constexpr std::size_t kMinExemplars = 5;

// Few-shot labeling through a hosted model. Requires at least kMinExemplars
// exemplars; the first non-empty line of the reply is the label.
class RemoteLabeler : public Labeler {
 public:
  explicit RemoteLabeler(EndpointConfig endpoint) : endpoint_(std::move(endpoint)) {}
  std::string label(std::span<const std::string> spans, std::span<const Exemplar> exemplars) override;

 private:
  EndpointConfig endpoint_;
};

std::string render_label_prompt(std::span<const std::string> spans, std::span<const Exemplar> exemplars);

// Throws MetricError for empty spans, JudgeError when the labeler fails or
// returns an empty label.
std::string assign_label(std::span<const std::string> spans, std::span<const Exemplar> exemplars, Labeler& labeler);

// Number of consistent verdicts. Throws MetricError unless verdicts.size() == k.
int ccs(std::span<const ConsensusVerdict> verdicts, std::size_t k = kDefaultSpanCount);

// For k = 5: 5 -> High, 3 -> Moderate, 0-1 -> Low, 2 and 4 -> Uncategorized.
// Other k: High iff ccs == k, Low iff ccs <= k/5, Moderate iff ccs equals
// 3k/5 rounded half up; everything else Uncategorized.
Band categorize(int ccs_value, int k = kDefaultSpanCount);

// Fraction of the `expected_heads` window heads whose ccs equals k_value.
// Throws MetricError when profiles do not cover exactly that many distinct heads.
double ccs_at_k(std::span<const HeadProfile> profiles, int k_value, std::size_t expected_heads);

// Concepts shared by at least two High heads, divided by the number of High
// heads. Labels compare after trimming and case folding. Throws MetricError
// when no head is High.
double ccr(std::span<const HeadProfile> profiles);

struct ModelSummary {
  std::string model_name;
  std::size_t heads = 0;
  int k = kDefaultSpanCount;
  std::map<int, double> ccs_at;
  std::map<Band, std::size_t> counts;
  std::optional<double> ccr;
};

ModelSummary summarize(const std::string& model_name, std::span<const HeadProfile> profiles, std::size_t expected_heads,
                       int k = kDefaultSpanCount);

// Band head counts implied by a CCS@K distribution over `heads` heads, each
// band's summed fraction times `heads` rounded to the nearest integer.
std::map<Band, std::size_t> band_counts_from_distribution(const std::map<int, double>& ccs_at, std::size_t heads,
                                                          int k = kDefaultSpanCount);

// TextSpan descriptions -> label -> three-judge consensus per span -> ccs/band.
HeadProfile profile_head(const TextSpanResult& spans, const Manifest& manifest, Labeler& labeler,
                         std::span<const Exemplar> exemplars, std::span<Judge* const> judges, VerdictCache* cache);

nlohmann::json profile_to_json(const HeadProfile& profile);
HeadProfile profile_from_json(const nlohmann::json& doc);
nlohmann::json summary_to_json(const ModelSummary& summary);

// model,H,CCS@0..CCS@k,High,Moderate,Low,Uncategorized,CCR
std::string summary_csv_header(int k = kDefaultSpanCount);
std::string summary_csv_row(const ModelSummary& summary);

}  // namespace headlens
