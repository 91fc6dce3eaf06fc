#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "headlens/artifact_store.h"
#include "headlens/errors.h"
#include "headlens/pruning.h"

namespace headlens {

// --- zero-shot classification and retrieval -------------------------------

// argmax over classes of cosine(rep_i, prototype_c); ties go to the lowest
// class index. Throws MetricError naming the image when a representation has
// zero norm (image_ids may be empty, in which case the row index is used).
std::vector<std::size_t> zero_shot_classify(const Eigen::MatrixXd& representations, const Eigen::MatrixXd& prototypes,
                                            std::span<const std::string> image_ids = {});

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

struct RelevancePair {
  std::size_t query = 0;
  std::size_t item = 0;
};

// Fraction of queries with at least one ground-truth item among the top k
// gallery items by cosine similarity (ties ranked by lower item index).
// Throws MetricError for queries without ground truth or k == 0.
double retrieval_recall_at_k(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& gallery,
                             std::span<const RelevancePair> ground_truth, std::size_t k);

// --- MaxSkew ----------------------------------------------------------------

inline constexpr double kSkewFloor = 1e-6;

// Attribute values of a ranked gallery, best first. An empty `desired`
// means uniform over the values that occur anywhere in the list.
struct RankedAttributes {
  std::vector<std::string> values;
  std::map<std::string, double> desired;
};

struct SkewResult {
  double max_skew = 0.0;
  std::map<std::string, double> per_value;  // ln(p_observed / p_desired)
};

// p_obs(a) = clamp(count of a in top k / k, kSkewFloor, 1); skew_a =
// ln(p_obs(a) / p_desired(a)) over values with p_desired > 0. Throws
// MetricError for k outside [1, size], a desired distribution not summing to
// 1, or a top-k value whose desired share is 0.
SkewResult max_skew(const RankedAttributes& ranked, std::size_t k);

struct SkewSuiteResult {
  std::size_t prompts = 0;
  std::map<std::string, double> mean_max_skew;                           // attribute -> mean over prompts
  std::map<std::string, std::map<std::string, double>> per_occupation;  // attribute -> occupation -> mean
};

// For each prompt, ranks the gallery by cosine similarity, then averages
// MaxSkew@k of each attribute over prompts.
SkewSuiteResult occupation_skew_suite(const Eigen::MatrixXd& image_representations,
                                      std::span<const std::string> image_ids, const Eigen::MatrixXd& prompt_embeddings,
                                      std::span<const std::string> prompt_occupations, const AttributeTable& attributes,
                                      std::span<const std::string> attribute_names, std::size_t k);

// Same, on the bundle's pruned representations and one of its prompt sets
// (prompt labels are the occupations).
SkewSuiteResult occupation_skew_suite(const Bundle& bundle, const std::string& prompt_set,
                                      std::span<const std::string> attribute_names, std::size_t k,
                                      const PruneSpec& prune_spec, Ablation ablation = Ablation::kZero);

// --- agreement statistics ---------------------------------------------------

namespace detail {
double kappa_from_table(const std::vector<std::vector<double>>& table, std::size_t n);
}

// Cohen's kappa of two raters over categorical labels.
template <typename T>
double cohen_kappa(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw MetricError("cohen_kappa: ratings differ in length");
  if (a.size() < 2) throw MetricError("cohen_kappa: need at least 2 ratings");
  std::map<T, std::size_t> index;
  for (const auto& v : a) index.emplace(v, 0);
  for (const auto& v : b) index.emplace(v, 0);
  std::size_t next = 0;
  for (auto& [_, i] : index) i = next++;
  std::vector<std::vector<double>> table(index.size(), std::vector<double>(index.size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) table[index.at(a[i])][index.at(b[i])] += 1.0;
  return detail::kappa_from_table(table, a.size());
}

template <typename T>
double cohen_kappa(const std::vector<T>& a, const std::vector<T>& b) {
  return cohen_kappa(std::span<const T>(a), std::span<const T>(b));
}

// Ranks starting at 1; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation of average ranks. Throws MetricError for length
// mismatch, fewer than 2 items or zero rank variance.
double spearman_rho(std::span<const double> x, std::span<const double> y);

// Tie-corrected Kendall tau-b, O(n log n). Throws MetricError for length
// mismatch, fewer than 2 items, or when either side is entirely tied.
double kendall_tau(std::span<const double> x, std::span<const double> y);

// --- reports ----------------------------------------------------------------

struct EvalReport {
  std::string model;
  std::string prune_spec;
  std::string dataset;
  std::string metric;
  double value = 0.0;
  std::optional<std::size_t> k;
  std::vector<std::pair<std::string, double>> breakdown;
};

nlohmann::json eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& doc);

// One row per (dataset, metric, k) and one column per prune spec, in the
// given column order: dataset,metric,k,<col1>,<col2>,...
std::string eval_grid_csv(std::span<const EvalReport> reports, std::span<const std::string> columns);

}  // namespace headlens
