#include "headlens/metrics.h"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

namespace headlens {

using nlohmann::json;

namespace {

Eigen::MatrixXd normalized_rows(const Eigen::MatrixXd& m, const char* what, std::span<const std::string> ids = {}) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    if (!(norm > 0.0)) {
      const auto i = static_cast<std::size_t>(r);
      const std::string name = i < ids.size() ? "'" + ids[i] + "'" : std::to_string(i);
      throw MetricError(std::string("zero-norm ") + what + " " + name);
    }
    out.row(r) /= norm;
  }
  return out;
}

// Indices sorted by descending score, ties by ascending index.
std::vector<std::size_t> rank_descending(const Eigen::VectorXd& scores) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });
  return order;
}

}  // namespace

std::vector<std::size_t> zero_shot_classify(const Eigen::MatrixXd& representations, const Eigen::MatrixXd& prototypes,
                                            std::span<const std::string> image_ids) {
  if (representations.cols() != prototypes.cols()) throw MetricError("representation and prototype widths differ");
  if (prototypes.rows() == 0) throw MetricError("no class prototypes");
  const Eigen::MatrixXd reps = normalized_rows(representations, "image representation", image_ids);
  const Eigen::MatrixXd protos = normalized_rows(prototypes, "class prototype");
  const Eigen::MatrixXd cosine = reps * protos.transpose();
  std::vector<std::size_t> predictions(static_cast<std::size_t>(cosine.rows()));
  for (Eigen::Index i = 0; i < cosine.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < cosine.cols(); ++c) {
      if (cosine(i, c) > cosine(i, best)) best = c;
    }
    predictions[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return predictions;
}

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) throw MetricError("accuracy: predictions and labels differ in length");
  if (predictions.empty()) throw MetricError("accuracy: no predictions");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double retrieval_recall_at_k(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& gallery,
                             std::span<const RelevancePair> ground_truth, std::size_t k) {
  if (k == 0) throw MetricError("recall@k needs k >= 1");
  if (queries.cols() != gallery.cols()) throw MetricError("query and gallery widths differ");
  const auto num_queries = static_cast<std::size_t>(queries.rows());
  std::vector<std::set<std::size_t>> truth(num_queries);
  for (const auto& pair : ground_truth) {
    if (pair.query >= num_queries || pair.item >= static_cast<std::size_t>(gallery.rows())) {
      throw MetricError("ground-truth pair out of range");
    }
    truth[pair.query].insert(pair.item);
  }
  for (std::size_t q = 0; q < num_queries; ++q) {
    if (truth[q].empty()) throw MetricError("query " + std::to_string(q) + " has no ground truth");
  }
  if (num_queries == 0) throw MetricError("no queries");

  const Eigen::MatrixXd qn = normalized_rows(queries, "query");
  const Eigen::MatrixXd gn = normalized_rows(gallery, "gallery item");
  const Eigen::MatrixXd cosine = qn * gn.transpose();
  std::size_t hits = 0;
  for (std::size_t q = 0; q < num_queries; ++q) {
    const auto order = rank_descending(cosine.row(static_cast<Eigen::Index>(q)).transpose());
    const auto top = std::min(k, order.size());
    hits += std::any_of(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top),
                        [&](std::size_t item) { return truth[q].count(item) > 0; });
  }
  return static_cast<double>(hits) / static_cast<double>(num_queries);
}

SkewResult max_skew(const RankedAttributes& ranked, std::size_t k) {
  if (k == 0 || k > ranked.values.size()) {
    throw MetricError("MaxSkew cutoff " + std::to_string(k) + " outside [1, " + std::to_string(ranked.values.size()) + "]");
  }
  std::map<std::string, double> desired = ranked.desired;
  if (desired.empty()) {
    const std::set<std::string> observed(ranked.values.begin(), ranked.values.end());
    for (const auto& v : observed) desired[v] = 1.0 / static_cast<double>(observed.size());
  } else {
    double total = 0.0;
    for (const auto& [_, p] : desired) {
      if (p < 0.0) throw MetricError("desired distribution has a negative share");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw MetricError("desired distribution does not sum to 1");
  }

  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < k; ++i) ++counts[ranked.values[i]];
  for (const auto& [value, _] : counts) {
    const auto it = desired.find(value);
    if (it == desired.end() || it->second <= 0.0) {
      throw MetricError("attribute value '" + value + "' appears in the top " + std::to_string(k) +
                        " but has zero desired share");
    }
  }

  SkewResult result;
  bool first = true;
  for (const auto& [value, p_desired] : desired) {
    if (p_desired <= 0.0) continue;
    const auto it = counts.find(value);
    const double count = it == counts.end() ? 0.0 : static_cast<double>(it->second);
    const double p_obs = std::clamp(count / static_cast<double>(k), kSkewFloor, 1.0);
    const double skew = std::log(p_obs / p_desired);
    result.per_value[value] = skew;
    if (first || skew > result.max_skew) result.max_skew = skew;
    first = false;
  }
  return result;
}

SkewSuiteResult occupation_skew_suite(const Eigen::MatrixXd& image_representations,
                                      std::span<const std::string> image_ids, const Eigen::MatrixXd& prompt_embeddings,
                                      std::span<const std::string> prompt_occupations, const AttributeTable& attributes,
                                      std::span<const std::string> attribute_names, std::size_t k) {
  if (static_cast<std::size_t>(image_representations.rows()) != image_ids.size()) {
    throw MetricError("image ids do not match representation rows");
  }
  if (static_cast<std::size_t>(prompt_embeddings.rows()) != prompt_occupations.size()) {
    throw MetricError("prompt labels do not match prompt embedding rows");
  }
  if (prompt_occupations.empty()) throw MetricError("missing prompt embeddings");
  if (attribute_names.empty()) throw MetricError("no attributes to audit");

  // Gallery attribute columns, checked up front so every image is covered.
  std::map<std::string, std::vector<std::string>> columns;
  for (const auto& attr : attribute_names) {
    auto& col = columns[attr];
    for (const auto& id : image_ids) col.push_back(attributes.value(id, attr));
  }

  const Eigen::MatrixXd reps = normalized_rows(image_representations, "image representation", image_ids);
  const Eigen::MatrixXd prompts = normalized_rows(prompt_embeddings, "prompt embedding");
  const Eigen::MatrixXd cosine = reps * prompts.transpose();  // N x P

  SkewSuiteResult out;
  out.prompts = prompt_occupations.size();
  std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> per_occ;
  for (Eigen::Index p = 0; p < cosine.cols(); ++p) {
    const auto order = rank_descending(cosine.col(p));
    for (const auto& [attr, col] : columns) {
      RankedAttributes ranked;
      ranked.values.reserve(order.size());
      for (const auto i : order) ranked.values.push_back(col[i]);
      const double skew = max_skew(ranked, k).max_skew;
      out.mean_max_skew[attr] += skew;
      auto& acc = per_occ[attr][prompt_occupations[static_cast<std::size_t>(p)]];
      acc.first += skew;
      acc.second += 1;
    }
  }
  for (auto& [attr, total] : out.mean_max_skew) total /= static_cast<double>(out.prompts);
  for (const auto& [attr, occs] : per_occ) {
    for (const auto& [occ, acc] : occs) out.per_occupation[attr][occ] = acc.first / static_cast<double>(acc.second);
  }
  return out;
}

SkewSuiteResult occupation_skew_suite(const Bundle& bundle, const std::string& prompt_set,
                                      std::span<const std::string> attribute_names, std::size_t k,
                                      const PruneSpec& prune_spec, Ablation ablation) {
  const auto& manifest = bundle.manifest();
  const auto it = manifest.class_prompt_sets.find(prompt_set);
  if (it == manifest.class_prompt_sets.end()) throw MetricError("missing prompt embeddings for set '" + prompt_set + "'");
  std::vector<std::string> occupations;
  for (const auto& p : it->second.prompts) occupations.push_back(p.label);
  const Eigen::MatrixXd prompts = bundle.prompt_embeddings(prompt_set).cast<double>();
  const Eigen::MatrixXd reps = pruned_representations(bundle, prune_spec, ablation);
  return occupation_skew_suite(reps, manifest.image_ids, prompts, occupations, bundle.attributes(), attribute_names, k);
}

// ---------------------------------------------------------------------------
// Agreement

double detail::kappa_from_table(const std::vector<std::vector<double>>& table, std::size_t n) {
  const double total = static_cast<double>(n);
  double observed = 0.0;
  double expected = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    observed += table[i][i];
    double row = 0.0;
    double col = 0.0;
    for (std::size_t j = 0; j < table.size(); ++j) {
      row += table[i][j];
      col += table[j][i];
    }
    expected += (row / total) * (col / total);
  }
  observed /= total;
  if (std::abs(1.0 - expected) < 1e-15) throw MetricError("cohen_kappa undefined: chance agreement is 1");
  return (observed - expected) / (1.0 - expected);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, const char* name) {
  if (x.size() != y.size()) throw MetricError(std::string(name) + ": inputs differ in length");
  if (x.size() < 2) throw MetricError(std::string(name) + ": need at least 2 items");
}

// Tied pairs among consecutive equal runs of a sorted sequence.
template <typename Eq>
double tied_pairs(std::size_t n, Eq&& equal_to_previous) {
  double ties = 0.0;
  double run = 1.0;
  for (std::size_t i = 1; i < n; ++i) {
    if (equal_to_previous(i)) {
      run += 1.0;
    } else {
      ties += run * (run - 1.0) / 2.0;
      run = 1.0;
    }
  }
  return ties + run * (run - 1.0) / 2.0;
}

// Sorts `v` ascending and returns the number of inversions removed.
double merge_count(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0.0;
  const std::size_t mid = lo + (hi - lo) / 2;
  double swaps = merge_count(v, scratch, lo, mid) + merge_count(v, scratch, mid, hi);
  std::size_t i = lo, j = mid, out = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<double>(mid - i);
      scratch[out++] = v[j++];
    } else {
      scratch[out++] = v[i++];
    }
  }
  while (i < mid) scratch[out++] = v[i++];
  while (j < hi) scratch[out++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "spearman_rho");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mean = (static_cast<double>(x.size()) + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) throw MetricError("spearman_rho: zero rank variance");
  return sxy / std::sqrt(sxx * syy);
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "kendall_tau");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
  });

  const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double x_ties = tied_pairs(n, [&](std::size_t i) { return x[order[i]] == x[order[i - 1]]; });
  const double joint_ties = tied_pairs(n, [&](std::size_t i) {
    return x[order[i]] == x[order[i - 1]] && y[order[i]] == y[order[i - 1]];
  });

  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  std::vector<double> scratch(n);
  const double swaps = merge_count(ys, scratch, 0, n);
  const double y_ties = tied_pairs(n, [&](std::size_t i) { return ys[i] == ys[i - 1]; });

  const double denom = (n0 - x_ties) * (n0 - y_ties);
  if (denom <= 0.0) throw MetricError("kendall_tau: one side is entirely tied");
  const double concordant_minus_discordant = n0 - x_ties - y_ties + joint_ties - 2.0 * swaps;
  return concordant_minus_discordant / std::sqrt(denom);
}

// ---------------------------------------------------------------------------
// Reports

json eval_report_to_json(const EvalReport& r) {
  json breakdown = json::array();
  for (const auto& [key, value] : r.breakdown) breakdown.push_back({{"key", key}, {"value", value}});
  json doc = {{"model", r.model},   {"prune_spec", r.prune_spec}, {"dataset", r.dataset},
              {"metric", r.metric}, {"value", r.value},           {"breakdown", breakdown}};
  doc["k"] = r.k ? json(*r.k) : json(nullptr);
  return doc;
}

EvalReport eval_report_from_json(const json& doc) {
  EvalReport r;
  try {
    r.model = doc.at("model").get<std::string>();
    r.prune_spec = doc.at("prune_spec").get<std::string>();
    r.dataset = doc.at("dataset").get<std::string>();
    r.metric = doc.at("metric").get<std::string>();
    r.value = doc.at("value").get<double>();
    if (!doc.at("k").is_null()) r.k = doc.at("k").get<std::size_t>();
    for (const auto& b : doc.at("breakdown")) r.breakdown.emplace_back(b.at("key").get<std::string>(), b.at("value").get<double>());
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kBadManifest, std::string("eval report: ") + e.what());
  }
  return r;
}

std::string eval_grid_csv(std::span<const EvalReport> reports, std::span<const std::string> columns) {
  using RowKey = std::tuple<std::string, std::string, std::string>;
  std::vector<RowKey> rows;
  std::map<RowKey, std::map<std::string, double>> cells;
  for (const auto& r : reports) {
    const RowKey key{r.dataset, r.metric, r.k ? std::to_string(*r.k) : std::string()};
    if (!cells.count(key)) rows.push_back(key);
    cells[key][r.prune_spec] = r.value;
  }
  std::ostringstream os;
  os.precision(10);
  os << "dataset,metric,k";
  for (const auto& c : columns) os << ',' << c;
  os << '\n';
  for (const auto& key : rows) {
    os << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key);
    for (const auto& c : columns) {
      os << ',';
      const auto it = cells[key].find(c);
      if (it != cells[key].end()) os << it->second;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace headlens
