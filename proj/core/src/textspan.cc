#include "headlens/textspan.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "headlens/errors.h"

namespace headlens {

TextSpanResult textspan(const Eigen::Ref<const Eigen::MatrixXd>& contributions,
                        const Eigen::Ref<const Eigen::MatrixXd>& candidates, std::size_t k,
                        DeflationTrace* trace) {
  const auto n = contributions.rows();
  const auto m = static_cast<std::size_t>(candidates.rows());
  if (contributions.cols() != candidates.cols()) {
    throw TextSpanError(TextSpanError::Kind::kShapeMismatch, "contributions and candidates differ in width");
  }
  if (k > m) {
    throw TextSpanError(TextSpanError::Kind::kTooFewCandidates,
                        "requested " + std::to_string(k) + " spans from " + std::to_string(m) + " candidates");
  }
  if (n < 2) throw TextSpanError(TextSpanError::Kind::kTooFewImages, "textspan needs at least 2 images");

  Eigen::MatrixXd centered = contributions.rowwise() - contributions.colwise().mean();
  const double scale = contributions.cwiseAbs().maxCoeff();
  if (centered.cwiseAbs().maxCoeff() <= 1e-12 * (scale > 0.0 ? scale : 1.0)) {
    throw TextSpanError(TextSpanError::Kind::kDegenerateInput, "contributions have zero variance across images");
  }

  const double initial_norm = centered.norm();

  // Candidates as columns so deflation is a rank-one update.
  Eigen::MatrixXd dirs = candidates.transpose();
  std::vector<bool> alive(m, true);

  TextSpanResult result;
  result.k = k;
  for (std::size_t round = 0; round < k; ++round) {
    // Only live columns matter; dead ones are left stale.
    const Eigen::MatrixXd projections = centered * dirs;
    const Eigen::RowVectorXd scores = projections.colwise().squaredNorm();
    std::size_t best = m;
    for (std::size_t c = 0; c < m; ++c) {
      if (alive[c] && (best == m || scores(static_cast<Eigen::Index>(c)) > scores(static_cast<Eigen::Index>(best)))) {
        best = c;
      }
    }
    if (best == m) {
      throw TextSpanError(TextSpanError::Kind::kExhausted,
                          "candidates exhausted after " + std::to_string(round) + " of " + std::to_string(k) +
                              " selections",
                          round);
    }
    const auto best_col = static_cast<Eigen::Index>(best);
    result.selections.push_back({best, scores(best_col) / static_cast<double>(n)});
    alive[best] = false;

    const Eigen::VectorXd u = dirs.col(best_col).normalized();
    centered -= (centered * u) * u.transpose();
    double candidate_leak = 0.0;
    std::size_t dropped = 0;
    for (std::size_t c = 0; c < m; ++c) {
      if (!alive[c]) continue;
      auto col = dirs.col(static_cast<Eigen::Index>(c));
      // Two Gram-Schmidt passes keep the residual orthogonal to machine precision.
      col -= u.dot(col) * u;
      col -= u.dot(col) * u;
      const double norm = col.norm();
      if (norm < kCandidateDropNorm) {
        alive[c] = false;
        ++dropped;
      } else {
        col /= norm;
        if (trace) candidate_leak = std::max(candidate_leak, std::abs(u.dot(col)));
      }
    }
    if (trace) {
      trace->matrix_leak.push_back((centered * u).norm() / initial_norm);
      trace->candidate_leak.push_back(candidate_leak);
      trace->dropped.push_back(dropped);
    }
  }
  return result;
}

std::vector<TextSpanResult> describe_all_heads(const Bundle& bundle, std::size_t k, unsigned threads) {
  const auto heads = bundle.manifest().window_heads();
  const Eigen::MatrixXd candidates = bundle.candidates().cast<double>();
  std::vector<TextSpanResult> results(heads.size());
  std::vector<std::exception_ptr> errors(heads.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < heads.size(); i = next++) {
      try {
        results[i] = textspan(bundle.contribution(heads[i]).cast<double>(), candidates, k);
        results[i].head = heads[i];
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(heads.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < workers; ++t) pool.emplace_back(worker);
    worker();
  }

  // Report the first failing head in window order, regardless of scheduling.
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const TextSpanError& e) {
      throw TextSpanError(e.kind(), to_string(heads[i]) + ": " + e.what(), e.selected());
    }
  }
  return results;
}

nlohmann::json textspan_to_json(const TextSpanResult& result, const Manifest& manifest) {
  nlohmann::json selections = nlohmann::json::array();
  for (const auto& s : result.selections) {
    const auto& span = manifest.candidate_span_ids.at(s.candidate);
    selections.push_back({{"span_id", span.id}, {"text", span.text}, {"variance", s.explained_variance}});
  }
  return {{"layer", result.head.layer}, {"head", result.head.head}, {"selections", selections}};
}

}  // namespace headlens
