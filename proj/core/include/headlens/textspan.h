#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "headlens/artifact_store.h"
#include "headlens/head_id.h"

namespace headlens {

struct SpanSelection {
  std::size_t candidate = 0;        // row index into the candidate matrix
  double explained_variance = 0.0;  // projected variance per image
};

struct TextSpanResult {
  HeadId head;
  std::vector<SpanSelection> selections;
  std::size_t k = 0;
};

inline constexpr double kCandidateDropNorm = 1e-8;

// Per-round leftovers along the direction just removed: ||A u|| for the
// deflated contribution matrix relative to the centered input's ||A||_F, and max |<c, u>| over the surviving
// (unit) candidates. Both should be at rounding level.
struct DeflationTrace {
  std::vector<double> matrix_leak;
  std::vector<double> candidate_leak;
  std::vector<std::size_t> dropped;  // candidates dropped in each round
};

// Greedy text-basis selection for one head.
//
// `contributions` is N x d (one row per image), `candidates` is M x d with
// unit rows. Each round scores every remaining candidate direction c by
// ||A c||^2 on the mean-centered contribution matrix A, records the best one
// (lowest index wins exact ties) with score / N, then projects that direction
// out of A and out of every remaining candidate. Candidates whose residual
// norm falls below kCandidateDropNorm are dropped; the rest are renormalized.
//
// Throws TextSpanError when k > M, N < 2, the contributions have no variance,
// or the candidates run out before k selections.
TextSpanResult textspan(const Eigen::Ref<const Eigen::MatrixXd>& contributions,
                        const Eigen::Ref<const Eigen::MatrixXd>& candidates, std::size_t k,
                        DeflationTrace* trace = nullptr);

// One result per window head, in (layer, head) order. Heads are independent
// and may be processed on `threads` workers; the output does not depend on
// the thread count.
std::vector<TextSpanResult> describe_all_heads(const Bundle& bundle, std::size_t k, unsigned threads = 1);

// {"layer", "head", "selections": [{"span_id", "text", "variance"}]}
nlohmann::json textspan_to_json(const TextSpanResult& result, const Manifest& manifest);

}  // namespace headlens
