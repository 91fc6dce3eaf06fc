// Acceptance checks: one PASS/FAIL line per criterion. Tolerances and time
// budgets are fixed below; the exit status is nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli/experiment.h"
#include "headlens/concepts.h"
#include "headlens/errors.h"
#include "headlens/metrics.h"
#include "headlens/pruning.h"
#include "headlens/textspan.h"
#include "model_reference_data.h"
#include "oracles.h"
#include "reference_profiles.h"
#include "synthetic/synthetic_export.h"
#include "test_support.h"

namespace headlens {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace testing::oracles;

constexpr double kSumTolerance = 1e-9;
constexpr long kCountTolerance = 1;
constexpr double kCcrTolerance = 0.01;
constexpr double kLeakTolerance = 1e-9;
constexpr double kExampleTolerance = 1e-12;
constexpr double kOracleTolerance = 1e-12;
constexpr double kCompositionTolerance = 1e-6;

// Collects failed sub-checks with a short reason.
struct Checks {
  std::vector<std::string> failures;
  std::ostringstream notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol)) {
      std::ostringstream os;
      os << what << ": got " << got << ", want " << want << " +/- " << tol;
      failures.push_back(os.str());
    }
  }
};

class FixedJudge : public Judge {
 public:
  FixedJudge(std::string id, bool answer) : id_(std::move(id)), answer_(answer) {}
  const std::string& id() const override { return id_; }
  const std::string& cache_tag() const override { return id_; }
  Verdict judge(const std::string& span_id, const std::string&, const std::string& concept_label) override {
    return {id_, span_id, concept_label, answer_, answer_ ? "YES" : "NO"};
  }

 private:
  std::string id_;
  bool answer_;
};

HeadProfile scored(HeadId head, int ccs_value, std::string label = "c") {
  HeadProfile p;
  p.head = head;
  p.ccs = ccs_value;
  p.band = categorize(ccs_value);
  p.concept_label = std::move(label);
  return p;
}

// --- 1 ----------------------------------------------------------------------

void ccs_arithmetic(Checks& c) {
  FixedJudge yes[] = {{"a", true}, {"b", true}, {"c", true}};
  FixedJudge no[] = {{"a", false}, {"b", false}, {"c", false}};
  std::size_t mismatches = 0;
  for (int mask = 0; mask < (1 << 15); ++mask) {
    std::vector<ConsensusVerdict> verdicts;
    int unanimous = 0;
    for (int s = 0; s < 5; ++s) {
      Judge* judges[3];
      int votes = 0;
      for (int j = 0; j < 3; ++j) {
        const bool v = (mask >> (3 * s + j)) & 1;
        judges[j] = v ? static_cast<Judge*>(&yes[j]) : &no[j];
        votes += v;
      }
      unanimous += votes == 3;
      verdicts.push_back(consensus("s" + std::to_string(s), "t", "C", judges));
    }
    mismatches += ccs(verdicts) != unanimous;
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " of 32768 patterns miscounted");

  std::mt19937 rng(1);
  double worst = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int heads = 1 + static_cast<int>(rng() % 128);
    std::vector<HeadProfile> profiles;
    for (int h = 0; h < heads; ++h) profiles.push_back(scored({h / 16, h % 16}, static_cast<int>(rng() % 6)));
    double sum = 0;
    for (int v = 0; v <= 5; ++v) sum += ccs_at_k(profiles, v, static_cast<std::size_t>(heads));
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  c.near(worst, 0.0, kSumTolerance, "CCS@K sum");
  c.notes << "32768 patterns, 500 profile sets, max |sum-1| " << worst;
}

// --- 2 ----------------------------------------------------------------------

void band_counts(Checks& c) {
  for (const auto& m : reference::models()) {
    std::map<int, double> dist;
    for (int v = 0; v < 6; ++v) dist[v] = m.ccs_at[static_cast<std::size_t>(v)];
    const auto got = band_counts_from_distribution(dist, m.heads);
    const std::pair<Band, std::size_t> want[] = {
        {Band::kHigh, m.high}, {Band::kModerate, m.moderate}, {Band::kLow, m.low}};
    for (const auto& [band, count] : want) {
      const long diff = static_cast<long>(got.at(band)) - static_cast<long>(count);
      c.expect(std::abs(diff) <= kCountTolerance, std::string(m.name) + " " + std::string(band_name(band)) + ": got " +
                                                      std::to_string(got.at(band)) + ", want " + std::to_string(count));
    }
    if (&m == &reference::models().front()) {
      c.notes << m.name << " -> " << got.at(Band::kHigh) << "/" << got.at(Band::kModerate) << "/"
              << got.at(Band::kLow) << ", 6 models";
    }
  }
}

// --- 3 ----------------------------------------------------------------------

void ccr_lists(Checks& c) {
  for (const auto& m : reference::models()) {
    std::vector<HeadProfile> high;
    for (const auto& h : m.high_heads) high.push_back(scored(parse_head_id(h.head), 5, h.label));
    const double got = ccr(high);
    if (std::string(m.name) == "ViT-B-32-OpenAI") {
      c.expect(got == 0.25, std::string(m.name) + ": CCR " + std::to_string(got) + " is not exactly 0.250");
      c.notes << m.name << " " << got;
    } else {
      c.near(got, m.ccr, kCcrTolerance, std::string(m.name) + " CCR");
    }
  }
}

// --- 4 ----------------------------------------------------------------------

void textspan_oracle(Checks& c) {
  std::mt19937 rng(4);
  std::size_t wrong_first = 0;
  double worst_leak = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 2 + static_cast<Eigen::Index>(rng() % 15);
    const auto d = 1 + static_cast<Eigen::Index>(rng() % 8);
    const auto m = 1 + static_cast<Eigen::Index>(rng() % 8);
    const std::size_t k = std::min<std::size_t>({3, static_cast<std::size_t>(m), static_cast<std::size_t>(d)});
    const MatrixXd a = gaussian(rng, n, d);
    MatrixXd cands = gaussian(rng, m, d);
    cands.rowwise().normalize();

    std::size_t best = 0;
    double best_score = -1;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double s = textspan_score(a, cands.row(j).transpose());
      if (s > best_score) {
        best_score = s;
        best = static_cast<std::size_t>(j);
      }
    }
    DeflationTrace trace;
    const auto r = textspan(a, cands, k, &trace);
    wrong_first += r.selections.front().candidate != best;
    for (std::size_t i = 0; i < trace.matrix_leak.size(); ++i) {
      worst_leak = std::max({worst_leak, trace.matrix_leak[i], trace.candidate_leak[i]});
    }
  }
  c.expect(wrong_first == 0, std::to_string(wrong_first) + " of 200 first selections differ from the exhaustive scan");
  c.expect(worst_leak < kLeakTolerance, "post-deflation projection " + std::to_string(worst_leak));

  std::size_t prefix_breaks = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd a = gaussian(rng, 64, 24);
    MatrixXd cands = gaussian(rng, 48, 24);
    cands.rowwise().normalize();
    const auto k5 = textspan(a, cands, 5);
    const auto k13 = textspan(a, cands, 13);
    for (std::size_t i = 0; i < 5; ++i) prefix_breaks += k5.selections[i].candidate != k13.selections[i].candidate;
  }
  c.expect(prefix_breaks == 0, std::to_string(prefix_breaks) + " K=5 selections differ from the K=13 prefix");
  c.notes << "200 instances, max leak " << worst_leak << ", 20 prefix instances";
}

// --- 5 ----------------------------------------------------------------------

void metric_oracles(Checks& c) {
  c.near(kendall_tau(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}), 2.0 / 3.0,
         kExampleTolerance, "tau example");
  c.near(spearman_rho(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}), 0.8, kExampleTolerance,
         "rho example");
  const std::vector<std::string> xy = {"x", "x", "y", "y"};
  c.near(cohen_kappa(xy, xy), 1.0, kExampleTolerance, "kappa identical");
  c.near(cohen_kappa(xy, std::vector<std::string>{"x", "y", "x", "y"}), 0.0, kExampleTolerance, "kappa chance");
  c.near(cohen_kappa(xy, std::vector<std::string>{"y", "y", "x", "x"}), -1.0, kExampleTolerance, "kappa opposite");
  RankedAttributes two;
  two.values = {"a", "a", "b", "b"};
  c.near(max_skew(two, 2).max_skew, std::log(2.0), kExampleTolerance, "MaxSkew ln 2");
  RankedAttributes four;
  four.values = {"a", "a", "a", "a", "b", "c", "d", "b"};
  c.near(max_skew(four, 4).max_skew, std::log(4.0), kExampleTolerance, "MaxSkew ln 4");

  std::mt19937 rng(5);
  double worst = 0;
  const std::vector<std::string> alphabet = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 100; ++trial) {
    RankedAttributes r;
    const std::size_t n = 1 + rng() % 10;
    for (std::size_t i = 0; i < n; ++i) r.values.push_back(alphabet[rng() % 4]);
    const std::size_t k = 1 + rng() % n;
    worst = std::max(worst, std::abs(max_skew(r, k).max_skew - skew_oracle(r.values, k)));
  }
  c.expect(worst <= kOracleTolerance, "max_skew oracle gap " + std::to_string(worst));

  std::size_t recall_gaps = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto q = gaussian(rng, 10, 6);
    const auto g = gaussian(rng, 10, 6);
    std::vector<RelevancePair> truth;
    for (std::size_t i = 0; i < 10; ++i) truth.push_back({i, rng() % 10});
    const std::size_t k = 1 + rng() % 10;
    recall_gaps += std::abs(retrieval_recall_at_k(q, g, truth, k) - recall_oracle(q, g, truth, k)) > kOracleTolerance;
  }
  c.expect(recall_gaps == 0, std::to_string(recall_gaps) + " recall instances differ");

  double kappa_gap = 0, rho_gap = 0, tau_gap = 0;
  for (int done = 0; done < 100;) {
    const std::size_t n = 2 + rng() % 9;
    std::vector<int> a, b;
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(static_cast<int>(rng() % 3));
      b.push_back(static_cast<int>(rng() % 3));
    }
    const auto x = small_ints(rng, n, 5);
    const auto y = small_ints(rng, n, 5);
    const double ko = kappa_oracle(a, b), ro = rho_oracle(x, y), to = tau_oracle(x, y);
    if (!std::isfinite(ko) || !std::isfinite(ro) || !std::isfinite(to)) continue;
    kappa_gap = std::max(kappa_gap, std::abs(cohen_kappa(a, b) - ko));
    rho_gap = std::max(rho_gap, std::abs(spearman_rho(x, y) - ro));
    tau_gap = std::max(tau_gap, std::abs(kendall_tau(x, y) - to));
    ++done;
  }
  c.expect(kappa_gap <= kOracleTolerance, "kappa oracle gap " + std::to_string(kappa_gap));
  c.expect(rho_gap <= kOracleTolerance, "rho oracle gap " + std::to_string(rho_gap));
  c.expect(tau_gap <= kOracleTolerance, "tau oracle gap " + std::to_string(tau_gap));
  c.notes << "5 metrics x 100 instances, worked examples";
}

// --- 6 ----------------------------------------------------------------------

PruneSpec explicit_spec(std::vector<HeadId> heads) {
  PruneSpec s;
  s.name = "explicit";
  s.heads = std::move(heads);
  return s;
}

void pruning_linearity(Checks& c) {
  testing::TempDir dir;
  const auto bundle = load_bundle(synthetic::write_planted_fixture(dir.path()).manifest);
  const MatrixXd total = bundle.total().cast<double>();
  c.expect(pruned_representations(bundle, explicit_spec({})) == total, "empty spec differs from the baseline");

  const auto window = bundle.manifest().window_heads();
  std::mt19937 rng(6);
  double composition = 0, order = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto shuffled = window;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const std::size_t ns = rng() % (window.size() + 1);
    const std::size_t nt = rng() % (window.size() - ns + 1);
    const std::vector<HeadId> s(shuffled.begin(), shuffled.begin() + static_cast<long>(ns));
    const std::vector<HeadId> t(shuffled.begin() + static_cast<long>(ns), shuffled.begin() + static_cast<long>(ns + nt));
    std::vector<HeadId> both = s;
    both.insert(both.end(), t.begin(), t.end());
    const MatrixXd once = prune_further(bundle, total, both);
    composition = std::max(composition, (once - prune_further(bundle, prune_further(bundle, total, s), t)).cwiseAbs().maxCoeff());
    std::reverse(both.begin(), both.end());
    order = std::max(order, (once - prune_further(bundle, total, both)).cwiseAbs().maxCoeff());
  }
  c.expect(composition <= kCompositionTolerance, "composition gap " + std::to_string(composition));
  c.expect(order <= kCompositionTolerance, "order gap " + std::to_string(order));

  const MatrixXd all = pruned_representations(bundle, explicit_spec(window));
  const MatrixXd rem = bundle.remainder().cast<double>();
  const double rel = ((all - rem).rowwise().norm().array() / total.rowwise().norm().array()).maxCoeff();
  c.expect(rel <= kCompositionTolerance, "all heads vs remainder, relative gap " + std::to_string(rel));
  c.notes << "composition " << composition << ", order " << order << ", remainder " << rel;
}

// --- 7 and 8 ----------------------------------------------------------------

const EvalReport* find_report(const std::vector<EvalReport>& reports, const std::string& column,
                              const std::string& metric) {
  for (const auto& r : reports) {
    if (r.prune_spec == column && r.metric == metric) return &r;
  }
  return nullptr;
}

void planted_end_to_end(Checks& c) {
  testing::TempDir dir;
  const auto paths = synthetic::write_planted_fixture(dir.path());
  const auto config = cli::load_config(paths.config);
  const auto profile = cli::run_profile(config);

  std::map<HeadId, int> ccs_of;
  for (const auto& p : profile.profiles) ccs_of[p.head] = p.ccs;
  for (const auto h : synthetic::planted_heads()) {
    c.expect(ccs_of.at(h) == 5, "planted " + to_string(h) + " has CCS " + std::to_string(ccs_of.at(h)));
  }
  for (const auto h : synthetic::noise_heads()) {
    c.expect(ccs_of.at(h) <= 1, "noise " + to_string(h) + " has CCS " + std::to_string(ccs_of.at(h)));
  }

  const auto eval = cli::run_evaluate(config);
  auto acc = [&](const std::string& column) {
    const auto* r = find_report(eval.reports, column, "accuracy");
    if (!r) throw MetricError("no accuracy for " + column);
    return r->value;
  };
  const double original = acc("Original");
  const double high = original - acc("HighCCS");
  const double random = original - acc("Random");
  const double low = original - acc("LowCCS");
  c.expect(high > random, "drop(HighCCS) > drop(Random)");
  c.expect(random > low, "drop(Random) > drop(LowCCS)");
  c.expect(low >= 0, "drop(LowCCS) >= 0");
  c.notes << "drops High " << high << ", Random " << random << ", Low " << low;
}

void bias_fixture(Checks& c) {
  testing::TempDir dir;
  const synthetic::PlantedOptions options;
  const auto bundle = load_bundle(synthetic::write_planted_fixture(dir.path(), options).manifest);
  const std::vector<std::string> attributes = {"gender"};
  const auto before = occupation_skew_suite(bundle, "occupations", attributes, options.bias_k, PruneSpec{});
  const auto after =
      occupation_skew_suite(bundle, "occupations", attributes, options.bias_k, explicit_spec({synthetic::bias_head()}));
  const double b = before.mean_max_skew.at("gender"), a = after.mean_max_skew.at("gender");
  c.expect(a < b, "MaxSkew did not decrease");
  c.notes << "gender MaxSkew " << b << " -> " << a << " after pruning " << to_string(synthetic::bias_head());
}

struct Criterion {
  const char* name;
  double budget_s;  // 0: no time limit
  std::function<void(Checks&)> run;
};

}  // namespace
}  // namespace headlens

int main() {
  using namespace headlens;
  const std::vector<Criterion> criteria = {
      {"ccs-arithmetic", 1.0, ccs_arithmetic},
      {"band-counts-cross-check", 1.0, band_counts},
      {"ccr-cross-check", 1.0, ccr_lists},
      {"textspan-oracle", 10.0, textspan_oracle},
      {"metric-oracles", 5.0, metric_oracles},
      {"pruning-linearity", 0.0, pruning_linearity},
      {"planted-end-to-end", 30.0, planted_end_to_end},
      {"bias-fixture", 0.0, bias_fixture},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& cr = criteria[i];
    Checks checks;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.run(checks);
    } catch (const std::exception& e) {
      checks.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cr.budget_s > 0 && secs > cr.budget_s) {
      checks.failures.push_back("took " + std::to_string(secs) + " s, budget " + std::to_string(cr.budget_s) + " s");
    }
    const bool ok = checks.failures.empty();
    failed += !ok;
    std::printf("%s [%zu] %-24s %.3fs", ok ? "PASS" : "FAIL", i + 1, cr.name, secs);
    if (cr.budget_s > 0) std::printf(" (limit %.0fs)", cr.budget_s);
    std::printf("  %s", checks.notes.str().c_str());
    for (const auto& f : checks.failures) std::printf("\n       failed: %s", f.c_str());
    std::printf("\n");
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
