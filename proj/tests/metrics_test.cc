#include "headlens/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oracles.h"
#include "synthetic/synthetic_export.h"
#include "test_support.h"

namespace headlens {
namespace {

using nlohmann::json;
using namespace testing::oracles;
using testing::TempDir;

// --- classification ---------------------------------------------------------

TEST(ZeroShotClassify, Examples) {
  Eigen::MatrixXd protos = Eigen::MatrixXd::Identity(4, 4);
  Eigen::MatrixXd reps(2, 4);
  reps << 0, 0, 0, 2.5,  // equals prototype 3 up to scale
      0, 0.1, 0, 0;
  EXPECT_EQ(zero_shot_classify(reps, protos), (std::vector<std::size_t>{3, 1}));

  Eigen::MatrixXd tie(1, 4);
  tie << 1, 1, 0, 0;
  EXPECT_EQ(zero_shot_classify(tie, protos), (std::vector<std::size_t>{0}));
}

TEST(ZeroShotClassify, ZeroNormNamesTheImage) {
  Eigen::MatrixXd protos = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd reps = Eigen::MatrixXd::Zero(2, 2);
  reps(0, 0) = 1;
  const std::vector<std::string> ids = {"first", "second"};
  try {
    zero_shot_classify(reps, protos, ids);
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_NE(std::string(e.what()).find("second"), std::string::npos);
  }
  EXPECT_THROW(zero_shot_classify(Eigen::MatrixXd::Ones(1, 3), protos), MetricError);
}

TEST(ZeroShotClassifyProperty, MatchesOracleAndIgnoresScale) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto reps = gaussian(rng, 5, 6);
    Eigen::MatrixXd protos = gaussian(rng, 4, 6);
    protos.rowwise().normalize();
    const auto pred = zero_shot_classify(reps, protos);
    EXPECT_EQ(pred, classify_oracle(reps, protos));
    Eigen::MatrixXd scaled = reps;
    for (Eigen::Index i = 0; i < scaled.rows(); ++i) scaled.row(i) *= scale(rng);
    EXPECT_EQ(zero_shot_classify(scaled, protos), pred);
  }
}

TEST(Accuracy, Examples) {
  const std::vector<std::size_t> labels = {0, 1, 2, 3};
  EXPECT_EQ(accuracy(labels, labels), 1.0);
  EXPECT_EQ(accuracy(std::vector<std::size_t>{1, 2, 3, 0}, labels), 0.0);
  EXPECT_EQ(accuracy(std::vector<std::size_t>{0, 1, 2, 0}, labels), 0.75);
  EXPECT_THROW(accuracy(std::vector<std::size_t>{0}, labels), MetricError);
}

// --- retrieval --------------------------------------------------------------

TEST(Recall, Examples) {
  std::mt19937 rng(2);
  const auto g = gaussian(rng, 6, 5);
  std::vector<RelevancePair> truth;
  for (std::size_t i = 0; i < 6; ++i) truth.push_back({i, i});
  EXPECT_EQ(retrieval_recall_at_k(g, g, truth, 1), 1.0);

  // The true item is always second: another item sits exactly on the query.
  Eigen::MatrixXd gallery(4, 2);
  gallery << 1, 0, 0.8, 0.6, 0, 1, -0.6, 0.8;
  Eigen::MatrixXd queries(2, 2);
  queries << 1, 0, 0, 1;
  const std::vector<RelevancePair> second = {{0, 1}, {1, 3}};
  EXPECT_EQ(retrieval_recall_at_k(queries, gallery, second, 1), 0.0);
  EXPECT_EQ(retrieval_recall_at_k(queries, gallery, second, 2), 1.0);

  EXPECT_THROW(retrieval_recall_at_k(queries, gallery, second, 0), MetricError);
  const std::vector<RelevancePair> bad = {{5, 0}};
  EXPECT_THROW(retrieval_recall_at_k(queries, gallery, bad, 1), MetricError);
}

TEST(RecallProperty, MatchesSortOracle) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto q = gaussian(rng, 10, 8);
    const auto g = gaussian(rng, 10, 8);
    std::vector<RelevancePair> truth;
    for (std::size_t i = 0; i < 10; ++i) {
      truth.push_back({i, rng() % 10});
      if (rng() % 3 == 0) truth.push_back({i, rng() % 10});
    }
    for (const std::size_t k : {1u, 3u, 5u, 10u}) {
      EXPECT_DOUBLE_EQ(retrieval_recall_at_k(q, g, truth, k), recall_oracle(q, g, truth, k));
    }
  }
}

// --- MaxSkew ----------------------------------------------------------------

TEST(MaxSkew, Examples) {
  RankedAttributes r;
  r.values = {"a", "a", "a", "b"};
  const auto s = max_skew(r, 4);
  EXPECT_NEAR(s.max_skew, std::log(1.5), 1e-12);
  EXPECT_NEAR(s.per_value.at("b"), std::log(0.5), 1e-12);

  r.values = {"a", "b", "b", "a"};
  EXPECT_EQ(max_skew(r, 4).max_skew, 0.0);

  r.values = {"a", "a", "a", "a", "b", "c", "d", "b"};
  EXPECT_NEAR(max_skew(r, 4).max_skew, std::log(4.0), 1e-12);
  EXPECT_NEAR(max_skew(r, 4).per_value.at("c"), std::log(kSkewFloor * 4.0), 1e-12);
}

TEST(MaxSkew, DesiredDistribution) {
  RankedAttributes r;
  r.values = {"a", "b", "b", "b"};
  r.desired = {{"a", 0.25}, {"b", 0.75}};
  EXPECT_NEAR(max_skew(r, 4).max_skew, 0.0, 1e-12);
  EXPECT_NEAR(max_skew(r, 1).max_skew, std::log(4.0), 1e-12);
  r.desired = {{"a", 0.0}, {"b", 1.0}};
  EXPECT_THROW(max_skew(r, 4), MetricError);
}

TEST(MaxSkew, Errors) {
  RankedAttributes r;
  r.values = {"a", "b"};
  EXPECT_THROW(max_skew(r, 0), MetricError);
  EXPECT_THROW(max_skew(r, 3), MetricError);
  r.desired = {{"a", 0.5}, {"b", 0.4}};
  EXPECT_THROW(max_skew(r, 2), MetricError);
}

TEST(MaxSkewProperty, MatchesCountingOracle) {
  std::mt19937 rng(4);
  const std::vector<std::string> alphabet = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 100; ++trial) {
    RankedAttributes r;
    const std::size_t n = 1 + rng() % 10;
    for (std::size_t i = 0; i < n; ++i) r.values.push_back(alphabet[rng() % (1 + trial % 4)]);
    for (std::size_t k = 1; k <= n; ++k) {
      const double got = max_skew(r, k).max_skew;
      EXPECT_NEAR(got, skew_oracle(r.values, k), 1e-12);
      EXPECT_GE(got, -1e-12);
    }
  }
}

// Zero exactly when the top-k histogram matches the desired shares.
TEST(MaxSkewProperty, ZeroIffBalanced) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    RankedAttributes r;
    for (int i = 0; i < 8; ++i) r.values.push_back(rng() % 2 ? "x" : "y");
    r.desired = {{"x", 0.5}, {"y", 0.5}};
    const auto x = std::count(r.values.begin(), r.values.begin() + 4, "x");
    EXPECT_EQ(max_skew(r, 4).max_skew == 0.0, x == 2);
  }
}

TEST(SkewSuite, ConstructedGalleries) {
  const std::vector<std::string> ids = {"i0", "i1", "i2", "i3"};
  Eigen::MatrixXd reps(4, 2);
  reps << 1, 0.1, 1, 0.2, 0.1, 1, 0.2, 1;
  AttributeTable attrs;
  attrs.set("i0", "gender", "a");
  attrs.set("i1", "gender", "a");
  attrs.set("i2", "gender", "b");
  attrs.set("i3", "gender", "b");
  attrs.set("i0", "race", "r");
  attrs.set("i1", "race", "s");
  attrs.set("i2", "race", "r");
  attrs.set("i3", "race", "s");
  Eigen::MatrixXd prompts(2, 2);
  prompts << 1, 0, 0, 1;
  const std::vector<std::string> occ = {"nurse", "pilot"};
  const std::vector<std::string> names = {"gender", "race"};

  const auto top2 = occupation_skew_suite(reps, ids, prompts, occ, attrs, names, 2);
  EXPECT_EQ(top2.prompts, 2u);
  EXPECT_NEAR(top2.mean_max_skew.at("gender"), std::log(2.0), 1e-12);
  EXPECT_NEAR(top2.mean_max_skew.at("race"), 0.0, 1e-12);
  EXPECT_NEAR(top2.per_occupation.at("gender").at("pilot"), std::log(2.0), 1e-12);

  const auto all = occupation_skew_suite(reps, ids, prompts, occ, attrs, names, 4);
  EXPECT_NEAR(all.mean_max_skew.at("gender"), 0.0, 1e-12);

  AttributeTable partial;
  partial.set("i0", "gender", "a");
  EXPECT_THROW(occupation_skew_suite(reps, ids, prompts, occ, partial, names, 2), MetricError);
  EXPECT_THROW(occupation_skew_suite(reps, ids, Eigen::MatrixXd(0, 2), {}, attrs, names, 2), MetricError);
}

TEST(SkewSuite, PruningTheAttributeHeadReducesSkew) {
  TempDir dir;
  synthetic::PlantedOptions opt;
  const auto bundle = load_bundle(synthetic::write_planted_fixture(dir.path(), opt).manifest);
  const std::vector<std::string> names = {"gender"};
  PruneSpec none;
  PruneSpec bias;
  bias.heads = {synthetic::bias_head()};
  const auto before = occupation_skew_suite(bundle, "occupations", names, opt.bias_k, none);
  const auto after = occupation_skew_suite(bundle, "occupations", names, opt.bias_k, bias);
  EXPECT_LT(after.mean_max_skew.at("gender"), before.mean_max_skew.at("gender"));
  EXPECT_THROW(occupation_skew_suite(bundle, "nope", names, opt.bias_k, none), MetricError);
}

// --- agreement --------------------------------------------------------------

TEST(Kappa, Examples) {
  const std::vector<std::string> a = {"x", "x", "y", "y"};
  EXPECT_DOUBLE_EQ(cohen_kappa(a, a), 1.0);
  EXPECT_DOUBLE_EQ(cohen_kappa(a, std::vector<std::string>{"y", "y", "x", "x"}), -1.0);
  EXPECT_DOUBLE_EQ(cohen_kappa(a, std::vector<std::string>{"x", "y", "x", "y"}), 0.0);
  EXPECT_THROW(cohen_kappa(std::vector<std::string>{"x", "x"}, std::vector<std::string>{"x", "x"}), MetricError);
  EXPECT_THROW(cohen_kappa(a, std::vector<std::string>{"x"}), MetricError);
  EXPECT_THROW(cohen_kappa(std::vector<std::string>{"x"}, std::vector<std::string>{"y"}), MetricError);
}

TEST(KappaProperty, OracleSymmetryRelabeling) {
  std::mt19937 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 9;
    std::vector<int> a, b;
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(static_cast<int>(rng() % 3));
      b.push_back(static_cast<int>(rng() % 3));
    }
    const double expected = kappa_oracle(a, b);
    if (!std::isfinite(expected)) {
      EXPECT_THROW(cohen_kappa(a, b), MetricError);
      continue;
    }
    const double k = cohen_kappa(a, b);
    EXPECT_NEAR(k, expected, 1e-12);
    EXPECT_NEAR(cohen_kappa(b, a), k, 1e-12);
    EXPECT_GE(k, -1 - 1e-12);
    EXPECT_LE(k, 1 + 1e-12);
    std::vector<int> ra, rb;
    for (const int v : a) ra.push_back(10 - 3 * v);
    for (const int v : b) rb.push_back(10 - 3 * v);
    EXPECT_NEAR(cohen_kappa(ra, rb), k, 1e-12);
  }
}

TEST(Spearman, Examples) {
  const std::vector<double> x = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(spearman_rho(x, x), 1.0);
  EXPECT_DOUBLE_EQ(spearman_rho(x, std::vector<double>{9, 7, 5, 1}), -1.0);
  EXPECT_NEAR(spearman_rho(x, std::vector<double>{1, 3, 2, 4}), 0.8, 1e-12);
  EXPECT_THROW(spearman_rho(x, std::vector<double>{1, 1, 1, 1}), MetricError);
  EXPECT_THROW(spearman_rho(x, std::vector<double>{1, 2}), MetricError);
  EXPECT_EQ(average_ranks(std::vector<double>{10, 20, 10, 30}), (std::vector<double>{1.5, 3, 1.5, 4}));
}

TEST(Kendall, Examples) {
  const std::vector<double> x = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(kendall_tau(x, x), 1.0);
  EXPECT_DOUBLE_EQ(kendall_tau(x, std::vector<double>{4, 3, 2, 1}), -1.0);
  EXPECT_NEAR(kendall_tau(x, std::vector<double>{1, 3, 2, 4}), 4.0 / 6.0, 1e-12);
  EXPECT_THROW(kendall_tau(x, std::vector<double>{2, 2, 2, 2}), MetricError);
  EXPECT_THROW(kendall_tau(std::vector<double>{1}, std::vector<double>{1}), MetricError);
}

TEST(RankCorrelationProperty, OraclesSymmetryMonotoneInvariance) {
  std::mt19937 rng(7);
  int checked = 0;
  for (int trial = 0; trial < 300 && checked < 100; ++trial) {
    const std::size_t n = 2 + rng() % 9;
    const auto x = small_ints(rng, n, 5);
    const auto y = small_ints(rng, n, 5);
    const auto uniq = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return std::unique(v.begin(), v.end()) - v.begin();
    };
    if (uniq(x) < 2 || uniq(y) < 2) {
      EXPECT_THROW(kendall_tau(x, y), MetricError);
      EXPECT_THROW(spearman_rho(x, y), MetricError);
      continue;
    }
    ++checked;
    const double tau = kendall_tau(x, y);
    const double rho = spearman_rho(x, y);
    EXPECT_NEAR(tau, tau_oracle(x, y), 1e-12);
    EXPECT_NEAR(rho, rho_oracle(x, y), 1e-12);
    EXPECT_NEAR(kendall_tau(y, x), tau, 1e-12);
    EXPECT_NEAR(spearman_rho(y, x), rho, 1e-12);
    std::vector<double> fx;
    for (const double v : x) fx.push_back(std::exp(v) + 3 * v);
    EXPECT_NEAR(kendall_tau(fx, y), tau, 1e-12);
    EXPECT_NEAR(spearman_rho(fx, y), rho, 1e-12);
  }
  EXPECT_EQ(checked, 100);
}

TEST(KendallProperty, LargeInputsMatchPairCount) {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = small_ints(rng, 400, 50);
    const auto y = small_ints(rng, 400, 30);
    EXPECT_NEAR(kendall_tau(x, y), tau_oracle(x, y), 1e-12);
  }
}

// --- reports ----------------------------------------------------------------

TEST(EvalReport, JsonRoundTrip) {
  EvalReport r{"m", "HighCCS", "captions", "recall", 0.5, 5, {{"x", 0.25}}};
  const auto back = eval_report_from_json(json::parse(eval_report_to_json(r).dump()));
  EXPECT_EQ(back.model, r.model);
  EXPECT_EQ(back.prune_spec, r.prune_spec);
  EXPECT_EQ(back.k, r.k);
  EXPECT_EQ(back.value, r.value);
  EXPECT_EQ(back.breakdown, r.breakdown);
  r.k.reset();
  EXPECT_TRUE(eval_report_to_json(r).at("k").is_null());
  EXPECT_THROW(eval_report_from_json(json{{"model", "m"}}), FormatError);
}

TEST(EvalReport, GridCsv) {
  const std::vector<EvalReport> reports = {
      {"m", "Original", "classes", "accuracy", 0.75, std::nullopt, {}},
      {"m", "HighCCS", "classes", "accuracy", 0.5, std::nullopt, {}},
      {"m", "Original", "captions", "recall", 1.0, 1, {}},
  };
  const std::vector<std::string> columns = {"Original", "HighCCS"};
  EXPECT_EQ(eval_grid_csv(reports, columns),
            "dataset,metric,k,Original,HighCCS\n"
            "classes,accuracy,,0.75,0.5\n"
            "captions,recall,1,1,\n");
}

}  // namespace
}  // namespace headlens
