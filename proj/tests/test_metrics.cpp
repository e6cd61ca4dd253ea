#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grhd/common/rng.hpp"
#include "grhd/dataset/attribute_groups.hpp"
#include "grhd/metrics/metrics.hpp"
#include "metric_oracles.hpp"
#include "test_util.hpp"

using namespace grhd;
using namespace grhd::metrics;
using dataset::Condition;
using dataset::Domain;
using grhd::testing::oracle_auc;
using grhd::testing::oracle_pauc;

namespace {

std::vector<double> random_scores(Rng& rng, std::size_t n, bool ties) {
  std::vector<double> v(n);
  for (auto& x : v) x = ties ? static_cast<double>(rng.below(5)) : rng.uniform(-3.0, 3.0);
  return v;
}

ScoredClip clip(const std::string& machine, int section, Domain d, Condition c, double score) {
  ScoredClip s;
  s.metadata.machine_type = machine;
  s.metadata.section_id = section;
  s.metadata.domain = d;
  s.metadata.split = dataset::Split::Test;
  s.metadata.condition = c;
  s.score = score;
  return s;
}

void add_cell(std::vector<ScoredClip>& out, const std::string& machine, int section, Domain d,
              const std::vector<double>& normal, const std::vector<double>& anomaly) {
  for (const double s : normal) out.push_back(clip(machine, section, d, Condition::Normal, s));
  for (const double s : anomaly) out.push_back(clip(machine, section, d, Condition::Anomaly, s));
}

const Cell& find(const EvalReport& r, const std::string& machine, const std::string& section, const std::string& domain,
                 const std::string& metric) {
  for (const auto& c : r.cells) {
    if (c.machine == machine && c.section == section && c.domain == domain && c.metric == metric) return c;
  }
  throw std::runtime_error("no cell " + machine + "/" + section + "/" + domain + "/" + metric);
}

}  // namespace

TEST(Auc, WorkedExamples) {
  EXPECT_EQ(auc(std::vector{0.1, 0.2}, std::vector{0.3, 0.4}), 1.0);
  EXPECT_EQ(auc(std::vector{0.1, 0.4}, std::vector{0.2, 0.5}), 0.75);
  EXPECT_EQ(auc(std::vector{0.7, 0.7, 0.7}, std::vector{0.7, 0.7}), 0.5);
}

TEST(Auc, DegenerateAndNonFinite) {
  EXPECT_GRHD_ERROR(auc(std::vector<double>{}, std::vector{1.0}), DegenerateLabels);
  EXPECT_GRHD_ERROR(auc(std::vector{1.0}, std::vector<double>{}), DegenerateLabels);
  EXPECT_GRHD_ERROR(auc(std::vector{1.0}, std::vector{std::nan("")}), ContractViolation);
}

TEST(Auc, MatchesPairCountingOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const bool ties = trial % 2 == 1;
    const auto normal = random_scores(rng, 1 + rng.below(15), ties);
    const auto anomaly = random_scores(rng, 1 + rng.below(15), ties);
    EXPECT_EQ(auc(normal, anomaly), oracle_auc(normal, anomaly)) << "trial " << trial;
  }
}

TEST(Auc, MonotoneInvarianceAndComplement) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto normal = random_scores(rng, 12, false);
    const auto anomaly = random_scores(rng, 9, false);
    auto map = [&](std::vector<double> v) {
      for (auto& x : v) x = std::exp(2.0 * x) + x * x * x;  // strictly increasing
      return v;
    };
    EXPECT_EQ(auc(map(normal), map(anomaly)), auc(normal, anomaly));
    auto neg = [](std::vector<double> v) {
      for (auto& x : v) x = -x;
      return v;
    };
    EXPECT_DOUBLE_EQ(auc(normal, anomaly) + auc(neg(normal), neg(anomaly)), 1.0);
  }
}

TEST(Pauc, WorkedExamples) {
  for (const double p : {0.05, 0.1, 0.5, 1.0}) {
    EXPECT_EQ(pauc(std::vector{0.1, 0.2}, std::vector{0.3, 0.4}, p), 1.0);
    // Diagonal ROC: area p^2 / 2 over [0, p], divided by p (no McClish rescaling).
    EXPECT_DOUBLE_EQ(pauc(std::vector{1.0, 1.0, 1.0}, std::vector{1.0, 1.0}, p), p / 2.0);
  }
  // normals {1,2,3}, anomalies {2.5,4,0}: ROC (0,0) (0,1/3) (1/3,1/3) (1/3,2/3) (2/3,2/3) (1,2/3) (1,1).
  // Up to FPR 0.5: 1/3 * 1/3 + 1/6 * 2/3 = 2/9, over 0.5.
  EXPECT_NEAR(pauc(std::vector{1.0, 2.0, 3.0}, std::vector{2.5, 4.0, 0.0}, 0.5), 4.0 / 9.0, 1e-15);
}

TEST(Pauc, InvalidP) {
  for (const double p : {0.0, -0.1, 1.5, std::nan("")}) {
    EXPECT_GRHD_ERROR(pauc(std::vector{0.0}, std::vector{1.0}, p), InvalidP);
  }
}

TEST(Pauc, MatchesThresholdSweepOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const bool ties = trial % 2 == 1;
    const auto normal = random_scores(rng, 1 + rng.below(15), ties);
    const auto anomaly = random_scores(rng, 1 + rng.below(15), ties);
    for (const double p : {0.1, 0.3, 1.0}) {
      const double got = pauc(normal, anomaly, p);
      EXPECT_EQ(got, oracle_pauc(normal, anomaly, p)) << "trial " << trial << " p " << p;
      EXPECT_LE(got, 1.0);
    }
    EXPECT_EQ(pauc(normal, anomaly, 1.0), auc(normal, anomaly));
  }
}

TEST(HarmonicMean, Examples) {
  EXPECT_NEAR(harmonic_mean(std::vector{84.64, 72.43, 68.82}), 74.72, 0.01);
  EXPECT_NEAR(harmonic_mean(std::vector{77.46, 61.68, 61.06}), 65.93, 0.01);
  EXPECT_NEAR(harmonic_mean(std::vector{50.0, 50.0, 100.0}), 60.0, 1e-12);
  EXPECT_EQ(harmonic_mean(std::vector{0.25, 0.25, 0.25}), 0.25);
  EXPECT_GRHD_ERROR(harmonic_mean(std::vector{1.0, 0.0}), NonpositiveValue);
  EXPECT_GRHD_ERROR(harmonic_mean(std::vector<double>{}), NonpositiveValue);
}

TEST(HarmonicMean, BelowArithmeticMean) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto v = std::vector{rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)};
    EXPECT_LT(harmonic_mean(v), (v[0] + v[1] + v[2]) / 3.0);
  }
}

TEST(Nls, Examples) {
  EXPECT_NEAR(nls_score(std::vector{0.0, 0.0, 0.0}, 1), std::log(3.0), 1e-15);
  EXPECT_LT(nls_score(std::vector{40.0, 0.0}, 0), 1e-15);
  EXPECT_LT(nls_score(std::vector{2.0, 1.0}, 0), nls_score(std::vector{1.0, 1.5}, 0));
  EXPECT_NEAR(nls_score(std::vector{1000.0, 999.0}, 1), std::log(1.0 + std::exp(1.0)), 1e-12);
  EXPECT_GRHD_ERROR(nls_score(std::vector{0.0, 0.0}, 2), UnknownSection);
}

TEST(Nls, ScoresUseOwnSection) {
  std::vector<dataset::ClipMetadata> train(2);
  train[0].section_id = 3;
  train[1].section_id = 7;
  const auto table = dataset::build_attribute_groups(train);
  std::vector<dataset::ClipMetadata> test(2);
  test[0].section_id = 7;
  test[1].section_id = 3;
  const std::vector<std::vector<double>> logits{{0.0, 2.0}, {0.0, 2.0}};
  const auto s = score_nls(logits, test, table);
  EXPECT_NEAR(s[0], nls_score(logits[0], 1), 0.0);
  EXPECT_NEAR(s[1], nls_score(logits[1], 0), 0.0);
  test[1].section_id = 5;
  EXPECT_GRHD_ERROR(score_nls(logits, test, table), UnknownSection);
}

TEST(Knn, Examples) {
  const std::vector<std::vector<double>> bank{{1, 0, 0}, {0, 2, 0}, {1, 1, 0}};
  EXPECT_NEAR(score_knn(std::vector{3.0, 3.0, 0.0}, bank, 1), 0.0, 1e-15);
  EXPECT_NEAR(score_knn(std::vector{0.0, 0.0, 5.0}, bank, 1), 1.0, 1e-15);
  // k = bank size: mean distance to every row, computed directly.
  const std::vector<double> e{0.3, -0.2, 0.9};
  double total = 0.0;
  for (const auto& r : bank) {
    const double dot = r[0] * e[0] + r[1] * e[1] + r[2] * e[2];
    total += 1.0 - dot / (std::hypot(r[0], r[1], r[2]) * std::hypot(e[0], e[1], e[2]));
  }
  EXPECT_NEAR(score_knn(e, bank, 3), total / 3.0, 1e-15);
  EXPECT_EQ(score_knn(e, bank, 10), score_knn(e, bank, 3));
  EXPECT_GRHD_ERROR(score_knn(e, {}, 1), EmptyBank);
  EXPECT_GRHD_ERROR(score_knn(e, bank, 0), InvalidConfig);
  EXPECT_GRHD_ERROR(score_knn(std::vector{1.0}, bank, 1), ShapeMismatch);
}

TEST(Evaluate, PerfectScorer) {
  std::vector<ScoredClip> clips;
  add_cell(clips, "Fan", 0, Domain::Source, {0.1, 0.2}, {0.8, 0.9});
  add_cell(clips, "Fan", 0, Domain::Target, {0.3}, {0.7});
  const auto r = evaluate(clips);
  EXPECT_EQ(r.auc_source, 1.0);
  EXPECT_EQ(r.auc_target, 1.0);
  EXPECT_EQ(r.pauc, 1.0);
  EXPECT_EQ(r.hauc, 1.0);
}

TEST(Evaluate, PlantedScoresGiveHandComputedTotals) {
  std::vector<ScoredClip> clips;
  // Known pair orders per cell.
  const std::vector<double> n00s{1, 2, 3, 4}, a00s{2.5, 5};         // 6/8
  const std::vector<double> n00t{1, 2}, a00t{1.5, 0};                // 1/4
  const std::vector<double> n01s{1, 2, 3}, a01s{4, 4, 0};            // 6/9
  const std::vector<double> n01t{5}, a01t{5, 6};                     // 1.5/2
  const std::vector<double> n10s{0, 1}, a10s{2};                     // 1
  const std::vector<double> n10t{0, 1, 2}, a10t{0.5, 1.5, 2.5, -1};  // 6/12
  add_cell(clips, "Fan", 0, Domain::Source, n00s, a00s);
  add_cell(clips, "Fan", 0, Domain::Target, n00t, a00t);
  add_cell(clips, "Fan", 1, Domain::Source, n01s, a01s);
  add_cell(clips, "Fan", 1, Domain::Target, n01t, a01t);
  add_cell(clips, "Pump", 0, Domain::Source, n10s, a10s);
  add_cell(clips, "Pump", 0, Domain::Target, n10t, a10t);
  clips.push_back(clip("Pump", 0, Domain::Source, Condition::Unknown, 9.0));

  const auto r = evaluate(clips, 0.1);
  EXPECT_EQ(r.skipped_unlabeled, 1u);
  EXPECT_EQ(find(r, "Fan", "0", "source", "AUC").value, 0.75);
  EXPECT_EQ(find(r, "Fan", "0", "target", "AUC").value, 0.25);
  EXPECT_EQ(find(r, "Fan", "1", "source", "AUC").value, 6.0 / 9.0);
  EXPECT_EQ(find(r, "Fan", "1", "target", "AUC").value, 0.75);
  EXPECT_EQ(find(r, "Pump", "0", "source", "AUC").value, 1.0);
  EXPECT_EQ(find(r, "Pump", "0", "target", "AUC").value, 0.5);

  const double auc_s = 3.0 / (1 / 0.75 + 9.0 / 6.0 + 1.0);
  const double auc_t = 3.0 / (4.0 + 1 / 0.75 + 2.0);
  EXPECT_NEAR(r.auc_source, auc_s, 1e-15);
  EXPECT_NEAR(r.auc_target, auc_t, 1e-15);

  auto pooled = [](std::vector<double> a, const std::vector<double>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  const std::vector<double> paucs{oracle_pauc(pooled(n00s, n00t), pooled(a00s, a00t), 0.1),
                                  oracle_pauc(pooled(n01s, n01t), pooled(a01s, a01t), 0.1),
                                  oracle_pauc(pooled(n10s, n10t), pooled(a10s, a10t), 0.1)};
  EXPECT_EQ(find(r, "Fan", "0", "all", "pAUC").value, paucs[0]);
  double inv = 0.0;
  for (const double v : paucs) inv += 1.0 / v;
  EXPECT_NEAR(r.pauc, 3.0 / inv, 1e-15);
  EXPECT_NEAR(find(r, "Fan", "ALL", "source", "AUC").value, 2.0 / (1 / 0.75 + 9.0 / 6.0), 1e-15);

  // Recomposition from the emitted totals.
  EXPECT_EQ(r.hauc, harmonic_mean(std::vector{r.auc_source, r.auc_target, r.pauc}));
}

TEST(Evaluate, DomainPartition) {
  std::vector<ScoredClip> clips;
  add_cell(clips, "Fan", 0, Domain::Source, {1, 2, 3}, {2.5, 4});
  add_cell(clips, "Fan", 0, Domain::Target, {1, 5}, {3});
  add_cell(clips, "Fan", 1, Domain::Source, {0, 2}, {1, 3});
  add_cell(clips, "Fan", 1, Domain::Target, {0.5}, {0.2});
  const auto full = evaluate(clips);
  std::vector<ScoredClip> source_only;
  for (const auto& c : clips) {
    if (c.metadata.domain == Domain::Source) source_only.push_back(c);
  }
  const auto src = evaluate(source_only);
  EXPECT_EQ(src.auc_source, full.auc_source);
  EXPECT_EQ(find(src, "Fan", "0", "source", "AUC").value, find(full, "Fan", "0", "source", "AUC").value);
  EXPECT_TRUE(std::isnan(find(src, "Fan", "0", "target", "AUC").value));
  EXPECT_FALSE(find(src, "Fan", "0", "target", "AUC").note.empty());
  EXPECT_TRUE(std::isnan(src.auc_target));
  EXPECT_TRUE(std::isnan(src.hauc));
  EXPECT_EQ(find(src, "Fan", "0", "all", "pAUC").value, pauc(std::vector{1.0, 2.0, 3.0}, std::vector{2.5, 4.0}));
}

TEST(Evaluate, ZeroCellForcesZeroAggregate) {
  std::vector<ScoredClip> clips;
  add_cell(clips, "Fan", 0, Domain::Source, {1, 2}, {3});
  add_cell(clips, "Fan", 0, Domain::Target, {3}, {1});
  add_cell(clips, "Fan", 1, Domain::Source, {1}, {2});
  add_cell(clips, "Fan", 1, Domain::Target, {1}, {2});
  const auto r = evaluate(clips);
  EXPECT_EQ(r.auc_target, 0.0);
  EXPECT_EQ(r.hauc, 0.0);
  EXPECT_GRHD_ERROR(evaluate(clips, 0.0), InvalidP);
}

TEST(Evaluate, CsvFormat) {
  std::vector<ScoredClip> clips;
  add_cell(clips, "Fan", 0, Domain::Source, {1, 2, 3, 4}, {2.5, 5});
  add_cell(clips, "Fan", 0, Domain::Target, {1}, {2});
  const auto csv = evaluate(clips).to_csv();
  EXPECT_EQ(csv.rfind("machine,section,domain,metric,value\n", 0), 0u);
  EXPECT_NE(csv.find("Fan,0,source,AUC,75.00\n"), std::string::npos);
  EXPECT_NE(csv.find("ALL,ALL,all,HAUC,"), std::string::npos);
}
