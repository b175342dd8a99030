//
// Copyright 2026 The mia-ensemble Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "mia/data.hpp"
#include "mia/ensemble.hpp"
#include "mia/metrics.hpp"

namespace mia {
namespace {

std::vector<bool> membership(std::size_t members, std::size_t nonmembers) {
  std::vector<bool> m(members, true);
  m.insert(m.end(), nonmembers, false);
  return m;
}

double brute_force_auc(const std::vector<double>& s, const std::vector<bool>& m) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (m[i] && !m[j]) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

// Every observed score is a candidate threshold, plus one above them all.
double sweep_tpr(const std::vector<double>& s, const std::vector<bool>& m, double fpr) {
  std::vector<double> thresholds = s;
  thresholds.push_back(std::numeric_limits<double>::infinity());
  double best_t = std::numeric_limits<double>::infinity();
  for (double t : thresholds) {
    double fp = 0, n0 = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!m[i]) {
        n0 += 1;
        fp += s[i] >= t;
      }
    if (fp / n0 <= fpr) best_t = std::min(best_t, t);
  }
  double tp = 0, n1 = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (m[i]) {
      n1 += 1;
      tp += s[i] >= best_t;
    }
  return tp / n1;
}

TEST(RocAuc, Examples) {
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.9, 0.8, 0.1, 0.2}, membership(2, 2)), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, membership(2, 2)), 0.5);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.8, 0.3, 0.5, 0.1}, membership(2, 2)), 0.75);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, membership(2, 2)), 0.0);
}

TEST(RocAuc, SingleClassIsUndefined) {
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, membership(2, 0)), UsageError);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1}, membership(0, 2)), ShapeError);
}

TEST(RocAuc, MatchesBruteForceAndIgnoresMonotoneTransforms) {
  Rng rng = make_rng(1);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng() % 199;
    std::vector<double> s(n);
    std::vector<bool> m(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 20) / 10.0;  // plenty of ties
      m[i] = rng() % 2;
    }
    m[0] = true;
    m[1] = false;
    const double auc = roc_auc(s, m);
    ASSERT_NEAR(auc, brute_force_auc(s, m), 1e-12);
    std::vector<double> e(n), a(n);
    for (std::size_t i = 0; i < n; ++i) {
      e[i] = std::exp(s[i]);
      a[i] = 3.0 * s[i] - 7.0;
    }
    ASSERT_NEAR(roc_auc(e, m), auc, 1e-12);
    ASSERT_NEAR(roc_auc(a, m), auc, 1e-12);
  }
}

TEST(TprAtFpr, Examples) {
  const std::vector<double> separated{0.9, 0.8, 0.1, 0.2};
  for (double f : {0.0, 0.1, 0.5, 1.0})
    EXPECT_DOUBLE_EQ(tpr_at_fpr(separated, membership(2, 2), f), 1.0);
  EXPECT_DOUBLE_EQ(tpr_at_fpr(std::vector<double>{0.5, 0.5, 0.5, 0.5}, membership(2, 2), 0.0),
                   0.0);
}

TEST(TprAtFpr, MatchesSweepOnHandListedScores) {
  const std::vector<double> s{0.95, 0.9, 0.85, 0.7, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2,
                              0.92, 0.8, 0.7, 0.55, 0.45, 0.35, 0.3, 0.2, 0.1, 0.05};
  const auto m = membership(10, 10);
  for (double f : {0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0})
    EXPECT_DOUBLE_EQ(tpr_at_fpr(s, m, f), sweep_tpr(s, m, f)) << "fpr " << f;
  EXPECT_DOUBLE_EQ(tpr_at_fpr(s, m, 0.1), 0.3);
}

TEST(TprAtFpr, MonotoneInTarget) {
  Rng rng = make_rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> s(40);
    for (auto& v : s) v = uniform01(rng);
    const auto m = membership(20, 20);
    double prev = -1;
    for (int k = 0; k <= 20; ++k) {
      const double f = k / 20.0, tpr = tpr_at_fpr(s, m, f);
      ASSERT_GE(tpr, prev);
      ASSERT_DOUBLE_EQ(tpr, sweep_tpr(s, m, f));
      prev = tpr;
    }
  }
}

TEST(JsDivergence, Examples) {
  const std::vector<double> a{0.1, 0.5, 0.93, 0.93};
  EXPECT_NEAR(js_divergence(a, a), 0.0, 1e-12);
  EXPECT_NEAR(js_divergence(std::vector<double>(5, 1.0), std::vector<double>(7, 0.0)), 1.0,
              1e-9);
}

TEST(JsDivergence, MatchesKlToMidpoint) {
  const std::vector<double> a{0.1, 0.1, 0.6, 0.9}, b{0.1, 0.6, 0.6, 0.6, 0.4};
  const std::size_t bins = 4;
  const double eps = 1e-12;
  // bins: [0,.25) [.25,.5) [.5,.75) [.75,1]
  const std::vector<double> ca{2, 0, 1, 1}, cb{1, 1, 3, 0};
  double js = 0;
  for (std::size_t k = 0; k < bins; ++k) {
    const double p = (ca[k] + eps) / (4 + bins * eps), q = (cb[k] + eps) / (5 + bins * eps);
    const double mid = (p + q) / 2;
    js += 0.5 * p * std::log2(p / mid) + 0.5 * q * std::log2(q / mid);
  }
  EXPECT_NEAR(js_divergence(a, b, bins), js, 1e-12);
}

TEST(JsDivergence, BoundedAndSymmetric) {
  Rng rng = make_rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(1 + rng() % 50), b(1 + rng() % 50);
    for (auto& v : a) v = uniform01(rng);
    for (auto& v : b) v = uniform01(rng) * uniform01(rng);
    const auto bins = 1 + rng() % 120;
    const double ab = js_divergence(a, b, bins);
    ASSERT_GE(ab, 0.0);
    ASSERT_LE(ab, 1.0);
    ASSERT_NEAR(ab, js_divergence(b, a, bins), 1e-12);
  }
  EXPECT_THROW(js_divergence(std::vector<double>{}, std::vector<double>{0.5}), UsageError);
  EXPECT_THROW(js_divergence(std::vector<double>{0.5}, std::vector<double>{0.5}, 0), ConfigError);
}

PredictionRecord record(std::size_t id, Eigen::VectorXd average, Eigen::VectorXd fused) {
  PredictionRecord r;
  r.sample_id = id;
  r.average = std::move(average);
  r.fused = std::move(fused);
  return r;
}

Eigen::VectorXd random_simplex(Eigen::Index k, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd v(k);
  for (Eigen::Index i = 0; i < k; ++i) v(i) = e(rng);
  return v / v.sum();
}

TEST(Distortion, Examples) {
  Eigen::VectorXd a(2), b(2);
  a << 0.9, 0.1;
  b << 0.1, 0.9;
  std::vector<PredictionRecord> base{record(0, a, a)}, defended{record(0, b, b)};
  EXPECT_NEAR(confidence_distortion(base, defended), 0.8, 1e-15);
  EXPECT_EQ(confidence_distortion(base, base), 0.0);
}

TEST(Distortion, MatchesNaiveLoopAndSelfIsZero) {
  Rng rng = make_rng(4);
  std::vector<PredictionRecord> base, defended;
  double expected = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    auto avg = random_simplex(6, rng), out = random_simplex(6, rng);
    double l1 = 0;
    for (Eigen::Index k = 0; k < 6; ++k) l1 += std::abs(avg(k) - out(k));
    expected += l1 / 2;
    base.push_back(record(i, avg, avg));
    defended.push_back(record(i, out, out));
  }
  EXPECT_NEAR(confidence_distortion(base, defended), expected / 50, 1e-12);
  EXPECT_EQ(confidence_distortion(base, base), 0.0);
  EXPECT_EQ(confidence_distortion(defended, defended), 0.0);
  defended.pop_back();
  EXPECT_THROW(confidence_distortion(base, defended), ShapeError);
}

PredictionRecord labeled(int truth, int predicted, int c, bool member, double conf) {
  PredictionRecord r;
  r.true_label = truth;
  r.fused_label = predicted;
  r.agreement_c = c;
  r.is_member = member;
  r.fused = Eigen::VectorXd(2);
  r.fused << conf, 1 - conf;
  return r;
}

TEST(AgreementStats, SingleModelLevels) {
  std::vector<PredictionRecord> rs{labeled(0, 0, 1, true, 0.9), labeled(0, 1, 0, true, 0.6),
                                   labeled(1, 1, 1, false, 0.7), labeled(1, 1, 1, false, 0.8),
                                   labeled(0, 1, 0, false, 0.55)};
  auto s = agreement_stats(rs, 1);
  EXPECT_EQ(s.member_hist, (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(s.nonmember_hist, (std::vector<std::size_t>{1, 2}));
  EXPECT_NEAR(s.nonmember_mean_conf[1], 0.75, 1e-15);
  EXPECT_NEAR(s.mean_c(false), 2.0 / 3, 1e-15);
  EXPECT_THROW(agreement_stats(std::vector<PredictionRecord>{labeled(0, 0, 3, true, 1)}, 2),
               ShapeError);
}

TEST(AgreementStats, TotalsAndOverfitTrend) {
  auto g = generate_gaussian_mixture({5, 10, 20, 40, 1.0, 51});
  TrainConfig c;
  c.epochs = 60;
  c.batch_size = 10;
  c.lr_schedule = ConstantLr{0.1};
  c.seed = 4;
  auto e = train_deep_ensemble(g.dataset, g.split.victim_train, 10, {{32}, Activation::relu}, c);
  auto truth = MembershipGroundTruth::from(g.split);
  IndexList eval = g.split.victim_train;
  eval.insert(eval.end(), g.test_portion.begin(), g.test_portion.end());
  auto rs = predict_all(e, FusionRule::average, g.dataset, eval, truth);
  auto s = agreement_stats(rs, 10);
  std::size_t m = 0, n = 0;
  for (auto v : s.member_hist) m += v;
  for (auto v : s.nonmember_hist) n += v;
  EXPECT_EQ(m, g.split.victim_train.size());
  EXPECT_EQ(n, g.test_portion.size());
  EXPECT_GE(s.mean_c(true), s.mean_c(false));
}

TEST(Accuracy, Counting) {
  std::vector<PredictionRecord> all_right, all_wrong, mixed;
  for (int i = 0; i < 5; ++i) {
    all_right.push_back(labeled(i % 2, i % 2, 1, true, 0.9));
    all_wrong.push_back(labeled(i % 2, 1 - i % 2, 0, true, 0.9));
  }
  EXPECT_EQ(accuracy(all_right), 1.0);
  EXPECT_EQ(accuracy(all_wrong), 0.0);
  // 20 records, the ones with i % 3 == 0 misclassified: 7 wrong, 13 right.
  for (int i = 0; i < 20; ++i) mixed.push_back(labeled(1, i % 3 == 0 ? 0 : 1, 1, false, 0.6));
  EXPECT_EQ(correct_count(mixed), 13u);
  EXPECT_DOUBLE_EQ(accuracy(mixed), 13.0 / 20);
  EXPECT_THROW(accuracy(std::vector<PredictionRecord>{}), UsageError);
}

}  // namespace
}  // namespace mia
