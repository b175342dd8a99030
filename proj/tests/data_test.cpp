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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "mia/data.hpp"

namespace mia {
namespace {

IndexList iota_list(std::size_t n, std::size_t start = 0) {
  IndexList v(n);
  std::iota(v.begin(), v.end(), start);
  return v;
}

bool intersects(const IndexList& a, const IndexList& b) {
  for (auto x : a)
    for (auto y : b)
      if (x == y) return true;
  return false;
}

TEST(GaussianMixture, CountsAndBalance) {
  GaussianMixtureSpec spec{2, 2, 10, 10, 3.0, 1};
  auto g = generate_gaussian_mixture(spec);
  EXPECT_EQ(g.dataset.size(), 40u);
  EXPECT_EQ(std::count(g.dataset.labels.begin(), g.dataset.labels.end(), 0), 20);
  EXPECT_EQ(g.train_portion.size(), 20u);
  EXPECT_EQ(g.test_portion.size(), 20u);
  EXPECT_EQ(g.split.victim_train.size(), 10u);
  EXPECT_EQ(g.split.shadow_pool.size(), 10u);
  EXPECT_NO_THROW(g.dataset.validate());
}

TEST(GaussianMixture, DeterministicUnderSeed) {
  GaussianMixtureSpec spec{3, 4, 5, 5, 2.0, 11};
  auto a = generate_gaussian_mixture(spec), b = generate_gaussian_mixture(spec);
  EXPECT_TRUE(a.dataset.features == b.dataset.features);
  EXPECT_EQ(a.dataset.labels, b.dataset.labels);
  spec.seed = 12;
  EXPECT_FALSE(generate_gaussian_mixture(spec).dataset.features == a.dataset.features);
}

TEST(GaussianMixture, WellSeparatedClassesAreNearestMeanSeparable) {
  GaussianMixtureSpec spec{5, 10, 100, 200, 8.0, 5};
  auto g = generate_gaussian_mixture(spec);
  const auto& d = g.dataset;
  std::vector<Eigen::VectorXd> means(spec.classes, Eigen::VectorXd::Zero(10));
  std::vector<int> counts(spec.classes, 0);
  for (auto i : g.train_portion) {
    means[d.labels[i]] += d.features.row(static_cast<Eigen::Index>(i)).transpose();
    ++counts[d.labels[i]];
  }
  for (std::size_t k = 0; k < spec.classes; ++k) means[k] /= counts[k];
  std::size_t correct = 0;
  for (auto i : g.test_portion) {
    int best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < spec.classes; ++k) {
      const double dist =
          (d.features.row(static_cast<Eigen::Index>(i)).transpose() - means[k]).squaredNorm();
      if (dist < best_d) best_d = dist, best = static_cast<int>(k);
    }
    if (best == d.labels[i]) ++correct;
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(g.test_portion.size()), 0.99);
}

TEST(GaussianMixture, RejectsBadPreconditions) {
  EXPECT_THROW(generate_gaussian_mixture({1, 2, 2, 2, 1.0, 0}), ConfigError);
  EXPECT_THROW(generate_gaussian_mixture({2, 1, 2, 2, 1.0, 0}), ConfigError);
  EXPECT_THROW(generate_gaussian_mixture({2, 2, 1, 2, 1.0, 0}), ConfigError);
  EXPECT_THROW(generate_gaussian_mixture({2, 2, 2, 2, -1.0, 0}), ConfigError);
}

TEST(Csv, MapsLabelsByFirstAppearance) {
  std::istringstream in("x,y,label\n1,2,a\n3,4,b\n5,6,a\n");
  auto d = parse_csv(in, "label");
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(d.class_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(d.num_classes, 2u);
  EXPECT_EQ(d.feature_range[0], (std::pair<double, double>{1, 5}));
}

TEST(Csv, NonNumericFeatureReportsItsLine) {
  std::ostringstream text;
  text << "f,label\n";
  for (int i = 0; i < 5; ++i) text << i << ",c" << (i % 2) << "\n";
  text << "oops,c0\n";  // line 7
  std::istringstream in(text.str());
  try {
    parse_csv(in, "label");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos);
  }
}

TEST(Csv, RaggedRowsAndUnknownLabelColumnFail) {
  std::istringstream ragged("a,b,label\n1,2,x\n1,x\n");
  EXPECT_THROW(parse_csv(ragged, "label"), ParseError);
  std::istringstream no_label("a,b\n1,2\n");
  EXPECT_THROW(parse_csv(no_label, "label"), ParseError);
}

TEST(Csv, RoundTripIsExact) {
  auto g = generate_gaussian_mixture({4, 6, 10, 5, 2.5, 3});
  std::stringstream buf;
  write_csv(g.dataset, buf);
  auto back = parse_csv(buf, "label");
  ASSERT_EQ(back.size(), g.dataset.size());
  EXPECT_LE((back.features - g.dataset.features).cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t i = 0; i < back.size(); ++i)
    EXPECT_EQ(back.class_names[back.labels[i]], g.dataset.class_names[g.dataset.labels[i]]);
}

TEST(MakeSplit, HalvesAreDisjoint) {
  auto train = iota_list(100), test = iota_list(40, 100);
  auto p = make_split(train, test, 0.5, 0.5, 1);
  EXPECT_EQ(p.victim_train.size(), 50u);
  EXPECT_EQ(p.shadow_pool.size(), 50u);
  EXPECT_FALSE(intersects(p.victim_train, p.shadow_pool));
}

TEST(MakeSplit, FullVictimLeavesEmptyShadowPool) {
  auto p = make_split(iota_list(30), iota_list(10, 30), 1.0, 0.0, 4);
  EXPECT_EQ(p.victim_train.size(), 30u);
  EXPECT_TRUE(p.shadow_pool.empty());
}

TEST(MakeSplit, DisjointForManySeeds) {
  auto train = iota_list(97), test = iota_list(31, 97);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto p = make_split(train, test, 0.4, 0.35, seed);
    EXPECT_FALSE(intersects(p.victim_train, p.shadow_pool));
    EXPECT_FALSE(intersects(p.victim_train, p.test));
    EXPECT_FALSE(intersects(p.shadow_pool, p.test));
    std::set<std::size_t> train_set(train.begin(), train.end());
    for (auto i : p.victim_train) EXPECT_TRUE(train_set.count(i));
    for (auto i : p.shadow_pool) EXPECT_TRUE(train_set.count(i));
  }
}

TEST(MakeSplit, SeedDeterminesShuffle) {
  auto train = iota_list(60), test = iota_list(10, 60);
  EXPECT_EQ(make_split(train, test, 0.5, 0.5, 3).victim_train,
            make_split(train, test, 0.5, 0.5, 3).victim_train);
  EXPECT_NE(make_split(train, test, 0.5, 0.5, 3).victim_train,
            make_split(train, test, 0.5, 0.5, 4).victim_train);
  EXPECT_THROW(make_split(train, test, 0.7, 0.5, 3), ConfigError);
}

TEST(AttackerKnowsSplit, HandsOverEightyPercent) {
  auto train = iota_list(100), test = iota_list(50, 100);
  auto p = make_attacker_knows_split(train, test, 0.8, 2);
  EXPECT_EQ(p.victim_train, train);
  EXPECT_TRUE(p.shadow_pool.empty());
  std::size_t known_train = 0, known_test = 0;
  for (auto i : p.attacker_known) (i < 100 ? known_train : known_test) += 1;
  EXPECT_EQ(known_train, 80u);
  EXPECT_EQ(known_test, 40u);
  EXPECT_EQ(to_string(p.mode), "attacker_knows_80");
}

TEST(MembershipGroundTruth, FollowsVictimTrain) {
  auto p = make_split(iota_list(20), iota_list(5, 20), 0.5, 0.5, 8);
  auto truth = MembershipGroundTruth::from(p);
  for (auto i : p.victim_train) EXPECT_TRUE(truth.is_member(i));
  for (auto i : p.shadow_pool) EXPECT_FALSE(truth.is_member(i));
  for (auto i : p.test) EXPECT_FALSE(truth.is_member(i));
}

TEST(Bootstrap, KeepsSizeAndDrawsFromInput) {
  auto idx = iota_list(100, 1000);
  auto b = bootstrap_sample(idx, 5);
  EXPECT_EQ(b.size(), 100u);
  for (auto i : b) EXPECT_TRUE(i >= 1000 && i < 1100);
  EXPECT_EQ(bootstrap_sample(IndexList{7}, 1), IndexList{7});
  EXPECT_EQ(bootstrap_sample(idx, 5), b);
}

TEST(Bootstrap, UniqueFractionNearOneMinusInverseE) {
  auto b = bootstrap_sample(iota_list(10000), 17);
  const double unique = static_cast<double>(std::set<std::size_t>(b.begin(), b.end()).size());
  EXPECT_GE(unique / 10000, 0.61);
  EXPECT_LE(unique / 10000, 0.66);
}

TEST(PartitionDisjoint, SplitsEvenly) {
  auto parts = partition_disjoint(iota_list(10), 2, 1);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].size(), 5u);
  EXPECT_EQ(parts[1].size(), 5u);
  auto one = partition_disjoint(iota_list(10), 1, 1);
  ASSERT_EQ(one.size(), 1u);
  std::sort(one[0].begin(), one[0].end());
  EXPECT_EQ(one[0], iota_list(10));
}

TEST(PartitionDisjoint, PartsReassembleExactly) {
  Rng rng = make_rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng() % 200, parts = 1 + rng() % std::min<std::size_t>(n, 12);
    IndexList input;
    for (std::size_t i = 0; i < n; ++i) input.push_back(rng() % 100000 * 7 + i);  // distinct
    auto out = partition_disjoint(input, parts, rng());
    ASSERT_EQ(out.size(), parts);
    std::map<std::size_t, int> seen;
    std::size_t lo = n, hi = 0;
    for (const auto& p : out) {
      lo = std::min(lo, p.size());
      hi = std::max(hi, p.size());
      for (auto i : p) ++seen[i];
    }
    EXPECT_LE(hi - lo, 1u);
    EXPECT_EQ(seen.size(), n);
    for (auto i : input) EXPECT_EQ(seen[i], 1);
    for (std::size_t a = 0; a < out.size(); ++a)
      for (std::size_t b = a + 1; b < out.size(); ++b) EXPECT_FALSE(intersects(out[a], out[b]));
  }
}

}  // namespace
}  // namespace mia
