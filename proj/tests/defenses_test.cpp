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
#include "mia/defenses.hpp"
#include "mia/io.hpp"

namespace mia {
namespace {

Eigen::VectorXd random_simplex(Eigen::Index k, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd v(k);
  for (Eigen::Index i = 0; i < k; ++i) v(i) = e(rng);
  return v / v.sum();
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

TEST(MemGuard, ZeroNoiseIsIdentity) {
  Rng rng = make_rng(1);
  auto v = random_simplex(5, rng);
  EXPECT_EQ(memguard_random(v, {0.0, 3}, rng), v);
}

TEST(MemGuard, PreservesLabelAndSimplexOnRandomInputs) {
  Rng rng = make_rng(2);
  for (int t = 0; t < 10000; ++t) {
    const auto k = static_cast<Eigen::Index>(2 + rng() % 12);
    auto v = random_simplex(k, rng);
    const double rho = t % 2 ? uniform01(rng) : 5.0 * uniform01(rng);
    auto out = memguard_random(v, {rho, 0}, rng);
    ASSERT_EQ(argmax(out), argmax(v));
    ASSERT_TRUE(is_simplex(out, 1e-9));
  }
}

TEST(MemGuard, OneHotInput) {
  Rng rng = make_rng(3);
  Eigen::VectorXd v(2);
  v << 1.0, 0.0;
  for (double rho : {0.1, 1.0, 10.0}) {
    auto out = memguard_random(v, {rho, 0}, rng);
    EXPECT_EQ(argmax(out), 0);
    EXPECT_NEAR(out.sum(), 1.0, 1e-12);
  }
}

TEST(MemGuard, RejectsNonSimplexAndNegativeNoise) {
  Rng rng = make_rng(4);
  Eigen::VectorXd bad(2);
  bad << 0.7, 0.7;
  EXPECT_THROW(memguard_random(bad, {0.1, 0}, rng), UsageError);
  Eigen::VectorXd ok(2);
  ok << 0.5, 0.5;
  EXPECT_THROW(memguard_random(ok, {-0.1, 0}, rng), ConfigError);
}

TEST(MemGuard, RowsAreDeterministicPerInput) {
  Rng rng = make_rng(5);
  Eigen::MatrixXd conf(3, 4), x = random_matrix(3, 2, rng);
  for (Eigen::Index i = 0; i < 3; ++i) conf.row(i) = random_simplex(4, rng).transpose();
  MaskConfig mask{0.2, 11};
  auto a = memguard_rows(conf, x, mask);
  EXPECT_EQ(a, memguard_rows(conf, x, mask));
  Eigen::MatrixXd swapped_conf = conf, swapped_x = x;
  swapped_conf.row(0).swap(swapped_conf.row(2));
  swapped_x.row(0).swap(swapped_x.row(2));
  auto b = memguard_rows(swapped_conf, swapped_x, mask);
  EXPECT_EQ(a.row(0), b.row(2));
  mask.seed = 12;
  EXPECT_NE(a, memguard_rows(conf, x, mask));
}

TEST(Mmd, IdenticalBatchesGiveZero) {
  Rng rng = make_rng(6);
  auto a = random_matrix(6, 3, rng);
  EXPECT_NEAR(mmd_squared(a, a, 1.0), 0.0, 1e-9);
  Eigen::MatrixXd permuted = a;
  permuted.row(0).swap(permuted.row(5));
  EXPECT_NEAR(mmd_squared(a, permuted, 0.7), 0.0, 1e-9);
}

TEST(Mmd, SymmetricAndNonNegative) {
  Rng rng = make_rng(7);
  for (int t = 0; t < 100; ++t) {
    auto a = random_matrix(1 + static_cast<Eigen::Index>(rng() % 6), 3, rng);
    auto b = random_matrix(1 + static_cast<Eigen::Index>(rng() % 6), 3, rng);
    const double bw = 0.2 + 2.0 * uniform01(rng);
    EXPECT_NEAR(mmd_squared(a, b, bw), mmd_squared(b, a, bw), 1e-12);
    EXPECT_GE(mmd_squared(a, b, bw), -1e-12);
  }
}

TEST(Mmd, MatchesDoubleLoop) {
  Eigen::MatrixXd a(3, 2), b(3, 2);
  a << 0.1, 0.9, 0.5, 0.5, 0.8, 0.2;
  b << 0.3, 0.7, 0.6, 0.4, 0.0, 1.0;
  const double bw = 0.5;
  auto k = [&](const Eigen::MatrixXd& x, Eigen::Index i, const Eigen::MatrixXd& y,
               Eigen::Index j) {
    double d2 = 0;
    for (Eigen::Index c = 0; c < 2; ++c) d2 += (x(i, c) - y(j, c)) * (x(i, c) - y(j, c));
    return std::exp(-d2 / (2 * bw * bw));
  };
  double aa = 0, bb = 0, ab = 0;
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) {
      aa += k(a, i, a, j);
      bb += k(b, i, b, j);
      ab += k(a, i, b, j);
    }
  EXPECT_NEAR(mmd_squared(a, b, bw), aa / 9 + bb / 9 - 2 * ab / 9, 1e-9);
}

TEST(Mmd, InputGradientMatchesFiniteDifferences) {
  Rng rng = make_rng(8);
  auto a = random_matrix(4, 3, rng), b = random_matrix(5, 3, rng);
  auto v = mmd_squared_with_grad(a, b, 0.9);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    Eigen::MatrixXd p = a, m = a;
    p(i) += h;
    m(i) -= h;
    EXPECT_NEAR((mmd_squared(p, b, 0.9) - mmd_squared(m, b, 0.9)) / (2 * h), v.grad_a(i), 1e-7);
  }
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    Eigen::MatrixXd p = b, m = b;
    p(i) += h;
    m(i) -= h;
    EXPECT_NEAR((mmd_squared(a, p, 0.9) - mmd_squared(a, m, 0.9)) / (2 * h), v.grad_b(i), 1e-7);
  }
}

TEST(Mmd, RejectsBadArguments) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  EXPECT_THROW(mmd_squared(a, a, 0.0), ConfigError);
  EXPECT_THROW(mmd_squared(a, Eigen::MatrixXd(0, 2), 1.0), UsageError);
  EXPECT_THROW(mmd_squared(a, Eigen::MatrixXd::Zero(2, 3), 1.0), ShapeError);
}

MLPModel random_model(std::vector<std::size_t> sizes, std::uint64_t seed) {
  return MLPModel::glorot(std::move(sizes), Activation::tanh, seed);
}

TEST(MmdLoss, CombinedGradientMatchesFiniteDifferences) {
  Rng rng = make_rng(9);
  auto m = random_model({3, 5, 4}, 1);
  for (auto& b : m.biases) b = random_matrix(b.size(), 1, rng) * 0.3;
  auto x = random_matrix(6, 3, rng), ref = random_matrix(5, 3, rng);
  std::vector<int> y{0, 1, 2, 3, 0, 1};
  const double beta = 2.0, bw = 0.4;
  auto total = [&](const MLPModel& model) {
    return loss_and_grad(model, x, y).loss + beta * mmd_loss_and_grad(model, x, ref, bw).loss;
  };
  auto grads = loss_and_grad(m, x, y).grads;
  grads.add_scaled(mmd_loss_and_grad(m, x, ref, bw).grads, beta);
  const double h = 1e-5;
  auto check = [&](double analytic, auto&& poke) {
    MLPModel p = m, q = m;
    poke(p, h);
    poke(q, -h);
    const double numeric = (total(p) - total(q)) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    EXPECT_LT(std::abs(numeric - analytic) / denom, 1e-4);
  };
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < m.weights[l].size(); ++i)
      check(grads.weights[l](i), [&](MLPModel& t, double d) { t.weights[l](i) += d; });
    for (Eigen::Index i = 0; i < m.biases[l].size(); ++i)
      check(grads.biases[l](i), [&](MLPModel& t, double d) { t.biases[l](i) += d; });
  }
}

struct MmdSetup {
  GeneratedData g = generate_gaussian_mixture({4, 8, 30, 30, 1.5, 21});
  IndexList train, reference;
  TrainConfig config;
  Architecture arch{{32}, Activation::relu};

  MmdSetup() {
    const auto& pool = g.train_portion;
    train.assign(pool.begin(), pool.begin() + 80);
    reference.assign(pool.begin() + 80, pool.end());
    config.epochs = 60;
    config.batch_size = 16;
    config.lr_schedule = ConstantLr{0.1};
    config.seed = 5;
  }
};

TEST(MmdMixup, ZeroWeightEqualsPlainTraining) {
  MmdSetup s;
  auto plain = train_model(s.g.dataset, s.train, s.arch, s.config);
  MMDConfig mmd{1.0, 0.0, 16};
  auto off = train_with_mmd_mixup(s.g.dataset, s.train, s.reference, s.arch, s.config, mmd);
  EXPECT_EQ(serialize(plain.model), serialize(off.model));
}

TEST(MmdMixup, PositiveWeightShrinksOutputGap) {
  MmdSetup s;
  s.config.mixup_alpha = 1.0;
  auto gap = [&](const MLPModel& m) {
    return mmd_squared(forward_batch(m, s.g.dataset.rows(s.train)),
                       forward_batch(m, s.g.dataset.rows(s.reference)), 0.5);
  };
  auto base = train_with_mmd_mixup(s.g.dataset, s.train, s.reference, s.arch, s.config,
                                   {0.5, 0.0, 16});
  auto defended = train_with_mmd_mixup(s.g.dataset, s.train, s.reference, s.arch, s.config,
                                       {0.5, 5.0, 16});
  EXPECT_LE(gap(defended.model), gap(base.model));
}

TEST(MmdMixup, DeterministicAndValidated) {
  MmdSetup s;
  s.config.epochs = 5;
  MMDConfig mmd{1.0, 1.0, 8};
  auto a = train_with_mmd_mixup(s.g.dataset, s.train, s.reference, s.arch, s.config, mmd);
  auto b = train_with_mmd_mixup(s.g.dataset, s.train, s.reference, s.arch, s.config, mmd);
  EXPECT_EQ(serialize(a.model), serialize(b.model));
  EXPECT_THROW(train_with_mmd_mixup(s.g.dataset, s.train, IndexList{}, s.arch, s.config, mmd),
               ConfigError);
  EXPECT_THROW(train_with_mmd_mixup(s.g.dataset, s.train, s.reference, s.arch, s.config,
                                    {0.0, 1.0, 8}),
               ConfigError);
}

}  // namespace
}  // namespace mia
