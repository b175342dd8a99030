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

// Black-box membership inference: gap, Shokri shadow-model, Watson
// difficulty-calibrated and sampling attacks. Attacks see a target only
// through Target::query, which returns published confidence vectors.

#ifndef MIA_ATTACKS_HPP_
#define MIA_ATTACKS_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mia/core.hpp"
#include "mia/data.hpp"
#include "mia/defenses.hpp"
#include "mia/ensemble.hpp"
#include "mia/metrics.hpp"
#include "mia/nn.hpp"

namespace mia {

class Target {
 public:
  virtual ~Target() = default;
  // One published probability row per input row.
  virtual Eigen::MatrixXd query(const Eigen::MatrixXd& x) const = 0;
  virtual std::string describe() const = 0;
};

class ModelTarget final : public Target {
 public:
  explicit ModelTarget(const MLPModel& model) : model_(&model) {}
  Eigen::MatrixXd query(const Eigen::MatrixXd& x) const override {
    return forward_batch(*model_, x);
  }
  std::string describe() const override { return "single model"; }

 private:
  const MLPModel* model_;
};

// Ensemble behind a fusion rule, optionally masked after fusion.
class EnsembleTarget final : public Target {
 public:
  EnsembleTarget(const EnsembleModel& e, FusionRule rule, std::optional<MaskConfig> mask = {})
      : ensemble_(&e), rule_(rule), mask_(mask) {
    e.validate();
    weights_for(e, rule);
  }
  Eigen::MatrixXd query(const Eigen::MatrixXd& x) const override {
    Eigen::MatrixXd fused =
        fuse_outputs(rule_, ensemble_outputs(*ensemble_, x), weights_for(*ensemble_, rule_));
    return mask_ ? memguard_rows(fused, x, *mask_) : fused;
  }
  std::string describe() const override {
    return to_string(ensemble_->kind) + "/" + std::to_string(ensemble_->size()) + "/" +
           to_string(rule_) + (mask_ ? "/memguard" : "");
  }

 private:
  const EnsembleModel* ensemble_;
  FusionRule rule_;
  std::optional<MaskConfig> mask_;
};

// Member iff the published label is correct: score 1, else 0.
inline AttackScoreSet gap_attack(std::span<const PredictionRecord> records,
                                 std::string target = {}) {
  AttackScoreSet s;
  s.attack_name = "gap";
  s.target = std::move(target);
  for (const auto& r : records)
    s.entries.push_back({r.sample_id, r.fused_label == r.true_label ? 1.0 : 0.0, r.is_member});
  return s;
}

// Mean of member recall and nonmember specificity at a threshold.
inline double balanced_attack_accuracy(const AttackScoreSet& s, double threshold) {
  std::size_t tp = 0, tn = 0, n1 = 0, n0 = 0;
  for (const auto& e : s.entries) {
    const bool says_member = e.score >= threshold;
    if (e.is_member) {
      ++n1;
      tp += says_member;
    } else {
      ++n0;
      tn += !says_member;
    }
  }
  if (n1 == 0 || n0 == 0) throw UsageError("balanced accuracy needs members and nonmembers");
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(n1) +
                static_cast<double>(tn) / static_cast<double>(n0));
}

struct ShadowSet {
  std::vector<MLPModel> models;
  std::vector<IndexList> in_sets;
  std::vector<IndexList> out_sets;
  std::vector<std::map<int, MLPModel>> checkpoints;
  Architecture arch;
  TrainConfig config;  // mirrors the victim's

  // Same shadows, each replaced by its snapshot at `epoch`.
  ShadowSet at_epoch(int epoch) const {
    ShadowSet s = *this;
    s.checkpoints.clear();
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (!checkpoints[i].count(epoch))
        throw ConfigError("no shadow checkpoint at epoch " + std::to_string(epoch));
      s.models[i] = checkpoints[i].at(epoch);
    }
    return s;
  }
};

// Shadow i trains on a random half of d_s; the other half is its out-set.
inline ShadowSet train_shadows(const LabeledDataset& data, std::span<const std::size_t> d_s,
                               std::size_t k, const Architecture& arch,
                               const TrainConfig& victim_config, std::uint64_t seed,
                               unsigned threads = 1, const ModelTrainer& trainer = {}) {
  if (k == 0) throw ConfigError("need at least one shadow model");
  if (d_s.empty()) throw UnavailableAttackError("shadow pool is empty");
  if (d_s.size() < 2 * k)
    throw ConfigError("shadow pool of " + std::to_string(d_s.size()) + " samples is too small for " +
                      std::to_string(k) + " shadows");
  ShadowSet s;
  s.arch = arch;
  s.config = victim_config;
  s.models.resize(k);
  s.checkpoints.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    IndexList perm = shuffled(d_s, derive_seed(seed, "shadow/split", i));
    const auto half = static_cast<std::ptrdiff_t>(perm.size() / 2);
    s.in_sets.emplace_back(perm.begin(), perm.begin() + half);
    s.out_sets.emplace_back(perm.begin() + half, perm.end());
  }
  parallel_for(k, threads, [&](std::size_t i) {
    TrainConfig c = victim_config;
    c.seed = derive_seed(seed, "shadow/model", i);
    auto r = run_trainer(trainer, data, s.in_sets[i], arch, c);
    s.models[i] = std::move(r.model);
    s.checkpoints[i] = std::move(r.checkpoints);
  });
  return s;
}

// Attack feature: confidence vector followed by the one-hot true label.
inline Eigen::MatrixXd attack_features(const Eigen::MatrixXd& conf, std::span<const int> labels) {
  const auto k = conf.cols();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(conf.rows(), 2 * k);
  f.leftCols(k) = conf;
  for (Eigen::Index i = 0; i < conf.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw UsageError("label outside class range");
    f(i, k + y) = 1.0;
  }
  return f;
}

struct AttackDataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;  // 1 = member
};

// Per shadow: its in-set rows (label 1) then its out-set rows (label 0).
inline AttackDataset build_attack_dataset(const ShadowSet& shadows, const LabeledDataset& data) {
  std::vector<Eigen::MatrixXd> blocks;
  AttackDataset out;
  Eigen::Index rows = 0;
  for (std::size_t i = 0; i < shadows.models.size(); ++i) {
    for (int member : {1, 0}) {
      const auto& idx = member ? shadows.in_sets[i] : shadows.out_sets[i];
      blocks.push_back(
          attack_features(forward_batch(shadows.models[i], data.rows(idx)), data.labels_of(idx)));
      rows += blocks.back().rows();
      out.labels.insert(out.labels.end(), idx.size(), member);
    }
  }
  out.features.resize(rows, 2 * static_cast<Eigen::Index>(data.num_classes));
  Eigen::Index r = 0;
  for (const auto& b : blocks) {
    out.features.middleRows(r, b.rows()) = b;
    r += b.rows();
  }
  return out;
}

// Attack classifier: 128-128-64 hidden units on the attack features.
inline Architecture default_attack_architecture() { return {{128, 128, 64}, Activation::relu}; }

inline MLPModel train_attack_model(const AttackDataset& ds, const Architecture& arch,
                                   const TrainConfig& config) {
  if (ds.labels.empty()) throw UnavailableAttackError("attack dataset is empty");
  auto data = LabeledDataset::from(ds.features, ds.labels, 2);
  IndexList all(ds.labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return train_model(data, all, arch, config).model;
}

// Member probability the attack model assigns to each published row.
inline Eigen::VectorXd shokri_scores(const MLPModel& attack_model, const Eigen::MatrixXd& conf,
                                     std::span<const int> labels) {
  return forward_batch(attack_model, attack_features(conf, labels)).col(1);
}

inline AttackScoreSet shokri_attack(const MLPModel& attack_model, const Target& target,
                                    const LabeledDataset& data, std::span<const std::size_t> eval,
                                    const MembershipGroundTruth& truth) {
  AttackScoreSet s;
  s.attack_name = "shokri";
  s.target = target.describe();
  const auto scores = shokri_scores(attack_model, target.query(data.rows(eval)), data.labels_of(eval));
  for (std::size_t i = 0; i < eval.size(); ++i)
    s.entries.push_back({eval[i], scores(static_cast<Eigen::Index>(i)), truth.is_member(eval[i])});
  s.validate();
  return s;
}

// Target score minus the mean score the calibration models give the same
// sample; the base score is the Shokri attack-model output.
inline AttackScoreSet watson_attack(const MLPModel& attack_model, const Target& target,
                                    std::span<const Target* const> calibration,
                                    const LabeledDataset& data, std::span<const std::size_t> eval,
                                    const MembershipGroundTruth& truth) {
  if (calibration.empty()) throw UnavailableAttackError("Watson attack needs calibration models");
  const Eigen::MatrixXd x = data.rows(eval);
  const auto labels = data.labels_of(eval);
  const Eigen::VectorXd base = shokri_scores(attack_model, target.query(x), labels);
  Eigen::VectorXd reference = Eigen::VectorXd::Zero(base.size());
  for (const Target* c : calibration) reference += shokri_scores(attack_model, c->query(x), labels);
  reference /= static_cast<double>(calibration.size());
  AttackScoreSet s;
  s.attack_name = "watson";
  s.target = target.describe();
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    s.entries.push_back({eval[i], base(r) - reference(r), truth.is_member(eval[i])});
  }
  s.validate();
  return s;
}

// 10 log-spaced perturbation scales in [1e-3, 1], relative to each
// feature's range.
inline std::vector<double> default_sigma_grid() {
  std::vector<double> g;
  for (int i = 0; i < 10; ++i) g.push_back(std::pow(10.0, -3.0 + 3.0 * i / 9.0));
  return g;
}

// RNG stream for the perturbations of one sample at one grid point.
inline std::uint64_t sampling_stream_seed(std::uint64_t seed, std::size_t grid_index,
                                          std::size_t sample_id) {
  return derive_seed(derive_seed(seed, "sampling/sigma", grid_index), "sampling/sample", sample_id);
}

inline Eigen::MatrixXd perturb_copies(const LabeledDataset& data, std::size_t sample_id,
                                      int copies, double sigma, Rng& rng) {
  const auto d = static_cast<Eigen::Index>(data.dims());
  Eigen::MatrixXd out(copies, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int c = 0; c < copies; ++c) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto [lo, hi] = data.feature_range[static_cast<std::size_t>(j)];
      const double scale = sigma * (hi - lo);
      double v = data.features(static_cast<Eigen::Index>(sample_id), j);
      if (scale > 0) v = std::clamp(v + scale * normal(rng), lo, hi);
      out(c, j) = v;
    }
  }
  return out;
}

struct SamplingAttackResult {
  AttackScoreSet best;               // the grid point with the highest AUC
  std::vector<double> sigma_grid;
  std::vector<double> auc_per_sigma;
  std::vector<std::vector<int>> flips;  // [grid index][eval position]
};

// Score = k_perturb minus the number of perturbed copies whose published
// label differs from the clean one. Reports the grid point the attacker
// likes best (highest AUC, lowest index on ties).
inline SamplingAttackResult sampling_attack(const Target& target, const LabeledDataset& data,
                                            std::span<const std::size_t> eval,
                                            const MembershipGroundTruth& truth, int k_perturb,
                                            std::span<const double> sigma_grid,
                                            std::uint64_t seed) {
  if (k_perturb <= 0) throw ConfigError("k_perturb must be positive");
  if (sigma_grid.empty()) throw ConfigError("sigma grid must not be empty");
  const Eigen::MatrixXd clean = target.query(data.rows(eval));
  SamplingAttackResult out;
  out.sigma_grid.assign(sigma_grid.begin(), sigma_grid.end());
  std::size_t best = 0;
  std::vector<AttackScoreSet> sets;
  for (std::size_t g = 0; g < sigma_grid.size(); ++g) {
    Eigen::MatrixXd queries(static_cast<Eigen::Index>(eval.size()) * k_perturb,
                            static_cast<Eigen::Index>(data.dims()));
    for (std::size_t i = 0; i < eval.size(); ++i) {
      Rng rng = make_rng(sampling_stream_seed(seed, g, eval[i]));
      queries.middleRows(static_cast<Eigen::Index>(i) * k_perturb, k_perturb) =
          perturb_copies(data, eval[i], k_perturb, sigma_grid[g], rng);
    }
    const Eigen::MatrixXd published = target.query(queries);
    AttackScoreSet s;
    s.attack_name = "sampling";
    s.target = target.describe();
    s.sigma = sigma_grid[g];
    std::vector<int> flips(eval.size(), 0);
    for (std::size_t i = 0; i < eval.size(); ++i) {
      const auto label = argmax(clean.row(static_cast<Eigen::Index>(i)).transpose());
      for (int c = 0; c < k_perturb; ++c)
        if (argmax(published.row(static_cast<Eigen::Index>(i) * k_perturb + c).transpose()) != label)
          ++flips[i];
      s.entries.push_back({eval[i], static_cast<double>(k_perturb - flips[i]),
                           truth.is_member(eval[i])});
    }
    out.auc_per_sigma.push_back(roc_auc(s));
    out.flips.push_back(std::move(flips));
    if (out.auc_per_sigma[g] > out.auc_per_sigma[best]) best = g;
    sets.push_back(std::move(s));
  }
  out.best = std::move(sets[best]);
  return out;
}

}  // namespace mia

#endif  // MIA_ATTACKS_HPP_
