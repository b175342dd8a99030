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

// Ensemble construction (deep, bagging, partitioning, snapshot, weighted)
// and the confidence fusion rules applied to base-model outputs.

#ifndef MIA_ENSEMBLE_HPP_
#define MIA_ENSEMBLE_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mia/core.hpp"
#include "mia/data.hpp"
#include "mia/nn.hpp"

namespace mia {

enum class EnsembleKind { deep, bagging, partitioning, snapshot, weighted };
enum class FusionRule { average, first_agreed, max_agreed, max_confidence, weighted };

inline std::string to_string(EnsembleKind k) {
  switch (k) {
    case EnsembleKind::deep: return "deep";
    case EnsembleKind::bagging: return "bagging";
    case EnsembleKind::partitioning: return "partitioning";
    case EnsembleKind::snapshot: return "snapshot";
    case EnsembleKind::weighted: return "weighted";
  }
  return "?";
}

inline EnsembleKind ensemble_kind_from_string(const std::string& s) {
  for (auto k : {EnsembleKind::deep, EnsembleKind::bagging, EnsembleKind::partitioning,
                 EnsembleKind::snapshot, EnsembleKind::weighted})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown ensemble kind '" + s + "'");
}

inline std::string to_string(FusionRule r) {
  switch (r) {
    case FusionRule::average: return "average";
    case FusionRule::first_agreed: return "first_agreed";
    case FusionRule::max_agreed: return "max_agreed";
    case FusionRule::max_confidence: return "max_confidence";
    case FusionRule::weighted: return "weighted";
  }
  return "?";
}

inline FusionRule fusion_rule_from_string(const std::string& s) {
  for (auto r : {FusionRule::average, FusionRule::first_agreed, FusionRule::max_agreed,
                 FusionRule::max_confidence, FusionRule::weighted})
    if (to_string(r) == s) return r;
  throw ConfigError("unknown fusion rule '" + s + "'");
}

struct EnsembleModel {
  std::vector<MLPModel> models;
  EnsembleKind kind = EnsembleKind::deep;
  std::optional<std::vector<double>> weights;  // simplex, weighted kind only
  IndexList member_index_union;                // sorted, unique
  std::vector<IndexList> train_sets;           // per base model, as sampled
  std::vector<std::uint64_t> seeds;            // per base model
  // Per base model: epoch -> snapshot, for the configured checkpoint epochs.
  std::vector<std::map<int, MLPModel>> checkpoints;

  std::size_t size() const { return models.size(); }

  // Same ensemble with every base model replaced by its snapshot at `epoch`.
  EnsembleModel at_epoch(int epoch) const {
    EnsembleModel e = *this;
    e.checkpoints.clear();
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (i >= checkpoints.size() || !checkpoints[i].count(epoch))
        throw ConfigError("no checkpoint at epoch " + std::to_string(epoch));
      e.models[i] = checkpoints[i].at(epoch);
    }
    return e;
  }

  void validate() const {
    if (models.empty()) throw ConfigError("an ensemble needs at least one model");
    for (const auto& m : models) {
      m.validate();
      if (m.input_dim() != models.front().input_dim() ||
          m.num_classes() != models.front().num_classes())
        throw ShapeError("base models disagree on input dimension or class count");
    }
    if (weights) {
      if (weights->size() != models.size()) throw ShapeError("one weight per base model");
      double s = 0;
      for (double w : *weights) {
        if (!(w >= 0)) throw ConfigError("fusion weights must be non-negative");
        s += w;
      }
      if (std::abs(s - 1.0) > 1e-9) throw ConfigError("fusion weights must sum to 1");
    }
  }

  // First n base models, with the membership union recomputed for them.
  EnsembleModel prefix(std::size_t n) const;
};

namespace detail {

inline IndexList sorted_union(const std::vector<IndexList>& sets) {
  std::set<std::size_t> u;
  for (const auto& s : sets) u.insert(s.begin(), s.end());
  return IndexList(u.begin(), u.end());
}

}  // namespace detail

inline EnsembleModel EnsembleModel::prefix(std::size_t n) const {
  if (n == 0 || n > models.size())
    throw ConfigError("prefix size " + std::to_string(n) + " outside [1, " +
                      std::to_string(models.size()) + "]");
  EnsembleModel e;
  e.kind = kind;
  e.models.assign(models.begin(), models.begin() + static_cast<std::ptrdiff_t>(n));
  if (!train_sets.empty())
    e.train_sets.assign(train_sets.begin(), train_sets.begin() + static_cast<std::ptrdiff_t>(n));
  if (!seeds.empty())
    e.seeds.assign(seeds.begin(), seeds.begin() + static_cast<std::ptrdiff_t>(n));
  if (!checkpoints.empty())
    e.checkpoints.assign(checkpoints.begin(), checkpoints.begin() + static_cast<std::ptrdiff_t>(n));
  if (weights) {
    std::vector<double> w(weights->begin(), weights->begin() + static_cast<std::ptrdiff_t>(n));
    double total = 0;
    for (double v : w) total += v;
    for (double& v : w) v /= total;
    e.weights = std::move(w);
  }
  e.member_index_union = e.train_sets.empty() ? member_index_union
                                              : detail::sorted_union(e.train_sets);
  return e;
}

// Index of the largest entry; lowest index wins ties.
inline Eigen::Index argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

// Counts agreed-fusion fallbacks: samples where no base model predicts the
// averaged label, so the averaged vector is published instead.
struct FusionStats {
  std::size_t fallbacks = 0;
};

using ConfidenceList = std::span<const Eigen::VectorXd>;

namespace detail {
inline void check_confidences(ConfidenceList ys) {
  if (ys.empty()) throw UsageError("fusion needs at least one confidence vector");
  for (const auto& y : ys)
    if (y.size() != ys.front().size()) throw ShapeError("confidence vectors differ in length");
}
}  // namespace detail

inline Eigen::VectorXd fuse_average(ConfidenceList ys) {
  detail::check_confidences(ys);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(ys.front().size());
  for (const auto& y : ys) sum += y;
  return sum / static_cast<double>(ys.size());
}

inline Eigen::VectorXd fuse_weighted(ConfidenceList ys, std::span<const double> weights) {
  detail::check_confidences(ys);
  if (weights.size() != ys.size()) throw ShapeError("one weight per base model");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(ys.front().size());
  for (std::size_t i = 0; i < ys.size(); ++i) sum += weights[i] * ys[i];
  return sum;
}

// Lowest-index model whose label matches the averaged label.
inline Eigen::VectorXd fuse_first_agreed(ConfidenceList ys, FusionStats* stats = nullptr) {
  Eigen::VectorXd avg = fuse_average(ys);
  const auto label = argmax(avg);
  for (const auto& y : ys)
    if (argmax(y) == label) return y;
  if (stats) ++stats->fallbacks;
  return avg;
}

// Most confident model among those matching the averaged label.
inline Eigen::VectorXd fuse_max_agreed(ConfidenceList ys, FusionStats* stats = nullptr) {
  Eigen::VectorXd avg = fuse_average(ys);
  const auto label = argmax(avg);
  const Eigen::VectorXd* best = nullptr;
  for (const auto& y : ys)
    if (argmax(y) == label && (!best || y.maxCoeff() > best->maxCoeff())) best = &y;
  if (best) return *best;
  if (stats) ++stats->fallbacks;
  return avg;
}

// Most confident model overall; its label may differ from the averaged one.
inline Eigen::VectorXd fuse_max_confidence(ConfidenceList ys) {
  detail::check_confidences(ys);
  const Eigen::VectorXd* best = &ys.front();
  for (const auto& y : ys)
    if (y.maxCoeff() > best->maxCoeff()) best = &y;
  return *best;
}

inline Eigen::VectorXd fuse(FusionRule rule, ConfidenceList ys,
                            std::span<const double> weights = {},
                            FusionStats* stats = nullptr) {
  switch (rule) {
    case FusionRule::average: return fuse_average(ys);
    case FusionRule::first_agreed: return fuse_first_agreed(ys, stats);
    case FusionRule::max_agreed: return fuse_max_agreed(ys, stats);
    case FusionRule::max_confidence: return fuse_max_confidence(ys);
    case FusionRule::weighted: return fuse_weighted(ys, weights);
  }
  throw UsageError("unknown fusion rule");
}

// Per-model probability matrices (one row per input row).
inline std::vector<Eigen::MatrixXd> ensemble_outputs(const EnsembleModel& e,
                                                     const Eigen::MatrixXd& x) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(e.size());
  for (const auto& m : e.models) out.push_back(forward_batch(m, x));
  return out;
}

inline std::vector<Eigen::VectorXd> confidences_of_row(const std::vector<Eigen::MatrixXd>& outputs,
                                                       Eigen::Index row) {
  std::vector<Eigen::VectorXd> ys;
  ys.reserve(outputs.size());
  for (const auto& o : outputs) ys.push_back(o.row(row).transpose());
  return ys;
}

inline Eigen::MatrixXd fuse_outputs(FusionRule rule, const std::vector<Eigen::MatrixXd>& outputs,
                                    std::span<const double> weights = {},
                                    FusionStats* stats = nullptr) {
  if (outputs.empty()) throw UsageError("fusion needs at least one model output");
  Eigen::MatrixXd fused(outputs.front().rows(), outputs.front().cols());
  for (Eigen::Index r = 0; r < fused.rows(); ++r) {
    auto ys = confidences_of_row(outputs, r);
    fused.row(r) = fuse(rule, ys, weights, stats).transpose();
  }
  return fused;
}

inline std::span<const double> weights_for(const EnsembleModel& e, FusionRule rule) {
  if (rule != FusionRule::weighted) return {};
  if (!e.weights) throw ConfigError("weighted fusion needs learned fusion weights");
  return *e.weights;
}

struct PredictionRecord {
  std::size_t sample_id = 0;
  int true_label = 0;
  std::vector<Eigen::VectorXd> per_model;
  Eigen::VectorXd average;  // plain confidence average, whatever the rule
  Eigen::VectorXd fused;
  int fused_label = 0;
  int agreement_c = 0;  // base models whose label equals the true label
  int misclassify_m = 0;
  bool is_member = false;

  double fused_max_conf() const { return fused.maxCoeff(); }
};

inline std::vector<PredictionRecord> predict_all(const EnsembleModel& e, FusionRule rule,
                                                 const LabeledDataset& data,
                                                 std::span<const std::size_t> idx,
                                                 const MembershipGroundTruth& truth,
                                                 FusionStats* stats = nullptr) {
  e.validate();
  auto weights = weights_for(e, rule);
  auto outputs = ensemble_outputs(e, data.rows(idx));
  std::vector<PredictionRecord> out;
  out.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    PredictionRecord r;
    r.sample_id = idx[i];
    r.true_label = data.labels[idx[i]];
    r.per_model = confidences_of_row(outputs, static_cast<Eigen::Index>(i));
    r.average = fuse_average(r.per_model);
    r.fused = fuse(rule, r.per_model, weights, stats);
    r.fused_label = static_cast<int>(argmax(r.fused));
    for (const auto& y : r.per_model)
      if (argmax(y) == r.true_label) ++r.agreement_c;
    r.misclassify_m = static_cast<int>(e.size()) - r.agreement_c;
    r.is_member = truth.is_member(idx[i]);
    out.push_back(std::move(r));
  }
  return out;
}

// Base models differ only in initialization seed.
inline EnsembleModel train_deep_ensemble(const LabeledDataset& data,
                                         std::span<const std::size_t> d_tr, std::size_t n,
                                         const Architecture& arch, const TrainConfig& config,
                                         unsigned threads = 1, const ModelTrainer& trainer = {}) {
  if (n < 1) throw ConfigError("ensemble size must be at least 1");
  EnsembleModel e;
  e.kind = EnsembleKind::deep;
  e.models.resize(n);
  e.checkpoints.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    e.seeds.push_back(derive_seed(config.seed, "deep/model", i));
    e.train_sets.emplace_back(d_tr.begin(), d_tr.end());
  }
  parallel_for(n, threads, [&](std::size_t i) {
    TrainConfig c = config;
    c.seed = e.seeds[i];
    auto r = run_trainer(trainer, data, d_tr, arch, c);
    e.models[i] = std::move(r.model);
    e.checkpoints[i] = std::move(r.checkpoints);
  });
  e.member_index_union = detail::sorted_union(e.train_sets);
  return e;
}

namespace detail {
inline EnsembleModel train_on_sets(const LabeledDataset& data, std::vector<IndexList> sets,
                                   EnsembleKind kind, const char* seed_key,
                                   const Architecture& arch, const TrainConfig& config,
                                   unsigned threads, const ModelTrainer& trainer) {
  EnsembleModel e;
  e.kind = kind;
  e.models.resize(sets.size());
  e.checkpoints.resize(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i)
    e.seeds.push_back(derive_seed(config.seed, seed_key, i));
  e.train_sets = std::move(sets);
  parallel_for(e.size(), threads, [&](std::size_t i) {
    TrainConfig c = config;
    c.seed = e.seeds[i];
    auto r = run_trainer(trainer, data, e.train_sets[i], arch, c);
    e.models[i] = std::move(r.model);
    e.checkpoints[i] = std::move(r.checkpoints);
  });
  e.member_index_union = sorted_union(e.train_sets);
  return e;
}
}  // namespace detail

// Each base model trains on its own bootstrap of d_tr.
inline EnsembleModel train_bagging(const LabeledDataset& data, std::span<const std::size_t> d_tr,
                                   std::size_t n, const Architecture& arch,
                                   const TrainConfig& config, unsigned threads = 1,
                                   const ModelTrainer& trainer = {}) {
  if (n < 1) throw ConfigError("ensemble size must be at least 1");
  std::vector<IndexList> sets;
  for (std::size_t i = 0; i < n; ++i)
    sets.push_back(bootstrap_sample(d_tr, derive_seed(config.seed, "bagging/sample", i)));
  return detail::train_on_sets(data, std::move(sets), EnsembleKind::bagging, "bagging/model", arch,
                               config, threads, trainer);
}

// Each base model trains on one of n disjoint parts of d_tr.
inline EnsembleModel train_partitioning(const LabeledDataset& data,
                                        std::span<const std::size_t> d_tr, std::size_t n,
                                        const Architecture& arch, const TrainConfig& config,
                                        unsigned threads = 1, const ModelTrainer& trainer = {}) {
  if (n < 1) throw ConfigError("ensemble size must be at least 1");
  if (n > d_tr.size())
    throw ConfigError("cannot partition " + std::to_string(d_tr.size()) + " samples into " +
                      std::to_string(n) + " parts");
  return detail::train_on_sets(data, partition_disjoint(d_tr, n, derive_seed(config.seed, "partition")),
                               EnsembleKind::partitioning, "partitioning/model", arch, config,
                               threads, trainer);
}

// One cosine-annealed trajectory; a snapshot is kept at the end of each
// cycle, where the learning rate reaches 0.
inline EnsembleModel train_snapshot_ensemble(const LabeledDataset& data,
                                             std::span<const std::size_t> d_tr, std::size_t cycles,
                                             int cycle_len, double max_lr,
                                             const Architecture& arch, const TrainConfig& config,
                                             const ModelTrainer& trainer = {}) {
  if (cycles < 1) throw ConfigError("snapshot ensemble needs at least one cycle");
  if (cycle_len < 1) throw ConfigError("cycle_len must be positive");
  TrainConfig c = config;
  c.epochs = static_cast<int>(cycles) * cycle_len;
  c.lr_schedule = CyclicLr{max_lr, cycle_len};
  c.checkpoint_epochs.clear();
  for (std::size_t k = 1; k <= cycles; ++k) c.checkpoint_epochs.push_back(static_cast<int>(k) * cycle_len);
  auto result = run_trainer(trainer, data, d_tr, arch, c);
  EnsembleModel e;
  e.kind = EnsembleKind::snapshot;
  for (auto& [epoch, model] : result.checkpoints) {
    e.models.push_back(std::move(model));
    e.seeds.push_back(config.seed);
    e.train_sets.emplace_back(d_tr.begin(), d_tr.end());
  }
  e.member_index_union = detail::sorted_union(e.train_sets);
  return e;
}

// Mean cross-entropy of the weighted average on per-model true-class
// probabilities (rows: samples, cols: models).
inline double weighted_fusion_loss(const Eigen::MatrixXd& true_class_probs,
                                   std::span<const double> w) {
  double total = 0;
  for (Eigen::Index i = 0; i < true_class_probs.rows(); ++i) {
    double q = 0;
    for (Eigen::Index m = 0; m < true_class_probs.cols(); ++m)
      q += w[static_cast<std::size_t>(m)] * true_class_probs(i, m);
    total -= std::log(std::max(q, 1e-300));
  }
  return total / static_cast<double>(true_class_probs.rows());
}

inline Eigen::MatrixXd true_class_probabilities(const EnsembleModel& e, const LabeledDataset& data,
                                                std::span<const std::size_t> idx) {
  auto outputs = ensemble_outputs(e, data.rows(idx));
  Eigen::MatrixXd p(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(e.size()));
  for (std::size_t m = 0; m < e.size(); ++m)
    for (std::size_t i = 0; i < idx.size(); ++i)
      p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) =
          outputs[m](static_cast<Eigen::Index>(i), data.labels[idx[i]]);
  return p;
}

// Full-batch gradient descent on softmax-parameterized weights, starting
// from uniform. The best iterate seen is returned, so the result never does
// worse than uniform weights on d_tr.
inline std::vector<double> learn_fusion_weights(const EnsembleModel& e, const LabeledDataset& data,
                                                std::span<const std::size_t> d_tr, int steps,
                                                double lr) {
  if (steps <= 0) throw ConfigError("fusion weight learning needs a positive step count");
  if (d_tr.empty()) throw UsageError("fusion weight learning needs training samples");
  const auto n = static_cast<Eigen::Index>(e.size());
  const Eigen::MatrixXd p = true_class_probabilities(e, data, d_tr);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
  auto weights_of = [](const Eigen::VectorXd& t) {
    Eigen::VectorXd w = (t.array() - t.maxCoeff()).exp();
    w /= w.sum();
    return std::vector<double>(w.data(), w.data() + w.size());
  };
  std::vector<double> best = weights_of(theta);
  double best_loss = weighted_fusion_loss(p, best);
  for (int s = 0; s < steps; ++s) {
    const auto w = weights_of(theta);
    Eigen::VectorXd grad_w = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      double q = 0;
      for (Eigen::Index m = 0; m < n; ++m) q += w[static_cast<std::size_t>(m)] * p(i, m);
      q = std::max(q, 1e-300);
      grad_w -= p.row(i).transpose() / q;
    }
    grad_w /= static_cast<double>(p.rows());
    double wg = 0;
    for (Eigen::Index m = 0; m < n; ++m) wg += w[static_cast<std::size_t>(m)] * grad_w(m);
    for (Eigen::Index m = 0; m < n; ++m)
      theta(m) -= lr * w[static_cast<std::size_t>(m)] * (grad_w(m) - wg);
    const auto next = weights_of(theta);
    const double loss = weighted_fusion_loss(p, next);
    if (loss < best_loss) {
      best_loss = loss;
      best = next;
    }
  }
  return best;
}

inline EnsembleModel make_weighted(EnsembleModel base, std::vector<double> weights) {
  base.kind = EnsembleKind::weighted;
  base.weights = std::move(weights);
  base.validate();
  return base;
}

}  // namespace mia

#endif  // MIA_ENSEMBLE_HPP_
