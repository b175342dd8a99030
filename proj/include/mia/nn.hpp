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

// Small fully connected softmax classifiers trained from scratch with plain
// SGD. Besides the usual batch gradient this module exposes per-example
// gradients, the DP-SGD clip-and-noise step, mixup batches and the learning
// rate schedules used by snapshot ensembles.

#ifndef MIA_NN_HPP_
#define MIA_NN_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mia/core.hpp"
#include "mia/data.hpp"

namespace mia {

enum class Activation { relu, tanh };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

// weights[l] has shape (layer_sizes[l+1], layer_sizes[l]). Hidden layers use
// `activation`; the last layer always feeds a softmax.
struct MLPModel {
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::relu;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t num_classes() const { return layer_sizes.back(); }

  void validate() const {
    if (layer_sizes.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
    for (auto s : layer_sizes)
      if (s == 0) throw ShapeError("layer sizes must be positive");
    if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size())
      throw ShapeError("parameter count does not match layer_sizes");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (static_cast<std::size_t>(weights[l].rows()) != layer_sizes[l + 1] ||
          static_cast<std::size_t>(weights[l].cols()) != layer_sizes[l] ||
          static_cast<std::size_t>(biases[l].size()) != layer_sizes[l + 1])
        throw ShapeError("layer " + std::to_string(l) + " parameters do not chain");
    }
  }

  static MLPModel zeros(std::vector<std::size_t> sizes, Activation act = Activation::relu) {
    MLPModel m;
    m.layer_sizes = std::move(sizes);
    m.activation = act;
    if (m.layer_sizes.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
    for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
      m.weights.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.layer_sizes[l + 1]),
                                                static_cast<Eigen::Index>(m.layer_sizes[l])));
      m.biases.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.layer_sizes[l + 1])));
    }
    m.validate();
    return m;
  }

  // Uniform Glorot initialization, zero biases.
  static MLPModel glorot(std::vector<std::size_t> sizes, Activation act, std::uint64_t seed) {
    MLPModel m = zeros(std::move(sizes), act);
    Rng rng = make_rng(seed);
    for (auto& w : m.weights) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = (2.0 * uniform01(rng) - 1.0) * limit;
    }
    return m;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
      n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }

  double weight_squared_norm() const {
    double s = 0;
    for (const auto& w : weights) s += w.squaredNorm();
    return s;
  }
};

// Row-wise softmax with max subtraction.
inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

namespace detail {

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // inputs[l] feeds layer l (inputs[0] = X)
  std::vector<Eigen::MatrixXd> pre;     // pre-activations of each layer
  Eigen::MatrixXd probs;
};

inline void apply_activation(Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::relu)
    z = z.cwiseMax(0.0);
  else
    z = z.array().tanh().matrix();
}

inline void scale_by_activation_derivative(Eigen::MatrixXd& delta, const Eigen::MatrixXd& pre,
                                           Activation act) {
  if (act == Activation::relu)
    delta = (pre.array() > 0.0).select(delta, 0.0);
  else
    delta = delta.cwiseProduct((1.0 - pre.array().tanh().square()).matrix());
}

inline ForwardCache forward_cached(const MLPModel& m, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != m.input_dim())
    throw ShapeError("input has " + std::to_string(x.cols()) + " features, model expects " +
                     std::to_string(m.input_dim()));
  ForwardCache c;
  c.inputs.push_back(x);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    Eigen::MatrixXd z = c.inputs.back() * m.weights[l].transpose();
    z.rowwise() += m.biases[l].transpose();
    c.pre.push_back(z);
    if (l + 1 < m.num_layers()) {
      apply_activation(z, m.activation);
      c.inputs.push_back(std::move(z));
    }
  }
  c.probs = softmax_rows(c.pre.back());
  return c;
}

}  // namespace detail

// One probability row per input row.
inline Eigen::MatrixXd forward_batch(const MLPModel& m, const Eigen::MatrixXd& x) {
  return detail::forward_cached(m, x).probs;
}

inline Eigen::VectorXd forward(const MLPModel& m, const Eigen::VectorXd& x) {
  return forward_batch(m, x.transpose()).row(0).transpose();
}

// Parameter-shaped gradient container.
struct GradientSet {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static GradientSet zeros_like(const MLPModel& m) {
    GradientSet g;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      g.weights.push_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
      g.biases.push_back(Eigen::VectorXd::Zero(m.biases[l].size()));
    }
    return g;
  }

  bool matches(const MLPModel& m) const {
    if (weights.size() != m.num_layers() || biases.size() != m.num_layers()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (weights[l].rows() != m.weights[l].rows() || weights[l].cols() != m.weights[l].cols() ||
          biases[l].size() != m.biases[l].size())
        return false;
    return true;
  }

  double squared_norm() const {
    double s = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
      s += weights[l].squaredNorm() + biases[l].squaredNorm();
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  GradientSet& operator+=(const GradientSet& o) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += o.weights[l];
      biases[l] += o.biases[l];
    }
    return *this;
  }
  GradientSet& operator*=(double s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] *= s;
      biases[l] *= s;
    }
    return *this;
  }
  void add_scaled(const GradientSet& o, double s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += s * o.weights[l];
      biases[l] += s * o.biases[l];
    }
  }
};

namespace detail {

// Backpropagates d(loss)/d(logits) through the cached forward pass.
inline GradientSet backward(const MLPModel& m, const ForwardCache& c, Eigen::MatrixXd delta) {
  GradientSet g;
  g.weights.resize(m.num_layers());
  g.biases.resize(m.num_layers());
  for (std::size_t l = m.num_layers(); l-- > 0;) {
    g.weights[l] = delta.transpose() * c.inputs[l];
    g.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      delta = delta * m.weights[l];
      scale_by_activation_derivative(delta, c.pre[l - 1], m.activation);
    }
  }
  return g;
}

inline Eigen::MatrixXd one_hot(std::span<const int> labels, std::size_t classes) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()),
                                            static_cast<Eigen::Index>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
      throw UsageError("label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(classes) + ")");
    t(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return t;
}

// Mean soft-target cross-entropy computed with log-sum-exp.
inline double cross_entropy(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets) {
  double total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    total += lse * targets.row(i).sum() - logits.row(i).dot(targets.row(i));
  }
  return total / static_cast<double>(logits.rows());
}

inline void check_batch(const MLPModel& m, const Eigen::MatrixXd& x,
                        const Eigen::MatrixXd& targets) {
  if (x.rows() == 0) throw UsageError("empty batch");
  if (targets.rows() != x.rows() || static_cast<std::size_t>(targets.cols()) != m.num_classes())
    throw ShapeError("targets do not match batch and class count");
}

inline void check_finite(const ForwardCache& c) {
  if (!c.pre.back().allFinite() || !c.probs.allFinite())
    throw NumericError("non-finite activations");
}

}  // namespace detail

// A training batch with soft targets (one-hot rows for hard labels).
struct Batch {
  Eigen::MatrixXd features;
  Eigen::MatrixXd targets;

  static Batch from_labels(Eigen::MatrixXd x, std::span<const int> labels, std::size_t classes) {
    return {std::move(x), detail::one_hot(labels, classes)};
  }
};

struct LossAndGrad {
  double loss = 0;
  GradientSet grads;
  Eigen::MatrixXd probs;  // model output on the batch
};

// l1 * sum|w| + l2 * sum w^2 over weight matrices (biases are not penalized).
inline double penalty_value(const MLPModel& m, double l1_weight, double l2_weight) {
  double l1 = 0, l2 = 0;
  for (const auto& w : m.weights) {
    l1 += w.cwiseAbs().sum();
    l2 += w.squaredNorm();
  }
  return l1_weight * l1 + l2_weight * l2;
}

inline void add_penalty_grad(const MLPModel& m, double l1_weight, double l2_weight,
                             GradientSet& g) {
  if (l1_weight == 0 && l2_weight == 0) return;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const auto& w = m.weights[l];
    if (l1_weight != 0) g.weights[l] += l1_weight * w.array().sign().matrix();
    if (l2_weight != 0) g.weights[l] += (2.0 * l2_weight) * w;
  }
}

// loss = mean cross-entropy + penalties, with its exact analytic gradient.
inline LossAndGrad loss_and_grad(const MLPModel& m, const Batch& batch, double l1_weight = 0,
                                 double l2_weight = 0) {
  detail::check_batch(m, batch.features, batch.targets);
  auto cache = detail::forward_cached(m, batch.features);
  detail::check_finite(cache);
  const double n = static_cast<double>(batch.features.rows());
  LossAndGrad out;
  out.loss = detail::cross_entropy(cache.pre.back(), batch.targets) +
             penalty_value(m, l1_weight, l2_weight);
  Eigen::MatrixXd delta = cache.probs;
  for (Eigen::Index i = 0; i < delta.rows(); ++i)
    delta.row(i) = cache.probs.row(i) * batch.targets.row(i).sum() - batch.targets.row(i);
  out.grads = detail::backward(m, cache, delta / n);
  add_penalty_grad(m, l1_weight, l2_weight, out.grads);
  out.probs = std::move(cache.probs);
  return out;
}

inline LossAndGrad loss_and_grad(const MLPModel& m, const Eigen::MatrixXd& x,
                                 std::span<const int> labels, double l1_weight = 0,
                                 double l2_weight = 0) {
  return loss_and_grad(m, Batch::from_labels(x, labels, m.num_classes()), l1_weight, l2_weight);
}

namespace detail {

inline std::vector<GradientSet> per_example_from_cache(const MLPModel& m, const ForwardCache& c,
                                                       const Eigen::MatrixXd& targets) {
  const auto n = c.probs.rows();
  std::vector<GradientSet> out(static_cast<std::size_t>(n));
  for (auto& g : out) {
    g.weights.resize(m.num_layers());
    g.biases.resize(m.num_layers());
  }
  // Backprop is row-independent, so the batched deltas carry every example.
  Eigen::MatrixXd delta(c.probs.rows(), c.probs.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    delta.row(i) = c.probs.row(i) * targets.row(i).sum() - targets.row(i);
  for (std::size_t l = m.num_layers(); l-- > 0;) {
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& g = out[static_cast<std::size_t>(i)];
      g.weights[l].noalias() = delta.row(i).transpose() * c.inputs[l].row(i);
      g.biases[l] = delta.row(i).transpose();
    }
    if (l > 0) {
      delta = delta * m.weights[l];
      scale_by_activation_derivative(delta, c.pre[l - 1], m.activation);
    }
  }
  return out;
}

}  // namespace detail

// Unpenalized cross-entropy gradient of each example separately.
inline std::vector<GradientSet> per_example_grads(const MLPModel& m, const Batch& batch) {
  detail::check_batch(m, batch.features, batch.targets);
  auto c = detail::forward_cached(m, batch.features);
  detail::check_finite(c);
  return detail::per_example_from_cache(m, c, batch.targets);
}

inline std::vector<GradientSet> per_example_grads(const MLPModel& m, const Eigen::MatrixXd& x,
                                                  std::span<const int> labels) {
  return per_example_grads(m, Batch::from_labels(x, labels, m.num_classes()));
}

struct DPConfig {
  double clip_norm = 1.0;         // C
  double noise_multiplier = 1.0;  // sigma
  double delta = 1e-5;            // reported only; no accountant

  void validate() const {
    if (!(clip_norm > 0)) throw ConfigError("DP clip norm must be > 0");
    if (!(noise_multiplier >= 0)) throw ConfigError("DP noise multiplier must be >= 0");
    if (!(delta > 0 && delta < 1)) throw ConfigError("DP delta must lie in (0, 1)");
  }
  // Infinite clip norm with zero noise is the "mechanism off" sentinel.
  bool is_noop() const { return noise_multiplier == 0 && std::isinf(clip_norm); }
};

// g scaled by min(1, C / |g|), so its global L2 norm is at most C.
inline GradientSet clip_to_norm(const GradientSet& g, double clip_norm) {
  GradientSet out = g;
  const double norm = g.norm();
  if (norm > clip_norm) out *= clip_norm / norm;
  return out;
}

// Clip each example to L2 norm <= C, sum, add N(0, (sigma*C)^2) per
// coordinate, divide by the batch size.
inline GradientSet dp_clip_and_noise(std::span<const GradientSet> grads, const DPConfig& dp,
                                     Rng& rng) {
  if (!(dp.clip_norm > 0)) throw ConfigError("DP clip norm must be > 0");
  if (!(dp.noise_multiplier >= 0)) throw ConfigError("DP noise multiplier must be >= 0");
  if (grads.empty()) throw UsageError("dp_clip_and_noise needs at least one gradient");
  GradientSet sum = grads.front();
  sum *= 0.0;
  for (const auto& g : grads) sum += clip_to_norm(g, dp.clip_norm);
  const double sd = dp.noise_multiplier * dp.clip_norm;
  if (sd > 0) {
    std::normal_distribution<double> noise(0.0, sd);
    for (std::size_t l = 0; l < sum.weights.size(); ++l) {
      for (Eigen::Index j = 0; j < sum.weights[l].size(); ++j) sum.weights[l](j) += noise(rng);
      for (Eigen::Index j = 0; j < sum.biases[l].size(); ++j) sum.biases[l](j) += noise(rng);
    }
  }
  sum *= 1.0 / static_cast<double>(grads.size());
  return sum;
}

// Beta(a, b) through two gamma draws.
inline double sample_beta(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng), y = gb(rng);
  return x + y > 0 ? x / (x + y) : 0.5;
}

// Row i becomes lambda_i * row i + (1 - lambda_i) * row partner_i, for both
// features and soft targets.
inline Batch mixup_with(const Batch& batch, std::span<const std::size_t> partners,
                        std::span<const double> lambdas) {
  const auto n = static_cast<std::size_t>(batch.features.rows());
  if (n < 2) throw UsageError("mixup needs a batch of at least 2 samples");
  if (partners.size() != n || lambdas.size() != n)
    throw ShapeError("mixup partners/lambdas must match the batch size");
  Batch out{batch.features, batch.targets};
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto p = static_cast<Eigen::Index>(partners[i]);
    const double lam = lambdas[i];
    out.features.row(r) = lam * batch.features.row(r) + (1.0 - lam) * batch.features.row(p);
    out.targets.row(r) = lam * batch.targets.row(r) + (1.0 - lam) * batch.targets.row(p);
  }
  return out;
}

// Partners come from a random permutation; one lambda ~ Beta(alpha, alpha)
// per sample. alpha = 0 leaves the batch unchanged.
inline Batch mixup_batch(const Batch& batch, double alpha, Rng& rng) {
  if (alpha < 0) throw ConfigError("mixup alpha must be >= 0");
  const auto n = static_cast<std::size_t>(batch.features.rows());
  if (n < 2) throw UsageError("mixup needs a batch of at least 2 samples");
  if (alpha == 0) return batch;
  std::vector<std::size_t> partners(n);
  std::iota(partners.begin(), partners.end(), std::size_t{0});
  shuffle(partners, rng);
  std::vector<double> lambdas(n);
  for (auto& l : lambdas) l = sample_beta(alpha, alpha, rng);
  return mixup_with(batch, partners, lambdas);
}

struct ConstantLr {
  double lr = 0.05;
};
struct StepLr {
  double lr = 0.1;
  std::vector<int> drop_epochs;
  double factor = 0.1;
};
struct CyclicLr {
  double max_lr = 0.1;
  int cycle_len = 50;
};
using LrSchedule = std::variant<ConstantLr, StepLr, CyclicLr>;

// `epoch` is 0-based; `epoch_fraction` in [0, 1] is the elapsed share of it.
// The cyclic schedule anneals with a cosine inside each cycle, so the last
// instant of a cycle (fraction 1 of its final epoch) reaches 0.
inline double lr_at(const LrSchedule& schedule, int epoch, double epoch_fraction = 0.0) {
  return std::visit(
      [&](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantLr>) {
          return s.lr;
        } else if constexpr (std::is_same_v<S, StepLr>) {
          int drops = 0;
          for (int d : s.drop_epochs)
            if (epoch >= d) ++drops;
          return s.lr * std::pow(s.factor, drops);
        } else {
          const double t = static_cast<double>(epoch % s.cycle_len) + epoch_fraction;
          return s.max_lr / 2.0 *
                 (std::cos(std::numbers::pi * t / static_cast<double>(s.cycle_len)) + 1.0);
        }
      },
      schedule);
}

struct Architecture {
  std::vector<std::size_t> hidden = {128};
  Activation activation = Activation::relu;
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  LrSchedule lr_schedule = ConstantLr{0.05};
  double l1_weight = 0;
  double l2_weight = 0;
  double mixup_alpha = 0;
  std::optional<DPConfig> dp;
  std::uint64_t seed = 0;
  std::vector<int> checkpoint_epochs;  // 1-based epochs whose snapshots are kept

  void validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (l1_weight < 0 || l2_weight < 0) throw ConfigError("penalty weights must be >= 0");
    if (mixup_alpha < 0) throw ConfigError("mixup_alpha must be >= 0");
    if (dp) dp->validate();
    for (int e : checkpoint_epochs)
      if (e < 1 || e > epochs)
        throw ConfigError("checkpoint epoch " + std::to_string(e) + " outside [1, epochs]");
    if (const auto* c = std::get_if<CyclicLr>(&lr_schedule); c && c->cycle_len <= 0)
      throw ConfigError("cycle_len must be positive");
  }
};

struct EpochStats {
  int epoch = 0;            // 1-based
  double train_loss = 0;    // running mean over the epoch's minibatches
  double train_acc = 0;     // running, before each update, against the dominant target
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  double test_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  MLPModel model;
  std::map<int, MLPModel> checkpoints;
  std::vector<EpochStats> history;
};

// Extra differentiable loss term evaluated on every (un-mixed) minibatch.
// Returns its value and accumulates its gradient into `grads`.
using BatchLossHook =
    std::function<double(const MLPModel& model, const Eigen::MatrixXd& batch, GradientSet& grads)>;

inline std::vector<std::size_t> model_layer_sizes(std::size_t input_dim, const Architecture& arch,
                                                  std::size_t classes) {
  std::vector<std::size_t> sizes{input_dim};
  sizes.insert(sizes.end(), arch.hidden.begin(), arch.hidden.end());
  sizes.push_back(classes);
  return sizes;
}

inline double accuracy_of(const Eigen::MatrixXd& probs, std::span<const int> labels) {
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index k = 0;
    probs.row(i).maxCoeff(&k);
    if (k == labels[static_cast<std::size_t>(i)]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

// Minibatch SGD. Independent RNG streams for init, shuffling, mixup and DP
// noise are derived from config.seed, so toggling one mechanism leaves the
// other streams untouched.
inline TrainResult train_model(const LabeledDataset& data, std::span<const std::size_t> train_idx,
                               const Architecture& arch, const TrainConfig& config,
                               const BatchLossHook& hook = {},
                               std::span<const std::size_t> eval_idx = {}) {
  config.validate();
  if (train_idx.empty()) throw UsageError("training split is empty");
  if (config.mixup_alpha > 0 && train_idx.size() < 2)
    throw UsageError("mixup needs at least 2 training samples");

  TrainResult out;
  out.model = MLPModel::glorot(model_layer_sizes(data.dims(), arch, data.num_classes),
                               arch.activation, derive_seed(config.seed, "init"));
  Rng shuffle_rng = make_rng(derive_seed(config.seed, "shuffle"));
  Rng mixup_rng = make_rng(derive_seed(config.seed, "mixup"));
  Rng dp_rng = make_rng(derive_seed(config.seed, "dp"));
  const bool use_dp = config.dp && !config.dp->is_noop();

  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t batches = (order.size() + bs - 1) / bs;
  Eigen::MatrixXd eval_x;
  std::vector<int> eval_y;
  if (!eval_idx.empty()) {
    eval_x = data.rows(eval_idx);
    eval_y = data.labels_of(eval_idx);
  }

  MLPModel& m = out.model;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    double loss_sum = 0;
    std::size_t hits = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * bs, hi = std::min(order.size(), lo + bs);
      std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      Eigen::MatrixXd x = data.rows(idx);
      std::vector<int> y = data.labels_of(idx);
      Batch batch = Batch::from_labels(x, y, data.num_classes);
      if (config.mixup_alpha > 0 && batch.features.rows() >= 2)
        batch = mixup_batch(batch, config.mixup_alpha, mixup_rng);

      LossAndGrad lg;
      try {
        if (use_dp) {
          detail::check_batch(m, batch.features, batch.targets);
          auto cache = detail::forward_cached(m, batch.features);
          detail::check_finite(cache);
          auto per = detail::per_example_from_cache(m, cache, batch.targets);
          lg.grads = dp_clip_and_noise(per, *config.dp, dp_rng);
          lg.loss = detail::cross_entropy(cache.pre.back(), batch.targets) +
                    penalty_value(m, config.l1_weight, config.l2_weight);
          add_penalty_grad(m, config.l1_weight, config.l2_weight, lg.grads);
          lg.probs = std::move(cache.probs);
        } else {
          lg = loss_and_grad(m, batch, config.l1_weight, config.l2_weight);
        }
        if (hook) lg.loss += hook(m, x, lg.grads);
      } catch (const NumericError& e) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1) + ": " +
                                e.what(),
                            epoch + 1);
      }
      if (!std::isfinite(lg.loss))
        throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1) +
                                ": non-finite loss",
                            epoch + 1);
      loss_sum += lg.loss * static_cast<double>(idx.size());
      for (Eigen::Index i = 0; i < lg.probs.rows(); ++i) {
        Eigen::Index pred = 0, truth = 0;
        lg.probs.row(i).maxCoeff(&pred);
        batch.targets.row(i).maxCoeff(&truth);
        if (pred == truth) ++hits;
      }

      const double lr = lr_at(config.lr_schedule, epoch,
                              static_cast<double>(b) / static_cast<double>(batches));
      for (std::size_t l = 0; l < m.num_layers(); ++l) {
        m.weights[l] -= lr * lg.grads.weights[l];
        m.biases[l] -= lr * lg.grads.biases[l];
      }
    }

    EpochStats st;
    st.epoch = epoch + 1;
    st.train_loss = loss_sum / static_cast<double>(order.size());
    st.train_acc = static_cast<double>(hits) / static_cast<double>(order.size());
    if (!eval_idx.empty()) {
      auto cache = detail::forward_cached(m, eval_x);
      st.test_loss = detail::cross_entropy(cache.pre.back(),
                                           detail::one_hot(eval_y, data.num_classes));
      st.test_acc = accuracy_of(cache.probs, eval_y);
    }
    out.history.push_back(st);
    if (std::find(config.checkpoint_epochs.begin(), config.checkpoint_epochs.end(), epoch + 1) !=
        config.checkpoint_epochs.end())
      out.checkpoints.emplace(epoch + 1, m);
  }
  return out;
}

// Pluggable training procedure, so ensemble and shadow builders can train
// base models with a defense that changes the training loop.
using ModelTrainer = std::function<TrainResult(const LabeledDataset&, std::span<const std::size_t>,
                                               const Architecture&, const TrainConfig&)>;

inline TrainResult run_trainer(const ModelTrainer& trainer, const LabeledDataset& data,
                               std::span<const std::size_t> idx, const Architecture& arch,
                               const TrainConfig& config) {
  return trainer ? trainer(data, idx, arch, config) : train_model(data, idx, arch, config);
}

}  // namespace mia

#endif  // MIA_NN_HPP_
