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

// Post-hoc confidence masking (MemGuard-random) and MMD+Mixup training.

#ifndef MIA_DEFENSES_HPP_
#define MIA_DEFENSES_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <random>
#include <span>

#include "mia/core.hpp"
#include "mia/data.hpp"
#include "mia/ensemble.hpp"
#include "mia/nn.hpp"

namespace mia {

struct MaskConfig {
  double noise_magnitude = 0.1;  // rho
  std::uint64_t seed = 0;

  void validate() const {
    if (!(noise_magnitude >= 0)) throw ConfigError("mask noise magnitude must be >= 0");
  }
};

inline bool is_simplex(const Eigen::VectorXd& v, double tol) {
  if (v.size() == 0 || !v.allFinite()) return false;
  return (v.array() >= -tol).all() && std::abs(v.sum() - 1.0) <= tol;
}

// Adds U(-rho, rho) noise to every coordinate except the predicted one,
// clamps to [0, cap] with cap strictly below the top entry, and
// renormalizes. The predicted label never changes.
inline Eigen::VectorXd memguard_random(const Eigen::VectorXd& conf, const MaskConfig& mask,
                                       Rng& rng) {
  mask.validate();
  if (!is_simplex(conf, 1e-6)) throw UsageError("memguard_random expects a probability vector");
  if (mask.noise_magnitude == 0) return conf;
  const auto top = argmax(conf);
  const double cap = conf(top) * (1.0 - 1e-9);
  Eigen::VectorXd out = conf;
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    if (k == top) continue;
    const double noise = (2.0 * uniform01(rng) - 1.0) * mask.noise_magnitude;
    out(k) = std::clamp(out(k) + noise, 0.0, cap);
  }
  out(top) = std::max(out(top), 0.0);
  return out / out.sum();
}

// Deterministic per input row: the noise stream is keyed by the row bytes.
inline std::uint64_t row_seed(std::uint64_t seed, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    std::uint64_t bits = 0;
    const double v = row(j);
    std::memcpy(&bits, &v, sizeof bits);
    h = splitmix64(h ^ bits);
  }
  return derive_seed(seed, "memguard", h);
}

inline Eigen::MatrixXd memguard_rows(const Eigen::MatrixXd& conf, const Eigen::MatrixXd& inputs,
                                     const MaskConfig& mask) {
  Eigen::MatrixXd out(conf.rows(), conf.cols());
  for (Eigen::Index i = 0; i < conf.rows(); ++i) {
    Rng rng = make_rng(row_seed(mask.seed, inputs.row(i)));
    out.row(i) = memguard_random(conf.row(i).transpose(), mask, rng).transpose();
  }
  return out;
}

struct MMDConfig {
  double bandwidth = 1.0;  // gamma in k(a, b) = exp(-|a-b|^2 / (2 gamma^2))
  double weight = 1.0;     // beta
  std::size_t reference_batch = 32;

  void validate() const {
    if (!(bandwidth > 0)) throw ConfigError("MMD bandwidth must be > 0");
    if (!(weight >= 0)) throw ConfigError("MMD weight must be >= 0");
    if (reference_batch == 0) throw ConfigError("MMD reference batch must be non-empty");
  }
};

inline double gaussian_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                              const Eigen::Ref<const Eigen::RowVectorXd>& b, double bandwidth) {
  return std::exp(-(a - b).squaredNorm() / (2.0 * bandwidth * bandwidth));
}

struct MMDValue {
  double value = 0;
  Eigen::MatrixXd grad_a;  // d mmd^2 / d A
  Eigen::MatrixXd grad_b;  // d mmd^2 / d B
};

// Biased estimator: mean k(A,A) + mean k(B,B) - 2 mean k(A,B). Rows are
// samples. Gradients with respect to both batches are returned.
inline MMDValue mmd_squared_with_grad(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                      double bandwidth) {
  if (!(bandwidth > 0)) throw ConfigError("MMD bandwidth must be > 0");
  if (a.rows() == 0 || b.rows() == 0) throw UsageError("MMD needs non-empty batches");
  if (a.cols() != b.cols()) throw ShapeError("MMD batches differ in dimension");
  const double na = static_cast<double>(a.rows()), nb = static_cast<double>(b.rows());
  const double inv2g2 = 1.0 / (2.0 * bandwidth * bandwidth);
  MMDValue r;
  r.grad_a = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  r.grad_b = Eigen::MatrixXd::Zero(b.rows(), b.cols());
  // d k(x,y)/dx = -k(x,y) (x - y) / gamma^2
  auto block = [&](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double coef,
                   Eigen::MatrixXd& gx, Eigen::MatrixXd& gy) {
    double s = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < y.rows(); ++j) {
        const Eigen::RowVectorXd diff = x.row(i) - y.row(j);
        const double k = std::exp(-diff.squaredNorm() * inv2g2);
        s += k;
        const Eigen::RowVectorXd dk = (-2.0 * inv2g2 * k * coef) * diff;
        gx.row(i) += dk;
        gy.row(j) -= dk;
      }
    }
    return coef * s;
  };
  r.value = block(a, a, 1.0 / (na * na), r.grad_a, r.grad_a) +
            block(b, b, 1.0 / (nb * nb), r.grad_b, r.grad_b) +
            block(a, b, -2.0 / (na * nb), r.grad_a, r.grad_b);
  return r;
}

inline double mmd_squared(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double bandwidth) {
  return mmd_squared_with_grad(a, b, bandwidth).value;
}

namespace detail {
// Chains d/dprobs through the row softmax to d/dlogits.
inline Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& g) {
  Eigen::MatrixXd out(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double dot = probs.row(i).dot(g.row(i));
    out.row(i) = probs.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
  }
  return out;
}
}  // namespace detail

// mmd^2 between the model's softmax outputs on `batch` and on `reference`,
// with its gradient through both forward passes.
inline LossAndGrad mmd_loss_and_grad(const MLPModel& m, const Eigen::MatrixXd& batch,
                                     const Eigen::MatrixXd& reference, double bandwidth) {
  auto ca = detail::forward_cached(m, batch);
  auto cb = detail::forward_cached(m, reference);
  detail::check_finite(ca);
  detail::check_finite(cb);
  auto v = mmd_squared_with_grad(ca.probs, cb.probs, bandwidth);
  LossAndGrad out;
  out.loss = v.value;
  out.grads = detail::backward(m, ca, detail::softmax_backward(ca.probs, v.grad_a));
  out.grads += detail::backward(m, cb, detail::softmax_backward(cb.probs, v.grad_b));
  out.probs = std::move(ca.probs);
  return out;
}

// Mixup training plus beta * mmd^2 between outputs on each clean minibatch
// and a reference minibatch drawn from `reference_idx`. The mixup strength
// comes from config.mixup_alpha.
inline TrainResult train_with_mmd_mixup(const LabeledDataset& data,
                                        std::span<const std::size_t> d_tr,
                                        std::span<const std::size_t> reference_idx,
                                        const Architecture& arch, const TrainConfig& config,
                                        const MMDConfig& mmd) {
  mmd.validate();
  if (reference_idx.empty()) throw ConfigError("MMD+Mixup needs a non-empty reference split");
  if (mmd.weight == 0) return train_model(data, d_tr, arch, config);
  auto rng = std::make_shared<Rng>(make_rng(derive_seed(config.seed, "mmd/reference")));
  IndexList ref(reference_idx.begin(), reference_idx.end());
  BatchLossHook hook = [&data, ref, mmd, rng](const MLPModel& m, const Eigen::MatrixXd& batch,
                                              GradientSet& grads) {
    std::uniform_int_distribution<std::size_t> pick(0, ref.size() - 1);
    IndexList chosen(std::min(mmd.reference_batch, ref.size()));
    for (auto& c : chosen) c = ref[pick(*rng)];
    auto term = mmd_loss_and_grad(m, batch, data.rows(chosen), mmd.bandwidth);
    grads.add_scaled(term.grads, mmd.weight);
    return mmd.weight * term.loss;
  };
  return train_model(data, d_tr, arch, config, hook);
}

}  // namespace mia

#endif  // MIA_DEFENSES_HPP_
