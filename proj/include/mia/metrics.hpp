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

// Attack scores and the measurements reported on them: ROC AUC, TPR at a
// fixed FPR, Jensen-Shannon divergence of confidence histograms, confidence
// distortion, agreement statistics and accuracy.

#ifndef MIA_METRICS_HPP_
#define MIA_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mia/core.hpp"
#include "mia/ensemble.hpp"

namespace mia {

struct ScoredSample {
  std::size_t sample_id = 0;
  double score = 0;  // higher means more likely a member
  bool is_member = false;
};

struct AttackScoreSet {
  std::string attack_name;
  std::string target;
  std::optional<double> sigma;  // sampling attack only
  std::vector<ScoredSample> entries;

  void validate() const {
    for (const auto& e : entries)
      if (!std::isfinite(e.score))
        throw NumericError(attack_name + ": non-finite score for sample " +
                           std::to_string(e.sample_id));
  }

  std::vector<double> scores() const {
    std::vector<double> s;
    s.reserve(entries.size());
    for (const auto& e : entries) s.push_back(e.score);
    return s;
  }
  std::vector<bool> members() const {
    std::vector<bool> m;
    m.reserve(entries.size());
    for (const auto& e : entries) m.push_back(e.is_member);
    return m;
  }
};

// Probability that a random member outscores a random nonmember, ties
// counting one half. Mid-ranks are accumulated doubled so the Mann-Whitney
// numerator stays an exact integer.
inline double roc_auc(std::span<const double> scores, const std::vector<bool>& is_member) {
  if (scores.size() != is_member.size()) throw ShapeError("scores and labels differ in length");
  const std::size_t n1 = static_cast<std::size_t>(std::count(is_member.begin(), is_member.end(), true));
  const std::size_t n0 = scores.size() - n1;
  if (n1 == 0 || n0 == 0) throw UsageError("AUC is undefined when only one class is present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  long long twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // ranks i+1..j share the mid-rank (i+1+j)/2
    const long long twice_mid = static_cast<long long>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (is_member[order[k]]) twice_rank_sum += twice_mid;
    i = j;
  }
  const long long twice_u =
      twice_rank_sum - static_cast<long long>(n1) * static_cast<long long>(n1 + 1);
  return static_cast<double>(twice_u) /
         (2.0 * static_cast<double>(n1) * static_cast<double>(n0));
}

inline double roc_auc(const AttackScoreSet& s) {
  auto sc = s.scores();
  return roc_auc(sc, s.members());
}

// Smallest threshold whose nonmember pass rate (score >= threshold) is at
// most target_fpr; returns the member pass rate at it. Candidates are the
// observed scores plus +infinity, which nobody passes.
inline double tpr_at_fpr(std::span<const double> scores, const std::vector<bool>& is_member,
                         double target_fpr) {
  if (scores.size() != is_member.size()) throw ShapeError("scores and labels differ in length");
  std::vector<double> mem, non;
  for (std::size_t i = 0; i < scores.size(); ++i) (is_member[i] ? mem : non).push_back(scores[i]);
  if (mem.empty() || non.empty()) throw UsageError("TPR@FPR needs members and nonmembers");
  std::sort(non.begin(), non.end());
  std::sort(mem.begin(), mem.end());
  auto at_or_above = [](const std::vector<double>& sorted, double t) {
    return static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t)) /
           static_cast<double>(sorted.size());
  };
  std::vector<double> candidates(scores.begin(), scores.end());
  std::sort(candidates.begin(), candidates.end());
  for (double t : candidates)  // ascending, so the first admissible is the smallest
    if (at_or_above(non, t) <= target_fpr) return at_or_above(mem, t);
  return 0.0;
}

inline double tpr_at_fpr(const AttackScoreSet& s, double target_fpr) {
  auto sc = s.scores();
  return tpr_at_fpr(sc, s.members(), target_fpr);
}

// Histograms over [0, 1] (value 1 falls in the last bin), additive
// smoothing, base-2 logarithm so the result lies in [0, 1].
inline double js_divergence(std::span<const double> a, std::span<const double> b,
                            std::size_t bins = 100, double smoothing = 1e-12) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (a.empty() || b.empty()) throw UsageError("JS divergence needs two non-empty samples");
  auto histogram = [&](std::span<const double> xs) {
    std::vector<double> h(bins, 0.0);
    for (double x : xs) {
      auto k = static_cast<std::size_t>(std::clamp(x, 0.0, 1.0) * static_cast<double>(bins));
      h[std::min(k, bins - 1)] += 1.0;
    }
    const double total = static_cast<double>(xs.size()) + smoothing * static_cast<double>(bins);
    for (auto& v : h) v = (v + smoothing) / total;
    return h;
  };
  const auto p = histogram(a), q = histogram(b);
  double js = 0;
  for (std::size_t k = 0; k < bins; ++k) {
    const double m = 0.5 * (p[k] + q[k]);
    if (p[k] > 0) js += 0.5 * p[k] * std::log2(p[k] / m);
    if (q[k] > 0) js += 0.5 * q[k] * std::log2(q[k] / m);
  }
  return std::clamp(js, 0.0, 1.0);
}

// Mean over samples of |baseline average - defended output|_1 / 2.
inline double confidence_distortion(std::span<const PredictionRecord> baseline,
                                    std::span<const PredictionRecord> defended) {
  if (baseline.size() != defended.size())
    throw ShapeError("distortion needs the same samples on both sides");
  if (baseline.empty()) return 0.0;
  double total = 0;
  for (std::size_t i = 0; i < baseline.size(); ++i) {
    if (baseline[i].sample_id != defended[i].sample_id)
      throw ShapeError("distortion records are not aligned by sample id");
    total += (baseline[i].average - defended[i].fused).cwiseAbs().sum() / 2.0;
  }
  return total / static_cast<double>(baseline.size());
}

struct AgreementStats {
  std::vector<std::size_t> member_hist;     // index c
  std::vector<std::size_t> nonmember_hist;  // index c
  // c -> mean fused max-confidence, NaN where a level is empty
  std::vector<double> member_mean_conf;
  std::vector<double> nonmember_mean_conf;

  double mean_c(bool members) const {
    const auto& h = members ? member_hist : nonmember_hist;
    double num = 0, den = 0;
    for (std::size_t c = 0; c < h.size(); ++c) {
      num += static_cast<double>(c * h[c]);
      den += static_cast<double>(h[c]);
    }
    return den > 0 ? num / den : std::numeric_limits<double>::quiet_NaN();
  }
};

inline AgreementStats agreement_stats(std::span<const PredictionRecord> records,
                                      std::size_t ensemble_size) {
  AgreementStats s;
  const std::size_t levels = ensemble_size + 1;
  s.member_hist.assign(levels, 0);
  s.nonmember_hist.assign(levels, 0);
  std::vector<double> msum(levels, 0.0), nsum(levels, 0.0);
  for (const auto& r : records) {
    const auto c = static_cast<std::size_t>(r.agreement_c);
    if (c >= levels) throw ShapeError("agreement level exceeds ensemble size");
    if (r.is_member) {
      ++s.member_hist[c];
      msum[c] += r.fused_max_conf();
    } else {
      ++s.nonmember_hist[c];
      nsum[c] += r.fused_max_conf();
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t c = 0; c < levels; ++c) {
    s.member_mean_conf.push_back(s.member_hist[c] ? msum[c] / static_cast<double>(s.member_hist[c]) : nan);
    s.nonmember_mean_conf.push_back(
        s.nonmember_hist[c] ? nsum[c] / static_cast<double>(s.nonmember_hist[c]) : nan);
  }
  return s;
}

inline std::size_t correct_count(std::span<const PredictionRecord> records) {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) {
    return r.fused_label == r.true_label;
  }));
}

inline double accuracy(std::span<const PredictionRecord> records) {
  if (records.empty()) throw UsageError("accuracy of an empty record set");
  return static_cast<double>(correct_count(records)) / static_cast<double>(records.size());
}

struct MetricsReport {
  double train_acc = 0;
  double test_acc = 0;
  double auc = 0.5;
  std::map<double, double> tpr_at;  // FPR -> TPR
  double distortion = 0;
  double js_divergence = 0;
  AgreementStats agreement;
};

}  // namespace mia

#endif  // MIA_METRICS_HPP_
