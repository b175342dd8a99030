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

// Labeled tabular data, the synthetic benchmark generator, CSV import and
// export, and the index-set samplers behind every membership split.

#ifndef MIA_DATA_HPP_
#define MIA_DATA_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mia/core.hpp"

namespace mia {

using IndexList = std::vector<std::size_t>;

struct LabeledDataset {
  Eigen::MatrixXd features;  // one row per sample
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::vector<std::pair<double, double>> feature_range;  // per column (min, max)
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;  // class_names[k] names label k

  std::size_t size() const { return labels.size(); }
  std::size_t dims() const { return static_cast<std::size_t>(features.cols()); }

  void validate() const {
    if (labels.empty()) throw UsageError("dataset must hold at least one sample");
    if (static_cast<std::size_t>(features.rows()) != labels.size())
      throw ShapeError("feature rows and label count differ");
    if (!features.allFinite()) throw NumericError("dataset holds non-finite features");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
        throw UsageError("label " + std::to_string(y) + " outside [0, " +
                         std::to_string(num_classes) + ")");
    if (feature_range.size() != dims()) throw ShapeError("feature_range size mismatch");
  }

  Eigen::MatrixXd rows(std::span<const std::size_t> idx) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), features.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(idx[i]));
    return out;
  }

  std::vector<int> labels_of(std::span<const std::size_t> idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(labels[i]);
    return out;
  }

  void compute_feature_range() {
    feature_range.assign(dims(), {0.0, 0.0});
    for (Eigen::Index j = 0; j < features.cols(); ++j)
      feature_range[static_cast<std::size_t>(j)] = {features.col(j).minCoeff(),
                                                    features.col(j).maxCoeff()};
  }

  static LabeledDataset from(Eigen::MatrixXd x, std::vector<int> y, std::size_t classes) {
    LabeledDataset d;
    d.features = std::move(x);
    d.labels = std::move(y);
    d.num_classes = classes;
    for (std::size_t j = 0; j < d.dims(); ++j) d.feature_names.push_back("f" + std::to_string(j));
    for (std::size_t k = 0; k < classes; ++k) d.class_names.push_back(std::to_string(k));
    if (!d.labels.empty()) d.compute_feature_range();
    d.validate();
    return d;
  }
};

enum class SplitMode { disjoint, attacker_knows_80 };

inline std::string to_string(SplitMode m) {
  return m == SplitMode::disjoint ? "disjoint" : "attacker_knows_80";
}

inline SplitMode split_mode_from_string(const std::string& s) {
  if (s == "disjoint") return SplitMode::disjoint;
  if (s == "attacker_knows_80") return SplitMode::attacker_knows_80;
  throw ConfigError("unknown split mode '" + s + "'");
}

// Index discipline shared by defender and attacker. In the disjoint mode the
// attacker trains shadows on shadow_pool. In attacker_knows_80 mode the
// shadow pool is empty and attacker_known lists the victim-train and test
// rows whose membership the attacker is handed; the remainder is evaluated.
struct SplitPlan {
  IndexList victim_train;
  IndexList shadow_pool;
  IndexList test;
  IndexList attacker_known;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::disjoint;

  void validate() const {
    std::unordered_map<std::size_t, int> owner;
    auto claim = [&](const IndexList& set, int tag, const char* name) {
      for (auto i : set) {
        auto [it, fresh] = owner.emplace(i, tag);
        if (!fresh)
          throw UsageError(std::string("split index ") + std::to_string(i) + " in " + name +
                           " is already used by another split");
      }
    };
    claim(victim_train, 0, "victim_train");
    claim(shadow_pool, 1, "shadow_pool");
    claim(test, 2, "test");
  }
};

// A sample is a member iff it trained at least one base model.
class MembershipGroundTruth {
 public:
  MembershipGroundTruth() = default;
  explicit MembershipGroundTruth(std::span<const std::size_t> members)
      : members_(members.begin(), members.end()) {}
  static MembershipGroundTruth from(const SplitPlan& plan) {
    return MembershipGroundTruth(plan.victim_train);
  }
  bool is_member(std::size_t i) const { return members_.count(i) != 0; }
  std::size_t size() const { return members_.size(); }

 private:
  std::unordered_set<std::size_t> members_;
};

// Random permutation of `idx`, a pure function of (idx, seed).
inline IndexList shuffled(std::span<const std::size_t> idx, std::uint64_t seed) {
  IndexList out(idx.begin(), idx.end());
  Rng rng = make_rng(seed);
  shuffle(out, rng);
  return out;
}

inline SplitPlan make_split(std::span<const std::size_t> train_portion,
                            std::span<const std::size_t> test_portion, double f_tr, double f_s,
                            std::uint64_t seed) {
  if (f_tr < 0 || f_s < 0 || f_tr + f_s > 1.0 + 1e-12)
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  IndexList perm = shuffled(train_portion, seed);
  const auto n = perm.size();
  const auto n_tr = static_cast<std::size_t>(std::llround(f_tr * static_cast<double>(n)));
  const auto n_s = std::min(n - n_tr,
                            static_cast<std::size_t>(std::llround(f_s * static_cast<double>(n))));
  SplitPlan plan;
  plan.victim_train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_tr));
  plan.shadow_pool.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_tr),
                          perm.begin() + static_cast<std::ptrdiff_t>(n_tr + n_s));
  plan.test.assign(test_portion.begin(), test_portion.end());
  plan.seed = seed;
  plan.mode = SplitMode::disjoint;
  plan.validate();
  return plan;
}

// Victim trains on the whole train portion; the attacker knows membership of
// `known_fraction` of the train portion and of the test portion.
inline SplitPlan make_attacker_knows_split(std::span<const std::size_t> train_portion,
                                           std::span<const std::size_t> test_portion,
                                           double known_fraction, std::uint64_t seed) {
  if (known_fraction < 0 || known_fraction >= 1)
    throw ConfigError("known_fraction must lie in [0, 1)");
  SplitPlan plan;
  plan.victim_train.assign(train_portion.begin(), train_portion.end());
  plan.test.assign(test_portion.begin(), test_portion.end());
  plan.seed = seed;
  plan.mode = SplitMode::attacker_knows_80;
  for (auto [set, key] : {std::pair{&plan.victim_train, "known/train"},
                          std::pair{&plan.test, "known/test"}}) {
    IndexList perm = shuffled(*set, derive_seed(seed, key));
    const auto k = static_cast<std::size_t>(
        std::llround(known_fraction * static_cast<double>(perm.size())));
    plan.attacker_known.insert(plan.attacker_known.end(), perm.begin(),
                               perm.begin() + static_cast<std::ptrdiff_t>(k));
  }
  plan.validate();
  return plan;
}

inline IndexList bootstrap_sample(std::span<const std::size_t> idx, std::uint64_t seed) {
  IndexList out;
  if (idx.empty()) return out;
  out.reserve(idx.size());
  Rng rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
  for (std::size_t i = 0; i < idx.size(); ++i) out.push_back(idx[pick(rng)]);
  return out;
}

// Shuffles then deals contiguous chunks; chunk sizes differ by at most one.
inline std::vector<IndexList> partition_disjoint(std::span<const std::size_t> idx,
                                                 std::size_t parts, std::uint64_t seed) {
  if (parts == 0) throw ConfigError("partition count must be positive");
  if (parts == 1) return {IndexList(idx.begin(), idx.end())};
  IndexList perm = shuffled(idx, seed);
  std::vector<IndexList> out(parts);
  const std::size_t base = perm.size() / parts, extra = perm.size() % parts;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    out[p].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                  perm.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

struct GaussianMixtureSpec {
  std::size_t classes = 10;
  std::size_t dims = 20;
  std::size_t per_class_train = 50;
  std::size_t per_class_test = 200;
  double separation = 3.0;
  std::uint64_t seed = 0;
};

struct GeneratedData {
  LabeledDataset dataset;
  IndexList train_portion;
  IndexList test_portion;
  SplitPlan split;  // default: half of train to victim, half to shadow pool
};

// Class means lie on a sphere of radius `separation`; samples add unit
// isotropic noise. Train rows come first, then test rows, each class-major.
inline GeneratedData generate_gaussian_mixture(const GaussianMixtureSpec& spec) {
  if (spec.classes < 2) throw ConfigError("need at least 2 classes");
  if (spec.dims < 2) throw ConfigError("need at least 2 dimensions");
  if (spec.per_class_train < 2) throw ConfigError("need at least 2 train samples per class");
  if (spec.separation < 0) throw ConfigError("class separation must be non-negative");

  Rng rng = make_rng(derive_seed(spec.seed, "gaussian_mixture"));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(spec.dims);

  Eigen::MatrixXd means(static_cast<Eigen::Index>(spec.classes), d);
  for (Eigen::Index k = 0; k < means.rows(); ++k) {
    Eigen::VectorXd dir(d);
    do {
      for (Eigen::Index j = 0; j < d; ++j) dir(j) = normal(rng);
    } while (dir.norm() == 0.0);
    means.row(k) = (spec.separation / dir.norm()) * dir.transpose();
  }

  const std::size_t n_train = spec.classes * spec.per_class_train;
  const std::size_t n_test = spec.classes * spec.per_class_test;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n_train + n_test), d);
  std::vector<int> y;
  y.reserve(n_train + n_test);
  Eigen::Index row = 0;
  for (std::size_t per_class : {spec.per_class_train, spec.per_class_test}) {
    for (std::size_t k = 0; k < spec.classes; ++k) {
      for (std::size_t i = 0; i < per_class; ++i, ++row) {
        for (Eigen::Index j = 0; j < d; ++j)
          x(row, j) = means(static_cast<Eigen::Index>(k), j) + normal(rng);
        y.push_back(static_cast<int>(k));
      }
    }
  }

  GeneratedData out;
  out.dataset = LabeledDataset::from(std::move(x), std::move(y), spec.classes);
  out.train_portion.resize(n_train);
  std::iota(out.train_portion.begin(), out.train_portion.end(), std::size_t{0});
  out.test_portion.resize(n_test);
  std::iota(out.test_portion.begin(), out.test_portion.end(), n_train);
  out.split = make_split(out.train_portion, out.test_portion, 0.5, 0.5,
                         derive_seed(spec.seed, "split"));
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && b != e;
}

}  // namespace detail

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline LabeledDataset parse_csv(std::istream& in, const std::string& label_column) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty CSV: header row required", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  auto it = std::find(header.begin(), header.end(), label_column);
  if (it == header.end())
    throw ParseError("label column '" + label_column + "' not found in header", 1);
  const auto label_pos = static_cast<std::size_t>(it - header.begin());

  LabeledDataset d;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (j != label_pos) d.feature_names.push_back(header[j]);

  std::map<std::string, int> label_ids;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no);
    std::vector<double> row;
    row.reserve(header.size() - 1);
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string cell = detail::trim(cells[j]);
      if (j == label_pos) {
        if (cell.empty())
          throw ParseError("line " + std::to_string(line_no) + ": empty label", line_no);
        auto [pos, fresh] = label_ids.emplace(cell, static_cast<int>(d.class_names.size()));
        if (fresh) d.class_names.push_back(cell);
        d.labels.push_back(pos->second);
        continue;
      }
      double v = 0;
      if (!detail::parse_double(cell, v) || !std::isfinite(v))
        throw ParseError("line " + std::to_string(line_no) + ": non-numeric value '" + cell +
                             "' in column '" + header[j] + "'",
                         line_no);
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("CSV has no data rows", line_no);
  d.features.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(header.size() - 1));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  d.num_classes = d.class_names.size();
  d.compute_feature_range();
  d.validate();
  return d;
}

inline LabeledDataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  return parse_csv(in, label_column);
}

// Features in column order, label column last, labels written by class name.
inline void write_csv(const LabeledDataset& d, std::ostream& out,
                      const std::string& label_column = "label") {
  for (const auto& name : d.feature_names) out << name << ',';
  out << label_column << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (Eigen::Index j = 0; j < d.features.cols(); ++j)
      out << format_double(d.features(static_cast<Eigen::Index>(i), j)) << ',';
    const auto y = static_cast<std::size_t>(d.labels[i]);
    out << (y < d.class_names.size() ? d.class_names[y] : std::to_string(y)) << '\n';
  }
}

inline void write_csv(const LabeledDataset& d, const std::string& path,
                      const std::string& label_column = "label") {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_csv(d, out, label_column);
}

}  // namespace mia

#endif  // MIA_DATA_HPP_
