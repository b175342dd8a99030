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

// Experiment configuration: the JSON schema, strict parsing (unknown keys are
// errors) and the resolved form written back into run manifests.

#ifndef MIA_CONFIG_HPP_
#define MIA_CONFIG_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mia/attacks.hpp"
#include "mia/core.hpp"
#include "mia/data.hpp"
#include "mia/defenses.hpp"
#include "mia/ensemble.hpp"
#include "mia/nn.hpp"

namespace mia {

struct DatasetConfig {
  std::string name = "gaussian_mixture";
  std::optional<GaussianMixtureSpec> generator;  // exactly one of generator
  std::string csv_path;                          // and csv_path is set
  std::string label_column = "label";
  double test_fraction = 0.5;  // csv only
};

struct SplitConfig {
  SplitMode mode = SplitMode::disjoint;
  double victim_fraction = 0.5;  // disjoint: shares of the train portion
  double shadow_fraction = 0.5;
  double known_fraction = 0.8;  // attacker_knows_80
};

struct EnsembleSpec {
  EnsembleKind kind = EnsembleKind::deep;
  std::vector<std::size_t> sizes = {1, 2, 5, 10};
  std::vector<FusionRule> fusions = {FusionRule::average};
  int cycle_len = 50;  // snapshot
  double max_lr = 0.1;
  int weight_steps = 200;  // weighted
  double weight_lr = 0.5;

  std::size_t max_size() const { return *std::max_element(sizes.begin(), sizes.end()); }
};

enum class DefenseType { none, l1, l2, dp, memguard, mmd_mixup };

inline std::string to_string(DefenseType t) {
  switch (t) {
    case DefenseType::none: return "none";
    case DefenseType::l1: return "l1";
    case DefenseType::l2: return "l2";
    case DefenseType::dp: return "dp";
    case DefenseType::memguard: return "memguard";
    case DefenseType::mmd_mixup: return "mmd_mixup";
  }
  return "?";
}

inline DefenseType defense_type_from_string(const std::string& s) {
  for (auto t : {DefenseType::none, DefenseType::l1, DefenseType::l2, DefenseType::dp,
                 DefenseType::memguard, DefenseType::mmd_mixup})
    if (to_string(t) == s) return t;
  throw ConfigError("unknown defense '" + s + "'");
}

struct DefenseSpec {
  DefenseType type = DefenseType::none;
  std::string label = "none";  // report name; defaults to the type
  double penalty = 0;  // l1 / l2
  DPConfig dp;
  MaskConfig mask;
  MMDConfig mmd;
  double mixup_alpha = 1.0;         // mmd_mixup
  double reference_fraction = 0.2;  // mmd_mixup: held out of the victim split

  // Training config with this defense's knobs applied.
  TrainConfig apply(TrainConfig c) const {
    switch (type) {
      case DefenseType::l1: c.l1_weight = penalty; break;
      case DefenseType::l2: c.l2_weight = penalty; break;
      case DefenseType::dp: c.dp = dp; break;
      case DefenseType::mmd_mixup: c.mixup_alpha = mixup_alpha; break;
      default: break;
    }
    return c;
  }
  bool changes_training() const {
    return type != DefenseType::none && type != DefenseType::memguard;
  }
};

enum class AttackType { gap, shokri, watson, sampling };

inline std::string to_string(AttackType t) {
  switch (t) {
    case AttackType::gap: return "gap";
    case AttackType::shokri: return "shokri";
    case AttackType::watson: return "watson";
    case AttackType::sampling: return "sampling";
  }
  return "?";
}

inline AttackType attack_type_from_string(const std::string& s) {
  for (auto t : {AttackType::gap, AttackType::shokri, AttackType::watson, AttackType::sampling})
    if (to_string(t) == s) return t;
  throw ConfigError("unknown attack '" + s + "'");
}

struct AttackSpec {
  AttackType type = AttackType::gap;
  std::size_t shadows = 4;  // shokri / watson
  Architecture attack_arch = default_attack_architecture();
  int attack_epochs = 30;
  int attack_batch = 64;
  double attack_lr = 0.05;
  int k_perturb = 20;  // sampling
  std::vector<double> sigmas = default_sigma_grid();

  bool needs_attack_model() const {
    return type == AttackType::shokri || type == AttackType::watson;
  }
  TrainConfig attack_train_config(std::uint64_t seed) const {
    TrainConfig c;
    c.epochs = attack_epochs;
    c.batch_size = attack_batch;
    c.lr_schedule = ConstantLr{attack_lr};
    c.seed = seed;
    return c;
  }
};

struct ExperimentConfig {
  DatasetConfig dataset;
  SplitConfig split;
  Architecture model;
  TrainConfig train;
  std::vector<EnsembleSpec> ensembles;
  std::vector<DefenseSpec> defenses = {DefenseSpec{}};
  std::vector<AttackSpec> attacks;
  std::size_t js_bins = 100;
  std::size_t eval_cap = 0;  // most members (and nonmembers) scored per cell; 0 = all
  bool figures = true;
  bool save_models = true;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  // Checkpoint epochs swept by the harness; the final epoch when none are set.
  std::vector<int> epoch_sweep() const {
    if (train.checkpoint_epochs.empty()) return {train.epochs};
    std::set<int> s(train.checkpoint_epochs.begin(), train.checkpoint_epochs.end());
    return {s.begin(), s.end()};
  }

  void validate() const;
};

namespace detail {

using cjson = nlohmann::ordered_json;

// Object reader that remembers which keys were consumed, so leftovers can be
// reported as typos.
class ObjectReader {
 public:
  ObjectReader(const cjson& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  std::string required_string(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_string()) throw ConfigError(path_ + "." + key + ": expected a string");
    return v.get<std::string>();
  }

  const cjson& at(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(path_ + ": missing key '" + key + "'");
    return j_.at(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  std::string child(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
  }

 private:
  const cjson& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline double read_clip_norm(const cjson& v, const std::string& path) {
  if (v.is_string() && v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  if (v.is_number()) return v.get<double>();
  throw ConfigError(path + ": expected a number or \"inf\"");
}

inline LrSchedule read_schedule(const cjson& j, const std::string& path) {
  ObjectReader r(j, path);
  const std::string type = r.required_string("type");
  LrSchedule out;
  if (type == "constant") {
    ConstantLr s;
    r.read("lr", s.lr);
    out = s;
  } else if (type == "step") {
    StepLr s;
    r.read("lr", s.lr);
    r.read("drop_epochs", s.drop_epochs);
    r.read("factor", s.factor);
    out = s;
  } else if (type == "cyclic") {
    CyclicLr s;
    r.read("max_lr", s.max_lr);
    r.read("cycle_len", s.cycle_len);
    out = s;
  } else {
    throw ConfigError(path + ".type: expected constant, step or cyclic");
  }
  r.finish();
  return out;
}

inline cjson schedule_json(const LrSchedule& schedule) {
  return std::visit(
      [](const auto& s) -> cjson {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantLr>) {
          return {{"type", "constant"}, {"lr", s.lr}};
        } else if constexpr (std::is_same_v<S, StepLr>) {
          return {{"type", "step"}, {"lr", s.lr}, {"drop_epochs", s.drop_epochs},
                  {"factor", s.factor}};
        } else {
          return {{"type", "cyclic"}, {"max_lr", s.max_lr}, {"cycle_len", s.cycle_len}};
        }
      },
      schedule);
}

inline Architecture read_architecture(const cjson& j, const std::string& path) {
  ObjectReader r(j, path);
  Architecture a;
  r.read("hidden", a.hidden);
  std::string act = "relu";
  r.read("activation", act);
  if (act == "relu") a.activation = Activation::relu;
  else if (act == "tanh") a.activation = Activation::tanh;
  else throw ConfigError(path + ".activation: expected relu or tanh");
  r.finish();
  return a;
}

inline cjson architecture_json(const Architecture& a) {
  return {{"hidden", a.hidden}, {"activation", a.activation == Activation::relu ? "relu" : "tanh"}};
}

template <typename T, typename F>
std::vector<T> read_named_list(const cjson& j, const std::string& path, F from_string) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array");
  std::vector<T> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw ConfigError(path + ": expected strings");
    out.push_back(from_string(v.get<std::string>()));
  }
  return out;
}

}  // namespace detail

// Parses and validates a config. Relative CSV paths resolve against
// `base_dir`.
inline ExperimentConfig parse_config(const nlohmann::ordered_json& j,
                                     const std::filesystem::path& base_dir = {}) {
  using detail::ObjectReader;
  ExperimentConfig c;
  ObjectReader root(j, "config");

  {
    ObjectReader r(root.at("dataset"), "config.dataset");
    r.read("name", c.dataset.name);
    if (r.has("generator")) {
      ObjectReader g(r.at("generator"), r.child("generator"));
      GaussianMixtureSpec spec;
      g.read("classes", spec.classes);
      g.read("dims", spec.dims);
      g.read("per_class_train", spec.per_class_train);
      g.read("per_class_test", spec.per_class_test);
      g.read("separation", spec.separation);
      g.finish();
      c.dataset.generator = spec;
    }
    if (r.has("csv")) {
      ObjectReader s(r.at("csv"), r.child("csv"));
      const std::string path = s.required_string("path");
      s.read("label_column", c.dataset.label_column);
      s.read("test_fraction", c.dataset.test_fraction);
      s.finish();
      std::filesystem::path p(path);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      c.dataset.csv_path = p.string();
    }
    r.finish();
  }

  if (root.has("split")) {
    ObjectReader r(root.at("split"), "config.split");
    std::string mode = to_string(c.split.mode);
    r.read("mode", mode);
    c.split.mode = split_mode_from_string(mode);
    r.read("victim_fraction", c.split.victim_fraction);
    r.read("shadow_fraction", c.split.shadow_fraction);
    r.read("known_fraction", c.split.known_fraction);
    r.finish();
  }

  if (root.has("model")) c.model = detail::read_architecture(root.at("model"), "config.model");

  if (root.has("train")) {
    ObjectReader r(root.at("train"), "config.train");
    r.read("epochs", c.train.epochs);
    r.read("batch_size", c.train.batch_size);
    if (r.has("lr")) c.train.lr_schedule = detail::read_schedule(r.at("lr"), r.child("lr"));
    r.read("l1", c.train.l1_weight);
    r.read("l2", c.train.l2_weight);
    r.read("mixup_alpha", c.train.mixup_alpha);
    r.read("checkpoint_epochs", c.train.checkpoint_epochs);
    r.finish();
  }

  {
    const auto& list = root.at("ensembles");
    if (!list.is_array()) throw ConfigError("config.ensembles: expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      ObjectReader r(list[i], "config.ensembles[" + std::to_string(i) + "]");
      EnsembleSpec e;
      e.kind = ensemble_kind_from_string(r.required_string("kind"));
      r.read("sizes", e.sizes);
      if (r.has("fusions"))
        e.fusions = detail::read_named_list<FusionRule>(r.at("fusions"), r.child("fusions"),
                                                        fusion_rule_from_string);
      r.read("cycle_len", e.cycle_len);
      r.read("max_lr", e.max_lr);
      r.read("weight_steps", e.weight_steps);
      r.read("weight_lr", e.weight_lr);
      r.finish();
      c.ensembles.push_back(std::move(e));
    }
  }

  if (root.has("defenses")) {
    const auto& list = root.at("defenses");
    if (!list.is_array()) throw ConfigError("config.defenses: expected an array");
    c.defenses.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "config.defenses[" + std::to_string(i) + "]";
      ObjectReader r(list[i], path);
      DefenseSpec d;
      const std::string type = r.required_string("type");
      d.type = defense_type_from_string(type);
      d.label = type;
      r.read("label", d.label);
      switch (d.type) {
        case DefenseType::l1:
        case DefenseType::l2: r.read("penalty", d.penalty); break;
        case DefenseType::dp:
          if (r.has("clip_norm")) d.dp.clip_norm = detail::read_clip_norm(r.at("clip_norm"), path);
          r.read("noise_multiplier", d.dp.noise_multiplier);
          r.read("delta", d.dp.delta);
          break;
        case DefenseType::memguard: r.read("noise_magnitude", d.mask.noise_magnitude); break;
        case DefenseType::mmd_mixup:
          r.read("bandwidth", d.mmd.bandwidth);
          r.read("weight", d.mmd.weight);
          r.read("reference_batch", d.mmd.reference_batch);
          r.read("mixup_alpha", d.mixup_alpha);
          r.read("reference_fraction", d.reference_fraction);
          break;
        case DefenseType::none: break;
      }
      r.finish();
      c.defenses.push_back(std::move(d));
    }
  }

  {
    const auto& list = root.at("attacks");
    if (!list.is_array()) throw ConfigError("config.attacks: expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "config.attacks[" + std::to_string(i) + "]";
      ObjectReader r(list[i], path);
      AttackSpec a;
      a.type = attack_type_from_string(r.required_string("type"));
      if (a.needs_attack_model()) {
        r.read("shadows", a.shadows);
        if (r.has("attack_model"))
          a.attack_arch = detail::read_architecture(r.at("attack_model"), r.child("attack_model"));
        r.read("attack_epochs", a.attack_epochs);
        r.read("attack_batch", a.attack_batch);
        r.read("attack_lr", a.attack_lr);
      }
      if (a.type == AttackType::sampling) {
        r.read("k_perturb", a.k_perturb);
        r.read("sigmas", a.sigmas);
      }
      r.finish();
      c.attacks.push_back(std::move(a));
    }
  }

  if (root.has("metrics")) {
    ObjectReader r(root.at("metrics"), "config.metrics");
    r.read("js_bins", c.js_bins);
    r.finish();
  }
  root.read("eval_cap", c.eval_cap);
  root.read("figures", c.figures);
  root.read("save_models", c.save_models);
  root.read("output_dir", c.output_dir);
  root.read("seed", c.seed);
  root.finish();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + ex.what());
  }
  return parse_config(j, path.parent_path());
}

inline void ExperimentConfig::validate() const {
  if (dataset.generator.has_value() == !dataset.csv_path.empty())
    throw ConfigError("config.dataset: set exactly one of generator and csv");
  if (dataset.generator) {
    const auto& g = *dataset.generator;
    if (g.classes < 2 || g.dims < 1 || g.per_class_train < 1 || g.per_class_test < 1)
      throw ConfigError("config.dataset.generator: sizes must be positive, classes >= 2");
    if (!(g.separation >= 0)) throw ConfigError("config.dataset.generator: separation must be >= 0");
  } else {
    if (!std::filesystem::exists(dataset.csv_path))
      throw ConfigError("config.dataset.csv.path: '" + dataset.csv_path + "' does not exist");
    if (!(dataset.test_fraction > 0 && dataset.test_fraction < 1))
      throw ConfigError("config.dataset.csv.test_fraction must lie in (0, 1)");
  }
  if (split.mode == SplitMode::disjoint) {
    if (split.victim_fraction <= 0 || split.shadow_fraction < 0 ||
        split.victim_fraction + split.shadow_fraction > 1.0 + 1e-12)
      throw ConfigError("config.split: fractions must be positive and sum to at most 1");
  } else if (!(split.known_fraction > 0 && split.known_fraction < 1)) {
    throw ConfigError("config.split.known_fraction must lie in (0, 1)");
  }
  for (auto h : model.hidden)
    if (h == 0) throw ConfigError("config.model.hidden: layer widths must be positive");
  train.validate();
  for (int e : train.checkpoint_epochs)
    if (e < 1 || e > train.epochs)
      throw ConfigError("config.train.checkpoint_epochs: " + std::to_string(e) +
                        " outside [1, epochs]");

  if (ensembles.empty()) throw ConfigError("config.ensembles: at least one ensemble is required");
  for (const auto& e : ensembles) {
    if (e.sizes.empty()) throw ConfigError("config.ensembles: sizes must not be empty");
    if (e.fusions.empty()) throw ConfigError("config.ensembles: at least one fusion is required");
    for (auto n : e.sizes)
      if (n == 0) throw ConfigError("config.ensembles: sizes must be positive");
    for (auto f : e.fusions)
      if (f == FusionRule::weighted && e.kind != EnsembleKind::weighted)
        throw ConfigError("config.ensembles: weighted fusion needs kind 'weighted'");
    if (e.kind == EnsembleKind::snapshot) {
      if (e.cycle_len < 1 || !(e.max_lr > 0))
        throw ConfigError("config.ensembles: snapshot needs cycle_len >= 1 and max_lr > 0");
      if (!train.checkpoint_epochs.empty())
        throw ConfigError("config.ensembles: snapshot ensembles cannot be swept over epochs");
    }
    if (e.kind == EnsembleKind::weighted && (e.weight_steps < 1 || !(e.weight_lr > 0)))
      throw ConfigError("config.ensembles: weighted needs weight_steps >= 1 and weight_lr > 0");
  }

  auto plain_name = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char ch) {
      return std::isalnum(ch) || ch == '_' || ch == '-' || ch == '.';
    });
  };
  if (!plain_name(dataset.name))
    throw ConfigError("config.dataset.name: use letters, digits, '_', '-' or '.'");
  if (defenses.empty()) throw ConfigError("config.defenses: list must not be empty");
  std::set<std::string> labels;
  for (const auto& d : defenses) {
    if (!plain_name(d.label))
      throw ConfigError("config.defenses: label '" + d.label +
                        "' must use letters, digits, '_', '-' or '.'");
    if (!labels.insert(d.label).second)
      throw ConfigError("config.defenses: duplicate label '" + d.label + "'");
    if (d.type == DefenseType::dp) d.dp.validate();
    if (d.type == DefenseType::memguard) d.mask.validate();
    if (d.type == DefenseType::mmd_mixup) {
      d.mmd.validate();
      if (!(d.reference_fraction > 0 && d.reference_fraction < 1))
        throw ConfigError("config.defenses: reference_fraction must lie in (0, 1)");
      if (d.mixup_alpha < 0) throw ConfigError("config.defenses: mixup_alpha must be >= 0");
    }
    if ((d.type == DefenseType::l1 || d.type == DefenseType::l2) && !(d.penalty >= 0))
      throw ConfigError("config.defenses: penalty must be >= 0");
  }

  if (attacks.empty()) throw ConfigError("config.attacks: at least one attack is required");
  std::set<std::string> attack_names;
  for (const auto& a : attacks) {
    if (!attack_names.insert(to_string(a.type)).second)
      throw ConfigError("config.attacks: attack '" + to_string(a.type) + "' listed twice");
    if (a.needs_attack_model()) {
      if (a.shadows < 1) throw ConfigError("config.attacks: shadows must be >= 1");
      if (a.attack_epochs < 1 || a.attack_batch < 1 || !(a.attack_lr > 0))
        throw ConfigError("config.attacks: attack training parameters must be positive");
    }
    if (a.type == AttackType::sampling) {
      if (a.k_perturb < 1) throw ConfigError("config.attacks: k_perturb must be >= 1");
      if (a.sigmas.empty()) throw ConfigError("config.attacks: sigmas must not be empty");
      for (double s : a.sigmas)
        if (!(s >= 0)) throw ConfigError("config.attacks: sigmas must be >= 0");
    }
  }
  if (js_bins < 1) throw ConfigError("config.metrics.js_bins must be >= 1");
}

// Fully resolved config, defaults included.
inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  using detail::cjson;
  cjson j;
  cjson ds = {{"name", c.dataset.name}};
  if (c.dataset.generator) {
    const auto& g = *c.dataset.generator;
    ds["generator"] = {{"classes", g.classes},
                       {"dims", g.dims},
                       {"per_class_train", g.per_class_train},
                       {"per_class_test", g.per_class_test},
                       {"separation", g.separation}};
  } else {
    ds["csv"] = {{"path", c.dataset.csv_path},
                 {"label_column", c.dataset.label_column},
                 {"test_fraction", c.dataset.test_fraction}};
  }
  j["dataset"] = ds;
  j["split"] = {{"mode", to_string(c.split.mode)},
                {"victim_fraction", c.split.victim_fraction},
                {"shadow_fraction", c.split.shadow_fraction},
                {"known_fraction", c.split.known_fraction}};
  j["model"] = detail::architecture_json(c.model);
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"lr", detail::schedule_json(c.train.lr_schedule)},
                {"l1", c.train.l1_weight},
                {"l2", c.train.l2_weight},
                {"mixup_alpha", c.train.mixup_alpha},
                {"checkpoint_epochs", c.train.checkpoint_epochs}};
  j["ensembles"] = cjson::array();
  for (const auto& e : c.ensembles) {
    cjson fusions = cjson::array();
    for (auto f : e.fusions) fusions.push_back(to_string(f));
    cjson ej = {{"kind", to_string(e.kind)}, {"sizes", e.sizes}, {"fusions", fusions}};
    if (e.kind == EnsembleKind::snapshot) {
      ej["cycle_len"] = e.cycle_len;
      ej["max_lr"] = e.max_lr;
    }
    if (e.kind == EnsembleKind::weighted) {
      ej["weight_steps"] = e.weight_steps;
      ej["weight_lr"] = e.weight_lr;
    }
    j["ensembles"].push_back(ej);
  }
  j["defenses"] = cjson::array();
  for (const auto& d : c.defenses) {
    cjson dj = {{"type", to_string(d.type)}, {"label", d.label}};
    switch (d.type) {
      case DefenseType::l1:
      case DefenseType::l2: dj["penalty"] = d.penalty; break;
      case DefenseType::dp:
        dj["clip_norm"] = std::isinf(d.dp.clip_norm) ? cjson("inf") : cjson(d.dp.clip_norm);
        dj["noise_multiplier"] = d.dp.noise_multiplier;
        dj["delta"] = d.dp.delta;
        break;
      case DefenseType::memguard: dj["noise_magnitude"] = d.mask.noise_magnitude; break;
      case DefenseType::mmd_mixup:
        dj["bandwidth"] = d.mmd.bandwidth;
        dj["weight"] = d.mmd.weight;
        dj["reference_batch"] = d.mmd.reference_batch;
        dj["mixup_alpha"] = d.mixup_alpha;
        dj["reference_fraction"] = d.reference_fraction;
        break;
      case DefenseType::none: break;
    }
    j["defenses"].push_back(dj);
  }
  j["attacks"] = cjson::array();
  for (const auto& a : c.attacks) {
    cjson aj = {{"type", to_string(a.type)}};
    if (a.needs_attack_model()) {
      aj["shadows"] = a.shadows;
      aj["attack_model"] = detail::architecture_json(a.attack_arch);
      aj["attack_epochs"] = a.attack_epochs;
      aj["attack_batch"] = a.attack_batch;
      aj["attack_lr"] = a.attack_lr;
    }
    if (a.type == AttackType::sampling) {
      aj["k_perturb"] = a.k_perturb;
      aj["sigmas"] = a.sigmas;
    }
    j["attacks"].push_back(aj);
  }
  j["metrics"] = {{"js_bins", c.js_bins}};
  j["eval_cap"] = c.eval_cap;
  j["figures"] = c.figures;
  j["save_models"] = c.save_models;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  return j;
}

}  // namespace mia

#endif  // MIA_CONFIG_HPP_
