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

// Configuration-driven sweeps over (ensemble kind, size, fusion, defense,
// checkpoint epoch, attack), with every artifact written under one output
// directory and a manifest that hashes them.

#ifndef MIA_EXPERIMENT_HPP_
#define MIA_EXPERIMENT_HPP_

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mia/attacks.hpp"
#include "mia/config.hpp"
#include "mia/core.hpp"
#include "mia/data.hpp"
#include "mia/defenses.hpp"
#include "mia/ensemble.hpp"
#include "mia/io.hpp"
#include "mia/metrics.hpp"
#include "mia/nn.hpp"
#include "mia/svg.hpp"

namespace mia {

inline constexpr const char* kVersion = "0.1.0";

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> c = {
      "dataset", "ensemble_kind", "n_models",      "fusion",      "defense",    "epochs",
      "train_acc", "test_acc",    "attack",        "auc",         "tpr_fpr_0_001",
      "tpr_fpr_0_1", "distortion", "js_div",       "split_mode",  "seed"};
  return c;
}

struct ReportRow {
  std::string dataset;
  std::string ensemble_kind;
  std::size_t n_models = 0;
  std::string fusion;
  std::string defense;
  int epochs = 0;
  double train_acc = 0;
  double test_acc = 0;
  std::string attack;
  double auc = 0;
  double tpr_fpr_0_001 = 0;
  double tpr_fpr_0_1 = 0;
  double distortion = 0;
  double js_div = 0;
  std::string split_mode;
  std::uint64_t seed = 0;
};

inline void write_report_csv(std::span<const ReportRow> rows, std::ostream& out) {
  const auto& cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows)
    out << r.dataset << ',' << r.ensemble_kind << ',' << r.n_models << ',' << r.fusion << ','
        << r.defense << ',' << r.epochs << ',' << format_double(r.train_acc) << ','
        << format_double(r.test_acc) << ',' << r.attack << ',' << format_double(r.auc) << ','
        << format_double(r.tpr_fpr_0_001) << ',' << format_double(r.tpr_fpr_0_1) << ','
        << format_double(r.distortion) << ',' << format_double(r.js_div) << ',' << r.split_mode
        << ',' << r.seed << '\n';
}

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

struct PreparedData {
  LabeledDataset data;
  SplitPlan split;
  std::uint64_t data_seed = 0;
  std::uint64_t split_seed = 0;
};

// Dataset plus split, both pure functions of the config.
inline PreparedData prepare_data(const ExperimentConfig& c) {
  PreparedData p;
  p.data_seed = derive_seed(c.seed, "data");
  p.split_seed = derive_seed(c.seed, "split");
  IndexList train_portion, test_portion;
  if (c.dataset.generator) {
    GaussianMixtureSpec spec = *c.dataset.generator;
    spec.seed = p.data_seed;
    auto g = generate_gaussian_mixture(spec);
    p.data = std::move(g.dataset);
    train_portion = std::move(g.train_portion);
    test_portion = std::move(g.test_portion);
  } else {
    p.data = load_csv(c.dataset.csv_path, c.dataset.label_column);
    IndexList all(p.data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    IndexList perm = shuffled(all, p.data_seed);
    const auto n_test = static_cast<std::size_t>(
        std::llround(c.dataset.test_fraction * static_cast<double>(perm.size())));
    test_portion.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_portion.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
    std::sort(test_portion.begin(), test_portion.end());
    std::sort(train_portion.begin(), train_portion.end());
  }
  if (c.split.mode == SplitMode::disjoint)
    p.split = make_split(train_portion, test_portion, c.split.victim_fraction,
                         c.split.shadow_fraction, p.split_seed);
  else
    p.split = make_attacker_knows_split(train_portion, test_portion, c.split.known_fraction,
                                        p.split_seed);
  return p;
}

struct FailedCell {
  std::string cell;
  std::string error;
};

struct RunOptions {
  unsigned threads = 1;
  std::ostream* log = nullptr;  // progress lines when set
  bool load_models = false;     // reuse <out>/models from an earlier training run
  bool train_only = false;      // stop after training and saving the victims
};

struct RunResult {
  std::vector<ReportRow> rows;
  std::vector<FailedCell> failed;
  std::size_t planned_cells = 0;
  nlohmann::ordered_json manifest;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline IndexList set_difference(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::unordered_set<std::size_t> drop(b.begin(), b.end());
  IndexList out;
  for (auto i : a)
    if (!drop.count(i)) out.push_back(i);
  return out;
}

// Name of the training procedure a defense implies; post-hoc defenses share
// the undefended models.
inline std::string training_name(const DefenseSpec& d) {
  return d.changes_training() ? d.label : std::string("none");
}

inline std::string victim_key(const EnsembleSpec& e, const DefenseSpec& d, std::size_t n) {
  std::string k = to_string(e.kind) + "__" + training_name(d);
  if (e.kind == EnsembleKind::partitioning) k += "__n" + std::to_string(n);
  return k;
}

inline DefenseSpec undefended() {
  DefenseSpec d;
  d.label = "none";
  return d;
}

inline std::string attack_model_signature(const AttackSpec& a) {
  std::string s = "k" + std::to_string(a.shadows) + "_h";
  for (auto h : a.attack_arch.hidden) s += std::to_string(h) + "-";
  s += a.attack_arch.activation == Activation::relu ? "relu" : "tanh";
  s += "_e" + std::to_string(a.attack_epochs) + "_b" + std::to_string(a.attack_batch) + "_lr" +
       format_double(a.attack_lr);
  return s;
}

// Trainer that runs MMD+Mixup against a fixed reference split, or the plain
// loop for every other defense.
inline ModelTrainer trainer_for(const DefenseSpec& d, IndexList reference) {
  if (d.type != DefenseType::mmd_mixup) return {};
  return [mmd = d.mmd, ref = std::move(reference)](const LabeledDataset& data,
                                                   std::span<const std::size_t> idx,
                                                   const Architecture& arch,
                                                   const TrainConfig& config) {
    return train_with_mmd_mixup(data, idx, ref, arch, config, mmd);
  };
}

template <typename T>
struct Outcome {
  std::optional<T> value;
  std::string error;

  const T& get() const {
    if (!value) throw std::runtime_error(error);
    return *value;
  }
};

template <typename F>
auto capture(F&& f) -> Outcome<decltype(f())> {
  Outcome<decltype(f())> o;
  try {
    o.value = f();
  } catch (const std::exception& ex) {
    o.error = ex.what();
  }
  return o;
}

inline double published_accuracy(const Target& target, const LabeledDataset& data,
                                 std::span<const std::size_t> idx) {
  if (idx.empty()) return 0;
  const Eigen::MatrixXd out = target.query(data.rows(idx));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (argmax(out.row(static_cast<Eigen::Index>(i)).transpose()) == data.labels[idx[i]]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

// Equal numbers of members and nonmembers, capped, sorted by sample id.
inline IndexList balanced_eval_set(std::span<const std::size_t> member_pool,
                                   std::span<const std::size_t> nonmember_pool, std::size_t cap,
                                   std::uint64_t seed) {
  std::size_t m = std::min(member_pool.size(), nonmember_pool.size());
  if (cap > 0) m = std::min(m, cap);
  if (m == 0) throw UnavailableAttackError("no members or no nonmembers available to evaluate");
  IndexList a = shuffled(member_pool, derive_seed(seed, "eval/members"));
  IndexList b = shuffled(nonmember_pool, derive_seed(seed, "eval/nonmembers"));
  IndexList out(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(m));
  out.insert(out.end(), b.begin(), b.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(out.begin(), out.end());
  return out;
}

struct Unit {
  std::size_t spec = 0;
  std::size_t n = 0;
  FusionRule fusion = FusionRule::average;
  std::size_t defense = 0;
  int epoch = 0;
};

}  // namespace detail

// Runs the whole sweep and writes under config.output_dir:
//   config.json, split.json, report.csv, manifest.json,
//   predictions/<cell>.csv, scores/<cell>.csv, models/<victim>/...,
//   figures/*.svg.
// Failed cells are listed in the manifest; the rest of the sweep continues.
inline RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
  namespace fs = std::filesystem;
  using detail::capture;
  using detail::Outcome;
  config.validate();
  const auto t_start = detail::Clock::now();
  auto log = [&](const std::string& msg) {
    if (options.log) *options.log << "[mia] " << msg << std::endl;
  };
  const fs::path out_dir(config.output_dir);
  fs::create_directories(out_dir);
  if (!options.train_only)
    for (const char* generated : {"predictions", "scores", "figures"})
      fs::remove_all(out_dir / generated);
  nlohmann::ordered_json times = nlohmann::ordered_json::object();
  nlohmann::ordered_json seeds = nlohmann::ordered_json::object();

  auto t0 = detail::Clock::now();
  const PreparedData prep = prepare_data(config);
  const auto& data = prep.data;
  const auto& split = prep.split;
  seeds["data"] = prep.data_seed;
  seeds["split"] = prep.split_seed;
  write_text(out_dir / "config.json", to_json(config).dump(2) + "\n");
  write_text(out_dir / "split.json", to_json(split).dump() + "\n");
  times["data"] = detail::seconds_since(t0);
  log("data: " + std::to_string(data.size()) + " samples, " + std::to_string(split.victim_train.size()) +
      " victim-train, " + std::to_string(split.shadow_pool.size()) + " shadow pool, " +
      std::to_string(split.test.size()) + " test");

  for (const auto& a : config.attacks) {
    const bool uses_pool = a.type == AttackType::watson ||
                           (a.type == AttackType::shokri && split.mode == SplitMode::disjoint);
    const auto pool = split.mode == SplitMode::disjoint ? split.shadow_pool.size()
                                                        : split.attacker_known.size();
    if (uses_pool && pool > 0 && pool < 2 * a.shadows)
      throw ConfigError("shadow pool of " + std::to_string(pool) + " samples is too small for " +
                        std::to_string(a.shadows) + " shadows");
  }
  const std::vector<int> sweep = config.epoch_sweep();
  const int final_epoch = config.train.epochs;
  const std::unordered_set<std::size_t> known(split.attacker_known.begin(),
                                              split.attacker_known.end());

  // Victims: one per (kind, training procedure), plus one per size for
  // partitioning. The undefended one is always trained; distortion needs it.
  t0 = detail::Clock::now();
  std::map<std::string, Outcome<EnsembleModel>> victims;
  nlohmann::ordered_json victim_seeds = nlohmann::ordered_json::object();
  const DefenseSpec none = detail::undefended();
  auto train_victim = [&](const EnsembleSpec& spec, const DefenseSpec& def, std::size_t n) {
    const std::string key = detail::victim_key(spec, def, n);
    if (victims.count(key)) return;
    const std::uint64_t seed = derive_seed(config.seed, "victim/" + key);
    victim_seeds[key] = seed;
    const fs::path manifest = out_dir / "models" / key / "ensemble.json";
    if (options.load_models) {
      victims[key] = capture([&] { return load_ensemble(manifest); });
      log("loaded victim " + key);
      return;
    }
    log("training victim " + key);
    victims[key] = capture([&] {
      IndexList d_tr = split.victim_train;
      IndexList reference;
      if (def.type == DefenseType::mmd_mixup) {
        IndexList perm = shuffled(d_tr, derive_seed(seed, "mmd/holdout"));
        const auto r = static_cast<std::size_t>(
            std::llround(def.reference_fraction * static_cast<double>(perm.size())));
        if (r == 0 || r == perm.size())
          throw ConfigError("MMD reference split leaves no training or reference samples");
        reference.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(r));
        d_tr.assign(perm.begin() + static_cast<std::ptrdiff_t>(r), perm.end());
        std::sort(d_tr.begin(), d_tr.end());
      }
      const ModelTrainer trainer = detail::trainer_for(def, std::move(reference));
      TrainConfig tc = def.apply(config.train);
      tc.seed = seed;
      tc.checkpoint_epochs = sweep;
      const auto max_n = spec.max_size();
      EnsembleModel e;
      switch (spec.kind) {
        case EnsembleKind::deep:
        case EnsembleKind::weighted:
          e = train_deep_ensemble(data, d_tr, max_n, config.model, tc, options.threads, trainer);
          e.kind = spec.kind;
          break;
        case EnsembleKind::bagging:
          e = train_bagging(data, d_tr, max_n, config.model, tc, options.threads, trainer);
          break;
        case EnsembleKind::partitioning:
          e = train_partitioning(data, d_tr, n, config.model, tc, options.threads, trainer);
          break;
        case EnsembleKind::snapshot:
          e = train_snapshot_ensemble(data, d_tr, max_n, spec.cycle_len, spec.max_lr,
                                      config.model, tc, trainer);
          break;
      }
      if (config.save_models) save_ensemble(e, manifest);
      return e;
    });
    if (!victims[key].value) log("victim " + key + " failed: " + victims[key].error);
  };
  for (const auto& spec : config.ensembles) {
    const std::vector<std::size_t> sizes =
        spec.kind == EnsembleKind::partitioning ? spec.sizes
                                                : std::vector<std::size_t>{spec.max_size()};
    for (auto n : sizes) {
      train_victim(spec, none, n);
      for (const auto& def : config.defenses) train_victim(spec, def, n);
    }
  }
  seeds["victims"] = victim_seeds;
  times["victims"] = detail::seconds_since(t0);

  RunResult result;
  if (options.train_only) {
    for (const auto& [key, v] : victims)
      if (!v.value) result.failed.push_back({"victim=" + key, v.error});
    times["total"] = detail::seconds_since(t_start);
    nlohmann::ordered_json failed = nlohmann::ordered_json::array();
    for (const auto& f : result.failed) failed.push_back({{"cell", f.cell}, {"error", f.error}});
    result.manifest = {{"tool", "mia_lab"}, {"version", kVersion}, {"config", to_json(config)},
                       {"seeds", seeds}, {"failed", failed}, {"wall_times_s", times}};
    write_text(out_dir / "manifest.json", result.manifest.dump(2) + "\n");
    return result;
  }

  // Shadows mirror the victim's training procedure, one set per (procedure,
  // shadow count). With the attacker-knows split they train on the known
  // pool and only serve as calibration models.
  t0 = detail::Clock::now();
  const IndexList& shadow_pool =
      split.mode == SplitMode::disjoint ? split.shadow_pool : split.attacker_known;
  std::map<std::string, Outcome<ShadowSet>> shadows;
  nlohmann::ordered_json shadow_seeds = nlohmann::ordered_json::object();
  auto shadow_key = [](const DefenseSpec& d, const AttackSpec& a) {
    return detail::training_name(d) + "__k" + std::to_string(a.shadows);
  };
  auto needs_shadows = [&](const AttackSpec& a) {
    return a.type == AttackType::watson ||
           (a.type == AttackType::shokri && split.mode == SplitMode::disjoint);
  };
  for (const auto& def : config.defenses) {
    for (const auto& a : config.attacks) {
      if (!needs_shadows(a)) continue;
      const std::string key = shadow_key(def, a);
      if (shadows.count(key)) continue;
      const std::uint64_t seed = derive_seed(config.seed, "shadows/" + key);
      shadow_seeds[key] = seed;
      log("training shadows " + key);
      shadows[key] = capture([&] {
        TrainConfig tc = def.apply(config.train);
        tc.checkpoint_epochs = sweep;
        ModelTrainer trainer;
        if (def.type == DefenseType::mmd_mixup) {
          // Each shadow's out-set plays the held-out reference.
          trainer = [&shadow_pool, mmd = def.mmd](const LabeledDataset& d,
                                                  std::span<const std::size_t> idx,
                                                  const Architecture& arch,
                                                  const TrainConfig& cfg) {
            return train_with_mmd_mixup(d, idx, detail::set_difference(shadow_pool, idx), arch,
                                        cfg, mmd);
          };
        }
        return train_shadows(data, shadow_pool, a.shadows, config.model, tc, seed,
                             options.threads, trainer);
      });
      if (!shadows[key].value) log("shadows " + key + " failed: " + shadows[key].error);
    }
  }
  seeds["shadows"] = shadow_seeds;
  times["shadows"] = detail::seconds_since(t0);

  // Attack models trained on shadow outputs, per (shadow set, epoch,
  // attack-training parameters).
  t0 = detail::Clock::now();
  struct AttackModelJob {
    std::string key;
    std::string shadow_key;
    const AttackSpec* attack;
    int epoch;
    std::uint64_t seed;
  };
  std::vector<AttackModelJob> jobs;
  std::map<std::string, std::size_t> job_index;
  nlohmann::ordered_json attack_seeds = nlohmann::ordered_json::object();
  auto attack_model_key = [&](const DefenseSpec& d, const AttackSpec& a, int epoch) {
    return shadow_key(d, a) + "__e" + std::to_string(epoch) + "__" +
           detail::attack_model_signature(a);
  };
  if (split.mode == SplitMode::disjoint) {
    for (const auto& def : config.defenses)
      for (const auto& a : config.attacks) {
        if (!a.needs_attack_model()) continue;
        for (int epoch : sweep) {
          const std::string key = attack_model_key(def, a, epoch);
          if (job_index.count(key)) continue;
          const auto seed = derive_seed(config.seed, "attack_model/" + key);
          attack_seeds[key] = seed;
          job_index[key] = jobs.size();
          jobs.push_back({key, shadow_key(def, a), &a, epoch, seed});
        }
      }
  }
  std::vector<Outcome<MLPModel>> attack_models(jobs.size());
  parallel_for(jobs.size(), options.threads, [&](std::size_t j) {
    const auto& job = jobs[j];
    attack_models[j] = capture([&] {
      const ShadowSet s = shadows.at(job.shadow_key).get().at_epoch(job.epoch);
      return train_attack_model(build_attack_dataset(s, data), job.attack->attack_arch,
                                job.attack->attack_train_config(job.seed));
    });
  });
  if (!jobs.empty()) log("trained " + std::to_string(jobs.size()) + " attack model(s)");
  seeds["attack_models"] = attack_seeds;
  times["attack_models"] = detail::seconds_since(t0);

  // Evaluation units: every attack of a unit shares its target and records.
  t0 = detail::Clock::now();
  std::vector<detail::Unit> units;
  for (std::size_t s = 0; s < config.ensembles.size(); ++s)
    for (auto n : config.ensembles[s].sizes)
      for (auto fusion : config.ensembles[s].fusions)
        for (std::size_t d = 0; d < config.defenses.size(); ++d)
          for (int epoch : sweep) units.push_back({s, n, fusion, d, epoch});
  result.planned_cells = units.size() * config.attacks.size();
  const std::uint64_t eval_seed = derive_seed(config.seed, "eval");
  const std::uint64_t sampling_seed = derive_seed(config.seed, "sampling");
  seeds["eval"] = eval_seed;
  seeds["sampling"] = sampling_seed;

  struct UnitResult {
    std::vector<std::optional<ReportRow>> rows;  // one per attack
    std::vector<std::string> errors;
    std::size_t eval_size = 0;
    std::size_t fallbacks = 0;
  };
  std::vector<UnitResult> unit_results(units.size());
  auto cell_name = [&](const detail::Unit& u, const std::string& attack) {
    const auto& spec = config.ensembles[u.spec];
    return "kind=" + to_string(spec.kind) + ",n=" + std::to_string(u.n) + ",fusion=" +
           to_string(u.fusion) + ",defense=" + config.defenses[u.defense].label +
           ",epoch=" + std::to_string(u.epoch) + ",attack=" + attack;
  };
  auto unit_stem = [&](const detail::Unit& u) {
    const auto& spec = config.ensembles[u.spec];
    return to_string(spec.kind) + "_n" + std::to_string(u.n) + "_" + to_string(u.fusion) + "_" +
           config.defenses[u.defense].label + "_e" + std::to_string(u.epoch);
  };

  parallel_for(units.size(), options.threads, [&](std::size_t ui) {
    const auto& u = units[ui];
    const auto& spec = config.ensembles[u.spec];
    const auto& def = config.defenses[u.defense];
    auto& res = unit_results[ui];
    res.rows.assign(config.attacks.size(), std::nullopt);
    res.errors.assign(config.attacks.size(), {});
    try {
      auto materialize = [&](const EnsembleModel& trained) {
        EnsembleModel e = spec.kind == EnsembleKind::partitioning ? trained : trained.prefix(u.n);
        if (spec.kind != EnsembleKind::snapshot) e = e.at_epoch(u.epoch);
        return e;
      };
      EnsembleModel e = materialize(victims.at(detail::victim_key(spec, def, u.n)).get());
      if (spec.kind == EnsembleKind::weighted)
        e = make_weighted(e, learn_fusion_weights(e, data, e.member_index_union, spec.weight_steps,
                                                  spec.weight_lr));
      const EnsembleModel baseline =
          materialize(victims.at(detail::victim_key(spec, none, u.n)).get());
      std::optional<MaskConfig> mask;
      if (def.type == DefenseType::memguard)
        mask = MaskConfig{def.mask.noise_magnitude, derive_seed(config.seed, "memguard/" + def.label)};
      const EnsembleTarget target(e, u.fusion, mask);
      const MembershipGroundTruth truth(e.member_index_union);

      const IndexList eval = detail::balanced_eval_set(
          detail::set_difference(e.member_index_union, split.attacker_known),
          detail::set_difference(split.test, split.attacker_known), config.eval_cap, eval_seed);
      res.eval_size = eval.size();
      FusionStats stats;
      auto records = predict_all(e, u.fusion, data, eval, truth, &stats);
      res.fallbacks = stats.fallbacks;
      if (mask) {
        const Eigen::MatrixXd published = target.query(data.rows(eval));
        for (std::size_t i = 0; i < records.size(); ++i) {
          records[i].fused = published.row(static_cast<Eigen::Index>(i)).transpose();
          records[i].fused_label = static_cast<int>(argmax(records[i].fused));
        }
      }
      const auto baseline_records =
          predict_all(baseline, FusionRule::average, data, eval, truth);

      ReportRow base;
      base.dataset = config.dataset.name;
      base.ensemble_kind = to_string(spec.kind);
      base.n_models = u.n;
      base.fusion = to_string(u.fusion);
      base.defense = def.label;
      base.epochs = spec.kind == EnsembleKind::snapshot ? static_cast<int>(u.n) * spec.cycle_len
                                                        : u.epoch;
      base.train_acc = detail::published_accuracy(target, data, e.member_index_union);
      base.test_acc = detail::published_accuracy(target, data, split.test);
      base.distortion = confidence_distortion(baseline_records, records);
      std::vector<double> member_conf, nonmember_conf;
      for (const auto& r : records)
        (r.is_member ? member_conf : nonmember_conf).push_back(r.fused_max_conf());
      base.js_div = js_divergence(member_conf, nonmember_conf, config.js_bins);
      base.split_mode = to_string(split.mode);
      base.seed = config.seed;

      {
        std::ostringstream ss;
        write_predictions_csv(records, ss);
        write_text(out_dir / "predictions" / (unit_stem(u) + ".csv"), ss.str());
      }

      const int shadow_epoch = spec.kind == EnsembleKind::snapshot ? final_epoch : u.epoch;
      // With the attacker-knows split the attack model learns from the
      // target's own outputs on the known rows.
      std::map<std::string, MLPModel> known_attack_models;
      auto attack_model_for = [&](const AttackSpec& a) -> MLPModel {
        if (split.mode == SplitMode::disjoint)
          return attack_models[job_index.at(attack_model_key(def, a, u.epoch))].get();
        const std::string sig = detail::attack_model_signature(a);
        if (!known_attack_models.count(sig)) {
          const IndexList& k = split.attacker_known;
          AttackDataset ds;
          ds.features = attack_features(target.query(data.rows(k)), data.labels_of(k));
          for (auto i : k) ds.labels.push_back(truth.is_member(i) ? 1 : 0);
          known_attack_models.emplace(
              sig, train_attack_model(ds, a.attack_arch,
                                      a.attack_train_config(derive_seed(
                                          config.seed, "attack_model/" + unit_stem(u) + "/" + sig))));
        }
        return known_attack_models.at(sig);
      };

      std::vector<AttackScoreSet> score_sets;
      for (std::size_t ai = 0; ai < config.attacks.size(); ++ai) {
        const auto& a = config.attacks[ai];
        try {
          AttackScoreSet set;
          switch (a.type) {
            case AttackType::gap: set = gap_attack(records, target.describe()); break;
            case AttackType::shokri:
              set = shokri_attack(attack_model_for(a), target, data, eval, truth);
              break;
            case AttackType::watson: {
              const ShadowSet s = shadows.at(shadow_key(def, a)).get().at_epoch(shadow_epoch);
              std::vector<ModelTarget> cal_targets;
              for (const auto& m : s.models) cal_targets.emplace_back(m);
              std::vector<const Target*> cal;
              for (const auto& t : cal_targets) cal.push_back(&t);
              set = watson_attack(attack_model_for(a), target, cal, data, eval, truth);
              break;
            }
            case AttackType::sampling:
              set = sampling_attack(target, data, eval, truth, a.k_perturb, a.sigmas,
                                    sampling_seed)
                        .best;
              break;
          }
          ReportRow row = base;
          row.attack = to_string(a.type);
          row.auc = roc_auc(set);
          row.tpr_fpr_0_001 = tpr_at_fpr(set, 0.001);
          row.tpr_fpr_0_1 = tpr_at_fpr(set, 0.1);
          res.rows[ai] = row;
          score_sets.push_back(std::move(set));
        } catch (const std::exception& ex) {
          res.errors[ai] = ex.what();
        }
      }
      std::ostringstream ss;
      write_scores_csv(score_sets, ss);
      write_text(out_dir / "scores" / (unit_stem(u) + ".csv"), ss.str());
    } catch (const std::exception& ex) {
      for (std::size_t ai = 0; ai < config.attacks.size(); ++ai) {
        res.rows[ai].reset();
        res.errors[ai] = ex.what();
      }
    }
  });
  times["cells"] = detail::seconds_since(t0);

  nlohmann::ordered_json unit_info = nlohmann::ordered_json::array();
  for (std::size_t ui = 0; ui < units.size(); ++ui) {
    const auto& res = unit_results[ui];
    unit_info.push_back({{"cell", unit_stem(units[ui])},
                         {"eval_size", res.eval_size},
                         {"fusion_fallbacks", res.fallbacks}});
    for (std::size_t ai = 0; ai < config.attacks.size(); ++ai) {
      if (res.rows[ai]) result.rows.push_back(*res.rows[ai]);
      else result.failed.push_back({cell_name(units[ui], to_string(config.attacks[ai].type)),
                                    res.errors[ai]});
    }
  }
  for (const auto& f : result.failed) log("cell failed: " + f.cell + ": " + f.error);
  {
    std::ostringstream ss;
    write_report_csv(result.rows, ss);
    write_text(out_dir / "report.csv", ss.str());
  }
  log("report: " + std::to_string(result.rows.size()) + " row(s), " +
      std::to_string(result.failed.size()) + " failed cell(s)");

  t0 = detail::Clock::now();
  if (config.figures)
    render_figures(out_dir / "report.csv", out_dir / "predictions", out_dir / "figures");
  times["figures"] = detail::seconds_since(t0);
  times["total"] = detail::seconds_since(t_start);

  nlohmann::ordered_json dp_info = nlohmann::ordered_json::array();
  for (const auto& d : config.defenses)
    if (d.type == DefenseType::dp)
      dp_info.push_back({{"defense", d.label},
                         {"clip_norm", std::isinf(d.dp.clip_norm) ? nlohmann::ordered_json("inf")
                                                                  : nlohmann::ordered_json(d.dp.clip_norm)},
                         {"noise_multiplier", d.dp.noise_multiplier},
                         {"delta", d.dp.delta},
                         {"epochs", config.train.epochs},
                         {"batch_size", config.train.batch_size},
                         {"epsilon", "not computed"}});
  nlohmann::ordered_json failed = nlohmann::ordered_json::array();
  for (const auto& f : result.failed) failed.push_back({{"cell", f.cell}, {"error", f.error}});

  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
      paths.push_back(fs::relative(entry.path(), out_dir));
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths)
    files.push_back({{"path", p.generic_string()}, {"sha256", sha256_hex(read_text(out_dir / p))}});

  result.manifest = {
      {"tool", "mia_lab"},
      {"version", kVersion},
      {"config", to_json(config)},
      {"split", {{"mode", to_string(split.mode)},
                 {"victim_train", split.victim_train.size()},
                 {"shadow_pool", split.shadow_pool.size()},
                 {"test", split.test.size()},
                 {"attacker_known", split.attacker_known.size()}}},
      {"seeds", seeds},
      {"models_loaded", options.load_models},
      {"conventions",
       {{"distortion", "L1 distance to the undefended average, divided by 2, mean over the "
                       "balanced evaluation set"},
        {"tpr_at_fpr", "threshold chosen so that nonmember FPR <= target"},
        {"js_divergence", "base 2, smoothing 1e-12"},
        {"watson_calibration", "linear subtraction of the mean shadow score"},
        {"sampling_sigma", "relative to each feature's range; best AUC over the grid"},
        {"eval_set", "balanced members/nonmembers, attacker-known rows excluded"}}},
      {"dp", dp_info},
      {"cells", {{"planned", result.planned_cells},
                 {"completed", result.rows.size()},
                 {"failed", failed},
                 {"units", unit_info}}},
      {"wall_times_s", times},
      {"files", files}};
  write_text(out_dir / "manifest.json", result.manifest.dump(2) + "\n");
  return result;
}

}  // namespace mia

#endif  // MIA_EXPERIMENT_HPP_
