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

// JSON model/ensemble serialization and the CSV formats for attack scores
// and per-sample predictions.

#ifndef MIA_IO_HPP_
#define MIA_IO_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mia/attacks.hpp"
#include "mia/data.hpp"
#include "mia/ensemble.hpp"
#include "mia/metrics.hpp"
#include "mia/nn.hpp"

namespace mia {

using json = nlohmann::ordered_json;

// Weights are written row-major. nlohmann emits doubles with round-trip
// precision, so a dump/parse cycle reproduces every bit.
inline json to_json(const MLPModel& m) {
  json j;
  j["layer_sizes"] = m.layer_sizes;
  j["activation"] = to_string(m.activation);
  json weights = json::array(), biases = json::array();
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(m.weights[l].size()));
    for (Eigen::Index r = 0; r < m.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < m.weights[l].cols(); ++c) w.push_back(m.weights[l](r, c));
    weights.push_back(std::move(w));
    biases.push_back(std::vector<double>(m.biases[l].data(), m.biases[l].data() + m.biases[l].size()));
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j;
}

inline MLPModel model_from_json(const json& j) {
  try {
    MLPModel m = MLPModel::zeros(j.at("layer_sizes").get<std::vector<std::size_t>>(),
                                 activation_from_string(j.at("activation").get<std::string>()));
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != m.num_layers() || biases.size() != m.num_layers())
      throw ShapeError("model JSON has the wrong number of layers");
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      auto w = weights[l].get<std::vector<double>>();
      auto b = biases[l].get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(m.weights[l].size()) ||
          b.size() != static_cast<std::size_t>(m.biases[l].size()))
        throw ShapeError("model JSON layer " + std::to_string(l) + " has the wrong shape");
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < m.weights[l].rows(); ++r)
        for (Eigen::Index c = 0; c < m.weights[l].cols(); ++c) m.weights[l](r, c) = w[k++];
      for (std::size_t i = 0; i < b.size(); ++i) m.biases[l](static_cast<Eigen::Index>(i)) = b[i];
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model JSON: ") + e.what(), 0);
  }
}

// Canonical serialization: compact JSON text.
inline std::string serialize(const MLPModel& m) { return to_json(m).dump(); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Manifest plus one JSON file per base model (and per checkpoint), next to
// the manifest.
inline void save_ensemble(const EnsembleModel& e, const std::filesystem::path& manifest_path) {
  e.validate();
  json j;
  j["kind"] = to_string(e.kind);
  j["models"] = json::array();
  const auto dir = manifest_path.parent_path();
  for (std::size_t i = 0; i < e.size(); ++i) {
    const std::string stem = "model_" + std::to_string(i);
    write_text(dir / (stem + ".json"), serialize(e.models[i]));
    json entry = {{"file", stem + ".json"}, {"seed", i < e.seeds.size() ? e.seeds[i] : 0}};
    if (i < e.train_sets.size()) entry["train_set"] = e.train_sets[i];
    json ckpts = json::object();
    if (i < e.checkpoints.size()) {
      for (const auto& [epoch, model] : e.checkpoints[i]) {
        const std::string file = stem + "_epoch_" + std::to_string(epoch) + ".json";
        write_text(dir / file, serialize(model));
        ckpts[std::to_string(epoch)] = file;
      }
    }
    entry["checkpoints"] = std::move(ckpts);
    j["models"].push_back(std::move(entry));
  }
  j["weights"] = e.weights ? json(*e.weights) : json(nullptr);
  j["member_index_union"] = e.member_index_union;
  write_text(manifest_path, j.dump(2) + "\n");
}

inline EnsembleModel load_ensemble(const std::filesystem::path& manifest_path) {
  const auto dir = manifest_path.parent_path();
  auto load_model = [&](const json& file) {
    return model_from_json(json::parse(read_text(dir / file.get<std::string>())));
  };
  try {
    const json j = json::parse(read_text(manifest_path));
    EnsembleModel e;
    e.kind = ensemble_kind_from_string(j.at("kind").get<std::string>());
    for (const auto& m : j.at("models")) {
      e.models.push_back(load_model(m.at("file")));
      e.seeds.push_back(m.at("seed").get<std::uint64_t>());
      if (m.contains("train_set")) e.train_sets.push_back(m.at("train_set").get<IndexList>());
      std::map<int, MLPModel> ckpts;
      if (m.contains("checkpoints"))
        for (const auto& [epoch, file] : m.at("checkpoints").items())
          ckpts.emplace(std::stoi(epoch), load_model(file));
      e.checkpoints.push_back(std::move(ckpts));
    }
    if (!e.train_sets.empty() && e.train_sets.size() != e.models.size())
      throw ParseError("ensemble manifest '" + manifest_path.string() +
                           "' lists training sets for only some models",
                       0);
    if (!j.at("weights").is_null()) e.weights = j.at("weights").get<std::vector<double>>();
    e.member_index_union = j.at("member_index_union").get<IndexList>();
    e.validate();
    return e;
  } catch (const json::exception& ex) {
    throw ParseError("malformed ensemble manifest '" + manifest_path.string() + "': " + ex.what(),
                     0);
  }
}

inline json to_json(const SplitPlan& p) {
  return {{"mode", to_string(p.mode)},
          {"seed", p.seed},
          {"victim_train", p.victim_train},
          {"shadow_pool", p.shadow_pool},
          {"test", p.test},
          {"attacker_known", p.attacker_known}};
}

inline SplitPlan split_from_json(const json& j) {
  SplitPlan p;
  p.mode = split_mode_from_string(j.at("mode").get<std::string>());
  p.seed = j.at("seed").get<std::uint64_t>();
  p.victim_train = j.at("victim_train").get<IndexList>();
  p.shadow_pool = j.at("shadow_pool").get<IndexList>();
  p.test = j.at("test").get<IndexList>();
  p.attacker_known = j.at("attacker_known").get<IndexList>();
  p.validate();
  return p;
}

// Columns: sample_id, is_member, score, attack, sigma (empty when unused).
inline void write_scores_csv(std::span<const AttackScoreSet> sets, std::ostream& out) {
  out << "sample_id,is_member,score,attack,sigma\n";
  for (const auto& s : sets)
    for (const auto& e : s.entries)
      out << e.sample_id << ',' << (e.is_member ? 1 : 0) << ',' << format_double(e.score) << ','
          << s.attack_name << ',' << (s.sigma ? format_double(*s.sigma) : "") << '\n';
}

// Groups rows by attack name, in order of first appearance.
inline std::vector<AttackScoreSet> read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "sample_id,is_member,score,attack,sigma")
    throw SchemaError("scores CSV must start with header sample_id,is_member,score,attack,sigma");
  std::vector<AttackScoreSet> sets;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != 5)
      throw ParseError("line " + std::to_string(line_no) + ": expected 5 cells", line_no);
    double id = 0, member = 0, score = 0, sigma = 0;
    if (!detail::parse_double(cells[0], id) || !detail::parse_double(cells[1], member) ||
        !detail::parse_double(cells[2], score) ||
        (!cells[4].empty() && !detail::parse_double(cells[4], sigma)))
      throw ParseError("line " + std::to_string(line_no) + ": malformed number", line_no);
    auto it = std::find_if(sets.begin(), sets.end(),
                           [&](const auto& s) { return s.attack_name == cells[3]; });
    if (it == sets.end()) {
      sets.push_back({});
      sets.back().attack_name = cells[3];
      if (!cells[4].empty()) sets.back().sigma = sigma;
      it = sets.end() - 1;
    }
    it->entries.push_back({static_cast<std::size_t>(id), score, member != 0});
  }
  return sets;
}

// Columns: sample_id, is_member, true_label, fused_label, fused_max_conf,
// agreement_c.
inline void write_predictions_csv(std::span<const PredictionRecord> records, std::ostream& out) {
  out << "sample_id,is_member,true_label,fused_label,fused_max_conf,agreement_c\n";
  for (const auto& r : records)
    out << r.sample_id << ',' << (r.is_member ? 1 : 0) << ',' << r.true_label << ','
        << r.fused_label << ',' << format_double(r.fused_max_conf()) << ',' << r.agreement_c
        << '\n';
}

// Header plus string cells; the figure and report tools read CSVs this way.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Position of `name` in the header; SchemaError naming it when absent.
  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }

  double number(std::size_t row, std::size_t col) const {
    double v = 0;
    if (!detail::parse_double(rows[row][col], v))
      throw ParseError("row " + std::to_string(row + 2) + ": '" + rows[row][col] +
                           "' is not a number",
                       row + 2);
    return v;
  }
};

// An empty stream gives an empty table (no header).
inline CsvTable read_csv_table(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(t.header.size()) + " cells",
                       line_no);
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'", 0);
  return read_csv_table(in);
}

}  // namespace mia

#endif  // MIA_IO_HPP_
