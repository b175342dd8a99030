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

#include <filesystem>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "mia/attacks.hpp"
#include "mia/io.hpp"

namespace mia {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("mia_io_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

MLPModel odd_model() {
  auto m = MLPModel::glorot({3, 4, 2}, Activation::tanh, 99);
  m.weights[0](0, 0) = 0.1 + 0.2;  // not exactly representable in short decimal
  m.weights[0](1, 2) = -1e-310;    // subnormal
  m.biases[1](0) = 123456789.123456789;
  m.biases[0](2) = std::numeric_limits<double>::min();
  return m;
}

TEST(ModelJson, RoundTripIsBitExact) {
  auto m = odd_model();
  auto back = model_from_json(json::parse(serialize(m)));
  EXPECT_EQ(back.layer_sizes, m.layer_sizes);
  EXPECT_EQ(back.activation, m.activation);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    EXPECT_TRUE(back.weights[l] == m.weights[l]);
    EXPECT_TRUE(back.biases[l] == m.biases[l]);
  }
  EXPECT_EQ(serialize(back), serialize(m));
}

TEST(ModelJson, WeightsAreRowMajor) {
  auto m = MLPModel::zeros({2, 2});
  m.weights[0] << 1, 2, 3, 4;
  auto j = to_json(m);
  EXPECT_EQ(j["weights"][0], json({1.0, 2.0, 3.0, 4.0}));
  EXPECT_EQ(j.begin().key(), "layer_sizes");
}

TEST(ModelJson, MalformedInputIsParseOrShapeError) {
  EXPECT_THROW(model_from_json(json::parse(R"({"layer_sizes":[2,2]})")), ParseError);
  auto j = to_json(MLPModel::zeros({2, 2}));
  j["weights"][0].push_back(1.0);
  EXPECT_THROW(model_from_json(j), ShapeError);
}

TEST(EnsembleFiles, RoundTripKeepsEverything) {
  TempDir dir;
  EnsembleModel e;
  e.kind = EnsembleKind::weighted;
  e.models = {odd_model(), MLPModel::glorot({3, 4, 2}, Activation::tanh, 5)};
  e.seeds = {11, 12};
  e.train_sets = {{0, 1, 2}, {2, 3}};
  e.member_index_union = {0, 1, 2, 3};
  e.checkpoints = {{{5, MLPModel::zeros({3, 4, 2}, Activation::tanh)}}, {}};
  e.weights = std::vector<double>{0.3, 0.7};
  const auto manifest = dir.path() / "sub" / "ensemble.json";
  save_ensemble(e, manifest);
  auto back = load_ensemble(manifest);
  EXPECT_EQ(back.kind, e.kind);
  EXPECT_EQ(back.seeds, e.seeds);
  EXPECT_EQ(back.train_sets, e.train_sets);
  EXPECT_EQ(back.member_index_union, e.member_index_union);
  EXPECT_EQ(*back.weights, *e.weights);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(serialize(back.models[i]), serialize(e.models[i]));
  ASSERT_EQ(back.checkpoints.size(), 2u);
  EXPECT_EQ(serialize(back.checkpoints[0].at(5)), serialize(e.checkpoints[0].at(5)));
  EXPECT_TRUE(back.checkpoints[1].empty());
  EXPECT_TRUE(fs::exists(dir.path() / "sub" / "model_0_epoch_5.json"));
}

TEST(EnsembleFiles, CorruptManifestIsParseError) {
  TempDir dir;
  write_text(dir.path() / "ensemble.json", R"({"kind":"deep","models":[{"file":"missing.json"}]})");
  EXPECT_THROW(load_ensemble(dir.path() / "ensemble.json"), ParseError);
  write_text(dir.path() / "bad.json", "{not json");
  EXPECT_THROW(load_ensemble(dir.path() / "bad.json"), ParseError);
}

TEST(SplitJson, RoundTrip) {
  auto p = make_attacker_knows_split(IndexList{0, 1, 2, 3, 4}, IndexList{5, 6, 7}, 0.8, 3);
  auto back = split_from_json(json::parse(to_json(p).dump()));
  EXPECT_EQ(back.victim_train, p.victim_train);
  EXPECT_EQ(back.shadow_pool, p.shadow_pool);
  EXPECT_EQ(back.test, p.test);
  EXPECT_EQ(back.attacker_known, p.attacker_known);
  EXPECT_EQ(back.seed, p.seed);
  EXPECT_EQ(back.mode, p.mode);
}

TEST(ScoresCsv, RoundTrip) {
  AttackScoreSet gap, sampling;
  gap.attack_name = "gap";
  gap.entries = {{4, 1.0, true}, {9, 0.0, false}};
  sampling.attack_name = "sampling";
  sampling.sigma = 0.046415888336127795;
  sampling.entries = {{4, 17.0, true}, {9, 0.1 + 0.2, false}};
  std::vector<AttackScoreSet> sets{gap, sampling};
  std::stringstream buf;
  write_scores_csv(sets, buf);
  auto back = read_scores_csv(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].attack_name, "gap");
  EXPECT_FALSE(back[0].sigma);
  EXPECT_EQ(*back[1].sigma, *sampling.sigma);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(back[s].entries[i].sample_id, sets[s].entries[i].sample_id);
      EXPECT_EQ(back[s].entries[i].score, sets[s].entries[i].score);
      EXPECT_EQ(back[s].entries[i].is_member, sets[s].entries[i].is_member);
    }
  std::istringstream wrong("id,score\n1,2\n");
  EXPECT_THROW(read_scores_csv(wrong), SchemaError);
}

TEST(PredictionsCsv, HeaderAndRow) {
  PredictionRecord r;
  r.sample_id = 7;
  r.is_member = true;
  r.true_label = 1;
  r.fused_label = 1;
  r.fused = Eigen::Vector2d(0.25, 0.75);
  r.agreement_c = 3;
  std::ostringstream out;
  write_predictions_csv(std::vector<PredictionRecord>{r}, out);
  EXPECT_EQ(out.str(),
            "sample_id,is_member,true_label,fused_label,fused_max_conf,agreement_c\n"
            "7,1,1,1,0.75,3\n");
}

TEST(CsvTable, ReadsAndReportsMissingColumns) {
  std::istringstream in("a,b\n1,x\n2.5,y\n");
  auto t = read_csv_table(in);
  EXPECT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.number(1, t.column("a")), 2.5);
  EXPECT_THROW(t.number(0, t.column("b")), ParseError);
  try {
    t.column("auc");
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("auc"), std::string::npos);
  }
  std::istringstream empty("");
  EXPECT_TRUE(read_csv_table(empty).header.empty());
  std::istringstream ragged("a,b\n1\n");
  EXPECT_THROW(read_csv_table(ragged), ParseError);
}

}  // namespace
}  // namespace mia
