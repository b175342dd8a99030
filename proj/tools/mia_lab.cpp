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

// mia_lab: command-line front end for the experiment harness.
//
//   mia_lab run --config c.json --out-dir out
//   mia_lab plot --out-dir out
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mia/mia.hpp"

namespace {

namespace fs = std::filesystem;

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  unsigned threads = 1;
  bool verbose = false;
};

mia::ExperimentConfig resolve_config(const GlobalFlags& g) {
  if (g.config.empty()) throw mia::ConfigError("this subcommand needs --config PATH");
  auto c = mia::load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.out_dir.empty()) c.output_dir = g.out_dir;
  return c;
}

fs::path output_dir(const GlobalFlags& g) {
  if (!g.out_dir.empty()) return g.out_dir;
  if (!g.config.empty()) return mia::load_config(g.config).output_dir;
  throw mia::ConfigError("pass --out-dir or --config");
}

mia::RunOptions run_options(const GlobalFlags& g) {
  mia::RunOptions o;
  o.threads = g.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : g.threads;
  if (g.verbose) o.log = &std::cerr;
  return o;
}

void report_failures(const mia::RunResult& r) {
  for (const auto& f : r.failed) std::cerr << "failed: " << f.cell << ": " << f.error << "\n";
}

int cmd_gen_data(const GlobalFlags& g) {
  const auto c = resolve_config(g);
  const auto prep = mia::prepare_data(c);
  const fs::path out(c.output_dir);
  fs::create_directories(out);
  mia::write_csv(prep.data, (out / "data.csv").string());
  mia::write_text(out / "split.json", mia::to_json(prep.split).dump() + "\n");
  std::cout << "wrote " << prep.data.size() << " samples to " << (out / "data.csv").string()
            << "\n";
  return 0;
}

int cmd_train(const GlobalFlags& g) {
  const auto c = resolve_config(g);
  auto o = run_options(g);
  o.train_only = true;
  const auto r = mia::run_experiment(c, o);
  report_failures(r);
  std::cout << "models saved under " << (fs::path(c.output_dir) / "models").string() << "\n";
  return r.failed.empty() ? 0 : 2;
}

int cmd_run(const GlobalFlags& g, bool load_models) {
  const auto c = resolve_config(g);
  auto o = run_options(g);
  o.load_models = load_models;
  const auto r = mia::run_experiment(c, o);
  report_failures(r);
  std::cout << r.rows.size() << " of " << r.planned_cells << " cells written to "
            << (fs::path(c.output_dir) / "report.csv").string() << "\n";
  return r.rows.empty() && r.planned_cells > 0 ? 2 : 0;
}

int cmd_report(const GlobalFlags& g, const std::vector<std::string>& columns) {
  const auto table = mia::read_csv_table(output_dir(g) / "report.csv");
  std::vector<std::size_t> cols;
  for (const auto& name : columns) cols.push_back(table.column(name));
  std::vector<std::size_t> width(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    width[i] = table.header[cols[i]].size();
    for (const auto& row : table.rows) width[i] = std::max(width[i], row[cols[i]].size());
  }
  auto print_row = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      std::string cell = cells[cols[i]];
      if (i + 1 < cols.size()) cell.resize(width[i] + 2, ' ');
      line += cell;
    }
    std::cout << line << "\n";
  };
  print_row(table.header);
  for (const auto& row : table.rows) print_row(row);
  return 0;
}

int cmd_plot(const GlobalFlags& g) {
  const fs::path out = output_dir(g);
  const auto written =
      mia::render_figures(out / "report.csv", out / "predictions", out / "figures");
  std::cout << "wrote " << written.size() << " figure(s) to " << (out / "figures").string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership inference experiments against neural-network ensembles", "mia_lab"};
  app.require_subcommand(1);
  GlobalFlags g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed, overrides the config");
  app.add_option("--out-dir", g.out_dir, "Output directory, overrides the config");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->capture_default_str();
  app.add_flag("--verbose", g.verbose, "Progress on stderr");

  auto* gen = app.add_subcommand("gen-data", "Write the dataset and split");
  auto* train = app.add_subcommand("train", "Train and save victim ensembles");
  auto* attack = app.add_subcommand("attack", "Attack previously trained ensembles");
  auto* report = app.add_subcommand("report", "Print report.csv as a table");
  auto* plot = app.add_subcommand("plot", "Render SVG figures from the CSVs");
  auto* run = app.add_subcommand("run", "Train, attack, report and plot");
  std::vector<std::string> columns = {"ensemble_kind", "n_models", "fusion", "defense", "epochs",
                                      "test_acc",      "attack",   "auc"};
  report->add_option("--columns", columns, "Columns to print")->delimiter(',');
  for (auto* sub : {gen, train, attack, report, plot, run}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*gen) return cmd_gen_data(g);
    if (*train) return cmd_train(g);
    if (*attack) return cmd_run(g, true);
    if (*report) return cmd_report(g, columns);
    if (*plot) return cmd_plot(g);
    return cmd_run(g, false);
  } catch (const mia::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
