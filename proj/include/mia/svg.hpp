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

// SVG 1.1 figures rendered from the report and prediction CSVs alone.

#ifndef MIA_SVG_HPP_
#define MIA_SVG_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mia/core.hpp"
#include "mia/io.hpp"

namespace mia {

namespace svg {

inline std::string num(double v, int precision = 2) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
  if (ec != std::errc()) return "0";
  return std::string(buf, end);
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> p = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                             "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                             "#bcbd22", "#17becf"};
  return p;
}

struct Range {
  double lo = 0, hi = 1;

  static Range of(const std::vector<double>& xs, double fallback_lo = 0, double fallback_hi = 1) {
    if (xs.empty()) return {fallback_lo, fallback_hi};
    auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    const double pad = std::max(0.01, 0.05 * (*mx - *mn));
    return {*mn - pad, *mx + pad};
  }
};

// Plot area with linear axes, tick labels and a title.
class Chart {
 public:
  static constexpr double kWidth = 720, kHeight = 480;
  static constexpr double kLeft = 70, kRight = 200, kTop = 40, kBottom = 60;

  Chart(std::string title, std::string x_label, std::string y_label, Range x, Range y)
      : x_(x), y_(y) {
    out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(kWidth, 0)
         << "\" height=\"" << num(kHeight, 0) << "\" viewBox=\"0 0 " << num(kWidth, 0) << ' '
         << num(kHeight, 0) << "\">\n"
         << "<rect x=\"0\" y=\"0\" width=\"" << num(kWidth, 0) << "\" height=\"" << num(kHeight, 0)
         << "\" fill=\"white\"/>\n"
         << "<text x=\"" << num(kWidth / 2, 0) << "\" y=\"24\" text-anchor=\"middle\" "
         << "font-family=\"sans-serif\" font-size=\"16\">" << escape(title) << "</text>\n";
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    out_ << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n"
         << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1)
         << "\" y2=\"" << num(y0) << "\"/>\n"
         << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x0)
         << "\" y2=\"" << num(y1) << "\"/>\n"
         << "</g>\n";
    out_ << "<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int i = 0; i <= 4; ++i) {
      const double fx = x_.lo + (x_.hi - x_.lo) * i / 4.0;
      const double fy = y_.lo + (y_.hi - y_.lo) * i / 4.0;
      out_ << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(y0 + 16)
           << "\" text-anchor=\"middle\">" << num(fx, 3) << "</text>\n"
           << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(py(fy) + 4)
           << "\" text-anchor=\"end\">" << num(fy, 3) << "</text>\n";
    }
    out_ << "</g>\n"
         << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 18)
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
         << escape(x_label) << "</text>\n"
         << "<text x=\"18\" y=\"" << num((y0 + y1) / 2) << "\" text-anchor=\"middle\" "
         << "font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 "
         << num((y0 + y1) / 2) << ")\">" << escape(y_label) << "</text>\n";
  }

  double px(double x) const {
    return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    return kHeight - kBottom - (y - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom);
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
    out_ << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color
         << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      out_ << (i ? " " : "") << num(px(pts[i].first)) << ',' << num(py(pts[i].second));
    out_ << "\"/>\n";
    for (const auto& [x, y] : pts)
      out_ << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"3\" fill=\""
           << color << "\"/>\n";
  }

  // Bar from y = max(lo, 0) up to `height` in data units.
  void bar(double x_left, double x_right, double height, const std::string& color) {
    const double base = std::max(y_.lo, 0.0);
    const double top = py(height), bottom = py(base);
    out_ << "<rect class=\"bar\" x=\"" << num(px(x_left)) << "\" y=\"" << num(top)
         << "\" width=\"" << num(std::max(0.0, px(x_right) - px(x_left))) << "\" height=\""
         << num(std::max(0.0, bottom - top)) << "\" fill=\"" << color << "\" fill-opacity=\"0.7\"/>\n";
  }

  void legend(const std::vector<std::pair<std::string, std::string>>& entries) {
    out_ << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"11\">\n";
    double y = kTop + 10;
    for (const auto& [label, color] : entries) {
      const double x = kWidth - kRight + 12;
      out_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 9) << "\" width=\"10\" height=\"10\" "
           << "fill=\"" << color << "\"/>\n"
           << "<text x=\"" << num(x + 16) << "\" y=\"" << num(y) << "\">" << escape(label)
           << "</text>\n";
      y += 16;
    }
    out_ << "</g>\n";
  }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  Range x_, y_;
  std::ostringstream out_;
};

}  // namespace svg

// Report columns that identify a trade-off family; rows of one family differ
// only in n_models.
inline const std::vector<std::string>& tradeoff_family_columns() {
  static const std::vector<std::string> c = {"dataset", "ensemble_kind", "fusion", "defense",
                                             "epochs",  "attack",        "split_mode", "seed"};
  return c;
}

// Test accuracy against attack AUC, one polyline per family with vertices in
// order of ensemble size.
inline std::string tradeoff_svg(const CsvTable& report) {
  std::vector<double> xs, ys;
  std::map<std::vector<std::string>, std::vector<std::tuple<double, double, double>>> families;
  std::vector<std::vector<std::string>> order;
  if (!report.header.empty()) {
    std::vector<std::size_t> key_cols;
    for (const auto& name : tradeoff_family_columns()) key_cols.push_back(report.column(name));
    const auto n_col = report.column("n_models"), auc_col = report.column("auc"),
               acc_col = report.column("test_acc");
    for (std::size_t r = 0; r < report.rows.size(); ++r) {
      std::vector<std::string> key;
      for (auto c : key_cols) key.push_back(report.rows[r][c]);
      const double n = report.number(r, n_col), auc = report.number(r, auc_col),
                   acc = report.number(r, acc_col);
      if (!families.count(key)) order.push_back(key);
      families[key].emplace_back(n, auc, acc);
      xs.push_back(auc);
      ys.push_back(acc);
    }
  }
  svg::Chart chart("Accuracy vs membership inference AUC", "attack AUC", "test accuracy",
                   svg::Range::of(xs), svg::Range::of(ys));
  std::vector<std::pair<std::string, std::string>> legend;
  for (std::size_t f = 0; f < order.size(); ++f) {
    auto pts = families[order[f]];
    std::stable_sort(pts.begin(), pts.end(),
                     [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
    std::vector<std::pair<double, double>> line;
    for (const auto& [n, auc, acc] : pts) line.emplace_back(auc, acc);
    const auto& color = svg::palette()[f % svg::palette().size()];
    chart.polyline(line, color);
    const auto& k = order[f];
    legend.emplace_back(k[1] + "/" + k[2] + "/" + k[3] + "/" + k[5] + " e" + k[4], color);
  }
  chart.legend(legend);
  return chart.finish();
}

// Member and nonmember histograms of the published max-confidence, bars
// side by side within each bin.
inline std::string confidence_histogram_svg(const CsvTable& predictions, std::size_t bins = 20) {
  std::vector<double> member_counts(bins, 0), nonmember_counts(bins, 0);
  if (!predictions.header.empty()) {
    const auto conf_col = predictions.column("fused_max_conf"),
               member_col = predictions.column("is_member");
    for (std::size_t r = 0; r < predictions.rows.size(); ++r) {
      const double c = std::clamp(predictions.number(r, conf_col), 0.0, 1.0);
      const auto b = std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)));
      (predictions.number(r, member_col) != 0 ? member_counts : nonmember_counts)[b] += 1;
    }
  }
  const double top = std::max({1.0, *std::max_element(member_counts.begin(), member_counts.end()),
                               *std::max_element(nonmember_counts.begin(),
                                                 nonmember_counts.end())});
  svg::Chart chart("Published max-confidence", "max confidence", "samples", {0, 1},
                   {0, top * 1.05});
  const double w = 1.0 / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double x = w * static_cast<double>(b);
    chart.bar(x, x + w / 2, member_counts[b], svg::palette()[0]);
    chart.bar(x + w / 2, x + w, nonmember_counts[b], svg::palette()[1]);
  }
  chart.legend({{"members", svg::palette()[0]}, {"nonmembers", svg::palette()[1]}});
  return chart.finish();
}

// Counts per level of correct agreement, members next to nonmembers.
inline std::string agreement_bars_svg(const CsvTable& predictions) {
  std::vector<double> member_counts, nonmember_counts;
  if (!predictions.header.empty()) {
    const auto c_col = predictions.column("agreement_c"),
               member_col = predictions.column("is_member");
    for (std::size_t r = 0; r < predictions.rows.size(); ++r) {
      const double c = predictions.number(r, c_col);
      if (c < 0) throw ParseError("negative agreement level", r + 2);
      const auto level = static_cast<std::size_t>(c);
      if (level >= member_counts.size()) {
        member_counts.resize(level + 1, 0);
        nonmember_counts.resize(level + 1, 0);
      }
      (predictions.number(r, member_col) != 0 ? member_counts : nonmember_counts)[level] += 1;
    }
  }
  const std::size_t levels = std::max<std::size_t>(member_counts.size(), 1);
  double top = 1.0;
  for (std::size_t c = 0; c < member_counts.size(); ++c)
    top = std::max({top, member_counts[c], nonmember_counts[c]});
  svg::Chart chart("Correct agreement level", "models agreeing on the true label", "samples",
                   {-0.5, static_cast<double>(levels) - 0.5}, {0, top * 1.05});
  for (std::size_t c = 0; c < member_counts.size(); ++c) {
    const double x = static_cast<double>(c);
    chart.bar(x - 0.4, x, member_counts[c], svg::palette()[0]);
    chart.bar(x, x + 0.4, nonmember_counts[c], svg::palette()[1]);
  }
  chart.legend({{"members", svg::palette()[0]}, {"nonmembers", svg::palette()[1]}});
  return chart.finish();
}

// Renders tradeoff.svg from the report plus a histogram and an agreement
// chart per prediction CSV. Returns the written paths in a stable order.
inline std::vector<std::filesystem::path> render_figures(
    const std::filesystem::path& report_csv, const std::filesystem::path& predictions_dir,
    const std::filesystem::path& figures_dir) {
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::filesystem::path& p, const std::string& text) {
    write_text(p, text);
    written.push_back(p);
  };
  emit(figures_dir / "tradeoff.svg", tradeoff_svg(read_csv_table(report_csv)));
  if (std::filesystem::is_directory(predictions_dir)) {
    std::vector<std::filesystem::path> inputs;
    for (const auto& entry : std::filesystem::directory_iterator(predictions_dir))
      if (entry.path().extension() == ".csv") inputs.push_back(entry.path());
    std::sort(inputs.begin(), inputs.end());
    for (const auto& p : inputs) {
      const auto table = read_csv_table(p);
      const auto stem = p.stem().string();
      emit(figures_dir / (stem + "_confidence.svg"), confidence_histogram_svg(table));
      emit(figures_dir / (stem + "_agreement.svg"), agreement_bars_svg(table));
    }
  }
  return written;
}

}  // namespace mia

#endif  // MIA_SVG_HPP_
