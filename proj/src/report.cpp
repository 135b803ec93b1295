#include "carmic/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/core.h>

#include "carmic/csv.hpp"

namespace carmic::report {

using stats::GroupKey;

std::vector<BoxCell> boxplot_cells(const metrics::Dataset& rows, const PlotSpec& spec) {
  const auto by_x = stats::group_values(rows, spec.metric, spec.x, spec.filters);
  std::vector<BoxCell> cells;
  if (!spec.hue) {
    for (std::size_t i = 0; i < by_x.labels.size(); ++i) {
      cells.push_back({by_x.labels[i], "", by_x.values[i].size(), stats::box_summary(by_x.values[i])});
    }
    return cells;
  }
  const auto hue_order = stats::group_values(rows, spec.metric, *spec.hue, spec.filters).labels;
  for (const auto& x : by_x.labels) {
    std::vector<stats::Filter> f = spec.filters;
    f.push_back({spec.x, x});
    const auto by_hue = stats::group_values(rows, spec.metric, *spec.hue, f);
    for (const auto& h : hue_order) {
      const auto it = std::find(by_hue.labels.begin(), by_hue.labels.end(), h);
      if (it == by_hue.labels.end()) continue;
      const auto& values = by_hue.values[static_cast<std::size_t>(it - by_hue.labels.begin())];
      cells.push_back({x, h, values.size(), stats::box_summary(values)});
    }
  }
  return cells;
}

namespace {

constexpr const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52",
                                    "#8172b3", "#937860", "#da8bc3", "#8c8c8c"};

std::string esc(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) { return fmt::format("{:.2f}", v); }

}  // namespace

std::string render_boxplot_svg(const std::vector<BoxCell>& cells, const PlotSpec& spec) {
  if (cells.empty()) throw Error("nothing to plot");

  std::vector<std::string> x_order;
  std::vector<std::string> hue_order;
  for (const auto& c : cells) {
    if (std::find(x_order.begin(), x_order.end(), c.x) == x_order.end()) x_order.push_back(c.x);
    if (std::find(hue_order.begin(), hue_order.end(), c.hue) == hue_order.end()) hue_order.push_back(c.hue);
  }

  double lo = cells.front().box.whisker_lo;
  double hi = cells.front().box.whisker_hi;
  for (const auto& c : cells) {
    lo = std::min(lo, c.box.whisker_lo);
    hi = std::max(hi, c.box.whisker_hi);
    for (double o : c.box.outliers) {
      lo = std::min(lo, o);
      hi = std::max(hi, o);
    }
  }
  if (hi - lo < 1e-12) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double left = 70.0, right = 150.0, top = 40.0, bottom = 60.0, plot_h = 320.0;
  const double slot = 28.0;
  const double group_gap = 18.0;
  const double group_w = slot * static_cast<double>(hue_order.size()) + group_gap;
  const double plot_w = std::max(200.0, group_w * static_cast<double>(x_order.size()));
  const double width = left + plot_w + right;
  const double height = top + plot_h + bottom;
  const auto y_of = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

  std::string s;
  s += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n",
      num(width), num(height), num(width), num(height));
  s += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n", num(width),
                   num(height));
  const std::string title = spec.title.empty()
                                ? fmt::format("{} by {}{}", spec.metric, stats::to_string(spec.x),
                                              spec.hue ? fmt::format(" (hue {})", stats::to_string(*spec.hue)) : "")
                                : spec.title;
  s += fmt::format("<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
                   num(left + plot_w / 2), esc(title));
  if (!spec.filters.empty()) {
    s += fmt::format("<text x=\"{}\" y=\"34\" text-anchor=\"middle\">{}</text>\n", num(left + plot_w / 2),
                     esc(stats::format_filters(spec.filters)));
  }

  // Axes and ticks.
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#000000\"/>\n", num(left),
                   num(top), num(top + plot_h));
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#000000\"/>\n", num(left),
                   num(top + plot_h), num(left + plot_w));
  constexpr int kTicks = 6;
  for (int t = 0; t <= kTicks; ++t) {
    const double v = lo + (hi - lo) * t / kTicks;
    const double y = y_of(v);
    s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n", num(left),
                     num(y), num(left + plot_w), num(y));
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3g}</text>\n", num(left - 6),
                     num(y + 4), v);
  }
  s += fmt::format(
      "<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
      num(top + plot_h / 2), esc(spec.metric));
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", num(left + plot_w / 2),
                   num(height - 12), esc(stats::to_string(spec.x)));

  for (std::size_t xi = 0; xi < x_order.size(); ++xi) {
    const double gx = left + group_w * static_cast<double>(xi) + group_gap / 2;
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                     num(gx + slot * static_cast<double>(hue_order.size()) / 2), num(top + plot_h + 16),
                     esc(x_order[xi]));
  }

  for (const auto& c : cells) {
    const auto xi = static_cast<std::size_t>(std::find(x_order.begin(), x_order.end(), c.x) - x_order.begin());
    const auto hi_idx =
        static_cast<std::size_t>(std::find(hue_order.begin(), hue_order.end(), c.hue) - hue_order.begin());
    const double x0 = left + group_w * static_cast<double>(xi) + group_gap / 2 + slot * static_cast<double>(hi_idx) + 4;
    const double w = slot - 8;
    const double cx = x0 + w / 2;
    const char* color = kPalette[hi_idx % std::size(kPalette)];
    const auto& b = c.box;
    s += "<g>\n";
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#333333\"/>\n", num(cx),
                     num(y_of(b.whisker_hi)), num(y_of(b.q3)));
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#333333\"/>\n", num(cx),
                     num(y_of(b.q1)), num(y_of(b.whisker_lo)));
    s += fmt::format("<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"#333333\"/>\n", num(x0 + w / 4),
                     num(x0 + 3 * w / 4), num(y_of(b.whisker_hi)));
    s += fmt::format("<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"#333333\"/>\n", num(x0 + w / 4),
                     num(x0 + 3 * w / 4), num(y_of(b.whisker_lo)));
    s += fmt::format(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"#333333\"/>\n", num(x0),
        num(y_of(b.q3)), num(w), num(y_of(b.q1) - y_of(b.q3)), color);
    s += fmt::format("<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"#000000\" stroke-width=\"2\"/>\n",
                     num(x0), num(x0 + w), num(y_of(b.median)));
    for (double o : b.outliers) {
      s += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"none\" stroke=\"#333333\"/>\n", num(cx),
                       num(y_of(o)));
    }
    s += "</g>\n";
  }

  if (spec.hue) {
    const double lx = left + plot_w + 20;
    s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", num(lx), num(top + 10),
                     esc(stats::to_string(*spec.hue)));
    for (std::size_t h = 0; h < hue_order.size(); ++h) {
      const double ly = top + 24 + 18 * static_cast<double>(h);
      s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\" stroke=\"#333333\"/>\n",
                       num(lx), num(ly), kPalette[h % std::size(kPalette)]);
      s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", num(lx + 18), num(ly + 10), esc(hue_order[h]));
    }
  }
  s += "</svg>\n";
  return s;
}

void emit_boxplot_svg(const metrics::Dataset& rows, const PlotSpec& spec) {
  const auto cells = boxplot_cells(rows, spec);
  if (cells.empty()) {
    throw Error(fmt::format("no finite '{}' values match the plot selection", spec.metric));
  }
  if (spec.output.has_parent_path()) std::filesystem::create_directories(spec.output.parent_path());
  csv::write_text(spec.output, render_boxplot_svg(cells, spec));
}

std::vector<WerRow> join_wer(std::span<const metrics::ConditionWer> wer,
                             const std::map<std::string, metrics::ConditionKey>& conditions) {
  std::vector<WerRow> out;
  for (const auto& w : wer) {
    const auto it = conditions.find(w.condition_id);
    if (it == conditions.end()) {
      throw Error(fmt::format("WER for condition '{}' not present in the dataset", w.condition_id));
    }
    out.push_back({it->second, w.counts});
  }
  return out;
}

namespace {

struct Analysis {
  GroupKey grouping;
  std::vector<stats::Filter> filters;
};

std::vector<Analysis> standard_analyses() {
  return {
      {GroupKey::Noise, {}},
      {GroupKey::Car, {}},
      {GroupKey::HpFc, {}},
      {GroupKey::LpFc, {}},
      {GroupKey::PeakFc, {}},
      {GroupKey::PeakQ, {}},
      {GroupKey::HpFc, {{GroupKey::PeakFc, "-1"}}},
      {GroupKey::LpFc, {{GroupKey::PeakFc, "-1"}}},
      {GroupKey::LpFc, {{GroupKey::HpFc, "20"}}},
      {GroupKey::LpFc, {{GroupKey::HpFc, "100"}}},
      {GroupKey::LpFc, {{GroupKey::HpFc, "350"}}},
  };
}

std::vector<std::string> metric_order(const metrics::Dataset& rows) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : rows) {
    if (seen.insert(r.metric).second) out.push_back(r.metric);
  }
  return out;
}

std::optional<stats::AnovaResult> try_anova(const stats::Grouped& g) {
  if (g.values.size() < 2) return std::nullopt;
  for (const auto& v : g.values) {
    if (v.size() < 2) return std::nullopt;
  }
  return stats::anova_oneway(g.values, g.labels);
}

std::vector<std::pair<metrics::ConditionKey, double>> wer_values(std::span<const WerRow> rows) {
  std::vector<std::pair<metrics::ConditionKey, double>> out;
  for (const auto& r : rows) out.emplace_back(r.condition, r.counts.rate());
  return out;
}

}  // namespace

std::vector<AnovaLine> standard_anova(const metrics::Dataset& rows, std::span<const WerRow> wer_rows) {
  std::vector<AnovaLine> out;
  for (const auto& metric : metric_order(rows)) {
    for (const auto& a : standard_analyses()) {
      if (auto r = try_anova(stats::group_values(rows, metric, a.grouping, a.filters))) {
        out.push_back({metric, a.grouping, a.filters, std::move(*r)});
      }
    }
  }
  if (!wer_rows.empty()) {
    const auto values = wer_values(wer_rows);
    for (const auto& a : standard_analyses()) {
      if (auto r = try_anova(stats::group_condition_values(values, a.grouping, a.filters))) {
        out.push_back({"wer", a.grouping, a.filters, std::move(*r)});
      }
    }
  }
  return out;
}

std::string anova_csv_header() { return "metric,grouping,filter,p,F,df1,df2"; }

std::string anova_csv_line(const AnovaLine& l) {
  return csv::format_row({l.metric, std::string(stats::to_string(l.grouping)), stats::format_filters(l.filters),
                          metrics::format_value(l.result.p_value), metrics::format_value(l.result.f_stat),
                          std::to_string(l.result.df_between), std::to_string(l.result.df_within)});
}

namespace {

struct IndexEntry {
  std::string file;
  std::string description;
};

std::string box_rows(const std::string& metric, GroupKey key, const stats::Grouped& g) {
  std::string out;
  for (std::size_t i = 0; i < g.labels.size(); ++i) {
    const auto b = stats::box_summary(g.values[i]);
    out += csv::format_row({metric, std::string(stats::to_string(key)), g.labels[i],
                            std::to_string(g.values[i].size()), metrics::format_value(b.median),
                            metrics::format_value(b.q1), metrics::format_value(b.q3),
                            metrics::format_value(b.whisker_lo), metrics::format_value(b.whisker_hi),
                            std::to_string(b.outliers.size())});
    out += '\n';
  }
  return out;
}

std::string slug(std::string_view s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '_';
  return out;
}

}  // namespace

std::vector<std::string> emit_report(const metrics::Dataset& rows, const ReportInputs& inputs,
                                     const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (rows.empty()) throw Error("dataset is empty");
  fs::create_directories(out_dir);
  for (const char* name : {"anova_report.csv", "box_summaries.csv", "wer_by_condition.csv", "index.txt"}) {
    fs::remove(out_dir / name);
  }
  fs::remove_all(out_dir / "figures");

  std::vector<IndexEntry> entries;
  std::vector<std::string> notes;
  const std::vector<WerRow> wer_rows = inputs.wer.value_or(std::vector<WerRow>{});

  // ANOVA table.
  const auto lines = standard_anova(rows, wer_rows);
  if (lines.empty()) {
    notes.push_back("anova_report.csv: omitted (no grouping had at least two groups of two values)");
  } else {
    std::string text = anova_csv_header() + "\n";
    for (const auto& l : lines) text += anova_csv_line(l) + "\n";
    csv::write_text(out_dir / "anova_report.csv", text);
    entries.push_back({"anova_report.csv",
                       "one-way ANOVA per metric and grouping (metric,grouping,filter,p,F,df1,df2)"});
  }

  // Box summaries.
  {
    std::string text = "metric,grouping,group,n,median,q1,q3,whisker_lo,whisker_hi,outliers\n";
    bool any = false;
    for (const auto& metric : metric_order(rows)) {
      for (GroupKey key : {GroupKey::Noise, GroupKey::Car, GroupKey::HpFc, GroupKey::LpFc, GroupKey::PeakFc,
                           GroupKey::PeakQ}) {
        const auto g = stats::group_values(rows, metric, key);
        if (!g.labels.empty()) any = true;
        text += box_rows(metric, key, g);
      }
    }
    if (any) {
      csv::write_text(out_dir / "box_summaries.csv", text);
      entries.push_back({"box_summaries.csv", "Tukey box statistics per metric and grouping"});
    } else {
      notes.push_back("box_summaries.csv: omitted (no finite metric values)");
    }
  }

  // WER table.
  if (!inputs.wer) {
    notes.push_back("wer_by_condition.csv: omitted (no ASR hypotheses ingested)");
  } else if (wer_rows.empty()) {
    notes.push_back("wer_by_condition.csv: omitted (hypotheses cover no condition)");
  } else {
    std::vector<csv::Row> table{{"condition_id", "car", "noise", "hp_fc", "lp_fc", "peak_fc", "peak_q",
                                 "substitutions", "deletions", "insertions", "reference_words", "wer"}};
    for (const auto& w : wer_rows) {
      const auto& c = w.condition;
      table.push_back({c.condition_id, c.car, c.noise, metrics::format_value(c.hp_fc),
                       metrics::format_value(c.lp_fc), metrics::format_value(c.peak_fc),
                       metrics::format_value(c.peak_q), std::to_string(w.counts.substitutions),
                       std::to_string(w.counts.deletions), std::to_string(w.counts.insertions),
                       std::to_string(w.counts.reference_words), metrics::format_value(w.counts.rate())});
    }
    csv::write_file(out_dir / "wer_by_condition.csv", table);
    entries.push_back({"wer_by_condition.csv", "pooled WER over the sentences of each condition"});
  }

  // Figures.
  struct Figure {
    GroupKey x;
    std::optional<GroupKey> hue;
    std::vector<stats::Filter> filters;
    const char* what;
  };
  const std::vector<Figure> figures = {
      {GroupKey::Car, GroupKey::Noise, {}, "by car, hue noise"},
      {GroupKey::Noise, GroupKey::Car, {}, "by noise, hue car"},
      {GroupKey::HpFc, GroupKey::LpFc, {{GroupKey::PeakFc, "-1"}}, "flat profiles by hp_fc, hue lp_fc"},
      {GroupKey::LpFc, GroupKey::HpFc, {{GroupKey::PeakFc, "-1"}}, "flat profiles by lp_fc, hue hp_fc"},
      {GroupKey::PeakFc, GroupKey::PeakQ, {}, "by peak_fc, hue peak_q"},
  };
  for (const auto& metric : metric_order(rows)) {
    for (const auto& f : figures) {
      PlotSpec spec{metric, f.x, f.hue, f.filters, {}, {}};
      const auto cells = boxplot_cells(rows, spec);
      std::string name = fmt::format("figures/{}_by_{}", slug(metric), stats::to_string(f.x));
      if (f.hue) name += fmt::format("_hue_{}", stats::to_string(*f.hue));
      if (!f.filters.empty()) name += "_flat";
      name += ".svg";
      if (cells.empty()) {
        notes.push_back(fmt::format("{}: omitted (no matching values)", name));
        continue;
      }
      fs::create_directories(out_dir / "figures");
      csv::write_text(out_dir / name, render_boxplot_svg(cells, spec));
      entries.push_back({name, fmt::format("boxplot of {} {}", metric, f.what)});
    }
  }

  std::string index = fmt::format("manifest_hash: {}\nrows: {}\nconditions: {}\n\nfiles:\n", inputs.manifest_hash,
                                  rows.size(), metrics::dataset_conditions(rows).size());
  for (const auto& e : entries) index += fmt::format("  {}\t{}\n", e.file, e.description);
  if (!notes.empty()) {
    index += "\nnotes:\n";
    for (const auto& n : notes) index += fmt::format("  {}\n", n);
  }
  csv::write_text(out_dir / "index.txt", index);

  std::vector<std::string> files;
  for (const auto& e : entries) files.push_back(e.file);
  return files;
}

}  // namespace carmic::report
