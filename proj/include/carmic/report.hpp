#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "carmic/metrics.hpp"
#include "carmic/stats.hpp"

namespace carmic::report {

struct PlotSpec {
  std::string metric;
  stats::GroupKey x = stats::GroupKey::Car;
  std::optional<stats::GroupKey> hue;
  std::vector<stats::Filter> filters;
  std::filesystem::path output;
  std::string title;
};

struct BoxCell {
  std::string x;
  std::string hue;  // empty without a hue grouping
  std::size_t count = 0;
  stats::BoxSummary box;
};

/// One cell per nonempty (x, hue) pair, x-major in group order.
std::vector<BoxCell> boxplot_cells(const metrics::Dataset& rows, const PlotSpec& spec);

/// Self-contained SVG; identical inputs give identical bytes.
std::string render_boxplot_svg(const std::vector<BoxCell>& cells, const PlotSpec& spec);

/// boxplot_cells + render_boxplot_svg, written to spec.output. Throws when
/// the filter leaves nothing to plot.
void emit_boxplot_svg(const metrics::Dataset& rows, const PlotSpec& spec);

/// Per-condition pooled WER joined with the condition columns.
struct WerRow {
  metrics::ConditionKey condition;
  metrics::WerCounts counts;
};

std::vector<WerRow> join_wer(std::span<const metrics::ConditionWer> wer,
                             const std::map<std::string, metrics::ConditionKey>& conditions);

struct AnovaLine {
  std::string metric;
  stats::GroupKey grouping = stats::GroupKey::Noise;
  std::vector<stats::Filter> filters;
  stats::AnovaResult result;
};

/// ANOVA for every metric over the standard groupings plus the filtered
/// bandwidth analyses; combinations that cannot be tested are skipped.
std::vector<AnovaLine> standard_anova(const metrics::Dataset& rows,
                                      std::span<const WerRow> wer_rows);

std::string anova_csv_header();
std::string anova_csv_line(const AnovaLine& line);

struct ReportInputs {
  std::string manifest_hash;
  std::optional<std::vector<WerRow>> wer;  // nullopt: no ASR hypotheses available
};

/// Writes anova_report.csv, box_summaries.csv, wer_by_condition.csv, figures/
/// and index.txt into out_dir, replacing files from an earlier report.
/// Returns the relative paths listed in the index.
std::vector<std::string> emit_report(const metrics::Dataset& rows, const ReportInputs& inputs,
                                     const std::filesystem::path& out_dir);

}  // namespace carmic::report
