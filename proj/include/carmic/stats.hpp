#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carmic/metrics.hpp"

namespace carmic::stats {

struct GroupSummary {
  std::string label;
  std::size_t count = 0;
  double mean = 0.0;
};

struct AnovaResult {
  double f_stat = 0.0;  // +inf when within-group variance vanishes
  double p_value = 1.0;
  int df_between = 0;
  int df_within = 0;
  double ss_between = 0.0;
  double ss_within = 0.0;
  std::vector<GroupSummary> groups;
};

/// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
double incomplete_beta(double x, double a, double b);

/// CDF of the F distribution with (d1, d2) degrees of freedom.
double f_cdf(double x, double d1, double d2);

/// One-way ANOVA over k >= 2 groups of >= 2 values each.
AnovaResult anova_oneway(std::span<const std::vector<double>> groups,
                         std::span<const std::string> labels = {});

struct BoxSummary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_lo = 0.0;
  double whisker_hi = 0.0;
  std::vector<double> outliers;  // ascending
};

/// Quantile of sorted data by linear interpolation between order statistics
/// (position p * (n - 1)).
double quantile_sorted(std::span<const double> sorted, double p);

/// Tukey box: whiskers at the most extreme points within 1.5 IQR of the
/// quartiles, everything beyond listed as an outlier.
BoxSummary box_summary(std::span<const double> values);

// ---- dataset grouping ------------------------------------------------------

enum class GroupKey { Noise, Car, HpFc, LpFc, PeakFc, PeakQ, Condition };

GroupKey parse_group_key(std::string_view name);
std::string_view to_string(GroupKey key);

/// Group label of a row's condition under `key` ("idle", "350", "-1", ...).
std::string group_label(const metrics::ConditionKey& c, GroupKey key);

/// `key=value` equality constraint, e.g. hp_fc=350.
struct Filter {
  GroupKey key = GroupKey::HpFc;
  std::string value;
};

Filter parse_filter(std::string_view text);
std::string format_filters(std::span<const Filter> filters);
bool matches(const metrics::ConditionKey& c, std::span<const Filter> filters);

struct Grouped {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> values;
};

/// Finite values of `metric` that pass the filters, grouped by `key`. Group
/// order: noise idle/city/highway, numeric keys ascending, others by first
/// appearance. Infinite values are dropped.
Grouped group_values(const metrics::Dataset& rows, std::string_view metric, GroupKey key,
                     std::span<const Filter> filters = {});

/// Same as group_values but for one value per condition.
Grouped group_condition_values(std::span<const std::pair<metrics::ConditionKey, double>> values,
                               GroupKey key, std::span<const Filter> filters = {});

}  // namespace carmic::stats
