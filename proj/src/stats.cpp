#include "carmic/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/core.h>

namespace carmic::stats {

namespace {

constexpr int kMaxIterations = 10000;
constexpr double kEpsilon = 1e-16;
constexpr double kTiny = 1e-300;

// Continued fraction for I_x(a, b), valid for x < (a + 1) / (a + b + 2).
double beta_continued_fraction(double x, double a, double b) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEpsilon) return h;
  }
  throw Error(fmt::format("incomplete beta did not converge (x={}, a={}, b={})", x, a, b));
}

}  // namespace

double incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw Error("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw Error("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(x, a, b) / a;
  return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double f_cdf(double x, double d1, double d2) {
  if (!(d1 >= 1.0 && d2 >= 1.0)) throw Error(fmt::format("invalid F degrees of freedom ({}, {})", d1, d2));
  if (std::isnan(x) || x < 0.0) throw Error("F CDF needs x >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  // I_{d1 x / (d1 x + d2)} = 1 - I_{d2 / (d1 x + d2)}(d2/2, d1/2); the second
  // form keeps precision when x is large.
  const double denom = d1 * x + d2;
  return 1.0 - incomplete_beta(d2 / denom, d2 / 2.0, d1 / 2.0);
}

AnovaResult anova_oneway(std::span<const std::vector<double>> groups,
                         std::span<const std::string> labels) {
  const std::size_t k = groups.size();
  if (k < 2) throw Error(fmt::format("ANOVA needs at least 2 groups, got {}", k));
  std::size_t n = 0;
  double grand = 0.0;
  AnovaResult r;
  for (std::size_t g = 0; g < k; ++g) {
    if (groups[g].size() < 2) {
      throw Error(fmt::format("ANOVA group {} has {} value(s); need at least 2",
                              g < labels.size() ? labels[g] : std::to_string(g), groups[g].size()));
    }
    double sum = 0.0;
    for (double v : groups[g]) sum += v;
    n += groups[g].size();
    grand += sum;
    r.groups.push_back({g < labels.size() ? labels[g] : std::to_string(g), groups[g].size(),
                        sum / static_cast<double>(groups[g].size())});
  }
  if (n <= k) throw Error("ANOVA needs N - k >= 1");
  grand /= static_cast<double>(n);

  for (std::size_t g = 0; g < k; ++g) {
    const double mean = r.groups[g].mean;
    r.ss_between += static_cast<double>(groups[g].size()) * (mean - grand) * (mean - grand);
    for (double v : groups[g]) r.ss_within += (v - mean) * (v - mean);
  }
  r.df_between = static_cast<int>(k - 1);
  r.df_within = static_cast<int>(n - k);

  if (r.ss_within == 0.0) {
    if (r.ss_between == 0.0) {
      r.f_stat = 0.0;
      r.p_value = 1.0;
    } else {
      r.f_stat = std::numeric_limits<double>::infinity();
      r.p_value = 0.0;
    }
    return r;
  }
  r.f_stat = (r.ss_between / r.df_between) / (r.ss_within / r.df_within);
  if (r.f_stat == 0.0) {
    r.p_value = 1.0;
  } else {
    // Upper tail directly: P(F > f) = I_{d2 / (d1 f + d2)}(d2/2, d1/2).
    const double d1 = r.df_between;
    const double d2 = r.df_within;
    r.p_value = incomplete_beta(d2 / (d1 * r.f_stat + d2), d2 / 2.0, d1 / 2.0);
  }
  return r;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error("quantile of empty data");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxSummary box_summary(std::span<const double> values) {
  if (values.empty()) throw Error("box summary of empty data");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  BoxSummary b;
  b.q1 = quantile_sorted(v, 0.25);
  b.median = quantile_sorted(v, 0.5);
  b.q3 = quantile_sorted(v, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_lo = b.q1;
  b.whisker_hi = b.q3;
  for (double x : v) {
    if (x < lo_fence || x > hi_fence) {
      b.outliers.push_back(x);
    } else {
      b.whisker_lo = std::min(b.whisker_lo, x);
      b.whisker_hi = std::max(b.whisker_hi, x);
    }
  }
  return b;
}

// ---- dataset grouping ------------------------------------------------------

namespace {

struct KeyName {
  GroupKey key;
  std::string_view name;
};

constexpr KeyName kKeyNames[] = {
    {GroupKey::Noise, "noise"},   {GroupKey::Car, "car"},       {GroupKey::HpFc, "hp_fc"},
    {GroupKey::LpFc, "lp_fc"},    {GroupKey::PeakFc, "peak_fc"}, {GroupKey::PeakQ, "peak_q"},
    {GroupKey::Condition, "condition_id"},
};

bool is_numeric(GroupKey key) {
  return key == GroupKey::HpFc || key == GroupKey::LpFc || key == GroupKey::PeakFc ||
         key == GroupKey::PeakQ;
}

int noise_rank(const std::string& label) {
  if (label == "idle") return 0;
  if (label == "city") return 1;
  if (label == "highway") return 2;
  return 3;
}

template <typename Getter>
Grouped group_impl(std::size_t count, Getter get, GroupKey key, std::span<const Filter> filters) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> buckets;
  for (std::size_t i = 0; i < count; ++i) {
    const auto [cond, value] = get(i);
    if (cond == nullptr || !std::isfinite(value) || !matches(*cond, filters)) continue;
    const std::string label = group_label(*cond, key);
    auto [it, inserted] = buckets.try_emplace(label);
    if (inserted) order.push_back(label);
    it->second.push_back(value);
  }
  if (is_numeric(key)) {
    std::stable_sort(order.begin(), order.end(), [](const std::string& a, const std::string& b) {
      return metrics::parse_value(a) < metrics::parse_value(b);
    });
  } else if (key == GroupKey::Noise) {
    std::stable_sort(order.begin(), order.end(), [](const std::string& a, const std::string& b) {
      return noise_rank(a) < noise_rank(b);
    });
  }
  Grouped g;
  for (const auto& label : order) {
    g.labels.push_back(label);
    g.values.push_back(std::move(buckets[label]));
  }
  return g;
}

}  // namespace

GroupKey parse_group_key(std::string_view name) {
  for (const auto& k : kKeyNames) {
    if (k.name == name) return k.key;
  }
  throw Error(fmt::format("unknown grouping '{}' (noise, car, hp_fc, lp_fc, peak_fc, peak_q, "
                          "condition_id)",
                          name));
}

std::string_view to_string(GroupKey key) {
  for (const auto& k : kKeyNames) {
    if (k.key == key) return k.name;
  }
  return "?";
}

std::string group_label(const metrics::ConditionKey& c, GroupKey key) {
  switch (key) {
    case GroupKey::Noise: return c.noise;
    case GroupKey::Car: return c.car;
    case GroupKey::HpFc: return metrics::format_value(c.hp_fc);
    case GroupKey::LpFc: return metrics::format_value(c.lp_fc);
    case GroupKey::PeakFc: return metrics::format_value(c.peak_fc);
    case GroupKey::PeakQ: return metrics::format_value(c.peak_q);
    case GroupKey::Condition: return c.condition_id;
  }
  return {};
}

Filter parse_filter(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0 || eq + 1 == text.size()) {
    throw Error(fmt::format("filter '{}' must look like key=value", text));
  }
  Filter f{parse_group_key(text.substr(0, eq)), std::string(text.substr(eq + 1))};
  if (is_numeric(f.key)) f.value = metrics::format_value(metrics::parse_value(f.value));
  return f;
}

std::string format_filters(std::span<const Filter> filters) {
  std::string out;
  for (const auto& f : filters) {
    if (!out.empty()) out += ';';
    out += fmt::format("{}={}", to_string(f.key), f.value);
  }
  return out;
}

bool matches(const metrics::ConditionKey& c, std::span<const Filter> filters) {
  return std::all_of(filters.begin(), filters.end(),
                     [&](const Filter& f) { return group_label(c, f.key) == f.value; });
}

Grouped group_values(const metrics::Dataset& rows, std::string_view metric, GroupKey key,
                     std::span<const Filter> filters) {
  return group_impl(
      rows.size(),
      [&](std::size_t i) -> std::pair<const metrics::ConditionKey*, double> {
        if (rows[i].metric != metric) return {nullptr, 0.0};
        return {&rows[i].condition, rows[i].value};
      },
      key, filters);
}

Grouped group_condition_values(std::span<const std::pair<metrics::ConditionKey, double>> values,
                               GroupKey key, std::span<const Filter> filters) {
  return group_impl(
      values.size(),
      [&](std::size_t i) -> std::pair<const metrics::ConditionKey*, double> {
        return {&values[i].first, values[i].second};
      },
      key, filters);
}

}  // namespace carmic::stats
