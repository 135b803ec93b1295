// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Oracles here are independent of the library code paths they check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <fmt/format.h>

#include "carmic/cli.hpp"
#include "carmic/dsp.hpp"
#include "carmic/metrics.hpp"
#include "carmic/pipeline.hpp"
#include "carmic/stats.hpp"
#include "helpers.hpp"

using namespace carmic;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

int failures = 0;

void report(int id, const std::string& name, Outcome o, double secs) {
  if (!o.pass) ++failures;
  std::printf("%s criterion %d (%s) [%.2f s]%s%s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), secs,
              o.detail.empty() ? "" : ": ", o.detail.c_str());
  std::fflush(stdout);
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int rc = cli_main(args, out, err);
  if (out_text) *out_text = out.str();
  if (rc != 0) std::fprintf(stderr, "carmic %s failed: %s\n", args.empty() ? "" : args[0].c_str(), err.str().c_str());
  return rc;
}

double db_at(const dsp::FilterCascade& c, double f) {
  return dsp::magnitude_response(c, std::span(&f, 1), 48000.0)[0];
}

// ---- 1 -------------------------------------------------------------------

Outcome filter_design() {
  Outcome o;
  const double q = 1.0 / std::sqrt(2.0);
  const double half_power = 10.0 * std::log10(0.5);
  int checked = 0;
  for (double fc : pipeline::kHighPassCorners) {
    const auto c = dsp::design_biquad(dsp::FilterKind::high_pass(fc, q), 48000.0);
    const double v = db_at({c}, fc);
    o.check(std::abs(v - half_power) <= 0.05, fmt::format("HP2 {} Hz: {:.4f} dB", fc, v));
    ++checked;
  }
  for (double fc : pipeline::kLowPassCorners) {
    const auto c = dsp::design_biquad(dsp::FilterKind::low_pass(fc, q), 48000.0);
    const double v = db_at({c}, fc);
    o.check(std::abs(v - half_power) <= 0.05, fmt::format("LP2 {} Hz: {:.4f} dB", fc, v));
    ++checked;
  }
  for (double fc : pipeline::kPeakCenters) {
    for (double pq : pipeline::kPeakQs) {
      const auto c = dsp::design_biquad(dsp::FilterKind::peak(fc, pq, 20.0), 48000.0);
      const double v = db_at({c}, fc);
      o.check(std::abs(v - 20.0) <= 0.05, fmt::format("PK2 {} Hz q {}: {:.4f} dB", fc, pq, v));
      ++checked;
    }
  }
  // Every profile of the grid as a whole cascade keeps its own sections exact.
  for (const auto& m : pipeline::full_grid(true)) {
    for (const auto& s : m.cascade(48000.0)) o.check(s.is_stable(), m.id() + " unstable");
  }
  if (o.pass) o.detail = fmt::format("{} section designs within 0.05 dB", checked);
  return o;
}

// ---- 2 -------------------------------------------------------------------

Outcome convolution_oracle() {
  Outcome o;
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::size_t> len(1, 4096);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int pair = 0; pair < 200; ++pair) {
    std::vector<double> x(len(rng)), h(len(rng));
    for (double& v : x) v = u(rng);
    for (double& v : h) v = u(rng);
    std::vector<double> direct(x.size() + h.size() - 1, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < h.size(); ++j) direct[i + j] += x[i] * h[j];
    const auto fast = dsp::convolve(x, h);
    if (fast.size() != direct.size()) {
      o.check(false, fmt::format("pair {}: length {} vs {}", pair, fast.size(), direct.size()));
      continue;
    }
    for (std::size_t i = 0; i < fast.size(); ++i) worst = std::max(worst, std::abs(fast[i] - direct[i]));
  }
  o.check(worst <= 1e-9, fmt::format("max abs error {:.3e}", worst));
  if (o.pass) o.detail = fmt::format("200 pairs, max abs error {:.3e}", worst);
  return o;
}

// ---- 3 and 6 share the default sweep ---------------------------------------

struct DefaultSweep {
  metrics::Dataset rows;
  double sweep_seconds = 0.0;
  std::string anova_out;
  int anova_rc = -1;
  bool ok = false;
};

DefaultSweep run_default_sweep(const fs::path& dir) {
  DefaultSweep d;
  if (cli({"synth", "--out", dir.string()}) != 0) return d;
  const std::string manifest = (dir / "manifest.json").string();
  const auto t0 = Clock::now();
  if (cli({"--manifest", manifest, "sweep"}) != 0) return d;
  d.sweep_seconds = seconds_since(t0);
  d.rows = metrics::read_dataset(dir / "out" / "dataset.csv");
  d.anova_rc = cli({"--manifest", manifest, "anova", "--metric", "snr_a", "--group", "noise"}, &d.anova_out);
  d.ok = true;
  return d;
}

Outcome grid_combinatorics(const DefaultSweep& d, const fs::path& scratch) {
  Outcome o;
  o.check(pipeline::full_grid(false).size() == 225, "full grid is not 225");
  o.check(pipeline::default_selection().size() == 113, "default selection is not 113");
  o.check(d.ok, "default sweep did not run");
  const auto conditions = metrics::dataset_conditions(d.rows);
  o.check(conditions.size() == 1017, fmt::format("{} conditions", conditions.size()));
  const auto snr_rows = std::count_if(d.rows.begin(), d.rows.end(), [](const auto& r) { return r.metric == "snr_a"; });
  o.check(snr_rows == 1017 * 20, fmt::format("{} SNR rows", snr_rows));

  // Reduced CI manifest: 5 mics x 1 car x 3 noises, from scratch to dataset.
  const auto t0 = Clock::now();
  const auto ci = scratch / "ci";
  bool ci_ok = cli({"synth", "--out", ci.string(), "--cars", "1", "--mics", "5"}) == 0 &&
               cli({"--manifest", (ci / "manifest.json").string(), "sweep"}) == 0;
  const double ci_secs = seconds_since(t0);
  std::size_t ci_rows = 0;
  if (ci_ok) ci_rows = metrics::read_dataset(ci / "out" / "dataset.csv").size();
  o.check(ci_ok && ci_rows == 15 * 20, fmt::format("CI manifest gave {} rows", ci_rows));
  o.check(ci_secs < 30.0, fmt::format("CI manifest took {:.1f} s", ci_secs));
  if (o.pass) {
    o.detail = fmt::format("225 / 113 / 1017 conditions / {} rows; full sweep {:.1f} s; CI manifest {:.1f} s",
                           snr_rows, d.sweep_seconds, ci_secs);
  }
  return o;
}

Outcome trend(const DefaultSweep& d) {
  Outcome o;
  o.check(d.ok, "default sweep did not run");
  std::map<std::string, std::map<std::string, std::vector<double>>> by_car;
  for (const auto& r : d.rows) {
    if (r.metric == "snr_a" && std::isfinite(r.value)) by_car[r.condition.car][r.condition.noise].push_back(r.value);
  }
  const auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  std::string medians;
  o.check(by_car.size() == 3, fmt::format("{} cars", by_car.size()));
  for (auto& [car, noises] : by_car) {
    const double idle = median(noises["idle"]);
    const double city = median(noises["city"]);
    const double highway = median(noises["highway"]);
    o.check(idle > city && city > highway,
            fmt::format("{}: idle {:.2f} city {:.2f} highway {:.2f}", car, idle, city, highway));
    medians += fmt::format(" {} {:.1f}/{:.1f}/{:.1f}", car, idle, city, highway);
  }
  // Second CSV line of the anova output carries p.
  double p = std::numeric_limits<double>::quiet_NaN();
  std::istringstream lines(d.anova_out);
  std::string header, line;
  std::getline(lines, header);
  std::getline(lines, line);
  std::vector<std::string> fields;
  std::stringstream ls(line);
  for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
  if (fields.size() == 7) p = metrics::parse_value(fields[3]);
  o.check(d.anova_rc == 0 && p < 1e-6, fmt::format("anova by noise p = {}", p));
  if (o.pass) o.detail = fmt::format("median SNR dB idle/city/highway:{}; anova p = {:.3g}", medians, p);
  return o;
}

// ---- 4 -------------------------------------------------------------------

using Words = std::vector<std::string>;

int brute_edit_cost(const Words& r, std::size_t i, const Words& h, std::size_t j) {
  if (i == r.size()) return static_cast<int>(h.size() - j);
  if (j == h.size()) return static_cast<int>(r.size() - i);
  return std::min({brute_edit_cost(r, i + 1, h, j + 1) + (r[i] == h[j] ? 0 : 1),
                   brute_edit_cost(r, i + 1, h, j) + 1, brute_edit_cost(r, i, h, j + 1) + 1});
}

std::vector<Words> sequences(const Words& alphabet, std::size_t max_len) {
  std::vector<Words> out{{}};
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k].size() == max_len) continue;
    for (const auto& w : alphabet) {
      auto next = out[k];
      next.push_back(w);
      out.push_back(std::move(next));
    }
  }
  return out;
}

Outcome wer_oracle() {
  Outcome o;
  std::size_t pairs = 0;
  const auto sweep = [&](const Words& alphabet, std::size_t max_len) {
    const auto seqs = sequences(alphabet, max_len);
    for (const auto& r : seqs) {
      if (r.empty()) continue;
      for (const auto& h : seqs) {
        ++pairs;
        const auto c = metrics::wer(r, h);
        const int truth = brute_edit_cost(r, 0, h, 0);
        if (c.errors() != truth || c.reference_words != static_cast<int>(r.size())) {
          o.check(false, fmt::format("pair #{}: dp {} brute {}", pairs, c.errors(), truth));
          return;
        }
      }
    }
  };
  sweep({"a", "b"}, 6);
  sweep({"a", "b", "c"}, 5);

  // Pooling: 20 sentences of 8 words, one missing entirely.
  std::vector<metrics::SentencePair> s;
  for (int i = 0; i < 20; ++i) {
    Words w;
    for (int k = 0; k < 8; ++k) w.push_back(fmt::format("s{}w{}", i, k));
    s.push_back({w, w});
  }
  s[11].hypothesis.reset();
  const double pooled = metrics::wer_aggregate(s).rate();
  o.check(pooled == 8.0 / 160.0, fmt::format("pooled {} != 0.05", pooled));
  // N = 1 fully wrong, N = 99 perfect: pooled 1/100, mean of rates would be 0.5.
  Words big;
  for (int k = 0; k < 99; ++k) big.push_back(fmt::format("w{}", k));
  const std::vector<metrics::SentencePair> counter{{{"only"}, Words{"other"}}, {big, big}};
  const double c = metrics::wer_aggregate(counter).rate();
  o.check(std::abs(c - 0.01) < 1e-15, fmt::format("counterexample pooled {}", c));
  if (o.pass) o.detail = fmt::format("{} exhaustive pairs; pooled 0.05 and 0.01 examples", pairs);
  return o;
}

// ---- 5 -------------------------------------------------------------------

double f_density(double x, double d1, double d2) {
  if (x <= 0.0) return 0.0;
  const double log_beta = std::lgamma(d1 / 2) + std::lgamma(d2 / 2) - std::lgamma((d1 + d2) / 2);
  return std::exp(0.5 * (d1 * std::log(d1 * x) + d2 * std::log(d2) - (d1 + d2) * std::log(d1 * x + d2)) -
                  std::log(x) - log_beta);
}

double quad_cdf(double x, double d1, double d2) {
  const auto pdf = [=](double t) { return f_density(t, d1, d2); };
  boost::math::quadrature::tanh_sinh<double> lower;
  const double below = lower.integrate(pdf, 0.0, x);
  if (below < 0.5) return below;
  boost::math::quadrature::exp_sinh<double> upper;
  return 1.0 - upper.integrate(pdf, x, std::numeric_limits<double>::infinity());
}

Outcome anova_oracle() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_int_distribution<int> size(2, 25);
  double worst_f = 0.0, worst_p = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<double>> g(2);
    for (std::size_t k = 0; k < 2; ++k) {
      g[k].resize(size(rng));
      for (double& v : g[k]) v = nd(rng) + 0.4 * k * (trial % 4);
    }
    const double ma = std::accumulate(g[0].begin(), g[0].end(), 0.0) / g[0].size();
    const double mb = std::accumulate(g[1].begin(), g[1].end(), 0.0) / g[1].size();
    double ss = 0.0;
    for (double v : g[0]) ss += (v - ma) * (v - ma);
    for (double v : g[1]) ss += (v - mb) * (v - mb);
    const double df = g[0].size() + g[1].size() - 2.0;
    const double t = (ma - mb) / std::sqrt(ss / df * (1.0 / g[0].size() + 1.0 / g[1].size()));
    const double p = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::abs(t)));
    const auto r = stats::anova_oneway(g);
    worst_f = std::max(worst_f, std::abs(r.f_stat - t * t) / std::max(1.0, t * t));
    worst_p = std::max(worst_p, std::abs(r.p_value - p));
  }
  o.check(worst_f <= 1e-9, fmt::format("F vs t^2 rel error {:.2e}", worst_f));
  o.check(worst_p <= 1e-9, fmt::format("p vs t-test error {:.2e}", worst_p));

  double worst_cdf = 0.0;
  for (double d1 : {1.0, 2.0, 3.0, 4.0, 7.0, 12.0, 20.0, 35.0, 60.0}) {
    for (double d2 : {1.0, 2.0, 3.0, 5.0, 10.0, 25.0, 42.0, 60.0}) {
      for (double x : {0.01, 0.1, 0.5, 0.8, 1.0, 1.3, 2.0, 3.5, 7.0, 20.0, 100.0}) {
        worst_cdf = std::max(worst_cdf, std::abs(stats::f_cdf(x, d1, d2) - quad_cdf(x, d1, d2)));
      }
    }
  }
  o.check(worst_cdf <= 1e-8, fmt::format("f_cdf vs quadrature error {:.2e}", worst_cdf));

  const std::vector<std::vector<double>> same{{1, 2, 3}, {1, 2, 3}, {1, 2, 3}};
  const auto a = stats::anova_oneway(same);
  o.check(a.f_stat == 0.0 && a.p_value == 1.0, "identical groups not F=0, p=1");
  const std::vector<std::vector<double>> flat{{4, 4, 4}, {4, 4}};
  const auto b = stats::anova_oneway(flat);
  o.check(b.f_stat == 0.0 && b.p_value == 1.0, "constant data not F=0, p=1");
  const std::vector<std::vector<double>> split{{1, 1}, {2, 2, 2}};
  const auto c = stats::anova_oneway(split);
  o.check(std::isinf(c.f_stat) && c.f_stat > 0 && c.p_value == 0.0, "zero within spread not F=inf, p=0");
  if (o.pass) {
    o.detail = fmt::format("t-test F rel {:.1e}, p {:.1e}; quadrature {:.1e}; degenerate rules exact", worst_f,
                           worst_p, worst_cdf);
  }
  return o;
}

// ---- 7 -------------------------------------------------------------------

Outcome bandwidth_insensitivity() {
  Outcome o;
  using pipeline::MicProfile;
  // The stimulus holds no harmonic above 3.4 kHz.
  auto src = testutil::small_sources(20, {}, 1);
  const auto layout = src.layout;
  const auto& car = src.cars[0];
  const auto speech = pipeline::reverberant_speech(src.stimulus, car.ir);
  const auto noise = pipeline::tile_noise(car.noises.at(fixtures::NoiseClass::City), speech.size());
  std::vector<double> mix(speech.size());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = speech[i] + noise[i];

  const auto per_sentence_snr = [&](const MicProfile& m) {
    const AudioBuffer x{dsp::apply_cascade(m.cascade(48000.0), mix), 48000};
    std::vector<double> out;
    for (const auto& s : metrics::segment(x, layout)) out.push_back(metrics::snr_a_weighted(s));
    return out;
  };
  std::vector<std::vector<double>> snr;
  for (double lp : {8000.0, 12000.0, 16000.0, 20000.0}) snr.push_back(per_sentence_snr(MicProfile{100.0, lp, {}}));
  double spread = 0.0;
  for (std::size_t k = 0; k < snr[0].size(); ++k) {
    double lo = snr[0][k], hi = snr[0][k];
    for (const auto& v : snr) {
      lo = std::min(lo, v[k]);
      hi = std::max(hi, v[k]);
    }
    spread = std::max(spread, hi - lo);
  }
  o.check(spread < 0.5, fmt::format("LP2 spread {:.3f} dB", spread));

  // Noise-free in-band energy lost to the high-pass, per sentence active region.
  const auto active_energy = [&](const std::vector<double>& y) {
    std::vector<double> e;
    const AudioBuffer b{y, 48000};
    for (const auto& s : metrics::segment(b, layout)) {
      double acc = 0.0;
      for (double v : s.active) acc += v * v;
      e.push_back(acc);
    }
    return e;
  };
  const auto raw = active_energy(speech);
  const auto hp100 = active_energy(dsp::apply_cascade(MicProfile{100.0, 20000.0, {}}.cascade(48000.0), speech));
  const auto hp350 = active_energy(dsp::apply_cascade(MicProfile{350.0, 20000.0, {}}.cascade(48000.0), speech));
  double least = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const double loss100 = 10.0 * std::log10(raw[k] / hp100[k]);
    const double loss350 = 10.0 * std::log10(raw[k] / hp350[k]);
    least = std::min(least, loss350 - loss100);
  }
  o.check(least >= 1.0, fmt::format("HP2 350 extra loss only {:.2f} dB", least));
  if (o.pass) {
    o.detail = fmt::format("max per-sentence SNR spread over LP2 {:.3f} dB; HP2 350 vs 100 extra loss >= {:.2f} dB",
                           spread, least);
  }
  return o;
}

// ---- 8 -------------------------------------------------------------------

Outcome determinism(const fs::path& scratch) {
  Outcome o;
  const auto end_to_end = [&](const fs::path& dir, const std::string& workers) {
    const std::string manifest = (dir / "manifest.json").string();
    return cli({"--seed", "7", "synth", "--out", dir.string(), "--cars", "2", "--mics", "6", "--noise-seconds", "5"}) ==
               0 &&
           cli({"--manifest", manifest, "--workers", workers, "sweep"}) == 0 &&
           cli({"--manifest", manifest, "report"}) == 0 &&
           cli({"--manifest", manifest, "plot", "--metric", "snr_a", "--x", "car", "--hue", "noise", "--out",
                (dir / "fig.svg").string()}) == 0;
  };
  const auto a = scratch / "det_a", b = scratch / "det_b", c = scratch / "det_c";
  o.check(end_to_end(a, "1") && end_to_end(b, "1") && end_to_end(c, "4"), "an end-to-end run failed");
  std::size_t compared = 0;
  if (o.pass) {
    for (const auto& e : fs::recursive_directory_iterator(a)) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), a);
      const auto bytes = testutil::slurp(e.path());
      for (const auto& other : {b, c}) {
        o.check(fs::exists(other / rel) && testutil::slurp(other / rel) == bytes,
                fmt::format("{} differs in {}", rel.string(), other.filename().string()));
      }
      ++compared;
    }
    o.check(fs::exists(a / "out" / "dataset.csv") && fs::exists(a / "fig.svg") &&
                fs::exists(a / "out" / "report" / "index.txt"),
            "expected outputs missing");
  }
  if (o.pass) o.detail = fmt::format("{} files byte-identical across 2 seeded runs and workers 1 vs 4", compared);
  return o;
}

}  // namespace

int main() {
  testutil::TempDir scratch("acceptance");
  std::printf("carmic acceptance run (scratch %s)\n", scratch.path().string().c_str());

  auto t0 = Clock::now();
  auto o = filter_design();
  const double design_secs = seconds_since(t0);
  o.check(design_secs < 1.0, fmt::format("took {:.2f} s", design_secs));
  report(1, "filter design", o, design_secs);

  t0 = Clock::now();
  o = convolution_oracle();
  report(2, "convolution oracle", o, seconds_since(t0));

  t0 = Clock::now();
  const auto sweep = run_default_sweep(scratch / "default");
  const double sweep_secs = seconds_since(t0);
  t0 = Clock::now();
  o = grid_combinatorics(sweep, scratch.path());
  report(3, "grid combinatorics", o, sweep_secs + seconds_since(t0));

  t0 = Clock::now();
  o = wer_oracle();
  report(4, "WER oracle", o, seconds_since(t0));

  t0 = Clock::now();
  o = anova_oracle();
  report(5, "ANOVA oracle", o, seconds_since(t0));

  t0 = Clock::now();
  o = trend(sweep);
  report(6, "trend reproduction", o, seconds_since(t0));

  t0 = Clock::now();
  o = bandwidth_insensitivity();
  report(7, "bandwidth insensitivity", o, seconds_since(t0));

  t0 = Clock::now();
  o = determinism(scratch.path());
  report(8, "determinism", o, seconds_since(t0));

  std::printf("%s: %d of 8 criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
