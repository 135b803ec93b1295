#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <vector>

#include "carmic/dsp.hpp"
#include "carmic/fixtures.hpp"

using namespace carmic;
using namespace carmic::fixtures;
using Catch::Approx;

namespace {

// Schroeder backward integration of the reverberant tail, in dB re its own
// total energy. Returns the first time (s) the curve drops to -60 dB.
double edc_crossing_60(const std::vector<double>& tail, int fs) {
  std::vector<double> edc(tail.size());
  double acc = 0.0;
  for (std::size_t i = tail.size(); i-- > 0;) {
    acc += tail[i] * tail[i];
    edc[i] = acc;
  }
  const double total = edc[0];
  for (std::size_t i = 0; i < edc.size(); ++i) {
    if (10.0 * std::log10(edc[i] / total) <= -60.0) return static_cast<double>(i) / fs;
  }
  return std::numeric_limits<double>::infinity();
}

// Hann-windowed averaged periodogram at chosen frequencies (direct DFT).
std::vector<double> periodogram_db(const std::vector<double>& x, const std::vector<double>& freqs, int fs) {
  const std::size_t seg = 4800;
  std::vector<double> win(seg);
  for (std::size_t n = 0; n < seg; ++n) win[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / seg);
  std::vector<double> out;
  for (double f : freqs) {
    double p = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start + seg <= x.size(); start += seg / 2, ++count) {
      std::complex<double> acc = 0.0;
      for (std::size_t n = 0; n < seg; ++n) {
        acc += win[n] * x[start + n] * std::polar(1.0, -2.0 * std::numbers::pi * f * n / fs);
      }
      p += std::norm(acc);
    }
    out.push_back(10.0 * std::log10(p / count));
  }
  return out;
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

TEST_CASE("StimulusLayout") {
  const StimulusLayout layout;
  REQUIRE(layout.total_seconds() == 80.0);
  REQUIRE(layout.active_seconds() == 2.0);
  REQUIRE(layout.total_samples(48000) == 3'840'000);
  REQUIRE(layout.sentence_samples(48000) == 192'000);
  REQUIRE(layout.lead_samples(48000) == 48'000);
  REQUIRE_NOTHROW(layout.validate());

  StimulusLayout crowded;
  crowded.lead_silence_s = 2.0;
  crowded.trail_silence_s = 2.0;
  REQUIRE_THROWS_AS(crowded.validate(), Error);

  StimulusLayout empty;
  empty.sentence_count = 0;
  REQUIRE_THROWS_AS(empty.validate(), Error);

  StimulusLayout fractional;
  fractional.sentence_seconds = 4.00001;
  REQUIRE_THROWS_AS(fractional.sentence_samples(48000), Error);
}

TEST_CASE("noise classes and cars") {
  REQUIRE(default_level_dbfs(NoiseClass::Idle) == -50.0);
  REQUIRE(default_level_dbfs(NoiseClass::City) == -35.0);
  REQUIRE(default_level_dbfs(NoiseClass::Highway) == -25.0);
  for (auto c : kAllNoiseClasses) REQUIRE(parse_noise_class(to_string(c)) == c);
  REQUIRE_THROWS_AS(parse_noise_class("tunnel"), Error);

  const auto cars = default_cars();
  REQUIRE(cars.size() == 3);
  std::set<std::string> ids;
  for (const auto& c : cars) {
    REQUIRE(c.rt60 > 0.0);
    ids.insert(c.id);
  }
  REQUIRE(ids.size() == 3);
}

TEST_CASE("Rng") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double ua = a.uniform();
    REQUIRE(ua == b.uniform());
    REQUIRE(ua >= 0.0);
    REQUIRE(ua < 1.0);
    differs |= ua != c.uniform();
  }
  REQUIRE(differs);

  Rng g(7);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = g.gaussian();
    sum += v;
    sq += v * v;
  }
  REQUIRE(sum / n == Approx(0.0).margin(0.01));
  REQUIRE(sq / n == Approx(1.0).margin(0.02));

  REQUIRE(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  REQUIRE(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
  REQUIRE(derive_seed(1, 2) != derive_seed(2, 2));
}

TEST_CASE("synth_stimulus") {
  const StimulusLayout layout;
  const auto s = synth_stimulus(layout, 1);
  REQUIRE(s.sample_rate == 48000);
  REQUIRE(s.size() == 3'840'000);

  const std::size_t sent = layout.sentence_samples(48000);
  const std::size_t lead = layout.lead_samples(48000);
  const std::size_t trail = layout.trail_samples(48000);
  for (int k = 0; k < layout.sentence_count; ++k) {
    const std::size_t base = k * sent;
    bool silent = true;
    for (std::size_t i = 0; i < lead; ++i) silent &= s.samples[base + i] == 0.0;
    for (std::size_t i = sent - trail; i < sent; ++i) silent &= s.samples[base + i] == 0.0;
    REQUIRE(silent);
    double peak = 0.0;
    for (std::size_t i = lead; i < sent - trail; ++i) peak = std::max(peak, std::abs(s.samples[base + i]));
    REQUIRE(20.0 * std::log10(peak) == Approx(-12.0).margin(1e-9));
  }

  SECTION("deterministic per seed") {
    REQUIRE(synth_stimulus(layout, 1).samples == s.samples);
    REQUIRE(synth_stimulus(layout, 2).samples != s.samples);
  }
  SECTION("alternating fundamentals show up in the active spectrum") {
    // Sentence 0 and 1 carry different f0; compare energy at 120 vs 220 Hz.
    const auto band = [&](int k, double f) {
      const std::vector<double> active(s.samples.begin() + k * sent + lead,
                                       s.samples.begin() + k * sent + sent - trail);
      return periodogram_db(active, {f}, 48000)[0];
    };
    REQUIRE(band(0, 120.0) - band(0, 220.0) > 10.0);
    REQUIRE(band(1, 220.0) - band(1, 120.0) > 10.0);
  }
}

TEST_CASE("synth_impulse_response") {
  SECTION("energy decay reaches -60 dB at rt60 within 10%") {
    for (double rt60 : {0.05, 0.06, 0.08, 0.10}) {
      const CarModel car{"c", rt60, 6.0};
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto ir = synth_impulse_response(car, 0.3, seed);
        REQUIRE(ir.audio.samples[0] == 1.0);
        std::vector<double> tail = ir.audio.samples;
        tail[0] = 0.0;
        const double t = edc_crossing_60(tail, 48000);
        INFO("rt60 " << rt60 << " seed " << seed << " crossing " << t);
        REQUIRE(std::abs(t - rt60) <= 0.1 * rt60);
      }
    }
  }
  SECTION("direct-to-reverberant ratio") {
    const auto ir = synth_impulse_response(CarModel{"c", 0.08, 6.0}, 0.3, 5);
    double tail = 0.0;
    for (std::size_t i = 1; i < ir.audio.size(); ++i) tail += ir.audio.samples[i] * ir.audio.samples[i];
    REQUIRE(10.0 * std::log10(1.0 / tail) == Approx(6.0).margin(1e-9));
  }
  SECTION("infinite direct-to-reverberant ratio is a pure delta") {
    const auto ir = synth_impulse_response(
        CarModel{"anechoic", 0.05, std::numeric_limits<double>::infinity()}, 0.1, 1);
    REQUIRE(ir.audio.samples[0] == 1.0);
    for (std::size_t i = 1; i < ir.audio.size(); ++i) REQUIRE(ir.audio.samples[i] == 0.0);
    const std::vector<double> x{0.5, -0.25, 0.125};
    const auto y = dsp::convolve(x, ir.audio.samples);
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(y[i] == Approx(x[i]).margin(1e-12));
  }
  SECTION("deterministic and validated") {
    const CarModel car{"c", 0.06, 8.0};
    REQUIRE(synth_impulse_response(car, 0.2, 9).audio.samples ==
            synth_impulse_response(car, 0.2, 9).audio.samples);
    REQUIRE_THROWS_AS(synth_impulse_response(car, 0.05, 9), Error);
    REQUIRE_THROWS_AS(synth_impulse_response(CarModel{"c", 0.0, 8.0}, 0.2, 9), Error);
  }
}

TEST_CASE("synth_noise") {
  const auto idle = synth_noise(NoiseClass::Idle, 10.0, 1);
  const auto city = synth_noise(NoiseClass::City, 10.0, 2);
  const auto highway = synth_noise(NoiseClass::Highway, 10.0, 3);
  REQUIRE(idle.size() == 480000);
  REQUIRE(rms_dbfs(idle.samples) == Approx(-50.0).margin(0.1));
  REQUIRE(rms_dbfs(highway.samples) - rms_dbfs(city.samples) == Approx(10.0).margin(0.1));

  SECTION("pink tilt: periodogram slope between 100 Hz and 1 kHz is negative") {
    std::vector<double> freqs, logf;
    for (double f = 100.0; f <= 1000.0 + 1e-9; f *= std::pow(10.0, 0.1)) {
      freqs.push_back(std::round(f / 10.0) * 10.0);
      logf.push_back(std::log10(freqs.back()));
    }
    const double slope = least_squares_slope(logf, periodogram_db(city.samples, freqs, 48000));
    INFO("slope dB/decade " << slope);
    REQUIRE(slope < 0.0);
  }
  SECTION("deterministic per seed") {
    REQUIRE(synth_noise(NoiseClass::Idle, 10.0, 1).samples == idle.samples);
    REQUIRE(synth_noise(NoiseClass::Idle, 10.0, 4).samples != idle.samples);
  }
  SECTION("arbitrary level and bad duration") {
    REQUIRE(rms_dbfs(synth_noise_at_level(-17.5, 2.0, 1).samples) == Approx(-17.5).margin(1e-9));
    REQUIRE_THROWS_AS(synth_noise(NoiseClass::City, 0.0, 1), Error);
  }
}
