#include "carmic/fixtures.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/core.h>

namespace carmic::fixtures {

namespace {

std::size_t exact_samples(double seconds, int sample_rate, const char* what) {
  const double n = seconds * sample_rate;
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-6 || r < 0.0) {
    throw Error(fmt::format("{} of {} s is not a whole number of samples at {} Hz", what, seconds,
                            sample_rate));
  }
  return static_cast<std::size_t>(r);
}

}  // namespace

std::size_t StimulusLayout::sentence_samples(int sample_rate) const {
  return exact_samples(sentence_seconds, sample_rate, "sentence length");
}

std::size_t StimulusLayout::lead_samples(int sample_rate) const {
  return exact_samples(lead_silence_s, sample_rate, "lead silence");
}

std::size_t StimulusLayout::trail_samples(int sample_rate) const {
  return exact_samples(trail_silence_s, sample_rate, "trail silence");
}

void StimulusLayout::validate() const {
  if (sentence_count <= 0) throw Error("sentence_count must be positive");
  if (!(lead_silence_s > 0.0) || !(trail_silence_s > 0.0)) {
    throw Error("lead and trail silences must be positive");
  }
  if (!(lead_silence_s + trail_silence_s < sentence_seconds)) {
    throw Error("lead + trail silence must be shorter than the sentence");
  }
}

std::string_view to_string(NoiseClass c) {
  switch (c) {
    case NoiseClass::Idle: return "idle";
    case NoiseClass::City: return "city";
    case NoiseClass::Highway: return "highway";
  }
  return "?";
}

NoiseClass parse_noise_class(std::string_view name) {
  for (NoiseClass c : kAllNoiseClasses) {
    if (to_string(c) == name) return c;
  }
  throw Error(fmt::format("unknown noise class '{}'", name));
}

double default_level_dbfs(NoiseClass c) {
  switch (c) {
    case NoiseClass::Idle: return -50.0;
    case NoiseClass::City: return -35.0;
    case NoiseClass::Highway: return -25.0;
  }
  return 0.0;
}

std::vector<CarModel> default_cars() {
  return {
      {"sedan", 0.06, 8.0},
      {"compact_suv", 0.08, 6.0},
      {"subcompact_suv", 0.10, 4.0},
  };
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ b);
}

AudioBuffer synth_stimulus(const StimulusLayout& layout, std::uint64_t seed,
                           const StimulusOptions& options) {
  layout.validate();
  const int fs = options.sample_rate;
  const std::size_t per_sentence = layout.sentence_samples(fs);
  const std::size_t lead = layout.lead_samples(fs);
  const std::size_t trail = layout.trail_samples(fs);
  const std::size_t active = per_sentence - lead - trail;
  const double peak = std::pow(10.0, options.peak_dbfs / 20.0);

  AudioBuffer out;
  out.sample_rate = fs;
  out.samples.assign(layout.total_samples(fs), 0.0);

  Rng rng(seed);
  std::vector<double> sentence(active);
  for (int s = 0; s < layout.sentence_count; ++s) {
    const double f0 = (s % 2 == 0) ? 120.0 : 220.0;
    // Keep modulation sidebands below the cap.
    const int harmonics =
        static_cast<int>(std::floor((options.max_harmonic_hz - options.syllable_rate_hz) / f0));
    std::vector<double> phases(static_cast<std::size_t>(harmonics));
    for (double& p : phases) p = 2.0 * std::numbers::pi * rng.uniform();

    double max_abs = 0.0;
    for (std::size_t n = 0; n < active; ++n) {
      const double t = static_cast<double>(n) / fs;
      double v = 0.0;
      for (int k = 1; k <= harmonics; ++k) {
        v += std::sin(2.0 * std::numbers::pi * k * f0 * t + phases[static_cast<std::size_t>(k - 1)]) / k;
      }
      v *= 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * options.syllable_rate_hz * t));
      sentence[n] = v;
      max_abs = std::max(max_abs, std::abs(v));
    }
    const double g = max_abs > 0.0 ? peak / max_abs : 0.0;
    const std::size_t base = static_cast<std::size_t>(s) * per_sentence + lead;
    for (std::size_t n = 0; n < active; ++n) out.samples[base + n] = sentence[n] * g;
  }
  return out;
}

ImpulseResponse synth_impulse_response(const CarModel& car, double length_s, std::uint64_t seed,
                                       int sample_rate) {
  if (!(car.rt60 > 0.0)) throw Error(fmt::format("car '{}': rt60 must be positive", car.id));
  if (!(length_s >= car.rt60)) {
    throw Error(fmt::format("car '{}': impulse response length {} s is shorter than rt60 {} s",
                            car.id, length_s, car.rt60));
  }
  const auto n = static_cast<std::size_t>(std::llround(length_s * sample_rate));
  ImpulseResponse ir;
  ir.label = car.id;
  ir.audio.sample_rate = sample_rate;
  ir.audio.samples.assign(n, 0.0);
  ir.audio.samples[0] = 1.0;
  if (std::isinf(car.direct_to_reverb_db) && car.direct_to_reverb_db > 0.0) return ir;

  // Amplitude decays 60 dB (a factor 1000) over rt60.
  const double decay = 3.0 * std::numbers::ln10 / car.rt60;
  Rng rng(seed);
  double energy = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double v = rng.gaussian() * std::exp(-decay * t);
    ir.audio.samples[i] = v;
    energy += v * v;
  }
  if (energy > 0.0) {
    const double target = std::pow(10.0, -car.direct_to_reverb_db / 10.0);
    const double g = std::sqrt(target / energy);
    for (std::size_t i = 1; i < n; ++i) ir.audio.samples[i] *= g;
  }
  return ir;
}

double rms_dbfs(const std::vector<double>& samples) {
  if (samples.empty()) return -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (double v : samples) acc += v * v;
  return 10.0 * std::log10(acc / static_cast<double>(samples.size()));
}

AudioBuffer synth_noise_at_level(double level_dbfs, double duration_s, std::uint64_t seed,
                                 int sample_rate) {
  if (!(duration_s > 0.0)) throw Error("noise duration must be positive");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  if (n == 0) throw Error("noise duration rounds to zero samples");

  // Paul Kellet's refined pink filter (valid to within 0.05 dB above 9 Hz at
  // 44.1 kHz), followed by a one-pole low-pass that adds road-noise tilt.
  constexpr std::size_t kWarmup = 8192;
  constexpr double kTiltHz = 400.0;
  constexpr double kTiltMix = 0.15;  // share of untilted pink kept above the tilt corner
  const double tilt_pole = std::exp(-2.0 * std::numbers::pi * kTiltHz / sample_rate);

  Rng rng(seed);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0, lp = 0;
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n + kWarmup; ++i) {
    const double white = rng.gaussian();
    b0 = 0.99886 * b0 + white * 0.0555179;
    b1 = 0.99332 * b1 + white * 0.0750759;
    b2 = 0.96900 * b2 + white * 0.1538520;
    b3 = 0.86650 * b3 + white * 0.3104856;
    b4 = 0.55000 * b4 + white * 0.5329522;
    b5 = -0.7616 * b5 - white * 0.0168980;
    const double pink = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
    b6 = white * 0.115926;
    lp = (1.0 - tilt_pole) * pink + tilt_pole * lp;
    if (i >= kWarmup) out.samples[i - kWarmup] = lp + kTiltMix * pink;
  }

  const double current = rms_dbfs(out.samples);
  const double g = std::pow(10.0, (level_dbfs - current) / 20.0);
  for (double& v : out.samples) v *= g;
  return out;
}

AudioBuffer synth_noise(NoiseClass noise_class, double duration_s, std::uint64_t seed,
                        int sample_rate) {
  return synth_noise_at_level(default_level_dbfs(noise_class), duration_s, seed, sample_rate);
}

}  // namespace carmic::fixtures
