#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "carmic/audio_io.hpp"

namespace carmic::fixtures {

/// Sentence-structured stimulus timing. Every sentence window holds a lead
/// silence, an active region and a trail silence.
struct StimulusLayout {
  int sentence_count = 20;
  double sentence_seconds = 4.0;
  double lead_silence_s = 1.0;
  double trail_silence_s = 1.0;

  double total_seconds() const { return sentence_count * sentence_seconds; }
  double active_seconds() const { return sentence_seconds - lead_silence_s - trail_silence_s; }

  /// Sample counts at a given rate; each must be an exact integer.
  std::size_t sentence_samples(int sample_rate) const;
  std::size_t lead_samples(int sample_rate) const;
  std::size_t trail_samples(int sample_rate) const;
  std::size_t total_samples(int sample_rate) const {
    return sentence_samples(sample_rate) * static_cast<std::size_t>(sentence_count);
  }

  void validate() const;
};

enum class NoiseClass { Idle, City, Highway };

inline constexpr NoiseClass kAllNoiseClasses[] = {NoiseClass::Idle, NoiseClass::City,
                                                  NoiseClass::Highway};

std::string_view to_string(NoiseClass c);
NoiseClass parse_noise_class(std::string_view name);

/// Default RMS target: Idle -50, City -35, Highway -25 dBFS.
double default_level_dbfs(NoiseClass c);

struct CarModel {
  std::string id;
  double rt60 = 0.08;                // s
  double direct_to_reverb_db = 6.0;  // +inf gives a pure delta
};

/// Three synthetic cabins standing in for a sedan and two SUVs.
std::vector<CarModel> default_cars();

/// Portable generator: std::mt19937_64 has a fully specified output
/// sequence; the distributions below are hand-rolled because the standard
/// library ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal (Box-Muller, both variates used).
  double gaussian();

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a base seed with stream labels so related fixtures get independent
/// streams (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

struct StimulusOptions {
  int sample_rate = kCanonicalSampleRate;
  double peak_dbfs = -12.0;
  double max_harmonic_hz = 3400.0;
  double syllable_rate_hz = 4.0;
};

/// Harmonic complex per sentence (f0 alternating 120 / 220 Hz), amplitude
/// modulated at the syllabic rate, peak-normalized per sentence; exact zeros
/// in the lead and trail silences.
AudioBuffer synth_stimulus(const StimulusLayout& layout, std::uint64_t seed,
                           const StimulusOptions& options = {});

/// Unit direct path at t = 0 plus an exponentially decaying Gaussian tail
/// whose energy falls 60 dB over rt60. The tail energy sits
/// direct_to_reverb_db below the direct path.
ImpulseResponse synth_impulse_response(const CarModel& car, double length_s, std::uint64_t seed,
                                       int sample_rate = kCanonicalSampleRate);

/// Pink noise with an extra low-frequency tilt, scaled to an exact RMS.
AudioBuffer synth_noise(NoiseClass noise_class, double duration_s, std::uint64_t seed,
                        int sample_rate = kCanonicalSampleRate);
AudioBuffer synth_noise_at_level(double level_dbfs, double duration_s, std::uint64_t seed,
                                 int sample_rate = kCanonicalSampleRate);

/// RMS of a sequence in dBFS (full scale = 1.0).
double rms_dbfs(const std::vector<double>& samples);

}  // namespace carmic::fixtures
