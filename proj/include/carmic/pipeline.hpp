#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "carmic/audio_io.hpp"
#include "carmic/dsp.hpp"
#include "carmic/fixtures.hpp"
#include "carmic/metrics.hpp"

namespace carmic::pipeline {

inline constexpr double kButterworthQ = 0.70710678118654752;  // 1/sqrt(2), usually rounded to 0.707
inline constexpr double kDefaultPeakGainDb = 20.0;

inline constexpr double kHighPassCorners[] = {20.0, 100.0, 350.0};
inline constexpr double kLowPassCorners[] = {4000.0, 8000.0, 12000.0, 16000.0, 20000.0};
inline constexpr double kPeakCenters[] = {4000.0, 6000.0, 8000.0, 13000.0, 16000.0};
inline constexpr double kPeakQs[] = {1.414, 2.0, 4.0};

inline constexpr std::size_t kDefaultSelectionSize = 113;

struct PeakSpec {
  double fc = 0.0;
  double q = 0.0;
  double gain_db = kDefaultPeakGainDb;

  friend bool operator==(const PeakSpec&, const PeakSpec&) = default;
};

/// One emulated microphone: HP2 -> LP2 -> optional PK2.
struct MicProfile {
  double hp_fc = 20.0;
  double lp_fc = 20000.0;
  std::optional<PeakSpec> peak;

  /// "hp<fc>-lp<fc>-flat" or "hp<fc>-lp<fc>-pk<fc>q<q>"; a non-default peak
  /// gain appends "g<dB>".
  std::string id() const;

  /// Throws unless hp < lp < Nyquist and the peak sits in (hp, Nyquist).
  void validate(double sample_rate) const;

  dsp::FilterCascade cascade(double sample_rate) const;

  friend bool operator==(const MicProfile&, const MicProfile&) = default;
};

/// Cartesian product of the corner and peak lists above, ordered by hp, lp, peak fc, peak q;
/// with include_no_peak the flat profile follows each (hp, lp) block.
std::vector<MicProfile> full_grid(bool include_no_peak, double peak_gain_db = kDefaultPeakGainDb);

/// 113 profiles: the 15 flat bandwidths plus 98 peak profiles sampled evenly
/// (by rank) from those with hp < peak fc < 1.25 * lp. Grid order.
std::vector<MicProfile> default_selection(double peak_gain_db = kDefaultPeakGainDb);

/// Selection text: one entry per line, either a profile id or
/// `hp,lp,peak_fc,peak_q` with peak_fc = -1 for a flat profile. Blank lines
/// and '#' comments are ignored. Result is in grid order.
std::vector<MicProfile> parse_selection(std::string_view text, const std::vector<MicProfile>& grid);
std::vector<MicProfile> select_profiles(const std::vector<MicProfile>& grid,
                                        const std::filesystem::path& selection_file);
std::string format_selection(const std::vector<MicProfile>& profiles);

struct CarSource {
  std::string id;
  ImpulseResponse ir;
  std::map<fixtures::NoiseClass, AudioBuffer> noises;
};

/// Everything a sweep needs, in memory.
struct Sources {
  int sample_rate = kCanonicalSampleRate;
  fixtures::StimulusLayout layout;
  AudioBuffer stimulus;
  std::vector<CarSource> cars;
  std::vector<fixtures::NoiseClass> noise_classes;
  std::vector<MicProfile> mics;
  std::vector<std::string> references;

  /// Rate consistency, stimulus length and resolvable noise references.
  void validate() const;
};

struct Condition {
  std::size_t index = 0;
  MicProfile mic;
  std::size_t car_index = 0;
  std::string car;
  fixtures::NoiseClass noise = fixtures::NoiseClass::Idle;

  /// "C" followed by the zero-padded canonical index, e.g. C0042.
  std::string id() const;
  metrics::ConditionKey key() const;
};

/// Canonical order: car, then noise class, then microphone.
std::vector<Condition> enumerate_conditions(const Sources& sources);
const Condition& find_condition(const std::vector<Condition>& conditions, const std::string& id);
std::map<std::string, metrics::ConditionKey> condition_index(const std::vector<Condition>& conditions);

/// s * h, trimmed to the stimulus length.
std::vector<double> reverberant_speech(const AudioBuffer& stimulus, const ImpulseResponse& ir);

/// Noise repeated from sample 0 (no crossfade) or cut to `length` samples.
/// Refuses noise shorter than one second.
std::vector<double> tile_noise(const AudioBuffer& noise, std::size_t length);

/// x = f(s * h + v): convolve, trim, add tiled noise, filter. No normalization.
AudioBuffer render_condition(const Condition& condition, const Sources& sources);

struct SweepOptions {
  unsigned workers = 1;
  std::optional<std::filesystem::path> render_dir;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Renders every condition and computes per-sentence A-weighted SNR rows.
/// Rows come out in canonical condition order whatever the worker count.
metrics::Dataset run_sweep(const Sources& sources, const SweepOptions& options = {});

// ---- manifest --------------------------------------------------------------

/// A loaded manifest: resolved output directory, content hash and sources.
struct Manifest {
  std::filesystem::path path;
  std::filesystem::path output_dir;
  std::string hash;
  Sources sources;
};

/// FNV-1a 64 of the manifest bytes, as 16 hex digits.
std::string content_hash(std::string_view bytes);

/// Output directory, hash and layout without loading any audio.
struct ManifestInfo {
  std::filesystem::path path;
  std::filesystem::path output_dir;
  std::string hash;
  fixtures::StimulusLayout layout;
};
ManifestInfo read_manifest_info(const std::filesystem::path& path);

Manifest load_manifest(const std::filesystem::path& path, const WarningSink& warn = stderr_warning);

struct SynthSetOptions {
  std::uint64_t seed = 1;
  std::size_t car_count = 3;
  std::size_t max_mics = kDefaultSelectionSize;  // evenly spaced subset of the default selection
  double noise_seconds = 20.0;
  double ir_seconds = 0.3;
};

/// Writes stimulus, IR and noise WAVs (float32), selection.txt and
/// manifest.json into `dir`; returns the manifest path.
std::filesystem::path write_synthetic_set(const std::filesystem::path& dir,
                                          const SynthSetOptions& options);

}  // namespace carmic::pipeline
