#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "carmic/error.hpp"

namespace carmic {

inline constexpr int kCanonicalSampleRate = 48000;

/// Mono signal at a fixed sample rate. Samples are nominally in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kCanonicalSampleRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }

  /// Throws Error unless sample_rate > 0 and every sample is finite.
  void validate() const;
};

/// Acoustic path from talker to microphone, tagged with the car it belongs to.
struct ImpulseResponse {
  AudioBuffer audio;
  std::string label;

  void validate() const;
};

enum class WavFormat { Pcm16, Float32 };

/// Parses a RIFF/WAVE byte image. PCM16 and IEEE float32 are supported,
/// including WAVE_FORMAT_EXTENSIBLE wrappers of either. Multichannel input
/// keeps channel 0 and reports a warning.
AudioBuffer parse_wav(const std::vector<std::uint8_t>& bytes,
                      const WarningSink& warn = stderr_warning);

AudioBuffer read_wav(const std::filesystem::path& path,
                     const WarningSink& warn = stderr_warning);

/// Serializes to a canonical 44-byte-header RIFF/WAVE image. PCM16 rounds to
/// nearest and saturates; any |sample| > 1 produces one warning.
std::vector<std::uint8_t> encode_wav(const AudioBuffer& buffer, WavFormat format,
                                     const WarningSink& warn = stderr_warning);

void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer,
               WavFormat format, const WarningSink& warn = stderr_warning);

}  // namespace carmic
