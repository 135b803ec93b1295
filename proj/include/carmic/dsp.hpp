#pragma once

#include <span>
#include <vector>

#include "carmic/audio_io.hpp"

namespace carmic::dsp {

/// One second-order section, a0 normalized to 1:
///   H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct BiquadCoeffs {
  double b0 = 1.0;
  double b1 = 0.0;
  double b2 = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;

  /// Poles strictly inside the unit circle.
  bool is_stable() const;

  friend bool operator==(const BiquadCoeffs&, const BiquadCoeffs&) = default;
};

enum class FilterType { HighPass2, LowPass2, Peak2 };

struct FilterKind {
  FilterType type = FilterType::LowPass2;
  double fc = 1000.0;
  double q = 0.70710678118654752;
  double gain_db = 0.0;  // Peak2 only

  static FilterKind high_pass(double fc, double q);
  static FilterKind low_pass(double fc, double q);
  static FilterKind peak(double fc, double q, double gain_db);
};

/// Ordered list of sections, applied first to last.
using FilterCascade = std::vector<BiquadCoeffs>;

/// Bilinear transform of the analog prototype with the corner (or centre)
/// prewarped so that it lands exactly on fc.
BiquadCoeffs design_biquad(const FilterKind& kind, double sample_rate);

/// 20 log10 |H(e^{j 2 pi f / fs})| per frequency. Frequencies must lie in
/// [0, fs/2].
std::vector<double> magnitude_response(const BiquadCoeffs& section, std::span<const double> freqs,
                                       double sample_rate);
std::vector<double> magnitude_response(const FilterCascade& cascade,
                                       std::span<const double> freqs, double sample_rate);

/// Transposed direct form II, zero initial state, output length = input length.
std::vector<double> apply_cascade(const FilterCascade& cascade, std::span<const double> input);
AudioBuffer apply_cascade(const FilterCascade& cascade, const AudioBuffer& input);

/// Full linear convolution (length |x| + |h| - 1) by FFT overlap-add.
std::vector<double> convolve(std::span<const double> x, std::span<const double> h);
AudioBuffer convolve(const AudioBuffer& x, const ImpulseResponse& h);

/// IEC 61672 A-weighting, normalized to 0 dB at 1 kHz. Needs fs >= 44.1 kHz.
FilterCascade a_weighting_cascade(double sample_rate);

/// Analog A-weighting magnitude in dB (the reference curve, 0 dB at 1 kHz).
double a_weighting_analog_db(double freq_hz);

}  // namespace carmic::dsp
