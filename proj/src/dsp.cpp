#include "carmic/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <fmt/core.h>

namespace carmic::dsp {

bool BiquadCoeffs::is_stable() const {
  return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

FilterKind FilterKind::high_pass(double fc, double q) {
  return {FilterType::HighPass2, fc, q, 0.0};
}

FilterKind FilterKind::low_pass(double fc, double q) {
  return {FilterType::LowPass2, fc, q, 0.0};
}

FilterKind FilterKind::peak(double fc, double q, double gain_db) {
  return {FilterType::Peak2, fc, q, gain_db};
}

namespace {

BiquadCoeffs normalized(double b0, double b1, double b2, double a0, double a1, double a2) {
  return {b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0};
}

// Analog section (n2 s^2 + n1 s + n0) / (d2 s^2 + d1 s + d0) mapped with
// s = k (1 - z^-1) / (1 + z^-1).
BiquadCoeffs bilinear(double n2, double n1, double n0, double d2, double d1, double d0, double k) {
  const double kk = k * k;
  return normalized(n2 * kk + n1 * k + n0, 2.0 * (n0 - n2 * kk), n2 * kk - n1 * k + n0,
                    d2 * kk + d1 * k + d0, 2.0 * (d0 - d2 * kk), d2 * kk - d1 * k + d0);
}

std::complex<double> response_at(const BiquadCoeffs& c, double freq, double sample_rate) {
  const double w = 2.0 * std::numbers::pi * freq / sample_rate;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  return (c.b0 + c.b1 * z1 + c.b2 * z2) / (1.0 + c.a1 * z1 + c.a2 * z2);
}

void check_frequencies(std::span<const double> freqs, double sample_rate) {
  for (double f : freqs) {
    if (!(f >= 0.0 && f <= sample_rate / 2.0)) {
      throw Error(fmt::format("frequency {} Hz outside [0, {}]", f, sample_rate / 2.0));
    }
  }
}

}  // namespace

BiquadCoeffs design_biquad(const FilterKind& kind, double sample_rate) {
  if (!(sample_rate > 0.0)) throw Error("sample rate must be positive");
  if (!(kind.fc > 0.0 && kind.fc < sample_rate / 2.0)) {
    throw Error(fmt::format("corner frequency {} Hz must lie in (0, {})", kind.fc,
                            sample_rate / 2.0));
  }
  if (!(kind.q > 0.0) || !std::isfinite(kind.q)) {
    throw Error(fmt::format("q must be positive, got {}", kind.q));
  }

  // Prewarped bilinear transform of the normalized analog prototypes; the
  // tan() mapping puts the analog corner exactly at w0.
  const double w0 = 2.0 * std::numbers::pi * kind.fc / sample_rate;
  const double cw = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * kind.q);

  switch (kind.type) {
    case FilterType::LowPass2:
      return normalized((1.0 - cw) / 2.0, 1.0 - cw, (1.0 - cw) / 2.0, 1.0 + alpha, -2.0 * cw,
                        1.0 - alpha);
    case FilterType::HighPass2:
      return normalized((1.0 + cw) / 2.0, -(1.0 + cw), (1.0 + cw) / 2.0, 1.0 + alpha, -2.0 * cw,
                        1.0 - alpha);
    case FilterType::Peak2: {
      if (!std::isfinite(kind.gain_db)) throw Error("peak gain must be finite");
      const double a = std::pow(10.0, kind.gain_db / 40.0);
      return normalized(1.0 + alpha * a, -2.0 * cw, 1.0 - alpha * a, 1.0 + alpha / a, -2.0 * cw,
                        1.0 - alpha / a);
    }
  }
  throw Error("unknown filter type");
}

std::vector<double> magnitude_response(const BiquadCoeffs& section, std::span<const double> freqs,
                                       double sample_rate) {
  return magnitude_response(FilterCascade{section}, freqs, sample_rate);
}

std::vector<double> magnitude_response(const FilterCascade& cascade,
                                       std::span<const double> freqs, double sample_rate) {
  check_frequencies(freqs, sample_rate);
  std::vector<double> out(freqs.size(), 0.0);
  for (const auto& section : cascade) {
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      out[i] += 20.0 * std::log10(std::abs(response_at(section, freqs[i], sample_rate)));
    }
  }
  return out;
}

std::vector<double> apply_cascade(const FilterCascade& cascade, std::span<const double> input) {
  std::vector<double> y(input.begin(), input.end());
  for (const auto& c : cascade) {
    if (!c.is_stable()) throw Error("refusing to run an unstable biquad section");
    double s1 = 0.0;
    double s2 = 0.0;
    for (double& v : y) {
      const double x = v;
      const double out = c.b0 * x + s1;
      s1 = c.b1 * x - c.a1 * out + s2;
      s2 = c.b2 * x - c.a2 * out;
      v = out;
    }
  }
  return y;
}

AudioBuffer apply_cascade(const FilterCascade& cascade, const AudioBuffer& input) {
  return {apply_cascade(cascade, std::span<const double>(input.samples)), input.sample_rate};
}

namespace {

// FFTW planning is not thread-safe; execution with the new-array API is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
using FftwArray = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwArray<T> fftw_array(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (p == nullptr) throw Error("fftw_malloc failed");
  return FftwArray<T>(p);
}

class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n), time_(fftw_array<double>(n)), freq_(fftw_array<fftw_complex>(n / 2 + 1)) {
    std::lock_guard lock(fftw_planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), time_.get(), freq_.get(), FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), freq_.get(), time_.get(), FFTW_ESTIMATE);
    if (forward_ == nullptr || inverse_ == nullptr) throw Error("FFTW planning failed");
  }
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  double* time() { return time_.get(); }
  fftw_complex* freq() { return freq_.get(); }
  void forward() { fftw_execute_dft_r2c(forward_, time_.get(), freq_.get()); }
  void inverse() { fftw_execute_dft_c2r(inverse_, freq_.get(), time_.get()); }

 private:
  std::size_t n_;
  FftwArray<double> time_;
  FftwArray<fftw_complex> freq_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

constexpr std::size_t kMinFftSize = 64;
constexpr std::size_t kDirectMaxTaps = 32;

}  // namespace

std::vector<double> convolve(std::span<const double> x, std::span<const double> h) {
  if (x.empty() || h.empty()) throw Error("convolve needs nonempty operands");
  const std::size_t out_len = x.size() + h.size() - 1;

  // Trailing zeros contribute nothing; dropping them lets a padded delta
  // take the exact direct path below.
  const auto trim = [](std::span<const double> v) {
    std::size_t n = v.size();
    while (n > 1 && v[n - 1] == 0.0) --n;
    return v.first(n);
  };
  x = trim(x);
  h = trim(h);
  if (h.size() > x.size()) std::swap(x, h);

  if (h.size() <= kDirectMaxTaps) {
    std::vector<double> y(out_len, 0.0);
    for (std::size_t j = 0; j < h.size(); ++j) {
      if (h[j] == 0.0) continue;
      for (std::size_t i = 0; i < x.size(); ++i) y[i + j] += h[j] * x[i];
    }
    return y;
  }

  // Block the longer operand; the kernel spectrum is computed once.
  const std::size_t fft_size =
      std::max(kMinFftSize, std::bit_ceil(std::min(out_len, 2 * h.size())));
  const std::size_t block = fft_size - h.size() + 1;
  const std::size_t bins = fft_size / 2 + 1;

  RealFft fft(fft_size);
  std::fill_n(fft.time(), fft_size, 0.0);
  std::copy(h.begin(), h.end(), fft.time());
  fft.forward();
  std::vector<std::complex<double>> kernel(bins);
  for (std::size_t k = 0; k < bins; ++k) kernel[k] = {fft.freq()[k][0], fft.freq()[k][1]};

  std::vector<double> y(out_len, 0.0);
  const double scale = 1.0 / static_cast<double>(fft_size);
  for (std::size_t start = 0; start < x.size(); start += block) {
    const std::size_t len = std::min(block, x.size() - start);
    std::fill_n(fft.time(), fft_size, 0.0);
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(start), len, fft.time());
    fft.forward();
    for (std::size_t k = 0; k < bins; ++k) {
      const std::complex<double> v =
          std::complex<double>(fft.freq()[k][0], fft.freq()[k][1]) * kernel[k];
      fft.freq()[k][0] = v.real();
      fft.freq()[k][1] = v.imag();
    }
    fft.inverse();
    const std::size_t valid = std::min(len + h.size() - 1, out_len - start);
    for (std::size_t i = 0; i < valid; ++i) y[start + i] += fft.time()[i] * scale;
  }
  return y;
}

AudioBuffer convolve(const AudioBuffer& x, const ImpulseResponse& h) {
  if (x.sample_rate != h.audio.sample_rate) {
    throw Error(fmt::format("sample-rate mismatch: signal {} Hz, impulse response '{}' {} Hz",
                            x.sample_rate, h.label, h.audio.sample_rate));
  }
  return {convolve(std::span<const double>(x.samples), std::span<const double>(h.audio.samples)),
          x.sample_rate};
}

namespace {

constexpr double kAPole1 = 20.598997;
constexpr double kAPole2 = 107.65265;
constexpr double kAPole3 = 737.86223;
constexpr double kAPole4 = 12194.217;

// The high pole pair is prewarped at this frequency rather than at the pole
// itself; it keeps the digital curve within 0.3 dB of the analog one up to
// 10 kHz at 48 kHz.
constexpr double kHighPairMatchHz = 10000.0;

}  // namespace

double a_weighting_analog_db(double f) {
  const auto ra = [](double ff) {
    const double g2 = ff * ff;
    return kAPole4 * kAPole4 * g2 * g2 /
           ((g2 + kAPole1 * kAPole1) * std::sqrt((g2 + kAPole2 * kAPole2) * (g2 + kAPole3 * kAPole3)) *
            (g2 + kAPole4 * kAPole4));
  };
  return 20.0 * std::log10(ra(f) / ra(1000.0));
}

FilterCascade a_weighting_cascade(double sample_rate) {
  if (sample_rate < 44100.0) {
    throw Error(fmt::format("A-weighting needs a sample rate of at least 44100 Hz, got {}",
                            sample_rate));
  }
  const double two_pi = 2.0 * std::numbers::pi;
  const double w1 = two_pi * kAPole1;
  const double w2 = two_pi * kAPole2;
  const double w3 = two_pi * kAPole3;
  const double w4 = two_pi * kAPole4;
  const double k_plain = 2.0 * sample_rate;
  const double wm = two_pi * kHighPairMatchHz;
  const double k_high = wm / std::tan(wm / (2.0 * sample_rate));

  FilterCascade cascade{
      // s^2 / (s + w1)^2
      bilinear(1.0, 0.0, 0.0, 1.0, 2.0 * w1, w1 * w1, k_plain),
      // s^2 / ((s + w2)(s + w3))
      bilinear(1.0, 0.0, 0.0, 1.0, w2 + w3, w2 * w3, k_plain),
      // w4^2 / (s + w4)^2
      bilinear(0.0, 0.0, w4 * w4, 1.0, 2.0 * w4, w4 * w4, k_high),
  };
  const double at_1k = 1000.0;
  const double gain_db = magnitude_response(cascade, std::span(&at_1k, 1), sample_rate)[0];
  const double g = std::pow(10.0, -gain_db / 20.0);
  cascade[0].b0 *= g;
  cascade[0].b1 *= g;
  cascade[0].b2 *= g;
  return cascade;
}

}  // namespace carmic::dsp
