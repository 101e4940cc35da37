#pragma once

// Butterworth low-pass design (bilinear transform, prewarped cutoff, biquad
// cascade), filtering, and one-sided power spectra.

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "stamping/signals.hpp"

namespace stamping::dsp {

struct FilterSpec {
  double cutoff_hz = 1800.0;
  int order = 3;
  double sample_rate_hz = 100000.0;

  /// Throws ValidationError unless 0 < cutoff < Nyquist and order >= 1.
  void validate() const;
};

/// y = b0 x + b1 x[-1] + b2 x[-2] - a1 y[-1] - a2 y[-2]
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  std::complex<double> response(double omega) const;
  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
  /// Poles of 1 + a1 z^-1 + a2 z^-2 (a first-order section has one pole at 0).
  std::array<std::complex<double>, 2> poles() const;
};

struct BiquadCascade {
  std::vector<Biquad> sections;
  double overall_gain = 1.0;
  double sample_rate_hz = 100000.0;

  std::complex<double> response(double freq_hz) const;
  double magnitude(double freq_hz) const { return std::abs(response(freq_hz)); }
  double magnitude_db(double freq_hz) const;
  /// Number of non-trivial poles.
  int order() const;
};

BiquadCascade design_butterworth_lowpass(const FilterSpec& spec);

/// |H| of the analog prototype: 1 / sqrt(1 + (f/fc)^(2n)).
double analog_butterworth_magnitude(double freq_hz, double cutoff_hz, int order);

enum class FilterMode { Causal, ZeroPhase };

/// Samples of reflection padding applied at each end in zero-phase mode.
std::size_t zero_phase_padding(const BiquadCascade& cascade);

/// Causal: single forward pass. ZeroPhase: forward-backward with odd reflection
/// padding. Section states start in steady state for the first sample, so a
/// constant input passes through unchanged. Throws LengthError when a
/// zero-phase input has no more than 3 * order samples.
std::vector<double> filter_samples(const BiquadCascade& cascade, std::span<const double> samples, FilterMode mode);

signals::StrokeSignal apply_filter(const BiquadCascade& cascade, const signals::StrokeSignal& signal, FilterMode mode);

enum class Window { Rectangular, Hann };

struct PowerSpectrum {
  std::vector<double> freqs_hz;
  std::vector<double> power;

  double total() const;
  /// Sum of the bins whose centre lies in [low_hz, high_hz).
  double band_power(double low_hz, double high_hz) const;
  double bin_width_hz() const { return freqs_hz.size() > 1 ? freqs_hz[1] - freqs_hz[0] : 0.0; }
};

/// One-sided periodogram of the window-weighted signal, scaled so the bins sum
/// to the mean square of x * w / rms(w). Throws LengthError below 8 samples.
PowerSpectrum power_spectrum(std::span<const double> samples, double sample_rate_hz, Window window);
PowerSpectrum power_spectrum(const signals::StrokeSignal& signal, Window window);

}  // namespace stamping::dsp
