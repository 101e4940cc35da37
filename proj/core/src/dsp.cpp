#include "stamping/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>

#include "stamping/error.hpp"

namespace stamping::dsp {

using std::numbers::pi;

void FilterSpec::validate() const {
  if (!(sample_rate_hz > 0.0)) throw ValidationError("filter sample rate must be positive");
  if (order < 1) throw ValidationError("filter order must be >= 1");
  if (!(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0))
    throw ValidationError("cutoff " + std::to_string(cutoff_hz) + " Hz must lie in (0, Nyquist)");
}

std::complex<double> Biquad::response(double omega) const {
  const auto z1 = std::polar(1.0, -omega);
  const auto z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

std::array<std::complex<double>, 2> Biquad::poles() const {
  // z^2 + a1 z + a2 = 0
  const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2));
  return {(-a1 + disc) / 2.0, (-a1 - disc) / 2.0};
}

std::complex<double> BiquadCascade::response(double freq_hz) const {
  const double omega = 2.0 * pi * freq_hz / sample_rate_hz;
  std::complex<double> h = overall_gain;
  for (const auto& s : sections) h *= s.response(omega);
  return h;
}

double BiquadCascade::magnitude_db(double freq_hz) const { return 20.0 * std::log10(magnitude(freq_hz)); }

int BiquadCascade::order() const {
  int n = 0;
  for (const auto& s : sections) n += s.a2 != 0.0 ? 2 : (s.a1 != 0.0 ? 1 : 0);
  return n;
}

BiquadCascade design_butterworth_lowpass(const FilterSpec& spec) {
  spec.validate();
  const int n = spec.order;
  const double k = 2.0 * spec.sample_rate_hz;
  // Prewarp so the digital response crosses 1/sqrt(2) exactly at the cutoff.
  const double warped = k * std::tan(pi * spec.cutoff_hz / spec.sample_rate_hz);

  BiquadCascade cascade;
  cascade.sample_rate_hz = spec.sample_rate_hz;
  for (int i = 1; i <= n / 2; ++i) {
    const auto s = std::polar(warped, pi * (2.0 * i + n - 1.0) / (2.0 * n));
    const auto z = (k + s) / (k - s);
    Biquad q;
    q.a1 = -2.0 * z.real();
    q.a2 = std::norm(z);
    const double g = (1.0 + q.a1 + q.a2) / 4.0;
    q.b0 = g;
    q.b1 = 2.0 * g;
    q.b2 = g;
    cascade.sections.push_back(q);
  }
  if (n % 2 == 1) {
    const double z = (k - warped) / (k + warped);
    Biquad q;
    q.a1 = -z;
    const double g = (1.0 + q.a1) / 2.0;
    q.b0 = g;
    q.b1 = g;
    cascade.sections.push_back(q);
  }
  return cascade;
}

double analog_butterworth_magnitude(double freq_hz, double cutoff_hz, int order) {
  return 1.0 / std::sqrt(1.0 + std::pow(freq_hz / cutoff_hz, 2.0 * order));
}

std::size_t zero_phase_padding(const BiquadCascade& cascade) { return 3 * 2 * cascade.sections.size(); }

namespace {

// Direct form II transposed, states initialised to the steady state for a
// constant input equal to `x0`.
void run_cascade(const BiquadCascade& cascade, std::vector<double>& x) {
  if (x.empty()) return;
  const double x0 = x.front();
  for (const auto& q : cascade.sections) {
    const double y0 = q.dc_gain() * x0;
    double s2 = q.b2 * x0 - q.a2 * y0;
    double s1 = y0 - q.b0 * x0;
    for (double& v : x) {
      const double in = v;
      const double out = q.b0 * in + s1;
      s1 = q.b1 * in - q.a1 * out + s2;
      s2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
  if (cascade.overall_gain != 1.0)
    for (double& v : x) v *= cascade.overall_gain;
}

}  // namespace

std::vector<double> filter_samples(const BiquadCascade& cascade, std::span<const double> samples, FilterMode mode) {
  if (mode == FilterMode::Causal) {
    std::vector<double> y(samples.begin(), samples.end());
    run_cascade(cascade, y);
    return y;
  }
  const std::size_t n = samples.size();
  if (n <= static_cast<std::size_t>(3 * cascade.order()))
    throw LengthError("zero-phase filtering needs more than " + std::to_string(3 * cascade.order()) +
                      " samples, got " + std::to_string(n));
  const std::size_t pad = std::min(zero_phase_padding(cascade), n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * samples[0] - samples[i]);
  ext.insert(ext.end(), samples.begin(), samples.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * samples[n - 1] - samples[n - 1 - i]);

  run_cascade(cascade, ext);
  std::reverse(ext.begin(), ext.end());
  run_cascade(cascade, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

signals::StrokeSignal apply_filter(const BiquadCascade& cascade, const signals::StrokeSignal& signal,
                                   FilterMode mode) {
  signals::StrokeSignal out = signal;
  out.samples = filter_samples(cascade, signal.samples, mode);
  return out;
}

// ---------------------------------------------------------------------------

double PowerSpectrum::total() const { return std::accumulate(power.begin(), power.end(), 0.0); }

double PowerSpectrum::band_power(double low_hz, double high_hz) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < freqs_hz.size(); ++i)
    if (freqs_hz[i] >= low_hz && freqs_hz[i] < high_hz) sum += power[i];
  return sum;
}

namespace {
// Plan creation and destruction are not thread-safe in FFTW; execution is.
std::mutex fftw_planner_mutex;
}  // namespace

PowerSpectrum power_spectrum(std::span<const double> samples, double sample_rate_hz, Window window) {
  const std::size_t n = samples.size();
  if (n < 8) throw LengthError("power spectrum needs at least 8 samples");

  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  double w_ms = 1.0;
  if (window == Window::Hann) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(n));
      in[i] = samples[i] * w;
      acc += w * w;
    }
    w_ms = acc / static_cast<double>(n);
  } else {
    std::copy(samples.begin(), samples.end(), in);
  }
  fftw_execute(plan);

  PowerSpectrum ps;
  const std::size_t bins = n / 2 + 1;
  ps.freqs_hz.resize(bins);
  ps.power.resize(bins);
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(n) * w_ms);
  for (std::size_t k = 0; k < bins; ++k) {
    const double mag2 = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    const bool mirrored = k != 0 && !(n % 2 == 0 && k == n / 2);
    ps.freqs_hz[k] = static_cast<double>(k) * sample_rate_hz / static_cast<double>(n);
    ps.power[k] = (mirrored ? 2.0 : 1.0) * mag2 * norm;
  }
  {
    std::lock_guard lock(fftw_planner_mutex);
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return ps;
}

PowerSpectrum power_spectrum(const signals::StrokeSignal& signal, Window window) {
  return power_spectrum(signal.samples, signal.sample_rate_hz, window);
}

}  // namespace stamping::dsp
