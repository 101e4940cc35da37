#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>

#include "stamping/dsp.hpp"
#include "stamping/error.hpp"
#include "test_util.hpp"

using namespace stamping;
using namespace stamping::dsp;

namespace {

constexpr double kRate = 100000.0;

double rms(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

// Direct evaluation of the cascade polynomial, independent of Biquad::response.
double cascade_magnitude(const BiquadCascade& c, double f) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / c.sample_rate_hz);
  std::complex<double> h = c.overall_gain;
  for (const auto& q : c.sections) h *= (q.b0 + q.b1 * z1 + q.b2 * z1 * z1) / (1.0 + q.a1 * z1 + q.a2 * z1 * z1);
  return std::abs(h);
}

}  // namespace

TEST_CASE("filter spec validation") {
  CHECK_NOTHROW(FilterSpec{}.validate());
  CHECK_THROWS_AS((FilterSpec{50000.0, 3, kRate}.validate()), ValidationError);
  CHECK_THROWS_AS((FilterSpec{0.0, 3, kRate}.validate()), ValidationError);
  CHECK_THROWS_AS((FilterSpec{1800.0, 0, kRate}.validate()), ValidationError);
  CHECK_THROWS_AS(design_butterworth_lowpass({60000.0, 2, kRate}), ValidationError);
}

TEST_CASE("paper filter: cutoff, DC and analog curve") {
  const auto c = design_butterworth_lowpass({1800.0, 3, kRate});
  CHECK(c.order() == 3);
  CHECK(cascade_magnitude(c, 1800.0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));
  CHECK(c.magnitude_db(1800.0) == doctest::Approx(-3.0103).epsilon(1e-4));
  CHECK(cascade_magnitude(c, 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(analog_butterworth_magnitude(3600.0, 1800.0, 3) == doctest::Approx(1.0 / std::sqrt(65.0)).epsilon(1e-12));
  const double analog_db = 20.0 * std::log10(1.0 / std::sqrt(65.0));
  CHECK(std::abs(c.magnitude_db(3600.0) - analog_db) < 0.5);
}

TEST_CASE("prewarped cutoff, unit DC gain and stability over random specs") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> frac(0.001, 0.49);
  std::uniform_int_distribution<int> ord(1, 12);
  std::uniform_real_distribution<double> rate(1000.0, 200000.0);
  for (int trial = 0; trial < 300; ++trial) {
    FilterSpec spec;
    spec.sample_rate_hz = rate(rng);
    spec.cutoff_hz = frac(rng) * spec.sample_rate_hz;
    spec.order = ord(rng);
    const auto c = design_butterworth_lowpass(spec);
    CHECK(c.order() == spec.order);
    CHECK(std::abs(cascade_magnitude(c, spec.cutoff_hz) - 1.0 / std::sqrt(2.0)) < 1e-6);
    CHECK(std::abs(c.magnitude(spec.cutoff_hz) - 1.0 / std::sqrt(2.0)) < 1e-6);
    CHECK(std::abs(cascade_magnitude(c, 0.0) - 1.0) < 1e-9);
    for (const auto& q : c.sections)
      for (auto p : q.poles()) CHECK(std::abs(p) < 1.0);
  }
}

TEST_CASE("magnitude is non-increasing up to Nyquist") {
  for (int order = 1; order <= 12; ++order) {
    const auto c = design_butterworth_lowpass({1800.0, order, kRate});
    double prev = c.magnitude(0.0);
    for (int i = 1; i <= 5000; ++i) {
      const double m = c.magnitude(kRate / 2.0 * i / 5000.0);
      REQUIRE(m <= prev + 1e-12);
      prev = m;
    }
  }
}

TEST_CASE("digital response tracks the analog curve") {
  // Bilinear warping keeps orders 1-6 within 1 dB out to 4 fc only while fc
  // stays below about 1.98 kHz at 100 kHz; the sampled range reflects that.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> cutoff(100.0, 1950.0);
  for (int trial = 0; trial < 60; ++trial) {
    for (int order = 1; order <= 6; ++order) {
      const double fc = trial == 0 ? 1800.0 : cutoff(rng);
      const auto c = design_butterworth_lowpass({fc, order, kRate});
      const double fmax = std::min(4.0 * fc, 0.4 * kRate);
      for (int i = 1; i <= 400; ++i) {
        const double f = fmax * i / 400.0;
        const double diff = std::abs(c.magnitude_db(f) - 20.0 * std::log10(analog_butterworth_magnitude(f, fc, order)));
        REQUIRE(diff < (f <= fc ? 0.5 : 1.0));
      }
    }
  }
}

TEST_CASE("constant input passes unchanged") {
  const auto c = design_butterworth_lowpass({1800.0, 3, kRate});
  std::vector<double> x(2000, 2.5);
  for (auto mode : {FilterMode::Causal, FilterMode::ZeroPhase}) {
    const auto y = filter_samples(c, x, mode);
    REQUIRE(y.size() == x.size());
    for (double v : y) REQUIRE(std::abs(v - 2.5) < 1e-6);
  }
}

TEST_CASE("stopband sinusoid is attenuated") {
  const auto c = design_butterworth_lowpass({1800.0, 3, kRate});
  const auto x = testutil::sine(20000, 18000.0, kRate);
  const auto y = filter_samples(c, x, FilterMode::Causal);
  const std::span<const double> tail(y.data() + 10000, 10000);
  const double atten_db = 20.0 * std::log10(rms(x) / rms(tail));
  CHECK(atten_db >= 55.0);
  CHECK(atten_db == doctest::Approx(-c.magnitude_db(18000.0)).epsilon(0.01));
}

TEST_CASE("zero-phase filtering keeps a passband tone aligned") {
  const auto c = design_butterworth_lowpass({1800.0, 3, kRate});
  const auto x = testutil::sine(20000, 200.0, kRate);
  const auto y = filter_samples(c, x, FilterMode::ZeroPhase);
  const double gain = c.magnitude(200.0) * c.magnitude(200.0);
  double err = 0.0;
  for (std::size_t i = 2000; i < 18000; ++i) err = std::max(err, std::abs(y[i] - gain * x[i]));
  CHECK(err < 1e-3);
  CHECK_THROWS_AS(filter_samples(c, std::vector<double>(9, 1.0), FilterMode::ZeroPhase), LengthError);
  CHECK(zero_phase_padding(c) == 12);
}

TEST_CASE("filtering is linear") {
  const auto c = design_butterworth_lowpass({1800.0, 4, kRate});
  const auto x = testutil::gaussian_noise(4000, 5);
  const auto y = testutil::gaussian_noise(4000, 6);
  const double a = 1.7, b = -0.4;
  std::vector<double> mix(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
  for (auto mode : {FilterMode::Causal, FilterMode::ZeroPhase}) {
    const auto fx = filter_samples(c, x, mode);
    const auto fy = filter_samples(c, y, mode);
    const auto fm = filter_samples(c, mix, mode);
    double err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(fm[i] - (a * fx[i] + b * fy[i])));
    CHECK(err < 1e-9);
  }
}

TEST_CASE("apply_filter keeps metadata") {
  const auto c = design_butterworth_lowpass({1800.0, 3, kRate});
  auto s = testutil::make_stroke("m", testutil::gaussian_noise(500, 1), signals::Label::Anomaly);
  const auto f = apply_filter(c, s, FilterMode::Causal);
  CHECK(f.stroke_id == "m");
  CHECK(f.label == signals::Label::Anomaly);
  CHECK(f.samples.size() == 500);
}

TEST_CASE("filtered white noise concentrates below 2.5 kHz") {
  const auto c = design_butterworth_lowpass({1800.0, 3, kRate});
  const auto x = testutil::gaussian_noise(17500, 8);
  for (auto mode : {FilterMode::Causal, FilterMode::ZeroPhase}) {
    const auto y = filter_samples(c, x, mode);
    const auto ps = power_spectrum(y, kRate, Window::Hann);
    CHECK(ps.band_power(0.0, 2500.0) / ps.total() >= 0.95);
  }
}

TEST_CASE("power spectrum: Parseval, peaks and zeros") {
  for (std::size_t n : {8u, 9u, 1000u, 17321u}) {
    const auto x = testutil::gaussian_noise(n, n);
    const auto rect = power_spectrum(x, kRate, Window::Rectangular);
    double ms = 0.0;
    for (double v : x) ms += v * v;
    ms /= static_cast<double>(n);
    CHECK(rect.total() == doctest::Approx(ms).epsilon(1e-6));

    // Periodic Hann window, gain-compensated to unit mean square.
    std::vector<double> w(n);
    double wss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
      wss += w[i] * w[i];
    }
    const double wrms = std::sqrt(wss / static_cast<double>(n));
    double hms = 0.0;
    for (std::size_t i = 0; i < n; ++i) hms += std::pow(x[i] * w[i] / wrms, 2);
    hms /= static_cast<double>(n);
    const auto hann = power_spectrum(x, kRate, Window::Hann);
    CHECK(hann.total() == doctest::Approx(hms).epsilon(1e-6));

    REQUIRE(hann.freqs_hz.size() == hann.power.size());
    CHECK(hann.freqs_hz.front() == 0.0);
    CHECK(hann.freqs_hz.back() <= kRate / 2.0);
    CHECK(std::is_sorted(hann.freqs_hz.begin(), hann.freqs_hz.end()));
    for (double p : hann.power) CHECK(p >= 0.0);
  }

  const auto tone = testutil::sine(17000, 2000.0, kRate);
  const auto ps = power_spectrum(tone, kRate, Window::Hann);
  const auto peak = std::max_element(ps.power.begin(), ps.power.end()) - ps.power.begin();
  CHECK(std::abs(ps.freqs_hz[static_cast<std::size_t>(peak)] - 2000.0) <= ps.bin_width_hz());

  const auto zero = power_spectrum(std::vector<double>(64, 0.0), kRate, Window::Hann);
  for (double p : zero.power) CHECK(p == 0.0);
  CHECK_THROWS_AS(power_spectrum(std::vector<double>(7, 1.0), kRate, Window::Hann), LengthError);
}

TEST_CASE("synthetic stroke shows the three burst bands") {
  const auto s = signals::synthesize_stroke(signals::GeneratorParams{}, signals::Label::Normal, 21);
  const auto ps = power_spectrum(s, Window::Hann);
  auto density = [&](double lo, double hi) { return ps.band_power(lo, hi) / (hi - lo); };
  const double gaps[] = {density(1000.0, 1800.0), density(4000.0, 6000.0), density(7000.0, 9000.0)};
  const double loudest_gap = *std::max_element(std::begin(gaps), std::end(gaps));
  CHECK(density(1800.0, 2500.0) > 10.0 * loudest_gap);
  CHECK(density(2500.0, 4000.0) > 10.0 * loudest_gap);
  CHECK(density(6000.0, 7000.0) > 10.0 * loudest_gap);
  CHECK(density(2500.0, 4000.0) > density(4000.0, 6000.0));
  CHECK(density(6000.0, 7000.0) > density(4000.0, 6000.0));
  CHECK(density(6000.0, 7000.0) > density(7000.0, 9000.0));
}
