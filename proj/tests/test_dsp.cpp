#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "phasesync/dsp.hpp"
#include "phasesync/noise.hpp"
#include "phasesync/rng.hpp"

using namespace phasesync;
using Catch::Approx;

TEST_CASE("welch integral reproduces white-noise variance", "[dsp][welch]") {
  Rng rng(101);
  TimeSeries ts = make_series(1.0e-4, 1 << 16);
  for (auto& x : ts.samples) x = rng.gaussian();
  const double var = ts.std_dev() * ts.std_dev();
  PSDEstimate psd = welch_psd(ts, {});
  CHECK(psd.integral() == Approx(var).epsilon(0.05));
  for (double d : psd.density) CHECK(d >= 0.0);
  for (std::size_t k = 1; k < psd.frequencies.size(); ++k)
    REQUIRE(psd.frequencies[k] > psd.frequencies[k - 1]);
}

TEST_CASE("welch localizes a pure tone with its full power", "[dsp][welch]") {
  const double fs = 32768.0;
  const double amp = 0.7;
  const double f0 = 1000.0;
  TimeSeries ts = make_series(1.0 / fs, 1 << 15);
  for (std::size_t k = 0; k < ts.size(); ++k)
    ts.samples[k] = amp * std::cos(two_pi * f0 * ts.time_at(k) + 0.3);
  PSDEstimate psd = welch_psd(ts, {});

  std::size_t peak = 1;
  for (std::size_t k = 1; k < psd.density.size(); ++k)
    if (psd.density[k] > psd.density[peak]) peak = k;
  CHECK(psd.frequencies[peak] == Approx(f0).margin(psd.df));

  double power = 0.0;
  for (std::size_t k = peak >= 3 ? peak - 3 : 0; k <= peak + 3; ++k)
    power += psd.density[k] * psd.df;
  CHECK(power == Approx(amp * amp / 2.0).epsilon(0.03));
}

TEST_CASE("welch parameter validation", "[dsp][welch]") {
  TimeSeries ts = make_series(1.0e-3, 64);
  WelchParams bad;
  bad.overlap = 1.0;
  CHECK_THROWS_AS(welch_psd(ts, bad), std::invalid_argument);
  CHECK_THROWS_AS(welch_psd(make_series(1.0e-3, 4), {}), std::invalid_argument);
}

TEST_CASE("hilbert phase recovers a tone", "[dsp][hilbert]") {
  const double fs = 100000.0;
  const double f0 = 1000.0;
  TimeSeries ts = make_series(1.0 / fs, 8192);
  for (std::size_t k = 0; k < ts.size(); ++k)
    ts.samples[k] = std::sin(two_pi * f0 * ts.time_at(k) + 0.9);
  TimeSeries phase = interior_view(hilbert_phase(ts));
  // instantaneous frequency from the unwrapped phase slope
  for (std::size_t k = 1; k < phase.size(); ++k) {
    const double f_inst = (phase.samples[k] - phase.samples[k - 1]) / (two_pi * phase.dt);
    REQUIRE(f_inst == Approx(f0).epsilon(0.01));
  }
}

TEST_CASE("hilbert phase tracks a linear chirp", "[dsp][hilbert]") {
  const double fs = 16384.0;
  const std::size_t n = 16384;
  const double f1 = 500.0, f2 = 1500.0, span = static_cast<double>(n) / fs;
  TimeSeries ts = make_series(1.0 / fs, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = ts.time_at(k);
    ts.samples[k] = std::cos(two_pi * (f1 * t + 0.5 * (f2 - f1) * t * t / span));
  }
  TimeSeries phase = hilbert_phase(ts);
  const std::size_t mid = n / 2;
  const double f_mid = (phase.samples[mid + 8] - phase.samples[mid - 8]) /
                       (two_pi * 16.0 * ts.dt);
  CHECK(f_mid == Approx(0.5 * (f1 + f2)).epsilon(0.01));
}

TEST_CASE("hilbert phase rejects degenerate input", "[dsp][hilbert]") {
  TimeSeries flat = make_series(1.0e-3, 128);
  CHECK_THROWS_AS(hilbert_phase(flat), std::invalid_argument);
}

TEST_CASE("cumulative spectrum is monotone and totals the rms", "[dsp]") {
  TimeSeries ts = gen_mechanical_noise({{{120.0, 10.0, 0.3}, {700.0, 25.0, 0.2}}},
                                       1.0e-4, 1 << 16, 4242);
  PSDEstimate psd = welch_psd(ts, {});
  CumulativeSpectrum low = cumulative_csd(psd, false);
  CumulativeSpectrum high = cumulative_csd(psd, true);

  for (std::size_t k = 1; k < low.rms.size(); ++k) {
    REQUIRE(low.rms[k] >= low.rms[k - 1]);
    REQUIRE(high.rms[k] <= high.rms[k - 1]);
  }
  CHECK(low.rms.back() == Approx(high.rms.front()).epsilon(1e-12));
  CHECK(low.rms.back() == Approx(ts.std_dev()).epsilon(0.05));
}

namespace {

// One-pole plant with static gain, strict one-step feedback delay:
//   y[k] = P(d[k] + u[k]) + eta[k],   u[k] = -Kc * y[k-1]
// so L(z) = Kc * P(z) * z^-1 with P(z) = gp*(1-p)/(1 - p z^-1).
struct SyntheticLoop {
  double dt = 1.0e-5;
  double pole_hz = 500.0;
  double gp = 10.0;
  double kc = 1.2;

  std::complex<double> open_loop_at(double f_hz) const {
    const double p = std::exp(-two_pi * pole_hz * dt);
    const std::complex<double> z = std::polar(1.0, two_pi * f_hz * dt);
    const std::complex<double> zinv = 1.0 / z;
    return kc * gp * (1.0 - p) / (1.0 - p * zinv) * zinv;
  }

  // returns measured output; feedback_on selects closed/open loop
  TimeSeries run(const TimeSeries& injected, const TimeSeries& ambient,
                 bool feedback_on) const {
    const double p = std::exp(-two_pi * pole_hz * dt);
    TimeSeries y = make_series(dt, injected.size());
    double state = 0.0, y_prev = 0.0;
    for (std::size_t k = 0; k < injected.size(); ++k) {
      const double u = feedback_on ? -kc * y_prev : 0.0;
      state = p * state + gp * (1.0 - p) * (injected.samples[k] + u);
      y.samples[k] = state + ambient.samples[k];
      y_prev = y.samples[k];
    }
    return y;
  }
};

}  // namespace

TEST_CASE("transfer function estimation recovers a known loop", "[dsp][tf]") {
  SyntheticLoop loop;
  const std::size_t n = 1 << 17;
  TimeSeries injected = gen_identification_noise(1.0, 0.0, loop.dt, n, 77001);
  // ambient dominated by low frequencies so coherence dips there
  TimeSeries ambient = gen_thermal_drift(8.0, loop.dt, n, 77002);

  TimeSeries y_on = loop.run(injected, ambient, true);
  TimeSeries y_off = loop.run(injected, ambient, false);
  IdentificationEstimate est = estimate_tf(injected, y_on, y_off, {}, 0.9);

  std::size_t checked = 0;
  for (std::size_t k = 2; k < est.open_loop.frequencies.size(); ++k) {
    const double f = est.open_loop.frequencies[k];
    if (f < 50.0 || f > 20000.0) continue;
    if (est.open_loop.coherence[k] < 0.9) continue;
    const double mag_true = std::abs(loop.open_loop_at(f));
    const double mag_est = std::abs(est.open_loop.response[k]);
    INFO("f = " << f);
    REQUIRE(mag_est == Approx(mag_true).epsilon(0.05));
    ++checked;
  }
  CHECK(checked > 200);

  // analytic -3 dB point of |1/(1+L)| by bisection on the same grid
  double f_lo = 10.0, f_hi = 45000.0;
  auto s_mag = [&](double f) { return 1.0 / std::abs(1.0 + loop.open_loop_at(f)); };
  REQUIRE(s_mag(f_lo) < 1.0 / std::sqrt(2.0));
  REQUIRE(s_mag(f_hi) > 1.0 / std::sqrt(2.0));
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (f_lo + f_hi);
    (s_mag(mid) < 1.0 / std::sqrt(2.0) ? f_lo : f_hi) = mid;
  }
  CHECK(est.bandwidth_hz == Approx(0.5 * (f_lo + f_hi)).epsilon(0.05));
}

TEST_CASE("estimate_tf rejects mismatched records", "[dsp][tf]") {
  TimeSeries a = make_series(1e-4, 4096);
  TimeSeries b = make_series(1e-4, 2048);
  CHECK_THROWS_AS(estimate_tf(a, b, a, {}), std::invalid_argument);
  TimeSeries c = make_series(2e-4, 4096);
  CHECK_THROWS_AS(estimate_tf(a, a, c, {}), std::invalid_argument);
}

TEST_CASE("fringe fit on noiseless data is exact", "[dsp][fringe]") {
  std::vector<double> mu, r1, r2;
  for (int j = 0; j < 9; ++j) {
    const double m = two_pi * j / 9.0;
    mu.push_back(m);
    r1.push_back(50.0 * (1.0 + std::cos(m)));
    r2.push_back(50.0 * (1.0 - std::cos(m)));
  }
  FringeFit fit = fit_fringe(mu, r1, r2);
  CHECK(fit.contrast == Approx(1.0).margin(1e-12));
  CHECK(fit.phase_offset_rad == Approx(0.0).margin(1e-12));
  CHECK(fit.amplitude1 == Approx(100.0).margin(1e-9));
  CHECK(fit.residual_rms < 1e-12);
}

TEST_CASE("fringe fit recovers offset and ignores detector imbalance", "[dsp][fringe]") {
  const double c_true = 0.82, phi0 = 0.4;
  std::vector<double> mu, r1, r2, r1_scaled;
  for (int j = 0; j < 11; ++j) {
    const double m = two_pi * j / 11.0;
    mu.push_back(m);
    r1.push_back(40.0 * (1.0 + c_true * std::cos(m + phi0)));
    r2.push_back(40.0 * (1.0 - c_true * std::cos(m + phi0)));
    r1_scaled.push_back(1.5 * r1.back());
  }
  FringeFit fit = fit_fringe(mu, r1, r2);
  CHECK(fit.contrast == Approx(c_true).margin(1e-10));
  CHECK(fit.phase_offset_rad == Approx(phi0).margin(1e-10));

  FringeFit skew = fit_fringe(mu, r1_scaled, r2);
  CHECK(skew.contrast == Approx(c_true).margin(1e-10));
  CHECK(skew.phase_offset_rad == Approx(phi0).margin(1e-10));
  CHECK(skew.amplitude1 == Approx(1.5 * fit.amplitude1).epsilon(1e-9));
}

TEST_CASE("gaussian jitter shrinks contrast as predicted", "[dsp][fringe]") {
  // Monte Carlo oracle: average the cosine over normal draws directly
  const double sigma = deg_to_rad(35.5);
  Rng rng(8181);
  const std::size_t draws = 200000;
  std::vector<double> jitter(draws);
  for (auto& x : jitter) x = sigma * rng.gaussian();

  std::vector<double> mu, r1, r2;
  for (int j = 0; j < 9; ++j) {
    const double m = two_pi * j / 9.0;
    double acc = 0.0;
    for (double x : jitter) acc += std::cos(m + x);
    acc /= static_cast<double>(draws);
    mu.push_back(m);
    r1.push_back(80.0 * (1.0 + acc));
    r2.push_back(80.0 * (1.0 - acc));
  }
  FringeFit fit = fit_fringe(mu, r1, r2);
  CHECK(fit.contrast == Approx(0.8253505682912137).margin(0.02));
  CHECK(rad_to_deg(sigma_from_contrast(fit.contrast)) == Approx(35.5).margin(1.5));
}

TEST_CASE("fringe fit preconditions", "[dsp][fringe]") {
  std::vector<double> mu{0.0, 0.5, 1.0, 1.5};
  std::vector<double> r(4, 1.0);
  CHECK_THROWS_AS(fit_fringe(mu, r, r), std::invalid_argument);  // too few
  std::vector<double> narrow{0.0, 0.3, 0.6, 0.9, 1.2};
  std::vector<double> r5(5, 1.0);
  CHECK_THROWS_AS(fit_fringe(narrow, r5, r5), std::invalid_argument);  // span <= pi
  std::vector<double> wide{0.0, 1.0, 2.0, 3.0, 4.0};
  std::vector<double> neg{1.0, 1.0, -0.1, 1.0, 1.0};
  CHECK_THROWS_AS(fit_fringe(wide, neg, r5), std::invalid_argument);
}

TEST_CASE("contrast and sigma conversions invert", "[dsp]") {
  CHECK(sigma_from_contrast(1.0) == Approx(0.0).margin(1e-12));
  CHECK(rad_to_deg(sigma_from_contrast(0.825)) == Approx(35.539264785497366).epsilon(1e-9));
  for (double s : {0.1, 0.3, 0.62, 1.0}) {
    CHECK(sigma_from_contrast(contrast_from_sigma(s)) == Approx(s).epsilon(1e-12));
  }
  CHECK_THROWS_AS(sigma_from_contrast(0.0), std::invalid_argument);
  CHECK_THROWS_AS(sigma_from_contrast(1.5), std::invalid_argument);
}

TEST_CASE("quadrature combination of loop residuals", "[dsp]") {
  std::vector<SigmaComponent> comps{
      {"node-local", 12.0, 2}, {"arm-fast", 21.0, 2}, {"midpoint", 8.0, 1}};
  CHECK(combine_sigmas(comps) == Approx(35.12833614050059).epsilon(1e-12));
  CHECK(combine_sigmas({}) == 0.0);
  CHECK_THROWS_AS(combine_sigmas({{"bad", -1.0, 1}}), std::invalid_argument);
}
