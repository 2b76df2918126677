#pragma once

// Measurement-analysis chain: Welch spectra, analytic-signal phase,
// cumulative spectral density, closed/open-loop transfer function estimation
// against a known injected signal, and interference-fringe fitting.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasesync/constants.hpp"
#include "phasesync/fft.hpp"
#include "phasesync/time_series.hpp"

namespace phasesync {

enum class Window { hann, rectangular };

struct WelchParams {
  std::size_t segment_length = 0;  // 0: record length / 8
  double overlap = 0.5;            // fraction of segment_length
  Window window = Window::hann;
};

struct PSDEstimate {
  std::vector<double> frequencies;  // Hz, one-sided, starts at 0
  std::vector<double> density;      // unit^2 / Hz
  double df = 0.0;
  std::size_t segment_length = 0;
  std::size_t segment_count = 0;
  std::string unit = "rad^2/Hz";

  // trapezoid-free direct sum; integral of density over the grid
  double integral() const {
    double acc = 0.0;
    for (double d : density) acc += d;
    return acc * df;
  }
};

struct TransferFunctionEstimate {
  std::vector<double> frequencies;            // Hz
  std::vector<std::complex<double>> response;
  std::vector<double> coherence;              // 0..1 per bin
};

struct FringeFit {
  double contrast = 0.0;
  double phase_offset_rad = 0.0;
  double amplitude1 = 0.0;  // per-detector full fringe amplitude (rate units)
  double amplitude2 = 0.0;
  double residual_rms = 0.0;  // normalized model residual
};

namespace detail {

inline std::vector<double> make_window(Window w, std::size_t n) {
  std::vector<double> win(n, 1.0);
  if (w == Window::hann) {
    for (std::size_t k = 0; k < n; ++k)
      win[k] = 0.5 - 0.5 * std::cos(two_pi * static_cast<double>(k) / static_cast<double>(n));
  }
  return win;
}

struct SegmentPlan {
  std::size_t length = 0;
  std::size_t hop = 0;
  std::size_t count = 0;
  std::vector<double> window;
  double window_power = 0.0;  // sum of w^2
};

inline SegmentPlan plan_segments(std::size_t record_length, const WelchParams& p) {
  if (record_length < 8) throw std::invalid_argument("record too short for spectral estimate");
  std::size_t seg = p.segment_length ? p.segment_length : record_length / 8;
  seg = std::min(seg, record_length);
  if (seg < 4) throw std::invalid_argument("segment length too short");
  if (p.overlap < 0.0 || p.overlap >= 1.0)
    throw std::invalid_argument("overlap must be in [0,1)");
  SegmentPlan plan;
  plan.length = seg;
  plan.hop = std::max<std::size_t>(1, static_cast<std::size_t>(
                                          std::lround(static_cast<double>(seg) * (1.0 - p.overlap))));
  plan.count = 1 + (record_length - seg) / plan.hop;
  plan.window = make_window(p.window, seg);
  for (double w : plan.window) plan.window_power += w * w;
  return plan;
}

}  // namespace detail

// Welch one-sided power spectral density. Normalized so that the integral of
// the density over frequency reproduces the windowed mean square of the
// record (Parseval), with DC and Nyquist bins counted once.
inline PSDEstimate welch_psd(const TimeSeries& ts, const WelchParams& params = {}) {
  if (ts.dt <= 0.0) throw std::invalid_argument("time series dt must be positive");
  const auto plan = detail::plan_segments(ts.size(), params);
  const double fs = 1.0 / ts.dt;
  const std::size_t nbins = plan.length / 2 + 1;

  PSDEstimate psd;
  psd.segment_length = plan.length;
  psd.segment_count = plan.count;
  psd.df = fs / static_cast<double>(plan.length);
  psd.frequencies.resize(nbins);
  for (std::size_t k = 0; k < nbins; ++k) psd.frequencies[k] = psd.df * static_cast<double>(k);
  psd.density.assign(nbins, 0.0);
  psd.unit = ts.unit + "^2/Hz";

  std::vector<fft::cplx> buf(plan.length);
  for (std::size_t s = 0; s < plan.count; ++s) {
    const double* x = ts.samples.data() + s * plan.hop;
    for (std::size_t k = 0; k < plan.length; ++k)
      buf[k] = fft::cplx(x[k] * plan.window[k], 0.0);
    fft::transform(buf, false);
    for (std::size_t k = 0; k < nbins; ++k) psd.density[k] += std::norm(buf[k]);
  }
  const double scale = 1.0 / (fs * plan.window_power * static_cast<double>(plan.count));
  const bool even = (plan.length % 2) == 0;
  for (std::size_t k = 0; k < nbins; ++k) {
    double one_sided = (k == 0 || (even && k == nbins - 1)) ? 1.0 : 2.0;
    psd.density[k] *= scale * one_sided;
  }
  return psd;
}

// Instantaneous phase of a band-pass record via the analytic signal,
// unwrapped. The leading/trailing hilbert_edge_fraction of the record is
// unreliable (filter edge effects); callers computing statistics should drop
// it, e.g. with interior_view().
inline constexpr double hilbert_edge_fraction = 0.05;

inline TimeSeries hilbert_phase(const TimeSeries& ts) {
  const std::size_t n = ts.size();
  if (n < 16) throw std::invalid_argument("record too short for analytic signal");
  const auto [mn, mx] = std::minmax_element(ts.samples.begin(), ts.samples.end());
  if (*mx - *mn <= 0.0)
    throw std::invalid_argument("constant record has no instantaneous phase");

  std::vector<fft::cplx> spec = fft::forward(ts.samples);
  // analytic signal: keep DC and Nyquist, double positives, zero negatives
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k < (n + 1) / 2; ++k) spec[k] *= 2.0;
  for (std::size_t k = half + 1; k < n; ++k) spec[k] = fft::cplx(0.0, 0.0);
  std::vector<fft::cplx> analytic = fft::inverse(spec);

  TimeSeries phase = make_series(ts.dt, n, "rad");
  phase.t0 = ts.t0;
  for (std::size_t k = 0; k < n; ++k)
    phase.samples[k] = std::atan2(analytic[k].imag(), analytic[k].real());
  unwrap_inplace(phase.samples);
  return phase;
}

// copy of the record with the given edge fraction dropped from both ends
inline TimeSeries interior_view(const TimeSeries& ts, double edge_fraction = hilbert_edge_fraction) {
  const auto n = ts.size();
  const auto cut = static_cast<std::size_t>(std::floor(static_cast<double>(n) * edge_fraction));
  if (2 * cut >= n) throw std::invalid_argument("edge fraction removes whole record");
  TimeSeries out;
  out.dt = ts.dt;
  out.t0 = ts.t0 + ts.dt * static_cast<double>(cut);
  out.unit = ts.unit;
  out.samples.assign(ts.samples.begin() + static_cast<std::ptrdiff_t>(cut),
                     ts.samples.end() - static_cast<std::ptrdiff_t>(cut));
  return out;
}

// Cumulative spectral density: running RMS contribution of the spectrum
// integrated from the low end (default) or from the high end. Monotone
// nondecreasing in the integration direction; final value = total RMS.
struct CumulativeSpectrum {
  std::vector<double> frequencies;
  std::vector<double> rms;  // same unit as the underlying series
  bool from_high_end = false;
};

inline CumulativeSpectrum cumulative_csd(const PSDEstimate& psd, bool from_high_end = false) {
  CumulativeSpectrum out;
  out.frequencies = psd.frequencies;
  out.from_high_end = from_high_end;
  out.rms.resize(psd.density.size());
  double acc = 0.0;
  if (!from_high_end) {
    for (std::size_t k = 0; k < psd.density.size(); ++k) {
      acc += psd.density[k] * psd.df;
      out.rms[k] = std::sqrt(acc);
    }
  } else {
    for (std::size_t i = psd.density.size(); i-- > 0;) {
      acc += psd.density[i] * psd.df;
      out.rms[i] = std::sqrt(acc);
    }
  }
  return out;
}

struct IdentificationEstimate {
  TransferFunctionEstimate plant;        // injection -> output, feedback off
  TransferFunctionEstimate open_loop;    // L around the loop
  TransferFunctionEstimate sensitivity;  // 1/(1+L), closed/open output ratio
  double bandwidth_hz = std::numeric_limits<double>::quiet_NaN();
  double coherence_threshold = 0.9;
};

// Cross-spectral transfer function estimation against a known injected
// signal, from a matched pair of runs with feedback closed and open:
//   plant       P = S_dy_off / S_dd
//   sensitivity S = S_dy_on  / S_dy_off
//   open loop   L = 1/S - 1
// Coherence (per run) flags bins where the injection dominates; response
// values where coherence is below the threshold are reported but untrusted.
// The -3 dB bandwidth is the lowest frequency where |S| crosses 1/sqrt(2)
// from below within the trusted region.
inline IdentificationEstimate estimate_tf(const TimeSeries& injected,
                                          const TimeSeries& output_on,
                                          const TimeSeries& output_off,
                                          const WelchParams& params = {},
                                          double coherence_threshold = 0.9) {
  if (injected.size() != output_on.size() || injected.size() != output_off.size())
    throw std::invalid_argument("identification records must have equal length");
  if (injected.dt != output_on.dt || injected.dt != output_off.dt)
    throw std::invalid_argument("identification records must share dt");
  const auto plan = detail::plan_segments(injected.size(), params);
  const double fs = 1.0 / injected.dt;
  const std::size_t nbins = plan.length / 2 + 1;

  std::vector<double> sdd(nbins, 0.0), sonon(nbins, 0.0), soffoff(nbins, 0.0);
  std::vector<std::complex<double>> sdon(nbins, 0.0), sdoff(nbins, 0.0);
  std::vector<fft::cplx> bd(plan.length), bon(plan.length), boff(plan.length);
  for (std::size_t s = 0; s < plan.count; ++s) {
    const std::size_t base = s * plan.hop;
    for (std::size_t k = 0; k < plan.length; ++k) {
      const double w = plan.window[k];
      bd[k] = fft::cplx(injected.samples[base + k] * w, 0.0);
      bon[k] = fft::cplx(output_on.samples[base + k] * w, 0.0);
      boff[k] = fft::cplx(output_off.samples[base + k] * w, 0.0);
    }
    fft::transform(bd, false);
    fft::transform(bon, false);
    fft::transform(boff, false);
    for (std::size_t k = 0; k < nbins; ++k) {
      sdd[k] += std::norm(bd[k]);
      sonon[k] += std::norm(bon[k]);
      soffoff[k] += std::norm(boff[k]);
      sdon[k] += std::conj(bd[k]) * bon[k];
      sdoff[k] += std::conj(bd[k]) * boff[k];
    }
  }

  IdentificationEstimate est;
  est.coherence_threshold = coherence_threshold;
  auto& freqs = est.plant.frequencies;
  freqs.resize(nbins);
  const double df = fs / static_cast<double>(plan.length);
  for (std::size_t k = 0; k < nbins; ++k) freqs[k] = df * static_cast<double>(k);
  est.open_loop.frequencies = freqs;
  est.sensitivity.frequencies = freqs;
  est.plant.response.resize(nbins);
  est.open_loop.response.resize(nbins);
  est.sensitivity.response.resize(nbins);
  est.plant.coherence.resize(nbins);
  est.open_loop.coherence.resize(nbins);
  est.sensitivity.coherence.resize(nbins);

  const double tiny = std::numeric_limits<double>::min();
  for (std::size_t k = 0; k < nbins; ++k) {
    const double coh_off = std::norm(sdoff[k]) / std::max(sdd[k] * soffoff[k], tiny);
    const double coh_on = std::norm(sdon[k]) / std::max(sdd[k] * sonon[k], tiny);
    est.plant.response[k] = sdoff[k] / std::max(sdd[k], tiny);
    const std::complex<double> sens =
        std::abs(sdoff[k]) > 0.0 ? sdon[k] / sdoff[k] : std::complex<double>(0.0, 0.0);
    est.sensitivity.response[k] = sens;
    est.open_loop.response[k] =
        std::abs(sens) > 0.0 ? 1.0 / sens - 1.0 : std::complex<double>(0.0, 0.0);
    est.plant.coherence[k] = coh_off;
    est.sensitivity.coherence[k] = std::min(coh_on, coh_off);
    est.open_loop.coherence[k] = est.sensitivity.coherence[k];
  }

  // -3 dB crossing of |sensitivity| within the coherent region, skipping DC
  const double target = 1.0 / std::sqrt(2.0);
  for (std::size_t k = 2; k < nbins; ++k) {
    if (est.sensitivity.coherence[k] < coherence_threshold ||
        est.sensitivity.coherence[k - 1] < coherence_threshold)
      continue;
    const double lo = std::abs(est.sensitivity.response[k - 1]);
    const double hi = std::abs(est.sensitivity.response[k]);
    if (lo < target && hi >= target) {
      const double frac = (target - lo) / (hi - lo);
      est.bandwidth_hz = freqs[k - 1] + frac * (freqs[k] - freqs[k - 1]);
      break;
    }
  }
  return est;
}

namespace detail {
// least squares r ~= a + c*cos(mu) + s*sin(mu); returns {a, c, s}
inline std::array<double, 3> cosine_lsq(const std::vector<double>& mu,
                                        const std::vector<double>& r) {
  double m[3][3] = {};
  double v[3] = {};
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const double basis[3] = {1.0, std::cos(mu[j]), std::sin(mu[j])};
    for (int p = 0; p < 3; ++p) {
      v[p] += basis[p] * r[j];
      for (int q = 0; q < 3; ++q) m[p][q] += basis[p] * basis[q];
    }
  }
  // gaussian elimination with partial pivoting on the 3x3 normal system
  int idx[3] = {0, 1, 2};
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int row = col + 1; row < 3; ++row)
      if (std::abs(m[idx[row]][col]) > std::abs(m[idx[pivot]][col])) pivot = row;
    std::swap(idx[col], idx[pivot]);
    const double diag = m[idx[col]][col];
    if (std::abs(diag) < 1e-12) throw std::invalid_argument("degenerate fringe setpoints");
    for (int row = col + 1; row < 3; ++row) {
      const double f = m[idx[row]][col] / diag;
      for (int q = col; q < 3; ++q) m[idx[row]][q] -= f * m[idx[col]][q];
      v[idx[row]] -= f * v[idx[col]];
    }
  }
  std::array<double, 3> out{};
  for (int col = 2; col >= 0; --col) {
    double acc = v[idx[col]];
    for (int q = col + 1; q < 3; ++q) acc -= m[idx[col]][q] * out[static_cast<std::size_t>(q)];
    out[static_cast<std::size_t>(col)] = acc / m[idx[col]][col];
  }
  return out;
}
}  // namespace detail

// Joint two-detector fringe fit. Detector rates are modelled as
//   r1 = A1/2 * (1 + C cos(mu + phi0)),  r2 = A2/2 * (1 - C cos(mu + phi0)),
// fitted per detector by linear least squares and combined after per-detector
// normalization, so a static imbalance between the detectors drops out.
inline FringeFit fit_fringe(const std::vector<double>& setpoints_rad,
                            const std::vector<double>& rates1,
                            const std::vector<double>& rates2) {
  const std::size_t n = setpoints_rad.size();
  if (rates1.size() != n || rates2.size() != n)
    throw std::invalid_argument("fringe arrays must have equal length");
  if (n < 5) throw std::invalid_argument("fringe fit needs at least 5 setpoints");
  const auto [mn, mx] = std::minmax_element(setpoints_rad.begin(), setpoints_rad.end());
  if (*mx - *mn <= pi)
    throw std::invalid_argument("fringe setpoints must span more than pi");
  for (std::size_t j = 0; j < n; ++j)
    if (rates1[j] < 0.0 || rates2[j] < 0.0)
      throw std::invalid_argument("fringe rates must be >= 0");

  const auto f1 = detail::cosine_lsq(setpoints_rad, rates1);
  const auto f2 = detail::cosine_lsq(setpoints_rad, rates2);
  if (f1[0] <= 0.0 || f2[0] <= 0.0)
    throw std::invalid_argument("fringe fit needs positive mean rates");

  const double u = f1[1] / f1[0] - f2[1] / f2[0];
  const double v = f1[2] / f1[0] - f2[2] / f2[0];
  FringeFit fit;
  fit.contrast = 0.5 * std::hypot(u, v);
  fit.phase_offset_rad = std::atan2(-v, u);
  fit.amplitude1 = 2.0 * f1[0];
  fit.amplitude2 = 2.0 * f2[0];

  double res = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double c = std::cos(setpoints_rad[j]);
    const double s = std::sin(setpoints_rad[j]);
    const double m1 = f1[0] + f1[1] * c + f1[2] * s;
    const double m2 = f2[0] + f2[1] * c + f2[2] * s;
    const double d1 = (rates1[j] - m1) / f1[0];
    const double d2 = (rates2[j] - m2) / f2[0];
    res += d1 * d1 + d2 * d2;
  }
  fit.residual_rms = std::sqrt(res / static_cast<double>(2 * n));
  return fit;
}

// Gaussian phase jitter shrinks fringe contrast as C = exp(-sigma^2/2);
// these two invert each other.
inline double contrast_from_sigma(double sigma_rad) {
  if (sigma_rad < 0.0) throw std::invalid_argument("sigma must be >= 0");
  return std::exp(-0.5 * sigma_rad * sigma_rad);
}

inline double sigma_from_contrast(double contrast) {
  if (contrast <= 0.0 || contrast > 1.0)
    throw std::invalid_argument("contrast must be in (0, 1]");
  return std::sqrt(-2.0 * std::log(contrast));
}

// quadrature sum over components appearing with integer multiplicity
struct SigmaComponent {
  std::string name;
  double sigma = 0.0;    // same angular unit throughout
  int multiplicity = 1;
};

inline double combine_sigmas(const std::vector<SigmaComponent>& components) {
  double acc = 0.0;
  for (const auto& c : components) {
    if (c.sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
    if (c.multiplicity < 0) throw std::invalid_argument("multiplicity must be >= 0");
    acc += static_cast<double>(c.multiplicity) * c.sigma * c.sigma;
  }
  return std::sqrt(acc);
}

}  // namespace phasesync
