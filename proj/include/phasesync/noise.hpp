#pragma once

// Stochastic process synthesis for the simulator: laser phase random walks,
// resonant mechanical noise, thermal drift, band-limited white noise, PRBS
// injection signals, and shot-noise count records. Every process is driven by
// the project Rng, so a (spec, dt, seed) triple reproduces bit-identically.
//
// Streaming steppers feed the multirate plant; the batch generators below
// wrap them for analysis and tests.

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <variant>
#include <vector>

#include "phasesync/constants.hpp"
#include "phasesync/rng.hpp"
#include "phasesync/time_series.hpp"

namespace phasesync {

struct LaserLinewidthSpec {
  double linewidth_hz = 0.0;  // FWHM of the Lorentzian line
};

struct ResonanceSpec {
  double f0_hz = 0.0;
  double q = 1.0;
  double rms = 0.0;  // target standard deviation of this mode's output
};

struct MechanicalSpec {
  std::vector<ResonanceSpec> modes;
};

struct ThermalDriftSpec {
  double rate_rms = 0.0;  // output units per sqrt(second), random walk
};

struct WhiteSpec {
  double rms = 0.0;
  double bandwidth_hz = 0.0;  // 0 or >= Nyquist: full-band white
};

struct PrbsSpec {
  double amplitude = 0.0;
  double chip_period_s = 0.0;  // 0: one chip per sample
};

struct ShotCountsSpec {
  double mean_rate_hz = 0.0;
};

using NoiseProcess = std::variant<LaserLinewidthSpec, MechanicalSpec, ThermalDriftSpec,
                                  WhiteSpec, PrbsSpec, ShotCountsSpec>;

namespace detail {

// direct-form-2-transposed biquad
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;
  double z1 = 0.0, z2 = 0.0;

  double step(double x) {
    const double y = b0 * x + z1;
    z1 = b1 * x - a1 * y + z2;
    z2 = b2 * x - a2 * y;
    return y;
  }
};

// bandpass resonator (constant peak gain) at f0 with quality q, bilinear form
inline Biquad make_resonator(double f0_hz, double q, double dt) {
  if (f0_hz <= 0.0 || q <= 0.0) throw std::invalid_argument("resonance needs f0 > 0 and q > 0");
  const double w0 = two_pi * f0_hz * dt;
  if (w0 >= pi) throw std::invalid_argument("resonance frequency at or above Nyquist");
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  Biquad bq;
  bq.b0 = alpha / a0;
  bq.b1 = 0.0;
  bq.b2 = -alpha / a0;
  bq.a1 = -2.0 * std::cos(w0) / a0;
  bq.a2 = (1.0 - alpha) / a0;
  return bq;
}

// second-order lowpass section at fc with the given quality, bilinear form
inline Biquad make_lowpass(double fc_hz, double q, double dt) {
  const double w0 = two_pi * fc_hz * dt;
  if (w0 >= pi) throw std::invalid_argument("lowpass corner at or above Nyquist");
  const double alpha = std::sin(w0) / (2.0 * q);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad bq;
  bq.b0 = (1.0 - cw) / (2.0 * a0);
  bq.b1 = (1.0 - cw) / a0;
  bq.b2 = (1.0 - cw) / (2.0 * a0);
  bq.a1 = -2.0 * cw / a0;
  bq.a2 = (1.0 - alpha) / a0;
  return bq;
}

// white-noise gain of a biquad cascade: sqrt(sum of squared impulse response)
inline double cascade_noise_gain(std::vector<Biquad> stages, std::size_t max_len) {
  double energy = 0.0;
  double x = 1.0;
  for (std::size_t k = 0; k < max_len; ++k) {
    double y = x;
    for (auto& s : stages) y = s.step(y);
    energy += y * y;
    x = 0.0;
  }
  return std::sqrt(energy);
}

}  // namespace detail

// streaming interface consumed by the plant
class NoiseStream {
 public:
  virtual ~NoiseStream() = default;
  virtual double step() = 0;
};

class WienerStream final : public NoiseStream {
 public:
  WienerStream(double linewidth_hz, double dt, std::uint64_t seed) : rng_(seed) {
    if (linewidth_hz < 0.0) throw std::invalid_argument("linewidth must be >= 0");
    if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
    sigma_ = std::sqrt(two_pi * linewidth_hz * dt);
  }
  // phase increment variance per step: 2*pi*linewidth*dt
  double step() override {
    const double out = value_;
    value_ += sigma_ * rng_.gaussian();
    return out;
  }

 private:
  Rng rng_;
  double sigma_ = 0.0;
  double value_ = 0.0;
};

class MechanicalStream final : public NoiseStream {
 public:
  MechanicalStream(const MechanicalSpec& spec, double dt, std::uint64_t seed) : rng_(seed) {
    for (const auto& mode : spec.modes) {
      if (mode.rms < 0.0) throw std::invalid_argument("mode rms must be >= 0");
      Channel ch;
      ch.filter = detail::make_resonator(mode.f0_hz, mode.q, dt);
      const double ring = 2.0 * mode.q / (two_pi * mode.f0_hz);
      ch.warmup = static_cast<std::size_t>(std::min(12.0 * ring / dt, 4.0e6));
      const double gain = detail::cascade_noise_gain({ch.filter}, std::max<std::size_t>(ch.warmup, 1024));
      ch.scale = gain > 0.0 ? mode.rms / gain : 0.0;
      channels_.push_back(ch);
    }
    for (auto& ch : channels_)
      for (std::size_t k = 0; k < ch.warmup; ++k) ch.filter.step(rng_.gaussian());
  }

  double step() override {
    double acc = 0.0;
    for (auto& ch : channels_) acc += ch.scale * ch.filter.step(rng_.gaussian());
    return acc;
  }

 private:
  struct Channel {
    detail::Biquad filter;
    double scale = 0.0;
    std::size_t warmup = 0;
  };
  Rng rng_;
  std::vector<Channel> channels_;
};

class RandomWalkStream final : public NoiseStream {
 public:
  RandomWalkStream(double rate_rms, double dt, std::uint64_t seed) : rng_(seed) {
    if (rate_rms < 0.0) throw std::invalid_argument("walk rate must be >= 0");
    if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
    sigma_ = rate_rms * std::sqrt(dt);
  }
  double step() override {
    const double out = value_;
    value_ += sigma_ * rng_.gaussian();
    return out;
  }

 private:
  Rng rng_;
  double sigma_ = 0.0;
  double value_ = 0.0;
};

class WhiteStream final : public NoiseStream {
 public:
  WhiteStream(const WhiteSpec& spec, double dt, std::uint64_t seed) : rng_(seed) {
    if (spec.rms < 0.0) throw std::invalid_argument("white rms must be >= 0");
    if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
    const double nyquist = 0.5 / dt;
    scale_ = spec.rms;
    if (spec.bandwidth_hz > 0.0 && spec.bandwidth_hz < nyquist) {
      // 4th-order Butterworth shaping; section qualities 1/(2 cos(pi/8)), 1/(2 cos(3 pi/8))
      const double q1 = 1.0 / (2.0 * std::cos(pi / 8.0));
      const double q2 = 1.0 / (2.0 * std::cos(3.0 * pi / 8.0));
      stages_.push_back(detail::make_lowpass(spec.bandwidth_hz, q1, dt));
      stages_.push_back(detail::make_lowpass(spec.bandwidth_hz, q2, dt));
      const std::size_t probe = static_cast<std::size_t>(
          std::min(64.0 / (spec.bandwidth_hz * dt), 4.0e6));
      const double gain = detail::cascade_noise_gain(stages_, std::max<std::size_t>(probe, 1024));
      scale_ = gain > 0.0 ? spec.rms / gain : 0.0;
      for (auto& s : stages_) {
        s.z1 = 0.0;
        s.z2 = 0.0;
      }
      warmup_ = probe;
      for (std::size_t k = 0; k < warmup_; ++k) step_raw();
    }
  }

  double step() override { return scale_ * step_raw(); }

 private:
  double step_raw() {
    double y = rng_.gaussian();
    for (auto& s : stages_) y = s.step(y);
    return y;
  }
  Rng rng_;
  std::vector<detail::Biquad> stages_;
  double scale_ = 0.0;
  std::size_t warmup_ = 0;
};

class PrbsStream final : public NoiseStream {
 public:
  PrbsStream(const PrbsSpec& spec, double dt, std::uint64_t seed)
      : amplitude_(spec.amplitude) {
    if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
    chip_samples_ = spec.chip_period_s > 0.0
                        ? std::max<std::uint64_t>(1, static_cast<std::uint64_t>(
                                                         std::llround(spec.chip_period_s / dt)))
                        : 1;
    lfsr_ = static_cast<std::uint16_t>((seed % 0x7FFF) + 1);  // nonzero 15-bit state
  }

  // PRBS-15 (x^15 + x^14 + 1), held chip_samples per chip
  double step() override {
    if (counter_ == 0) {
      const std::uint16_t bit = ((lfsr_ >> 0) ^ (lfsr_ >> 1)) & 1u;
      lfsr_ = static_cast<std::uint16_t>((lfsr_ >> 1) | (bit << 14));
      level_ = (lfsr_ & 1u) ? amplitude_ : -amplitude_;
      counter_ = chip_samples_;
    }
    --counter_;
    return level_;
  }

 private:
  double amplitude_ = 0.0;
  double level_ = 0.0;
  std::uint64_t chip_samples_ = 1;
  std::uint64_t counter_ = 0;
  std::uint16_t lfsr_ = 1;
};

class ShotCountStream final : public NoiseStream {
 public:
  ShotCountStream(double mean_rate_hz, double dt, std::uint64_t seed)
      : rng_(seed), mean_(mean_rate_hz * dt) {
    if (mean_rate_hz < 0.0) throw std::invalid_argument("count rate must be >= 0");
  }
  double step() override { return static_cast<double>(rng_.poisson(mean_)); }

 private:
  Rng rng_;
  double mean_ = 0.0;
};

inline std::unique_ptr<NoiseStream> make_stream(const NoiseProcess& process, double dt,
                                                std::uint64_t seed) {
  return std::visit(
      [&](const auto& spec) -> std::unique_ptr<NoiseStream> {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, LaserLinewidthSpec>)
          return std::make_unique<WienerStream>(spec.linewidth_hz, dt, seed);
        else if constexpr (std::is_same_v<T, MechanicalSpec>)
          return std::make_unique<MechanicalStream>(spec, dt, seed);
        else if constexpr (std::is_same_v<T, ThermalDriftSpec>)
          return std::make_unique<RandomWalkStream>(spec.rate_rms, dt, seed);
        else if constexpr (std::is_same_v<T, WhiteSpec>)
          return std::make_unique<WhiteStream>(spec, dt, seed);
        else if constexpr (std::is_same_v<T, PrbsSpec>)
          return std::make_unique<PrbsStream>(spec, dt, seed);
        else
          return std::make_unique<ShotCountStream>(spec.mean_rate_hz, dt, seed);
      },
      process);
}

namespace detail {
inline TimeSeries collect(NoiseStream& stream, double dt, std::size_t n,
                          const std::string& unit) {
  TimeSeries ts = make_series(dt, n, unit);
  for (auto& x : ts.samples) x = stream.step();
  return ts;
}
}  // namespace detail

// laser phase as a Wiener walk; increment variance 2*pi*linewidth*dt per step
inline TimeSeries gen_laser_phase_noise(double linewidth_hz, double dt, std::size_t n,
                                        std::uint64_t seed) {
  WienerStream s(linewidth_hz, dt, seed);
  return detail::collect(s, dt, n, "rad");
}

// sum of independently seeded resonant modes, each scaled to its target rms
inline TimeSeries gen_mechanical_noise(const MechanicalSpec& spec, double dt, std::size_t n,
                                       std::uint64_t seed) {
  MechanicalStream s(spec, dt, seed);
  return detail::collect(s, dt, n, "rad");
}

// random walk with the given units-per-sqrt(second) rate
inline TimeSeries gen_thermal_drift(double rate_rms, double dt, std::size_t n,
                                    std::uint64_t seed) {
  RandomWalkStream s(rate_rms, dt, seed);
  return detail::collect(s, dt, n, "rad");
}

// length change of a fiber of length_m from a temperature record, relative to
// the record's first sample; deterministic transform
inline TimeSeries gen_fiber_length_drift(double expansion_per_K, double length_m,
                                         const TimeSeries& temperature) {
  if (length_m < 0.0) throw std::invalid_argument("fiber length must be >= 0");
  if (temperature.samples.empty())
    throw std::invalid_argument("temperature record must be non-empty");
  TimeSeries out = make_series(temperature.dt, temperature.size(), "m");
  out.t0 = temperature.t0;
  const double t_ref = temperature.samples.front();
  for (std::size_t k = 0; k < temperature.size(); ++k)
    out.samples[k] = expansion_per_K * length_m * (temperature.samples[k] - t_ref);
  return out;
}

// Poisson photon counts per bin at a constant mean rate
inline TimeSeries gen_shot_noise_counts(double mean_rate_hz, double dt, std::size_t n,
                                        std::uint64_t seed) {
  ShotCountStream s(mean_rate_hz, dt, seed);
  return detail::collect(s, dt, n, "counts");
}

// band-limited white injection signal for loop identification
inline TimeSeries gen_identification_noise(double rms, double bandwidth_hz, double dt,
                                           std::size_t n, std::uint64_t seed) {
  WhiteStream s(WhiteSpec{rms, bandwidth_hz}, dt, seed);
  return detail::collect(s, dt, n, "rad");
}

}  // namespace phasesync
