#pragma once

// Loop building blocks: the three controller shapes used by the
// synchronization tasks, behavioural demodulators (mixer and
// phase-frequency detector), the AOM frequency actuator, the pump-offload
// integrator, and sample-quantized transport delay.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <stdexcept>
#include <vector>

#include "phasesync/constants.hpp"
#include "phasesync/signal_core.hpp"
#include "phasesync/time_series.hpp"

namespace phasesync {

enum class ControllerKind { proportional, proportional_rolloff, pi };

struct ControllerSpec {
  ControllerKind kind = ControllerKind::proportional;
  double gain = 0.0;              // command units per radian of error
  double rolloff_hz = 0.0;        // proportional_rolloff: single-pole corner
  double integral_corner_hz = 0.0;  // pi: corner where integral equals proportional
  double output_min = -std::numeric_limits<double>::infinity();
  double output_max = std::numeric_limits<double>::infinity();
};

// Discrete controller. PI output for constant error e ramps with slope
// gain * 2*pi*integral_corner * e. Anti-windup tracks the saturation
// boundary: while the error pushes the output past a limit the integral is
// held at (or below) the value that just reaches that limit, so the output
// pins exactly at the clamp and release is immediate once the error turns.
class ControllerState {
 public:
  ControllerState() = default;
  ControllerState(const ControllerSpec& spec, double dt) : spec_(spec), dt_(dt) {
    if (dt <= 0.0) throw std::invalid_argument("controller dt must be positive");
    if (spec.kind == ControllerKind::proportional_rolloff && spec.rolloff_hz <= 0.0)
      throw std::invalid_argument("rolloff controller needs rolloff_hz > 0");
    if (spec.kind == ControllerKind::pi && spec.integral_corner_hz <= 0.0)
      throw std::invalid_argument("pi controller needs integral_corner_hz > 0");
    if (spec.output_min > spec.output_max)
      throw std::invalid_argument("controller output limits inverted");
    if (spec.kind == ControllerKind::proportional_rolloff)
      alpha_ = 1.0 - std::exp(-two_pi * spec.rolloff_hz * dt);
  }

  double step(double error) {
    double u = 0.0;
    int pinned = 0;
    switch (spec_.kind) {
      case ControllerKind::proportional:
        u = spec_.gain * error;
        break;
      case ControllerKind::proportional_rolloff:
        lp_ += alpha_ * (spec_.gain * error - lp_);
        u = lp_;
        break;
      case ControllerKind::pi: {
        const double ki = spec_.gain * two_pi * spec_.integral_corner_hz;
        const double candidate = integral_ + error * dt_;
        const double unclamped = spec_.gain * error + ki * candidate;
        if (unclamped > spec_.output_max && error > 0.0) {
          // never wind past the limit, never drag below the previous state
          const double boundary = (spec_.output_max - spec_.gain * error) / ki;
          integral_ = std::max(integral_, std::min(candidate, boundary));
          pinned = +1;
        } else if (unclamped < spec_.output_min && error < 0.0) {
          const double boundary = (spec_.output_min - spec_.gain * error) / ki;
          integral_ = std::min(integral_, std::max(candidate, boundary));
          pinned = -1;
        } else {
          integral_ = candidate;
        }
        u = spec_.gain * error + ki * integral_;
        break;
      }
    }
    saturated_ = pinned != 0 || u > spec_.output_max || u < spec_.output_min;
    if (pinned > 0 || u > spec_.output_max) u = spec_.output_max;
    if (pinned < 0 || u < spec_.output_min) u = spec_.output_min;
    return u;
  }

  void reset() {
    integral_ = 0.0;
    lp_ = 0.0;
    saturated_ = false;
  }

  double integral_state() const { return integral_; }
  bool saturated() const { return saturated_; }
  const ControllerSpec& spec() const { return spec_; }

 private:
  ControllerSpec spec_{};
  double dt_ = 1.0;
  double alpha_ = 0.0;
  double integral_ = 0.0;
  double lp_ = 0.0;
  bool saturated_ = false;
};

// batch convenience used by tests and the synthetic-loop harness
inline TimeSeries controller_step(const ControllerSpec& spec, const TimeSeries& error) {
  ControllerState st(spec, error.dt);
  TimeSeries out = make_series(error.dt, error.size(), "cmd");
  out.t0 = error.t0;
  for (std::size_t k = 0; k < error.size(); ++k) out.samples[k] = st.step(error.samples[k]);
  return out;
}

struct DemodResult {
  TimeSeries phase;                 // rad, at the input sample grid
  std::vector<double> unlock_times;  // seconds; loss-of-beat onsets
};

// IQ mixer demodulation at the clock, single-pole lowpass on each arm,
// phase wrapped to (-pi, pi]. Loss of beat is flagged when the recovered
// amplitude stays below amplitude_threshold for more than one clock period.
//
// Small-signal noise gain (documented for the tests): for a beat
// A*cos(w t + phi) plus white noise of per-sample variance s2, the phase
// estimate variance is approximately 2 * s2 * sum(h^2) / A^2, where h is the
// impulse response of the normalized lowpass.
inline DemodResult mixer_demodulate(const TimeSeries& beat, const ClockSpec& clock,
                                    double lowpass_corner_hz,
                                    double amplitude_threshold = 0.0) {
  if (clock.frequency_hz <= 0) throw std::invalid_argument("clock frequency must be > 0");
  if (lowpass_corner_hz <= 0.0) throw std::invalid_argument("lowpass corner must be > 0");
  const double fs = 1.0 / beat.dt;
  const double fc = static_cast<double>(clock.frequency_hz);
  if (fc * 4.0 > fs)
    throw std::invalid_argument("mixer demodulation needs >= 4 samples per clock cycle");

  const double alpha = 1.0 - std::exp(-two_pi * lowpass_corner_hz * beat.dt);
  DemodResult out;
  out.phase = make_series(beat.dt, beat.size(), "rad");
  out.phase.t0 = beat.t0;

  double i_acc = 0.0, q_acc = 0.0;
  double below_since = -1.0;
  bool unlocked = false;
  const double period = 1.0 / fc;
  for (std::size_t k = 0; k < beat.size(); ++k) {
    const double t = beat.time_at(k);
    const double clk = two_pi * fc * t + clock.phase_rad;
    const double x = beat.samples[k];
    i_acc += alpha * (2.0 * x * std::cos(clk) - i_acc);
    q_acc += alpha * (-2.0 * x * std::sin(clk) - q_acc);
    out.phase.samples[k] = std::atan2(q_acc, i_acc);
    const double amp = std::hypot(i_acc, q_acc);
    if (amp < amplitude_threshold) {
      if (below_since < 0.0) below_since = t;
      if (!unlocked && t - below_since > period) {
        out.unlock_times.push_back(below_since);
        unlocked = true;
      }
    } else {
      below_since = -1.0;
      unlocked = false;
    }
  }
  return out;
}

// Phase-frequency detector on a sampled beat: phase is read out at rising
// zero crossings against the clock edge grid, unwrapped between crossings so
// a frequency offset integrates up to the +-2*pi capture range and then
// saturates. Output is held between crossings. Loss of beat is flagged when
// no valid crossing (peak amplitude above threshold since the previous one)
// arrives for more than 1.5 clock periods.
inline DemodResult pfd_demodulate(const TimeSeries& beat, const ClockSpec& clock,
                                  double amplitude_threshold = 0.0) {
  if (clock.frequency_hz <= 0) throw std::invalid_argument("clock frequency must be > 0");
  const double fc = static_cast<double>(clock.frequency_hz);
  const double fs = 1.0 / beat.dt;
  if (fc * 4.0 > fs)
    throw std::invalid_argument("pfd demodulation needs >= 4 samples per clock cycle");
  const double period = 1.0 / fc;

  DemodResult out;
  out.phase = make_series(beat.dt, beat.size(), "rad");
  out.phase.t0 = beat.t0;

  double value = 0.0;       // held PFD output
  double prev_err = 0.0;    // last crossing's wrapped error, for unwrapping
  bool have_prev = false;
  double last_cross = beat.t0;
  double peak = 0.0;
  bool unlocked = false;
  for (std::size_t k = 0; k < beat.size(); ++k) {
    const double t = beat.time_at(k);
    peak = std::max(peak, std::abs(beat.samples[k]));
    if (k > 0 && beat.samples[k - 1] < 0.0 && beat.samples[k] >= 0.0 &&
        peak >= amplitude_threshold) {
      const double x0 = beat.samples[k - 1];
      const double x1 = beat.samples[k];
      const double tc = beat.time_at(k - 1) + beat.dt * (-x0) / (x1 - x0);
      // rising crossing of cos() sits at phase -pi/2; compare to clock phase
      const double err = wrap_phase(-0.5 * pi - (two_pi * fc * tc + clock.phase_rad));
      if (!have_prev) {
        value = err;
        have_prev = true;
      } else {
        value += wrap_phase(err - prev_err);
        value = std::clamp(value, -two_pi, two_pi);
      }
      prev_err = err;
      last_cross = tc;
      peak = 0.0;
      unlocked = false;
    }
    if (!unlocked && t - last_cross > 1.5 * period && k > 0) {
      out.unlock_times.push_back(last_cross);
      unlocked = true;
    }
    out.phase.samples[k] = value;
  }
  return out;
}

struct ActuatorSpec {
  double range_hz = 1.0e6;  // command clamp, symmetric about the nominal tone
};

// AOM as a frequency actuator: the commanded offset integrates into phase.
class AomState {
 public:
  explicit AomState(const ActuatorSpec& spec = {}) : spec_(spec) {
    if (spec.range_hz <= 0.0) throw std::invalid_argument("actuator range must be > 0");
  }

  // returns accumulated phase after applying the command for dt
  double step(double freq_cmd_hz, double dt) {
    double cmd = freq_cmd_hz;
    saturated_ = std::abs(cmd) > spec_.range_hz;
    if (cmd > spec_.range_hz) cmd = spec_.range_hz;
    if (cmd < -spec_.range_hz) cmd = -spec_.range_hz;
    applied_ = cmd;
    phase_ += two_pi * cmd * dt;
    return phase_;
  }

  double phase() const { return phase_; }
  double applied_hz() const { return applied_; }
  bool saturated() const { return saturated_; }

 private:
  ActuatorSpec spec_{};
  double phase_ = 0.0;
  double applied_ = 0.0;
  bool saturated_ = false;
};

struct DesaturationLink {
  double update_rate_hz = 500.0;
  double transport_delay_s = 0.0;
  double settle_tau_s = 1.0;  // closed-loop first-order time constant
};

// Slow integrator that offloads the mean fast-AOM command onto the pump
// frequency. Raw law: corr -= (dt_update / tau) * cmd; in closed loop (the
// offloaded correction shifts the beat, the fast loop re-centres) this
// settles as a first-order response with time constant tau. Corrections
// change only at link update instants and reach the far side one transport
// delay later.
class DesaturationState {
 public:
  DesaturationState() = default;
  explicit DesaturationState(const DesaturationLink& link) : link_(link) {
    if (link.update_rate_hz <= 0.0) throw std::invalid_argument("link update rate must be > 0");
    if (link.settle_tau_s <= 0.0) throw std::invalid_argument("settle tau must be > 0");
    if (link.transport_delay_s < 0.0) throw std::invalid_argument("transport delay must be >= 0");
    update_period_ = 1.0 / link.update_rate_hz;
    delay_updates_ = static_cast<std::size_t>(std::llround(link.transport_delay_s / update_period_));
  }

  // advance by dt with the current mean AOM command; returns the correction
  // in effect at the far end (Hz)
  double step(double aom_mean_cmd_hz, double dt) {
    elapsed_ += dt;
    while (elapsed_ + 1e-12 >= update_period_) {
      elapsed_ -= update_period_;
      raw_ -= (update_period_ / link_.settle_tau_s) * aom_mean_cmd_hz;
      pipeline_.push_back(raw_);
      if (pipeline_.size() > delay_updates_) {
        applied_ = pipeline_.front();
        pipeline_.pop_front();
      }
    }
    return applied_;
  }

  double applied_hz() const { return applied_; }

 private:
  DesaturationLink link_{};
  double update_period_ = 2.0e-3;
  std::size_t delay_updates_ = 0;
  double elapsed_ = 0.0;
  double raw_ = 0.0;
  double applied_ = 0.0;
  std::deque<double> pipeline_;
};

struct DelaySpec {
  double delay_s = 0.0;
};

// transport delay quantized to the nearest whole sample
class DelayLine {
 public:
  DelayLine() = default;
  DelayLine(double delay_s, double dt) {
    if (delay_s < 0.0) throw std::invalid_argument("delay must be >= 0");
    if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
    buffer_.assign(static_cast<std::size_t>(std::llround(delay_s / dt)), 0.0);
  }

  double step(double x) {
    if (buffer_.empty()) return x;
    const double out = buffer_[head_];
    buffer_[head_] = x;
    head_ = (head_ + 1) % buffer_.size();
    return out;
  }

  std::size_t length() const { return buffer_.size(); }

 private:
  std::vector<double> buffer_;
  std::size_t head_ = 0;
};

inline TimeSeries delay_line(const TimeSeries& input, double delay_s) {
  DelayLine dl(delay_s, input.dt);
  TimeSeries out = make_series(input.dt, input.size(), input.unit);
  out.t0 = input.t0;
  for (std::size_t k = 0; k < input.size(); ++k) out.samples[k] = dl.step(input.samples[k]);
  return out;
}

}  // namespace phasesync
