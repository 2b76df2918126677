#pragma once

// Discrete-time model of the full two-node link: per node a laser pair, a
// reflection-locked local loop, a long fiber to the midpoint, a fast beat
// lock against the shared reference, the pump offload path and the photon
// count driven global loop that closes the end-to-end phase. Four nested
// rates: fast steps for beats and fast loops, local steps for mirror paths,
// global steps for count bins, drift steps for temperature and length.
// Command ordering is strict: commands computed from the state of step m
// act from step m+1, one whole sample of delay at each loop's own rate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "phasesync/constants.hpp"
#include "phasesync/control.hpp"
#include "phasesync/dsp.hpp"
#include "phasesync/noise.hpp"
#include "phasesync/rng.hpp"
#include "phasesync/scenario.hpp"
#include "phasesync/signal_core.hpp"
#include "phasesync/time_series.hpp"

namespace phasesync {

enum class LoopId { local_a, local_b, fast_a, fast_b, global_loop };

inline std::string loop_name(LoopId id) {
  switch (id) {
    case LoopId::local_a: return "local_a";
    case LoopId::local_b: return "local_b";
    case LoopId::fast_a: return "fast_a";
    case LoopId::fast_b: return "fast_b";
    case LoopId::global_loop: return "global";
  }
  return "unknown";
}

inline LoopId parse_loop_id(const std::string& name) {
  if (name == "local_a") return LoopId::local_a;
  if (name == "local_b") return LoopId::local_b;
  if (name == "fast_a") return LoopId::fast_a;
  if (name == "fast_b") return LoopId::fast_b;
  if (name == "global") return LoopId::global_loop;
  throw std::invalid_argument("unknown loop '" + name +
                              "' (expected local_a, local_b, fast_a, fast_b or global)");
}

struct UnlockEvent {
  double time_s = 0.0;
  std::string loop;
};

class LoopStats {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double std_dev() const {
    return n_ ? std::sqrt(m2_ / static_cast<double>(n_)) : 0.0;
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct SimOutput {
  TimeSeries eta_total;                  // rad, output grid, absolute
  TimeSeries eta_local_a, eta_local_b;   // rad, output grid, absolute
  TimeSeries eta_fast_a, eta_fast_b;     // rad, output grid, residual about setpoint
  TimeSeries eta_global;                 // rad, demod window grid, measured residual
  TimeSeries snspd_counts_1, snspd_counts_2;  // counts per global step bin
  TimeSeries cmd_local_a, cmd_local_b;   // Hz, output grid, applied
  TimeSeries cmd_fast_a, cmd_fast_b;     // Hz, output grid, applied
  TimeSeries pump_offload_a, pump_offload_b;  // Hz, output grid
  TimeSeries slip_count_a, slip_count_b;      // integer-valued, drift grid
  TimeSeries theta_err_a, theta_err_b;        // rad, drift grid
  TimeSeries feedforward_phase;               // rad, drift grid
  std::vector<UnlockEvent> unlocks;
  LoopStats stats_local_a, stats_local_b;
  LoopStats stats_fast_a, stats_fast_b;
  LoopStats stats_global, stats_total;
  double duration_s = 0.0;
  std::uint64_t master_seed = 0;
};

namespace detail {
inline double step_or0(const std::unique_ptr<NoiseStream>& s) {
  return s ? s->step() : 0.0;
}
}  // namespace detail

class SystemModel {
 public:
  explicit SystemModel(const ScenarioConfig& sc) : sc_(sc) {
    validate_scenario(sc);
    const auto& sim = sc.sim;
    dtf_ = sim.dt_fast_s;
    stride_loc_ = static_cast<std::size_t>(std::llround(sim.dt_local_s / dtf_));
    stride_glob_ = static_cast<std::size_t>(std::llround(sim.dt_global_s / dtf_));
    stride_drift_ = static_cast<std::size_t>(std::llround(sim.dt_drift_s / dtf_));
    out_stride_ = stride_loc_ * sim.output_decimation;
    dark_on_ = sim.dark_periods;
    dark_start_ = static_cast<std::size_t>(
        std::llround((1.0 - sim.dark_fraction) * static_cast<double>(stride_loc_)));
    stab_scale_ = dark_on_ ? (1.0 - sim.dark_fraction) : 1.0;
    zpl_scale_ = dark_on_ ? sim.dark_fraction : 1.0;

    const PlanCheck chk = check_plan(sc.plan);
    omega_tot_hz_ = static_cast<double>(chk.omega_tot_hz);
    beat_hz_ = static_cast<double>(chk.omega_glob_hz);

    init_node(a_, sc.node_a, sc.midpoint.fast_loop_a,
              static_cast<double>(sc.plan.omega_loc_a_hz), "node.A");
    init_node(b_, sc.node_b, sc.midpoint.fast_loop_b,
              static_cast<double>(sc.plan.omega_loc_b_hz), "node.B");
    ref_ = std::make_unique<WienerStream>(sc.midpoint.reference_linewidth_hz, dtf_,
                                          derive_seed(sim.master_seed, "midpoint.reference"));

    const auto& g = sc.midpoint.global_loop;
    glob_enabled_ = g.enabled;
    target_mu_ = g.setpoint_rad;
    theta_offset_ = g.theta_offset_rad;
    if (glob_enabled_) {
      window_bins_ = static_cast<std::size_t>(std::llround(
          static_cast<double>(g.snspd.integration_beat_periods) /
          std::abs(beat_hz_) / sim.dt_global_s));
      window_bins_ = std::max<std::size_t>(window_bins_, 1);
      g_glob_ = two_pi * g.bandwidth_hz * static_cast<double>(window_bins_) * sim.dt_global_s;
    }
    rng_snspd_ = Rng(derive_seed(sim.master_seed, "snspd.shot"));
    rng_zpl_ = Rng(derive_seed(sim.master_seed, "zpl.shot"));
    rng_ff_ = Rng(derive_seed(sim.master_seed, "ff.noise"));

    init_series();
  }

  double time() const { return static_cast<double>(step_) * dtf_; }

  void advance(double seconds) {
    const auto steps = static_cast<std::size_t>(std::llround(seconds / dtf_));
    for (std::size_t k = 0; k < steps; ++k) fast_step();
  }

  void set_global_setpoint(double rad) { target_mu_ = rad; }
  double global_setpoint() const { return target_mu_; }

  double eta_total_now() const { return eta_total_now_; }
  double delta_theta_err() const { return a_.theta_err - b_.theta_err; }
  double feedforward_phase() const { return s_ff_; }

  // independent composition pieces; their sum must reproduce eta_total exactly
  struct CompositionParts {
    double global_actuation;   // accumulated fast-A setpoint moves
    double midpoint_drift;     // y_a - y_b
    double local_a, local_b;   // eta_local, absolute
    double fast_resid_a, fast_resid_b;
    double theta_err_delta;
    double plan_carrier;       // 2*pi*Omega_tot*t
  };
  CompositionParts composition_parts() const {
    return {sglob_phase_, a_.y - b_.y, a_.eta_loc, b_.eta_loc,
            a_.eta_fast - fast_setpoint(a_), b_.eta_fast - fast_setpoint(b_),
            a_.theta_err - b_.theta_err, two_pi * omega_tot_hz_ * last_t_};
  }

  void zpl_begin() {
    zpl_active_ = true;
    zpl_c1_ = zpl_c2_ = 0.0;
    zpl_seconds_ = 0.0;
  }
  struct ZplCounts {
    double counts1 = 0.0, counts2 = 0.0, seconds = 0.0;
  };
  ZplCounts zpl_end() {
    zpl_active_ = false;
    return {zpl_c1_, zpl_c2_, zpl_seconds_};
  }

  void configure_identification(LoopId loop, const NoiseProcess& injection,
                                std::uint64_t seed, bool open_loop) {
    if (step_ != 0)
      throw std::logic_error("identification must be configured before advancing");
    if (loop == LoopId::global_loop)
      throw std::invalid_argument(
          "global loop identification is not supported; compare residual spectra "
          "with the loop toggled instead");
    tap_active_ = true;
    tap_loop_ = loop;
    tap_open_ = open_loop;
    tap_dt_ = (loop == LoopId::fast_a || loop == LoopId::fast_b) ? dtf_
                                                                 : sc_.sim.dt_local_s;
    tap_stream_ = make_stream(injection, tap_dt_, seed);
    if (open_loop) {
      if (loop == LoopId::local_a) a_.loc_enabled = false;
      if (loop == LoopId::local_b) b_.loc_enabled = false;
      if (loop == LoopId::fast_a) a_.fast_enabled = false;
      if (loop == LoopId::fast_b) b_.fast_enabled = false;
    }
  }
  TimeSeries tap_injected_series() const { return tap_series(tap_injected_, "Hz"); }
  TimeSeries tap_measured_series() const { return tap_series(tap_measured_, "rad"); }

  SimOutput take_output() {
    out_.duration_s = time();
    out_.master_seed = sc_.sim.master_seed;
    return std::move(out_);
  }

 private:
  struct NodeState {
    // physics constants for this arm
    double f_tele_hz = 0.0, f_off_hz = 0.0;
    double index = default_fiber_index, length_m = 0.0, expansion = 0.0;
    double detuning_hz = 0.0;
    // stochastic inputs
    std::unique_ptr<NoiseStream> laser, d1_vib, d2_vib, d1_walk, d2_walk;
    std::unique_ptr<NoiseStream> fiber_vib, sensor_loc, sensor_fast, x_drift, y_drift;
    Rng temp_rng{1};
    double temp_amp = 0.0, temp_period = 1.0, temp_phase = 0.0, temp_walk_rate = 0.0;
    double temp_walk = 0.0, temp0 = 0.0;
    // held noise values; the local-rate ones ramp linearly across each
    // window so the fast servo sees a continuous disturbance, not a stair
    double w = 0.0, d1 = 0.0, d2 = 0.0, vib = 0.0, x = 0.0, y = 0.0;
    double d1_from = 0.0, d1_to = 0.0, d2_from = 0.0, d2_to = 0.0;
    double vib_from = 0.0, vib_to = 0.0;
    // slow fiber state, ramped linearly between drift steps
    double delta_l_m = 0.0;
    double phi_slow = 0.0, phi_slow_step = 0.0;
    double theta_err = 0.0, theta_err_step = 0.0;
    // accumulated phases
    double det_phase = 0.0, off_phase = 0.0;
    // loops
    bool loc_enabled = true, fast_enabled = true;
    double sp_loc = 0.0;
    ControllerState ctrl_loc, ctrl_fast;
    AomState aom_loc, aom_fast;
    bool desat_on = false;
    DesaturationState desat;
    double off_alpha = 0.0, cmd_filt = 0.0, off_applied = 0.0;
    double cmd_loc = 0.0, cmd_fast = 0.0;  // held commands, act next step
    // composed values for the current step
    double eta_loc = 0.0, eta_fast = 0.0, phi_zpl = 0.0;
    double aE1 = 0.0, aN = 0.0;
    // roundtrip calibration for the feed-forward
    double rt0 = 0.0, ff_est = 0.0;
    // unlock rate limiting
    double next_loc_event = 0.0, next_fast_event = 0.0;
    bool is_a = false;
  };

  double fast_setpoint(const NodeState& n) const { return n.is_a ? sglob_phase_ : 0.0; }

  void init_node(NodeState& n, const NodeConfig& cfg, const FastLoopConfig& fl,
                 double omega_loc_hz, const std::string& tag) {
    const auto& sim = sc_.sim;
    const std::uint64_t ms = sim.master_seed;
    n.is_a = (tag == "node.A");
    n.f_off_hz = omega_loc_hz;
    n.f_tele_hz = cfg.excitation_frequency_hz + omega_loc_hz - cfg.pump_frequency_hz;
    n.index = cfg.fiber.refractive_index;
    n.length_m = cfg.fiber.length_m;
    n.expansion = cfg.fiber.expansion_per_k;
    n.detuning_hz = fl.static_detuning_hz;

    n.laser = std::make_unique<WienerStream>(
        cfg.excitation_linewidth_hz + cfg.pump_linewidth_hz, dtf_,
        derive_seed(ms, tag + ".laser"));
    auto prof = [this](const std::string& name) -> const NoiseProcess* {
      if (name.empty()) return nullptr;
      return &sc_.noise_profiles.at(name);
    };
    const double dt_loc = sim.dt_local_s;
    const double dt_glob = sim.dt_global_s;
    if (const auto* p = prof(cfg.d1_noise))
      n.d1_vib = make_stream(*p, dt_loc, derive_seed(ms, tag + ".d1"));
    if (const auto* p = prof(cfg.d2_noise))
      n.d2_vib = make_stream(*p, dt_loc, derive_seed(ms, tag + ".d2"));
    if (const auto* p = prof(cfg.d1_drift))
      n.d1_walk = make_stream(*p, dt_loc, derive_seed(ms, tag + ".d1.drift"));
    if (const auto* p = prof(cfg.d2_drift))
      n.d2_walk = make_stream(*p, dt_loc, derive_seed(ms, tag + ".d2.drift"));
    if (const auto* p = prof(cfg.fiber.vibration_noise))
      n.fiber_vib = make_stream(*p, dt_loc, derive_seed(ms, tag + ".fiber.vib"));
    if (const auto* p = prof(cfg.local_loop.sensor_noise))
      n.sensor_loc = make_stream(*p, dt_loc, derive_seed(ms, tag + ".sensor.local"));
    if (const auto* p = prof(fl.sensor_noise))
      n.sensor_fast = make_stream(*p, dtf_, derive_seed(ms, tag + ".sensor.fast"));
    if (const auto* p = prof(cfg.fast_path_drift))
      n.x_drift = make_stream(*p, dt_glob, derive_seed(ms, tag + ".fastpath"));
    if (const auto* p = prof(cfg.midpoint_drift))
      n.y_drift = make_stream(*p, dt_glob, derive_seed(ms, tag + ".midpoint"));

    n.temp_rng = Rng(derive_seed(ms, tag + ".fiber.temp"));
    n.temp_amp = cfg.fiber.temperature.sine_amplitude_k;
    n.temp_period = cfg.fiber.temperature.sine_period_s;
    n.temp_phase = deg_to_rad(cfg.fiber.temperature.sine_phase_deg);
    n.temp_walk_rate = cfg.fiber.temperature.walk_rate_k_per_rt_s;
    n.temp0 = n.temp_amp * std::sin(n.temp_phase);

    n.loc_enabled = cfg.local_loop.enabled;
    n.sp_loc = cfg.local_loop.setpoint_rad;
    {
      ControllerSpec cs;
      cs.kind = cfg.local_loop.controller.kind;
      cs.gain = cfg.local_loop.controller.gain_hz_per_rad;
      cs.rolloff_hz = cfg.local_loop.controller.rolloff_hz;
      cs.integral_corner_hz = cfg.local_loop.controller.integral_corner_hz;
      cs.output_max = cfg.local_loop.actuator_range_hz;
      cs.output_min = -cs.output_max;
      n.ctrl_loc = ControllerState(cs, sim.dt_local_s);
      n.aom_loc = AomState({cfg.local_loop.actuator_range_hz});
    }
    n.fast_enabled = fl.enabled;
    {
      ControllerSpec cs;
      cs.kind = fl.controller.kind;
      cs.gain = fl.controller.gain_hz_per_rad;
      cs.rolloff_hz = fl.controller.rolloff_hz;
      cs.integral_corner_hz = fl.controller.integral_corner_hz;
      cs.output_max = fl.actuator_range_hz;
      cs.output_min = -cs.output_max;
      n.ctrl_fast = ControllerState(cs, dtf_);
      n.aom_fast = AomState({fl.actuator_range_hz});
    }
    n.desat_on = fl.desaturation_enabled;
    if (n.desat_on) {
      n.desat = DesaturationState(fl.desaturation);
      n.off_alpha = 1.0 - std::exp(-two_pi * fl.offload_filter_hz * dtf_);
    }
  }

  void init_series() {
    const double out_dt = dtf_ * static_cast<double>(out_stride_);
    auto phase_series = [&](TimeSeries& ts, double dt) {
      ts.dt = dt;
      ts.unit = "rad";
    };
    phase_series(out_.eta_total, out_dt);
    phase_series(out_.eta_local_a, out_dt);
    phase_series(out_.eta_local_b, out_dt);
    phase_series(out_.eta_fast_a, out_dt);
    phase_series(out_.eta_fast_b, out_dt);
    const double win_dt =
        glob_enabled_ ? sc_.sim.dt_global_s * static_cast<double>(window_bins_) : 1.0;
    phase_series(out_.eta_global, win_dt);
    out_.snspd_counts_1.dt = sc_.sim.dt_global_s;
    out_.snspd_counts_1.unit = "counts";
    out_.snspd_counts_2.dt = sc_.sim.dt_global_s;
    out_.snspd_counts_2.unit = "counts";
    for (TimeSeries* ts : {&out_.cmd_local_a, &out_.cmd_local_b, &out_.cmd_fast_a,
                           &out_.cmd_fast_b, &out_.pump_offload_a, &out_.pump_offload_b}) {
      ts->dt = out_dt;
      ts->unit = "Hz";
    }
    const double drift_dt = sc_.sim.dt_drift_s;
    out_.slip_count_a.dt = drift_dt;
    out_.slip_count_a.unit = "count";
    out_.slip_count_b.dt = drift_dt;
    out_.slip_count_b.unit = "count";
    phase_series(out_.theta_err_a, drift_dt);
    phase_series(out_.theta_err_b, drift_dt);
    phase_series(out_.feedforward_phase, drift_dt);
  }

  TimeSeries tap_series(const std::vector<double>& buf, const std::string& unit) const {
    TimeSeries ts;
    ts.dt = tap_dt_;
    ts.unit = unit;
    ts.samples = buf;
    return ts;
  }

  void drift_update(double t) {
    const double dt_drift = sc_.sim.dt_drift_s;
    for (NodeState* np : {&a_, &b_}) {
      NodeState& n = *np;
      if (t > 0.0 && n.temp_walk_rate > 0.0)
        n.temp_walk += n.temp_walk_rate * std::sqrt(dt_drift) * n.temp_rng.gaussian();
      const double temp = n.temp_amp * std::sin(two_pi * t / n.temp_period + n.temp_phase) +
                          n.temp_walk;
      n.delta_l_m = n.expansion * n.length_m * (temp - n.temp0);
      const double phi_target =
          -two_pi * n.index * n.f_tele_hz * n.delta_l_m / speed_of_light;
      const double theta_target = length_variation_error(n.index, n.delta_l_m, n.f_off_hz);
      n.phi_slow_step = (phi_target - n.phi_slow) / static_cast<double>(stride_drift_);
      n.theta_err_step = (theta_target - n.theta_err) / static_cast<double>(stride_drift_);
    }

    const auto& ff = sc_.feedforward;
    if (ff.enabled) {
      const auto drift_index = step_ / stride_drift_;
      const auto every = static_cast<std::size_t>(
          std::llround(ff.update_period_s / dt_drift));
      if (drift_index % every == 0) {
        double est[2] = {0.0, 0.0};
        int k = 0;
        for (NodeState* np : {&a_, &b_}) {
          NodeState& n = *np;
          const double rt = 2.0 * n.index * (n.length_m + n.delta_l_m) / speed_of_light +
                            ff.measurement_noise_s * rng_ff_.gaussian();
          if (step_ == 0) n.rt0 = rt;
          n.ff_est = pi * n.f_off_hz * (rt - n.rt0);
          est[k++] = n.ff_est;
        }
        s_ff_ = -(est[0] - est[1]);
      }
    }

    out_.slip_count_a.samples.push_back(
        static_cast<double>(std::llround((a_.phi_slow + a_.vib) / two_pi)));
    out_.slip_count_b.samples.push_back(
        static_cast<double>(std::llround((b_.phi_slow + b_.vib) / two_pi)));
    out_.theta_err_a.samples.push_back(a_.theta_err);
    out_.theta_err_b.samples.push_back(b_.theta_err);
    out_.feedforward_phase.samples.push_back(s_ff_);
  }

  void local_boundary_draws(NodeState& n) {
    n.d1_from = n.d1;
    n.d1_to = detail::step_or0(n.d1_vib) + detail::step_or0(n.d1_walk);
    n.d2_from = n.d2;
    n.d2_to = detail::step_or0(n.d2_vib) + detail::step_or0(n.d2_walk);
    n.vib_from = n.vib;
    n.vib_to = detail::step_or0(n.fiber_vib);
  }

  void interp_held(NodeState& n, double frac) {
    n.d1 = n.d1_from + frac * (n.d1_to - n.d1_from);
    n.d2 = n.d2_from + frac * (n.d2_to - n.d2_from);
    n.vib = n.vib_from + frac * (n.vib_to - n.vib_from);
  }

  void advance_node(NodeState& n) {
    n.w = n.laser->step();
    n.aE1 = n.aom_loc.step(n.cmd_loc, dtf_);
    n.aN = n.aom_fast.step(n.cmd_fast, dtf_);
    if (n.desat_on) {
      n.cmd_filt += n.off_alpha * (n.aom_fast.applied_hz() - n.cmd_filt);
      n.off_applied = n.desat.step(n.cmd_filt, dtf_);
    }
    n.off_phase += two_pi * n.off_applied * dtf_;
    n.det_phase += two_pi * n.detuning_hz * dtf_;
    n.phi_slow += n.phi_slow_step;
    n.theta_err += n.theta_err_step;
  }

  void compose_node(NodeState& n) {
    const double fiber = n.phi_slow + n.vib;
    n.eta_loc = n.aE1 + n.d1 - n.d2;
    n.eta_fast = n.w + n.d2 + n.det_phase - n.off_phase + n.aN + fiber + n.x - wref_;
    n.phi_zpl = n.w + n.aE1 + n.d1 + n.det_phase - n.off_phase + n.aN + fiber +
                n.theta_err + n.x + n.y;
  }

  void push_unlock(double t, const std::string& loop, double& gate) {
    if (t < gate) return;
    gate = t + 0.01;  // one event per excursion onset, 10 ms hold-off
    out_.unlocks.push_back({t, loop});
  }

  void local_loop(NodeState& n, double t) {
    const double resid = n.eta_loc - n.sp_loc;
    const double noise = detail::step_or0(n.sensor_loc);
    double inj = 0.0;
    const LoopId id = n.is_a ? LoopId::local_a : LoopId::local_b;
    const bool tapped = tap_active_ && tap_loop_ == id;
    if (tapped) {
      inj = tap_stream_->step();
      tap_injected_.push_back(inj);
      tap_measured_.push_back(resid + noise);
    }
    // a fringe discriminator cannot tell rungs apart: lock health is the
    // wrapped error dwelling away from the anti-fringe point
    const double werr = wrap_phase(resid);
    if (std::abs(werr) > 0.8 * pi) push_unlock(t, loop_name(id), n.next_loc_event);
    const double err = werr + noise;
    // correction opposes the error; the injection rides on the actuator drive
    n.cmd_loc = (n.loc_enabled ? -n.ctrl_loc.step(err) : 0.0) + inj;
  }

  void fast_loop(NodeState& n, double t, bool dark) {
    const double resid = n.eta_fast - fast_setpoint(n);
    double inj = 0.0;
    const LoopId id = n.is_a ? LoopId::fast_a : LoopId::fast_b;
    const bool tapped = tap_active_ && tap_loop_ == id;
    // Gated detection: no light means no error sample, so the servo input is
    // grounded and the integrator carries the last frequency correction.
    double err = 0.0;
    if (!dark) {
      const double noise = detail::step_or0(n.sensor_fast);
      if (std::abs(resid) >= two_pi) push_unlock(t, loop_name(id), n.next_fast_event);
      err = std::clamp(resid, -two_pi, two_pi) + noise;
      if (tapped) tap_measured_.push_back(resid + noise);
    } else if (tapped) {
      tap_measured_.push_back(resid);
    }
    if (tapped) {
      inj = tap_stream_->step();
      tap_injected_.push_back(inj);
    }
    n.cmd_fast = (n.fast_enabled ? -n.ctrl_fast.step(err) : 0.0) + inj;
  }

  void global_step(double t) {
    if (!glob_enabled_) return;
    const double dt_g = sc_.sim.dt_global_s;
    // beat phase of the leaked stabilization light at the central splitter;
    // the detectors integrate across the bin, so the broadband part of the
    // fast residuals averages out instead of aliasing into the counts
    double psi = (a_.eta_fast - b_.eta_fast) + (a_.y - b_.y);
    double spread = 0.0;
    if (bin_psi_n_ > 0) {
      const double n = static_cast<double>(bin_psi_n_);
      psi = bin_psi_sum_ / n;
      spread = std::max(0.0, bin_psi_sq_ / n - psi * psi);
    }
    bin_psi_sum_ = bin_psi_sq_ = 0.0;
    bin_psi_n_ = 0;
    const auto& snspd = sc_.midpoint.global_loop.snspd;
    const double t_mid = t - 0.5 * dt_g;
    const double theta = two_pi * beat_hz_ * t_mid + psi;
    const double half_cycle = pi * beat_hz_ * dt_g;
    const double carrier_avg = half_cycle != 0.0 ? std::sin(half_cycle) / half_cycle : 1.0;
    const double contrast =
        snspd.beat_contrast * carrier_avg * std::exp(-0.5 * spread);
    const double base = 0.5 * snspd.leak_rate_hz * stab_scale_ * dt_g;
    const double r1 = base * (1.0 + contrast * std::cos(theta));
    const double r2 = base * (1.0 - contrast * std::cos(theta));
    double c1 = r1, c2 = r2;
    if (snspd.shot_noise) {
      c1 = static_cast<double>(rng_snspd_.poisson(r1));
      c2 = static_cast<double>(rng_snspd_.poisson(r2));
    }
    out_.snspd_counts_1.samples.push_back(c1);
    out_.snspd_counts_2.samples.push_back(c2);
    const double ref = two_pi * beat_hz_ * t_mid;
    win_i_ += (c1 - c2) * std::cos(ref);
    win_q_ += (c1 - c2) * -std::sin(ref);
    win_c1_ += c1;
    win_c2_ += c2;
    // true low-rate residual, tracked independently of the demodulator
    stats_glob_pending_ += (sglob_phase_ + (a_.y - b_.y)) - global_target();
    ++bin_in_window_;
    if (bin_in_window_ == window_bins_) {
      close_window(t);
      bin_in_window_ = 0;
      win_i_ = win_q_ = win_c1_ = win_c2_ = 0.0;
      stats_glob_pending_ = 0.0;
    }
  }

  double global_target() const { return target_mu_ + theta_offset_ + s_ff_; }

  void close_window(double t) {
    const auto& snspd = sc_.midpoint.global_loop.snspd;
    if (win_c1_ + win_c2_ < snspd.min_counts_per_window) {
      push_unlock(t, "global", next_glob_event_);
      out_.eta_global.samples.push_back(out_.eta_global.samples.empty()
                                            ? 0.0
                                            : out_.eta_global.samples.back());
      return;
    }
    const double psi_hat = std::atan2(win_q_, win_i_);
    const double err = wrap_phase(psi_hat - global_target());
    out_.eta_global.samples.push_back(err);
    sglob_phase_ -= g_glob_ * err;
    if (time() >= sc_.sim.settle_s)
      out_.stats_global.add(stats_glob_pending_ / static_cast<double>(window_bins_));
  }

  void zpl_step() {
    if (!zpl_active_) return;
    const double dt_g = sc_.sim.dt_global_s;
    const auto& fr = sc_.fringe;
    const double base = 0.5 * fr.rate_hz * zpl_scale_ * dt_g;
    const double r1 = base * (1.0 + fr.contrast * std::cos(eta_total_now_));
    const double r2 = base * (1.0 - fr.contrast * std::cos(eta_total_now_));
    if (sc_.midpoint.global_loop.snspd.shot_noise) {
      zpl_c1_ += static_cast<double>(rng_zpl_.poisson(r1));
      zpl_c2_ += static_cast<double>(rng_zpl_.poisson(r2));
    } else {
      zpl_c1_ += r1;
      zpl_c2_ += r2;
    }
    zpl_seconds_ += dt_g * zpl_scale_;
  }

  void sample_output(double) {
    out_.eta_total.samples.push_back(eta_total_now_);
    out_.eta_local_a.samples.push_back(a_.eta_loc);
    out_.eta_local_b.samples.push_back(b_.eta_loc);
    out_.eta_fast_a.samples.push_back(a_.eta_fast - fast_setpoint(a_));
    out_.eta_fast_b.samples.push_back(b_.eta_fast - fast_setpoint(b_));
    out_.cmd_local_a.samples.push_back(a_.aom_loc.applied_hz());
    out_.cmd_local_b.samples.push_back(b_.aom_loc.applied_hz());
    out_.cmd_fast_a.samples.push_back(a_.aom_fast.applied_hz());
    out_.cmd_fast_b.samples.push_back(b_.aom_fast.applied_hz());
    out_.pump_offload_a.samples.push_back(a_.off_applied);
    out_.pump_offload_b.samples.push_back(b_.off_applied);
  }

  void fast_step() {
    const double t = time();
    last_t_ = t;
    if (step_ % stride_drift_ == 0) drift_update(t);
    if (step_ % stride_glob_ == 0) {
      a_.x = detail::step_or0(a_.x_drift);
      a_.y = detail::step_or0(a_.y_drift);
      b_.x = detail::step_or0(b_.x_drift);
      b_.y = detail::step_or0(b_.y_drift);
    }
    const bool local_boundary = (step_ % stride_loc_ == 0);
    if (local_boundary) {
      local_boundary_draws(a_);
      local_boundary_draws(b_);
    }
    const double frac =
        static_cast<double>(step_ % stride_loc_ + 1) / static_cast<double>(stride_loc_);
    interp_held(a_, frac);
    interp_held(b_, frac);
    wref_ = ref_->step();
    advance_node(a_);
    advance_node(b_);
    compose_node(a_);
    compose_node(b_);
    eta_total_now_ = (a_.phi_zpl - b_.phi_zpl) + two_pi * omega_tot_hz_ * t;
    if (glob_enabled_) {
      const double psi_f = (a_.eta_fast - b_.eta_fast) + (a_.y - b_.y);
      bin_psi_sum_ += psi_f;
      bin_psi_sq_ += psi_f * psi_f;
      ++bin_psi_n_;
    }

    const bool dark = dark_on_ && (step_ % stride_loc_) >= dark_start_;
    if (local_boundary) {
      local_loop(a_, t);
      local_loop(b_, t);
    }
    fast_loop(a_, t, dark);
    fast_loop(b_, t, dark);
    if (step_ % stride_glob_ == 0) {
      global_step(t);
      zpl_step();
    }

    if (t >= sc_.sim.settle_s) {
      out_.stats_total.add(eta_total_now_);
      out_.stats_fast_a.add(a_.eta_fast - fast_setpoint(a_));
      out_.stats_fast_b.add(b_.eta_fast - fast_setpoint(b_));
      if (local_boundary) {
        out_.stats_local_a.add(a_.eta_loc - a_.sp_loc);
        out_.stats_local_b.add(b_.eta_loc - b_.sp_loc);
      }
    }
    if (step_ % out_stride_ == 0) sample_output(t);
    ++step_;
  }

  ScenarioConfig sc_;
  double dtf_ = 0.0;
  std::size_t stride_loc_ = 1, stride_glob_ = 1, stride_drift_ = 1, out_stride_ = 1;
  bool dark_on_ = false;
  std::size_t dark_start_ = 0;
  double stab_scale_ = 1.0, zpl_scale_ = 1.0;
  double omega_tot_hz_ = 0.0, beat_hz_ = 0.0;

  NodeState a_, b_;
  std::unique_ptr<NoiseStream> ref_;
  double wref_ = 0.0;

  bool glob_enabled_ = true;
  std::size_t window_bins_ = 1, bin_in_window_ = 0;
  double g_glob_ = 0.0;
  double target_mu_ = 0.0, theta_offset_ = 0.0, s_ff_ = 0.0;
  double sglob_phase_ = 0.0;
  double win_i_ = 0.0, win_q_ = 0.0, win_c1_ = 0.0, win_c2_ = 0.0;
  // beat phase integrated across the count bin at the fast cadence
  double bin_psi_sum_ = 0.0, bin_psi_sq_ = 0.0;
  std::size_t bin_psi_n_ = 0;
  double stats_glob_pending_ = 0.0;
  double next_glob_event_ = 0.0;

  Rng rng_snspd_{1}, rng_zpl_{1}, rng_ff_{1};

  bool zpl_active_ = false;
  double zpl_c1_ = 0.0, zpl_c2_ = 0.0, zpl_seconds_ = 0.0;

  bool tap_active_ = false;
  LoopId tap_loop_ = LoopId::global_loop;
  bool tap_open_ = false;
  double tap_dt_ = 0.0;
  std::unique_ptr<NoiseStream> tap_stream_;
  std::vector<double> tap_injected_, tap_measured_;

  double eta_total_now_ = 0.0, last_t_ = 0.0;
  std::size_t step_ = 0;
  SimOutput out_;
};

inline SystemModel build_system(const ScenarioConfig& sc) { return SystemModel(sc); }

inline SimOutput simulate(SystemModel& system, double duration_s) {
  system.advance(duration_s);
  return system.take_output();
}

inline SimOutput simulate(const ScenarioConfig& sc) {
  SystemModel system(sc);
  return simulate(system, sc.sim.duration_s);
}

// Phase of the count-difference beat against the given clock, one estimate
// per analysis window of about three beat periods. Windows whose total
// counts fall under min_counts hold the previous value and are reported as
// loss-of-beat times. Scaling both count series by a common factor leaves
// the recovered phase unchanged; the per-window scatter shrinks as
// 1/sqrt(total counts).
inline DemodResult snspd_global_demod(const TimeSeries& counts1, const TimeSeries& counts2,
                                      const ClockSpec& beat,
                                      double min_counts = 10.0) {
  if (counts1.size() != counts2.size())
    throw std::invalid_argument("count series must have equal length");
  if (counts1.dt <= 0.0 || counts1.dt != counts2.dt)
    throw std::invalid_argument("count series must share a positive dt");
  const double f = std::abs(static_cast<double>(beat.frequency_hz));
  if (f <= 0.0) throw std::invalid_argument("beat clock frequency must be nonzero");
  const double samples_per_period = 1.0 / (f * counts1.dt);
  if (samples_per_period < 4.0)
    throw std::invalid_argument("count binning too coarse for the beat clock");
  const auto window = static_cast<std::size_t>(
      std::max(4.0, std::round(3.0 * samples_per_period)));
  const std::size_t n_win = counts1.size() / window;

  DemodResult res;
  res.phase.dt = counts1.dt * static_cast<double>(window);
  res.phase.t0 = counts1.t0;
  res.phase.unit = "rad";
  double held = 0.0;
  bool have_held = false;
  for (std::size_t w = 0; w < n_win; ++w) {
    double i = 0.0, q = 0.0, total = 0.0;
    for (std::size_t k = 0; k < window; ++k) {
      const std::size_t idx = w * window + k;
      const double t = counts1.time_at(idx);
      const double ref = two_pi * static_cast<double>(beat.frequency_hz) * t +
                         beat.phase_rad;
      const double d = counts1.samples[idx] - counts2.samples[idx];
      i += d * std::cos(ref);
      q += d * -std::sin(ref);
      total += counts1.samples[idx] + counts2.samples[idx];
    }
    if (total < min_counts) {
      res.unlock_times.push_back(counts1.time_at(w * window));
      res.phase.samples.push_back(have_held ? held : 0.0);
      continue;
    }
    double psi = std::atan2(q, i);
    if (have_held) psi = held + wrap_phase(psi - held);  // keep continuity
    held = psi;
    have_held = true;
    res.phase.samples.push_back(psi);
  }
  return res;
}

// Clock-phase corrections from a roundtrip-time record: the length change
// seen at the offset frequency, relative to the first sample. The fiber
// index cancels, so only the offset frequency enters.
inline TimeSeries feedforward_from_roundtrip(const TimeSeries& roundtrip_s,
                                             double offset_frequency_hz) {
  if (roundtrip_s.size() == 0)
    throw std::invalid_argument("roundtrip record is empty");
  if (offset_frequency_hz <= 0.0)
    throw std::invalid_argument("offset frequency must be positive");
  TimeSeries out = roundtrip_s;
  out.unit = "rad";
  const double rt0 = roundtrip_s.samples.front();
  for (auto& v : out.samples) v = pi * offset_frequency_hz * (v - rt0);
  return out;
}

struct IdentificationRun {
  LoopId loop = LoopId::local_a;
  TimeSeries injected;      // Hz, at the loop's own rate
  TimeSeries measured_on;   // rad, loop closed
  TimeSeries measured_off;  // rad, loop opened, same noise realizations
};

// Two passes with identical seeds, differing only in whether the chosen
// controller acts. The injection drives the actuator in both passes; the
// measured records are the unwrapped loop phase plus sensor noise.
inline IdentificationRun run_identification(const ScenarioConfig& sc, LoopId loop,
                                            const NoiseProcess& injection,
                                            double duration_s) {
  if (duration_s <= 0.0) throw std::invalid_argument("identification duration must be > 0");
  IdentificationRun out;
  out.loop = loop;
  // the global loop stays disengaged so both passes share identical ambient
  // realizations; it only enters these loops through the fast-A setpoint
  ScenarioConfig run_cfg = sc;
  run_cfg.midpoint.global_loop.enabled = false;
  // stabilization light runs continuously while identifying
  run_cfg.sim.dark_periods = false;
  const std::uint64_t seed = derive_seed(sc.sim.master_seed, "ident.injection");
  for (int pass = 0; pass < 2; ++pass) {
    SystemModel sys(run_cfg);
    sys.configure_identification(loop, injection, seed, pass == 1);
    sys.advance(duration_s);
    if (pass == 0) {
      out.injected = sys.tap_injected_series();
      out.measured_on = sys.tap_measured_series();
    } else {
      out.measured_off = sys.tap_measured_series();
    }
  }
  return out;
}

struct FringeSweepResult {
  std::vector<double> setpoints_rad;         // the swept values, one sweep's worth
  std::vector<FringeFit> fits;               // one fit per sweep
  std::vector<double> sweep_time_s;          // time at the end of each sweep
  std::vector<double> delta_theta_err_rad;   // true arm asymmetry at that time
  std::vector<double> ff_phase_rad;          // applied feed-forward at that time
  std::vector<std::vector<double>> rates1_hz;  // raw detector rates per sweep
  std::vector<std::vector<double>> rates2_hz;
};

// Repeated fringe scans on a continuing timeline: per sweep the global
// setpoint steps through n_setpoints values spanning a full turn, counts
// are taken after a settling pause, and a cosine fit per sweep recovers
// contrast and centre phase.
inline FringeSweepResult fringe_sweep(SystemModel& system, std::size_t n_setpoints,
                                      std::size_t sweeps, double settle_s,
                                      double measure_s) {
  if (n_setpoints < 5)
    throw std::invalid_argument("fringe sweep needs at least 5 setpoints");
  if (sweeps < 1) throw std::invalid_argument("fringe sweep needs at least 1 sweep");
  if (settle_s < 0.0 || measure_s <= 0.0)
    throw std::invalid_argument("fringe sweep timing must be positive");
  FringeSweepResult res;
  const double base = system.global_setpoint();
  for (std::size_t j = 0; j < n_setpoints; ++j)
    res.setpoints_rad.push_back(static_cast<double>(j) * two_pi /
                                static_cast<double>(n_setpoints));
  for (std::size_t s = 0; s < sweeps; ++s) {
    std::vector<double> r1, r2;
    r1.reserve(n_setpoints);
    r2.reserve(n_setpoints);
    for (double mu : res.setpoints_rad) {
      system.set_global_setpoint(base + mu);
      system.advance(settle_s);
      system.zpl_begin();
      system.advance(measure_s);
      const auto z = system.zpl_end();
      r1.push_back(z.seconds > 0.0 ? z.counts1 / z.seconds : 0.0);
      r2.push_back(z.seconds > 0.0 ? z.counts2 / z.seconds : 0.0);
    }
    res.fits.push_back(fit_fringe(res.setpoints_rad, r1, r2));
    res.sweep_time_s.push_back(system.time());
    res.delta_theta_err_rad.push_back(system.delta_theta_err());
    res.ff_phase_rad.push_back(system.feedforward_phase());
    res.rates1_hz.push_back(std::move(r1));
    res.rates2_hz.push_back(std::move(r2));
  }
  system.set_global_setpoint(base);
  return res;
}

}  // namespace phasesync
