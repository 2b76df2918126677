#pragma once

// Optical carrier bookkeeping: accumulated propagation phase, two-field
// heterodyne intensity, and the scalar error/fidelity conversions used all
// over the toolkit. Phases are radians internally; degree conversions happen
// only at I/O boundaries.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasesync/constants.hpp"
#include "phasesync/time_series.hpp"

namespace phasesync {

struct OpticalFieldSpec {
  double frequency_hz = 0.0;   // carrier nu; omega = 2*pi*nu
  double intensity = 1.0;      // base intensity I0, arbitrary units
  double phase_offset_rad = 0.0;
};

struct PathSegment {
  double length_m = 0.0;
  double refractive_index = default_fiber_index;
};

struct ClockSpec {
  std::int64_t frequency_hz = 0;  // RF clocks are integer-Hz by design
  double phase_rad = 0.0;
};

namespace detail {
inline void check_field(const OpticalFieldSpec& f) {
  if (f.intensity < 0.0) throw std::invalid_argument("field intensity must be >= 0");
  if (f.frequency_hz < 0.0) throw std::invalid_argument("field frequency must be >= 0");
}
inline void check_path(const PathSegment& p) {
  if (p.length_m < 0.0) throw std::invalid_argument("path length must be >= 0");
  if (p.refractive_index <= 0.0) throw std::invalid_argument("refractive index must be > 0");
}
}  // namespace detail

// Phase of a field after propagating the given chain of segments:
//   phi(t) = omega*t - sum_j n_j*omega*L_j/c + theta0
// Sign convention: propagation subtracts. Unwrapped by default.
inline double accumulated_phase(const OpticalFieldSpec& field,
                                const std::vector<PathSegment>& paths, double t,
                                bool wrap = false) {
  detail::check_field(field);
  const double omega = two_pi * field.frequency_hz;
  double geometric = 0.0;
  for (const auto& p : paths) {
    detail::check_path(p);
    geometric += p.refractive_index * p.length_m;
  }
  const double phi = omega * t - geometric * omega / speed_of_light + field.phase_offset_rad;
  return wrap ? wrap_phase(phi) : phi;
}

// Detector intensity for two overlapped fields of equal base intensity that
// travelled lengths D1, D2 through a medium of index n:
//   I(t) = 2*I0 + 2*I0*cos((w2-w1)*t + (n/c)*(w1*D1 - w2*D2) + (th2-th1))
inline double heterodyne_intensity(const OpticalFieldSpec& u1,
                                   const OpticalFieldSpec& u2, double d1_m,
                                   double d2_m, double n, double t) {
  detail::check_field(u1);
  detail::check_field(u2);
  if (d1_m < 0.0 || d2_m < 0.0) throw std::invalid_argument("path length must be >= 0");
  if (n <= 0.0) throw std::invalid_argument("refractive index must be > 0");
  const double rel = std::abs(u1.intensity - u2.intensity);
  if (rel > 1e-9 * std::max(1.0, std::abs(u1.intensity)))
    throw std::invalid_argument("heterodyne model assumes equal base intensities");
  const double i0 = u1.intensity;
  const double w1 = two_pi * u1.frequency_hz;
  const double w2 = two_pi * u2.frequency_hz;
  const double arg = (w2 - w1) * t + (n / speed_of_light) * (w1 * d1_m - w2 * d2_m) +
                     (u2.phase_offset_rad - u1.phase_offset_rad);
  return 2.0 * i0 + 2.0 * i0 * std::cos(arg);
}

// sampled beat record, convenience wrapper over heterodyne_intensity
inline TimeSeries heterodyne_beat(const OpticalFieldSpec& u1,
                                  const OpticalFieldSpec& u2, double d1_m,
                                  double d2_m, double n, double dt,
                                  std::size_t count) {
  TimeSeries ts = make_series(dt, count, "intensity");
  for (std::size_t k = 0; k < count; ++k)
    ts.samples[k] = heterodyne_intensity(u1, u2, d1_m, d2_m, n, ts.time_at(k));
  return ts;
}

// entangled-state fidelity under a fixed phase error: F = (1 + cos)/2
inline double fidelity_from_phase_error(double delta_phi_rad) {
  return 0.5 * (1.0 + std::cos(delta_phi_rad));
}

// Phase error in degrees after M slips when signal and stabilization carriers
// differ: each full 2*pi slip of the stabilization field misses the signal
// field's phase by the fractional frequency offset.
inline double phase_slip_error_deg(std::int64_t slips, double f_signal_hz,
                                   double f_stab_hz) {
  if (f_stab_hz <= 0.0) throw std::invalid_argument("stabilization frequency must be > 0");
  if (f_signal_hz <= 0.0) throw std::invalid_argument("signal frequency must be > 0");
  return static_cast<double>(slips) * 360.0 * (f_signal_hz - f_stab_hz) / f_stab_hz;
}

// Residual phase between two carriers separated by delta_f after the common
// path stretched by delta_l: theta = n * delta_l * 2*pi*delta_f / c  (rad)
inline double length_variation_error(double n, double delta_l_m, double delta_f_hz) {
  if (n <= 0.0) throw std::invalid_argument("refractive index must be > 0");
  return n * delta_l_m * two_pi * delta_f_hz / speed_of_light;
}

}  // namespace phasesync
