#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasesync/constants.hpp"

namespace phasesync {

// uniformly sampled record; t_k = t0 + k*dt
struct TimeSeries {
  double dt = 0.0;
  double t0 = 0.0;
  std::string unit = "rad";
  std::vector<double> samples;

  std::size_t size() const { return samples.size(); }
  double duration() const { return dt * static_cast<double>(samples.size()); }
  double time_at(std::size_t k) const { return t0 + dt * static_cast<double>(k); }

  double mean() const {
    if (samples.empty()) return 0.0;
    double acc = 0.0;
    for (double x : samples) acc += x;
    return acc / static_cast<double>(samples.size());
  }

  double rms() const {
    if (samples.empty()) return 0.0;
    double acc = 0.0;
    for (double x : samples) acc += x * x;
    return std::sqrt(acc / static_cast<double>(samples.size()));
  }

  // rms about the mean
  double std_dev() const {
    if (samples.empty()) return 0.0;
    const double m = mean();
    double acc = 0.0;
    for (double x : samples) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(samples.size()));
  }
};

inline TimeSeries make_series(double dt, std::size_t n, const std::string& unit = "rad") {
  if (dt <= 0.0) throw std::invalid_argument("time series dt must be positive");
  TimeSeries ts;
  ts.dt = dt;
  ts.unit = unit;
  ts.samples.assign(n, 0.0);
  return ts;
}

// wrap to (-pi, pi]
inline double wrap_phase(double phi) {
  double w = std::remainder(phi, two_pi);
  if (w <= -pi) w += two_pi;
  return w;
}

// in-place unwrap: removes 2*pi jumps between consecutive samples
inline void unwrap_inplace(std::vector<double>& phase) {
  double offset = 0.0;
  for (std::size_t k = 1; k < phase.size(); ++k) {
    const double prev = phase[k - 1];
    double cur = phase[k] + offset;
    const double jump = cur - prev;
    if (jump > pi || jump <= -pi) {
      const double corr = -two_pi * std::round(jump / (two_pi));
      offset += corr;
      cur += corr;
    }
    phase[k] = cur;
  }
}

}  // namespace phasesync
