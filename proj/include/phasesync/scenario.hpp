#pragma once

// Scenario configuration: a single JSONC document describes the two nodes,
// the midpoint, the clock plan, named noise profiles, multirate steps and
// output selection. Angles are degrees in the file and radians everywhere
// past the parser. Validation reports the offending key by full path.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "phasesync/constants.hpp"
#include "phasesync/control.hpp"
#include "phasesync/noise.hpp"
#include "phasesync/planner.hpp"

namespace phasesync {

struct ControllerConfig {
  ControllerKind kind = ControllerKind::proportional;
  double gain_hz_per_rad = 0.0;
  double rolloff_hz = 0.0;
  double integral_corner_hz = 0.0;
};

struct LocalLoopConfig {
  bool enabled = true;
  ControllerConfig controller;
  std::string sensor_noise;  // white profile name, may be empty
  double actuator_range_hz = 1.0e6;
  double setpoint_rad = 0.0;
};

struct FastLoopConfig {
  bool enabled = true;
  ControllerConfig controller;
  std::string sensor_noise;
  double actuator_range_hz = 1.0e6;
  double static_detuning_hz = 0.0;  // standing beat offset the offload removes
  bool desaturation_enabled = true;
  DesaturationLink desaturation;
  double offload_filter_hz = 10.0;  // mean-command lowpass feeding the offload
};

struct TemperatureConfig {
  double sine_amplitude_k = 0.0;
  double sine_period_s = 3600.0;
  double sine_phase_deg = 0.0;
  double walk_rate_k_per_rt_s = 0.0;
};

struct FiberConfig {
  double length_m = 10000.0;
  double refractive_index = default_fiber_index;
  double expansion_per_k = silica_expansion_coeff;
  TemperatureConfig temperature;
  std::string vibration_noise;  // mechanical profile name, may be empty
};

struct NodeConfig {
  std::string name;
  double excitation_frequency_hz = 4.70450e14;
  double pump_frequency_hz = 2.81759e14;
  double excitation_linewidth_hz = 10.0e3;
  double pump_linewidth_hz = 15.0e3;
  std::string d1_noise;  // excitation-path vibration profile (objective vs sample)
  std::string d2_noise;  // stabilization-path vibration profile
  std::string d1_drift;  // optional slow walk on the excitation path
  std::string d2_drift;  // optional slow walk on the stabilization path
  LocalLoopConfig local_loop;
  FiberConfig fiber;
  std::string fast_path_drift;  // eta_d6 - eta_d8 walk, suppressed by the fast loop
  std::string midpoint_drift;   // eta_d7 - eta_d6 + eta_d8 walk, the global loop's job
};

struct SnspdConfig {
  double leak_rate_hz = 1.0e5;  // summed mean rate over both detectors
  double beat_contrast = 0.6;
  double max_rate_hz = 1.0e6;   // per detector
  bool shot_noise = true;
  int integration_beat_periods = 3;
  double min_counts_per_window = 10.0;
};

struct GlobalLoopConfig {
  bool enabled = true;
  double bandwidth_hz = 50.0;  // tuning target; the gain follows from it
  double setpoint_rad = 0.0;
  double theta_offset_rad = 0.0;  // clock-phase to fringe mapping constant
  SnspdConfig snspd;
};

struct FeedforwardConfig {
  bool enabled = false;
  double measurement_noise_s = 1.0e-12;  // roundtrip-time readout jitter
  double update_period_s = 1.0;
};

struct FringeConfig {
  double rate_hz = 1.0e5;  // summed detector rate during a sweep measurement
  double contrast = 1.0;   // device contrast before phase jitter
  double settle_s = 0.03;
  double measure_s = 0.03;
};

struct MidpointConfig {
  double reference_frequency_hz = 1.88691e14;
  double reference_linewidth_hz = 100.0;
  FastLoopConfig fast_loop_a;
  FastLoopConfig fast_loop_b;
  GlobalLoopConfig global_loop;
};

struct SimConfig {
  double duration_s = 1.0;
  std::uint64_t master_seed = 1;
  double dt_fast_s = 2.0e-7;
  double dt_local_s = 1.0e-5;
  double dt_global_s = 1.0e-4;
  double dt_drift_s = 1.0e-2;
  bool dark_periods = false;
  double dark_fraction = 0.25;
  double settle_s = 0.1;            // excluded from residual statistics
  std::size_t output_decimation = 10;  // local steps between stored samples
};

struct OutputConfig {
  std::string directory = "out";
  std::string format = "text";  // text | binary
};

struct ScenarioConfig {
  FrequencyPlan plan;
  std::map<std::string, NoiseProcess> noise_profiles;
  NodeConfig node_a;
  NodeConfig node_b;
  MidpointConfig midpoint;
  FeedforwardConfig feedforward;
  FringeConfig fringe;
  SimConfig sim;
  OutputConfig outputs;
};

namespace detail {

using json = nlohmann::json;

[[noreturn]] inline void config_fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config error at " + path + ": " + what);
}

inline const json& need(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) config_fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) config_fail(path + "." + key, "missing required key");
  return *it;
}

inline double need_num(const json& j, const std::string& key, const std::string& path) {
  const json& v = need(j, key, path);
  if (!v.is_number()) config_fail(path + "." + key, "expected a number");
  return v.get<double>();
}

inline double opt_num(const json& j, const std::string& key, double fallback,
                      const std::string& path) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  if (!j[key].is_number()) config_fail(path + "." + key, "expected a number");
  return j[key].get<double>();
}

inline bool opt_bool(const json& j, const std::string& key, bool fallback,
                     const std::string& path) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  if (!j[key].is_boolean()) config_fail(path + "." + key, "expected a boolean");
  return j[key].get<bool>();
}

inline std::string opt_str(const json& j, const std::string& key, const std::string& fallback,
                           const std::string& path) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  if (!j[key].is_string()) config_fail(path + "." + key, "expected a string");
  return j[key].get<std::string>();
}

inline std::string need_str(const json& j, const std::string& key, const std::string& path) {
  const json& v = need(j, key, path);
  if (!v.is_string()) config_fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

inline NoiseProcess parse_profile(const json& j, const std::string& path) {
  const std::string kind = need_str(j, "kind", path);
  if (kind == "laser") {
    return LaserLinewidthSpec{need_num(j, "linewidth_hz", path)};
  }
  if (kind == "mechanical") {
    const json& modes = need(j, "modes", path);
    if (!modes.is_array() || modes.empty())
      config_fail(path + ".modes", "expected a non-empty array");
    MechanicalSpec spec;
    std::size_t idx = 0;
    for (const auto& m : modes) {
      const std::string mp = path + ".modes[" + std::to_string(idx++) + "]";
      spec.modes.push_back({need_num(m, "f0_hz", mp), need_num(m, "q", mp),
                            deg_to_rad(need_num(m, "rms_deg", mp))});
    }
    return spec;
  }
  if (kind == "thermal_walk") {
    return ThermalDriftSpec{deg_to_rad(need_num(j, "rate_deg_per_rt_s", path))};
  }
  if (kind == "white") {
    return WhiteSpec{deg_to_rad(need_num(j, "rms_deg", path)),
                     opt_num(j, "bandwidth_hz", 0.0, path)};
  }
  if (kind == "white_hz") {  // actuator-domain injection signal
    return WhiteSpec{need_num(j, "rms_hz", path), opt_num(j, "bandwidth_hz", 0.0, path)};
  }
  if (kind == "prbs") {
    return PrbsSpec{need_num(j, "amplitude_hz", path), opt_num(j, "chip_period_s", 0.0, path)};
  }
  if (kind == "shot") {
    return ShotCountsSpec{need_num(j, "mean_rate_hz", path)};
  }
  config_fail(path + ".kind", "unknown noise kind '" + kind + "'");
}

inline ControllerConfig parse_controller(const json& j, const std::string& path) {
  ControllerConfig c;
  const std::string kind = need_str(j, "kind", path);
  if (kind == "proportional")
    c.kind = ControllerKind::proportional;
  else if (kind == "proportional_rolloff")
    c.kind = ControllerKind::proportional_rolloff;
  else if (kind == "pi")
    c.kind = ControllerKind::pi;
  else
    config_fail(path + ".kind", "unknown controller kind '" + kind + "'");
  c.gain_hz_per_rad = need_num(j, "gain_hz_per_rad", path);
  c.rolloff_hz = opt_num(j, "rolloff_hz", 0.0, path);
  c.integral_corner_hz = opt_num(j, "integral_corner_hz", 0.0, path);
  return c;
}

inline LocalLoopConfig parse_local_loop(const json& j, const std::string& path) {
  LocalLoopConfig lc;
  lc.enabled = opt_bool(j, "enabled", true, path);
  lc.controller = parse_controller(need(j, "controller", path), path + ".controller");
  lc.sensor_noise = opt_str(j, "sensor_noise", "", path);
  lc.actuator_range_hz = opt_num(j, "actuator_range_hz", 1.0e6, path);
  lc.setpoint_rad = deg_to_rad(opt_num(j, "setpoint_deg", 0.0, path));
  return lc;
}

inline FastLoopConfig parse_fast_loop(const json& j, const std::string& path) {
  FastLoopConfig fc;
  fc.enabled = opt_bool(j, "enabled", true, path);
  fc.controller = parse_controller(need(j, "controller", path), path + ".controller");
  fc.sensor_noise = opt_str(j, "sensor_noise", "", path);
  fc.actuator_range_hz = opt_num(j, "actuator_range_hz", 1.0e6, path);
  fc.static_detuning_hz = opt_num(j, "static_detuning_hz", 0.0, path);
  if (j.contains("desaturation")) {
    const json& d = j["desaturation"];
    const std::string dp = path + ".desaturation";
    fc.desaturation_enabled = opt_bool(d, "enabled", true, dp);
    fc.desaturation.update_rate_hz = opt_num(d, "update_rate_hz", 500.0, dp);
    fc.desaturation.transport_delay_s = opt_num(d, "transport_delay_s", 0.0, dp);
    fc.desaturation.settle_tau_s = opt_num(d, "settle_tau_s", 1.0, dp);
    fc.offload_filter_hz = opt_num(d, "offload_filter_hz", 10.0, dp);
  } else {
    fc.desaturation_enabled = false;
  }
  return fc;
}

inline NodeConfig parse_node(const json& j, const std::string& path) {
  NodeConfig n;
  n.name = opt_str(j, "name", "", path);
  n.excitation_frequency_hz = need_num(j, "excitation_frequency_hz", path);
  n.pump_frequency_hz = need_num(j, "pump_frequency_hz", path);
  n.excitation_linewidth_hz = opt_num(j, "excitation_linewidth_hz", 10.0e3, path);
  n.pump_linewidth_hz = opt_num(j, "pump_linewidth_hz", 15.0e3, path);
  n.d1_noise = opt_str(j, "d1_noise", "", path);
  n.d2_noise = opt_str(j, "d2_noise", "", path);
  n.d1_drift = opt_str(j, "d1_drift", "", path);
  n.d2_drift = opt_str(j, "d2_drift", "", path);
  n.local_loop = parse_local_loop(need(j, "local_loop", path), path + ".local_loop");
  if (j.contains("fiber")) {
    const json& f = j["fiber"];
    const std::string fp = path + ".fiber";
    n.fiber.length_m = opt_num(f, "length_m", 10000.0, fp);
    n.fiber.refractive_index = opt_num(f, "refractive_index", default_fiber_index, fp);
    n.fiber.expansion_per_k = opt_num(f, "expansion_per_k", silica_expansion_coeff, fp);
    n.fiber.vibration_noise = opt_str(f, "vibration_noise", "", fp);
    if (f.contains("temperature")) {
      const json& t = f["temperature"];
      const std::string tp = fp + ".temperature";
      n.fiber.temperature.sine_amplitude_k = opt_num(t, "sine_amplitude_k", 0.0, tp);
      n.fiber.temperature.sine_period_s = opt_num(t, "sine_period_s", 3600.0, tp);
      n.fiber.temperature.sine_phase_deg = opt_num(t, "sine_phase_deg", 0.0, tp);
      n.fiber.temperature.walk_rate_k_per_rt_s = opt_num(t, "walk_rate_k_per_rt_s", 0.0, tp);
    }
  }
  n.fast_path_drift = opt_str(j, "fast_path_drift", "", path);
  n.midpoint_drift = opt_str(j, "midpoint_drift", "", path);
  return n;
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const std::string& text) {
  using detail::json;
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config error: ") + e.what());
  }

  ScenarioConfig sc;
  {
    const json& p = detail::need(j, "frequency_plan", "$");
    sc.plan.omega_loc_a_hz =
        static_cast<std::int64_t>(detail::need_num(p, "omega_loc_a_hz", "frequency_plan"));
    sc.plan.omega_loc_b_hz =
        static_cast<std::int64_t>(detail::need_num(p, "omega_loc_b_hz", "frequency_plan"));
    sc.plan.omega_fast_a_hz =
        static_cast<std::int64_t>(detail::need_num(p, "omega_fast_a_hz", "frequency_plan"));
    sc.plan.omega_fast_b_hz =
        static_cast<std::int64_t>(detail::need_num(p, "omega_fast_b_hz", "frequency_plan"));
  }

  if (j.contains("noise_profiles")) {
    const json& prof = j["noise_profiles"];
    if (!prof.is_object()) detail::config_fail("noise_profiles", "expected an object");
    for (auto it = prof.begin(); it != prof.end(); ++it)
      sc.noise_profiles[it.key()] =
          detail::parse_profile(it.value(), "noise_profiles." + it.key());
  }

  const json& nodes = detail::need(j, "nodes", "$");
  if (!nodes.is_array() || nodes.size() != 2)
    detail::config_fail("nodes", "expected an array of exactly 2 nodes");
  sc.node_a = detail::parse_node(nodes[0], "nodes[0]");
  sc.node_b = detail::parse_node(nodes[1], "nodes[1]");
  if (sc.node_a.name.empty()) sc.node_a.name = "A";
  if (sc.node_b.name.empty()) sc.node_b.name = "B";

  {
    const json& m = detail::need(j, "midpoint", "$");
    sc.midpoint.reference_frequency_hz =
        detail::need_num(m, "reference_frequency_hz", "midpoint");
    sc.midpoint.reference_linewidth_hz =
        detail::opt_num(m, "reference_linewidth_hz", 100.0, "midpoint");
    sc.midpoint.fast_loop_a =
        detail::parse_fast_loop(detail::need(m, "fast_loop_a", "midpoint"), "midpoint.fast_loop_a");
    sc.midpoint.fast_loop_b =
        detail::parse_fast_loop(detail::need(m, "fast_loop_b", "midpoint"), "midpoint.fast_loop_b");
    const json& g = detail::need(m, "global_loop", "midpoint");
    const std::string gp = "midpoint.global_loop";
    sc.midpoint.global_loop.enabled = detail::opt_bool(g, "enabled", true, gp);
    sc.midpoint.global_loop.bandwidth_hz = detail::opt_num(g, "bandwidth_hz", 50.0, gp);
    sc.midpoint.global_loop.setpoint_rad =
        deg_to_rad(detail::opt_num(g, "setpoint_deg", 0.0, gp));
    sc.midpoint.global_loop.theta_offset_rad =
        deg_to_rad(detail::opt_num(g, "theta_offset_deg", 0.0, gp));
    if (g.contains("snspd")) {
      const json& s = g["snspd"];
      const std::string sp = gp + ".snspd";
      auto& snspd = sc.midpoint.global_loop.snspd;
      snspd.leak_rate_hz = detail::opt_num(s, "leak_rate_hz", 1.0e5, sp);
      snspd.beat_contrast = detail::opt_num(s, "beat_contrast", 0.6, sp);
      snspd.max_rate_hz = detail::opt_num(s, "max_rate_hz", 1.0e6, sp);
      snspd.shot_noise = detail::opt_bool(s, "shot_noise", true, sp);
      snspd.integration_beat_periods =
          static_cast<int>(detail::opt_num(s, "integration_beat_periods", 3, sp));
      snspd.min_counts_per_window =
          detail::opt_num(s, "min_counts_per_window", 10.0, sp);
    }
  }

  if (j.contains("feedforward")) {
    const json& f = j["feedforward"];
    sc.feedforward.enabled = detail::opt_bool(f, "enabled", false, "feedforward");
    sc.feedforward.measurement_noise_s =
        detail::opt_num(f, "measurement_noise_s", 1.0e-12, "feedforward");
    sc.feedforward.update_period_s =
        detail::opt_num(f, "update_period_s", 1.0, "feedforward");
  }

  if (j.contains("fringe")) {
    const json& f = j["fringe"];
    sc.fringe.rate_hz = detail::opt_num(f, "rate_hz", 1.0e5, "fringe");
    sc.fringe.contrast = detail::opt_num(f, "contrast", 1.0, "fringe");
    sc.fringe.settle_s = detail::opt_num(f, "settle_s", 0.03, "fringe");
    sc.fringe.measure_s = detail::opt_num(f, "measure_s", 0.03, "fringe");
  }

  {
    const json& s = detail::need(j, "sim", "$");
    sc.sim.duration_s = detail::need_num(s, "duration_s", "sim");
    sc.sim.master_seed =
        static_cast<std::uint64_t>(detail::opt_num(s, "master_seed", 1, "sim"));
    sc.sim.dt_fast_s = detail::opt_num(s, "dt_fast_s", 2.0e-7, "sim");
    sc.sim.dt_local_s = detail::opt_num(s, "dt_local_s", 1.0e-5, "sim");
    sc.sim.dt_global_s = detail::opt_num(s, "dt_global_s", 1.0e-4, "sim");
    sc.sim.dt_drift_s = detail::opt_num(s, "dt_drift_s", 1.0e-2, "sim");
    sc.sim.dark_periods = detail::opt_bool(s, "dark_periods", false, "sim");
    sc.sim.dark_fraction = detail::opt_num(s, "dark_fraction", 0.25, "sim");
    sc.sim.settle_s = detail::opt_num(s, "settle_s", 0.1, "sim");
    sc.sim.output_decimation =
        static_cast<std::size_t>(detail::opt_num(s, "output_decimation", 10, "sim"));
  }

  if (j.contains("outputs")) {
    const json& o = j["outputs"];
    sc.outputs.directory = detail::opt_str(o, "directory", "out", "outputs");
    sc.outputs.format = detail::opt_str(o, "format", "text", "outputs");
  }
  return sc;
}

namespace detail {

inline void check_profile_ref(const ScenarioConfig& sc, const std::string& name,
                              const std::string& path) {
  if (name.empty()) return;
  if (!sc.noise_profiles.count(name))
    config_fail(path, "references unknown noise profile '" + name + "'");
}

inline void check_integer_ratio(double coarse, double fine, const std::string& path) {
  if (fine <= 0.0 || coarse <= 0.0) config_fail(path, "time steps must be positive");
  const double ratio = coarse / fine;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio)
    config_fail(path, "must be an integer multiple of the next finer step");
}

inline void validate_node(const ScenarioConfig& sc, const NodeConfig& n,
                          const std::string& path) {
  if (n.excitation_frequency_hz <= 0.0)
    config_fail(path + ".excitation_frequency_hz", "must be positive");
  if (n.pump_frequency_hz <= 0.0 || n.pump_frequency_hz >= n.excitation_frequency_hz)
    config_fail(path + ".pump_frequency_hz",
                "must be positive and below the excitation frequency");
  if (n.excitation_linewidth_hz < 0.0)
    config_fail(path + ".excitation_linewidth_hz", "must be >= 0");
  if (n.pump_linewidth_hz < 0.0) config_fail(path + ".pump_linewidth_hz", "must be >= 0");
  check_profile_ref(sc, n.d1_noise, path + ".d1_noise");
  check_profile_ref(sc, n.d2_noise, path + ".d2_noise");
  check_profile_ref(sc, n.d1_drift, path + ".d1_drift");
  check_profile_ref(sc, n.d2_drift, path + ".d2_drift");
  check_profile_ref(sc, n.local_loop.sensor_noise, path + ".local_loop.sensor_noise");
  check_profile_ref(sc, n.fiber.vibration_noise, path + ".fiber.vibration_noise");
  check_profile_ref(sc, n.fast_path_drift, path + ".fast_path_drift");
  check_profile_ref(sc, n.midpoint_drift, path + ".midpoint_drift");
  if (n.local_loop.enabled && n.local_loop.controller.gain_hz_per_rad <= 0.0)
    config_fail(path + ".local_loop.controller.gain_hz_per_rad",
                "must be positive when the loop is enabled");
  if (n.fiber.length_m < 0.0) config_fail(path + ".fiber.length_m", "must be >= 0");
  if (n.fiber.refractive_index < 1.0)
    config_fail(path + ".fiber.refractive_index", "must be >= 1");
  if (n.fiber.temperature.sine_period_s <= 0.0)
    config_fail(path + ".fiber.temperature.sine_period_s", "must be positive");
}

inline void validate_fast_loop(const ScenarioConfig& sc, const FastLoopConfig& f,
                               const std::string& path) {
  check_profile_ref(sc, f.sensor_noise, path + ".sensor_noise");
  if (f.enabled && f.controller.gain_hz_per_rad <= 0.0)
    config_fail(path + ".controller.gain_hz_per_rad",
                "must be positive when the loop is enabled");
  if (f.actuator_range_hz <= 0.0) config_fail(path + ".actuator_range_hz", "must be positive");
  if (f.desaturation_enabled) {
    if (f.desaturation.update_rate_hz <= 0.0)
      config_fail(path + ".desaturation.update_rate_hz", "must be positive");
    if (f.desaturation.settle_tau_s <= 0.0)
      config_fail(path + ".desaturation.settle_tau_s", "must be positive");
  }
}

}  // namespace detail

inline void validate_scenario(const ScenarioConfig& sc) {
  using detail::config_fail;
  if (sc.plan.omega_loc_a_hz <= 0 || sc.plan.omega_loc_b_hz <= 0 ||
      sc.plan.omega_fast_a_hz <= 0 || sc.plan.omega_fast_b_hz <= 0)
    config_fail("frequency_plan", "all clocks must be positive");

  detail::validate_node(sc, sc.node_a, "nodes[0]");
  detail::validate_node(sc, sc.node_b, "nodes[1]");
  detail::validate_fast_loop(sc, sc.midpoint.fast_loop_a, "midpoint.fast_loop_a");
  detail::validate_fast_loop(sc, sc.midpoint.fast_loop_b, "midpoint.fast_loop_b");

  if (sc.midpoint.reference_frequency_hz <= 0.0)
    config_fail("midpoint.reference_frequency_hz", "must be positive");

  const auto& g = sc.midpoint.global_loop;
  if (g.enabled && g.bandwidth_hz <= 0.0)
    config_fail("midpoint.global_loop.bandwidth_hz", "must be positive when enabled");
  if (g.snspd.leak_rate_hz < 0.0)
    config_fail("midpoint.global_loop.snspd.leak_rate_hz", "must be >= 0");
  if (g.snspd.beat_contrast < 0.0 || g.snspd.beat_contrast > 1.0)
    config_fail("midpoint.global_loop.snspd.beat_contrast", "must be in [0, 1]");
  if (g.snspd.leak_rate_hz * 0.5 * (1.0 + g.snspd.beat_contrast) > g.snspd.max_rate_hz)
    config_fail("midpoint.global_loop.snspd.leak_rate_hz",
                "peak per-detector rate exceeds max_rate_hz");
  if (g.snspd.integration_beat_periods < 1)
    config_fail("midpoint.global_loop.snspd.integration_beat_periods", "must be >= 1");

  const auto& s = sc.sim;
  if (s.duration_s <= 0.0) config_fail("sim.duration_s", "must be positive");
  detail::check_integer_ratio(s.dt_local_s, s.dt_fast_s, "sim.dt_local_s");
  detail::check_integer_ratio(s.dt_global_s, s.dt_local_s, "sim.dt_global_s");
  detail::check_integer_ratio(s.dt_drift_s, s.dt_global_s, "sim.dt_drift_s");
  if (s.dark_fraction < 0.0 || s.dark_fraction >= 1.0)
    config_fail("sim.dark_fraction", "must be in [0, 1)");
  if (s.settle_s < 0.0) config_fail("sim.settle_s", "must be >= 0");
  if (s.output_decimation < 1) config_fail("sim.output_decimation", "must be >= 1");

  // the global demodulation window must close on whole beat periods and
  // whole global steps simultaneously
  const PlanCheck chk = check_plan(sc.plan);
  if (g.enabled) {
    if (chk.omega_glob_hz == 0)
      config_fail("frequency_plan", "global loop enabled but the midpoint beat is 0 Hz");
    const double periods = static_cast<double>(g.snspd.integration_beat_periods);
    const double window = periods / std::abs(static_cast<double>(chk.omega_glob_hz));
    const double steps = window / s.dt_global_s;
    if (std::abs(steps - std::round(steps)) > 1e-6 * steps)
      config_fail("midpoint.global_loop.snspd.integration_beat_periods",
                  "window does not close on a whole number of global steps");
  }

  if (sc.feedforward.enabled) {
    if (sc.feedforward.update_period_s <= 0.0)
      config_fail("feedforward.update_period_s", "must be positive");
    const double k = sc.feedforward.update_period_s / s.dt_drift_s;
    if (std::abs(k - std::round(k)) > 1e-9 * k || k < 1.0)
      config_fail("feedforward.update_period_s",
                  "must be an integer multiple of sim.dt_drift_s");
  }

  if (sc.fringe.contrast < 0.0 || sc.fringe.contrast > 1.0)
    config_fail("fringe.contrast", "must be in [0, 1]");
  if (sc.fringe.rate_hz < 0.0) config_fail("fringe.rate_hz", "must be >= 0");

  if (sc.outputs.format != "text" && sc.outputs.format != "binary")
    config_fail("outputs.format", "must be 'text' or 'binary'");
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  ScenarioConfig sc = parse_scenario(buf.str());
  validate_scenario(sc);
  return sc;
}

}  // namespace phasesync
