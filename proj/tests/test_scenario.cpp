#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <variant>

#include "json.hpp"
#include "phasesync/scenario.hpp"

using namespace phasesync;
using Catch::Approx;
using nlohmann::json;

namespace {

std::string scenario_path(const std::string& name) {
  return std::string(PHASESYNC_SCENARIO_DIR) + "/" + name;
}

// smallest config that passes validation, as a mutable json tree
json minimal_config() {
  return json::parse(R"({
    "frequency_plan": {
      "omega_loc_a_hz": 399999250,
      "omega_loc_b_hz": 400000750,
      "omega_fast_a_hz": 215001500,
      "omega_fast_b_hz": 215000000
    },
    "noise_profiles": {},
    "nodes": [
      {
        "excitation_frequency_hz": 470450.0e9,
        "pump_frequency_hz": 281759.0e9,
        "local_loop": { "controller": { "kind": "proportional", "gain_hz_per_rad": 3000.0 } }
      },
      {
        "excitation_frequency_hz": 470450.0e9,
        "pump_frequency_hz": 281759.0e9,
        "local_loop": { "controller": { "kind": "proportional", "gain_hz_per_rad": 3000.0 } }
      }
    ],
    "midpoint": {
      "reference_frequency_hz": 188691.0e9,
      "fast_loop_a": { "controller": { "kind": "pi", "gain_hz_per_rad": 224.0e3, "integral_corner_hz": 20.0e3 } },
      "fast_loop_b": { "controller": { "kind": "pi", "gain_hz_per_rad": 224.0e3, "integral_corner_hz": 20.0e3 } },
      "global_loop": { "bandwidth_hz": 50.0 }
    },
    "sim": { "duration_s": 1.0 }
  })");
}

ScenarioConfig parse_json(const json& j) { return parse_scenario(j.dump()); }

void expect_error(const json& j, const std::string& needle) {
  try {
    ScenarioConfig sc = parse_json(j);
    validate_scenario(sc);
    FAIL("expected a config error mentioning '" << needle << "'");
  } catch (const std::invalid_argument& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring(needle));
  }
}

}  // namespace

TEST_CASE("field scenario file loads with the stated values", "[scenario][parse]") {
  const ScenarioConfig sc = load_scenario(scenario_path("baseline.jsonc"));

  CHECK(sc.plan.omega_loc_a_hz == 399999250);
  CHECK(sc.plan.omega_loc_b_hz == 400000750);
  CHECK(sc.plan.omega_fast_a_hz == 215001500);
  CHECK(sc.plan.omega_fast_b_hz == 215000000);

  CHECK(sc.node_a.name == "A");
  CHECK(sc.node_b.name == "B");
  CHECK(sc.node_a.excitation_frequency_hz == Approx(470450.0e9));
  CHECK(sc.node_a.pump_frequency_hz == Approx(281759.0e9));
  CHECK(sc.node_a.d1_noise == "objective_mech");
  CHECK(sc.node_a.fiber.length_m == Approx(10.0e3));
  CHECK(sc.node_b.fiber.temperature.sine_phase_deg == Approx(90.0));

  REQUIRE(sc.noise_profiles.count("objective_mech") == 1);
  const auto& mech = std::get<MechanicalSpec>(sc.noise_profiles.at("objective_mech"));
  REQUIRE(mech.modes.size() == 3);
  CHECK(mech.modes[0].f0_hz == Approx(45.0));
  CHECK(mech.modes[0].rms == Approx(deg_to_rad(150.0)));  // stored in radians

  const auto& white = std::get<WhiteSpec>(sc.noise_profiles.at("local_sensor"));
  CHECK(white.rms == Approx(deg_to_rad(4.0)));

  CHECK(sc.midpoint.fast_loop_a.controller.gain_hz_per_rad == Approx(224.0e3));
  CHECK(sc.midpoint.fast_loop_a.desaturation_enabled);
  CHECK(sc.midpoint.global_loop.bandwidth_hz == Approx(50.0));
  CHECK(sc.midpoint.global_loop.snspd.integration_beat_periods == 3);
  CHECK(sc.feedforward.enabled);
  CHECK(sc.feedforward.update_period_s == Approx(0.1));

  CHECK(sc.sim.dt_fast_s == Approx(2.0e-7));
  CHECK(sc.sim.output_decimation == 10);
  CHECK(sc.outputs.format == "text");
}

TEST_CASE("companion scenario files validate", "[scenario][parse]") {
  CHECK_NOTHROW(load_scenario(scenario_path("desk_drift.jsonc")));
  CHECK_NOTHROW(load_scenario(scenario_path("noiseless.jsonc")));
  const ScenarioConfig desk = load_scenario(scenario_path("desk_drift.jsonc"));
  CHECK(desk.feedforward.enabled);
  CHECK(desk.feedforward.update_period_s == Approx(0.1));
  CHECK(desk.node_a.fiber.temperature.sine_amplitude_k == Approx(2.0));
}

TEST_CASE("omitted fields take their documented defaults", "[scenario][defaults]") {
  const ScenarioConfig sc = parse_json(minimal_config());
  CHECK_NOTHROW(validate_scenario(sc));

  CHECK(sc.node_a.name == "A");  // filled from position
  CHECK(sc.node_b.name == "B");
  CHECK(sc.node_a.excitation_linewidth_hz == Approx(10.0e3));
  CHECK(sc.node_a.pump_linewidth_hz == Approx(15.0e3));
  CHECK(sc.node_a.local_loop.enabled);
  CHECK(sc.node_a.local_loop.actuator_range_hz == Approx(1.0e6));
  CHECK(sc.node_a.local_loop.setpoint_rad == 0.0);
  CHECK(sc.node_a.fiber.refractive_index == Approx(1.468));
  CHECK(sc.midpoint.reference_linewidth_hz == Approx(100.0));
  CHECK_FALSE(sc.midpoint.fast_loop_a.desaturation_enabled);  // no link block given
  CHECK(sc.midpoint.global_loop.enabled);
  CHECK(sc.midpoint.global_loop.snspd.shot_noise);
  CHECK(sc.midpoint.global_loop.snspd.beat_contrast == Approx(0.6));
  CHECK_FALSE(sc.feedforward.enabled);
  CHECK(sc.fringe.rate_hz == Approx(1.0e5));
  CHECK(sc.sim.master_seed == 1);
  CHECK(sc.sim.dt_fast_s == Approx(2.0e-7));
  CHECK(sc.outputs.format == "text");
}

TEST_CASE("angles in the file are degrees, stored values radians", "[scenario][units]") {
  json j = minimal_config();
  j["nodes"][0]["local_loop"]["setpoint_deg"] = 90.0;
  j["midpoint"]["global_loop"] = {{"bandwidth_hz", 50.0}, {"setpoint_deg", 45.0},
                                  {"theta_offset_deg", -30.0}};
  const ScenarioConfig sc = parse_json(j);
  CHECK(sc.node_a.local_loop.setpoint_rad == Approx(pi / 2.0));
  CHECK(sc.midpoint.global_loop.setpoint_rad == Approx(pi / 4.0));
  CHECK(sc.midpoint.global_loop.theta_offset_rad == Approx(-pi / 6.0));
}

TEST_CASE("line comments are accepted in config text", "[scenario][parse]") {
  json j = minimal_config();
  std::string text = j.dump(2);
  text.insert(1, "\n  // annotated inline\n");
  CHECK_NOTHROW(parse_scenario(text));
}

TEST_CASE("missing required keys name the offending path", "[scenario][errors]") {
  json j = minimal_config();
  j.erase("frequency_plan");
  expect_error(j, "frequency_plan");

  j = minimal_config();
  j["nodes"][0].erase("excitation_frequency_hz");
  expect_error(j, "excitation_frequency_hz");

  j = minimal_config();
  j["midpoint"]["fast_loop_a"]["controller"].erase("gain_hz_per_rad");
  expect_error(j, "gain_hz_per_rad");
}

TEST_CASE("wrong value types name the offending path", "[scenario][errors]") {
  json j = minimal_config();
  j["sim"]["duration_s"] = "long";
  expect_error(j, "sim.duration_s");

  j = minimal_config();
  j["nodes"][1]["local_loop"]["controller"]["kind"] = 7;
  expect_error(j, "kind");
}

TEST_CASE("unknown noise profile references are rejected", "[scenario][errors]") {
  json j = minimal_config();
  j["nodes"][0]["d1_noise"] = "nope";
  expect_error(j, "unknown noise profile 'nope'");

  j = minimal_config();
  j["noise_profiles"]["odd"] = {{"kind", "fractal"}};
  expect_error(j, "odd");
}

TEST_CASE("clock grids must nest as integer ratios", "[scenario][errors]") {
  json j = minimal_config();
  j["sim"]["dt_fast_s"] = 3.0e-7;  // 1e-5 / 3e-7 is not an integer
  expect_error(j, "sim.dt_local_s");

  j = minimal_config();
  j["sim"]["dt_global_s"] = 2.5e-5;
  expect_error(j, "sim.dt_global_s");
}

TEST_CASE("demodulation window must close on whole steps", "[scenario][errors]") {
  json j = minimal_config();
  // 2 periods of the 1500 Hz beat is 13.3 global steps of 1e-4 s
  j["midpoint"]["global_loop"] = {
      {"bandwidth_hz", 50.0},
      {"snspd", {{"leak_rate_hz", 1.0e5}, {"integration_beat_periods", 2}}}};
  expect_error(j, "integration_beat_periods");
}

TEST_CASE("correction schedule must align with the drift grid", "[scenario][errors]") {
  json j = minimal_config();
  j["feedforward"] = {{"enabled", true}, {"update_period_s", 0.015}};
  expect_error(j, "feedforward.update_period_s");
}

TEST_CASE("detector headroom and ranges are checked", "[scenario][errors]") {
  json j = minimal_config();
  j["midpoint"]["global_loop"] = {
      {"bandwidth_hz", 50.0},
      {"snspd", {{"leak_rate_hz", 5.0e6}, {"max_rate_hz", 1.0e6}}}};
  expect_error(j, "peak per-detector rate");

  j = minimal_config();
  j["midpoint"]["global_loop"] = {{"bandwidth_hz", 50.0},
                                  {"snspd", {{"beat_contrast", 1.2}}}};
  expect_error(j, "beat_contrast");

  j = minimal_config();
  j["outputs"] = {{"format", "csv"}};
  expect_error(j, "outputs.format");
}

TEST_CASE("mechanical profiles need at least one mode", "[scenario][errors]") {
  json j = minimal_config();
  j["noise_profiles"]["empty_mech"] = {{"kind", "mechanical"}, {"modes", json::array()}};
  expect_error(j, "modes");
}
