#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "phasesync/dsp.hpp"
#include "phasesync/plant.hpp"
#include "phasesync/scenario.hpp"

using namespace phasesync;
using Catch::Approx;

namespace {

ScenarioConfig load_named(const std::string& name) {
  return load_scenario(std::string(PHASESYNC_SCENARIO_DIR) + "/" + name);
}

ScenarioConfig quiet_config() { return load_named("noiseless.jsonc"); }
ScenarioConfig field_config() { return load_named("baseline.jsonc"); }

void disable_all_loops(ScenarioConfig& sc) {
  sc.node_a.local_loop.enabled = false;
  sc.node_b.local_loop.enabled = false;
  sc.midpoint.fast_loop_a.enabled = false;
  sc.midpoint.fast_loop_b.enabled = false;
  sc.midpoint.fast_loop_a.desaturation_enabled = false;
  sc.midpoint.fast_loop_b.desaturation_enabled = false;
  sc.midpoint.global_loop.enabled = false;
}

std::size_t count_unlocks(const SimOutput& out, const std::string& loop) {
  return static_cast<std::size_t>(
      std::count_if(out.unlocks.begin(), out.unlocks.end(),
                    [&](const UnlockEvent& e) { return e.loop == loop; }));
}

}  // namespace

TEST_CASE("quiet plant settles exactly onto the commanded offset", "[plant][lock]") {
  ScenarioConfig sc = quiet_config();
  sc.midpoint.fast_loop_a.desaturation_enabled = false;
  sc.midpoint.fast_loop_b.desaturation_enabled = false;
  sc.midpoint.global_loop.setpoint_rad = 0.5;
  sc.sim.duration_s = 0.4;

  const SimOutput out = simulate(sc);
  REQUIRE_FALSE(out.eta_total.samples.empty());
  CHECK(std::abs(out.eta_total.samples.back() - 0.5) < 1.0e-9);
  CHECK(std::abs(out.eta_local_a.samples.back()) < 1.0e-9);
  CHECK(std::abs(out.eta_local_b.samples.back()) < 1.0e-9);
  CHECK(std::abs(out.eta_fast_a.samples.back()) < 1.0e-9);
  CHECK(out.unlocks.empty());
  CHECK(out.slip_count_a.samples.back() == 0.0);
  CHECK(out.slip_count_b.samples.back() == 0.0);
}

TEST_CASE("offset and mapping constants move the locked point one for one",
          "[plant][lock]") {
  auto locked_value = [](double mu, double theta_off) {
    ScenarioConfig sc = quiet_config();
    sc.midpoint.fast_loop_a.desaturation_enabled = false;
    sc.midpoint.fast_loop_b.desaturation_enabled = false;
    sc.midpoint.global_loop.setpoint_rad = mu;
    sc.midpoint.global_loop.theta_offset_rad = theta_off;
    sc.sim.duration_s = 0.4;
    return simulate(sc).eta_total.samples.back();
  };
  const double base = locked_value(0.3, 0.0);
  CHECK(base == Approx(0.3).margin(1.0e-9));
  CHECK(locked_value(0.7, 0.0) - base == Approx(0.4).margin(2.0e-9));
  CHECK(locked_value(0.3, 0.2) - base == Approx(0.2).margin(2.0e-9));
}

TEST_CASE("with every loop open the output replays the source phase walk",
          "[plant][passthrough]") {
  ScenarioConfig sc = quiet_config();
  disable_all_loops(sc);
  sc.node_a.excitation_linewidth_hz = 10.0e3;
  sc.node_a.pump_linewidth_hz = 15.0e3;
  sc.sim.duration_s = 0.02;

  const SimOutput out = simulate(sc);
  const std::size_t stride = 500;  // dt_local/dt_fast * output_decimation
  const TimeSeries walk = gen_laser_phase_noise(
      25.0e3, sc.sim.dt_fast_s, 100000, derive_seed(sc.sim.master_seed, "node.A.laser"));

  REQUIRE(out.eta_total.size() == 200);
  CHECK(out.eta_total.dt == Approx(sc.sim.dt_fast_s * static_cast<double>(stride)));
  for (std::size_t k = 0; k < out.eta_total.size(); ++k) {
    // bit-exact: the only nonzero term in the composition is this walk
    REQUIRE(out.eta_total.samples[k] == walk.samples[k * stride]);
  }
}

TEST_CASE("composition pieces always sum to the total", "[plant][wiring]") {
  ScenarioConfig sc = field_config();
  SystemModel sys(sc);
  for (int k = 0; k < 30; ++k) {
    sys.advance(0.0017);
    const auto p = sys.composition_parts();
    const double sum = p.global_actuation + p.midpoint_drift + (p.local_a - p.local_b) +
                       (p.fast_resid_a - p.fast_resid_b) + p.theta_err_delta +
                       p.plan_carrier;
    REQUIRE(sum == Approx(sys.eta_total_now()).margin(1.0e-8));
  }
}

TEST_CASE("slip counter follows the accumulated path phase", "[plant][slips]") {
  ScenarioConfig sc = quiet_config();
  sc.node_a.fiber.temperature.sine_amplitude_k = 3.0;
  sc.node_a.fiber.temperature.sine_period_s = 0.4;
  sc.sim.duration_s = 0.5;

  const SimOutput out = simulate(sc);
  const auto& n = sc.node_a;
  const double f_tele = n.excitation_frequency_hz +
                        static_cast<double>(sc.plan.omega_loc_a_hz) -
                        n.pump_frequency_hz;
  double max_abs = 0.0;
  REQUIRE(out.slip_count_a.size() >= 50);
  for (std::size_t k = 1; k < out.slip_count_a.size(); ++k) {
    // the counter reports the state reached at the end of the previous
    // update interval
    const double t = out.slip_count_a.time_at(k - 1);
    const double temp = 3.0 * std::sin(two_pi * t / 0.4);
    const double dl = n.fiber.expansion_per_k * n.fiber.length_m * temp;
    const double phi = -two_pi * n.fiber.refractive_index * f_tele * dl / speed_of_light;
    const double expect = std::round(phi / two_pi);
    CHECK(std::abs(out.slip_count_a.samples[k] - expect) <= 1.0);
    max_abs = std::max(max_abs, std::abs(out.slip_count_a.samples[k]));
  }
  CHECK(max_abs >= 10.0);               // the swing really crosses many turns
  CHECK(out.slip_count_b.rms() == 0.0);  // the still arm never slips
}

TEST_CASE("count-difference demodulation recovers the beat phase", "[plant][demod]") {
  const double dt = 1.0e-4, contrast = 0.8, total_rate = 1.0e5;
  const ClockSpec beat{1500, 0.0};
  const double psi0 = 1.1;

  auto make_counts = [&](double scale, double psi, bool shot, std::uint64_t seed,
                         std::size_t n) {
    TimeSeries c1 = make_series(dt, n, "counts");
    TimeSeries c2 = make_series(dt, n, "counts");
    Rng rng(seed);
    for (std::size_t k = 0; k < n; ++k) {
      const double arg = two_pi * 1500.0 * c1.time_at(k) + psi;
      const double r1 = 0.5 * total_rate * scale * dt * (1.0 + contrast * std::cos(arg));
      const double r2 = 0.5 * total_rate * scale * dt * (1.0 - contrast * std::cos(arg));
      c1.samples[k] = shot ? static_cast<double>(rng.poisson(r1)) : r1;
      c2.samples[k] = shot ? static_cast<double>(rng.poisson(r2)) : r2;
    }
    return std::pair{c1, c2};
  };

  SECTION("static phase, no shot noise: exact recovery") {
    auto [c1, c2] = make_counts(1.0, psi0, false, 1, 400);
    const DemodResult res = snspd_global_demod(c1, c2, beat);
    REQUIRE(res.phase.size() == 20);  // 400 bins, 20-bin windows
    CHECK(res.unlock_times.empty());
    for (double v : res.phase.samples) CHECK(v == Approx(psi0).margin(1.0e-9));
  }

  SECTION("common detector scaling drops out") {
    auto [c1, c2] = make_counts(1.0, psi0, false, 1, 400);
    TimeSeries s1 = c1, s2 = c2;
    for (auto& v : s1.samples) v *= 7.25;
    for (auto& v : s2.samples) v *= 7.25;
    const DemodResult a = snspd_global_demod(c1, c2, beat);
    const DemodResult b = snspd_global_demod(s1, s2, beat);
    for (std::size_t k = 0; k < a.phase.size(); ++k)
      CHECK(a.phase.samples[k] == Approx(b.phase.samples[k]).margin(1.0e-12));
  }

  SECTION("estimator scatter shrinks as the square root of the counts") {
    auto spread = [&](double scale, std::uint64_t seed) {
      auto [c1, c2] = make_counts(scale, psi0, true, seed, 8000);
      const DemodResult res = snspd_global_demod(c1, c2, beat);
      TimeSeries ph = res.phase;
      return ph.std_dev();
    };
    const double lo = spread(0.2, 11);   // about 40 counts per window
    const double hi = spread(20.0, 12);  // 100x the flux
    CHECK(lo / hi == Approx(10.0).epsilon(0.4));
  }

  SECTION("starved windows hold the estimate and are reported") {
    auto [c1, c2] = make_counts(1.0, psi0, false, 1, 400);
    for (std::size_t k = 40; k < 60; ++k) c1.samples[k] = c2.samples[k] = 0.0;
    const DemodResult res = snspd_global_demod(c1, c2, beat, 10.0);
    REQUIRE(res.unlock_times.size() == 1);
    CHECK(res.unlock_times[0] == Approx(40.0 * dt));
    CHECK(res.phase.samples[2] == res.phase.samples[1]);
  }

  SECTION("reference clock phase shifts the reading by the same amount") {
    auto [c1, c2] = make_counts(1.0, psi0, false, 1, 400);
    const DemodResult res = snspd_global_demod(c1, c2, ClockSpec{1500, 0.4});
    CHECK(res.phase.samples[5] == Approx(psi0 - 0.4).margin(1.0e-9));
  }

  SECTION("binning coarser than a quarter period is refused") {
    TimeSeries c = make_series(1.0e-3, 100, "counts");
    CHECK_THROWS_AS(snspd_global_demod(c, c, beat), std::invalid_argument);
  }
}

TEST_CASE("roundtrip record maps to the expected clock correction", "[plant][feedforward]") {
  const double n_group = 1.0417, f_off = 400.0e6, base_rt = 1.0e-4;
  TimeSeries rt = make_series(1.0, 4, "s");
  rt.samples = {base_rt, base_rt + 2.0 * n_group * 0.02 / speed_of_light,
                base_rt + 2.0 * n_group * 0.04 / speed_of_light, base_rt};

  const TimeSeries phase = feedforward_from_roundtrip(rt, f_off);
  CHECK(phase.samples[0] == 0.0);
  CHECK(rad_to_deg(phase.samples[1]) == Approx(10.007).margin(0.01));
  CHECK(phase.samples[2] == Approx(2.0 * phase.samples[1]).margin(1.0e-15));
  CHECK(phase.samples[3] == 0.0);
  // exact linear map of the time record
  for (std::size_t k = 0; k < rt.size(); ++k)
    REQUIRE(phase.samples[k] == pi * f_off * (rt.samples[k] - rt.samples[0]));

  CHECK_THROWS_AS(feedforward_from_roundtrip(TimeSeries{}, f_off), std::invalid_argument);
  CHECK_THROWS_AS(feedforward_from_roundtrip(rt, 0.0), std::invalid_argument);
}

TEST_CASE("static clock detuning migrates onto the slow actuator", "[plant][offload]") {
  ScenarioConfig sc = quiet_config();
  sc.midpoint.fast_loop_a.static_detuning_hz = 2000.0;
  sc.sim.duration_s = 1.0;

  const SimOutput out = simulate(sc);
  CHECK(out.pump_offload_a.samples.back() == Approx(2000.0).epsilon(0.02));
  CHECK(std::abs(out.cmd_fast_a.samples.back()) < 20.0);
  CHECK(std::abs(out.eta_total.samples.back()) < 1.0e-3);
  CHECK(out.pump_offload_b.rms() == 0.0);
}

TEST_CASE("loop identification finds the designed local bandwidth", "[plant][ident]") {
  ScenarioConfig sc = field_config();
  // strong enough to dominate the resonance tails near the crossing, weak
  // enough that the loop never hops a fringe
  const NoiseProcess injection = WhiteSpec{8.0e3, 0.0};
  const IdentificationRun run = run_identification(sc, LoopId::local_a, injection, 1.2);

  REQUIRE(run.injected.size() == run.measured_on.size());
  REQUIRE(run.injected.size() == run.measured_off.size());
  CHECK(run.injected.dt == Approx(sc.sim.dt_local_s));

  WelchParams wp;
  wp.segment_length = 4096;
  const IdentificationEstimate est =
      estimate_tf(run.injected, run.measured_on, run.measured_off, wp, 0.9);
  REQUIRE(std::isfinite(est.bandwidth_hz));
  const double design = sc.node_a.local_loop.controller.gain_hz_per_rad;
  CHECK(est.bandwidth_hz > 0.7 * design);
  CHECK(est.bandwidth_hz < 1.3 * design);
}

TEST_CASE("identification taps are guarded", "[plant][ident]") {
  const NoiseProcess injection = WhiteSpec{1.0e4, 0.0};
  SystemModel fresh(quiet_config());
  CHECK_THROWS_AS(fresh.configure_identification(LoopId::global_loop, injection, 1, false),
                  std::invalid_argument);
  SystemModel advanced(quiet_config());
  advanced.advance(1.0e-4);
  CHECK_THROWS_AS(advanced.configure_identification(LoopId::local_a, injection, 1, false),
                  std::logic_error);
}

TEST_CASE("identical seeds reproduce the run bit for bit", "[plant][determinism]") {
  ScenarioConfig sc = field_config();
  sc.sim.duration_s = 0.4;
  const SimOutput a = simulate(sc);
  const SimOutput b = simulate(sc);

  REQUIRE(a.eta_total.size() == b.eta_total.size());
  for (std::size_t k = 0; k < a.eta_total.size(); ++k)
    REQUIRE(a.eta_total.samples[k] == b.eta_total.samples[k]);
  REQUIRE(a.snspd_counts_1.samples == b.snspd_counts_1.samples);
  REQUIRE(a.slip_count_a.samples == b.slip_count_a.samples);
  CHECK(a.stats_total.mean() == b.stats_total.mean());
  CHECK(a.stats_total.std_dev() == b.stats_total.std_dev());
}

TEST_CASE("changing the seed changes the realization", "[plant][determinism]") {
  ScenarioConfig sc = field_config();
  sc.sim.duration_s = 0.25;
  const SimOutput a = simulate(sc);
  sc.sim.master_seed = 2;
  const SimOutput b = simulate(sc);
  CHECK(a.eta_total.samples != b.eta_total.samples);
}

TEST_CASE("signal loss surfaces as unlock events", "[plant][unlock]") {
  ScenarioConfig sc = quiet_config();
  sc.midpoint.global_loop.snspd.leak_rate_hz = 100.0;  // far below min counts
  sc.midpoint.global_loop.snspd.shot_noise = true;
  sc.midpoint.global_loop.snspd.min_counts_per_window = 10.0;
  sc.node_a.local_loop.setpoint_rad = 3.3;  // beyond the wrap point
  sc.node_a.local_loop.actuator_range_hz = 1.0;  // too slow to catch up quickly
  sc.sim.duration_s = 0.1;

  const SimOutput out = simulate(sc);
  CHECK(count_unlocks(out, "global") >= 1);
  CHECK(count_unlocks(out, "local_a") >= 1);
  CHECK(count_unlocks(out, "local_b") == 0);
  for (const auto& e : out.unlocks) CHECK(e.time_s >= 0.0);
}

TEST_CASE("gated detection holds the fast loops through dark intervals",
          "[plant][dark]") {
  ScenarioConfig sc = field_config();
  sc.sim.dark_periods = true;
  sc.sim.dark_fraction = 0.25;
  sc.sim.duration_s = 0.4;

  const SimOutput out = simulate(sc);
  CHECK(count_unlocks(out, "fast_a") == 0);
  CHECK(count_unlocks(out, "fast_b") == 0);
  CHECK(out.stats_fast_a.std_dev() < 1.0);
  CHECK(out.stats_global.count() > 0);
}

TEST_CASE("loop spreads land in their design neighborhoods", "[plant][budget]") {
  ScenarioConfig sc = field_config();
  sc.sim.duration_s = 2.0;
  const SimOutput out = simulate(sc);

  const double loc_a = rad_to_deg(out.stats_local_a.std_dev());
  const double loc_b = rad_to_deg(out.stats_local_b.std_dev());
  const double fast_a = rad_to_deg(out.stats_fast_a.std_dev());
  const double fast_b = rad_to_deg(out.stats_fast_b.std_dev());
  const double glob = rad_to_deg(out.stats_global.std_dev());
  const double total = rad_to_deg(out.stats_total.std_dev());

  CHECK(loc_a > 4.0);  CHECK(loc_a < 30.0);
  CHECK(loc_b > 4.0);  CHECK(loc_b < 30.0);
  CHECK(fast_a > 8.0); CHECK(fast_a < 45.0);
  CHECK(fast_b > 8.0); CHECK(fast_b < 45.0);
  CHECK(glob > 2.0);   CHECK(glob < 25.0);
  CHECK(total > 15.0); CHECK(total < 60.0);
}

TEST_CASE("repeated fringe scans on the quiet plant read unit contrast",
          "[plant][fringe]") {
  ScenarioConfig sc = quiet_config();
  SystemModel sys(sc);
  sys.advance(0.1);  // acquire lock first

  const FringeSweepResult res = fringe_sweep(sys, 5, 2, 0.02, 0.02);
  REQUIRE(res.setpoints_rad.size() == 5);
  REQUIRE(res.fits.size() == 2);
  for (const FringeFit& fit : res.fits) {
    CHECK(fit.contrast == Approx(1.0).margin(0.01));
    CHECK(std::abs(wrap_phase(fit.phase_offset_rad)) < 0.02);
  }
  CHECK(res.delta_theta_err_rad[0] == 0.0);
  CHECK(res.ff_phase_rad[0] == 0.0);
  CHECK(sys.global_setpoint() == 0.0);  // restored afterwards

  CHECK_THROWS_AS(fringe_sweep(sys, 4, 1, 0.02, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(fringe_sweep(sys, 5, 0, 0.02, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(fringe_sweep(sys, 5, 1, 0.02, 0.0), std::invalid_argument);
}
