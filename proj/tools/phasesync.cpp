// Batch front end: run a scenario, identify a loop, sweep the readout fringe,
// lay out clock plans, or analyze record files produced by earlier runs.
// Reports print in degrees, data files stay in radians; both say which.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "phasesync/dsp.hpp"
#include "phasesync/io.hpp"
#include "phasesync/noise.hpp"
#include "phasesync/planner.hpp"
#include "phasesync/plant.hpp"
#include "phasesync/scenario.hpp"
#include "phasesync/signal_core.hpp"

namespace fs = std::filesystem;
using namespace phasesync;

namespace {

constexpr double rad_to_deg = 180.0 / pi;

std::string fmt(double v, int prec = 6) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
  return buf;
}

std::string fmtf(double v, int prec = 2) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

std::string ext_for(const std::string& format) {
  return format == "binary" ? ".bin" : ".txt";
}

using MetaList = std::vector<std::pair<std::string, std::string>>;

MetaList run_meta(const ScenarioConfig& sc) {
  return {{"seed", std::to_string(sc.sim.master_seed)}};
}

// drop everything recorded before the settling cutoff
TimeSeries settled_slice(const TimeSeries& ts, double settle_s) {
  TimeSeries out;
  out.dt = ts.dt;
  out.t0 = ts.t0;
  out.unit = ts.unit;
  std::size_t k0 = 0;
  if (ts.dt > 0.0 && settle_s > ts.t0)
    k0 = static_cast<std::size_t>(std::ceil((settle_s - ts.t0) / ts.dt - 1e-9));
  if (k0 >= ts.samples.size()) return out;
  out.t0 = ts.time_at(k0);
  out.samples.assign(ts.samples.begin() + static_cast<std::ptrdiff_t>(k0),
                     ts.samples.end());
  return out;
}

// spectra describe fluctuation about the operating point, so the mean goes;
// a static offset would otherwise leak through the window sidelobes
TimeSeries demeaned(TimeSeries ts) {
  double m = 0.0;
  for (double x : ts.samples) m += x;
  if (!ts.samples.empty()) m /= static_cast<double>(ts.samples.size());
  for (double& x : ts.samples) x -= m;
  return ts;
}

void write_series_file(const fs::path& dir, const std::string& name,
                       const TimeSeries& ts, const std::string& format,
                       MetaList extra) {
  DataTable t = table_from_series(ts, name, ts.unit, std::move(extra));
  write_table((dir / (name + ext_for(format))).string(), t, format);
}

void write_psd_file(const fs::path& dir, const std::string& name,
                    const PSDEstimate& p, const std::string& format, MetaList extra) {
  DataTable t;
  t.meta.emplace_back("unit", p.unit);
  t.meta.emplace_back("df_hz", fmt(p.df, 17));
  t.meta.emplace_back("segment_length", std::to_string(p.segment_length));
  t.meta.emplace_back("segment_count", std::to_string(p.segment_count));
  for (auto& kv : extra) t.meta.push_back(std::move(kv));
  t.columns = {"frequency_hz", "density"};
  t.data = {p.frequencies, p.density};
  write_table((dir / (name + ext_for(format))).string(), t, format);
}

struct ColumnStats {
  std::size_t n = 0;
  double mean = 0.0, std_dev = 0.0, min = 0.0, max = 0.0;
};

ColumnStats column_stats(const std::vector<double>& v) {
  ColumnStats s;
  s.n = v.size();
  if (v.empty()) return s;
  s.min = s.max = v.front();
  for (double x : v) {
    s.mean += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean /= static_cast<double>(s.n);
  double m2 = 0.0;
  for (double x : v) m2 += (x - s.mean) * (x - s.mean);
  s.std_dev = std::sqrt(m2 / static_cast<double>(s.n));
  return s;
}

struct CommonOverrides {
  bool has_seed = false;
  std::uint64_t seed = 0;
  bool has_duration = false;
  double duration = 0.0;
  std::string out;
  std::string format;
};

ScenarioConfig load_with_overrides(const std::string& path, const CommonOverrides& ov) {
  ScenarioConfig sc = load_scenario(path);
  if (ov.has_seed) sc.sim.master_seed = ov.seed;
  if (ov.has_duration) {
    if (ov.duration <= 0.0) throw std::invalid_argument("duration must be > 0");
    sc.sim.duration_s = ov.duration;
  }
  if (!ov.out.empty()) sc.outputs.directory = ov.out;
  if (!ov.format.empty()) sc.outputs.format = ov.format;
  return sc;
}

void emit_report(const fs::path& dir, const std::string& text) {
  std::cout << text;
  std::ofstream f(dir / "report.txt", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write report in " + dir.string());
  f << text;
}

std::size_t settled_unlocks(const SimOutput& out, double settle_s) {
  std::size_t n = 0;
  for (const auto& u : out.unlocks)
    if (u.time_s >= settle_s) ++n;
  return n;
}

int unlock_status(const SimOutput& out, double settle_s, long max_unlocks) {
  const std::size_t n = settled_unlocks(out, settle_s);
  if (static_cast<long>(n) > max_unlocks) {
    std::cerr << "error: " << n << " unlock event(s) after settling (limit "
              << max_unlocks << ")\n";
    return 2;
  }
  return 0;
}

// ---------------------------------------------------------------- simulate

int run_simulate(const ScenarioConfig& sc, long max_unlocks) {
  SystemModel system(sc);
  system.advance(sc.sim.duration_s);
  const SimOutput out = system.take_output();

  const fs::path dir = sc.outputs.directory;
  fs::create_directories(dir);
  const std::string& format = sc.outputs.format;
  const MetaList meta = run_meta(sc);

  const struct {
    const TimeSeries* ts;
    const char* name;
  } recs[] = {
      {&out.eta_total, "eta_total"},
      {&out.eta_local_a, "eta_local_a"},
      {&out.eta_local_b, "eta_local_b"},
      {&out.eta_fast_a, "eta_fast_a"},
      {&out.eta_fast_b, "eta_fast_b"},
      {&out.eta_global, "eta_global"},
      {&out.snspd_counts_1, "snspd_counts_1"},
      {&out.snspd_counts_2, "snspd_counts_2"},
      {&out.cmd_local_a, "cmd_local_a"},
      {&out.cmd_local_b, "cmd_local_b"},
      {&out.cmd_fast_a, "cmd_fast_a"},
      {&out.cmd_fast_b, "cmd_fast_b"},
      {&out.pump_offload_a, "pump_offload_a"},
      {&out.pump_offload_b, "pump_offload_b"},
      {&out.slip_count_a, "slip_count_a"},
      {&out.slip_count_b, "slip_count_b"},
      {&out.theta_err_a, "theta_err_a"},
      {&out.theta_err_b, "theta_err_b"},
      {&out.feedforward_phase, "feedforward_phase"},
  };
  for (const auto& r : recs)
    if (!r.ts->samples.empty()) write_series_file(dir, r.name, *r.ts, format, meta);

  const double settle = sc.sim.settle_s;
  const auto maybe_psd = [&](const TimeSeries& ts, const std::string& name) {
    const TimeSeries cut = settled_slice(ts, settle);
    if (cut.size() < 64) return;
    write_psd_file(dir, name, welch_psd(demeaned(cut)), format, meta);
  };
  maybe_psd(out.eta_total, "psd_eta_total");
  maybe_psd(out.eta_local_a, "psd_eta_local_a");
  maybe_psd(out.eta_local_b, "psd_eta_local_b");
  maybe_psd(out.eta_fast_a, "psd_eta_fast_a");
  maybe_psd(out.eta_fast_b, "psd_eta_fast_b");
  maybe_psd(out.eta_global, "psd_eta_global");

  // delivered-phase quality about the settled operating point
  const TimeSeries eta = settled_slice(out.eta_total, settle);
  double mean_eta = 0.0;
  for (double x : eta.samples) mean_eta += x;
  if (!eta.samples.empty()) mean_eta /= static_cast<double>(eta.size());
  double mean_fid = 0.0;
  std::vector<double> hist(20, 0.0);
  for (double x : eta.samples) {
    const double f = fidelity_from_phase_error(x - mean_eta);
    mean_fid += f;
    auto bin = static_cast<std::size_t>(f * 20.0);
    hist[std::min<std::size_t>(bin, 19)] += 1.0;
  }
  if (!eta.samples.empty()) {
    mean_fid /= static_cast<double>(eta.size());
    for (double& h : hist) h /= static_cast<double>(eta.size());
    DataTable ht;
    for (auto& kv : run_meta(sc)) ht.meta.push_back(kv);
    ht.meta.emplace_back("unit", "fraction per bin");
    ht.columns = {"fidelity_bin_center", "fraction"};
    ht.data.resize(2);
    for (std::size_t k = 0; k < hist.size(); ++k) {
      ht.data[0].push_back((static_cast<double>(k) + 0.5) / 20.0);
      ht.data[1].push_back(hist[k]);
    }
    write_table((dir / ("fidelity_hist" + ext_for(format))).string(), ht, format);
  }

  std::ostringstream rep;
  rep << "simulate report\n";
  rep << "seed: " << out.master_seed << "\n";
  rep << "duration_s: " << fmt(out.duration_s) << "\n";
  rep << "settle_s: " << fmt(settle) << "\n";
  rep << "\nloop residuals, rms about setpoint, settled (deg):\n";
  const struct {
    const char* name;
    const LoopStats* st;
  } loops[] = {{"local_a", &out.stats_local_a}, {"local_b", &out.stats_local_b},
               {"fast_a", &out.stats_fast_a},   {"fast_b", &out.stats_fast_b},
               {"global", &out.stats_global}};
  std::vector<SigmaComponent> comps;
  for (const auto& l : loops) {
    const double deg = l.st->std_dev() * rad_to_deg;
    rep << "  " << l.name << std::string(9 - std::string(l.name).size(), ' ')
        << fmtf(deg) << "\n";
    comps.push_back({l.name, deg, 1});
  }
  rep << "quadrature total (deg): " << fmtf(combine_sigmas(comps)) << "\n";
  rep << "delivered phase spread, settled (deg): "
      << fmtf(out.stats_total.std_dev() * rad_to_deg) << "\n";
  if (!eta.samples.empty()) {
    rep << "mean fidelity about settled mean: " << fmtf(mean_fid, 4) << "\n";
    rep << "implied fringe contrast: " << fmtf(2.0 * mean_fid - 1.0, 3) << "\n";
  }
  const auto last = [](const TimeSeries& ts) {
    return ts.samples.empty() ? 0.0 : ts.samples.back();
  };
  rep << "phase slips: node_a " << fmt(last(out.slip_count_a)) << ", node_b "
      << fmt(last(out.slip_count_b)) << "\n";
  rep << "unlock events: " << out.unlocks.size() << " total, "
      << settled_unlocks(out, settle) << " after settling\n";
  std::size_t shown = 0;
  for (const auto& u : out.unlocks) {
    if (shown == 12) {
      rep << "  ...\n";
      break;
    }
    rep << "  t=" << fmtf(u.time_s, 4) << " s  " << u.loop << "\n";
    ++shown;
  }
  rep << "records written alongside this report (" << format
      << ", phases in rad)\n";
  emit_report(dir, rep.str());
  return unlock_status(out, settle, max_unlocks);
}

// ---------------------------------------------------------------- identify

int identify_global(const ScenarioConfig& sc) {
  ScenarioConfig on = sc;
  on.midpoint.global_loop.enabled = true;
  ScenarioConfig off = sc;
  off.midpoint.global_loop.enabled = false;
  const SimOutput out_on = simulate(on);
  const SimOutput out_off = simulate(off);

  const fs::path dir = sc.outputs.directory;
  fs::create_directories(dir);
  const std::string& format = sc.outputs.format;
  const double settle = sc.sim.settle_s;
  const PSDEstimate p_on = welch_psd(demeaned(settled_slice(out_on.eta_total, settle)));
  const PSDEstimate p_off = welch_psd(demeaned(settled_slice(out_off.eta_total, settle)));
  write_psd_file(dir, "psd_global_on", p_on, format, run_meta(sc));
  write_psd_file(dir, "psd_global_off", p_off, format, run_meta(sc));

  // in-band rms up to twice the corrector bandwidth
  const double f_hi = 2.0 * sc.midpoint.global_loop.bandwidth_hz;
  const auto band_rms = [&](const PSDEstimate& p) {
    double var = 0.0;
    for (std::size_t k = 1; k < p.frequencies.size(); ++k)
      if (p.frequencies[k] <= f_hi) var += p.density[k] * p.df;
    return std::sqrt(var);
  };
  const double rms_on = band_rms(p_on), rms_off = band_rms(p_off);

  std::ostringstream rep;
  rep << "identify report\n";
  rep << "loop: global\n";
  rep << "note: the midpoint sensor counts single photons at a few hundred\n";
  rep << "  hertz of information bandwidth; an injected drive visible in the\n";
  rep << "  counts walks the window off its fringe, so no noise injection is\n";
  rep << "  attempted here. Instead the delivered-phase spectrum is compared\n";
  rep << "  with the slow corrector engaged and disengaged.\n";
  rep << "in-band rms below " << fmt(f_hi) << " Hz (deg): engaged "
      << fmtf(rms_on * rad_to_deg) << ", disengaged " << fmtf(rms_off * rad_to_deg)
      << "\n";
  if (rms_on > 0.0)
    rep << "in-band suppression: " << fmtf(20.0 * std::log10(rms_off / rms_on), 1)
        << " dB\n";
  rep << "records written alongside this report (" << format << ")\n";
  emit_report(dir, rep.str());
  return 0;
}

int run_identify(const ScenarioConfig& sc, const std::string& loop_str,
                 bool has_injection, double injection_hz, bool has_band,
                 double band_hz, bool has_duration, double duration_s,
                 double coherence) {
  if (loop_str == "global") return identify_global(sc);
  LoopId loop;
  if (loop_str == "local_a") loop = LoopId::local_a;
  else if (loop_str == "local_b") loop = LoopId::local_b;
  else if (loop_str == "fast_a") loop = LoopId::fast_a;
  else if (loop_str == "fast_b") loop = LoopId::fast_b;
  else throw std::invalid_argument("unknown loop '" + loop_str +
                                   "' (local_a|local_b|fast_a|fast_b|global)");

  // defaults put the injection power where each crossover lives: the local
  // tap already spans only 50 kHz, the fast tap spans 2.5 MHz so the drive
  // is shaped to stop a couple octaves above its crossing
  const bool is_fast = loop == LoopId::fast_a || loop == LoopId::fast_b;
  const double amp = has_injection ? injection_hz : (is_fast ? 2.5e5 : 8.0e3);
  const double band = has_band ? band_hz : (is_fast ? 5.0e5 : 0.0);
  const double dur = has_duration ? duration_s : (is_fast ? 0.4 : 1.2);
  if (amp <= 0.0) throw std::invalid_argument("injection level must be > 0");
  if (band < 0.0) throw std::invalid_argument("injection band must be >= 0");
  const NoiseProcess injection = WhiteSpec{amp, band};
  const IdentificationRun run = run_identification(sc, loop, injection, dur);

  WelchParams wp;
  wp.segment_length = is_fast ? 16384 : 4096;
  const IdentificationEstimate est =
      estimate_tf(run.injected, run.measured_on, run.measured_off, wp, coherence);

  const fs::path dir = sc.outputs.directory;
  fs::create_directories(dir);
  const std::string& format = sc.outputs.format;
  MetaList meta = run_meta(sc);
  meta.emplace_back("loop", loop_str);
  meta.emplace_back("injection_rms_hz", fmt(amp, 17));
  meta.emplace_back("injection_band_hz", fmt(band, 17));
  write_series_file(dir, "ident_injected", run.injected, format, meta);
  write_series_file(dir, "ident_measured_on", run.measured_on, format, meta);
  write_series_file(dir, "ident_measured_off", run.measured_off, format, meta);

  DataTable tf;
  for (auto& kv : meta) tf.meta.push_back(kv);
  tf.meta.emplace_back("unit", "magnitudes dimensionless, phases rad");
  tf.meta.emplace_back("segment_length", std::to_string(wp.segment_length));
  tf.columns = {"frequency_hz",   "plant_mag",      "plant_phase_rad",
                "open_loop_mag",  "open_loop_phase_rad", "sensitivity_mag",
                "coherence"};
  tf.data.resize(tf.columns.size());
  const auto& fgrid = est.open_loop.frequencies;
  for (std::size_t k = 0; k < fgrid.size(); ++k) {
    tf.data[0].push_back(fgrid[k]);
    tf.data[1].push_back(std::abs(est.plant.response[k]));
    tf.data[2].push_back(std::arg(est.plant.response[k]));
    tf.data[3].push_back(std::abs(est.open_loop.response[k]));
    tf.data[4].push_back(std::arg(est.open_loop.response[k]));
    tf.data[5].push_back(std::abs(est.sensitivity.response[k]));
    tf.data[6].push_back(est.open_loop.coherence[k]);
  }
  write_table((dir / ("ident_tf" + ext_for(format))).string(), tf, format);

  std::ostringstream rep;
  rep << "identify report\n";
  rep << "loop: " << loop_str << "\n";
  rep << "injection: white, " << fmt(amp) << " Hz rms at the actuator";
  if (band > 0.0) rep << ", shaped below " << fmt(band) << " Hz";
  rep << "\n";
  rep << "duration_s: " << fmt(dur) << " per pass (closed, then opened)\n";
  rep << "segment_length: " << wp.segment_length << "\n";
  if (std::isfinite(est.bandwidth_hz))
    rep << "bandwidth_hz (closed-loop -3 dB, coherence >= " << fmtf(coherence)
        << "): " << fmtf(est.bandwidth_hz, 1) << "\n";
  else
    rep << "bandwidth_hz: not resolved at coherence >= " << fmtf(coherence)
        << "; raise the injection level or lengthen the run\n";
  rep << "records written alongside this report (" << format << ")\n";
  emit_report(dir, rep.str());
  return 0;
}

// ------------------------------------------------------------------ fringe

int run_fringe(const ScenarioConfig& sc, std::size_t n_setpoints, std::size_t sweeps,
               long max_unlocks) {
  SystemModel system(sc);
  const FringeSweepResult res = fringe_sweep(system, n_setpoints, sweeps,
                                             sc.fringe.settle_s, sc.fringe.measure_s);
  const SimOutput out = system.take_output();

  const fs::path dir = sc.outputs.directory;
  fs::create_directories(dir);
  const std::string& format = sc.outputs.format;
  const MetaList meta = run_meta(sc);

  DataTable rates;
  for (auto& kv : meta) rates.meta.push_back(kv);
  rates.meta.emplace_back("unit", "setpoint rad, rates Hz");
  rates.columns = {"sweep", "setpoint_rad", "rate1_hz", "rate2_hz"};
  rates.data.resize(4);
  for (std::size_t s = 0; s < res.rates1_hz.size(); ++s)
    for (std::size_t j = 0; j < res.setpoints_rad.size(); ++j) {
      rates.data[0].push_back(static_cast<double>(s));
      rates.data[1].push_back(res.setpoints_rad[j]);
      rates.data[2].push_back(res.rates1_hz[s][j]);
      rates.data[3].push_back(res.rates2_hz[s][j]);
    }
  write_table((dir / ("fringe_rates" + ext_for(format))).string(), rates, format);

  DataTable fits;
  for (auto& kv : meta) fits.meta.push_back(kv);
  fits.meta.emplace_back("unit", "phases rad, amplitudes Hz");
  fits.columns = {"sweep",         "time_s",      "contrast",
                  "phase_rad",     "sigma_rad",   "amplitude1_hz",
                  "amplitude2_hz", "residual_rms", "delta_theta_err_rad",
                  "ff_phase_rad"};
  fits.data.resize(fits.columns.size());
  std::vector<double> phis, sigmas, contrasts;
  for (std::size_t s = 0; s < res.fits.size(); ++s) {
    const FringeFit& f = res.fits[s];
    const double sigma = (f.contrast > 0.0 && f.contrast <= 1.0)
                             ? sigma_from_contrast(f.contrast)
                             : std::numeric_limits<double>::quiet_NaN();
    fits.data[0].push_back(static_cast<double>(s));
    fits.data[1].push_back(res.sweep_time_s[s]);
    fits.data[2].push_back(f.contrast);
    fits.data[3].push_back(f.phase_offset_rad);
    fits.data[4].push_back(sigma);
    fits.data[5].push_back(f.amplitude1);
    fits.data[6].push_back(f.amplitude2);
    fits.data[7].push_back(f.residual_rms);
    fits.data[8].push_back(res.delta_theta_err_rad[s]);
    fits.data[9].push_back(res.ff_phase_rad[s]);
    phis.push_back(f.phase_offset_rad);
    contrasts.push_back(f.contrast);
    if (std::isfinite(sigma)) sigmas.push_back(sigma);
  }
  write_table((dir / ("fringe_fits" + ext_for(format))).string(), fits, format);

  // circular mean of the fitted setpoints, then spread about it
  double ci = 0.0, sj = 0.0;
  for (double p : phis) {
    ci += std::cos(p);
    sj += std::sin(p);
  }
  const double mu = std::atan2(sj, ci);
  std::vector<double> dev;
  for (double p : phis) dev.push_back(wrap_phase(p - mu));
  const ColumnStats dstat = column_stats(dev);
  const ColumnStats cstat = column_stats(contrasts);
  const ColumnStats sstat = column_stats(sigmas);

  std::ostringstream rep;
  rep << "fringe report\n";
  rep << "seed: " << sc.sim.master_seed << "\n";
  rep << "sweeps: " << sweeps << " x " << n_setpoints << " setpoints, settle "
      << fmt(sc.fringe.settle_s) << " s, measure " << fmt(sc.fringe.measure_s)
      << " s each\n";
  const std::size_t show = std::min<std::size_t>(res.fits.size(), 24);
  for (std::size_t s = 0; s < show; ++s) {
    rep << "  sweep " << s << ": C=" << fmtf(res.fits[s].contrast, 3)
        << "  phi0=" << fmtf(wrap_phase(phis[s]) * rad_to_deg, 1) << " deg";
    if (res.fits[s].contrast > 0.0 && res.fits[s].contrast <= 1.0)
      rep << "  sigma=" << fmtf(sigma_from_contrast(res.fits[s].contrast) * rad_to_deg, 1)
          << " deg";
    rep << "\n";
  }
  if (res.fits.size() > show) rep << "  ... (" << res.fits.size() << " sweeps)\n";
  rep << "mean contrast: " << fmtf(cstat.mean, 3) << "\n";
  if (sstat.n)
    rep << "mean implied jitter (deg): " << fmtf(sstat.mean * rad_to_deg, 1) << "\n";
  rep << "setpoint mean (deg): " << fmtf(mu * rad_to_deg, 2) << "\n";
  rep << "setpoint spread (deg): " << fmtf(dstat.std_dev * rad_to_deg, 2) << "\n";
  rep << "unlock events: " << out.unlocks.size() << " total, "
      << settled_unlocks(out, sc.sim.settle_s) << " after settling\n";
  rep << "records written alongside this report (" << format << ")\n";
  emit_report(dir, rep.str());
  return unlock_status(out, sc.sim.settle_s, max_unlocks);
}

// -------------------------------------------------------------------- plan

int run_plan(std::int64_t beat_hz, std::int64_t fast_center_hz,
             std::int64_t local_center_hz, int nodes, std::int64_t max_beat_hz,
             const std::string& out_file) {
  const FrequencyPlan p = solve_plan(beat_hz, fast_center_hz, local_center_hz);
  const PlanCheck c = check_plan(p);

  std::ostringstream rep;
  rep << "clock plan (Hz):\n";
  rep << "  omega_loc_a_hz   " << p.omega_loc_a_hz << "\n";
  rep << "  omega_loc_b_hz   " << p.omega_loc_b_hz << "\n";
  rep << "  omega_fast_a_hz  " << p.omega_fast_a_hz << "\n";
  rep << "  omega_fast_b_hz  " << p.omega_fast_b_hz << "\n";
  rep << "net detuning omega_tot_hz: " << c.omega_tot_hz
      << (c.balanced ? " (balanced)" : " (NOT balanced)") << "\n";
  rep << "midpoint beat omega_glob_hz: " << c.omega_glob_hz << "\n";

  StarPlan star;
  if (nodes > 2) {
    star = extend_star(p, nodes, max_beat_hz);
    rep << "\nstar extension to " << nodes << " nodes (beats capped at "
        << max_beat_hz << " Hz):\n";
    for (const auto& n : star.nodes)
      rep << "  node " << n.node << ": omega_fast_hz " << n.omega_fast_hz
          << ", omega_loc_hz " << n.omega_loc_hz << "\n";
    rep << "  pairwise midpoint beats (Hz):";
    for (auto b : star.pairwise_beats_hz) rep << ' ' << b;
    rep << "\n  all pairs balance to zero net detuning\n";
  }

  std::ofstream f(out_file, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write plan file: " + out_file);
  f << "// balanced clock plan; drop this block into a scenario config\n";
  f << "{\n  \"frequency_plan\": {\n";
  f << "    \"omega_loc_a_hz\": " << p.omega_loc_a_hz << ",\n";
  f << "    \"omega_loc_b_hz\": " << p.omega_loc_b_hz << ",\n";
  f << "    \"omega_fast_a_hz\": " << p.omega_fast_a_hz << ",\n";
  f << "    \"omega_fast_b_hz\": " << p.omega_fast_b_hz << "\n";
  f << "  }\n}\n";
  if (nodes > 2) {
    f << "// star clocks for " << nodes
      << " nodes sharing one midpoint (node: fast, loc):\n";
    for (const auto& n : star.nodes)
      f << "//   " << n.node << ": " << n.omega_fast_hz << ", " << n.omega_loc_hz
        << "\n";
  }
  rep << "wrote " << out_file << "\n";
  std::cout << rep.str();
  return 0;
}

// ----------------------------------------------------------------- analyze

int run_analyze(const std::vector<std::string>& inputs, const std::string& out_dir,
                const std::string& format, std::size_t segment) {
  std::vector<std::pair<fs::path, bool>> files;  // path, named explicitly
  for (const auto& in : inputs) {
    const fs::path p = in;
    if (fs::is_directory(p)) {
      std::vector<fs::path> got;
      for (const auto& e : fs::directory_iterator(p)) {
        if (!e.is_regular_file()) continue;
        const std::string x = e.path().extension().string();
        if (x == ".txt" || x == ".bin") got.push_back(e.path());
      }
      std::sort(got.begin(), got.end());
      for (auto& g : got) files.emplace_back(std::move(g), false);
    } else {
      files.emplace_back(p, true);
    }
  }
  if (files.empty()) throw std::invalid_argument("no record files to analyze");

  for (const auto& [path, named] : files) {
    DataTable t;
    try {
      t = read_table(path.string());
    } catch (const std::exception& e) {
      if (named) throw;
      std::cout << path.filename().string() << ": skipped (" << e.what() << ")\n";
      continue;
    }
    std::cout << path.filename().string() << ": " << t.rows() << " rows\n";
    const std::string* unit = t.find_meta("unit");
    if (unit) std::cout << "  unit: " << *unit << "\n";
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      if (t.columns[c] == "time_s" || t.columns[c] == "frequency_hz") continue;
      const ColumnStats s = column_stats(t.data[c]);
      std::cout << "  " << t.columns[c] << ": mean " << fmt(s.mean, 5) << ", std "
                << fmt(s.std_dev, 5) << ", min " << fmt(s.min, 5) << ", max "
                << fmt(s.max, 5) << "\n";
    }

    const bool is_series = !t.columns.empty() && t.columns.front() == "time_s";
    const std::string stem = path.stem().string();
    const bool is_psd = stem.size() > 4 && stem.rfind("_psd") == stem.size() - 4;
    if (!is_series || is_psd) continue;
    for (std::size_t c = 1; c < t.columns.size(); ++c) {
      TimeSeries ts = series_from_table(t, t.columns[c]);
      if (ts.size() < 64 || ts.dt <= 0.0) continue;
      WelchParams wp;
      wp.segment_length = segment;
      const PSDEstimate psd = welch_psd(demeaned(ts), wp);
      double integral = 0.0;
      for (std::size_t k = 1; k < psd.density.size(); ++k)
        integral += psd.density[k] * psd.df;
      const ColumnStats s = column_stats(ts.samples);
      const double var = s.std_dev * s.std_dev;
      std::cout << "  " << t.columns[c] << " psd: integral/variance = "
                << (var > 0.0 ? fmtf(integral / var, 3) : "n/a") << " ("
                << psd.segment_count << " segments)\n";
      const fs::path dst_dir = out_dir.empty() ? path.parent_path() : fs::path(out_dir);
      fs::create_directories(dst_dir);
      MetaList extra = {{"source", path.filename().string()},
                        {"column", t.columns[c]}};
      const std::string suffix =
          t.columns.size() > 2 ? "_" + t.columns[c] + "_psd" : "_psd";
      write_psd_file(dst_dir, stem + suffix, psd, format, std::move(extra));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discrete-time phase synchronization simulator and analysis toolkit"};
  app.require_subcommand(1);

  CommonOverrides ov;
  std::string config_path;
  long max_unlocks = 0;

  const auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* c = cmd->add_option("--config", config_path, "scenario config file");
    if (needs_config) c->required();
    cmd->add_option("--seed", ov.seed, "override the master seed")
        ->each([&](const std::string&) { ov.has_seed = true; });
    cmd->add_option("--duration", ov.duration, "override the run length in seconds")
        ->each([&](const std::string&) { ov.has_duration = true; });
    cmd->add_option("--out", ov.out, "override the output directory");
    cmd->add_option("--format", ov.format, "record format")
        ->check(CLI::IsMember({"text", "binary"}));
  };

  auto* sim = app.add_subcommand("simulate", "run a scenario and write records");
  add_common(sim, true);
  sim->add_option("--max-unlocks", max_unlocks,
                  "tolerated unlock events after settling (default 0)");

  auto* ident = app.add_subcommand("identify", "measure a loop transfer function");
  add_common(ident, true);
  std::string loop_str;
  double injection_hz = 0.0, coherence = 0.9;
  ident->add_option("--loop", loop_str, "local_a|local_b|fast_a|fast_b|global")
      ->required();
  auto* inj_opt =
      ident->add_option("--injection", injection_hz, "white injection rms in Hz");
  double injection_band_hz = 0.0;
  auto* band_opt = ident->add_option("--injection-band", injection_band_hz,
                                     "injection low-pass corner in Hz (0: full band)");
  ident->add_option("--coherence", coherence, "coherence gate for the bandwidth");

  auto* fringe = app.add_subcommand("fringe", "sweep the readout fringe and fit it");
  add_common(fringe, true);
  std::size_t n_setpoints = 9, sweeps = 3;
  fringe->add_option("--setpoints", n_setpoints, "setpoints per sweep (>= 5)");
  fringe->add_option("--sweeps", sweeps, "number of repeated sweeps");
  fringe->add_option("--max-unlocks", max_unlocks,
                     "tolerated unlock events after settling (default 0)");

  auto* plan = app.add_subcommand("plan", "lay out balanced clock frequencies");
  std::int64_t beat_hz = 1500, fast_center_hz = 215000000,
               local_center_hz = 400000000, max_beat_hz = 10000;
  int nodes = 2;
  std::string plan_out = "plan.jsonc";
  plan->add_option("--beat", beat_hz, "target midpoint beat in Hz");
  plan->add_option("--fast-center", fast_center_hz, "fast clock center in Hz");
  plan->add_option("--local-center", local_center_hz, "local clock center in Hz");
  plan->add_option("--nodes", nodes, "node count for a star extension");
  plan->add_option("--max-beat", max_beat_hz, "pairwise beat cap for the star");
  plan->add_option("--out", plan_out, "plan file to write");

  auto* analyze = app.add_subcommand("analyze", "stats and spectra for record files");
  std::vector<std::string> analyze_inputs;
  std::string analyze_out, analyze_format = "text";
  std::size_t segment = 0;
  analyze->add_option("files", analyze_inputs, "record files or directories")
      ->required();
  analyze->add_option("--out", analyze_out, "directory for derived spectra");
  analyze->add_option("--format", analyze_format, "record format for spectra")
      ->check(CLI::IsMember({"text", "binary"}));
  analyze->add_option("--segment", segment, "Welch segment length (0: auto)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) {
      return run_simulate(load_with_overrides(config_path, ov), max_unlocks);
    }
    if (ident->parsed()) {
      if (coherence <= 0.0 || coherence >= 1.0)
        throw std::invalid_argument("coherence gate must sit in (0, 1)");
      return run_identify(load_with_overrides(config_path, ov), loop_str,
                          inj_opt->count() > 0, injection_hz, band_opt->count() > 0,
                          injection_band_hz, ov.has_duration, ov.duration, coherence);
    }
    if (fringe->parsed()) {
      return run_fringe(load_with_overrides(config_path, ov), n_setpoints, sweeps,
                        max_unlocks);
    }
    if (plan->parsed()) {
      return run_plan(beat_hz, fast_center_hz, local_center_hz, nodes, max_beat_hz,
                      plan_out);
    }
    if (analyze->parsed()) {
      return run_analyze(analyze_inputs, analyze_out, analyze_format, segment);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
