// Copyright 2026 The nvreadout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nvreadout/cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "nvreadout/cli/config.hpp"
#include "nvreadout/cli/csv_io.hpp"
#include "nvreadout/errors.hpp"
#include "nvreadout/rng.hpp"

namespace nvreadout::cli {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

namespace {

class IoFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fixed(double v, int decimals) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string pct(double v, int decimals = 1) { return fixed(100.0 * v, decimals); }

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  if (n == 1) {
    out[0] = a;
    return out;
  }
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  return out;
}

struct Context {
  std::string command;
  ScenarioConfig cfg;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;
  std::string csv_path;
  std::string csv_text;
  std::vector<std::string> outputs;
  std::vector<std::string> notes;
  std::ostringstream summary;

  void write(const std::string& name, const std::string& text) {
    const auto path = out_dir / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot write '" + path.string() + "'");
    f << text;
    if (!f) throw IoFailure("write failed for '" + path.string() + "'");
    outputs.push_back(name);
  }

  CsvTable input_table() const { return parse_csv(csv_text, csv_path); }
};

// ---------------------------------------------------------------------------

FidelityReport protocol_report(const ScenarioConfig& c) {
  FidelityReport r = fidelity_report(c.measured, c.budget);
  for (std::size_t i = 0; i < c.durations.duration_s.size(); ++i) {
    ReadoutDurationRow row;
    row.duration_s = c.durations.duration_s[i];
    row.threshold = static_cast<int>(c.durations.threshold[i]);
    row.measured = {c.durations.e0_meas[i], c.durations.e1_meas[i]};
    const FidelityReport sub = fidelity_report(row.measured, c.budget);
    row.f_meas = sub.f_meas;
    row.intrinsic = sub.intrinsic;
    row.f_corrected = sub.f_corrected;
    row.snr = sub.snr_single_shot;
    r.duration_rows.push_back(row);
  }
  return r;
}

ProtocolErrorBudget intrinsic_budget(const ScenarioConfig& c, const FidelityReport& r) {
  ProtocolErrorBudget b = c.budget;
  b.e0 = std::clamp(r.intrinsic.e0, 0.0, 1.0);
  b.e1 = std::clamp(r.intrinsic.e1, 0.0, 1.0);
  return b;
}

std::string duration_label(double s) {
  if (s >= 1e-3) return format_number(s * 1e3) + " ms";
  return format_number(s * 1e6) + " us";
}

// ---------------------------------------------------------------------------

void cmd_ple(Context& ctx) {
  const auto& c = ctx.cfg;
  const TransitionTable table = transitions_at(c.excited, c.strain, c.field);
  const PleSpectrum spec = synth_ple_spectrum(table, linspace(c.ple_min_ghz, c.ple_max_ghz, c.ple_points));
  CsvWriter s({"detuning_ghz", "intensity"});
  for (std::size_t i = 0; i < spec.detuning_ghz.size(); ++i) s.row_numbers({spec.detuning_ghz[i], spec.intensity[i]});
  ctx.write("ple_spectrum.csv", s.text());

  CsvWriter t({"ground_index", "excited_index", "detuning_ghz", "strength", "ground_ms", "excited_ms"});
  for (const auto& r : table.rows)
    t.row({std::to_string(r.ground_index), std::to_string(r.excited_index), format_number(r.energy_ghz),
           format_number(r.strength), std::to_string(r.ground_spin), std::to_string(r.excited_spin)});
  ctx.write("ple_transitions.csv", t.text());

  const auto map = field_strain_map(c.excited, StrainField{c.map_xi_perp_ghz},
                                    linspace(0.0, c.map_b_max_mt, c.map_points), c.map_theta_deg);
  CsvWriter m({"b_mt", "detuning_ghz", "strength"});
  CsvWriter h({"b_mt", "detuning_ghz", "strength"});
  for (const auto& p : map) {
    for (const auto& r : p.table.rows) m.row_numbers({p.b_mt, r.energy_ghz, r.strength});
    for (std::size_t idx : p.highlighted) h.row_numbers({p.b_mt, p.table.rows[idx].energy_ghz, p.table.rows[idx].strength});
  }
  ctx.write("ple_map.csv", m.text());
  ctx.write("ple_map_zero_lines.csv", h.text());

  const auto xi = linspace(0.0, 20.0, 201);
  const auto levels = excited_levels_vs_strain(c.excited, xi, FieldVector{});
  CsvWriter l({"xi_perp_ghz", "level1_ghz", "level2_ghz", "level3_ghz", "level4_ghz", "level5_ghz", "level6_ghz"});
  for (std::size_t i = 0; i < xi.size(); ++i) {
    std::vector<double> row{xi[i]};
    row.insert(row.end(), levels[i].begin(), levels[i].end());
    l.row_numbers(row);
  }
  ctx.write("excited_levels_vs_strain.csv", l.text());

  ctx.summary << "PLE at xi_perp = " << fixed(c.strain.xi_perp_ghz, 2) << " GHz, B = " << fixed(c.field.magnitude_mt, 3)
              << " mT, theta = " << fixed(c.field.theta_deg, 1) << " deg\n";
  for (std::size_t idx : table.strongest_zero_rows(2))
    ctx.summary << "  |0> line at " << fixed(table.rows[idx].energy_ghz, 3) << " GHz, M = "
                << fixed(table.rows[idx].strength, 4) << "\n";
  for (const auto& w : spec.warnings) ctx.notes.push_back(w);
  ctx.summary << "  skipped zero-strength lines: " << spec.warnings.size() << "\n";
}

void cmd_odmr_infer(Context& ctx) {
  const auto& c = ctx.cfg;
  OdmrLineSet lines;
  if (!ctx.csv_path.empty()) {
    lines = read_odmr_lines(ctx.input_table());
    ctx.notes.push_back("rows read: " + std::to_string(lines.lines.size()));
  } else {
    lines = odmr_transitions(c.ground, c.field);
    ctx.notes.push_back("lines synthesized from field.b_mt / field.theta_deg");
  }
  ctx.write("odmr_lines.csv", format_odmr_lines(lines));
  const FieldEstimate est = infer_field(lines, c.ground, c.odmr);
  CsvWriter w({"b_mt", "sigma_b_mt", "theta_deg", "sigma_theta_deg", "rms_residual_hz", "theta_defined"});
  w.row({format_number(est.field.magnitude_mt), format_number(est.sigma_magnitude_mt),
         format_number(est.field.theta_deg), format_number(est.sigma_theta_deg), format_number(est.rms_residual_hz),
         est.theta_defined ? "1" : "0"});
  ctx.write("field_estimate.csv", w.text());
  ctx.write("odmr_lines_fitted.csv", format_odmr_lines(odmr_transitions(c.ground, est.field)));
  ctx.summary << "B = " << fixed(est.field.magnitude_mt, 4) << " +- " << fixed(est.sigma_magnitude_mt, 4) << " mT\n";
  if (est.theta_defined)
    ctx.summary << "theta = " << fixed(est.field.theta_deg, 2) << " +- " << fixed(est.sigma_theta_deg, 2) << " deg\n";
  else
    ctx.summary << "theta undefined (field below " << format_number(c.odmr.zero_field_threshold_mt) << " mT)\n";
  ctx.summary << "rms residual = " << fixed(est.rms_residual_hz * 1e-3, 3) << " kHz\n";
}

void cmd_pump_sim(Context& ctx) {
  const auto& c = ctx.cfg;
  const RateModel model = c.rate_model();
  PulseTimeline tl;
  tl.segments = {segment::OpticalPump{c.pump_duration_s}};
  const TimelineResult res = simulate_timeline(tl, model.pump, model.fluorescence, c.family_state(0));
  TraceBundle single;
  single.binwidth_s = c.binwidth_s;
  single.traces.push_back({0, MwVariant::kNone, res.trace.rate_cps});
  ctx.write("pump_trace.csv", format_trace_bundle(single));

  const std::size_t bins = bins_for(c.pump_duration_s, c.binwidth_s);
  TraceBundle bundle = synthesize_bundle(model, bins);
  Rng rng(ctx.seed);
  for (auto& t : bundle.traces)
    for (double& v : t.rate_cps) v += c.noise_relative * v * rng.normal();
  ctx.write("pump_bundle.csv", format_trace_bundle(bundle));

  const double photons = res.trace.expected_photons(c.binwidth_s);
  ctx.summary << "pumping trace (family a, " << fixed(c.pump_duration_s * 1e6, 1)
              << " us): expected photons = " << fixed(photons, 4) << "\n";
  ctx.summary << "final rate = " << fixed(res.trace.rate_cps.back() * 1e-3, 3) << " kcps\n";
  ctx.summary << "bundle: " << bundle.traces.size() << " traces x " << bins << " bins, relative noise "
              << format_number(c.noise_relative) << "\n";
}

void cmd_pump_fit(Context& ctx) {
  const auto& c = ctx.cfg;
  if (ctx.csv_path.empty()) throw ConfigError("pump-fit needs --csv with a trace bundle");
  const TraceBundle bundle = read_trace_bundle(ctx.input_table());
  ctx.notes.push_back("traces read: " + std::to_string(bundle.traces.size()) + ", binwidth " +
                      format_number(bundle.binwidth_s) + " s");
  RateModel start = c.rate_model();
  start.pump = OpticalPumpParams::from_lifetimes(c.t_st0_s, c.t_st1_s, c.t_ts_s, c.t_ion_s, bundle.binwidth_s);
  start.pump.p_recombination = c.p_recombination;
  GlobalFitOptions opt;
  opt.fix_ionization = c.fix_ionization;
  opt.max_iterations = c.fit_max_iterations;
  const GlobalFitResult fit = global_fit(bundle, start, opt);

  const char* fam = "abc";
  CsvWriter p({"quantity", "a", "b", "c"});
  const char* names[] = {"n_|0> (%)", "n_|+1> (%)", "n_|-1> (%)"};
  for (int s = 0; s < 3; ++s) {
    std::vector<std::string> row{names[s]};
    for (int f = 0; f < kNumFamilies; ++f) row.push_back(pct(fit.model.populations[f][s], 2));
    p.row(row);
  }
  std::vector<std::string> frow{"F_spin (%)"};
  for (int f = 0; f < kNumFamilies; ++f) frow.push_back(pct(fit.spin_fidelity[f], 2));
  p.row(frow);
  ctx.write("pump_fit_populations.csv", p.text());

  const double bw = bundle.binwidth_s;
  auto life = [bw](double prob) { return lifetime_from_probability(prob, bw); };
  const auto& m = fit.model;
  const auto& sg = fit.sigma;
  CsvWriter g({"quantity", "value", "sigma"});
  g.row({"E_MW (%)", pct(m.e_mw, 3), pct(sg.e_mw, 3)});
  g.row({"f_0 (kcps)", fixed(m.fluorescence.f0_cps * 1e-3, 3), fixed(sg.f0_cps * 1e-3, 3)});
  g.row({"f_1 (kcps)", fixed(m.fluorescence.f1_cps * 1e-3, 3), fixed(sg.f1_cps * 1e-3, 3)});
  g.row({"T_st0 (us)", fixed(life(m.pump.p_st0) * 1e6, 4), fixed(sg.t_st0_s * 1e6, 4)});
  g.row({"T_st1 (ms)", fixed(life(m.pump.p_st1) * 1e3, 4), fixed(sg.t_st1_s * 1e3, 4)});
  g.row({"T_ts (us)", fixed(life(m.pump.p_ts) * 1e6, 4), fixed(sg.t_ts_s * 1e6, 4)});
  g.row({"T_ion (ms)", fixed(life(m.pump.p_ion) * 1e3, 4), fixed(sg.t_ion_s * 1e3, 4)});
  g.row({"fluorLoss1 (%)", pct(m.fluorescence.fluor_loss1, 3), pct(sg.fluor_loss1, 3)});
  g.row({"fluorLoss6 (%)", pct(m.fluorescence.fluor_loss6, 3), pct(sg.fluor_loss6, 3)});
  g.row({"R^2", fixed(fit.r_squared, 5), ""});
  ctx.write("pump_fit_global.csv", g.text());

  ctx.summary << "global fit: " << fit.iterations << " iterations, R^2 = " << fixed(fit.r_squared, 5) << "\n";
  ctx.summary << "T_st0 = " << fixed(life(m.pump.p_st0) * 1e6, 3) << " us, T_st1 = " << fixed(life(m.pump.p_st1) * 1e3, 3)
              << " ms, T_ts = " << fixed(life(m.pump.p_ts) * 1e6, 3) << " us\n";
  for (int f = 0; f < kNumFamilies; ++f)
    ctx.summary << "family " << fam[f] << ": n = (" << pct(m.populations[f][0]) << ", " << pct(m.populations[f][1])
                << ", " << pct(m.populations[f][2]) << ")%, F_spin = " << pct(fit.spin_fidelity[f]) << "%\n";
}

void cmd_hist_fit(Context& ctx) {
  const auto& c = ctx.cfg;
  if (ctx.csv_path.empty()) throw ConfigError("hist-fit needs --csv (histogram, saturation or lineshape file)");
  const CsvTable table = ctx.input_table();
  ctx.notes.push_back("rows read: " + std::to_string(table.rows.size()));
  switch (detect_schema(table)) {
    case CsvSchema::kHistogram: {
      const CountHistogram h = read_histogram(table);
      const auto kind = c.hist_kind == "poisson" ? CountModelKind::kPoisson : CountModelKind::kGaussianMixture;
      const CountFitResult fit = fit_count_model(h, kind, c.hist_components);
      CsvWriter params({"parameter", "value", "standard_error"});
      std::vector<double> model_pmf;
      if (const auto* p = std::get_if<PoissonModel>(&fit.model)) {
        params.row({"lambda", format_number(p->lambda), format_number(fit.standard_errors[0])});
        model_pmf = pmf_table(*p);
        ctx.summary << "Poisson fit: lambda = " << fixed(p->lambda, 4) << "\n";
      } else if (const auto* g = std::get_if<GaussianMixtureModel>(&fit.model)) {
        for (std::size_t i = 0; i < g->components.size(); ++i) {
          const auto& comp = g->components[i];
          const std::string n = std::to_string(i + 1);
          params.row({"amplitude" + n, format_number(comp.amplitude), format_number(fit.standard_errors[3 * i])});
          params.row({"mean" + n, format_number(comp.mean), format_number(fit.standard_errors[3 * i + 1])});
          params.row({"sd" + n, format_number(comp.sd), format_number(fit.standard_errors[3 * i + 2])});
          ctx.summary << "component " << n << ": amplitude " << pct(comp.amplitude, 2) << "%, mean "
                      << fixed(comp.mean, 3) << ", sd " << fixed(comp.sd, 3) << "\n";
        }
        for (std::size_t k = 0; k < h.counts.size(); ++k) model_pmf.push_back(g->raw(static_cast<double>(k)));
      }
      params.row({"r_squared", format_number(fit.r_squared), ""});
      ctx.write("hist_fit.csv", params.text());
      CsvWriter d({"photon_count", "observed_fraction", "model_fraction"});
      const auto freq = h.frequencies();
      for (std::size_t k = 0; k < freq.size(); ++k)
        d.row_numbers({static_cast<double>(k), freq[k], k < model_pmf.size() ? model_pmf[k] : 0.0});
      ctx.write("hist_model.csv", d.text());
      ctx.summary << "repetitions = " << h.total << ", mean = " << fixed(h.mean(), 4)
                  << ", R^2 = " << fixed(fit.r_squared, 5) << "\n";
      for (std::size_t i : fit.degenerate_components)
        ctx.summary << "component " << i + 1 << " collapsed to zero amplitude\n";
      return;
    }
    case CsvSchema::kSaturation: {
      const SaturationFit fit = fit_saturation(read_saturation(table));
      CsvWriter w({"parameter", "value", "sigma"});
      w.row({"A (cps per mW^2)", format_number(fit.a), format_number(fit.sigma_a)});
      w.row({"I_sat (mW)", format_number(fit.i_sat), format_number(fit.sigma_i_sat)});
      w.row({"f_sat (kcps)", format_number(fit.f_sat_cps * 1e-3), format_number(fit.sigma_f_sat_cps * 1e-3)});
      w.row({"r_squared", format_number(fit.r_squared), ""});
      w.row({"saturating", fit.saturating ? "1" : "0", ""});
      ctx.write("saturation_fit.csv", w.text());
      ctx.summary << "f_sat = " << fixed(fit.f_sat_cps * 1e-3, 2) << " +- " << fixed(fit.sigma_f_sat_cps * 1e-3, 2)
                  << " kcps, I_sat = " << fixed(fit.i_sat, 4) << " +- " << fixed(fit.sigma_i_sat, 4) << " mW\n";
      if (!fit.saturating) ctx.summary << "no clear saturation: I_sat is not constrained by the data\n";
      return;
    }
    case CsvSchema::kLineshape: {
      const Spectrum s = read_lineshape(table);
      const LineshapeFit fit = fit_lineshape(s.x, s.y);
      CsvWriter w({"shape", "amplitude", "center_ghz", "width_ghz", "offset", "fwhm_ghz", "r_squared", "converged"});
      auto emit = [&](const char* name, const PeakFit& p) {
        w.row({name, format_number(p.amplitude), format_number(p.center), format_number(p.width),
               format_number(p.offset), format_number(p.fwhm), format_number(p.r_squared), p.converged ? "1" : "0"});
        ctx.summary << name << ": FWHM = " << fixed(p.fwhm, 4) << " GHz, R^2 = " << fixed(p.r_squared, 5)
                    << (p.converged ? "" : " (not converged: " + p.message + ")") << "\n";
      };
      emit("gaussian", fit.gaussian);
      emit("lorentzian", fit.lorentzian);
      ctx.write("lineshape_fit.csv", w.text());
      return;
    }
    default:
      throw DataError(ctx.csv_path + ": header matches no known schema");
  }
}

void cmd_threshold(Context& ctx) {
  const auto& c = ctx.cfg;
  const CountModel minus = c.charge_minus.model();
  const CountModel zero = PoissonModel{c.charge_zero_lambda};
  const ThresholdResult best = optimize_threshold(minus, zero);
  const auto pm = pmf_table(minus), p0 = pmf_table(zero);
  const std::size_t n = std::max(pm.size(), p0.size());
  CsvWriter scan({"threshold", "error_minus", "error_zero", "error_sum"});
  double below = 0.0, above = 0.0;
  for (double v : p0) above += v;
  for (std::size_t t = 0; t <= n; ++t) {
    scan.row_numbers({static_cast<double>(t), below, std::max(above, 0.0), below + std::max(above, 0.0)});
    if (t < pm.size()) below += pm[t];
    if (t < p0.size()) above -= p0[t];
  }
  ctx.write("threshold_scan.csv", scan.text());
  CsvWriter pmf({"photon_count", "nv_minus", "nv_zero"});
  for (std::size_t k = 0; k < n; ++k)
    pmf.row_numbers({static_cast<double>(k), k < pm.size() ? pm[k] : 0.0, k < p0.size() ? p0[k] : 0.0});
  ctx.write("charge_pmf.csv", pmf.text());
  const double f = charge_fidelity(best.error_minus, best.error_zero);
  CsvWriter w({"threshold", "error_minus", "error_zero", "charge_fidelity"});
  w.row_numbers({static_cast<double>(best.discriminator.threshold), best.error_minus, best.error_zero, f});
  ctx.write("threshold.csv", w.text());
  ctx.summary << "threshold = " << best.discriminator.threshold << " photons (window "
              << format_number(c.charge_window_s * 1e3) << " ms)\n";
  ctx.summary << "NV- error = " << pct(best.error_minus, 2) << "%, NV0 error = " << pct(best.error_zero, 3)
              << "%, charge fidelity = " << pct(f, 2) << "%\n";
}

void cmd_protocol(Context& ctx) {
  const auto& c = ctx.cfg;
  const FidelityReport r = protocol_report(c);
  CsvWriter s3({"quantity", "value"});
  s3.row({"E_0_meas (%)", pct(r.measured.e0_meas, 2)});
  s3.row({"E_1_meas (%)", pct(r.measured.e1_meas, 2)});
  s3.row({"F_meas (%)", pct(r.f_meas, 2)});
  s3.row({"P_-1 (%)", pct(c.budget.p_minus1, 2)});
  s3.row({"P_+1 (%)", pct(c.budget.p_plus1, 2)});
  s3.row({"E_MW (%)", pct(c.budget.e_mw, 2)});
  s3.row({"E_0 (%)", pct(r.intrinsic.e0, 2)});
  s3.row({"E_1 (%)", pct(r.intrinsic.e1, 2)});
  s3.row({"F (%)", pct(r.f_corrected, 2)});
  s3.row({"single-shot SNR", fixed(r.snr_single_shot, 3)});
  ctx.write("fidelity_report.csv", s3.text());

  CsvWriter t1({"quantity", "value"});
  t1.row({"NV- fraction (%)", pct(c.nv_minus_fraction, 1)});
  t1.row({"spin init. |+1> fraction (%)", pct(c.budget.p_plus1, 1)});
  t1.row({"MW error (%)", pct(c.budget.e_mw, 1)});
  t1.row({"end-to-end fidelity (%)", pct(r.f_meas, 1)});
  t1.row({"readout fidelity (%)", pct(r.f_corrected, 1)});
  ctx.write("table_overview.csv", t1.text());

  std::vector<std::string> header{"quantity"};
  for (const auto& row : r.duration_rows) header.push_back(duration_label(row.duration_s));
  CsvWriter s4(header);
  auto add = [&](const std::string& name, auto value) {
    if (r.duration_rows.empty()) return;
    std::vector<std::string> cells{name};
    for (const auto& row : r.duration_rows) cells.push_back(value(row));
    s4.row(cells);
  };
  add("threshold (photons)", [](const ReadoutDurationRow& x) { return std::to_string(x.threshold); });
  add("E_0_meas (%)", [](const ReadoutDurationRow& x) { return pct(x.measured.e0_meas, 2); });
  add("E_1_meas (%)", [](const ReadoutDurationRow& x) { return pct(x.measured.e1_meas, 2); });
  add("F_meas (%)", [](const ReadoutDurationRow& x) { return pct(x.f_meas, 2); });
  add("E_0 (%)", [](const ReadoutDurationRow& x) { return pct(x.intrinsic.e0, 2); });
  add("E_1 (%)", [](const ReadoutDurationRow& x) { return pct(x.intrinsic.e1, 2); });
  add("F (%)", [](const ReadoutDurationRow& x) { return pct(x.f_corrected, 2); });
  add("single-shot SNR", [](const ReadoutDurationRow& x) { return fixed(x.snr, 3); });
  ctx.write("readout_durations.csv", s4.text());

  const ProtocolErrorBudget b = intrinsic_budget(c, r);
  CsvWriter rabi({"angle_deg", "flip_probability", "high_fraction"});
  for (double deg : linspace(0.0, 180.0, c.rabi_points)) {
    const double q = flip_probability(deg * M_PI / 180.0);
    rabi.row_numbers({deg, q, high_count_fraction(b, q)});
  }
  ctx.write("rabi_contrast.csv", rabi.text());

  const MeasuredErrors fwd = forward_error_model(b);
  ctx.summary << "F_meas " << pct(r.f_meas) << "% (E_0,meas " << pct(r.measured.e0_meas) << "%, E_1,meas "
              << pct(r.measured.e1_meas) << "%)\n";
  ctx.summary << "F " << pct(r.f_corrected) << "% (E_0 " << pct(r.intrinsic.e0, 2) << "%, E_1 "
              << pct(r.intrinsic.e1, 2) << "%)\n";
  ctx.summary << "SNR " << fixed(r.snr_single_shot, 2) << "\n";
  ctx.summary << "forward check: E_0,meas " << pct(fwd.e0_meas, 3) << "%, E_1,meas " << pct(fwd.e1_meas, 3) << "%\n";
}

std::vector<double> speedup_grid(const ScenarioConfig& c) {
  std::vector<double> t{0.0};
  const int n = c.speedup_points - 1;
  const double la = std::log10(c.speedup_t_min_s), lb = std::log10(c.speedup_t_max_s);
  for (int i = 0; i < n; ++i) t.push_back(std::pow(10.0, n == 1 ? lb : la + (lb - la) * i / (n - 1)));
  return t;
}

void cmd_speedup(Context& ctx) {
  const auto& c = ctx.cfg;
  double snr = c.single_shot_snr;
  if (snr == 0.0) snr = protocol_report(c).snr_single_shot;
  const auto curve = speedup_curve(speedup_grid(c), c.timing, snr);
  CsvWriter w({"t_seq_s", "speedup"});
  CsvWriter d({"t_seq_s", "conventional_time_s", "single_shot_time_s", "speedup"});
  for (const auto& p : curve) {
    w.row_numbers({p.t_seq_s, p.speedup});
    d.row_numbers({p.t_seq_s, p.conventional_time_s, p.single_shot_time_s, p.speedup});
  }
  ctx.write("speedup.csv", w.text());
  ctx.write("speedup_detail.csv", d.text());
  const double conv = conventional_snr(c.timing);
  ctx.summary << "conventional SNR per repetition = " << fixed(conv, 5) << " at "
              << fixed(c.timing.f_sat_cps * 1e-3, 1) << " kcps -> " << repetitions_for_snr(conv) << " repetitions\n";
  ctx.summary << "single-shot SNR = " << fixed(snr, 3) << " -> " << repetitions_for_snr(snr) << " repetition(s) of "
              << fixed(c.timing.single_shot_overhead_s * 1e6, 1) << " us"
              << (c.timing.include_postselection ? " (divided by post-selection acceptance)" : "") << "\n";
  ctx.summary << "speed-up at t_seq = 0: " << fixed(curve.front().speedup, 3) << "\n";
  ctx.summary << "speed-up at t_seq = " << format_number(curve.back().t_seq_s * 1e3)
              << " ms: " << fixed(curve.back().speedup, 1) << "\n";
  ctx.summary << "resonant-readout comparison: SNR " << format_number(c.resonant_snr) << " needs "
              << repetitions_for_snr(c.resonant_snr) << " repetitions\n";
}

void cmd_mc(Context& ctx) {
  const auto& c = ctx.cfg;
  const FidelityReport r = protocol_report(c);
  const ProtocolErrorBudget b = intrinsic_budget(c, r);
  const CountModel minus = c.charge_minus.model();
  const CountModel zero = PoissonModel{c.charge_zero_lambda};
  const int threshold = c.mc_threshold >= 0 ? c.mc_threshold : optimize_threshold(minus, zero).discriminator.threshold;
  const MonteCarloResult mc = end_to_end_mc(b, minus, zero, threshold, c.mc_repetitions, ctx.seed);
  CsvWriter h({"photon_count", "zero_preparation", "plus_preparation"});
  const std::size_t n = std::max(mc.zero_preparation.counts.size(), mc.plus_preparation.counts.size());
  for (std::size_t k = 0; k < n; ++k) {
    const auto a = k < mc.zero_preparation.counts.size() ? mc.zero_preparation.counts[k] : 0;
    const auto p = k < mc.plus_preparation.counts.size() ? mc.plus_preparation.counts[k] : 0;
    h.row({std::to_string(k), std::to_string(a), std::to_string(p)});
  }
  ctx.write("mc_histograms.csv", h.text());
  const double z = (mc.f_meas - mc.f_meas_analytic) / mc.f_meas_sigma;
  CsvWriter s({"quantity", "value"});
  s.row({"repetitions per preparation", std::to_string(c.mc_repetitions)});
  s.row({"threshold (photons)", std::to_string(threshold)});
  s.row({"E_0_meas (%)", pct(mc.measured.e0_meas, 3)});
  s.row({"E_1_meas (%)", pct(mc.measured.e1_meas, 3)});
  s.row({"F_meas (%)", pct(mc.f_meas, 3)});
  s.row({"F_meas sigma (%)", pct(mc.f_meas_sigma, 3)});
  s.row({"F_meas analytic (%)", pct(mc.f_meas_analytic, 3)});
  s.row({"deviation (sigma)", fixed(z, 3)});
  ctx.write("mc_summary.csv", s.text());
  ctx.summary << "MC F_meas = " << pct(mc.f_meas, 2) << " +- " << pct(mc.f_meas_sigma, 2) << "% (" << c.mc_repetitions
              << " repetitions per preparation, threshold " << threshold << ")\n";
  ctx.summary << "analytic F_meas = " << pct(mc.f_meas_analytic, 2) << "%, deviation " << fixed(z, 2) << " sigma\n";
}

using Handler = void (*)(Context&);

struct CommandSpec {
  const char* name;
  const char* help;
  Handler run;
  bool reads_csv;
};

const CommandSpec kCommands[] = {
    {"ple", "excited-state transitions, PLE spectrum and field map", cmd_ple, false},
    {"odmr-infer", "infer (B, theta) from ODMR lines (--csv or synthesized)", cmd_odmr_infer, true},
    {"pump-sim", "simulate the pumping trace and a noisy 12-trace bundle", cmd_pump_sim, false},
    {"pump-fit", "global rate-model fit of a trace bundle (--csv)", cmd_pump_fit, true},
    {"hist-fit", "fit a histogram, saturation or lineshape file (--csv)", cmd_hist_fit, true},
    {"threshold", "optimal charge threshold for the configured count models", cmd_threshold, false},
    {"protocol", "error-model inversion, fidelity and SNR report", cmd_protocol, false},
    {"speedup", "speed-up over conventional readout vs sequence length", cmd_speedup, false},
    {"mc", "Monte Carlo replay of the protocol through the count models", cmd_mc, false},
};

std::string run_report(const Context& ctx) {
  std::ostringstream r;
  r << "command = " << ctx.command << "\n";
  r << "preset = " << ctx.cfg.preset << "\n";
  r << "seed = " << ctx.seed << "\n";
  r << "config_digest = fnv1a64:" << hex64(fnv1a64(dump_config(ctx.cfg))) << "\n";
  if (!ctx.csv_path.empty()) {
    r << "input = " << std::filesystem::path(ctx.csv_path).filename().string() << "\n";
    r << "input_digest = fnv1a64:" << hex64(fnv1a64(ctx.csv_text)) << "\n";
  }
  for (const auto& n : ctx.notes) r << "note = " << n << "\n";
  for (const auto& o : ctx.outputs) r << "output = " << o << "\n";
  return r.str();
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"nvreadout: NV-center spin readout models and analysis"};
  app.require_subcommand(1, 1);
  std::string config_path, preset_name, out_dir, csv_path;
  std::uint64_t seed = 1;
  app.add_option("--config", config_path, "flat key = value config file applied on top of the preset");
  app.add_option("--preset", preset_name, "deep or shallow (default: deep)");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--csv", csv_path, "input CSV for ingestion commands");
  for (const auto& c : kCommands) app.add_subcommand(c.name, c.help)->fallthrough();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  Context ctx;
  const CommandSpec* spec = nullptr;
  for (const auto& c : kCommands)
    if (app.got_subcommand(c.name)) spec = &c;
  ctx.command = spec->name;
  ctx.seed = seed;

  try {
    ctx.cfg = preset(preset_name.empty() ? "deep" : preset_name);
    if (!config_path.empty()) {
      std::string text;
      try {
        text = read_text_file(config_path);
      } catch (const DataError& e) {
        throw ConfigError(e.what());
      }
      apply_config_text(ctx.cfg, text);
    }
    ctx.cfg.validate();
    if (!csv_path.empty() && !spec->reads_csv) throw ConfigError(std::string(spec->name) + " does not read --csv");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  if (out_dir.empty()) {
    const char* env = std::getenv(kOutDirEnv);
    out_dir = env && *env ? env : kDefaultOutDir;
  }
  ctx.out_dir = out_dir;
  ctx.csv_path = csv_path;

  try {
    std::error_code ec;
    std::filesystem::create_directories(ctx.out_dir, ec);
    if (ec) throw IoFailure("cannot create '" + ctx.out_dir.string() + "': " + ec.message());
    if (!csv_path.empty()) {
      if (!std::ifstream(csv_path)) throw IoFailure("cannot open '" + csv_path + "'");
      ctx.csv_text = read_text_file(csv_path);
    }
    ctx.write("config_used.txt", dump_config(ctx.cfg));
    spec->run(ctx);
    ctx.write("summary.txt", ctx.summary.str());
    ctx.outputs.push_back("run_report.txt");
    const std::string report = run_report(ctx);
    ctx.outputs.pop_back();
    ctx.write("run_report.txt", report);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConvergenceError& e) {
    err << "fit did not converge: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const SingularSystemError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const InvalidArgument& e) {
    err << (ctx.csv_path.empty() ? "config error: " : "data error: ") << e.what() << "\n";
    return ctx.csv_path.empty() ? kExitConfig : kExitData;
  } catch (const IoFailure& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
  out << ctx.summary.str();
  return kExitOk;
}

}  // namespace nvreadout::cli
