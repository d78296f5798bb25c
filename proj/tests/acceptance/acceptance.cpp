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

// Acceptance suite. Prints one line per criterion:
//
//   PASS  <id> <description> | <details>
//   FAIL  <id> <description> | <details>
//   XFAIL <id> <description> | <details>
//
// XFAIL marks a check that is known not to hold with the reference inputs
// (see README). The process exits nonzero only on FAIL.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "nvreadout/cli/commands.hpp"
#include "nvreadout/cli/config.hpp"
#include "nvreadout/cli/csv_io.hpp"
#include "nvreadout/excited_state.hpp"
#include "nvreadout/photon_statistics.hpp"
#include "nvreadout/protocol.hpp"
#include "nvreadout/rate_dynamics.hpp"
#include "nvreadout/rng.hpp"
#include "nvreadout/spin_hamiltonian.hpp"

namespace fs = std::filesystem;
using namespace nvreadout;

namespace {

using Clock = std::chrono::steady_clock;

class Report {
 public:
  void start() { t0_ = Clock::now(); }

  void check(const std::string& id, const std::string& what, bool pass, const std::string& details,
             bool known_failure = false) {
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0_).count();
    const char* tag = pass ? "PASS " : (known_failure ? "XFAIL" : "FAIL ");
    if (!pass && !known_failure) ++unexpected_;
    const char* note = pass && known_failure ? " (listed as a known failure, now passes)" : "";
    std::printf("%s %-4s %s | %s%s [%.0f ms]\n", tag, id.c_str(), what.c_str(), details.c_str(), note, ms);
    std::fflush(stdout);
    t0_ = Clock::now();
  }

  int unexpected() const { return unexpected_; }

 private:
  Clock::time_point t0_ = Clock::now();
  int unexpected_ = 0;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

template <class... T>
std::string fmtn(const char* f, T... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

bool near(double x, double target, double tol) { return std::abs(x - target) <= tol; }

ProtocolErrorBudget deep_budget() { return {0.0, 0.121, 0.879, 0.056, 0.018, 0.054}; }
ProtocolErrorBudget shallow_budget() { return {0.0, 0.231, 0.700, 0.051, 0.253, 0.174}; }

// --- 1 -------------------------------------------------------------------

void fidelity_math(Report& r) {
  r.start();
  const auto d = fidelity_and_snr(0.018, 0.054);
  const auto s = fidelity_and_snr(0.253, 0.174);
  const bool ok = near(d.fidelity, 0.964, 0.001) && near(d.snr, 3.54, 0.05) && near(s.fidelity, 0.786, 0.001) &&
                  near(s.snr, 0.99, 0.02);
  r.check("1", "fidelity and single-shot SNR", ok,
          fmtn("deep F=%.2f%% SNR=%.3f, shallow F=%.2f%% SNR=%.4f", 100 * d.fidelity, d.snr, 100 * s.fidelity,
               s.snr));
}

// --- 2 -------------------------------------------------------------------

void error_model(Report& r) {
  r.start();
  const auto fwd = forward_error_model(deep_budget());
  r.check("2a", "forward error model, deep budget", near(fwd.e0_meas, 0.176, 0.001) && near(fwd.e1_meas, 0.054, 0.001),
          fmtn("E0_meas=%.2f%% E1_meas=%.2f%%", 100 * fwd.e0_meas, 100 * fwd.e1_meas));

  r.start();
  const auto d = invert_error_model({0.176, 0.054}, deep_budget());
  const auto s = invert_error_model({0.443, 0.214}, shallow_budget());
  const bool ok = near(d.e0, 0.018, 0.003) && near(d.e1, 0.054, 0.003) && near(s.e0, 0.253, 0.003) &&
                  near(s.e1, 0.174, 0.003);
  r.check("2b", "inversion of measured errors", ok,
          fmtn("deep (%.2f, %.2f)%%, shallow (%.2f, %.2f)%%", 100 * d.e0, 100 * d.e1, 100 * s.e0, 100 * s.e1));

  r.start();
  Rng rng(20260);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    ProtocolErrorBudget b;
    b.e_nv0 = 0.3 * rng.uniform();
    b.p_minus1 = 0.5 * rng.uniform();
    b.p_plus1 = (1.0 - b.p_minus1) * rng.uniform();
    b.e_mw = 0.3 * rng.uniform();
    b.e0 = rng.uniform();
    b.e1 = rng.uniform();
    const auto target = forward_error_model(b);
    ProtocolErrorBudget solved = b;
    const auto e = invert_error_model(target, b);
    solved.e0 = e.e0;
    solved.e1 = e.e1;
    const auto back = forward_error_model(solved);
    worst = std::max({worst, std::abs(back.e0_meas - target.e0_meas), std::abs(back.e1_meas - target.e1_meas),
                      std::abs(e.e0 - b.e0), std::abs(e.e1 - b.e1)});
  }
  r.check("2c", "forward/inverse roundtrip, 1000 random budgets", worst <= 1e-12, fmt("max deviation %.2e", worst));
}

// --- 3 -------------------------------------------------------------------

void conventional(Report& r) {
  r.start();
  SensingTimingModel t;
  t.f_sat_cps = 200e3;
  const double hi = conventional_snr(t);
  t.f_sat_cps = 50e3;
  const double lo = conventional_snr(t);
  r.check("3", "conventional readout SNR", near(hi, 0.0515, 0.0005) && near(lo, 0.0257, 0.0005),
          fmtn("200 kcps %.5f, 50 kcps %.5f", hi, lo));
}

// --- 4 -------------------------------------------------------------------

void speedup(Report& r) {
  r.start();
  const cli::ScenarioConfig c = cli::preset("deep");
  const double snr = fidelity_and_snr(0.018, 0.054).snr;
  std::vector<double> grid{0.0};
  const int n = c.speedup_points;
  for (int i = 0; i < n - 1; ++i)
    grid.push_back(c.speedup_t_min_s * std::pow(c.speedup_t_max_s / c.speedup_t_min_s, double(i) / (n - 2)));
  const auto curve = speedup_curve(grid, c.timing, snr);
  bool monotone = true;
  for (std::size_t i = 1; i < curve.size(); ++i) monotone = monotone && curve[i].speedup >= curve[i - 1].speedup;
  const double s0 = curve.front().speedup, s10 = curve.back().speedup;
  const bool ok = s0 >= 1.8 && s0 <= 2.8 && s10 >= 500.0 && s10 <= 2000.0 && monotone && curve.size() == 100 &&
                  near(curve.back().t_seq_s, 10e-3, 1e-12);
  r.check("4a", "speed-up over conventional readout", ok,
          fmtn("t=0: %.3f, t=10 ms: %.1f, %zu points monotone=%s", s0, s10, curve.size(), monotone ? "yes" : "no"));

  r.start();
  const auto reps = repetitions_for_snr(0.22);
  r.check("4b", "repetitions for resonant readout SNR 0.22", reps >= 18 && reps <= 22,
          fmtn("N=%llu", static_cast<unsigned long long>(reps)));
}

// --- 5 -------------------------------------------------------------------

std::vector<double> oracle_pmf(const CountModel& model, int n) {
  std::vector<double> p(n + 1);
  if (const auto* m = std::get_if<PoissonModel>(&model)) {
    for (int k = 0; k <= n; ++k)
      p[k] = m->lambda == 0.0 ? (k == 0 ? 1.0 : 0.0)
                              : std::exp(k * std::log(m->lambda) - m->lambda - std::lgamma(k + 1.0));
  } else {
    const auto& g = std::get<GaussianMixtureModel>(model);
    for (int k = 0; k <= n; ++k)
      for (const auto& comp : g.components) p[k] += comp.amplitude * std::exp(-0.5 * std::pow((k - comp.mean) / comp.sd, 2));
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& v : p) v /= s;
  }
  return p;
}

CountModel random_model(Rng& rng) {
  if (rng.uniform() < 0.5) return PoissonModel{40.0 * rng.uniform()};
  GaussianMixtureModel g;
  const int n = 1 + static_cast<int>(3 * rng.uniform());
  for (int i = 0; i < n; ++i)
    g.components.push_back({0.01 + rng.uniform(), -10.0 + 60.0 * rng.uniform(), 0.5 + 15.0 * rng.uniform()});
  return g;
}

void thresholds(Report& r) {
  r.start();
  const cli::ScenarioConfig sh = cli::preset("shallow");
  const auto ts = optimize_threshold(sh.charge_minus.model(), PoissonModel{sh.charge_zero_lambda});
  r.check("5a", "shallow 10 ms threshold and NV- error",
          ts.discriminator.threshold == 4 && near(ts.error_minus, 0.071, 0.005),
          fmtn("threshold %d, NV- error %.2f%% (target 4, 7.1%%); the reference mixture puts 62%% of its mass below "
               "zero counts",
               ts.discriminator.threshold, 100 * ts.error_minus),
          true);

  r.start();
  const cli::ScenarioConfig dp = cli::preset("deep");
  const auto td = optimize_threshold(dp.charge_minus.model(), PoissonModel{dp.charge_zero_lambda});
  r.check("5b", "deep 5 ms threshold and NV- error",
          td.discriminator.threshold == 5 && near(td.error_minus, 0.0025, 0.001),
          fmtn("threshold %d, NV- error %.3f%%, NV0 error %.4f%%", td.discriminator.threshold, 100 * td.error_minus,
               100 * td.error_zero));

  // Readout-duration rows: only the NV0 population after initialization is
  // given per column. Taking it as the NV- misassignment and zero NV0
  // misassignment is the only fidelity those numbers determine.
  r.start();
  const double e_nv0[] = {0.003, 0.004, 0.149, 0.350};
  const double target[] = {0.982, 0.981, 0.853, 0.768};
  bool rows_ok = true;
  bool bounded = true;
  std::string got;
  for (int i = 0; i < 4; ++i) {
    const double f = charge_fidelity(e_nv0[i], 0.0);
    rows_ok = rows_ok && near(f, target[i], 0.005);
    bounded = bounded && target[i] <= f;
    got += fmt(i ? ", %.1f" : "%.1f", 100 * f);
  }
  r.check("5c", "charge fidelity row from the readout-duration E values", rows_ok,
          "got (" + got + ")% vs (98.2, 98.1, 85.3, 76.8)%; NV0-side errors are not given; target row " +
              (bounded ? "lies below" : "exceeds") + " these upper bounds",
          true);

  r.start();
  Rng rng(4242);
  int agree = 0;
  std::string first_bad;
  for (int i = 0; i < 200; ++i) {
    const CountModel m = random_model(rng), z = random_model(rng);
    const auto res = optimize_threshold(m, z);
    const int n = static_cast<int>(std::max(pmf_table(m).size(), pmf_table(z).size())) + 5;
    const auto pm = oracle_pmf(m, n), pz = oracle_pmf(z, n);
    int best_t = 0;
    double best = 2.0;
    for (int t = 0; t <= n + 1; ++t) {
      double e = 0.0;
      for (int k = 0; k < t; ++k) e += pm[k];
      for (int k = t; k <= n; ++k) e += pz[k];
      if (e < best - 1e-12) best = e, best_t = t;
    }
    const double lib = res.error_minus + res.error_zero;
    if (res.discriminator.threshold == best_t || std::abs(lib - best) < 1e-9) ++agree;
    else if (first_bad.empty())
      first_bad = fmtn("; pair %d: library t=%d, oracle t=%d", i, res.discriminator.threshold, best_t);
  }
  r.check("5d", "threshold search vs brute-force oracle, 200 pairs", agree == 200,
          fmtn("%d/200 agree", agree) + first_bad);
}

// --- 6 -------------------------------------------------------------------

void rate_model(Report& r) {
  r.start();
  double drift = 0.0, floor = 0.0;
  for (const char* name : {"deep", "shallow"}) {
    const RateModel m = cli::preset(name).rate_model();
    PulseTimeline tl;
    tl.segments = {segment::OpticalPump{1e6 * m.pump.binwidth_s}};
    const auto res = simulate_timeline(tl, m.pump, m.fluorescence, PopulationState::spin_mixture(0.3, 0.3, 0.4));
    drift = std::max(drift, std::abs(res.final_state.sum() - 1.0));
    floor = std::min(floor, res.min_population);
  }
  r.check("6a", "population conservation over 1e6 steps", drift <= 1e-12 && floor >= -1e-12,
          fmtn("max |sum - 1| = %.2e, min population %.2e", drift, floor));

  for (const char* name : {"deep", "shallow"}) {
    r.start();
    const cli::ScenarioConfig c = cli::preset(name);
    const RateModel truth = c.rate_model();
    const std::size_t bins = bins_for(c.pump_duration_s, c.binwidth_s);
    const TraceBundle clean = synthesize_bundle(truth, bins);
    GlobalFitOptions opt;
    opt.fix_ionization = c.fix_ionization;
    opt.max_iterations = c.fit_max_iterations;
    double worst_rate = 0.0, worst_pop = 0.0;
    int rate_ok = 0, pop_ok = 0, failed = 0;
    const char* rate_names[] = {"T_st0", "T_st1", "T_ts", "T_ion"};
    std::array<double, 4> worst_by_rate{};
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      TraceBundle b = clean;
      Rng rng(derive_subseed(2026, seed));
      for (auto& t : b.traces)
        for (double& v : t.rate_cps) v += c.noise_relative * v * rng.normal();
      GlobalFitResult fit;
      try {
        fit = global_fit(b, truth, opt);
      } catch (const std::exception&) {
        ++failed;
        continue;
      }
      const double p_true[] = {truth.pump.p_st0, truth.pump.p_st1, truth.pump.p_ts, truth.pump.p_ion};
      const double p_fit[] = {fit.model.pump.p_st0, fit.model.pump.p_st1, fit.model.pump.p_ts, fit.model.pump.p_ion};
      double seed_rate = 0.0;
      for (int k = 0; k < 4; ++k) {
        if (p_true[k] == 0.0) continue;  // channel disabled in this preset
        const double rel = std::abs(lifetime_from_probability(p_fit[k], c.binwidth_s) /
                                        lifetime_from_probability(p_true[k], c.binwidth_s) -
                                    1.0);
        worst_by_rate[k] = std::max(worst_by_rate[k], rel);
        seed_rate = std::max(seed_rate, rel);
      }
      double seed_pop = 0.0;
      for (int f = 0; f < kNumFamilies; ++f)
        for (int s = 0; s < 3; ++s)
          seed_pop = std::max(seed_pop, std::abs(fit.model.populations[f][s] - truth.populations[f][s]));
      worst_rate = std::max(worst_rate, seed_rate);
      worst_pop = std::max(worst_pop, seed_pop);
      rate_ok += seed_rate <= 0.10;
      pop_ok += seed_pop <= 0.02;
    }
    std::string per_rate;
    for (int k = 0; k < 4; ++k)
      if (worst_by_rate[k] > 0.0) per_rate += fmtn(" %s %.1f%%", rate_names[k], 100 * worst_by_rate[k]);
    const bool ok = failed == 0 && rate_ok == 20 && pop_ok == 20;
    r.check(std::string("6") + (name[0] == 'd' ? "b" : "c"), std::string("global fit, 20 noise seeds, ") + name, ok,
            fmtn("rates within 10%%: %d/20, populations within 2 pp: %d/20 (worst %.2f pp), fit failures %d; worst "
                 "rate errors:",
                 rate_ok, pop_ok, 100 * worst_pop, failed) +
                per_rate,
            true);
  }

  r.start();
  const cli::ScenarioConfig c = cli::preset("deep");
  const RateModel m = c.rate_model();
  PulseTimeline tl;
  tl.segments = {segment::OpticalPump{20e-6}};
  const auto res = simulate_timeline(tl, m.pump, m.fluorescence, c.family_state(0));
  const double photons = res.trace.expected_photons(c.binwidth_s);
  r.check("6d", "deep pumping trace photons over 20 us", photons >= 0.17 / 2 && photons <= 0.17 * 2,
          fmtn("%.4f photons (target 0.17 within a factor 2; rate model without collection details)", photons));
}

// --- 7 -------------------------------------------------------------------

void hamiltonians(Report& r) {
  r.start();
  int total = 0, recovered = 0;
  double worst_b = 0.0, worst_t = 0.0;
  for (double d : {2.865e9, 2.870e9, 2.875e9})
    for (double a : {-2.0e6, -2.16e6, -2.3e6})
      for (double q : {-4.8e6, -4.945e6, -5.1e6}) {
        GroundSpinParams p;
        p.zero_field_hz = d;
        p.a_parallel_hz = a;
        p.quadrupole_hz = q;
        const auto est = infer_field(odmr_transitions(p, {0.7, 39.0}), p);
        const double eb = std::abs(est.field.magnitude_mt / 0.7 - 1.0);
        const double et = std::abs(est.field.theta_deg / 39.0 - 1.0);
        worst_b = std::max(worst_b, eb);
        worst_t = std::max(worst_t, et);
        ++total;
        recovered += eb <= 0.01 && et <= 0.01;
      }
  r.check("7a", "field inference of (0.7 mT, 39 deg) over a Hamiltonian parameter grid", recovered == total,
          fmtn("%d/%d recovered, worst relative error B %.1e theta %.1e", recovered, total, worst_b, worst_t));

  r.start();
  const ExcitedStateParams ep;
  auto upper_zero_line = [&ep](double xi, FieldVector f) {
    const auto t = transitions_at(ep, StrainField{xi}, f);
    double best = -1e300;
    for (std::size_t i : t.strongest_zero_rows(2)) best = std::max(best, t.rows[i].energy_ghz);
    return best;
  };
  const double e7 = upper_zero_line(1.7, {0.7, 39.0});
  const double e19 = upper_zero_line(12.6, {1.0, 20.0});
  r.check("7b", "|0> transition anchors at low and high strain", near(e7, 7.0, 1.5) && near(e19, 19.0, 2.0),
          fmtn("xi 1.7 GHz: %.2f GHz, xi 12.6 GHz: %.2f GHz", e7, e19));

  r.start();
  Rng rng(77);
  double herm = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto h = build_excited_hamiltonian(ep, StrainField{30.0 * rng.uniform()},
                                             FieldVector{300.0 * rng.uniform(), 180.0 * rng.uniform()});
    herm = std::max(herm, hermiticity_defect(h));
    GroundSpinParams gp;
    herm = std::max(herm, hermiticity_defect(build_ground_hamiltonian(
                              gp, FieldVector{10.0 * rng.uniform(), 180.0 * rng.uniform()}, 360.0 * rng.uniform())));
  }
  const auto eig = solve_excited(build_excited_hamiltonian(ep, StrainField{}, FieldVector{}));
  std::vector<std::pair<double, double>> w;
  for (int k : eig.indices_of(Manifold::kExcited))
    w.push_back({std::norm(eig.vectors(4, k)) + std::norm(eig.vectors(7, k)), eig.values(k)});
  std::sort(w.rbegin(), w.rend());
  const double split = std::abs(w[0].second - w[1].second);
  TransitionTable one;
  one.rows.push_back(TransitionRow{0, 0, 3.0, 0.37, 0, 0});
  const double peak = synth_ple_spectrum(one, {3.0}).intensity[0];
  const double expect = 10.0 / std::sqrt(std::acos(-1.0));
  r.check("7c", "Hermiticity, zero-strain degeneracy, PLE peak height",
          herm == 0.0 && split < 1e-3 && near(peak, expect, 1e-12),
          fmtn("max |H - H^+| %.1e, E_x/E_y split %.1e GHz, peak %.12f", herm, split, peak));
}

// --- 8 -------------------------------------------------------------------

struct McRun {
  int code = -1;
  std::string summary, err;
  double f = 0, sigma = 0, analytic = 0;
};

McRun run_mc(const fs::path& dir) {
  McRun m;
  std::ostringstream out, err;
  m.code = cli::run_command({"nvreadout", "mc", "--preset", "deep", "--seed", "7", "--out", dir.string()}, out, err);
  m.err = err.str();
  if (m.code != 0) return m;
  std::ifstream in(dir / "mc_summary.csv");
  std::stringstream text;
  text << in.rdbuf();
  m.summary = text.str();
  for (const auto& row : cli::parse_csv(m.summary).rows) {
    if (row[0] == "F_meas (%)") m.f = std::stod(row[1]);
    if (row[0] == "F_meas sigma (%)") m.sigma = std::stod(row[1]);
    if (row[0] == "F_meas analytic (%)") m.analytic = std::stod(row[1]);
  }
  return m;
}

void monte_carlo(Report& r) {
  r.start();
  const char* tmp = std::getenv("NVREADOUT_TEST_TMP");
  const fs::path base = fs::path(tmp && *tmp ? tmp : fs::temp_directory_path().string()) / "acceptance";
  const McRun a = run_mc(base / "mc_a");
  const McRun b = run_mc(base / "mc_b");
  if (a.code != 0 || b.code != 0) {
    r.check("8", "end-to-end Monte Carlo, deep preset", false, "mc exited with " + std::to_string(a.code) + ": " + a.err);
    return;
  }
  const double z = (a.f - a.analytic) / a.sigma;
  const bool ok = std::abs(z) <= 3.0 && near(a.analytic, 88.5, 0.1) && a.summary == b.summary;
  r.check("8", "end-to-end Monte Carlo, deep preset, 1e5 repetitions", ok,
          fmtn("F_meas %.3f%% +- %.3f vs analytic %.3f%% (%.2f sigma); reruns identical: %s", a.f, a.sigma, a.analytic,
               z, a.summary == b.summary ? "yes" : "no"));
}

}  // namespace

int main() {
  Report r;
  fidelity_math(r);
  error_model(r);
  conventional(r);
  speedup(r);
  thresholds(r);
  rate_model(r);
  hamiltonians(r);
  monte_carlo(r);
  std::printf("%d unexpected failure(s)\n", r.unexpected());
  return r.unexpected() == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
