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

#include "nvreadout/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

#include "nvreadout/errors.hpp"

namespace nvreadout::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view v) {
  const std::string s(trim(v));
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || std::isnan(out))
    throw ConfigError("expected a number, got '" + s + "'");
  return out;
}

long long parse_integer(std::string_view v) {
  const std::string s(trim(v));
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError("expected an integer, got '" + s + "'");
  return out;
}

bool parse_bool(std::string_view v) {
  const auto s = trim(v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected true/false, got '" + std::string(s) + "'");
}

std::vector<double> parse_list(std::string_view v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (auto item : split(v, ',')) out.push_back(parse_double(item));
  return out;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out;
}

std::vector<GaussianComponent> parse_gaussians(std::string_view v) {
  std::vector<GaussianComponent> out;
  if (trim(v).empty()) return out;
  for (auto item : split(v, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 3) throw ConfigError("expected amplitude:mean:sd, got '" + std::string(item) + "'");
    out.push_back({parse_double(parts[0]), parse_double(parts[1]), parse_double(parts[2])});
  }
  return out;
}

std::string format_gaussians(const std::vector<GaussianComponent>& g) {
  std::string out;
  for (std::size_t i = 0; i < g.size(); ++i)
    out += (i ? ", " : "") + format_double(g[i].amplitude) + ":" + format_double(g[i].mean) + ":" +
           format_double(g[i].sd);
  return out;
}

struct Key {
  std::string name;
  std::function<void(ScenarioConfig&, std::string_view)> set;
  std::function<std::string(const ScenarioConfig&)> get;
};

template <typename Access>
Key number(std::string name, Access access) {
  return {std::move(name), [access](ScenarioConfig& c, std::string_view v) { access(c) = parse_double(v); },
          [access](const ScenarioConfig& c) { return format_double(access(const_cast<ScenarioConfig&>(c))); }};
}

template <typename Access>
Key integer(std::string name, Access access) {
  return {std::move(name),
          [access](ScenarioConfig& c, std::string_view v) {
            using T = std::decay_t<decltype(access(c))>;
            const long long x = parse_integer(v);
            if (std::is_unsigned_v<T> && x < 0) throw ConfigError("expected a non-negative integer");
            access(c) = static_cast<T>(x);
          },
          [access](const ScenarioConfig& c) { return std::to_string(access(const_cast<ScenarioConfig&>(c))); }};
}

template <typename Access>
Key boolean(std::string name, Access access) {
  return {std::move(name), [access](ScenarioConfig& c, std::string_view v) { access(c) = parse_bool(v); },
          [access](const ScenarioConfig& c) {
            return std::string(access(const_cast<ScenarioConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Access>
Key list(std::string name, Access access) {
  return {std::move(name), [access](ScenarioConfig& c, std::string_view v) { access(c) = parse_list(v); },
          [access](const ScenarioConfig& c) { return format_list(access(const_cast<ScenarioConfig&>(c))); }};
}

#define NV_ACCESS(expr) [](ScenarioConfig& c) -> auto& { return c.expr; }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back(number("ground.zero_field_hz", NV_ACCESS(ground.zero_field_hz)));
    k.push_back(number("ground.gamma_e_hz_per_mt", NV_ACCESS(ground.gamma_e_hz_per_mt)));
    k.push_back(number("ground.gamma_n_hz_per_mt", NV_ACCESS(ground.gamma_n_hz_per_mt)));
    k.push_back(number("ground.quadrupole_hz", NV_ACCESS(ground.quadrupole_hz)));
    k.push_back(number("ground.a_parallel_hz", NV_ACCESS(ground.a_parallel_hz)));
    k.push_back(number("ground.a_perp_hz", NV_ACCESS(ground.a_perp_hz)));
    k.push_back(number("field.b_mt", NV_ACCESS(field.magnitude_mt)));
    k.push_back(number("field.theta_deg", NV_ACCESS(field.theta_deg)));
    k.push_back(number("odmr.b_max_mt", NV_ACCESS(odmr.b_max_mt)));
    k.push_back(number("odmr.rms_tolerance_hz", NV_ACCESS(odmr.rms_tolerance_hz)));
    k.push_back(number("odmr.line_uncertainty_hz", NV_ACCESS(odmr.line_uncertainty_hz)));

    k.push_back(number("excited.ground_offset_ghz", NV_ACCESS(excited.ground_offset_ghz)));
    k.push_back(number("excited.excited_offset_ghz", NV_ACCESS(excited.excited_offset_ghz)));
    k.push_back(number("excited.ground_zero_field_ghz", NV_ACCESS(excited.ground_zero_field_ghz)));
    k.push_back(number("excited.axial_ss_ghz", NV_ACCESS(excited.excited_axial_ss_ghz)));
    k.push_back(number("excited.perp_ss_ghz", NV_ACCESS(excited.excited_perp_ss_ghz)));
    k.push_back(number("excited.mixing_ss_ghz", NV_ACCESS(excited.excited_mixing_ss_ghz)));
    k.push_back(number("excited.spin_orbit_ghz", NV_ACCESS(excited.spin_orbit_axial_ghz)));
    k.push_back(number("excited.gamma_e_ghz_per_mt", NV_ACCESS(excited.gamma_e_ghz_per_mt)));
    k.push_back(number("strain.xi_perp_ghz", NV_ACCESS(strain.xi_perp_ghz)));
    k.push_back(number("ple.detuning_min_ghz", NV_ACCESS(ple_min_ghz)));
    k.push_back(number("ple.detuning_max_ghz", NV_ACCESS(ple_max_ghz)));
    k.push_back(integer("ple.points", NV_ACCESS(ple_points)));
    k.push_back(number("map.xi_perp_ghz", NV_ACCESS(map_xi_perp_ghz)));
    k.push_back(number("map.theta_deg", NV_ACCESS(map_theta_deg)));
    k.push_back(number("map.b_max_mt", NV_ACCESS(map_b_max_mt)));
    k.push_back(integer("map.points", NV_ACCESS(map_points)));

    k.push_back(number("pump.binwidth_s", NV_ACCESS(binwidth_s)));
    k.push_back(number("pump.t_st0_s", NV_ACCESS(t_st0_s)));
    k.push_back(number("pump.t_st1_s", NV_ACCESS(t_st1_s)));
    k.push_back(number("pump.t_ts_s", NV_ACCESS(t_ts_s)));
    k.push_back(number("pump.t_ion_s", NV_ACCESS(t_ion_s)));
    k.push_back(number("pump.p_recombination", NV_ACCESS(p_recombination)));
    k.push_back(number("pump.duration_s", NV_ACCESS(pump_duration_s)));
    k.push_back(number("fluor.f0_cps", NV_ACCESS(fluorescence.f0_cps)));
    k.push_back(number("fluor.f1_cps", NV_ACCESS(fluorescence.f1_cps)));
    k.push_back(number("fluor.loss1", NV_ACCESS(fluorescence.fluor_loss1)));
    k.push_back(number("fluor.loss6", NV_ACCESS(fluorescence.fluor_loss6)));
    k.push_back(number("mw.e_mw", NV_ACCESS(e_mw)));
    const char* fam[] = {"a", "b", "c"};
    for (int f = 0; f < kNumFamilies; ++f) {
      k.push_back(number(std::string("init.") + fam[f] + ".n0",
                         [f](ScenarioConfig& c) -> auto& { return c.family_n0_nplus[f][0]; }));
      k.push_back(number(std::string("init.") + fam[f] + ".nplus",
                         [f](ScenarioConfig& c) -> auto& { return c.family_n0_nplus[f][1]; }));
    }
    k.push_back(number("fit.noise_relative", NV_ACCESS(noise_relative)));
    k.push_back(boolean("fit.fix_ionization", NV_ACCESS(fix_ionization)));
    k.push_back(integer("fit.max_iterations", NV_ACCESS(fit_max_iterations)));

    k.push_back({"charge.minus.gaussians",
                 [](ScenarioConfig& c, std::string_view v) { c.charge_minus.gaussians = parse_gaussians(v); },
                 [](const ScenarioConfig& c) { return format_gaussians(c.charge_minus.gaussians); }});
    k.push_back(number("charge.minus.poisson_weight", NV_ACCESS(charge_minus.poisson_weight)));
    k.push_back(number("charge.minus.poisson_lambda", NV_ACCESS(charge_minus.poisson_lambda)));
    k.push_back(number("charge.zero.lambda", NV_ACCESS(charge_zero_lambda)));
    k.push_back(number("charge.window_s", NV_ACCESS(charge_window_s)));
    k.push_back(number("charge.nv_minus_fraction", NV_ACCESS(nv_minus_fraction)));
    k.push_back({"hist.kind", [](ScenarioConfig& c, std::string_view v) { c.hist_kind = std::string(trim(v)); },
                 [](const ScenarioConfig& c) { return c.hist_kind; }});
    k.push_back(integer("hist.components", NV_ACCESS(hist_components)));

    k.push_back(number("protocol.e_nv0", NV_ACCESS(budget.e_nv0)));
    k.push_back(number("protocol.p_minus1", NV_ACCESS(budget.p_minus1)));
    k.push_back(number("protocol.p_plus1", NV_ACCESS(budget.p_plus1)));
    k.push_back(number("protocol.e0_meas", NV_ACCESS(measured.e0_meas)));
    k.push_back(number("protocol.e1_meas", NV_ACCESS(measured.e1_meas)));
    k.push_back(list("protocol.durations_s", NV_ACCESS(durations.duration_s)));
    k.push_back(list("protocol.duration_thresholds", NV_ACCESS(durations.threshold)));
    k.push_back(list("protocol.duration_e0_meas", NV_ACCESS(durations.e0_meas)));
    k.push_back(list("protocol.duration_e1_meas", NV_ACCESS(durations.e1_meas)));
    k.push_back(integer("protocol.rabi_points", NV_ACCESS(rabi_points)));

    k.push_back(number("speedup.single_shot_overhead_s", NV_ACCESS(timing.single_shot_overhead_s)));
    k.push_back(number("speedup.conventional_rep_overhead_s", NV_ACCESS(timing.conventional_rep_overhead_s)));
    k.push_back(number("speedup.readout_window_s", NV_ACCESS(timing.readout_window_s)));
    k.push_back(number("speedup.contrast", NV_ACCESS(timing.contrast)));
    k.push_back(number("speedup.f_sat_cps", NV_ACCESS(timing.f_sat_cps)));
    k.push_back(boolean("speedup.include_postselection", NV_ACCESS(timing.include_postselection)));
    k.push_back(number("speedup.postselection_acceptance", NV_ACCESS(timing.postselection_acceptance)));
    k.push_back(number("speedup.t_seq_min_s", NV_ACCESS(speedup_t_min_s)));
    k.push_back(number("speedup.t_seq_max_s", NV_ACCESS(speedup_t_max_s)));
    k.push_back(integer("speedup.points", NV_ACCESS(speedup_points)));
    k.push_back(number("speedup.single_shot_snr", NV_ACCESS(single_shot_snr)));
    k.push_back(number("speedup.resonant_snr", NV_ACCESS(resonant_snr)));

    k.push_back(integer("mc.repetitions", NV_ACCESS(mc_repetitions)));
    k.push_back(integer("mc.threshold", NV_ACCESS(mc_threshold)));
    return k;
  }();
  return keys;
}

#undef NV_ACCESS

}  // namespace

CountModel ChargeModelConfig::model() const {
  if (!(poisson_weight >= 0.0 && poisson_weight <= 1.0))
    throw InvalidArgument("charge.minus.poisson_weight must lie in [0, 1]");
  if (poisson_weight == 0.0) return GaussianMixtureModel{gaussians};
  if (poisson_weight == 1.0 || gaussians.empty()) return PoissonModel{poisson_lambda};
  const auto g = pmf_table(GaussianMixtureModel{gaussians});
  const auto p = pmf_table(PoissonModel{poisson_lambda});
  std::vector<double> mix(std::max(g.size(), p.size()), 0.0);
  for (std::size_t k = 0; k < mix.size(); ++k)
    mix[k] = (1.0 - poisson_weight) * (k < g.size() ? g[k] : 0.0) + poisson_weight * (k < p.size() ? p[k] : 0.0);
  return TabulatedModel{std::move(mix)};
}

RateModel ScenarioConfig::rate_model() const {
  RateModel m;
  m.pump = OpticalPumpParams::from_lifetimes(t_st0_s, t_st1_s, t_ts_s, t_ion_s, binwidth_s);
  m.pump.p_recombination = p_recombination;
  m.fluorescence = fluorescence;
  m.e_mw = e_mw;
  for (int f = 0; f < kNumFamilies; ++f) {
    const double n0 = family_n0_nplus[f][0], np = family_n0_nplus[f][1];
    m.populations[f] = {n0, np, 1.0 - n0 - np};
  }
  return m;
}

PopulationState ScenarioConfig::family_state(int family) const {
  const RateModel m = rate_model();
  const auto& p = m.populations.at(static_cast<std::size_t>(family));
  return PopulationState::spin_mixture(p[0], p[1], p[2]);
}

void ScenarioConfig::validate() const {
  ground.validate();
  field.validate();
  excited.validate();
  strain.validate();
  if (!(ple_max_ghz > ple_min_ghz) || ple_points < 2) throw InvalidArgument("ple grid must be increasing with >= 2 points");
  if (!(map_b_max_mt >= 0.0) || map_points < 1) throw InvalidArgument("map sweep needs b_max >= 0 and >= 1 point");
  const RateModel m = rate_model();
  m.pump.validate();
  m.fluorescence.validate();
  if (!(e_mw >= 0.0 && e_mw <= 1.0)) throw InvalidArgument("mw.e_mw must lie in [0, 1]");
  for (int f = 0; f < kNumFamilies; ++f) family_state(f).validate();
  if (!(pump_duration_s > 0.0)) throw InvalidArgument("pump.duration_s must be > 0");
  bins_for(pump_duration_s, binwidth_s);
  if (!(noise_relative >= 0.0)) throw InvalidArgument("fit.noise_relative must be >= 0");
  pmf_table(charge_minus.model());
  pmf_table(PoissonModel{charge_zero_lambda});
  if (!(charge_window_s > 0.0)) throw InvalidArgument("charge.window_s must be > 0");
  if (hist_kind != "poisson" && hist_kind != "gaussian_mixture")
    throw InvalidArgument("hist.kind must be poisson or gaussian_mixture");
  if (hist_components < 1) throw InvalidArgument("hist.components must be >= 1");
  budget.validate();
  const std::size_t rows = durations.duration_s.size();
  if (durations.threshold.size() != rows || durations.e0_meas.size() != rows || durations.e1_meas.size() != rows)
    throw InvalidArgument("protocol.duration_* lists must have equal lengths");
  if (rabi_points < 2) throw InvalidArgument("protocol.rabi_points must be >= 2");
  timing.validate();
  if (!(speedup_t_min_s > 0.0 && speedup_t_max_s > speedup_t_min_s) || speedup_points < 2)
    throw InvalidArgument("speedup grid must satisfy 0 < t_seq_min < t_seq_max with >= 2 points");
  if (!(single_shot_snr >= 0.0) || !(resonant_snr > 0.0)) throw InvalidArgument("speedup SNR entries must be positive");
  if (mc_repetitions < 1) throw InvalidArgument("mc.repetitions must be >= 1");
}

ScenarioConfig preset(std::string_view name) {
  ScenarioConfig c;
  c.preset = std::string(name);
  if (name == "deep") {
    c.field = {0.7, 39.0};
    c.strain.xi_perp_ghz = 1.7;
    c.ple_min_ghz = -4.0;
    c.ple_max_ghz = 10.0;
    c.ple_points = 1401;
    c.t_st0_s = 4.1e-6;
    c.t_st1_s = 0.4e-3;
    c.t_ts_s = 1.33e-6;
    c.t_ion_s = std::numeric_limits<double>::infinity();
    c.fluorescence = {31.7e3, 0.2e3, 0.205, 0.219};
    c.e_mw = 0.056;
    c.family_n0_nplus = {{{0.704, 0.134}, {0.148, 0.451}, {0.0, 0.879}}};
    c.fix_ionization = true;
    c.charge_minus = {{{1.0, 39.6, 11.0}}, 0.0025, 0.4712};
    c.charge_zero_lambda = 0.4712;
    c.charge_window_s = 5e-3;
    c.nv_minus_fraction = 0.997;
    c.budget = {0.0, 0.121, 0.879, 0.056, 0.0, 0.0};
    c.measured = {0.176, 0.054};
    c.durations = {{10e-3, 1e-3, 100e-6, 50e-6}, {6, 3, 1, 1}, {0.177, 0.176, 0.162, 0.122}, {0.052, 0.054, 0.192, 0.373}};
    c.timing.f_sat_cps = 50e3;
    c.timing.postselection_acceptance = 0.37;
  } else if (name == "shallow") {
    c.field = {1.0, 20.0};
    c.strain.xi_perp_ghz = 12.6;
    c.ple_min_ghz = -4.0;
    c.ple_max_ghz = 25.0;
    c.ple_points = 2901;
    c.t_st0_s = 7.0e-6;
    c.t_st1_s = 1.0e-3;
    c.t_ts_s = 11.3e-6;
    c.t_ion_s = 0.2e-3;
    c.fluorescence = {17.5e3, 3.6e3, 0.151, 0.300};
    c.e_mw = 0.051;
    c.family_n0_nplus = {{{0.704, 0.097}, {0.189, 0.421}, {0.069, 0.700}}};
    c.fix_ionization = false;
    c.charge_minus = {{{0.011, -46.0, 65.0}, {0.015, 7.6, 5.0}}, 0.0, 0.0};
    c.charge_zero_lambda = 0.766;
    c.charge_window_s = 10e-3;
    c.nv_minus_fraction = 0.929;
    c.budget = {0.0, 0.231, 0.700, 0.051, 0.0, 0.0};
    c.measured = {0.443, 0.214};
    c.timing.f_sat_cps = 44e3;
    c.timing.postselection_acceptance = 0.22;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected deep or shallow)");
  }
  return c;
}

void apply_config_text(ScenarioConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto& keys = registry();
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const Key& k) { return k.name == key; });
    if (it == keys.end())
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    try {
      it->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + " (" + std::string(key) + "): " + e.what());
    }
  }
}

std::string dump_config(const ScenarioConfig& cfg) {
  std::ostringstream out;
  out << "# preset: " << cfg.preset << '\n';
  for (const auto& k : registry()) out << k.name << " = " << k.get(cfg) << '\n';
  return out.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.push_back(k.name);
  return out;
}

}  // namespace nvreadout::cli
