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

// Scenario configuration: every module parameter as a flat `key = value`
// entry, with named presets for the deep and the shallow NV center.

#ifndef NVREADOUT_CLI_CONFIG_HPP
#define NVREADOUT_CLI_CONFIG_HPP

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "nvreadout/excited_state.hpp"
#include "nvreadout/photon_statistics.hpp"
#include "nvreadout/protocol.hpp"
#include "nvreadout/rate_dynamics.hpp"
#include "nvreadout/spin_hamiltonian.hpp"

namespace nvreadout::cli {

/// NV- count model: renormalized sum of peak-height Gaussians, optionally
/// blended with a Poisson part of weight `poisson_weight`.
struct ChargeModelConfig {
  std::vector<GaussianComponent> gaussians;
  double poisson_weight = 0.0;
  double poisson_lambda = 0.0;

  CountModel model() const;
};

struct DurationRowConfig {
  std::vector<double> duration_s;
  std::vector<double> threshold;
  std::vector<double> e0_meas;
  std::vector<double> e1_meas;
};

struct ScenarioConfig {
  std::string preset = "none";

  GroundSpinParams ground;
  FieldVector field;
  FieldInferenceOptions odmr;

  ExcitedStateParams excited;
  StrainField strain;
  double ple_min_ghz = -4.0;
  double ple_max_ghz = 25.0;
  int ple_points = 2901;
  double map_xi_perp_ghz = 20.0;
  double map_theta_deg = 20.0;
  double map_b_max_mt = 200.0;
  int map_points = 201;

  // Rate model; lifetimes in seconds, inf disables a channel.
  double binwidth_s = 10e-9;
  double t_st0_s = 4.1e-6;
  double t_st1_s = 0.4e-3;
  double t_ts_s = 1.33e-6;
  double t_ion_s = std::numeric_limits<double>::infinity();
  double p_recombination = 0.0;
  FluorescenceParams fluorescence;
  double e_mw = 0.0;
  std::array<std::array<double, 2>, kNumFamilies> family_n0_nplus{};  // n- is the remainder
  double pump_duration_s = 20e-6;
  double noise_relative = 0.02;
  bool fix_ionization = false;
  int fit_max_iterations = 500;

  ChargeModelConfig charge_minus;
  double charge_zero_lambda = 0.5;
  double charge_window_s = 1e-3;
  double nv_minus_fraction = 1.0;
  std::string hist_kind = "gaussian_mixture";
  int hist_components = 2;

  ProtocolErrorBudget budget;  // e0/e1 unused; filled by inversion
  MeasuredErrors measured;
  DurationRowConfig durations;
  int rabi_points = 181;

  SensingTimingModel timing;
  double speedup_t_min_s = 1e-7;
  double speedup_t_max_s = 10e-3;
  int speedup_points = 100;
  /// 0 means "use the protocol's corrected single-shot SNR".
  double single_shot_snr = 0.0;
  double resonant_snr = 0.22;

  std::uint64_t mc_repetitions = 100000;
  /// Negative means "optimize from the count models".
  int mc_threshold = -1;

  RateModel rate_model() const;
  PopulationState family_state(int family) const;
  /// Throws InvalidArgument if any module precondition fails.
  void validate() const;
};

/// Throws ConfigError for an unknown name. Names: "deep", "shallow".
ScenarioConfig preset(std::string_view name);

/// Applies `key = value` lines on top of `cfg`. `#` starts a comment.
/// Throws ConfigError (with the line number) on unknown keys or bad values.
void apply_config_text(ScenarioConfig& cfg, std::string_view text);

/// Canonical `key = value` listing of every key, in registry order.
std::string dump_config(const ScenarioConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace nvreadout::cli

#endif  // NVREADOUT_CLI_CONFIG_HPP
