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

// Small dense optimizers shared by the fitting operations: a damped
// least-squares (Levenberg-Marquardt) solver with a finite-difference
// Jacobian, and a Nelder-Mead simplex minimizer.

#ifndef NVREADOUT_OPTIMIZE_HPP
#define NVREADOUT_OPTIMIZE_HPP

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace nvreadout {

using ResidualFn = std::function<void(std::span<const double> params, std::span<double> residuals)>;

struct LeastSquaresOptions {
  int max_iterations = 500;
  /// Stop when an accepted step changes the cost by less than this fraction.
  double relative_cost_tolerance = 1e-9;
  double initial_damping = 1e-3;
  /// Per-parameter magnitude used to size finite-difference steps. Empty
  /// means max(|x|, 1).
  std::vector<double> typical_scale;
  std::vector<double> lower_bounds;
  std::vector<double> upper_bounds;
  bool central_differences = false;
};

struct LeastSquaresResult {
  std::vector<double> params;
  std::vector<double> residuals;
  /// Sum of squared residuals.
  double cost = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  /// s^2 (J^T J)^-1 with s^2 = cost / (m - n); empty when J^T J is singular.
  Eigen::MatrixXd covariance;
  /// sqrt of the covariance diagonal; +inf for unidentifiable parameters.
  std::vector<double> standard_errors;
  bool jacobian_rank_deficient = false;
};

LeastSquaresResult levenberg_marquardt(const ResidualFn& fn, std::size_t num_residuals,
                                       std::vector<double> initial,
                                       const LeastSquaresOptions& options = {});

Eigen::MatrixXd numeric_jacobian(const ResidualFn& fn, std::size_t num_residuals,
                                 std::span<const double> params, std::span<const double> base_residuals,
                                 const LeastSquaresOptions& options);

using ObjectiveFn = std::function<double(std::span<const double>)>;

struct NelderMeadOptions {
  int max_iterations = 4000;
  double absolute_tolerance = 0.0;
  double relative_tolerance = 1e-14;
  /// Simplex diameter below which the search stops (same units as x).
  double x_tolerance = 1e-12;
  std::vector<double> initial_step;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

NelderMeadResult nelder_mead(const ObjectiveFn& fn, std::vector<double> start,
                             const NelderMeadOptions& options = {});

/// R^2 = 1 - SS_res / SS_tot. Returns 1 for a perfect fit of constant data.
double coefficient_of_determination(std::span<const double> observed, std::span<const double> predicted);

}  // namespace nvreadout

#endif  // NVREADOUT_OPTIMIZE_HPP
