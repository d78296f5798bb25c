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

#include "nvreadout/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nvreadout/errors.hpp"
#include "nvreadout/rng.hpp"
#include "nvreadout/simd/kernels.hpp"

namespace nvreadout {

double Rng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

namespace {

double sum_squares(std::span<const double> r) { return simd::kernels().sum_squares(r.data(), r.size()); }

double step_size(const LeastSquaresOptions& options, std::size_t j, double x) {
  const double scale = j < options.typical_scale.size() ? options.typical_scale[j] : std::max(std::abs(x), 1.0);
  const double rel = options.central_differences ? 6e-6 : 1.5e-8;
  return rel * std::max(std::abs(x), scale);
}

void clamp_to_bounds(std::vector<double>& x, const LeastSquaresOptions& options) {
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (j < options.lower_bounds.size()) x[j] = std::max(x[j], options.lower_bounds[j]);
    if (j < options.upper_bounds.size()) x[j] = std::min(x[j], options.upper_bounds[j]);
  }
}

}  // namespace

Eigen::MatrixXd numeric_jacobian(const ResidualFn& fn, std::size_t num_residuals, std::span<const double> params,
                                 std::span<const double> base_residuals, const LeastSquaresOptions& options) {
  const std::size_t n = params.size();
  Eigen::MatrixXd jac(num_residuals, n);
  std::vector<double> x(params.begin(), params.end());
  std::vector<double> plus(num_residuals), minus(num_residuals);
  for (std::size_t j = 0; j < n; ++j) {
    const double h = step_size(options, j, params[j]);
    const double x0 = x[j];
    // Step away from a bound instead of across it.
    double dir = 1.0;
    if (j < options.upper_bounds.size() && x0 + h > options.upper_bounds[j]) dir = -1.0;
    if (options.central_differences && dir > 0 &&
        !(j < options.lower_bounds.size() && x0 - h < options.lower_bounds[j])) {
      x[j] = x0 + h;
      fn(x, plus);
      x[j] = x0 - h;
      fn(x, minus);
      for (std::size_t i = 0; i < num_residuals; ++i) jac(i, j) = (plus[i] - minus[i]) / (2.0 * h);
    } else {
      x[j] = x0 + dir * h;
      fn(x, plus);
      for (std::size_t i = 0; i < num_residuals; ++i) jac(i, j) = (plus[i] - base_residuals[i]) / (dir * h);
    }
    x[j] = x0;
  }
  return jac;
}

LeastSquaresResult levenberg_marquardt(const ResidualFn& fn, std::size_t num_residuals, std::vector<double> initial,
                                       const LeastSquaresOptions& options) {
  const std::size_t n = initial.size();
  if (n == 0) throw InvalidArgument("levenberg_marquardt: no parameters");
  if (num_residuals < n) throw InvalidArgument("levenberg_marquardt: fewer residuals than parameters");

  LeastSquaresResult result;
  std::vector<double> x = std::move(initial);
  clamp_to_bounds(x, options);
  std::vector<double> r(num_residuals), trial_r(num_residuals);
  fn(x, r);
  double cost = sum_squares(r);
  if (!std::isfinite(cost)) throw ConvergenceError("levenberg_marquardt: non-finite cost at the starting point");

  double damping = options.initial_damping;
  Eigen::Map<const Eigen::VectorXd> rv(r.data(), static_cast<Eigen::Index>(num_residuals));
  Eigen::MatrixXd jac = numeric_jacobian(fn, num_residuals, x, r, options);

  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (cost == 0.0) {
      result.converged = true;
      break;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * Eigen::Map<const Eigen::VectorXd>(r.data(), rv.size());
    Eigen::VectorXd diag = jtj.diagonal().cwiseMax(1e-300);

    // Parameters sitting on a bound with the gradient pushing outward are
    // held fixed for this step; the rest solve the reduced system.
    std::vector<Eigen::Index> free;
    for (std::size_t j = 0; j < n; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const bool at_lower = j < options.lower_bounds.size() && x[j] <= options.lower_bounds[j] && grad(jj) > 0.0;
      const bool at_upper = j < options.upper_bounds.size() && x[j] >= options.upper_bounds[j] && grad(jj) < 0.0;
      if (!at_lower && !at_upper) free.push_back(jj);
    }
    if (free.empty()) {
      result.converged = true;
      break;
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd jtj_free(nf, nf);
    Eigen::VectorXd grad_free(nf), diag_free(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      grad_free(a) = grad(free[a]);
      diag_free(a) = diag(free[a]);
      for (Eigen::Index b = 0; b < nf; ++b) jtj_free(a, b) = jtj(free[a], free[b]);
    }

    bool accepted = false;
    double new_cost = cost;
    std::vector<double> trial(n);
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd a = jtj_free;
      a.diagonal() += damping * diag_free;
      const Eigen::VectorXd delta = a.ldlt().solve(-grad_free);
      if (!delta.allFinite()) {
        damping *= 10.0;
        continue;
      }
      trial = x;
      for (Eigen::Index k = 0; k < nf; ++k) trial[static_cast<std::size_t>(free[k])] += delta(k);
      clamp_to_bounds(trial, options);
      fn(trial, trial_r);
      new_cost = sum_squares(trial_r);
      if (std::isfinite(new_cost) && new_cost <= cost) {
        accepted = true;
        break;
      }
      damping *= 10.0;
    }
    if (!accepted) {
      // No descent direction left at any damping: we are at a (local) minimum.
      result.converged = true;
      break;
    }
    const double change = (cost - new_cost) / std::max(cost, 1e-300);
    x = trial;
    r.swap(trial_r);
    cost = new_cost;
    damping = std::max(damping / 10.0, 1e-12);
    if (change < options.relative_cost_tolerance) {
      result.converged = true;
      ++iter;
      break;
    }
    jac = numeric_jacobian(fn, num_residuals, x, r, options);
  }

  result.iterations = iter;
  result.params = x;
  result.residuals = r;
  result.cost = cost;

  // Covariance at the solution.
  jac = numeric_jacobian(fn, num_residuals, x, r, options);
  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jtj);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double max_ev = ev.cwiseAbs().maxCoeff();
  result.standard_errors.assign(n, std::numeric_limits<double>::infinity());
  if (max_ev > 0 && ev.minCoeff() > 1e-13 * max_ev) {
    const double dof = static_cast<double>(num_residuals - n);
    const double s2 = dof > 0 ? cost / dof : 0.0;
    result.covariance = s2 * eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    for (std::size_t j = 0; j < n; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      result.standard_errors[j] = std::sqrt(std::max(result.covariance(jj, jj), 0.0));
    }
  } else {
    result.jacobian_rank_deficient = true;
  }
  return result;
}

NelderMeadResult nelder_mead(const ObjectiveFn& fn, std::vector<double> start, const NelderMeadOptions& options) {
  const std::size_t n = start.size();
  if (n == 0) throw InvalidArgument("nelder_mead: no parameters");
  std::vector<std::vector<double>> simplex(n + 1, start);
  for (std::size_t j = 0; j < n; ++j) {
    const double step = j < options.initial_step.size() ? options.initial_step[j]
                                                        : (start[j] != 0.0 ? 0.05 * start[j] : 2.5e-4);
    simplex[j + 1][j] += step;
  }
  std::vector<double> values(n + 1);
  for (std::size_t i = 0; i <= n; ++i) values[i] = fn(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  NelderMeadResult result;
  int iter = 0;
  auto point = [&](const std::vector<double>& centroid, const std::vector<double>& worst, double coef) {
    std::vector<double> p(n);
    for (std::size_t j = 0; j < n; ++j) p[j] = centroid[j] + coef * (worst[j] - centroid[j]);
    return p;
  };
  for (; iter < options.max_iterations; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];

    double diameter = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t j = 0; j < n; ++j) diameter = std::max(diameter, std::abs(simplex[i][j] - simplex[best][j]));
    const double spread = values[worst] - values[best];
    if (spread <= options.absolute_tolerance + options.relative_tolerance * std::abs(values[best]) &&
        diameter <= options.x_tolerance) {
      result.converged = true;
      break;
    }
    if (diameter <= options.x_tolerance * 1e-3) {
      result.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / static_cast<double>(n);
    }
    const auto reflected = point(centroid, simplex[worst], -1.0);
    const double fr = fn(reflected);
    if (fr < values[best]) {
      const auto expanded = point(centroid, simplex[worst], -2.0);
      const double fe = fn(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
    } else if (fr < values[second]) {
      simplex[worst] = reflected;
      values[worst] = fr;
    } else {
      const bool outside = fr < values[worst];
      const auto contracted = point(centroid, outside ? reflected : simplex[worst], 0.5);
      const double fc = fn(contracted);
      if (fc < (outside ? fr : values[worst])) {
        simplex[worst] = contracted;
        values[worst] = fc;
      } else {
        for (std::size_t i = 0; i <= n; ++i) {
          if (i == best) continue;
          for (std::size_t j = 0; j < n; ++j) simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
          values[i] = fn(simplex[i]);
        }
      }
    }
  }
  const auto best_it = std::min_element(values.begin(), values.end());
  result.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
  result.value = *best_it;
  result.iterations = iter;
  return result;
}

double coefficient_of_determination(std::span<const double> observed, std::span<const double> predicted) {
  if (observed.size() != predicted.size() || observed.empty()) {
    throw InvalidArgument("coefficient_of_determination: size mismatch or empty input");
  }
  const double mean = std::accumulate(observed.begin(), observed.end(), 0.0) / static_cast<double>(observed.size());
  const std::vector<double> mean_vec(observed.size(), mean);
  const auto& k = simd::kernels();
  const double ss_res = k.sum_squared_difference(observed.data(), predicted.data(), observed.size());
  const double ss_tot = k.sum_squared_difference(observed.data(), mean_vec.data(), observed.size());
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

}  // namespace nvreadout
