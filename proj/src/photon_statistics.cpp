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

#include "nvreadout/photon_statistics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "nvreadout/errors.hpp"
#include "nvreadout/optimize.hpp"
#include "nvreadout/rng.hpp"

namespace nvreadout {

CountHistogram CountHistogram::from_counts(std::vector<std::uint64_t> counts, double window_s) {
  CountHistogram h;
  h.total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  h.counts = std::move(counts);
  h.window_s = window_s;
  return h;
}

void CountHistogram::validate() const {
  const std::uint64_t sum = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  if (sum != total) throw DataError("CountHistogram: occurrences do not sum to the total");
  if (!(window_s >= 0.0)) throw DataError("CountHistogram: negative acquisition window");
}

std::vector<double> CountHistogram::frequencies() const {
  std::vector<double> f(counts.size(), 0.0);
  if (total == 0) return f;
  for (std::size_t k = 0; k < counts.size(); ++k) f[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
  return f;
}

double CountHistogram::mean() const {
  if (total == 0) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) s += static_cast<double>(k) * static_cast<double>(counts[k]);
  return s / static_cast<double>(total);
}

int CountHistogram::max_count() const {
  for (std::size_t k = counts.size(); k-- > 0;)
    if (counts[k] > 0) return static_cast<int>(k);
  return 0;
}

double GaussianMixtureModel::raw(double k) const {
  double s = 0.0;
  for (const auto& c : components) {
    const double z = (k - c.mean) / c.sd;
    s += c.amplitude * std::exp(-0.5 * z * z);
  }
  return s;
}

namespace {

std::vector<double> poisson_table(double lambda, double tail) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("PoissonModel: lambda must be finite and >= 0");
  if (lambda == 0.0) return {1.0};
  std::vector<double> p;
  double cum = 0.0;
  for (int k = 0;; ++k) {
    const double v = std::exp(-lambda + k * std::log(lambda) - std::lgamma(k + 1.0));
    p.push_back(v);
    cum += v;
    // Past the mode the terms shrink at least geometrically by r, which
    // bounds the remaining mass without relying on 1 - cum (rounding can
    // keep that above `tail` forever).
    const double r = lambda / (k + 1.0);
    if (k > lambda && (1.0 - cum < tail || v * r / (1.0 - r) < tail)) break;
    if (k > 100000 + 20 * lambda) break;
  }
  return p;
}

std::vector<double> mixture_table(const GaussianMixtureModel& m) {
  if (m.components.empty()) throw InvalidArgument("GaussianMixtureModel: no components");
  double upper = 0.0;
  for (const auto& c : m.components) {
    if (!(c.amplitude >= 0.0) || !std::isfinite(c.amplitude))
      throw InvalidArgument("GaussianMixtureModel: amplitudes must be finite and >= 0");
    if (!(c.sd > 0.0) || !std::isfinite(c.sd) || !std::isfinite(c.mean))
      throw InvalidArgument("GaussianMixtureModel: sd must be > 0 and parameters finite");
    if (c.amplitude > 0.0) upper = std::max(upper, c.mean + 12.0 * c.sd);
  }
  const auto n = static_cast<std::size_t>(std::ceil(upper)) + 1;
  if (n > 50'000'000) throw InvalidArgument("GaussianMixtureModel: support too large");
  std::vector<double> p(n);
  for (std::size_t k = 0; k < n; ++k) p[k] = m.raw(static_cast<double>(k));
  const double z = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(z > 0.0)) throw InvalidArgument("GaussianMixtureModel: no probability mass on k >= 0");
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> tabulated_table(const TabulatedModel& m) {
  if (m.p.empty()) throw InvalidArgument("TabulatedModel: empty table");
  double z = 0.0;
  for (double v : m.p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("TabulatedModel: entries must be finite and >= 0");
    z += v;
  }
  if (!(z > 0.0)) throw InvalidArgument("TabulatedModel: no probability mass");
  std::vector<double> p = m.p;
  for (double& v : p) v /= z;
  return p;
}

}  // namespace

std::vector<double> pmf_table(const CountModel& model, double tail) {
  return std::visit(
      [&](const auto& m) -> std::vector<double> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PoissonModel>) return poisson_table(m.lambda, tail);
        else if constexpr (std::is_same_v<T, GaussianMixtureModel>) return mixture_table(m);
        else return tabulated_table(m);
      },
      model);
}

namespace {

// below[t] = sum_{k < t} p[k] for t in [0, n]; above[t] = sum_{k >= t} p[k].
void partial_sums(const std::vector<double>& p, std::size_t n, std::vector<double>& below, std::vector<double>& above) {
  below.assign(n + 1, 0.0);
  above.assign(n + 1, 0.0);
  for (std::size_t t = 1; t <= n; ++t) below[t] = below[t - 1] + (t - 1 < p.size() ? p[t - 1] : 0.0);
  for (std::size_t t = n; t-- > 0;) above[t] = above[t + 1] + (t < p.size() ? p[t] : 0.0);
}

}  // namespace

ThresholdResult optimize_threshold(const CountModel& minus, const CountModel& zero) {
  const auto pm = pmf_table(minus);
  const auto p0 = pmf_table(zero);
  const std::size_t n = std::max(pm.size(), p0.size());  // candidate t in [0, n]
  std::vector<double> below_m, above_m, below_0, above_0;
  partial_sums(pm, n, below_m, above_m);
  partial_sums(p0, n, below_0, above_0);
  ThresholdResult best;
  double best_total = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t <= n; ++t) {
    const double total = below_m[t] + above_0[t];
    if (total < best_total - 1e-15) {
      best_total = total;
      best.discriminator.threshold = static_cast<int>(t);
      // Sums of a normalized table can overshoot 1 by an ulp.
      best.error_minus = std::clamp(below_m[t], 0.0, 1.0);
      best.error_zero = std::clamp(above_0[t], 0.0, 1.0);
    }
  }
  return best;
}

ThresholdResult threshold_errors(const CountModel& minus, const CountModel& zero, int threshold) {
  if (threshold < 0) throw InvalidArgument("threshold must be >= 0");
  const auto pm = pmf_table(minus);
  const auto p0 = pmf_table(zero);
  ThresholdResult r;
  r.discriminator.threshold = threshold;
  for (std::size_t k = 0; k < pm.size(); ++k)
    if (static_cast<int>(k) < threshold) r.error_minus += pm[k];
  for (std::size_t k = 0; k < p0.size(); ++k)
    if (static_cast<int>(k) >= threshold) r.error_zero += p0[k];
  r.error_minus = std::clamp(r.error_minus, 0.0, 1.0);
  r.error_zero = std::clamp(r.error_zero, 0.0, 1.0);
  return r;
}

double charge_fidelity(double error_minus, double error_zero) {
  if (!(error_minus >= 0.0 && error_minus <= 1.0) || !(error_zero >= 0.0 && error_zero <= 1.0))
    throw InvalidArgument("charge_fidelity: errors must lie in [0, 1]");
  return 1.0 - (error_minus + error_zero) / 2.0;
}

// ---------------------------------------------------------------------------

namespace {

CountFitResult fit_poisson(const CountHistogram& h) {
  CountFitResult r;
  const double lambda = h.mean();
  r.model = PoissonModel{lambda};
  r.standard_errors = {std::sqrt(lambda / static_cast<double>(h.total))};
  const auto freq = h.frequencies();
  const auto pmf = poisson_table(lambda, 1e-15);
  std::vector<double> pred(freq.size());
  for (std::size_t k = 0; k < freq.size(); ++k) pred[k] = k < pmf.size() ? pmf[k] : 0.0;
  r.r_squared = coefficient_of_determination(freq, pred);
  return r;
}

CountFitResult fit_mixture(const CountHistogram& h, int k) {
  if (k < 1) throw InvalidArgument("fit_count_model: need at least one mixture component");
  const auto freq = h.frequencies();
  const std::size_t m = freq.size();
  const std::size_t np = 3 * static_cast<std::size_t>(k);
  if (m < np) throw DataError("fit_count_model: histogram has fewer bins than mixture parameters");

  double mean = h.mean(), var = 0.0;
  for (std::size_t i = 0; i < m; ++i) var += freq[i] * (i - mean) * (i - mean);
  const double sd = std::max(std::sqrt(var), 0.5);
  const double peak = *std::max_element(freq.begin(), freq.end());
  const std::size_t mode = static_cast<std::size_t>(std::max_element(freq.begin(), freq.end()) - freq.begin());
  const double span = static_cast<double>(h.max_count() + 1);

  auto model_at = [&](std::span<const double> x, double kk) {
    double s = 0.0;
    for (int c = 0; c < k; ++c) {
      const double z = (kk - x[3 * c + 1]) / std::exp(x[3 * c + 2]);
      s += x[3 * c] * std::exp(-0.5 * z * z);
    }
    return s;
  };
  auto residual = [&](std::span<const double> x, std::span<double> r) {
    for (std::size_t i = 0; i < m; ++i) r[i] = model_at(x, static_cast<double>(i)) - freq[i];
  };

  LeastSquaresOptions opt;
  opt.lower_bounds.resize(np);
  opt.upper_bounds.resize(np);
  opt.typical_scale.resize(np);
  for (int c = 0; c < k; ++c) {
    opt.lower_bounds[3 * c] = 0.0;
    opt.upper_bounds[3 * c] = 1.0;
    opt.typical_scale[3 * c] = std::max(peak, 1e-6);
    opt.lower_bounds[3 * c + 1] = -2.0 * span;
    opt.upper_bounds[3 * c + 1] = 2.0 * span;
    opt.typical_scale[3 * c + 1] = 1.0;
    opt.lower_bounds[3 * c + 2] = std::log(0.05);
    opt.upper_bounds[3 * c + 2] = std::log(20.0 * span);
    opt.typical_scale[3 * c + 2] = 1.0;
  }

  // Three starts: components spread over quantile positions; one narrow
  // component at the mode plus broad ones; all centered with graded widths.
  std::vector<std::vector<double>> starts(3, std::vector<double>(np));
  std::vector<double> cdf = cumulative(freq);
  for (int c = 0; c < k; ++c) {
    const double q = (c + 0.5) / k;
    const auto pos = static_cast<double>(std::lower_bound(cdf.begin(), cdf.end(), q) - cdf.begin());
    const auto at = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(m - 1)));
    starts[0][3 * c] = std::max(freq[at], peak / (2.0 * k));
    starts[0][3 * c + 1] = pos;
    starts[0][3 * c + 2] = std::log(sd / k);

    starts[1][3 * c] = c == 0 ? peak : peak / (4.0 * k);
    starts[1][3 * c + 1] = c == 0 ? static_cast<double>(mode) : mean - sd * c;
    starts[1][3 * c + 2] = std::log(c == 0 ? sd / 2.0 : 2.0 * sd * c);

    starts[2][3 * c] = peak / k;
    starts[2][3 * c + 1] = mean;
    starts[2][3 * c + 2] = std::log(sd * std::pow(2.0, c - (k - 1) / 2.0));
  }

  LeastSquaresResult best;
  bool have = false;
  for (auto& s : starts) {
    for (std::size_t i = 0; i < np; ++i) s[i] = std::clamp(s[i], opt.lower_bounds[i], opt.upper_bounds[i]);
    LeastSquaresResult r = levenberg_marquardt(residual, m, s, opt);
    if (!r.converged) continue;
    if (!have || r.cost < best.cost) {
      best = std::move(r);
      have = true;
    }
  }
  if (!have) throw ConvergenceError("fit_count_model: mixture fit did not converge from any start");

  CountFitResult out;
  GaussianMixtureModel model;
  double max_amp = 0.0;
  for (int c = 0; c < k; ++c) max_amp = std::max(max_amp, best.params[3 * c]);
  for (int c = 0; c < k; ++c) {
    const double a = best.params[3 * c], mu = best.params[3 * c + 1], s = std::exp(best.params[3 * c + 2]);
    model.components.push_back({a, mu, s});
    out.standard_errors.push_back(best.standard_errors[3 * c]);
    out.standard_errors.push_back(best.standard_errors[3 * c + 1]);
    out.standard_errors.push_back(s * best.standard_errors[3 * c + 2]);
    if (a <= 1e-6 * max_amp || a <= 1e-12) out.degenerate_components.push_back(static_cast<std::size_t>(c));
  }
  std::vector<double> pred(m);
  for (std::size_t i = 0; i < m; ++i) pred[i] = freq[i] + best.residuals[i];
  out.r_squared = coefficient_of_determination(freq, pred);
  out.model = std::move(model);
  return out;
}

}  // namespace

CountFitResult fit_count_model(const CountHistogram& hist, CountModelKind kind, int components) {
  hist.validate();
  if (hist.total < 100) throw DataError("fit_count_model: need at least 100 repetitions");
  return kind == CountModelKind::kPoisson ? fit_poisson(hist) : fit_mixture(hist, components);
}

// ---------------------------------------------------------------------------

std::vector<double> cumulative(const std::vector<double>& pmf) {
  std::vector<double> c(pmf.size());
  double s = 0.0;
  for (std::size_t k = 0; k < pmf.size(); ++k) c[k] = (s += pmf[k]);
  if (!c.empty()) c.back() = std::max(c.back(), 1.0);
  return c;
}

int draw_count(const std::vector<double>& cdf, double u) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  const auto idx = static_cast<std::size_t>(it - cdf.begin());
  return static_cast<int>(std::min(idx, cdf.size() - 1));
}

CountHistogram sample_histogram(const CountModel& model, std::uint64_t repetitions, std::uint64_t seed,
                                double window_s) {
  if (repetitions < 1) throw InvalidArgument("sample_histogram: repetitions must be >= 1");
  const auto cdf = cumulative(pmf_table(model));
  const std::uint64_t chunks = (repetitions + kSampleChunk - 1) / kSampleChunk;
  const unsigned workers =
      static_cast<unsigned>(std::min<std::uint64_t>(chunks, std::max(1u, std::thread::hardware_concurrency())));
  std::vector<std::vector<std::uint64_t>> partial(workers, std::vector<std::uint64_t>(cdf.size(), 0));
  auto work = [&](unsigned w) {
    for (std::uint64_t c = w; c < chunks; c += workers) {
      Rng rng(derive_subseed(seed, c));
      const std::uint64_t n = std::min(kSampleChunk, repetitions - c * kSampleChunk);
      for (std::uint64_t i = 0; i < n; ++i) ++partial[w][static_cast<std::size_t>(draw_count(cdf, rng.uniform()))];
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  std::vector<std::uint64_t> counts(cdf.size(), 0);
  for (const auto& p : partial)
    for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += p[k];
  const auto last = std::find_if(counts.rbegin(), counts.rend(), [](std::uint64_t v) { return v > 0; });
  counts.resize(static_cast<std::size_t>(counts.rend() - last));
  return CountHistogram::from_counts(std::move(counts), window_s);
}

// ---------------------------------------------------------------------------

SaturationFit fit_saturation(const std::vector<SaturationPoint>& points) {
  if (points.size() < 3) throw InvalidArgument("fit_saturation: need at least 3 points");
  std::vector<double> powers;
  for (const auto& p : points) {
    if (!(p.power >= 0.0) || !std::isfinite(p.power) || !std::isfinite(p.rate_cps))
      throw InvalidArgument("fit_saturation: powers must be finite and >= 0, rates finite");
    powers.push_back(p.power);
  }
  std::sort(powers.begin(), powers.end());
  if (std::unique(powers.begin(), powers.end()) - powers.begin() < 3)
    throw InvalidArgument("fit_saturation: need at least 3 distinct powers");
  const double p_max = powers.back();
  double p_min = p_max;
  for (double p : powers)
    if (p > 0.0) p_min = std::min(p_min, p);
  if (!(p_max > 0.0)) throw InvalidArgument("fit_saturation: all powers are zero");
  double f_max = 0.0;
  for (const auto& p : points) f_max = std::max(f_max, p.rate_cps);
  const double rate_scale = std::max(f_max, 1e-300);

  // Parameters: (A * p_max / rate_scale, ln I_sat).
  auto residual = [&](std::span<const double> x, std::span<double> r) {
    const double a = x[0] * rate_scale / p_max, isat = std::exp(x[1]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double pw = points[i].power;
      r[i] = (a * pw * isat / (pw + isat) - points[i].rate_cps) / rate_scale;
    }
  };
  LeastSquaresOptions opt;
  const double ln_upper = std::log(1e4 * p_max);
  opt.lower_bounds = {0.0, std::log(1e-3 * p_min)};
  opt.upper_bounds = {std::numeric_limits<double>::infinity(), ln_upper};
  opt.typical_scale = {1.0, 1.0};

  LeastSquaresResult best;
  bool have = false;
  for (double isat0 : {p_min, powers[powers.size() / 2], p_max, 10.0 * p_max}) {
    const double a0 = f_max * (p_max + isat0) / (p_max * isat0);
    LeastSquaresResult r = levenberg_marquardt(residual, points.size(), {a0 * p_max / rate_scale, std::log(isat0)}, opt);
    if (!std::isfinite(r.cost)) continue;
    if (!have || r.cost < best.cost) {
      best = std::move(r);
      have = true;
    }
  }
  if (!have) throw ConvergenceError("fit_saturation: no start produced a finite fit");

  SaturationFit out;
  out.a = best.params[0] * rate_scale / p_max;
  out.i_sat = std::exp(best.params[1]);
  out.f_sat_cps = out.a * out.i_sat;
  const double inf = std::numeric_limits<double>::infinity();
  if (best.covariance.size() > 0) {
    const double ka = rate_scale / p_max;
    const double var_a = best.covariance(0, 0) * ka * ka;
    const double var_ln = best.covariance(1, 1);
    const double cov = best.covariance(0, 1) * ka;
    out.sigma_a = std::sqrt(var_a);
    out.sigma_i_sat = out.i_sat * std::sqrt(var_ln);
    // f_sat = A * exp(l): d/dA = I_sat, d/dl = f_sat.
    const double var_f = out.i_sat * out.i_sat * var_a + out.f_sat_cps * out.f_sat_cps * var_ln +
                         2.0 * out.i_sat * out.f_sat_cps * cov;
    out.sigma_f_sat_cps = std::sqrt(std::max(var_f, 0.0));
  } else {
    out.sigma_a = out.sigma_i_sat = out.sigma_f_sat_cps = inf;
  }
  out.saturating = best.params[1] < ln_upper - 1e-6 && out.sigma_i_sat <= out.i_sat;
  std::vector<double> obs, pred;
  for (std::size_t i = 0; i < points.size(); ++i) {
    obs.push_back(points[i].rate_cps);
    pred.push_back(points[i].rate_cps + best.residuals[i] * rate_scale);
  }
  out.r_squared = coefficient_of_determination(obs, pred);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

enum class Shape { kGaussian, kLorentzian };

PeakFit fit_peak(const std::vector<double>& x, const std::vector<double>& y, Shape shape) {
  PeakFit out;
  const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
  const double ymin = *ymin_it, ymax = *ymax_it;
  const auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
  const double xspan = *xmax_it - *xmin_it;
  const double yscale = std::max(std::abs(ymax), std::abs(ymin));
  if (!(ymax - ymin > 1e-12 * std::max(yscale, 1e-300)) || !(xspan > 0.0)) {
    out.message = "flat spectrum";
    return out;
  }
  const double amp_scale = ymax - ymin;
  const double x0 = x[static_cast<std::size_t>(ymax_it - y.begin())];
  // Width guess from the extent above half maximum.
  double lo = x0, hi = x0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (y[i] - ymin >= 0.5 * amp_scale) {
      lo = std::min(lo, x[i]);
      hi = std::max(hi, x[i]);
    }
  double fwhm0 = std::max(hi - lo, xspan / static_cast<double>(x.size()));
  const double w0 = shape == Shape::kGaussian ? fwhm0 / gaussian_fwhm(1.0) : fwhm0 / 2.0;

  auto f = [shape](double xx, std::span<const double> p) {
    const double d = xx - p[1], w = std::exp(p[2]);
    const double core = shape == Shape::kGaussian ? std::exp(-0.5 * d * d / (w * w)) : w * w / (w * w + d * d);
    return p[0] * core + p[3];
  };
  // Parameters: (amplitude / amp_scale, center, ln width, offset / amp_scale).
  auto residual = [&](std::span<const double> p, std::span<double> r) {
    const double q[4] = {p[0] * amp_scale, p[1], p[2], p[3] * amp_scale};
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = (f(x[i], q) - y[i]) / amp_scale;
  };
  LeastSquaresOptions opt;
  opt.typical_scale = {1.0, std::max(w0, 1e-12), 1.0, 1.0};
  opt.lower_bounds = {-std::numeric_limits<double>::infinity(), *xmin_it - xspan,
                      std::log(xspan * 1e-6), -std::numeric_limits<double>::infinity()};
  opt.upper_bounds = {std::numeric_limits<double>::infinity(), *xmax_it + xspan, std::log(xspan * 100.0),
                      std::numeric_limits<double>::infinity()};
  const LeastSquaresResult r = levenberg_marquardt(residual, x.size(), {1.0, x0, std::log(w0), ymin / amp_scale}, opt);
  out.amplitude = r.params[0] * amp_scale;
  out.center = r.params[1];
  out.width = std::exp(r.params[2]);
  out.offset = r.params[3] * amp_scale;
  out.fwhm = shape == Shape::kGaussian ? gaussian_fwhm(out.width) : 2.0 * out.width;
  std::vector<double> pred(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) pred[i] = y[i] + r.residuals[i] * amp_scale;
  out.r_squared = coefficient_of_determination(y, pred);
  out.converged = r.converged && !r.jacobian_rank_deficient && std::isfinite(out.r_squared) && out.amplitude != 0.0;
  if (!out.converged) out.message = r.converged ? "parameters not identifiable" : "iteration limit reached";
  return out;
}

}  // namespace

LineshapeFit fit_lineshape(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("fit_lineshape: x and y differ in length");
  if (x.size() < 10) throw InvalidArgument("fit_lineshape: need at least 10 samples");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InvalidArgument("fit_lineshape: non-finite sample");
  LineshapeFit out;
  out.gaussian = fit_peak(x, y, Shape::kGaussian);
  out.lorentzian = fit_peak(x, y, Shape::kLorentzian);
  return out;
}

}  // namespace nvreadout
