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
#include <numeric>

#include <gtest/gtest.h>

#include "nvreadout/errors.hpp"
#include "nvreadout/rng.hpp"

namespace nvreadout {
namespace {

// Direct pmf evaluation, independent of pmf_table.
std::vector<double> oracle_pmf(const CountModel& model, int n) {
  std::vector<double> p(n + 1);
  if (const auto* m = std::get_if<PoissonModel>(&model)) {
    for (int k = 0; k <= n; ++k)
      p[k] = m->lambda == 0.0 ? (k == 0 ? 1.0 : 0.0)
                              : std::exp(k * std::log(m->lambda) - m->lambda - std::lgamma(k + 1.0));
  } else if (const auto* g = std::get_if<GaussianMixtureModel>(&model)) {
    for (int k = 0; k <= n; ++k)
      for (const auto& c : g->components)
        p[k] += c.amplitude * std::exp(-0.5 * std::pow((k - c.mean) / c.sd, 2));
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& v : p) v /= s;
  } else {
    const auto& t = std::get<TabulatedModel>(model).p;
    for (int k = 0; k <= n && k < static_cast<int>(t.size()); ++k) p[k] = t[k];
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& v : p) v /= s;
  }
  return p;
}

struct BruteThreshold {
  int threshold;
  double total_error;
};

// Scans every t in [0, n + 1] summing each tail from scratch.
BruteThreshold brute_threshold(const std::vector<double>& minus, const std::vector<double>& zero) {
  const int n = static_cast<int>(minus.size()) - 1;
  BruteThreshold best{0, 2.0};
  for (int t = 0; t <= n + 1; ++t) {
    double em = 0.0, ez = 0.0;
    for (int k = 0; k < t; ++k) em += minus[k];
    for (int k = t; k <= n; ++k) ez += zero[k];
    if (em + ez < best.total_error - 1e-12) best = {t, em + ez};
  }
  return best;
}

CountModel random_model(Rng& rng) {
  if (rng.uniform() < 0.5) return PoissonModel{40.0 * rng.uniform()};
  GaussianMixtureModel g;
  const int n = 1 + static_cast<int>(3 * rng.uniform());
  for (int i = 0; i < n; ++i)
    g.components.push_back({0.01 + rng.uniform(), -10.0 + 60.0 * rng.uniform(), 0.5 + 15.0 * rng.uniform()});
  return g;
}

TEST(PmfTable, PoissonMatchesClosedForm) {
  const auto p = pmf_table(PoissonModel{3.7});
  const auto o = oracle_pmf(PoissonModel{3.7}, static_cast<int>(p.size()) - 1);
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(p[k], o[k], 1e-14);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
}

TEST(PmfTable, PoissonTableStopsAtTheTail) {
  for (double lambda = 0.05; lambda < 60.0; lambda += 0.37) {
    const auto p = pmf_table(PoissonModel{lambda});
    EXPECT_LT(p.size(), 60 + 4 * lambda) << lambda;
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-13) << lambda;
  }
}

TEST(PmfTable, MixturesAreNormalizedOnNonNegativeIntegers) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    GaussianMixtureModel g;
    const int n = 1 + static_cast<int>(3 * rng.uniform());
    for (int c = 0; c < n; ++c)
      g.components.push_back({0.001 + rng.uniform(), -80.0 + 160.0 * rng.uniform(), 0.3 + 70.0 * rng.uniform()});
    const auto p = pmf_table(g);
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    EXPECT_GE(sum, 1.0 - 1e-9);
    EXPECT_LE(sum, 1.0 + 1e-9);
    for (double v : p) EXPECT_GE(v, 0.0);
  }
}

TEST(PmfTable, TruncatedComponentKeepsRelativeWeights) {
  // Peak heights are per-bin fractions, so the ratio at two integers is the
  // ratio of the raw sums.
  const GaussianMixtureModel g{{{0.011, -46.0, 65.0}, {0.015, 7.6, 5.0}}};
  const auto p = pmf_table(g);
  EXPECT_NEAR(p[3] / p[20], g.raw(3) / g.raw(20), 1e-12);
  EXPECT_GT(p[0], 0.0);
}

TEST(PmfTable, RejectsInvalidModels) {
  EXPECT_THROW(pmf_table(PoissonModel{-1.0}), InvalidArgument);
  EXPECT_THROW(pmf_table(GaussianMixtureModel{{{1.0, 5.0, 0.0}}}), InvalidArgument);
  EXPECT_THROW(pmf_table(GaussianMixtureModel{{{-1.0, 5.0, 1.0}}}), InvalidArgument);
  EXPECT_THROW(pmf_table(GaussianMixtureModel{}), InvalidArgument);
  EXPECT_THROW(pmf_table(TabulatedModel{{0.0, 0.0}}), InvalidArgument);
}

TEST(Threshold, MatchesBruteForceOnRandomPairs) {
  Rng rng(2026);
  for (int i = 0; i < 200; ++i) {
    const CountModel minus = random_model(rng), zero = random_model(rng);
    const auto r = optimize_threshold(minus, zero);
    const int n = 400;
    const auto bm = oracle_pmf(minus, n), bz = oracle_pmf(zero, n);
    const auto b = brute_threshold(bm, bz);
    EXPECT_NEAR(r.error_minus + r.error_zero, b.total_error, 1e-9) << "pair " << i;
    // Ties can leave several optimal thresholds; the returned one must be optimal.
    double em = 0.0, ez = 0.0;
    for (int k = 0; k < r.discriminator.threshold && k <= n; ++k) em += bm[k];
    for (int k = r.discriminator.threshold; k <= n; ++k) ez += bz[k];
    EXPECT_NEAR(em + ez, b.total_error, 1e-9) << "pair " << i;
  }
}

TEST(Threshold, PointMassesSplitAtOne) {
  const auto r = optimize_threshold(TabulatedModel{{0.0, 0.0, 1.0}}, TabulatedModel{{1.0}});
  EXPECT_EQ(r.discriminator.threshold, 1);
  EXPECT_EQ(r.error_minus, 0.0);
  EXPECT_EQ(r.error_zero, 0.0);
  EXPECT_DOUBLE_EQ(charge_fidelity(r.error_minus, r.error_zero), 1.0);
}

TEST(Threshold, FidelityInvariantUnderLabelSwapWithReflectedCounts) {
  // Swapping the labels and the direction of the cut is the same as
  // reflecting the support k -> N - k.
  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    const auto pm = pmf_table(random_model(rng)), pz = pmf_table(random_model(rng));
    const std::size_t n = std::max(pm.size(), pz.size());
    std::vector<double> rm(n, 0.0), rz(n, 0.0);
    for (std::size_t k = 0; k < pm.size(); ++k) rz[n - 1 - k] = pm[k];
    for (std::size_t k = 0; k < pz.size(); ++k) rm[n - 1 - k] = pz[k];
    const auto a = optimize_threshold(TabulatedModel{pm}, TabulatedModel{pz});
    const auto b = optimize_threshold(TabulatedModel{rm}, TabulatedModel{rz});
    EXPECT_NEAR(charge_fidelity(a.error_minus, a.error_zero), charge_fidelity(b.error_minus, b.error_zero), 1e-12);
  }
}

TEST(Threshold, FixedThresholdErrors) {
  const auto r = threshold_errors(PoissonModel{10.0}, PoissonModel{0.5}, 3);
  const auto pm = oracle_pmf(PoissonModel{10.0}, 3), pz = oracle_pmf(PoissonModel{0.5}, 3);
  EXPECT_NEAR(r.error_minus, pm[0] + pm[1] + pm[2], 1e-14);
  EXPECT_NEAR(r.error_zero, 1.0 - pz[0] - pz[1] - pz[2], 1e-14);
  EXPECT_TRUE(r.discriminator.is_negative(3));
  EXPECT_FALSE(r.discriminator.is_negative(2));
  EXPECT_THROW(threshold_errors(PoissonModel{1.0}, PoissonModel{1.0}, -1), InvalidArgument);
}

TEST(Threshold, ShallowReferenceMixtureAgainstOracle) {
  const GaussianMixtureModel minus{{{0.011, -46.0, 65.0}, {0.015, 7.6, 5.0}}};
  const auto r = optimize_threshold(minus, PoissonModel{0.766});
  EXPECT_EQ(r.discriminator.threshold, 4);
  const auto bm = oracle_pmf(minus, 1000), bz = oracle_pmf(PoissonModel{0.766}, 1000);
  const auto b = brute_threshold(bm, bz);
  EXPECT_EQ(b.threshold, 4);
  EXPECT_NEAR(r.error_minus, bm[0] + bm[1] + bm[2] + bm[3], 1e-12);
}

TEST(ChargeFidelity, FormulaAndDomain) {
  EXPECT_DOUBLE_EQ(charge_fidelity(0.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(charge_fidelity(0.1, 0.3), 0.8);
  EXPECT_DOUBLE_EQ(charge_fidelity(0.3, 0.1), 0.8);
  EXPECT_THROW(charge_fidelity(-0.1, 0.0), InvalidArgument);
  EXPECT_THROW(charge_fidelity(0.0, 1.1), InvalidArgument);
}

TEST(Histogram, ValidationAndMoments) {
  const auto h = CountHistogram::from_counts({1, 2, 3, 4});
  EXPECT_EQ(h.total, 10u);
  EXPECT_DOUBLE_EQ(h.mean(), (0 * 1 + 1 * 2 + 2 * 3 + 3 * 4) / 10.0);
  EXPECT_EQ(h.max_count(), 3);
  EXPECT_DOUBLE_EQ(h.frequencies()[3], 0.4);
  CountHistogram bad = h;
  bad.total = 11;
  EXPECT_THROW(bad.validate(), DataError);
}

TEST(Sampling, DeterministicForSeed) {
  const PoissonModel m{4.2};
  const auto a = sample_histogram(m, 200000, 9);
  const auto b = sample_histogram(m, 200000, 9);
  const auto c = sample_histogram(m, 200000, 10);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_NE(a.counts, c.counts);
  EXPECT_EQ(a.total, 200000u);
}

TEST(Sampling, EmpiricalErrorsConvergeToAnalytic) {
  // Dvoretzky-Kiefer-Wolfowitz bound at 1e5 samples, failure probability 1e-6.
  const double bound = std::sqrt(std::log(2.0 / 1e-6) / (2.0 * 1e5));
  Rng rng(33);
  for (int i = 0; i < 10; ++i) {
    const CountModel minus = random_model(rng), zero = random_model(rng);
    const auto r = optimize_threshold(minus, zero);
    const auto hm = sample_histogram(minus, 100000, 100 + i);
    const auto hz = sample_histogram(zero, 100000, 200 + i);
    double low = 0.0, high = 0.0;
    for (std::size_t k = 0; k < hm.counts.size(); ++k)
      if (static_cast<int>(k) < r.discriminator.threshold) low += hm.counts[k];
    for (std::size_t k = 0; k < hz.counts.size(); ++k)
      if (static_cast<int>(k) >= r.discriminator.threshold) high += hz.counts[k];
    EXPECT_NEAR(low / 1e5, r.error_minus, bound);
    EXPECT_NEAR(high / 1e5, r.error_zero, bound);
  }
}

TEST(Sampling, InverseCdfLookup) {
  const auto cdf = cumulative({0.2, 0.3, 0.5});
  EXPECT_EQ(draw_count(cdf, 0.0), 0);
  EXPECT_EQ(draw_count(cdf, 0.19), 0);
  EXPECT_EQ(draw_count(cdf, 0.2), 1);
  EXPECT_EQ(draw_count(cdf, 0.99), 2);
}

TEST(CountFit, PoissonIsSampleMean) {
  const auto h = sample_histogram(PoissonModel{3.2}, 100000, 1);
  const auto f = fit_count_model(h, CountModelKind::kPoisson);
  EXPECT_DOUBLE_EQ(std::get<PoissonModel>(f.model).lambda, h.mean());
  EXPECT_NEAR(std::get<PoissonModel>(f.model).lambda, 3.2, 0.03);
  EXPECT_NEAR(f.standard_errors[0], std::sqrt(3.2 / 1e5), 1e-3);
}

TEST(CountFit, RecoversSeparatedMixture) {
  const GaussianMixtureModel truth{{{0.02, 10.0, 3.0}, {0.01, 40.0, 6.0}}};
  const auto h = sample_histogram(truth, 200000, 4);
  const auto f = fit_count_model(h, CountModelKind::kGaussianMixture, 2);
  auto comps = std::get<GaussianMixtureModel>(f.model).components;
  std::sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) { return a.mean < b.mean; });
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_NEAR(comps[0].mean, 10.0, 0.3);
  EXPECT_NEAR(comps[1].mean, 40.0, 0.5);
  EXPECT_NEAR(comps[0].sd, 3.0, 0.2);
  EXPECT_NEAR(comps[1].sd, 6.0, 0.3);
  // Peak heights of a unit-mass mixture: a / sum(a * sd * sqrt(2 pi)).
  EXPECT_NEAR(comps[0].amplitude / comps[1].amplitude, 2.0, 0.1);
  EXPECT_GT(f.r_squared, 0.99);
}

TEST(CountFit, FewEventsRejected) {
  EXPECT_THROW(fit_count_model(CountHistogram::from_counts({10, 20, 30}), CountModelKind::kPoisson), DataError);
}

TEST(Saturation, RecoversNoiselessCurve) {
  std::vector<SaturationPoint> pts;
  const double a = 63000.0 / 0.51, isat = 0.51;
  for (double p : {0.05, 0.1, 0.2, 0.4, 0.8, 1.5, 3.0}) pts.push_back({p, a * p * isat / (p + isat)});
  const auto f = fit_saturation(pts);
  EXPECT_NEAR(f.i_sat, 0.51, 1e-6);
  EXPECT_NEAR(f.f_sat_cps, 63000.0, 1e-2);
  EXPECT_TRUE(f.saturating);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
}

TEST(Saturation, LinearDataFlaggedAsNotSaturating) {
  std::vector<SaturationPoint> pts;
  for (double p : {0.1, 0.2, 0.3, 0.4}) pts.push_back({p, 1000.0 * p});
  EXPECT_FALSE(fit_saturation(pts).saturating);
  EXPECT_THROW(fit_saturation({{0.1, 1.0}, {0.1, 1.0}, {0.2, 2.0}}), InvalidArgument);
}

TEST(Lineshape, GaussianLinePrefersGaussian) {
  std::vector<double> x, y;
  Rng rng(3);
  const double sigma = 0.43 / gaussian_fwhm(1.0);
  for (int i = 0; i < 121; ++i) {
    x.push_back(-1.5 + 0.025 * i);
    const double clean = std::exp(-0.5 * x.back() * x.back() / (sigma * sigma));
    y.push_back(clean + 0.05 * rng.normal());
  }
  const auto f = fit_lineshape(x, y);
  ASSERT_TRUE(f.gaussian.converged);
  EXPECT_GT(f.gaussian.r_squared, f.lorentzian.r_squared);
  EXPECT_NEAR(f.gaussian.fwhm, 0.43, 0.043);
}

TEST(Lineshape, LorentzianLinePrefersLorentzian) {
  std::vector<double> x, y;
  Rng rng(5);
  for (int i = 0; i < 121; ++i) {
    x.push_back(-1.5 + 0.025 * i);
    y.push_back(1.0 / (1.0 + std::pow(x.back() / 0.1, 2)) + 0.02 * rng.normal());
  }
  const auto f = fit_lineshape(x, y);
  ASSERT_TRUE(f.lorentzian.converged);
  EXPECT_GT(f.lorentzian.r_squared, f.gaussian.r_squared);
  EXPECT_NEAR(f.lorentzian.fwhm, 0.2, 0.02);
}

TEST(Lineshape, FlatSpectrumFlagsBothShapes) {
  std::vector<double> x, y(20, 3.0);
  for (int i = 0; i < 20; ++i) x.push_back(i);
  const auto f = fit_lineshape(x, y);
  EXPECT_FALSE(f.gaussian.converged);
  EXPECT_FALSE(f.lorentzian.converged);
  EXPECT_THROW(fit_lineshape({1, 2, 3}, {1, 2, 3}), InvalidArgument);
}

}  // namespace
}  // namespace nvreadout
