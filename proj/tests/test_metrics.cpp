#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lastmile/baselines.hpp"
#include "lastmile/errors.hpp"
#include "lastmile/metrics.hpp"
#include "lastmile/rng.hpp"

using namespace lastmile;

namespace {

// independent CRPS oracle for an empirical measure: the pairwise form
// E|X - y| - 0.5 E|X - X'|
double crps_pairwise(const std::vector<double>& atoms, double y) {
    const double n = static_cast<double>(atoms.size());
    double e_xy = 0.0, e_xx = 0.0;
    for (double a : atoms) e_xy += std::abs(a - y);
    for (double a : atoms)
        for (double b : atoms) e_xx += std::abs(a - b);
    return e_xy / n - 0.5 * e_xx / (n * n);
}

// closed-form lognormal CRPS (standard result, used only as a test oracle)
double crps_lognormal_closed(double mu, double sigma, double y) {
    const double w = (std::log(y) - mu) / sigma;
    const double m = std::exp(mu + 0.5 * sigma * sigma);
    return y * (2.0 * baselines::norm_cdf(w) - 1.0) -
           2.0 * m * (baselines::norm_cdf(w - sigma) +
                      baselines::norm_cdf(sigma / std::sqrt(2.0)) - 1.0);
}

class Uniform01 : public PredictiveDistribution {
public:
    double cdf(double y) const override { return std::clamp(y, 0.0, 1.0); }
    double quantile(double tau) const override { return tau; }
};

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("pinball loss basics") {
    CHECK(metrics::pinball(10.0, 8.0, 0.9) == doctest::Approx(1.8).epsilon(1e-15));
    CHECK(metrics::pinball(10.0, 12.0, 0.9) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(metrics::pinball(10.0, 10.0, 0.3) == 0.0);
    CHECK_THROWS_AS(metrics::pinball(1.0, 1.0, 0.0), DomainError);
    CHECK_THROWS_AS(metrics::pinball(1.0, 1.0, 1.0), DomainError);
}

TEST_CASE("median pinball is half the absolute error") {
    Rng rng(21);
    double pin = 0.0, mae = 0.0;
    const int n = 5000;
    for (int i = 0; i < n; ++i) {
        double y = rng.lognormal(5.0, 0.7);
        double q = rng.lognormal(5.0, 0.7);
        pin += metrics::pinball(y, q, 0.5);
        mae += std::abs(y - q);
    }
    CHECK(pin / n == doctest::Approx(0.5 * mae / n).epsilon(1e-12));
}

TEST_CASE("step CRPS equals the pairwise closed form") {
    CHECK(metrics::crps_step({0.0}, 3.0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(metrics::crps_step({0.0, 1.0}, 0.5) == doctest::Approx(0.25).epsilon(1e-12));

    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 1 + rng.below(40);
        std::vector<double> atoms(n);
        for (auto& a : atoms) a = rng.uniform(-5.0, 50.0);
        if (trial % 3 == 0)  // inject ties
            for (std::size_t i = 1; i < n; i += 2) atoms[i] = atoms[i - 1];
        double y = rng.uniform(-10.0, 60.0);
        CHECK(metrics::crps_step(atoms, y) ==
              doctest::Approx(crps_pairwise(atoms, y)).epsilon(1e-9));
    }
}

TEST_CASE("step CRPS is zero only for a point mass on the observation") {
    CHECK(metrics::crps_step({7.0, 7.0, 7.0}, 7.0) == 0.0);
    CHECK(metrics::crps_step({7.0, 7.0, 7.0}, 7.1) > 0.0);
    CHECK_THROWS_AS(metrics::crps_step({}, 1.0), InsufficientDataError);
}

TEST_CASE("quadrature CRPS: uniform observation at the midpoint gives 1/12") {
    Uniform01 u;
    CHECK(metrics::crps_quadrature(u, 0.5) == doctest::Approx(1.0 / 12.0).epsilon(1e-4));
    // observation outside the support: integral of F^2 over [0,1] plus the
    // unit strip from the support edge to the observation
    CHECK(metrics::crps_quadrature(u, 2.0) == doctest::Approx(4.0 / 3.0).epsilon(1e-3));
}

TEST_CASE("lognormal CRPS matches the closed form") {
    Rng rng(8);
    for (int i = 0; i < 60; ++i) {
        double mu = rng.uniform(3.0, 6.5);
        double sigma = rng.uniform(0.15, 1.2);
        double y = rng.lognormal(mu, sigma);
        double got = metrics::crps_lognormal(mu, sigma, y);
        double want = crps_lognormal_closed(mu, sigma, y);
        CHECK(got == doctest::Approx(want).epsilon(1e-3));
    }
}

TEST_CASE("interval statistics") {
    std::vector<double> lo = {0.0, 5.0, 10.0};
    std::vector<double> hi = {10.0, 6.0, 20.0};
    std::vector<double> y = {5.0, 7.0, 10.0};  // inside, above, on the edge
    auto s = metrics::interval_stats(lo, hi, y);
    CHECK(s.coverage == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(s.mean_width == doctest::Approx((10.0 + 1.0 + 10.0) / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(metrics::interval_stats({0.0}, {1.0, 2.0}, {0.5}), LengthMismatchError);
}

TEST_CASE("chi-squared survival function frozen values") {
    // df = 2 is exactly exp(-x/2)
    CHECK(metrics::chi2_sf(7.2, 2.0) == doctest::Approx(std::exp(-3.6)).epsilon(1e-12));
    // the classic 5% critical value at df = 1
    CHECK(metrics::chi2_sf(3.841458820694124, 1.0) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(metrics::chi2_sf(0.0, 3.0) == 1.0);
    CHECK(metrics::chi2_sf(1000.0, 2.0) < 1e-200);
    CHECK_THROWS_AS(metrics::chi2_sf(-1.0, 2.0), DomainError);
    CHECK_THROWS_AS(metrics::chi2_sf(1.0, 0.0), DomainError);
}

TEST_CASE("Kruskal-Wallis: frozen statistics and invariances") {
    auto r = metrics::kruskal_wallis({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
    CHECK(r.h == doctest::Approx(7.2).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(std::exp(-3.6)).epsilon(1e-12));
    CHECK(r.k == 3);
    CHECK(r.n == 9);

    auto r2 = metrics::kruskal_wallis({{1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}, {11, 12, 13, 14, 15}});
    CHECK(r2.h == doctest::Approx(12.5).epsilon(1e-12));
    CHECK(r2.p_value == doctest::Approx(std::exp(-6.25)).epsilon(1e-12));

    // rank tests only see order: any strictly monotone transform is a no-op
    std::vector<std::vector<double>> groups = {{3.2, 1.1, 4.4, 2.0}, {5.5, 0.3, 6.1}, {2.5, 7.7, 8.0, 1.9}};
    auto base = metrics::kruskal_wallis(groups);
    auto exp_groups = groups;
    for (auto& g : exp_groups)
        for (auto& v : g) v = std::exp(v);
    auto affine = groups;
    for (auto& g : affine)
        for (auto& v : g) v = 3.0 * v + 100.0;
    CHECK(metrics::kruskal_wallis(exp_groups).h == doctest::Approx(base.h).epsilon(1e-12));
    CHECK(metrics::kruskal_wallis(affine).h == doctest::Approx(base.h).epsilon(1e-12));
}

TEST_CASE("Kruskal-Wallis ties and degenerate input") {
    // identical groups: no evidence of separation
    auto same = metrics::kruskal_wallis({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
    CHECK(same.h == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(same.p_value == doctest::Approx(1.0).epsilon(1e-12));
    // all observations equal: ranks carry no information at all
    CHECK_THROWS_AS(metrics::kruskal_wallis({{5, 5}, {5, 5, 5}}), DegenerateSampleError);
    CHECK_THROWS_AS(metrics::kruskal_wallis({{1.0, 2.0}}), TooFewGroupsError);
    CHECK_THROWS_AS(metrics::kruskal_wallis({{1.0}, {}}), TooFewSamplesError);
}

TEST_CASE("Mann-Whitney U: separation, symmetry and ties") {
    auto sep = metrics::rank_sum_u({1, 2}, {3, 4});
    CHECK(sep.u == 0.0);
    CHECK(sep.p_value < 0.5);

    auto flip = metrics::rank_sum_u({3, 4}, {1, 2});
    CHECK(flip.u == 4.0);  // n1*n2 - 0
    CHECK(flip.p_value == doctest::Approx(sep.p_value).epsilon(1e-12));

    auto same = metrics::rank_sum_u({1, 2, 3}, {1, 2, 3});
    CHECK(same.u == doctest::Approx(4.5).epsilon(1e-12));  // n1*n2/2
    CHECK(same.p_value == doctest::Approx(1.0).epsilon(1e-12));

    // monotone-transform invariance
    std::vector<double> a = {0.4, 1.9, 2.2, 3.3, 0.1}, b = {1.0, 2.8, 0.9, 4.0};
    auto base = metrics::rank_sum_u(a, b);
    std::vector<double> ea = a, eb = b;
    for (auto& v : ea) v = std::exp(v);
    for (auto& v : eb) v = std::exp(v);
    auto trans = metrics::rank_sum_u(ea, eb);
    CHECK(trans.u == base.u);
    CHECK(trans.p_value == doctest::Approx(base.p_value).epsilon(1e-12));

    CHECK_THROWS_AS(metrics::rank_sum_u({}, {1.0}), TooFewSamplesError);
}

TEST_CASE("fold aggregation uses the sample standard deviation") {
    auto s = metrics::fold_stat({1.0, 2.0, 3.0});
    CHECK(s.mean == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(s.stddev == doctest::Approx(1.0).epsilon(1e-15));
    auto single = metrics::fold_stat({5.0});
    CHECK(single.mean == 5.0);
    CHECK(single.stddev == 0.0);
    CHECK_THROWS_AS(metrics::fold_stat({}), InsufficientDataError);

    metrics::EvalReport rep;
    rep.fold_crps = {10.0, 12.0};
    rep.fold_pinball_p50 = {5.0, 7.0};
    rep.fold_pinball_p95 = {2.0, 2.0};
    rep.fold_coverage = {0.9, 0.88};
    rep.fold_width = {100.0, 110.0};
    rep.n_folds = 2;
    rep.finalize();
    CHECK(rep.crps.mean == doctest::Approx(11.0).epsilon(1e-15));
    CHECK(rep.crps.stddev == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(rep.coverage.mean == doctest::Approx(0.89).epsilon(1e-12));
}

}  // TEST_SUITE
