#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lastmile/distribution.hpp"
#include "lastmile/errors.hpp"
#include "lastmile/geo.hpp"

namespace lastmile {
class Rng;
}

namespace lastmile::baselines {

// Inverse standard normal CDF. Accurate to better than 1e-10 absolute over
// p in [1e-8, 1-1e-8]; antisymmetric about p = 0.5 up to the rounding of
// 1 - p in the tail branches.
double inv_norm_cdf(double p);

// Standard normal CDF via erfc.
double norm_cdf(double z);

// Two-parameter lognormal, the parametric predictive distribution used by the
// per-city and neighbourhood baselines and by the distributional boosters.
class FittedLognormal : public PredictiveDistribution {
public:
	FittedLognormal(double mu, double sigma);

	double mu() const { return mu_; }
	double sigma() const { return sigma_; }

	double cdf(double y) const override;
	double quantile(double tau) const override;
	double sample(Rng& rng) const;
	double mean() const;

private:
	double mu_;
	double sigma_;
};

// Fit by matching two empirical quantiles (type-7 interpolation) to the
// lognormal quantile function. Default picks the median and the 90th
// percentile, which pins mu = ln(median) exactly.
FittedLognormal fit_quantile_match(std::vector<double> samples, double tau_lo = 0.5,
								   double tau_hi = 0.9);

// Empirical quantile, linear interpolation between order statistics
// (h = (n-1)*tau). `sorted` must be ascending.
double empirical_quantile(const std::vector<double>& sorted, double tau);

inline constexpr std::size_t kMinFitSamples = 20;

// One lognormal for a whole city's service times.
FittedLognormal city_model(const std::vector<double>& service_times_s);

struct KringFit {
	FittedLognormal dist;
	int k_used = 0;             // ring radius that supplied the sample
	bool city_fallback = false; // true when even the widened rings were too thin
	std::size_t n_samples = 0;
};

// Neighbourhood baseline: pool service times from all deliveries within k
// rings of `cell`, widening to k+1 and k+2 when below min_n, then falling back
// to the whole city.
KringFit kring_model(const geo::HexCellId& cell,
					 const std::vector<geo::HexCellId>& delivery_cells,
					 const std::vector<double>& service_times_s, int k = 3,
					 std::size_t min_n = kMinFitSamples);

}  // namespace lastmile::baselines
