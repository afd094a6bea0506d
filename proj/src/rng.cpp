#include "lastmile/rng.hpp"

#include <cmath>

#include "lastmile/baselines.hpp"

namespace lastmile {

double Rng::normal() { return baselines::inv_norm_cdf(uniform_open()); }

double Rng::lognormal(double mu, double sigma) {
	return std::exp(mu + sigma * normal());
}

std::uint32_t Rng::poisson(double lambda) {
	if (lambda < 0.0 || !std::isfinite(lambda))
		throw DomainError("Rng::poisson: lambda must be finite and non-negative");
	if (lambda == 0.0) return 0;
	// Sequential CDF inversion. Exact and platform-stable; cost O(lambda),
	// which is fine for the tag intensities this library works with.
	const double u = uniform01();
	double p = std::exp(-lambda);
	double cdf = p;
	std::uint32_t k = 0;
	while (u >= cdf && k < 1u << 20) {
		++k;
		p *= lambda / static_cast<double>(k);
		cdf += p;
	}
	return k;
}

}  // namespace lastmile
