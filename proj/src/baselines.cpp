#include "lastmile/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "lastmile/rng.hpp"

namespace lastmile::baselines {

// Wichura's AS 241 (PPND16). Absolute error below 1e-15 in double precision;
// both branches are odd in (p - 0.5), so symmetry holds to the last bit.
double inv_norm_cdf(double p) {
	if (!(p > 0.0 && p < 1.0))
		throw DomainError("inv_norm_cdf: p must lie strictly in (0, 1)");
	const double q = p - 0.5;
	if (std::abs(q) <= 0.425) {
		const double r = 0.180625 - q * q;
		return q *
			   (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
					 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
				   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
				 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
			   (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
					 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
				   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
				 4.2313330701600911252e1) * r + 1.0);
	}
	double r = (q < 0.0) ? p : 1.0 - p;
	r = std::sqrt(-std::log(r));
	double val;
	if (r <= 5.0) {
		r -= 1.6;
		val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
					2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
				  3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
				4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
			  (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
					1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
				  6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
				2.05319162663775882187e0) * r + 1.0);
	} else {
		r -= 5.0;
		val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
					1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
				  2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
				5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
			  (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
					1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
				  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
				5.99832206555887937690e-1) * r + 1.0);
	}
	return (q < 0.0) ? -val : val;
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

FittedLognormal::FittedLognormal(double mu, double sigma) : mu_(mu), sigma_(sigma) {
	if (!std::isfinite(mu_)) throw DomainError("FittedLognormal: mu must be finite");
	if (!(sigma_ > 0.0) || !std::isfinite(sigma_))
		throw DomainError("FittedLognormal: sigma must be positive and finite");
}

double FittedLognormal::cdf(double y) const {
	if (y <= 0.0) return 0.0;
	return norm_cdf((std::log(y) - mu_) / sigma_);
}

double FittedLognormal::quantile(double tau) const {
	if (!(tau > 0.0 && tau < 1.0))
		throw DomainError("FittedLognormal::quantile: tau must lie strictly in (0, 1)");
	return std::exp(mu_ + sigma_ * inv_norm_cdf(tau));
}

double FittedLognormal::sample(Rng& rng) const { return rng.lognormal(mu_, sigma_); }

double FittedLognormal::mean() const { return std::exp(mu_ + 0.5 * sigma_ * sigma_); }

double empirical_quantile(const std::vector<double>& sorted, double tau) {
	if (sorted.empty()) throw InsufficientDataError("empirical_quantile: empty sample");
	if (!(tau >= 0.0 && tau <= 1.0))
		throw DomainError("empirical_quantile: tau must lie in [0, 1]");
	const double h = (static_cast<double>(sorted.size()) - 1.0) * tau;
	const auto lo = static_cast<std::size_t>(std::floor(h));
	if (lo + 1 >= sorted.size()) return sorted.back();
	const double frac = h - static_cast<double>(lo);
	return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

FittedLognormal fit_quantile_match(std::vector<double> samples, double tau_lo,
								   double tau_hi) {
	if (samples.size() < kMinFitSamples)
		throw InsufficientDataError("fit_quantile_match: need at least " +
									std::to_string(kMinFitSamples) + " samples, got " +
									std::to_string(samples.size()));
	if (!(tau_lo > 0.0 && tau_lo < tau_hi && tau_hi < 1.0))
		throw DomainError("fit_quantile_match: need 0 < tau_lo < tau_hi < 1");
	for (double v : samples)
		if (!(v > 0.0) || !std::isfinite(v))
			throw DomainError("fit_quantile_match: samples must be positive and finite");

	std::sort(samples.begin(), samples.end());
	const double q_lo = empirical_quantile(samples, tau_lo);
	const double q_hi = empirical_quantile(samples, tau_hi);
	if (!(q_hi > q_lo))
		throw DegenerateSampleError(
			"fit_quantile_match: matched quantiles coincide (no spread)");

	const double z_lo = inv_norm_cdf(tau_lo);
	const double z_hi = inv_norm_cdf(tau_hi);
	const double sigma = (std::log(q_hi) - std::log(q_lo)) / (z_hi - z_lo);
	const double mu = std::log(q_lo) - z_lo * sigma;
	return {mu, sigma};
}

FittedLognormal city_model(const std::vector<double>& service_times_s) {
	return fit_quantile_match(service_times_s);
}

KringFit kring_model(const geo::HexCellId& cell,
					 const std::vector<geo::HexCellId>& delivery_cells,
					 const std::vector<double>& service_times_s, int k,
					 std::size_t min_n) {
	if (delivery_cells.empty())
		throw EmptyCollectionError("kring_model: no deliveries to pool from");
	if (delivery_cells.size() != service_times_s.size())
		throw LengthMismatchError("kring_model: cells and service times differ in length");
	if (k < 0) throw DomainError("kring_model: k must be non-negative");

	auto pool_within = [&](int radius) {
		std::vector<double> pooled;
		for (std::size_t i = 0; i < delivery_cells.size(); ++i)
			if (geo::hex_distance(delivery_cells[i], cell) <= radius)
				pooled.push_back(service_times_s[i]);
		return pooled;
	};

	// Widen the neighbourhood twice before giving up and using the whole city.
	const std::size_t need = std::max(min_n, kMinFitSamples);
	for (int radius = k; radius <= k + 2; ++radius) {
		std::vector<double> pooled = pool_within(radius);
		if (pooled.size() >= need) {
			try {
				FittedLognormal fit = fit_quantile_match(pooled);
				return {fit, radius, false, pooled.size()};
			} catch (const DegenerateSampleError&) {
				// all pooled values identical: treat like a thin sample and widen
			}
		}
	}
	FittedLognormal fit = city_model(service_times_s);
	return {fit, -1, true, service_times_s.size()};
}

}  // namespace lastmile::baselines
