#include "lastmile/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lastmile/baselines.hpp"

namespace lastmile::metrics {

namespace {

void require_finite(double v, const char* what) {
	if (!std::isfinite(v)) throw DomainError(std::string(what) + " must be finite");
}

// Mid-ranks of the pooled sample; `values` untouched, result aligned to it.
// Also accumulates sum(t^3 - t) over tie groups for tie corrections.
std::vector<double> mid_ranks(const std::vector<double>& values, double* tie_term) {
	const std::size_t n = values.size();
	std::vector<std::size_t> order(n);
	std::iota(order.begin(), order.end(), std::size_t{0});
	std::sort(order.begin(), order.end(),
			  [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

	std::vector<double> ranks(n, 0.0);
	double ties = 0.0;
	std::size_t i = 0;
	while (i < n) {
		std::size_t j = i;
		while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
		const double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based mid-rank
		for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mid;
		const double cnt = static_cast<double>(j - i + 1);
		ties += cnt * cnt * cnt - cnt;
		i = j + 1;
	}
	if (tie_term) *tie_term = ties;
	return ranks;
}

// Regularized lower incomplete gamma P(a, x) by series expansion (x < a+1).
double gamma_p_series(double a, double x) {
	double term = 1.0 / a;
	double sum = term;
	for (int n = 1; n < 1000; ++n) {
		term *= x / (a + n);
		sum += term;
		if (std::abs(term) < std::abs(sum) * 1e-16) break;
	}
	return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a, x) by Lentz continued fraction
// (x >= a+1).
double gamma_q_cf(double a, double x) {
	const double tiny = 1e-300;
	double b = x + 1.0 - a;
	double c = 1.0 / tiny;
	double d = 1.0 / b;
	double h = d;
	for (int i = 1; i < 1000; ++i) {
		const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
		b += 2.0;
		d = an * d + b;
		if (std::abs(d) < tiny) d = tiny;
		c = b + an / c;
		if (std::abs(c) < tiny) c = tiny;
		d = 1.0 / d;
		const double delta = d * c;
		h *= delta;
		if (std::abs(delta - 1.0) < 1e-16) break;
	}
	return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double pinball(double y, double q, double tau) {
	if (!(tau > 0.0 && tau < 1.0))
		throw DomainError("pinball: tau must lie strictly in (0, 1)");
	require_finite(y, "pinball: y");
	require_finite(q, "pinball: q");
	const double d = y - q;
	return d >= 0.0 ? tau * d : (tau - 1.0) * d;
}

double crps_step(std::vector<double> atoms, double y) {
	if (atoms.empty()) throw InsufficientDataError("crps_step: no atoms");
	require_finite(y, "crps_step: y");
	for (double a : atoms) require_finite(a, "crps_step: atom");
	std::sort(atoms.begin(), atoms.end());

	const double n = static_cast<double>(atoms.size());
	double total = 0.0;
	// Integrate F^2 on (-inf, y) and (1-F)^2 on (y, inf). F is 0 below the
	// first atom and 1 at/above the last, so only the span between atoms --
	// plus the run from the last atom (or first, symmetric) to y -- matters.
	auto seg = [&](double lo, double hi, double f) {
		// contribution of a constant-F segment [lo, hi] relative to y
		if (lo >= hi) return;
		if (hi <= y) {
			total += (hi - lo) * f * f;
		} else if (lo >= y) {
			total += (hi - lo) * (1.0 - f) * (1.0 - f);
		} else {
			total += (y - lo) * f * f + (hi - y) * (1.0 - f) * (1.0 - f);
		}
	};

	if (y < atoms.front()) seg(y, atoms.front(), 0.0);
	for (std::size_t i = 0; i + 1 < atoms.size(); ++i)
		seg(atoms[i], atoms[i + 1], static_cast<double>(i + 1) / n);
	if (y > atoms.back()) seg(atoms.back(), y, 1.0);
	return total;
}

double crps_quadrature(const PredictiveDistribution& dist, double y, std::size_t n_grid,
					   double tail_tau) {
	if (n_grid < 8) throw DomainError("crps_quadrature: grid too small");
	if (!(tail_tau > 0.0 && tail_tau < 0.5))
		throw DomainError("crps_quadrature: tail_tau must lie in (0, 0.5)");
	require_finite(y, "crps_quadrature: y");

	// Nodes on the quantile scale. For a continuous CDF, F at node i is its tau
	// exactly, so only the spliced-in observation needs a cdf evaluation.
	std::vector<double> zs, fs;
	zs.reserve(n_grid + 1);
	fs.reserve(n_grid + 1);
	for (std::size_t i = 0; i < n_grid; ++i) {
		const double tau = tail_tau + (1.0 - 2.0 * tail_tau) * static_cast<double>(i) /
										  static_cast<double>(n_grid - 1);
		zs.push_back(dist.quantile(tau));
		fs.push_back(tau);
	}
	if (y > zs.front() && y < zs.back()) {
		const auto pos = std::upper_bound(zs.begin(), zs.end(), y);
		const auto at = static_cast<std::size_t>(pos - zs.begin());
		zs.insert(pos, y);
		fs.insert(fs.begin() + static_cast<std::ptrdiff_t>(at), dist.cdf(y));
	}

	// The integrand is F^2 below the observation and (1-F)^2 above it, so the
	// segment ending at the spliced node and the one starting there see
	// different values; evaluate per segment, not per node.
	const auto sq = [](double v) { return v * v; };
	double total = 0.0;
	for (std::size_t i = 0; i + 1 < zs.size(); ++i) {
		const double a = zs[i], b = zs[i + 1];
		if (b <= a) continue;
		if (b <= y) {
			total += 0.5 * (sq(fs[i]) + sq(fs[i + 1])) * (b - a);
		} else if (a >= y) {
			total += 0.5 * (sq(1.0 - fs[i]) + sq(1.0 - fs[i + 1])) * (b - a);
		} else {
			const double fy = dist.cdf(y);
			total += 0.5 * (sq(fs[i]) + sq(fy)) * (y - a);
			total += 0.5 * (sq(1.0 - fy) + sq(1.0 - fs[i + 1])) * (b - y);
		}
	}
	// Outside the grid the integrand is bounded by tail_tau^2 except for the
	// strip between the grid and an extreme observation, where it is ~1.
	if (y < zs.front()) total += zs.front() - y;
	if (y > zs.back()) total += y - zs.back();
	return total;
}

double crps_lognormal(double mu, double sigma, double y) {
	baselines::FittedLognormal d(mu, sigma);
	return crps_quadrature(d, y);
}

IntervalStats interval_stats(const std::vector<double>& lo, const std::vector<double>& hi,
							 const std::vector<double>& y) {
	if (lo.size() != hi.size() || lo.size() != y.size())
		throw LengthMismatchError("interval_stats: lo/hi/y lengths differ");
	if (y.empty()) throw InsufficientDataError("interval_stats: empty input");
	double covered = 0.0, width = 0.0;
	for (std::size_t i = 0; i < y.size(); ++i) {
		if (hi[i] < lo[i]) throw DomainError("interval_stats: interval with hi < lo");
		if (y[i] >= lo[i] && y[i] <= hi[i]) covered += 1.0;
		width += hi[i] - lo[i];
	}
	const double n = static_cast<double>(y.size());
	return {covered / n, width / n};
}

KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
	if (groups.size() < 2) throw TooFewGroupsError("kruskal_wallis: need >= 2 groups");
	std::vector<double> pooled;
	for (const auto& g : groups) {
		if (g.empty()) throw TooFewSamplesError("kruskal_wallis: empty group");
		pooled.insert(pooled.end(), g.begin(), g.end());
	}
	const double n = static_cast<double>(pooled.size());
	if (pooled.size() < groups.size() + 1)
		throw TooFewSamplesError("kruskal_wallis: too few pooled observations");

	double tie_term = 0.0;
	const std::vector<double> ranks = mid_ranks(pooled, &tie_term);

	double h = 0.0;
	std::size_t offset = 0;
	for (const auto& g : groups) {
		double rank_sum = 0.0;
		for (std::size_t i = 0; i < g.size(); ++i) rank_sum += ranks[offset + i];
		offset += g.size();
		const double ni = static_cast<double>(g.size());
		const double mean_rank = rank_sum / ni;
		const double dev = mean_rank - 0.5 * (n + 1.0);
		h += ni * dev * dev;
	}
	h *= 12.0 / (n * (n + 1.0));

	const double correction = 1.0 - tie_term / (n * n * n - n);
	if (correction <= 0.0)
		throw DegenerateSampleError("kruskal_wallis: all pooled values identical");
	h /= correction;

	const double dof = static_cast<double>(groups.size() - 1);
	return {h, chi2_sf(h, dof), groups.size(), pooled.size()};
}

RankSumResult rank_sum_u(const std::vector<double>& a, const std::vector<double>& b) {
	if (a.empty() || b.empty())
		throw TooFewSamplesError("rank_sum_u: both samples must be non-empty");
	std::vector<double> pooled = a;
	pooled.insert(pooled.end(), b.begin(), b.end());
	const double na = static_cast<double>(a.size());
	const double nb = static_cast<double>(b.size());
	const double n = na + nb;

	double tie_term = 0.0;
	const std::vector<double> ranks = mid_ranks(pooled, &tie_term);
	double rank_sum_a = 0.0;
	for (std::size_t i = 0; i < a.size(); ++i) rank_sum_a += ranks[i];

	const double u = rank_sum_a - na * (na + 1.0) / 2.0;
	const double mean_u = na * nb / 2.0;
	const double var_u =
		na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
	if (var_u <= 0.0)
		// every pooled value identical: no evidence either way
		return {u, 0.0, 1.0};

	// Continuity-corrected two-sided normal approximation.
	const double diff = std::abs(u - mean_u);
	const double z = diff <= 0.5 ? 0.0 : (diff - 0.5) / std::sqrt(var_u);
	const double p = std::min(1.0, 2.0 * baselines::norm_cdf(-z));
	return {u, (u >= mean_u ? z : -z), p};
}

double chi2_sf(double x, double k) {
	if (!(k > 0.0)) throw DomainError("chi2_sf: dof must be positive");
	if (x < 0.0) throw DomainError("chi2_sf: x must be non-negative");
	if (x == 0.0) return 1.0;
	const double a = 0.5 * k, half_x = 0.5 * x;
	if (half_x < a + 1.0) return 1.0 - gamma_p_series(a, half_x);
	return gamma_q_cf(a, half_x);
}

FoldStat fold_stat(const std::vector<double>& per_fold) {
	if (per_fold.empty()) throw InsufficientDataError("fold_stat: no folds");
	const double n = static_cast<double>(per_fold.size());
	const double mean = std::accumulate(per_fold.begin(), per_fold.end(), 0.0) / n;
	if (per_fold.size() == 1) return {mean, 0.0};
	double ss = 0.0;
	for (double v : per_fold) ss += (v - mean) * (v - mean);
	return {mean, std::sqrt(ss / (n - 1.0))};
}

void EvalReport::finalize() {
	crps = fold_stat(fold_crps);
	pinball_p50 = fold_stat(fold_pinball_p50);
	pinball_p95 = fold_stat(fold_pinball_p95);
	coverage = fold_stat(fold_coverage);
	interval_width = fold_stat(fold_width);
	n_folds = fold_crps.size();
}

}  // namespace lastmile::metrics
