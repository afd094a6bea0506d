#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lastmile/distribution.hpp"
#include "lastmile/errors.hpp"

namespace lastmile::metrics {

// Pinball (quantile) loss of a single quantile prediction q at level tau.
double pinball(double y, double q, double tau);

// CRPS of a discrete predictive distribution given by its atoms (empirical
// measure, mass 1/n per atom): exact piecewise integral of the squared CDF
// below y and squared survival above y. Atoms need not be sorted.
double crps_step(std::vector<double> atoms, double y);

// CRPS of an arbitrary continuous distribution via quadrature on a quantile
// grid (n_grid points, tau in [tail_tau, 1 - tail_tau]). The truncated tails
// contribute O(tail_tau) * E[(X - q)+], which is far below the documented
// 0.1% relative accuracy for the distributions used here.
double crps_quadrature(const PredictiveDistribution& dist, double y,
					   std::size_t n_grid = 1024, double tail_tau = 1e-4);

// Convenience wrapper: CRPS of a lognormal(mu, sigma) prediction.
double crps_lognormal(double mu, double sigma, double y);

struct IntervalStats {
	double coverage = 0.0;    // fraction of observations inside their interval
	double mean_width = 0.0;  // mean upper - lower
};

IntervalStats interval_stats(const std::vector<double>& lo, const std::vector<double>& hi,
							 const std::vector<double>& y);

struct KruskalWallisResult {
	double h = 0.0;          // tie-corrected statistic
	double p_value = 1.0;    // chi-squared tail, k-1 dof
	std::size_t k = 0;       // number of groups
	std::size_t n = 0;       // pooled sample size
};

// Kruskal-Wallis one-way rank test with mid-rank ties and tie correction.
KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

struct RankSumResult {
	double u = 0.0;        // Mann-Whitney U for the first sample
	double z = 0.0;        // tie-corrected normal approximation
	double p_value = 1.0;  // two-sided
};

RankSumResult rank_sum_u(const std::vector<double>& a, const std::vector<double>& b);

// Upper tail of the chi-squared distribution with k degrees of freedom,
// via the regularized incomplete gamma function (series + continued fraction).
double chi2_sf(double x, double k);

// Mean and standard deviation per metric across evaluation folds.
struct FoldStat {
	double mean = 0.0;
	double stddev = 0.0;  // sample standard deviation (n-1); 0 for a single fold
};

FoldStat fold_stat(const std::vector<double>& per_fold);

// One row of an experiment report: a model evaluated under a scheme, with
// per-fold scores aggregated to mean +/- std.
struct EvalReport {
	std::string model;
	std::string scheme;
	std::string features;
	std::size_t n_folds = 0;
	FoldStat crps;
	FoldStat pinball_p50;
	FoldStat pinball_p95;
	FoldStat coverage;
	FoldStat interval_width;
	// Raw per-fold values backing the aggregates, in fold order.
	std::vector<double> fold_crps, fold_pinball_p50, fold_pinball_p95, fold_coverage,
		fold_width;

	void finalize();  // recompute the FoldStats from the per-fold vectors
};

}  // namespace lastmile::metrics
