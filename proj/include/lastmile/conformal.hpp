#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "lastmile/distribution.hpp"
#include "lastmile/errors.hpp"
#include "lastmile/matrix.hpp"

namespace lastmile::conformal {

// Predictive step distribution of one test instance: atoms are the point
// prediction shifted by each calibration residual of the matched category.
// cdf follows the conformal (n+1)-denominator convention with mid-rank mass at
// ties; quantile(tau) is atom ceil(tau*(n+1)) (1-based, clamped).
class CpsDistribution : public PredictiveDistribution {
public:
	CpsDistribution(double point, std::vector<double> sorted_atoms, std::size_t category);

	double cdf(double y) const override;
	double quantile(double tau) const override;

	double point() const { return point_; }
	std::size_t category() const { return category_; }
	const std::vector<double>& atoms() const { return atoms_; }

	// Central interval at the given coverage level: [q((1-c)/2), q(1-(1-c)/2)].
	std::pair<double, double> interval(double coverage = 0.9) const;

private:
	double point_;
	std::vector<double> atoms_;  // ascending
	std::size_t category_;
};

struct CpsParams {
	std::size_t n_bins = 5;    // equal-frequency bins of the base prediction
	std::size_t min_cal = 50;  // minimum calibration points per category
};

// Mondrian conformal predictive system on top of an arbitrary point
// regressor. Categories are equal-frequency bins of the base prediction on
// the calibration set; thin bins are merged with a neighbour until every
// category holds at least min_cal residuals.
class CpsModel {
public:
	using BaseFn = std::function<double(const double*)>;

	static CpsModel calibrate(const BaseFn& base, const Matrix& x_cal,
							  const std::vector<double>& y_cal,
							  const CpsParams& params = {});

	CpsDistribution predict(const BaseFn& base, const double* x) const;
	CpsDistribution predict_from_score(double y_hat) const;

	std::size_t n_categories() const { return residuals_.size(); }
	const std::vector<double>& edges() const { return edges_; }  // ascending, inner edges
	const std::vector<std::vector<double>>& residuals() const { return residuals_; }

	std::size_t category_of(double y_hat) const;

	void save(const std::string& path) const;
	static CpsModel load(const std::string& path);

private:
	std::vector<double> edges_;                   // n_categories - 1 inner boundaries
	std::vector<std::vector<double>> residuals_;  // per category, ascending
};

}  // namespace lastmile::conformal
