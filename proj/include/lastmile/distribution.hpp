#pragma once

namespace lastmile {

// Contract shared by every predictive output in the library (parametric fits,
// boosted distributional predictions, conformal step functions). cdf must be
// monotone non-decreasing and quantile its generalized inverse; consumers rely
// on quantile(0.5) as the point prediction.
class PredictiveDistribution {
public:
	virtual ~PredictiveDistribution() = default;

	virtual double cdf(double y) const = 0;
	virtual double quantile(double tau) const = 0;  // tau in (0,1)

	double median() const { return quantile(0.5); }
	double exceedance(double t) const { return 1.0 - cdf(t); }
};

}  // namespace lastmile
