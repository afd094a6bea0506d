#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lastmile/baselines.hpp"
#include "lastmile/errors.hpp"
#include "lastmile/matrix.hpp"

namespace lastmile::boosting {

struct TreeParams {
	int max_depth = 4;
	double min_child_weight = 5.0;  // minimum hessian sum per child
	double lambda = 1.0;            // L2 on leaf values
};

// Binary regression tree over second-order statistics (g, h). Nodes are stored
// in a flat array; negative child index marks a leaf.
struct RegressionTree {
	struct Node {
		int feature = -1;
		double threshold = 0.0;  // x[feature] < threshold goes left
		int left = -1;
		int right = -1;
		double value = 0.0;  // leaf weight, only meaningful when left < 0
	};
	std::vector<Node> nodes;

	double predict(const double* x) const;
	bool is_stump() const { return nodes.size() == 1; }
};

// Exact greedy split search: gain = 1/2 [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)],
// candidate thresholds at midpoints of consecutive distinct values, split only
// when gain > 0; ties resolved toward the lowest feature index, then the
// lowest threshold. Leaf value is -G/(H+lambda).
RegressionTree tree_fit(const Matrix& x, const std::vector<double>& grad,
						const std::vector<double>& hess, const TreeParams& params);

struct GbtParams {
	std::size_t n_trees = 200;
	double learning_rate = 0.1;
	TreeParams tree;
};

// Squared-error gradient boosting: base_score = mean(y), g = pred - y, h = 1.
struct GbtEnsemble {
	double base_score = 0.0;
	double learning_rate = 0.1;
	std::vector<RegressionTree> trees;

	double predict(const double* x) const;
	std::vector<double> predict(const Matrix& x) const;
};

GbtEnsemble gbt_fit(const Matrix& x, const std::vector<double>& y, const GbtParams& params);

struct LssParams {
	std::size_t n_rounds = 200;  // alternating rounds; half go to each head
	double learning_rate = 0.1;
	TreeParams tree;
};

// Lognormal distributional boosting: two additive ensembles, one for mu and
// one for s = log(sigma), trained on the exact NLL derivatives and updated in
// strict alternation (even rounds mu, odd rounds s).
struct LssEnsemble {
	double base_mu = 0.0;
	double base_s = 0.0;
	double learning_rate = 0.1;
	std::vector<RegressionTree> mu_trees;
	std::vector<RegressionTree> s_trees;

	double predict_mu(const double* x) const;
	double predict_s(const double* x) const;
	baselines::FittedLognormal predict_distribution(const double* x) const;

	// Mean NLL of observations y under the current predictions.
	double mean_nll(const Matrix& x, const std::vector<double>& y) const;
};

LssEnsemble lss_fit(const Matrix& x, const std::vector<double>& y, const LssParams& params);

// Exact NLL derivatives for one observation; exposed for gradient tests.
struct LssDerivs {
	double g_mu = 0.0, h_mu = 0.0;  // d/dmu, d2/dmu2
	double g_s = 0.0, h_s = 0.0;    // d/ds, d2/ds2 (clamped at 1e-6)
};
LssDerivs lss_derivs(double y, double mu, double s);
double lss_nll(double y, double mu, double s);

// Checkpoints (JSON with a shape header).
void save_gbt(const std::string& path, const GbtEnsemble& m);
GbtEnsemble load_gbt(const std::string& path);
void save_lss(const std::string& path, const LssEnsemble& m);
LssEnsemble load_lss(const std::string& path);

}  // namespace lastmile::boosting
