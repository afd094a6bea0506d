#include "lastmile/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

using nlohmann::json;
using nlohmann::ordered_json;

namespace lastmile::boosting {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kMinHess = 1e-6;

struct SplitChoice {
	bool found = false;
	int feature = -1;
	double threshold = 0.0;
	double gain = 0.0;
};

double leaf_value(double g, double h, double lambda) { return -g / (h + lambda); }

double score(double g, double h, double lambda) { return g * g / (h + lambda); }

// Exact greedy search over all features and midpoints for the sample set
// `idx`. Ties (equal gain) resolve to the lowest feature, then threshold.
SplitChoice best_split(const Matrix& x, const std::vector<double>& grad,
					   const std::vector<double>& hess, const std::vector<int>& idx,
					   const TreeParams& p) {
	double g_total = 0.0, h_total = 0.0;
	for (int i : idx) {
		g_total += grad[i];
		h_total += hess[i];
	}
	const double parent = score(g_total, h_total, p.lambda);

	SplitChoice best;
	std::vector<int> order(idx);
	for (std::size_t f = 0; f < x.cols; ++f) {
		std::sort(order.begin(), order.end(), [&](int a, int b) {
			const double va = x.at(a, f), vb = x.at(b, f);
			if (va != vb) return va < vb;
			return a < b;
		});
		double g_left = 0.0, h_left = 0.0;
		for (std::size_t k = 0; k + 1 < order.size(); ++k) {
			g_left += grad[order[k]];
			h_left += hess[order[k]];
			const double v = x.at(order[k], f);
			const double v_next = x.at(order[k + 1], f);
			if (v == v_next) continue;  // not a boundary between distinct values
			const double h_right = h_total - h_left;
			if (h_left < p.min_child_weight || h_right < p.min_child_weight) continue;
			const double gain =
				0.5 * (score(g_left, h_left, p.lambda) +
					   score(g_total - g_left, h_right, p.lambda) - parent);
			// Features and thresholds are scanned in ascending order, so
			// keeping the first best implements the lowest-feature, then
			// lowest-threshold tie rule.
			if (gain > 0.0 && (!best.found || gain > best.gain)) {
				best = {true, static_cast<int>(f), 0.5 * (v + v_next), gain};
			}
		}
	}
	return best;
}

int build_node(const Matrix& x, const std::vector<double>& grad,
			   const std::vector<double>& hess, std::vector<int>& idx, int depth,
			   const TreeParams& p, RegressionTree& tree) {
	double g = 0.0, h = 0.0;
	for (int i : idx) {
		g += grad[i];
		h += hess[i];
	}
	const int node_id = static_cast<int>(tree.nodes.size());
	tree.nodes.push_back({});
	tree.nodes[node_id].value = leaf_value(g, h, p.lambda);
	if (depth >= p.max_depth || idx.size() < 2) return node_id;

	const SplitChoice split = best_split(x, grad, hess, idx, p);
	if (!split.found) return node_id;

	std::vector<int> left_idx, right_idx;
	for (int i : idx)
		(x.at(i, split.feature) < split.threshold ? left_idx : right_idx).push_back(i);
	idx.clear();
	idx.shrink_to_fit();

	tree.nodes[node_id].feature = split.feature;
	tree.nodes[node_id].threshold = split.threshold;
	const int left = build_node(x, grad, hess, left_idx, depth + 1, p, tree);
	tree.nodes[node_id].left = left;
	const int right = build_node(x, grad, hess, right_idx, depth + 1, p, tree);
	tree.nodes[node_id].right = right;
	return node_id;
}

void check_training_input(const Matrix& x, std::size_t n_targets, const char* what) {
	if (x.rows == 0 || x.cols == 0)
		throw InsufficientDataError(std::string(what) + ": empty design matrix");
	if (x.rows != n_targets)
		throw LengthMismatchError(std::string(what) + ": rows != targets");
	for (double v : x.data)
		if (!std::isfinite(v))
			throw DomainError(std::string(what) + ": non-finite feature value");
}

json tree_to_json(const RegressionTree& t) {
	json nodes = json::array();
	for (const auto& n : t.nodes)
		nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
	return nodes;
}

RegressionTree tree_from_json(const json& j) {
	RegressionTree t;
	for (const auto& n : j) {
		RegressionTree::Node node;
		node.feature = n.at(0).get<int>();
		node.threshold = n.at(1).get<double>();
		node.left = n.at(2).get<int>();
		node.right = n.at(3).get<int>();
		node.value = n.at(4).get<double>();
		t.nodes.push_back(node);
	}
	if (t.nodes.empty()) throw SchemaError("tree checkpoint: empty node list");
	return t;
}

}  // namespace

double RegressionTree::predict(const double* x) const {
	int i = 0;
	while (nodes[i].left >= 0)
		i = x[nodes[i].feature] < nodes[i].threshold ? nodes[i].left : nodes[i].right;
	return nodes[i].value;
}

RegressionTree tree_fit(const Matrix& x, const std::vector<double>& grad,
						const std::vector<double>& hess, const TreeParams& params) {
	check_training_input(x, grad.size(), "tree_fit");
	if (grad.size() != hess.size())
		throw LengthMismatchError("tree_fit: grad and hess differ in length");
	for (double h : hess)
		if (h < 0.0 || !std::isfinite(h))
			throw DomainError("tree_fit: hessians must be finite and non-negative");
	if (params.max_depth < 0) throw ConfigError("tree_fit: max_depth must be >= 0");
	if (params.lambda < 0.0) throw ConfigError("tree_fit: lambda must be >= 0");

	RegressionTree tree;
	std::vector<int> idx(grad.size());
	std::iota(idx.begin(), idx.end(), 0);
	build_node(x, grad, hess, idx, 0, params, tree);
	return tree;
}

double GbtEnsemble::predict(const double* x) const {
	double s = base_score;
	for (const auto& t : trees) s += learning_rate * t.predict(x);
	return s;
}

std::vector<double> GbtEnsemble::predict(const Matrix& x) const {
	std::vector<double> out(x.rows);
	for (std::size_t i = 0; i < x.rows; ++i) out[i] = predict(x.row(i));
	return out;
}

GbtEnsemble gbt_fit(const Matrix& x, const std::vector<double>& y, const GbtParams& params) {
	check_training_input(x, y.size(), "gbt_fit");
	for (double v : y)
		if (!std::isfinite(v)) throw DomainError("gbt_fit: non-finite target");

	GbtEnsemble model;
	model.learning_rate = params.learning_rate;
	model.base_score = std::accumulate(y.begin(), y.end(), 0.0) /
					   static_cast<double>(y.size());

	std::vector<double> pred(y.size(), model.base_score);
	std::vector<double> grad(y.size()), hess(y.size(), 1.0);
	for (std::size_t round = 0; round < params.n_trees; ++round) {
		for (std::size_t i = 0; i < y.size(); ++i) grad[i] = pred[i] - y[i];
		RegressionTree tree = tree_fit(x, grad, hess, params.tree);
		for (std::size_t i = 0; i < y.size(); ++i)
			pred[i] += params.learning_rate * tree.predict(x.row(i));
		model.trees.push_back(std::move(tree));
	}
	return model;
}

double lss_nll(double y, double mu, double s) {
	if (!(y > 0.0)) throw DomainError("lss_nll: y must be positive");
	const double z = std::log(y) - mu;
	return std::log(y) + s + 0.5 * kLog2Pi + z * z / (2.0 * std::exp(2.0 * s));
}

LssDerivs lss_derivs(double y, double mu, double s) {
	if (!(y > 0.0)) throw DomainError("lss_derivs: y must be positive");
	const double z = std::log(y) - mu;
	const double inv_var = std::exp(-2.0 * s);
	LssDerivs d;
	d.g_mu = -z * inv_var;
	d.h_mu = inv_var;
	d.g_s = 1.0 - z * z * inv_var;
	d.h_s = std::max(kMinHess, 2.0 * z * z * inv_var);
	return d;
}

double LssEnsemble::predict_mu(const double* x) const {
	double v = base_mu;
	for (const auto& t : mu_trees) v += learning_rate * t.predict(x);
	return v;
}

double LssEnsemble::predict_s(const double* x) const {
	double v = base_s;
	for (const auto& t : s_trees) v += learning_rate * t.predict(x);
	return v;
}

baselines::FittedLognormal LssEnsemble::predict_distribution(const double* x) const {
	const double s = std::clamp(predict_s(x), -20.0, 20.0);
	return {predict_mu(x), std::exp(s)};
}

double LssEnsemble::mean_nll(const Matrix& x, const std::vector<double>& y) const {
	if (x.rows != y.size()) throw LengthMismatchError("mean_nll: rows != targets");
	double total = 0.0;
	for (std::size_t i = 0; i < y.size(); ++i)
		total += lss_nll(y[i], predict_mu(x.row(i)), predict_s(x.row(i)));
	return total / static_cast<double>(y.size());
}

LssEnsemble lss_fit(const Matrix& x, const std::vector<double>& y, const LssParams& params) {
	check_training_input(x, y.size(), "lss_fit");
	for (double v : y)
		if (!(v > 0.0) || !std::isfinite(v))
			throw DomainError("lss_fit: targets must be positive and finite");

	LssEnsemble model;
	model.learning_rate = params.learning_rate;

	// Base scores: moments of log(y).
	std::vector<double> logy(y.size());
	for (std::size_t i = 0; i < y.size(); ++i) logy[i] = std::log(y[i]);
	const double n = static_cast<double>(y.size());
	model.base_mu = std::accumulate(logy.begin(), logy.end(), 0.0) / n;
	double ss = 0.0;
	for (double v : logy) ss += (v - model.base_mu) * (v - model.base_mu);
	model.base_s = 0.5 * std::log(std::max(ss / n, 1e-12));

	std::vector<double> mu(y.size(), model.base_mu), s(y.size(), model.base_s);
	std::vector<double> grad(y.size()), hess(y.size());
	for (std::size_t round = 0; round < params.n_rounds; ++round) {
		const bool mu_round = (round % 2 == 0);
		for (std::size_t i = 0; i < y.size(); ++i) {
			const LssDerivs d = lss_derivs(y[i], mu[i], s[i]);
			grad[i] = mu_round ? d.g_mu : d.g_s;
			hess[i] = mu_round ? d.h_mu : d.h_s;
			if (!std::isfinite(grad[i]) || !std::isfinite(hess[i]))
				throw DivergenceError("lss_fit: non-finite derivative at round " +
									  std::to_string(round));
		}
		RegressionTree tree = tree_fit(x, grad, hess, params.tree);
		if (mu_round) {
			for (std::size_t i = 0; i < y.size(); ++i)
				mu[i] += params.learning_rate * tree.predict(x.row(i));
			model.mu_trees.push_back(std::move(tree));
		} else {
			for (std::size_t i = 0; i < y.size(); ++i)
				s[i] += params.learning_rate * tree.predict(x.row(i));
			model.s_trees.push_back(std::move(tree));
		}
	}
	return model;
}

void save_gbt(const std::string& path, const GbtEnsemble& m) {
	ordered_json j;
	j["format"] = "gbt";
	j["version"] = 1;
	j["base_score"] = m.base_score;
	j["learning_rate"] = m.learning_rate;
	json trees = json::array();
	for (const auto& t : m.trees) trees.push_back(tree_to_json(t));
	j["trees"] = std::move(trees);
	std::ofstream out(path, std::ios::binary);
	if (!out) throw ParseError("gbt checkpoint: cannot write '" + path + "'");
	out << j.dump() << "\n";
}

GbtEnsemble load_gbt(const std::string& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw ParseError("gbt checkpoint: cannot open '" + path + "'");
	json j;
	try {
		j = json::parse(in);
	} catch (const json::parse_error& e) {
		throw ParseError(path + ": malformed JSON at byte " + std::to_string(e.byte));
	}
	if (j.value("format", "") != "gbt" || j.value("version", 0) != 1)
		throw SchemaError(path + ": not a version-1 gbt checkpoint");
	GbtEnsemble m;
	m.base_score = j.at("base_score").get<double>();
	m.learning_rate = j.at("learning_rate").get<double>();
	for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
	return m;
}

void save_lss(const std::string& path, const LssEnsemble& m) {
	ordered_json j;
	j["format"] = "lss";
	j["version"] = 1;
	j["base_mu"] = m.base_mu;
	j["base_s"] = m.base_s;
	j["learning_rate"] = m.learning_rate;
	json mu_trees = json::array(), s_trees = json::array();
	for (const auto& t : m.mu_trees) mu_trees.push_back(tree_to_json(t));
	for (const auto& t : m.s_trees) s_trees.push_back(tree_to_json(t));
	j["mu_trees"] = std::move(mu_trees);
	j["s_trees"] = std::move(s_trees);
	std::ofstream out(path, std::ios::binary);
	if (!out) throw ParseError("lss checkpoint: cannot write '" + path + "'");
	out << j.dump() << "\n";
}

LssEnsemble load_lss(const std::string& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw ParseError("lss checkpoint: cannot open '" + path + "'");
	json j;
	try {
		j = json::parse(in);
	} catch (const json::parse_error& e) {
		throw ParseError(path + ": malformed JSON at byte " + std::to_string(e.byte));
	}
	if (j.value("format", "") != "lss" || j.value("version", 0) != 1)
		throw SchemaError(path + ": not a version-1 lss checkpoint");
	LssEnsemble m;
	m.base_mu = j.at("base_mu").get<double>();
	m.base_s = j.at("base_s").get<double>();
	m.learning_rate = j.at("learning_rate").get<double>();
	for (const auto& t : j.at("mu_trees")) m.mu_trees.push_back(tree_from_json(t));
	for (const auto& t : j.at("s_trees")) m.s_trees.push_back(tree_from_json(t));
	return m;
}

}  // namespace lastmile::boosting
