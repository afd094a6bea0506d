#include "lastmile/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

using nlohmann::json;
using nlohmann::ordered_json;

namespace lastmile::conformal {

CpsDistribution::CpsDistribution(double point, std::vector<double> sorted_atoms,
								 std::size_t category)
	: point_(point), atoms_(std::move(sorted_atoms)), category_(category) {
	if (atoms_.empty()) throw InsufficientDataError("CpsDistribution: no atoms");
	if (!std::is_sorted(atoms_.begin(), atoms_.end()))
		throw DomainError("CpsDistribution: atoms must be ascending");
}

double CpsDistribution::cdf(double y) const {
	if (!std::isfinite(y)) throw DomainError("CpsDistribution::cdf: y must be finite");
	const auto lo = std::lower_bound(atoms_.begin(), atoms_.end(), y);
	const auto hi = std::upper_bound(lo, atoms_.end(), y);
	const double below = static_cast<double>(lo - atoms_.begin());
	const double ties = static_cast<double>(hi - lo);
	const double n1 = static_cast<double>(atoms_.size()) + 1.0;
	// Off the atoms: plain rank/(n+1); on an atom: mid-rank of the tie block.
	if (ties == 0.0) return below / n1;
	return (below + 0.5 * (ties + 1.0)) / n1;
}

double CpsDistribution::quantile(double tau) const {
	if (!(tau > 0.0 && tau < 1.0))
		throw DomainError("CpsDistribution::quantile: tau must lie strictly in (0, 1)");
	const double n1 = static_cast<double>(atoms_.size()) + 1.0;
	auto rank = static_cast<long long>(std::ceil(tau * n1));  // 1-based
	rank = std::max(1LL, std::min(rank, static_cast<long long>(atoms_.size())));
	return atoms_[static_cast<std::size_t>(rank - 1)];
}

std::pair<double, double> CpsDistribution::interval(double coverage) const {
	if (!(coverage > 0.0 && coverage < 1.0))
		throw DomainError("CpsDistribution::interval: coverage must lie in (0, 1)");
	const double alpha = 1.0 - coverage;
	return {quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0)};
}

CpsModel CpsModel::calibrate(const BaseFn& base, const Matrix& x_cal,
							 const std::vector<double>& y_cal, const CpsParams& params) {
	if (!base) throw ConfigError("cps: base predictor is empty");
	if (x_cal.rows != y_cal.size())
		throw LengthMismatchError("cps: calibration rows != targets");
	if (params.n_bins == 0) throw ConfigError("cps: n_bins must be positive");
	if (y_cal.size() < params.n_bins * params.min_cal)
		throw InsufficientCalibrationError(
			"cps: need at least " + std::to_string(params.n_bins * params.min_cal) +
			" calibration points, got " + std::to_string(y_cal.size()));

	const std::size_t n = y_cal.size();
	std::vector<double> scores(n);
	for (std::size_t i = 0; i < n; ++i) {
		scores[i] = base(x_cal.row(i));
		if (!std::isfinite(scores[i]))
			throw DomainError("cps: base prediction is non-finite");
	}

	// Equal-frequency inner edges on the sorted scores; duplicates collapse.
	std::vector<double> sorted_scores(scores);
	std::sort(sorted_scores.begin(), sorted_scores.end());
	std::vector<double> edges;
	for (std::size_t b = 1; b < params.n_bins; ++b) {
		const std::size_t pos = b * n / params.n_bins;
		const double e = sorted_scores[std::min(pos, n - 1)];
		if (edges.empty() || e > edges.back()) edges.push_back(e);
	}

	auto bin_of = [&edges](double s) {
		return static_cast<std::size_t>(
			std::upper_bound(edges.begin(), edges.end(), s) - edges.begin());
	};

	std::vector<std::vector<double>> residuals(edges.size() + 1);
	for (std::size_t i = 0; i < n; ++i)
		residuals[bin_of(scores[i])].push_back(y_cal[i] - scores[i]);

	// Merge thin categories into a neighbour (leftmost deficient bin joins its
	// right neighbour; the last one joins its left) until all satisfy min_cal.
	while (residuals.size() > 1) {
		std::size_t thin = residuals.size();
		for (std::size_t b = 0; b < residuals.size(); ++b)
			if (residuals[b].size() < params.min_cal) {
				thin = b;
				break;
			}
		if (thin == residuals.size()) break;
		const std::size_t into = (thin + 1 < residuals.size()) ? thin + 1 : thin - 1;
		auto& dst = residuals[std::min(into, thin)];
		auto& src = residuals[std::max(into, thin)];
		dst.insert(dst.end(), src.begin(), src.end());
		residuals.erase(residuals.begin() + static_cast<std::ptrdiff_t>(std::max(into, thin)));
		edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(std::min(into, thin)));
	}

	CpsModel model;
	model.edges_ = std::move(edges);
	model.residuals_ = std::move(residuals);
	for (auto& r : model.residuals_) std::sort(r.begin(), r.end());
	return model;
}

std::size_t CpsModel::category_of(double y_hat) const {
	return static_cast<std::size_t>(
		std::upper_bound(edges_.begin(), edges_.end(), y_hat) - edges_.begin());
}

CpsDistribution CpsModel::predict_from_score(double y_hat) const {
	if (!std::isfinite(y_hat)) throw DomainError("cps: point prediction is non-finite");
	const std::size_t cat = category_of(y_hat);
	const auto& res = residuals_[cat];
	std::vector<double> atoms(res.size());
	for (std::size_t i = 0; i < res.size(); ++i) atoms[i] = y_hat + res[i];
	return {y_hat, std::move(atoms), cat};
}

CpsDistribution CpsModel::predict(const BaseFn& base, const double* x) const {
	if (!base) throw ConfigError("cps: base predictor is empty");
	return predict_from_score(base(x));
}

void CpsModel::save(const std::string& path) const {
	ordered_json j;
	j["format"] = "mondrian-cps";
	j["version"] = 1;
	j["edges"] = edges_;
	j["residuals"] = residuals_;
	std::ofstream out(path, std::ios::binary);
	if (!out) throw ParseError("cps checkpoint: cannot write '" + path + "'");
	out << j.dump() << "\n";
}

CpsModel CpsModel::load(const std::string& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw ParseError("cps checkpoint: cannot open '" + path + "'");
	json j;
	try {
		j = json::parse(in);
	} catch (const json::parse_error& e) {
		throw ParseError(path + ": malformed JSON at byte " + std::to_string(e.byte));
	}
	if (j.value("format", "") != "mondrian-cps" || j.value("version", 0) != 1)
		throw SchemaError(path + ": not a version-1 mondrian-cps checkpoint");
	CpsModel m;
	m.edges_ = j.at("edges").get<std::vector<double>>();
	m.residuals_ = j.at("residuals").get<std::vector<std::vector<double>>>();
	if (m.residuals_.size() != m.edges_.size() + 1)
		throw SchemaError(path + ": categories and edges disagree");
	for (auto& r : m.residuals_) {
		if (r.empty()) throw SchemaError(path + ": empty category");
		std::sort(r.begin(), r.end());
	}
	return m;
}

}  // namespace lastmile::conformal
