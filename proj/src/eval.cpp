#include "lastmile/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "lastmile/baselines.hpp"
#include "lastmile/errors.hpp"
#include "lastmile/rng.hpp"

using nlohmann::ordered_json;

namespace lastmile::eval {

ModelKind parse_model(const std::string& name) {
	if (name == "city") return ModelKind::city;
	if (name == "kring3") return ModelKind::kring3;
	if (name == "cps_geo") return ModelKind::cps_geo;
	if (name == "lss_geo") return ModelKind::lss_geo;
	if (name == "lss_osm") return ModelKind::lss_osm;
	throw ConfigError("unknown model '" + name +
					  "' (expected city, kring3, cps_geo, lss_geo or lss_osm)");
}

FeatureKind parse_features(const std::string& name) {
	if (name == "embedding") return FeatureKind::embedding;
	if (name == "osm_counts") return FeatureKind::osm_counts;
	throw ConfigError("unknown feature kind '" + name + "' (expected embedding or osm_counts)");
}

Scheme parse_scheme(const std::string& name) {
	if (name == "city_specific") return Scheme::city_specific;
	if (name == "transfer") return Scheme::transfer;
	if (name == "full") return Scheme::full;
	throw ConfigError("unknown scheme '" + name + "' (expected city_specific, transfer or full)");
}

std::string to_string(ModelKind m) {
	switch (m) {
		case ModelKind::city: return "city";
		case ModelKind::kring3: return "kring3";
		case ModelKind::cps_geo: return "cps_geo";
		case ModelKind::lss_geo: return "lss_geo";
		case ModelKind::lss_osm: return "lss_osm";
	}
	return "?";
}

std::string to_string(FeatureKind f) {
	return f == FeatureKind::embedding ? "embedding" : "osm_counts";
}

std::string to_string(Scheme s) {
	switch (s) {
		case Scheme::city_specific: return "city_specific";
		case Scheme::transfer: return "transfer";
		case Scheme::full: return "full";
	}
	return "?";
}

const CityData& Corpus::at(const std::string& city_id) const {
	auto it = cities.find(city_id);
	if (it == cities.end()) throw ConfigError("no city '" + city_id + "' in corpus");
	return it->second;
}

FoldPlan hex_kfold(std::vector<geo::HexCellId> hexes, std::size_t k, std::uint64_t seed) {
	std::sort(hexes.begin(), hexes.end());
	hexes.erase(std::unique(hexes.begin(), hexes.end()), hexes.end());
	if (hexes.empty()) throw EmptyCollectionError("hex_kfold: no hexes");
	if (k < 2) throw ConfigError("hex_kfold: need at least 2 folds");
	if (hexes.size() < k)
		throw TooFewHexesError("hex_kfold: " + std::to_string(hexes.size()) + " hexes for " +
							   std::to_string(k) + " folds");

	Rng rng(seed);
	rng.shuffle(hexes);

	const std::size_t n = hexes.size();
	FoldPlan plan;
	plan.test_hexes.resize(k);
	for (std::size_t f = 0; f < k; ++f) {
		const std::size_t lo = f * n / k;
		const std::size_t hi = (f + 1) * n / k;
		plan.test_hexes[f].assign(hexes.begin() + static_cast<std::ptrdiff_t>(lo),
								  hexes.begin() + static_cast<std::ptrdiff_t>(hi));
		std::sort(plan.test_hexes[f].begin(), plan.test_hexes[f].end());
	}
	return plan;
}

FoldSplit fold_split(const Corpus& corpus, const ExperimentConfig& cfg, const FoldPlan& plan,
					 std::size_t fold) {
	if (fold >= plan.test_hexes.size())
		throw OutOfRangeError("fold_split: fold " + std::to_string(fold) + " of " +
							  std::to_string(plan.test_hexes.size()));
	const CityData& target = corpus.at(cfg.target_city);
	const std::unordered_set<geo::HexCellId> held(plan.test_hexes[fold].begin(),
												  plan.test_hexes[fold].end());

	FoldSplit out;
	for (const auto& d : target.deliveries) {
		if (held.count(d.cell)) {
			out.test.push_back(&d);
		} else if (cfg.scheme != Scheme::transfer) {
			out.train.push_back(&d);
		}
	}
	if (cfg.scheme != Scheme::city_specific) {
		for (const auto& [id, city] : corpus.cities) {
			if (id == cfg.target_city) continue;
			for (const auto& d : city.deliveries) out.train.push_back(&d);
		}
	}
	if (out.train.empty()) throw InsufficientDataError("fold_split: no training deliveries");
	return out;
}

namespace {

// Resolves a delivery to the feature row of its cell, either the embedding or
// the raw tag counts of the delivery's own city.
class FeatureSource {
public:
	FeatureSource(const Corpus& corpus, FeatureKind kind, const std::vector<std::string>& city_ids)
		: corpus_(corpus), kind_(kind) {
		for (const auto& id : city_ids) {
			const CityData& city = corpus.at(id);
			std::size_t d;
			if (kind == FeatureKind::embedding) {
				if (city.embeddings.cells.empty())
					throw ConfigError("city '" + id + "' has no embeddings; run the embedding "
									  "stage first or switch to osm_counts features");
				d = city.embeddings.values.cols;
			} else {
				d = city.counts.vocab.size();
			}
			if (dim_ == 0) dim_ = d;
			if (d != dim_)
				throw ShapeError("feature width mismatch across cities: " + std::to_string(d) +
								 " vs " + std::to_string(dim_));
		}
		if (dim_ == 0) throw EmptyCollectionError("FeatureSource: no cities");
	}

	std::size_t dim() const { return dim_; }

	void fill(const ingest::DeliveryRecord& d, double* out) const {
		const CityData& city = corpus_.at(d.city_id);
		if (kind_ == FeatureKind::embedding) {
			const auto row = city.embeddings.row_of(d.cell);
			if (!row) throw ValidationError(missing(d));
			const double* src = city.embeddings.values.row(*row);
			std::copy(src, src + dim_, out);
		} else {
			const auto row = city.counts.row_of(d.cell);
			if (!row) throw ValidationError(missing(d));
			for (std::size_t c = 0; c < dim_; ++c)
				out[c] = static_cast<double>(city.counts.count(*row, c));
		}
	}

	Matrix matrix(const std::vector<const ingest::DeliveryRecord*>& rows) const {
		Matrix m(rows.size(), dim_);
		for (std::size_t i = 0; i < rows.size(); ++i) fill(*rows[i], m.row(i));
		return m;
	}

private:
	static std::string missing(const ingest::DeliveryRecord& d) {
		return "no feature row for cell (" + std::to_string(d.cell.q) + ", " +
			   std::to_string(d.cell.r) + ") of city '" + d.city_id + "'";
	}

	const Corpus& corpus_;
	FeatureKind kind_;
	std::size_t dim_ = 0;
};

struct Scored {
	double crps = 0.0;
	double q50 = 0.0;
	double q95 = 0.0;
	double lo = 0.0;
	double hi = 0.0;
};

using ScoreFn = std::function<Scored(const ingest::DeliveryRecord&)>;

Scored score_lognormal(const baselines::FittedLognormal& dist, double coverage, double y) {
	const double alpha = 1.0 - coverage;
	Scored s;
	s.crps = metrics::crps_lognormal(dist.mu(), dist.sigma(), y);
	s.q50 = dist.quantile(0.5);
	s.q95 = dist.quantile(0.95);
	s.lo = dist.quantile(alpha / 2.0);
	s.hi = dist.quantile(1.0 - alpha / 2.0);
	return s;
}

std::vector<double> train_times(const FoldSplit& split) {
	std::vector<double> ys;
	ys.reserve(split.train.size());
	for (const auto* d : split.train) ys.push_back(d->service_time_s);
	return ys;
}

ScoreFn make_city_scorer(const FoldSplit& split, double coverage) {
	const auto fit = baselines::city_model(train_times(split));
	return [fit, coverage](const ingest::DeliveryRecord& d) {
		return score_lognormal(fit, coverage, d.service_time_s);
	};
}

ScoreFn make_kring_scorer(const Corpus& corpus, const ExperimentConfig& cfg,
						  const FoldSplit& split) {
	// Neighbour pool: target-city training stops, or every target stop in the
	// documented leaky mode.
	auto cells = std::make_shared<std::vector<geo::HexCellId>>();
	auto times = std::make_shared<std::vector<double>>();
	if (cfg.kring_leaky) {
		for (const auto& d : corpus.at(cfg.target_city).deliveries) {
			cells->push_back(d.cell);
			times->push_back(d.service_time_s);
		}
	} else {
		for (const auto* d : split.train) {
			if (d->city_id != cfg.target_city) continue;
			cells->push_back(d->cell);
			times->push_back(d->service_time_s);
		}
	}
	if (cells->empty())
		throw InsufficientDataError("kring model: no target-city training deliveries");

	auto cache = std::make_shared<std::unordered_map<geo::HexCellId, baselines::KringFit>>();
	const int k = cfg.kring_k;
	const double coverage = cfg.coverage_level;
	return [=](const ingest::DeliveryRecord& d) {
		auto it = cache->find(d.cell);
		if (it == cache->end())
			it = cache->emplace(d.cell, baselines::kring_model(d.cell, *cells, *times, k)).first;
		return score_lognormal(it->second.dist, coverage, d.service_time_s);
	};
}

Scored score_cps(const conformal::CpsDistribution& dist, double coverage, double y) {
	Scored s;
	s.crps = metrics::crps_step(dist.atoms(), y);
	s.q50 = dist.quantile(0.5);
	s.q95 = dist.quantile(0.95);
	const auto [lo, hi] = dist.interval(coverage);
	s.lo = lo;
	s.hi = hi;
	return s;
}

ScoreFn make_cps_scorer(const FeatureSource& features, const ExperimentConfig& cfg,
						const FoldSplit& split, std::size_t fold) {
	// Proper/calibration split of the train fold, reseeded per fold so the
	// calibration draw is independent of the hex shuffle.
	std::vector<std::size_t> idx(split.train.size());
	for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
	Rng rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (fold + 1)));
	rng.shuffle(idx);

	const auto n_cal = static_cast<std::size_t>(
		std::max(1.0, std::floor(cfg.cal_fraction * static_cast<double>(idx.size()))));
	if (n_cal >= idx.size())
		throw InsufficientDataError("cps: calibration split would consume the whole train fold");

	std::vector<const ingest::DeliveryRecord*> proper, cal;
	proper.reserve(idx.size() - n_cal);
	cal.reserve(n_cal);
	for (std::size_t i = 0; i < idx.size(); ++i)
		(i < n_cal ? cal : proper).push_back(split.train[idx[i]]);

	const Matrix x_proper = features.matrix(proper);
	std::vector<double> y_proper;
	y_proper.reserve(proper.size());
	for (const auto* d : proper) y_proper.push_back(d->service_time_s);

	auto gbt = std::make_shared<boosting::GbtEnsemble>(boosting::gbt_fit(x_proper, y_proper, cfg.gbt));
	conformal::CpsModel::BaseFn base = [gbt](const double* x) { return gbt->predict(x); };

	const Matrix x_cal = features.matrix(cal);
	std::vector<double> y_cal;
	y_cal.reserve(cal.size());
	for (const auto* d : cal) y_cal.push_back(d->service_time_s);

	auto cps = std::make_shared<conformal::CpsModel>(
		conformal::CpsModel::calibrate(base, x_cal, y_cal, cfg.cps));

	const double coverage = cfg.coverage_level;
	const FeatureSource* feats = &features;
	return [=](const ingest::DeliveryRecord& d) {
		std::vector<double> x(feats->dim());
		feats->fill(d, x.data());
		return score_cps(cps->predict(base, x.data()), coverage, d.service_time_s);
	};
}

ScoreFn make_lss_scorer(const FeatureSource& features, const ExperimentConfig& cfg,
						const FoldSplit& split) {
	const Matrix x = features.matrix(split.train);
	auto lss = std::make_shared<boosting::LssEnsemble>(
		boosting::lss_fit(x, train_times(split), cfg.lss));
	const double coverage = cfg.coverage_level;
	const FeatureSource* feats = &features;
	return [=](const ingest::DeliveryRecord& d) {
		std::vector<double> xr(feats->dim());
		feats->fill(d, xr.data());
		return score_lognormal(lss->predict_distribution(xr.data()), coverage, d.service_time_s);
	};
}

void validate_config(const Corpus& corpus, const ExperimentConfig& cfg) {
	const CityData& target = corpus.at(cfg.target_city);
	if (target.deliveries.empty())
		throw NoDeliveriesError("target city '" + cfg.target_city + "' has no deliveries");
	if (!(cfg.coverage_level > 0.0 && cfg.coverage_level < 1.0))
		throw ConfigError("coverage_level must lie in (0, 1)");
	if (!(cfg.cal_fraction > 0.0 && cfg.cal_fraction <= 0.5))
		throw ConfigError("cal_fraction must lie in (0, 0.5]");
	if (cfg.kring_k < 1) throw ConfigError("kring_k must be at least 1");

	if (cfg.scheme != Scheme::city_specific) {
		bool any_source = false;
		for (const auto& [id, city] : corpus.cities)
			if (id != cfg.target_city && !city.deliveries.empty()) any_source = true;
		if (!any_source)
			throw ConfigError(std::string(to_string(cfg.scheme)) +
							  " scheme needs at least one source city with deliveries");
	}
	if (cfg.model == ModelKind::kring3 && cfg.scheme == Scheme::transfer)
		throw ConfigError("kring3 needs target-city training stops; transfer provides none");
	if ((cfg.model == ModelKind::cps_geo || cfg.model == ModelKind::lss_geo) &&
		cfg.features != FeatureKind::embedding)
		throw ConfigError(to_string(cfg.model) + " consumes embeddings; set features=embedding");
	if (cfg.model == ModelKind::lss_osm && cfg.features != FeatureKind::osm_counts)
		throw ConfigError("lss_osm consumes raw tag counts; set features=osm_counts");
}

bool uses_features(ModelKind m) {
	return m == ModelKind::cps_geo || m == ModelKind::lss_geo || m == ModelKind::lss_osm;
}

}  // namespace

metrics::EvalReport run_experiment(const Corpus& corpus, const ExperimentConfig& cfg) {
	validate_config(corpus, cfg);
	const CityData& target = corpus.at(cfg.target_city);

	std::vector<geo::HexCellId> hexes;
	hexes.reserve(target.deliveries.size());
	for (const auto& d : target.deliveries) hexes.push_back(d.cell);
	const FoldPlan plan = hex_kfold(std::move(hexes), cfg.k_folds, cfg.seed);

	std::unique_ptr<FeatureSource> features;
	if (uses_features(cfg.model)) {
		std::vector<std::string> ids{cfg.target_city};
		if (cfg.scheme != Scheme::city_specific)
			for (const auto& [id, city] : corpus.cities)
				if (id != cfg.target_city) ids.push_back(id);
		features = std::make_unique<FeatureSource>(corpus, cfg.features, ids);
	}

	metrics::EvalReport report;
	report.model = to_string(cfg.model);
	report.scheme = to_string(cfg.scheme);
	report.features = uses_features(cfg.model) ? to_string(cfg.features) : "none";
	report.n_folds = cfg.k_folds;

	for (std::size_t f = 0; f < cfg.k_folds; ++f) {
		try {
			const FoldSplit split = fold_split(corpus, cfg, plan, f);
			if (split.test.empty()) throw InsufficientDataError("no test deliveries");

			// Anti-contamination assertion: no training stop may sit in a
			// held-out hex. fold_split guarantees this by construction, but
			// the guarantee is cheap to re-check and worth enforcing.
			const std::unordered_set<geo::HexCellId> held(plan.test_hexes[f].begin(),
														  plan.test_hexes[f].end());
			for (const auto* d : split.train)
				if (held.count(d->cell))
					throw ValidationError("training delivery leaked from a held-out hex");

			ScoreFn score;
			switch (cfg.model) {
				case ModelKind::city: score = make_city_scorer(split, cfg.coverage_level); break;
				case ModelKind::kring3: score = make_kring_scorer(corpus, cfg, split); break;
				case ModelKind::cps_geo: score = make_cps_scorer(*features, cfg, split, f); break;
				case ModelKind::lss_geo:
				case ModelKind::lss_osm: score = make_lss_scorer(*features, cfg, split); break;
			}

			double crps = 0.0, pb50 = 0.0, pb95 = 0.0, covered = 0.0, width = 0.0;
			for (const auto* d : split.test) {
				const Scored s = score(*d);
				const double y = d->service_time_s;
				crps += s.crps;
				pb50 += metrics::pinball(y, s.q50, 0.5);
				pb95 += metrics::pinball(y, s.q95, 0.95);
				covered += (s.lo <= y && y <= s.hi) ? 1.0 : 0.0;
				width += s.hi - s.lo;
			}
			const auto n = static_cast<double>(split.test.size());
			report.fold_crps.push_back(crps / n);
			report.fold_pinball_p50.push_back(pb50 / n);
			report.fold_pinball_p95.push_back(pb95 / n);
			report.fold_coverage.push_back(covered / n);
			report.fold_width.push_back(width / n);
		} catch (const Error& e) {
			throw Error("fold " + std::to_string(f) + ": " + e.what());
		}
	}

	report.finalize();
	return report;
}

void write_report_json(const std::filesystem::path& path, const metrics::EvalReport& report,
					   const ExperimentConfig& cfg) {
	auto stat = [](const metrics::FoldStat& s) {
		return ordered_json{{"mean", s.mean}, {"std", s.stddev}};
	};
	ordered_json folds = ordered_json::array();
	for (std::size_t f = 0; f < report.fold_crps.size(); ++f) {
		folds.push_back({{"fold", f},
						 {"crps", report.fold_crps[f]},
						 {"pinball_p50", report.fold_pinball_p50[f]},
						 {"pinball_p95", report.fold_pinball_p95[f]},
						 {"coverage", report.fold_coverage[f]},
						 {"interval_width", report.fold_width[f]}});
	}
	ordered_json doc{{"model", report.model},
					 {"scheme", report.scheme},
					 {"features", report.features},
					 {"target_city", cfg.target_city},
					 {"k_folds", report.n_folds},
					 {"seed", cfg.seed},
					 {"coverage_level", cfg.coverage_level},
					 {"metrics",
					  ordered_json{{"crps", stat(report.crps)},
								   {"pinball_p50", stat(report.pinball_p50)},
								   {"pinball_p95", stat(report.pinball_p95)},
								   {"coverage", stat(report.coverage)},
								   {"interval_width", stat(report.interval_width)}}},
					 {"folds", std::move(folds)}};
	std::ofstream out(path);
	if (!out) throw IngestError("cannot open " + path.string() + " for writing");
	out << doc.dump(2) << '\n';
}

void write_folds_csv(const std::filesystem::path& path, const metrics::EvalReport& report) {
	std::ofstream out(path);
	if (!out) throw IngestError("cannot open " + path.string() + " for writing");
	out << "fold,crps,pinball_p50,pinball_p95,coverage,interval_width\n";
	char buf[512];
	for (std::size_t f = 0; f < report.fold_crps.size(); ++f) {
		std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", f,
					  report.fold_crps[f], report.fold_pinball_p50[f],
					  report.fold_pinball_p95[f], report.fold_coverage[f], report.fold_width[f]);
		out << buf;
	}
}

std::vector<ExceedanceRow> exceedance_map(const std::vector<geo::HexCellId>& cells,
										  const std::vector<const PredictiveDistribution*>& dists,
										  const std::vector<double>& thresholds) {
	if (cells.size() != dists.size())
		throw LengthMismatchError("exceedance_map: " + std::to_string(cells.size()) +
								  " cells vs " + std::to_string(dists.size()) + " distributions");
	if (thresholds.empty()) throw EmptyCollectionError("exceedance_map: no thresholds");
	for (double t : thresholds)
		if (!(t > 0.0)) throw DomainError("exceedance_map: thresholds must be positive");

	std::vector<ExceedanceRow> rows;
	rows.reserve(cells.size());
	for (std::size_t i = 0; i < cells.size(); ++i) {
		ExceedanceRow row;
		row.cell = cells[i];
		row.probs.reserve(thresholds.size());
		for (double t : thresholds) row.probs.push_back(dists[i]->exceedance(t));
		rows.push_back(std::move(row));
	}
	return rows;
}

void write_exceedance_geojson(const std::filesystem::path& path, const geo::Tessellation& tess,
							  const std::vector<ExceedanceRow>& rows,
							  const std::vector<double>& thresholds) {
	std::vector<std::string> keys;
	keys.reserve(thresholds.size());
	char buf[64];
	for (double t : thresholds) {
		std::snprintf(buf, sizeof buf, "p_%g", t);
		keys.emplace_back(buf);
	}

	ordered_json features = ordered_json::array();
	for (const auto& row : rows) {
		if (row.probs.size() != keys.size())
			throw LengthMismatchError("write_exceedance_geojson: ragged probability row");
		ordered_json ring = ordered_json::array();
		const auto poly = geo::cell_polygon(tess, row.cell);
		for (const auto& v : poly) ring.push_back({v.lon, v.lat});
		ring.push_back({poly.front().lon, poly.front().lat});

		ordered_json props{{"city_id", row.cell.city_id}, {"q", row.cell.q}, {"r", row.cell.r}};
		for (std::size_t i = 0; i < keys.size(); ++i) props[keys[i]] = row.probs[i];

		features.push_back(
			{{"type", "Feature"},
			 {"geometry",
			  ordered_json{{"type", "Polygon"}, {"coordinates", ordered_json::array({ring})}}},
			 {"properties", std::move(props)}});
	}

	ordered_json doc{{"type", "FeatureCollection"}, {"features", std::move(features)}};
	std::ofstream out(path);
	if (!out) throw IngestError("cannot open " + path.string() + " for writing");
	out << doc.dump() << '\n';
}

}  // namespace lastmile::eval
