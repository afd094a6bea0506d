#include <algorithm>
#include <cstddef>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "lastmile/baselines.hpp"
#include "lastmile/eval.hpp"
#include "lastmile/metrics.hpp"
#include "support/stats.hpp"

using namespace lastmile;
using eval::Corpus;
using eval::ExperimentConfig;
using eval::FeatureKind;
using eval::ModelKind;
using eval::Scheme;

namespace {

eval::CityData synth_city_data(const std::string& id, std::size_t n_cells,
							   std::size_t n_deliveries, double context, std::uint64_t seed) {
	ingest::SynthConfig cfg;
	cfg.city_id = id;
	cfg.n_cells = n_cells;
	cfg.n_deliveries = n_deliveries;
	cfg.context_effect = context;
	cfg.seed = seed;
	auto city = ingest::synth_city(cfg);
	eval::CityData out;
	out.tess = city.features.tess;
	out.counts = std::move(city.features);
	out.deliveries = std::move(city.deliveries);
	return out;
}

// Ground-truth log-location per cell works as a minimal informative embedding;
// the pipeline only looks feature rows up, it does not care where they came from.
void attach_truth_embeddings(eval::CityData& city, const std::string& id, std::uint64_t seed) {
	ingest::SynthConfig cfg;
	cfg.city_id = id;
	cfg.n_cells = city.counts.cells.size();
	cfg.n_deliveries = city.deliveries.size();
	cfg.seed = seed;
	const auto truth = ingest::synth_city(cfg).truth;
	city.embeddings.cells = city.counts.cells;
	city.embeddings.values = Matrix(city.counts.cells.size(), 1);
	for (std::size_t i = 0; i < truth.mu_true.size(); ++i)
		city.embeddings.values.at(i, 0) = truth.mu_true[i];
	city.embeddings.rebuild_index();
}

std::vector<geo::HexCellId> delivery_hexes(const eval::CityData& city) {
	std::vector<geo::HexCellId> hexes;
	hexes.reserve(city.deliveries.size());
	for (const auto& d : city.deliveries) hexes.push_back(d.cell);
	return hexes;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("enum names round trip and reject junk") {
	for (const auto* name : {"city", "kring3", "cps_geo", "lss_geo", "lss_osm"})
		CHECK(eval::to_string(eval::parse_model(name)) == name);
	for (const auto* name : {"embedding", "osm_counts"})
		CHECK(eval::to_string(eval::parse_features(name)) == name);
	for (const auto* name : {"city_specific", "transfer", "full"})
		CHECK(eval::to_string(eval::parse_scheme(name)) == name);
	CHECK_THROWS_AS(eval::parse_model("oracle"), ConfigError);
	CHECK_THROWS_AS(eval::parse_features("tags"), ConfigError);
	CHECK_THROWS_AS(eval::parse_scheme("pooled"), ConfigError);
}

TEST_CASE("hex_kfold partitions the unique hexes") {
	std::vector<geo::HexCellId> hexes;
	for (std::int32_t q = 0; q < 23; ++q) {
		hexes.push_back({q, -q, "t"});
		if (q % 3 == 0) hexes.push_back({q, -q, "t"});  // duplicates collapse
	}
	const auto plan = eval::hex_kfold(hexes, 4, 5);
	REQUIRE(plan.test_hexes.size() == 4);

	std::set<geo::HexCellId> seen;
	std::size_t total = 0, smallest = 1000, largest = 0;
	for (const auto& fold : plan.test_hexes) {
		CHECK(std::is_sorted(fold.begin(), fold.end()));
		total += fold.size();
		smallest = std::min(smallest, fold.size());
		largest = std::max(largest, fold.size());
		for (const auto& h : fold) CHECK(seen.insert(h).second);  // disjoint
	}
	CHECK(total == 23);
	CHECK(largest - smallest <= 1);

	const auto again = eval::hex_kfold(hexes, 4, 5);
	CHECK(again.test_hexes == plan.test_hexes);
	const auto other = eval::hex_kfold(hexes, 4, 6);
	CHECK(other.test_hexes != plan.test_hexes);

	CHECK_THROWS_AS(eval::hex_kfold({}, 2, 1), EmptyCollectionError);
	CHECK_THROWS_AS(eval::hex_kfold(hexes, 1, 1), ConfigError);
	CHECK_THROWS_AS(eval::hex_kfold(hexes, 24, 1), TooFewHexesError);
}

TEST_CASE("fold_split keeps held-out hexes out of the train side") {
	Corpus corpus;
	corpus.cities["alpha"] = synth_city_data("alpha", 36, 540, 1.0, 11);
	ExperimentConfig cfg;
	cfg.target_city = "alpha";
	const auto plan = eval::hex_kfold(delivery_hexes(corpus.at("alpha")), 5, 3);

	std::size_t test_total = 0;
	for (std::size_t f = 0; f < 5; ++f) {
		const auto split = eval::fold_split(corpus, cfg, plan, f);
		const std::unordered_set<geo::HexCellId> held(plan.test_hexes[f].begin(),
													  plan.test_hexes[f].end());
		CHECK(split.train.size() + split.test.size() == corpus.at("alpha").deliveries.size());
		for (const auto* d : split.train) CHECK(held.count(d->cell) == 0);
		for (const auto* d : split.test) CHECK(held.count(d->cell) == 1);
		test_total += split.test.size();
	}
	// Across folds every delivery is held out exactly once.
	CHECK(test_total == corpus.at("alpha").deliveries.size());
	CHECK_THROWS_AS(eval::fold_split(corpus, cfg, plan, 5), OutOfRangeError);
}

TEST_CASE("fold_split obeys the training scheme") {
	Corpus corpus;
	corpus.cities["alpha"] = synth_city_data("alpha", 30, 400, 1.0, 21);
	corpus.cities["beta"] = synth_city_data("beta", 30, 320, 1.0, 22);
	const std::size_t n_alpha = corpus.at("alpha").deliveries.size();
	const std::size_t n_beta = corpus.at("beta").deliveries.size();

	ExperimentConfig cfg;
	cfg.target_city = "alpha";
	const auto plan = eval::hex_kfold(delivery_hexes(corpus.at("alpha")), 4, 9);
	const auto is_beta = [](const ingest::DeliveryRecord* d) { return d->city_id == "beta"; };

	cfg.scheme = Scheme::city_specific;
	auto split = eval::fold_split(corpus, cfg, plan, 0);
	CHECK(std::none_of(split.train.begin(), split.train.end(), is_beta));
	CHECK(split.train.size() + split.test.size() == n_alpha);
	const std::size_t remainder = split.train.size();

	cfg.scheme = Scheme::transfer;
	split = eval::fold_split(corpus, cfg, plan, 0);
	CHECK(std::all_of(split.train.begin(), split.train.end(), is_beta));
	CHECK(split.train.size() == n_beta);

	cfg.scheme = Scheme::full;
	split = eval::fold_split(corpus, cfg, plan, 0);
	CHECK(split.train.size() == remainder + n_beta);

	Corpus lonely;
	lonely.cities["alpha"] = synth_city_data("alpha", 30, 400, 1.0, 21);
	cfg.scheme = Scheme::transfer;
	CHECK_THROWS_AS(eval::fold_split(lonely, cfg, plan, 0), InsufficientDataError);
}

TEST_CASE("city-model experiment equals a hand-rolled fold loop") {
	Corpus corpus;
	corpus.cities["alpha"] = synth_city_data("alpha", 30, 450, 1.2, 77);
	ExperimentConfig cfg;
	cfg.target_city = "alpha";
	cfg.model = ModelKind::city;
	cfg.k_folds = 3;
	cfg.seed = 4;
	cfg.coverage_level = 0.8;

	const auto report = eval::run_experiment(corpus, cfg);
	REQUIRE(report.fold_crps.size() == 3);
	CHECK(report.model == "city");
	CHECK(report.scheme == "city_specific");
	CHECK(report.features == "none");

	const auto plan = eval::hex_kfold(delivery_hexes(corpus.at("alpha")), 3, 4);
	for (std::size_t f = 0; f < 3; ++f) {
		const auto split = eval::fold_split(corpus, cfg, plan, f);
		std::vector<double> ys;
		for (const auto* d : split.train) ys.push_back(d->service_time_s);
		const auto fit = baselines::city_model(ys);
		double crps = 0.0, pb50 = 0.0, pb95 = 0.0, covered = 0.0, width = 0.0;
		for (const auto* d : split.test) {
			const double y = d->service_time_s;
			crps += metrics::crps_lognormal(fit.mu(), fit.sigma(), y);
			pb50 += metrics::pinball(y, fit.quantile(0.5), 0.5);
			pb95 += metrics::pinball(y, fit.quantile(0.95), 0.95);
			const double lo = fit.quantile(0.1), hi = fit.quantile(0.9);
			covered += (lo <= y && y <= hi) ? 1.0 : 0.0;
			width += hi - lo;
		}
		const auto n = static_cast<double>(split.test.size());
		CHECK(report.fold_crps[f] == doctest::Approx(crps / n).epsilon(1e-12));
		CHECK(report.fold_pinball_p50[f] == doctest::Approx(pb50 / n).epsilon(1e-12));
		CHECK(report.fold_pinball_p95[f] == doctest::Approx(pb95 / n).epsilon(1e-12));
		CHECK(report.fold_coverage[f] == doctest::Approx(covered / n).epsilon(1e-12));
		CHECK(report.fold_width[f] == doctest::Approx(width / n).epsilon(1e-12));
	}
	CHECK(report.crps.mean == doctest::Approx(testsupport::mean_of(report.fold_crps)));
	CHECK(report.crps.stddev == doctest::Approx(testsupport::sample_std(report.fold_crps)));

	// Same config, same numbers; reshuffled folds, different numbers.
	const auto again = eval::run_experiment(corpus, cfg);
	CHECK(again.fold_crps == report.fold_crps);
	cfg.seed = 5;
	CHECK(eval::run_experiment(corpus, cfg).fold_crps != report.fold_crps);
}

TEST_CASE("feature-driven models run end to end on a small city") {
	Corpus corpus;
	corpus.cities["alpha"] = synth_city_data("alpha", 36, 720, 1.5, 31);
	attach_truth_embeddings(corpus.cities["alpha"], "alpha", 31);

	ExperimentConfig cfg;
	cfg.target_city = "alpha";
	cfg.k_folds = 3;
	cfg.seed = 2;

	cfg.model = ModelKind::lss_osm;
	cfg.features = FeatureKind::osm_counts;
	cfg.lss.n_rounds = 30;
	cfg.lss.tree.max_depth = 2;
	const auto lss = eval::run_experiment(corpus, cfg);
	REQUIRE(lss.fold_crps.size() == 3);
	CHECK(lss.features == "osm_counts");
	for (double c : lss.fold_crps) CHECK(c > 0.0);
	for (double w : lss.fold_width) CHECK(w > 0.0);

	cfg.model = ModelKind::cps_geo;
	cfg.features = FeatureKind::embedding;
	cfg.gbt.n_trees = 25;
	cfg.gbt.tree.max_depth = 2;
	cfg.cps.n_bins = 3;
	cfg.cps.min_cal = 20;
	cfg.cal_fraction = 0.3;
	const auto cps = eval::run_experiment(corpus, cfg);
	REQUIRE(cps.fold_coverage.size() == 3);
	for (double c : cps.fold_coverage) {
		CHECK(c > 0.6);  // loose: three folds of a small city are noisy
		CHECK(c <= 1.0);
	}

	cfg.model = ModelKind::kring3;
	const auto kring = eval::run_experiment(corpus, cfg);
	REQUIRE(kring.fold_crps.size() == 3);
	// Pooling neighbours beats one global fit when districts really differ.
	cfg.model = ModelKind::city;
	const auto city = eval::run_experiment(corpus, cfg);
	CHECK(kring.crps.mean < city.crps.mean);
}

TEST_CASE("experiment config validation") {
	Corpus corpus;
	corpus.cities["alpha"] = synth_city_data("alpha", 30, 450, 1.0, 8);

	ExperimentConfig cfg;
	cfg.target_city = "nowhere";
	CHECK_THROWS_AS(eval::run_experiment(corpus, cfg), ConfigError);

	cfg.target_city = "alpha";
	cfg.coverage_level = 1.0;
	CHECK_THROWS_AS(eval::run_experiment(corpus, cfg), ConfigError);
	cfg.coverage_level = 0.9;
	cfg.cal_fraction = 0.6;
	CHECK_THROWS_AS(eval::run_experiment(corpus, cfg), ConfigError);
	cfg.cal_fraction = 0.25;
	cfg.kring_k = 0;
	CHECK_THROWS_AS(eval::run_experiment(corpus, cfg), ConfigError);
	cfg.kring_k = 3;

	cfg.scheme = Scheme::transfer;  // no source city present
	CHECK_THROWS_AS(eval::run_experiment(corpus, cfg), ConfigError);
	cfg.model = ModelKind::kring3;
	corpus.cities["beta"] = synth_city_data("beta", 30, 450, 1.0, 9);
	CHECK_THROWS_AS(eval::run_experiment(corpus, cfg), ConfigError);
	cfg.scheme = Scheme::city_specific;

	cfg.model = ModelKind::cps_geo;
	cfg.features = FeatureKind::osm_counts;
	CHECK_THROWS_AS(eval::run_experiment(corpus, cfg), ConfigError);
	cfg.model = ModelKind::lss_osm;
	cfg.features = FeatureKind::embedding;
	CHECK_THROWS_AS(eval::run_experiment(corpus, cfg), ConfigError);

	// Embedding models demand embeddings in every participating city.
	cfg.model = ModelKind::lss_geo;
	cfg.features = FeatureKind::embedding;
	CHECK_THROWS_AS(eval::run_experiment(corpus, cfg), ConfigError);

	Corpus empty_city;
	empty_city.cities["alpha"] = synth_city_data("alpha", 30, 450, 1.0, 8);
	empty_city.cities["alpha"].deliveries.clear();
	ExperimentConfig plain;
	plain.target_city = "alpha";
	CHECK_THROWS_AS(eval::run_experiment(empty_city, plain), NoDeliveriesError);
}

TEST_CASE("report JSON and per-fold CSV carry the exact fold values") {
	Corpus corpus;
	corpus.cities["alpha"] = synth_city_data("alpha", 30, 450, 1.0, 13);
	ExperimentConfig cfg;
	cfg.target_city = "alpha";
	cfg.k_folds = 3;
	const auto report = eval::run_experiment(corpus, cfg);

	testsupport::ScratchDir dir("evrep");
	eval::write_report_json(dir.path("report.json"), report, cfg);
	std::ifstream in(dir.path("report.json"));
	const auto j = nlohmann::json::parse(in);
	CHECK(j.at("model") == "city");
	CHECK(j.at("target_city") == "alpha");
	CHECK(j.at("k_folds").get<std::size_t>() == 3);
	CHECK(j.at("metrics").at("crps").at("mean").get<double>() ==
		  doctest::Approx(report.crps.mean));
	CHECK(j.at("metrics").at("coverage").at("std").get<double>() ==
		  doctest::Approx(report.coverage.stddev));
	REQUIRE(j.at("folds").size() == 3);
	for (std::size_t f = 0; f < 3; ++f) {
		CHECK(j.at("folds")[f].at("fold").get<std::size_t>() == f);
		CHECK(j.at("folds")[f].at("crps").get<double>() == doctest::Approx(report.fold_crps[f]));
	}

	eval::write_folds_csv(dir.path("folds.csv"), report);
	std::ifstream csv(dir.path("folds.csv"));
	std::string line;
	REQUIRE(std::getline(csv, line));
	CHECK(line == "fold,crps,pinball_p50,pinball_p95,coverage,interval_width");
	for (std::size_t f = 0; f < 3; ++f) {
		REQUIRE(std::getline(csv, line));
		std::istringstream row(line);
		std::string field;
		std::getline(row, field, ',');
		CHECK(std::stoul(field) == f);
		std::getline(row, field, ',');
		CHECK(std::stod(field) == report.fold_crps[f]);  // %.17g survives the trip
		std::getline(row, field, ',');
		CHECK(std::stod(field) == report.fold_pinball_p50[f]);
		std::getline(row, field, ',');
		CHECK(std::stod(field) == report.fold_pinball_p95[f]);
		std::getline(row, field, ',');
		CHECK(std::stod(field) == report.fold_coverage[f]);
		std::getline(row, field, ',');
		CHECK(std::stod(field) == report.fold_width[f]);
	}
	CHECK_FALSE(std::getline(csv, line));
}

TEST_CASE("exceedance rows are one-minus-cdf per threshold") {
	const baselines::FittedLognormal a(5.0, 0.5), b(5.5, 0.25);
	const std::vector<geo::HexCellId> cells{{0, 0, "t"}, {1, 0, "t"}};
	const std::vector<const PredictiveDistribution*> dists{&a, &b};
	const std::vector<double> thresholds{150.0, 300.0};

	const auto rows = eval::exceedance_map(cells, dists, thresholds);
	REQUIRE(rows.size() == 2);
	CHECK(rows[0].cell == cells[0]);
	CHECK(rows[0].probs[0] == doctest::Approx(1.0 - a.cdf(150.0)).epsilon(1e-15));
	CHECK(rows[0].probs[1] == doctest::Approx(1.0 - a.cdf(300.0)).epsilon(1e-15));
	CHECK(rows[1].probs[0] == doctest::Approx(1.0 - b.cdf(150.0)).epsilon(1e-15));
	for (const auto& row : rows)
		for (double p : row.probs) {
			CHECK(p >= 0.0);
			CHECK(p <= 1.0);
		}
	// Tighter sigma above the threshold pushes exceedance towards one.
	CHECK(rows[1].probs[0] > rows[0].probs[0]);

	CHECK_THROWS_AS(eval::exceedance_map(cells, {&a}, thresholds), LengthMismatchError);
	CHECK_THROWS_AS(eval::exceedance_map(cells, dists, {}), EmptyCollectionError);
	CHECK_THROWS_AS(eval::exceedance_map(cells, dists, {0.0}), DomainError);
}

TEST_CASE("exceedance geojson is a closed-polygon feature collection") {
	const geo::Tessellation tess("t", {45.0, 7.0});
	const baselines::FittedLognormal fit(5.0, 0.5);
	const std::vector<geo::HexCellId> cells{{2, -1, "t"}};
	const auto rows =
		eval::exceedance_map(cells, {&fit}, {150.0, 300.0, 600.0});

	testsupport::ScratchDir dir("evgeo");
	eval::write_exceedance_geojson(dir.path("map.geojson"), tess, rows, {150.0, 300.0, 600.0});
	std::ifstream in(dir.path("map.geojson"));
	const auto j = nlohmann::json::parse(in);
	CHECK(j.at("type") == "FeatureCollection");
	REQUIRE(j.at("features").size() == 1);
	const auto& feat = j.at("features")[0];
	CHECK(feat.at("type") == "Feature");
	CHECK(feat.at("geometry").at("type") == "Polygon");
	const auto& ring = feat.at("geometry").at("coordinates")[0];
	REQUIRE(ring.size() == 7);  // six corners, closed
	CHECK(ring.front() == ring.back());
	const auto poly = geo::cell_polygon(tess, cells[0]);
	CHECK(ring[0][0].get<double>() == doctest::Approx(poly[0].lon));
	CHECK(ring[0][1].get<double>() == doctest::Approx(poly[0].lat));
	const auto& props = feat.at("properties");
	CHECK(props.at("city_id") == "t");
	CHECK(props.at("q").get<int>() == 2);
	CHECK(props.at("r").get<int>() == -1);
	CHECK(props.at("p_150").get<double>() == doctest::Approx(rows[0].probs[0]));
	CHECK(props.at("p_300").get<double>() == doctest::Approx(rows[0].probs[1]));
	CHECK(props.at("p_600").get<double>() == doctest::Approx(rows[0].probs[2]));

	std::vector<eval::ExceedanceRow> ragged = rows;
	ragged[0].probs.pop_back();
	CHECK_THROWS_AS(
		eval::write_exceedance_geojson(dir.path("bad.geojson"), tess, ragged, {150.0, 300.0, 600.0}),
		LengthMismatchError);
}

}  // TEST_SUITE
