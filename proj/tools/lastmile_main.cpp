#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lastmile/baselines.hpp"
#include "lastmile/boosting.hpp"
#include "lastmile/cluster.hpp"
#include "lastmile/conformal.hpp"
#include "lastmile/embed.hpp"
#include "lastmile/errors.hpp"
#include "lastmile/eval.hpp"
#include "lastmile/geo.hpp"
#include "lastmile/ingest.hpp"
#include "lastmile/metrics.hpp"
#include "lastmile/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

using namespace lastmile;

// ---------------------------------------------------------------------------
// shared plumbing

struct HyperOpts {
	std::size_t n_trees = 200;
	std::size_t n_rounds = 200;
	double boost_lr = 0.1;
	int max_depth = 4;
	double min_child_weight = 5.0;
	double reg_lambda = 1.0;
	std::size_t cps_bins = 5;
	std::size_t cps_min_cal = 50;
	double cal_fraction = 0.25;
	int kring_k = 3;
	bool kring_leaky = false;

	boosting::GbtParams gbt() const {
		boosting::GbtParams p;
		p.n_trees = n_trees;
		p.learning_rate = boost_lr;
		p.tree.max_depth = max_depth;
		p.tree.min_child_weight = min_child_weight;
		p.tree.lambda = reg_lambda;
		return p;
	}
	boosting::LssParams lss() const {
		boosting::LssParams p;
		p.n_rounds = n_rounds;
		p.learning_rate = boost_lr;
		p.tree.max_depth = max_depth;
		p.tree.min_child_weight = min_child_weight;
		p.tree.lambda = reg_lambda;
		return p;
	}
	conformal::CpsParams cps() const {
		conformal::CpsParams p;
		p.n_bins = cps_bins;
		p.min_cal = cps_min_cal;
		return p;
	}
};

void add_hyper_flags(CLI::App* cmd, HyperOpts& h) {
	cmd->add_option("--n-trees", h.n_trees, "boosting rounds for the point regressor");
	cmd->add_option("--n-rounds", h.n_rounds, "alternating rounds for distributional boosting");
	cmd->add_option("--boost-lr", h.boost_lr, "boosting learning rate");
	cmd->add_option("--max-depth", h.max_depth, "tree depth cap");
	cmd->add_option("--min-child-weight", h.min_child_weight, "minimum hessian mass per child");
	cmd->add_option("--reg-lambda", h.reg_lambda, "L2 regularization on leaf values");
	cmd->add_option("--cps-bins", h.cps_bins, "Mondrian categories");
	cmd->add_option("--cps-min-cal", h.cps_min_cal, "minimum calibration points per category");
	cmd->add_option("--cal-fraction", h.cal_fraction, "share of training data held for calibration");
	cmd->add_option("--kring-k", h.kring_k, "neighbourhood radius for the ring baseline");
	cmd->add_flag("--kring-leaky", h.kring_leaky,
				  "pool ring neighbours from all target stops, including held-out hexes");
}

std::vector<ingest::DeliveryRecord> load_deliveries(const std::string& path,
													const geo::Tessellation& tess) {
	ingest::DeliveryLoadStats stats;
	auto recs = ingest::load_deliveries_csv(path, {tess}, &stats);
	if (stats.n_rejected > 0) {
		std::cerr << path << ": kept " << stats.n_kept << " of " << stats.n_read << " rows, "
				  << stats.n_rejected << " rejected\n";
		for (const auto& r : stats.rejects) std::cerr << "  " << r << '\n';
	}
	return recs;
}

// Per-cell feature row for model fitting: embeddings or raw tag counts.
Matrix rows_for_cells(const std::vector<geo::HexCellId>& cells,
					  const ingest::RegionFeatureMatrix& counts,
					  const embed::EmbeddingMatrix* emb, bool use_embeddings) {
	const std::size_t dim = use_embeddings ? emb->values.cols : counts.vocab.size();
	Matrix x(cells.size(), dim);
	for (std::size_t i = 0; i < cells.size(); ++i) {
		if (use_embeddings) {
			const auto row = emb->row_of(cells[i]);
			if (!row)
				throw ValidationError("no embedding for cell (" + std::to_string(cells[i].q) +
									  ", " + std::to_string(cells[i].r) + ")");
			const double* src = emb->values.row(*row);
			std::copy(src, src + dim, x.row(i));
		} else {
			const auto row = counts.row_of(cells[i]);
			if (!row)
				throw ValidationError("no feature row for cell (" + std::to_string(cells[i].q) +
									  ", " + std::to_string(cells[i].r) + ")");
			for (std::size_t c = 0; c < dim; ++c)
				x.at(i, c) = static_cast<double>(counts.count(*row, c));
		}
	}
	return x;
}

std::vector<geo::HexCellId> delivery_cells(const std::vector<ingest::DeliveryRecord>& ds) {
	std::vector<geo::HexCellId> cells;
	cells.reserve(ds.size());
	for (const auto& d : ds) cells.push_back(d.cell);
	return cells;
}

std::vector<double> delivery_times(const std::vector<ingest::DeliveryRecord>& ds) {
	std::vector<double> ys;
	ys.reserve(ds.size());
	for (const auto& d : ds) ys.push_back(d.service_time_s);
	return ys;
}

void write_text(const fs::path& path, const std::string& body) {
	std::ofstream out(path);
	if (!out) throw IngestError("cannot open " + path.string() + " for writing");
	out << body;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOpts {
	std::string out_dir;
	ingest::SynthConfig cfg;
};

void run_synth(const SynthOpts& o) {
	fs::create_directories(o.out_dir);
	const auto city = ingest::synth_city(o.cfg);
	const fs::path dir(o.out_dir);
	ingest::write_features_json((dir / "features.json").string(), city.features);
	ingest::write_deliveries_csv((dir / "deliveries.csv").string(), city.deliveries);
	ingest::write_ground_truth_json((dir / "truth.json").string(), city.features.tess,
									city.features.cells, city.truth);
	std::cerr << "synth: " << city.features.cells.size() << " cells, " << city.deliveries.size()
			  << " deliveries -> " << o.out_dir << '\n';
}

// ---------------------------------------------------------------------------
// ingest

struct IngestOpts {
	std::string city_id;
	double origin_lat = 0.0, origin_lon = 0.0;
	double edge_m = geo::kDefaultEdgeM;
	std::string geojson_path, vocab_path, deliveries_path, out_dir;
};

void run_ingest(const IngestOpts& o) {
	fs::create_directories(o.out_dir);
	const geo::Tessellation tess(o.city_id, {o.origin_lat, o.origin_lon}, o.edge_m);
	const auto vocab = ingest::TagVocabulary::load(o.vocab_path);
	const auto features = ingest::load_tagged_geojson(o.geojson_path);

	std::vector<ingest::DeliveryRecord> deliveries;
	std::vector<geo::HexCellId> ensure;
	if (!o.deliveries_path.empty()) {
		deliveries = load_deliveries(o.deliveries_path, tess);
		ensure = delivery_cells(deliveries);
	}

	ingest::DropReport report;
	const auto matrix = ingest::build_feature_matrix(features, tess, vocab, &report, ensure);
	const fs::path dir(o.out_dir);
	ingest::write_features_json((dir / "features.json").string(), matrix);
	write_text(dir / "drop_report.json", ingest::drop_report_json(report) + "\n");
	if (!deliveries.empty())
		ingest::write_deliveries_csv((dir / "deliveries.csv").string(), deliveries);

	std::cerr << "ingest: " << matrix.cells.size() << " cells x " << vocab.size() << " tags";
	if (!deliveries.empty()) std::cerr << ", " << deliveries.size() << " deliveries";
	std::cerr << " -> " << o.out_dir << '\n';
}

// ---------------------------------------------------------------------------
// embed

struct EmbedOpts {
	std::string features_path, out_path, model_out, model_in;
	embed::EncoderConfig enc;
	embed::TrainConfig train;
};

void run_embed(const EmbedOpts& o) {
	auto m = ingest::read_features_json(o.features_path);

	embed::EncoderParams params;
	if (!o.model_in.empty()) {
		params = embed::EncoderParams::load(o.model_in);
	} else {
		embed::EncoderConfig cfg = o.enc;
		cfg.n_tags = m.vocab.size();
		cfg.validate();
		params = embed::EncoderParams(cfg, o.train.seed);

		std::vector<embed::HexPatch> patches;
		patches.reserve(m.cells.size());
		for (const auto& cell : m.cells)
			patches.push_back(embed::build_patch(m, cell, cfg.radius, cfg.log1p_inputs));

		const auto curve = embed::train(params, patches, o.train);
		std::cerr << "embed: " << patches.size() << " patches, loss " << curve.front() << " -> "
				  << curve.back() << " over " << curve.size() << " epochs\n";
	}

	const auto emb = embed::embed_cells(params, m);
	embed::write_embeddings_csv(o.out_path, emb);
	if (!o.model_out.empty()) params.save(o.model_out);
	std::cerr << "embed: wrote " << emb.cells.size() << "x" << emb.values.cols << " -> "
			  << o.out_path << '\n';
}

// ---------------------------------------------------------------------------
// cluster

struct ClusterOpts {
	std::string features_path, embeddings_path, deliveries_path, out_path, summary_path;
	std::size_t k = 4;
	std::string linkage = "ward";
	bool order_by_mean = false;
};

void run_cluster(const ClusterOpts& o) {
	const auto features = ingest::read_features_json(o.features_path);
	const std::string city = features.tess.city_id;
	const auto emb = embed::read_embeddings_csv(o.embeddings_path, city);

	const auto dendro = cluster::agglomerate(emb.values, o.k, cluster::parse_linkage(o.linkage));
	auto assign = cluster::assign_cells(emb.cells, dendro);

	std::vector<ingest::DeliveryRecord> deliveries;
	if (!o.deliveries_path.empty()) {
		deliveries = load_deliveries(o.deliveries_path, features.tess);
		assign = cluster::order_by_service_time(assign, deliveries, o.order_by_mean);
	}

	cluster::write_assignments_csv(o.out_path, assign, city);
	if (!o.summary_path.empty()) {
		const auto profiles = cluster::cluster_summary(assign, features, deliveries);
		cluster::write_summary_json(o.summary_path, profiles);
	}
	std::cerr << "cluster: " << assign.cells.size() << " cells into " << assign.k << " groups -> "
			  << o.out_path << '\n';
}

// ---------------------------------------------------------------------------
// fit: train one model on everything and persist a manifest

struct FitOpts {
	std::string model;
	std::string features_path, embeddings_path, deliveries_path, out_path;
	std::uint64_t seed = 0;
	bool seed_given = false;
	HyperOpts hyper;
};

void run_fit(const FitOpts& o) {
	const auto kind = eval::parse_model(o.model);
	const auto features = ingest::read_features_json(o.features_path);
	const auto deliveries = load_deliveries(o.deliveries_path, features.tess);
	if (deliveries.empty()) throw NoDeliveriesError("fit: no usable deliveries");

	const bool needs_emb = kind == eval::ModelKind::cps_geo || kind == eval::ModelKind::lss_geo;
	embed::EmbeddingMatrix emb;
	if (needs_emb) {
		if (o.embeddings_path.empty())
			throw ConfigError(o.model + " needs --embeddings (run the embed command first)");
		emb = embed::read_embeddings_csv(o.embeddings_path, features.tess.city_id);
	}

	ordered_json manifest{{"format", "lastmile-model"},
						  {"version", 1},
						  {"kind", o.model},
						  {"city_id", features.tess.city_id}};
	const fs::path out(o.out_path);
	const auto side_path = [&out](const char* suffix) {
		fs::path p = out;
		p.replace_extension(suffix);
		return p;
	};

	const auto ys = delivery_times(deliveries);
	switch (kind) {
		case eval::ModelKind::city: {
			const auto fit = baselines::city_model(ys);
			manifest["mu"] = fit.mu();
			manifest["sigma"] = fit.sigma();
			break;
		}
		case eval::ModelKind::kring3: {
			// Instance-based: the artifact carries the training stops themselves.
			json cells = json::array();
			for (const auto& d : deliveries) cells.push_back({d.cell.q, d.cell.r});
			manifest["k"] = o.hyper.kring_k;
			manifest["cells"] = std::move(cells);
			manifest["times"] = ys;
			break;
		}
		case eval::ModelKind::lss_geo:
		case eval::ModelKind::lss_osm: {
			const bool use_emb = kind == eval::ModelKind::lss_geo;
			const Matrix x = rows_for_cells(delivery_cells(deliveries), features,
											use_emb ? &emb : nullptr, use_emb);
			const auto model = boosting::lss_fit(x, ys, o.hyper.lss());
			const fs::path lss_file = side_path("lss.json");
			boosting::save_lss(lss_file.string(), model);
			manifest["features"] = use_emb ? "embedding" : "osm_counts";
			manifest["lss_file"] = lss_file.filename().string();
			break;
		}
		case eval::ModelKind::cps_geo: {
			if (!o.seed_given)
				throw ConfigError("cps_geo needs --seed for the calibration split");
			const Matrix x = rows_for_cells(delivery_cells(deliveries), features, &emb, true);

			std::vector<std::size_t> idx(deliveries.size());
			for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
			Rng rng(o.seed);
			rng.shuffle(idx);
			const auto n_cal = static_cast<std::size_t>(
				std::max(1.0, std::floor(o.hyper.cal_fraction * static_cast<double>(idx.size()))));
			if (n_cal >= idx.size())
				throw InsufficientDataError("fit: calibration split would consume everything");

			Matrix x_prop(idx.size() - n_cal, x.cols), x_cal(n_cal, x.cols);
			std::vector<double> y_prop, y_cal;
			for (std::size_t i = 0; i < idx.size(); ++i) {
				const double* src = x.row(idx[i]);
				if (i < n_cal) {
					std::copy(src, src + x.cols, x_cal.row(i));
					y_cal.push_back(ys[idx[i]]);
				} else {
					std::copy(src, src + x.cols, x_prop.row(i - n_cal));
					y_prop.push_back(ys[idx[i]]);
				}
			}

			const auto gbt = boosting::gbt_fit(x_prop, y_prop, o.hyper.gbt());
			const auto base = [&gbt](const double* row) { return gbt.predict(row); };
			const auto cps = conformal::CpsModel::calibrate(base, x_cal, y_cal, o.hyper.cps());

			const fs::path gbt_file = side_path("gbt.json");
			const fs::path cps_file = side_path("cps.json");
			boosting::save_gbt(gbt_file.string(), gbt);
			cps.save(cps_file.string());
			manifest["features"] = "embedding";
			manifest["seed"] = o.seed;
			manifest["gbt_file"] = gbt_file.filename().string();
			manifest["cps_file"] = cps_file.filename().string();
			break;
		}
	}

	write_text(out, manifest.dump(2) + "\n");
	std::cerr << "fit: " << o.model << " on " << deliveries.size() << " deliveries -> "
			  << o.out_path << '\n';
}

// ---------------------------------------------------------------------------
// map: exceedance probabilities for every cell of a feature matrix

struct MapOpts {
	std::string model_path, features_path, embeddings_path, out_path;
	std::vector<double> thresholds{150.0, 300.0, 600.0};
};

void run_map(const MapOpts& o) {
	std::ifstream in(o.model_path);
	if (!in) throw IngestError("cannot open " + o.model_path);
	json manifest;
	try {
		manifest = json::parse(in);
	} catch (const json::parse_error& e) {
		throw ParseError(o.model_path + ": " + e.what());
	}
	if (manifest.value("format", "") != "lastmile-model")
		throw SchemaError(o.model_path + ": not a model manifest");
	const auto kind = eval::parse_model(manifest.at("kind").get<std::string>());

	const auto features = ingest::read_features_json(o.features_path);
	const auto& cells = features.cells;
	const fs::path model_dir = fs::path(o.model_path).parent_path();

	std::vector<std::unique_ptr<PredictiveDistribution>> dists;
	dists.reserve(cells.size());

	switch (kind) {
		case eval::ModelKind::city: {
			const baselines::FittedLognormal fit(manifest.at("mu").get<double>(),
												 manifest.at("sigma").get<double>());
			for (std::size_t i = 0; i < cells.size(); ++i)
				dists.push_back(std::make_unique<baselines::FittedLognormal>(fit));
			break;
		}
		case eval::ModelKind::kring3: {
			const auto& city = features.tess.city_id;
			std::vector<geo::HexCellId> train_cells;
			for (const auto& qr : manifest.at("cells"))
				train_cells.push_back({qr.at(0).get<std::int32_t>(),
									   qr.at(1).get<std::int32_t>(), city});
			const auto times = manifest.at("times").get<std::vector<double>>();
			const int k = manifest.value("k", 3);
			for (const auto& cell : cells) {
				const auto fit = baselines::kring_model(cell, train_cells, times, k);
				dists.push_back(std::make_unique<baselines::FittedLognormal>(fit.dist));
			}
			break;
		}
		case eval::ModelKind::lss_geo:
		case eval::ModelKind::lss_osm: {
			const bool use_emb = kind == eval::ModelKind::lss_geo;
			embed::EmbeddingMatrix emb;
			if (use_emb) {
				if (o.embeddings_path.empty()) throw ConfigError("lss_geo needs --embeddings");
				emb = embed::read_embeddings_csv(o.embeddings_path, features.tess.city_id);
			}
			const auto model = boosting::load_lss(
				(model_dir / manifest.at("lss_file").get<std::string>()).string());
			const Matrix x = rows_for_cells(cells, features, use_emb ? &emb : nullptr, use_emb);
			for (std::size_t i = 0; i < cells.size(); ++i)
				dists.push_back(std::make_unique<baselines::FittedLognormal>(
					model.predict_distribution(x.row(i))));
			break;
		}
		case eval::ModelKind::cps_geo: {
			if (o.embeddings_path.empty()) throw ConfigError("cps_geo needs --embeddings");
			const auto emb = embed::read_embeddings_csv(o.embeddings_path, features.tess.city_id);
			const auto gbt = boosting::load_gbt(
				(model_dir / manifest.at("gbt_file").get<std::string>()).string());
			const auto cps = conformal::CpsModel::load(
				(model_dir / manifest.at("cps_file").get<std::string>()).string());
			const auto base = [&gbt](const double* row) { return gbt.predict(row); };
			const Matrix x = rows_for_cells(cells, features, &emb, true);
			for (std::size_t i = 0; i < cells.size(); ++i)
				dists.push_back(
					std::make_unique<conformal::CpsDistribution>(cps.predict(base, x.row(i))));
			break;
		}
	}

	std::vector<const PredictiveDistribution*> ptrs;
	ptrs.reserve(dists.size());
	for (const auto& d : dists) ptrs.push_back(d.get());
	const auto rows = eval::exceedance_map(cells, ptrs, o.thresholds);
	eval::write_exceedance_geojson(o.out_path, features.tess, rows, o.thresholds);
	std::cerr << "map: " << rows.size() << " cells -> " << o.out_path << '\n';
}

// ---------------------------------------------------------------------------
// eval: cross-validated experiment, config file + flag overrides

struct EvalOpts {
	std::string config_path;
	std::vector<std::string> city_dirs;
	std::string target_city, model = "city", scheme = "city_specific", features = "embedding";
	std::size_t k_folds = 5;
	std::uint64_t seed = 0;
	bool seed_given = false;
	double coverage = 0.9;
	std::string report_path, folds_csv_path;
	HyperOpts hyper;
};

void apply_config_json(EvalOpts& o, const CLI::App* cmd) {
	std::ifstream in(o.config_path);
	if (!in) throw IngestError("cannot open " + o.config_path);
	json cfg;
	try {
		cfg = json::parse(in);
	} catch (const json::parse_error& e) {
		throw ParseError(o.config_path + ": " + e.what());
	}

	// Flags win over the config file; only unset flags take config values.
	const auto absent = [&cmd](const char* flag) { return cmd->count(flag) == 0; };
	if (cfg.contains("cities") && absent("--city"))
		o.city_dirs = cfg.at("cities").get<std::vector<std::string>>();
	if (cfg.contains("target_city") && absent("--target"))
		o.target_city = cfg.at("target_city").get<std::string>();
	if (cfg.contains("model") && absent("--model")) o.model = cfg.at("model").get<std::string>();
	if (cfg.contains("scheme") && absent("--scheme"))
		o.scheme = cfg.at("scheme").get<std::string>();
	if (cfg.contains("features") && absent("--features"))
		o.features = cfg.at("features").get<std::string>();
	if (cfg.contains("k_folds") && absent("--k-folds"))
		o.k_folds = cfg.at("k_folds").get<std::size_t>();
	if (cfg.contains("seed") && absent("--seed")) {
		o.seed = cfg.at("seed").get<std::uint64_t>();
		o.seed_given = true;
	}
	if (cfg.contains("coverage_level") && absent("--coverage"))
		o.coverage = cfg.at("coverage_level").get<double>();
	if (cfg.contains("report") && absent("--report"))
		o.report_path = cfg.at("report").get<std::string>();
	if (cfg.contains("folds_csv") && absent("--folds-csv"))
		o.folds_csv_path = cfg.at("folds_csv").get<std::string>();

	const auto num = [&](const char* key, auto& slot, const char* flag) {
		if (cfg.contains(key) && absent(flag))
			slot = cfg.at(key).get<std::decay_t<decltype(slot)>>();
	};
	num("n_trees", o.hyper.n_trees, "--n-trees");
	num("n_rounds", o.hyper.n_rounds, "--n-rounds");
	num("boost_lr", o.hyper.boost_lr, "--boost-lr");
	num("max_depth", o.hyper.max_depth, "--max-depth");
	num("min_child_weight", o.hyper.min_child_weight, "--min-child-weight");
	num("reg_lambda", o.hyper.reg_lambda, "--reg-lambda");
	num("cps_bins", o.hyper.cps_bins, "--cps-bins");
	num("cps_min_cal", o.hyper.cps_min_cal, "--cps-min-cal");
	num("cal_fraction", o.hyper.cal_fraction, "--cal-fraction");
	num("kring_k", o.hyper.kring_k, "--kring-k");
	if (cfg.contains("kring_leaky") && absent("--kring-leaky"))
		o.hyper.kring_leaky = cfg.at("kring_leaky").get<bool>();
}

eval::Corpus load_corpus(const std::vector<std::string>& city_dirs, bool want_embeddings) {
	if (city_dirs.empty()) throw ConfigError("eval: no city directories given");
	eval::Corpus corpus;
	for (const auto& dir : city_dirs) {
		const fs::path d(dir);
		auto counts = ingest::read_features_json((d / "features.json").string());
		eval::CityData city{counts.tess, std::move(counts), {}, {}};
		const std::string id = city.tess.city_id;
		city.deliveries = load_deliveries((d / "deliveries.csv").string(), city.tess);
		const fs::path emb_path = d / "embeddings.csv";
		if (fs::exists(emb_path))
			city.embeddings = embed::read_embeddings_csv(emb_path.string(), id);
		else if (want_embeddings)
			throw ConfigError(dir + ": no embeddings.csv (run the embed command first)");
		if (corpus.cities.count(id)) throw ConfigError("duplicate city '" + id + "' in corpus");
		corpus.cities.emplace(id, std::move(city));
	}
	return corpus;
}

void run_eval(EvalOpts& o, const CLI::App* cmd) {
	if (!o.config_path.empty()) apply_config_json(o, cmd);
	if (!o.seed_given) throw ConfigError("eval: --seed is required (or 'seed' in the config)");
	if (o.report_path.empty()) throw ConfigError("eval: --report is required");

	eval::ExperimentConfig cfg;
	cfg.model = eval::parse_model(o.model);
	cfg.scheme = eval::parse_scheme(o.scheme);
	cfg.features = eval::parse_features(o.features);
	cfg.k_folds = o.k_folds;
	cfg.seed = o.seed;
	cfg.coverage_level = o.coverage;
	cfg.gbt = o.hyper.gbt();
	cfg.lss = o.hyper.lss();
	cfg.cps = o.hyper.cps();
	cfg.cal_fraction = o.hyper.cal_fraction;
	cfg.kring_k = o.hyper.kring_k;
	cfg.kring_leaky = o.hyper.kring_leaky;

	const bool wants_emb =
		(cfg.model == eval::ModelKind::cps_geo || cfg.model == eval::ModelKind::lss_geo);
	const auto corpus = load_corpus(o.city_dirs, wants_emb);

	if (o.target_city.empty()) {
		if (corpus.cities.size() != 1)
			throw ConfigError("eval: --target is required with a multi-city corpus");
		o.target_city = corpus.cities.begin()->first;
	}
	cfg.target_city = o.target_city;

	const auto report = eval::run_experiment(corpus, cfg);
	eval::write_report_json(o.report_path, report, cfg);
	if (!o.folds_csv_path.empty()) eval::write_folds_csv(o.folds_csv_path, report);

	std::cerr << "eval: " << report.model << "/" << report.scheme << " on " << cfg.target_city
			  << ": crps " << report.crps.mean << " +/- " << report.crps.stddev << " -> "
			  << o.report_path << '\n';
}

}  // namespace

int main(int argc, char** argv) {
	CLI::App app{"last-mile service-time toolkit: tessellate, embed, cluster, predict, evaluate"};
	app.require_subcommand(1);

	SynthOpts synth;
	auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic city with planted districts");
	cmd_synth->add_option("--out", synth.out_dir, "output directory")->required();
	cmd_synth->add_option("--city", synth.cfg.city_id, "city id");
	cmd_synth->add_option("--origin-lat", synth.cfg.origin.lat, "tessellation origin latitude");
	cmd_synth->add_option("--origin-lon", synth.cfg.origin.lon, "tessellation origin longitude");
	cmd_synth->add_option("--edge", synth.cfg.edge_m, "hexagon edge length in metres");
	cmd_synth->add_option("--cells", synth.cfg.n_cells, "number of hex cells");
	cmd_synth->add_option("--deliveries", synth.cfg.n_deliveries, "number of deliveries");
	cmd_synth->add_option("--context-effect", synth.cfg.context_effect,
						  "strength of the planted district signal");
	cmd_synth->add_option("--seed", synth.cfg.seed, "RNG seed")->required();
	cmd_synth->callback([&] { run_synth(synth); });

	IngestOpts ing;
	auto* cmd_ingest = app.add_subcommand("ingest", "GeoJSON + deliveries CSV -> feature matrix");
	cmd_ingest->add_option("--city", ing.city_id, "city id")->required();
	cmd_ingest->add_option("--origin-lat", ing.origin_lat, "tessellation origin latitude")->required();
	cmd_ingest->add_option("--origin-lon", ing.origin_lon, "tessellation origin longitude")->required();
	cmd_ingest->add_option("--edge", ing.edge_m, "hexagon edge length in metres");
	cmd_ingest->add_option("--geojson", ing.geojson_path, "tagged GeoJSON FeatureCollection")->required();
	cmd_ingest->add_option("--vocab", ing.vocab_path, "vocabulary file, one key=value per line")->required();
	cmd_ingest->add_option("--deliveries", ing.deliveries_path, "deliveries CSV to validate and store");
	cmd_ingest->add_option("--out", ing.out_dir, "output directory")->required();
	cmd_ingest->callback([&] { run_ingest(ing); });

	EmbedOpts emb;
	auto* cmd_embed = app.add_subcommand("embed", "train the hex autoencoder and export embeddings");
	cmd_embed->add_option("--features", emb.features_path, "features.json from ingest/synth")->required();
	cmd_embed->add_option("--out", emb.out_path, "embeddings CSV")->required();
	cmd_embed->add_option("--radius", emb.enc.radius, "patch radius in rings");
	cmd_embed->add_option("--conv-width", emb.enc.conv_width, "convolution channels");
	cmd_embed->add_option("--hidden-width", emb.enc.hidden_width, "dense hidden width");
	cmd_embed->add_option("--dim", emb.enc.bottleneck, "embedding dimension");
	cmd_embed->add_option("--epochs", emb.train.epochs, "training epochs");
	cmd_embed->add_option("--batch", emb.train.batch_size, "minibatch size");
	cmd_embed->add_option("--lr", emb.train.learning_rate, "SGD learning rate");
	cmd_embed->add_option("--momentum", emb.train.momentum, "SGD momentum");
	cmd_embed->add_option("--seed", emb.train.seed, "RNG seed")->required();
	cmd_embed->add_option("--model-out", emb.model_out, "save trained encoder parameters here");
	cmd_embed->add_option("--model-in", emb.model_in, "skip training, embed with these parameters");
	cmd_embed->callback([&] { run_embed(emb); });

	ClusterOpts clu;
	auto* cmd_cluster = app.add_subcommand("cluster", "agglomerate embeddings into region types");
	cmd_cluster->add_option("--features", clu.features_path, "features.json (tessellation + counts)")->required();
	cmd_cluster->add_option("--embeddings", clu.embeddings_path, "embeddings CSV")->required();
	cmd_cluster->add_option("--k", clu.k, "number of clusters")->required();
	cmd_cluster->add_option("--linkage", clu.linkage, "ward or average");
	cmd_cluster->add_option("--deliveries", clu.deliveries_path,
							"deliveries CSV; orders labels by service time");
	cmd_cluster->add_flag("--order-by-mean", clu.order_by_mean,
						  "order labels by mean instead of median");
	cmd_cluster->add_option("--out", clu.out_path, "assignments CSV")->required();
	cmd_cluster->add_option("--summary", clu.summary_path, "per-cluster profile JSON");
	cmd_cluster->callback([&] { run_cluster(clu); });

	FitOpts fit;
	auto* cmd_fit = app.add_subcommand("fit", "train one model on a full dataset");
	cmd_fit->add_option("--model", fit.model, "city, kring3, cps_geo, lss_geo or lss_osm")->required();
	cmd_fit->add_option("--features", fit.features_path, "features.json")->required();
	cmd_fit->add_option("--embeddings", fit.embeddings_path, "embeddings CSV (geo models)");
	cmd_fit->add_option("--deliveries", fit.deliveries_path, "deliveries CSV")->required();
	cmd_fit->add_option("--out", fit.out_path, "model manifest JSON")->required();
	cmd_fit->add_option("--seed", fit.seed, "RNG seed (calibration split)");
	add_hyper_flags(cmd_fit, fit.hyper);
	cmd_fit->callback([&] {
		fit.seed_given = cmd_fit->count("--seed") > 0;
		run_fit(fit);
	});

	EvalOpts evo;
	auto* cmd_eval = app.add_subcommand("eval", "cross-validated experiment -> report");
	cmd_eval->add_option("--config", evo.config_path, "experiment config JSON");
	cmd_eval->add_option("--city", evo.city_dirs,
						 "city directory with features.json, deliveries.csv[, embeddings.csv]");
	cmd_eval->add_option("--target", evo.target_city, "target city id");
	cmd_eval->add_option("--model", evo.model, "city, kring3, cps_geo, lss_geo or lss_osm");
	cmd_eval->add_option("--scheme", evo.scheme, "city_specific, transfer or full");
	cmd_eval->add_option("--features", evo.features, "embedding or osm_counts");
	cmd_eval->add_option("--k-folds", evo.k_folds, "cross-validation folds");
	cmd_eval->add_option("--seed", evo.seed, "RNG seed");
	cmd_eval->add_option("--coverage", evo.coverage, "central interval coverage level");
	cmd_eval->add_option("--report", evo.report_path, "report JSON path");
	cmd_eval->add_option("--folds-csv", evo.folds_csv_path, "per-fold scores CSV path");
	add_hyper_flags(cmd_eval, evo.hyper);
	cmd_eval->callback([&] {
		evo.seed_given = cmd_eval->count("--seed") > 0;
		run_eval(evo, cmd_eval);
	});

	MapOpts map_opts;
	auto* cmd_map = app.add_subcommand("map", "exceedance-probability GeoJSON from a fitted model");
	cmd_map->add_option("--model", map_opts.model_path, "model manifest from fit")->required();
	cmd_map->add_option("--features", map_opts.features_path, "features.json")->required();
	cmd_map->add_option("--embeddings", map_opts.embeddings_path, "embeddings CSV (geo models)");
	cmd_map->add_option("--thresholds", map_opts.thresholds, "seconds, e.g. 150 300 600");
	cmd_map->add_option("--out", map_opts.out_path, "output GeoJSON")->required();
	cmd_map->callback([&] { run_map(map_opts); });

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		const int code = app.exit(e);
		return code == 0 ? 0 : 1;  // bad usage is a validation error
	} catch (const lastmile::Error& e) {
		std::cerr << "error: " << e.what() << '\n';
		return 1;
	} catch (const std::exception& e) {
		std::cerr << "internal error: " << e.what() << '\n';
		return 2;
	}
	return 0;
}
