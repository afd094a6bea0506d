#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "lastmile/baselines.hpp"
#include "lastmile/boosting.hpp"
#include "lastmile/cluster.hpp"
#include "lastmile/conformal.hpp"
#include "lastmile/embed.hpp"
#include "lastmile/errors.hpp"
#include "lastmile/eval.hpp"
#include "lastmile/geo.hpp"
#include "lastmile/ingest.hpp"
#include "lastmile/matrix.hpp"
#include "lastmile/metrics.hpp"

namespace py = pybind11;
using namespace lastmile;

namespace {

Matrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
	if (rows.empty()) return {};
	Matrix m(rows.size(), rows.front().size());
	for (std::size_t r = 0; r < rows.size(); ++r) {
		if (rows[r].size() != m.cols) throw ShapeError("ragged row list");
		std::copy(rows[r].begin(), rows[r].end(), m.row(r));
	}
	return m;
}

std::vector<std::vector<double>> matrix_to_rows(const Matrix& m) {
	std::vector<std::vector<double>> out(m.rows);
	for (std::size_t r = 0; r < m.rows; ++r) out[r].assign(m.row(r), m.row(r) + m.cols);
	return out;
}

conformal::CpsModel::BaseFn wrap_base(const std::function<double(std::vector<double>)>& fn,
									  std::size_t dim) {
	return [fn, dim](const double* x) { return fn(std::vector<double>(x, x + dim)); };
}

}  // namespace

PYBIND11_MODULE(_core, m) {
	m.doc() = "hexagon tessellation, region embeddings and service-time prediction";

	py::register_exception<Error>(m, "Error", PyExc_ValueError);

	// ---- matrix -----------------------------------------------------------
	py::class_<Matrix>(m, "Matrix")
		.def(py::init(&matrix_from_rows), py::arg("rows"))
		.def_readonly("rows", &Matrix::rows)
		.def_readonly("cols", &Matrix::cols)
		.def("at", [](const Matrix& mm, std::size_t r, std::size_t c) { return mm.at(r, c); })
		.def("tolist", &matrix_to_rows);

	// ---- geo ---------------------------------------------------------------
	auto geo_m = m.def_submodule("geo", "hex tessellation over an azimuthal plane");
	py::class_<geo::GeoPoint>(geo_m, "GeoPoint")
		.def(py::init<double, double>(), py::arg("lat"), py::arg("lon"))
		.def_readwrite("lat", &geo::GeoPoint::lat)
		.def_readwrite("lon", &geo::GeoPoint::lon)
		.def("__repr__", [](const geo::GeoPoint& p) {
			return "GeoPoint(" + std::to_string(p.lat) + ", " + std::to_string(p.lon) + ")";
		});
	py::class_<geo::PlanarXY>(geo_m, "PlanarXY")
		.def_readonly("x", &geo::PlanarXY::x)
		.def_readonly("y", &geo::PlanarXY::y);
	py::class_<geo::HexCellId>(geo_m, "HexCellId")
		.def(py::init([](std::int32_t q, std::int32_t r, std::string city) {
				 return geo::HexCellId{q, r, std::move(city)};
			 }),
			 py::arg("q"), py::arg("r"), py::arg("city_id"))
		.def_readonly("q", &geo::HexCellId::q)
		.def_readonly("r", &geo::HexCellId::r)
		.def_readonly("city_id", &geo::HexCellId::city_id)
		.def(py::self == py::self)
		.def(py::self < py::self)
		.def("__hash__", [](const geo::HexCellId& c) { return std::hash<geo::HexCellId>{}(c); })
		.def("__repr__", [](const geo::HexCellId& c) {
			return "HexCellId(" + std::to_string(c.q) + ", " + std::to_string(c.r) + ", '" +
				   c.city_id + "')";
		});
	py::class_<geo::Tessellation>(geo_m, "Tessellation")
		.def(py::init<std::string, geo::GeoPoint, double>(), py::arg("city_id"), py::arg("origin"),
			 py::arg("edge_m") = geo::kDefaultEdgeM)
		.def_readonly("city_id", &geo::Tessellation::city_id)
		.def_readonly("origin", &geo::Tessellation::origin)
		.def_readonly("edge_m", &geo::Tessellation::edge_m);
	geo_m.attr("DEFAULT_EDGE_M") = geo::kDefaultEdgeM;
	geo_m.def("project", &geo::project);
	geo_m.def("unproject", &geo::unproject);
	geo_m.def("point_to_cell", &geo::point_to_cell);
	geo_m.def("cell_center", &geo::cell_center);
	geo_m.def("cell_polygon", &geo::cell_polygon);
	geo_m.def("hex_distance", &geo::hex_distance);
	geo_m.def("k_ring", &geo::k_ring, py::arg("center"), py::arg("k"));

	// ---- ingest -------------------------------------------------------------
	auto ing_m = m.def_submodule("ingest", "tag vocabularies, feature matrices, deliveries");
	py::class_<ingest::TagVocabulary>(ing_m, "TagVocabulary")
		.def_static("load", &ingest::TagVocabulary::load, py::arg("path"))
		.def_static("from_subtags", &ingest::TagVocabulary::from_subtags, py::arg("subtags"))
		.def("__len__", &ingest::TagVocabulary::size)
		.def("subtags", &ingest::TagVocabulary::subtags);
	py::class_<ingest::RegionFeatureMatrix>(ing_m, "RegionFeatureMatrix")
		.def_readonly("tess", &ingest::RegionFeatureMatrix::tess)
		.def_readonly("cells", &ingest::RegionFeatureMatrix::cells)
		.def_property_readonly(
			"vocab", [](const ingest::RegionFeatureMatrix& r) { return r.vocab.subtags(); })
		.def("count", [](const ingest::RegionFeatureMatrix& r, std::size_t row, std::size_t tag) {
			return r.count(row, tag);
		})
		.def("row_of", &ingest::RegionFeatureMatrix::row_of);
	py::class_<ingest::DeliveryRecord>(ing_m, "DeliveryRecord")
		.def_readonly("city_id", &ingest::DeliveryRecord::city_id)
		.def_readonly("location", &ingest::DeliveryRecord::location)
		.def_readonly("service_time_s", &ingest::DeliveryRecord::service_time_s)
		.def_readonly("vehicle", &ingest::DeliveryRecord::vehicle)
		.def_readonly("route_id", &ingest::DeliveryRecord::route_id)
		.def_readonly("cell", &ingest::DeliveryRecord::cell);
	py::class_<ingest::SynthConfig>(ing_m, "SynthConfig")
		.def(py::init<>())
		.def_readwrite("city_id", &ingest::SynthConfig::city_id)
		.def_readwrite("origin", &ingest::SynthConfig::origin)
		.def_readwrite("edge_m", &ingest::SynthConfig::edge_m)
		.def_readwrite("n_cells", &ingest::SynthConfig::n_cells)
		.def_readwrite("n_deliveries", &ingest::SynthConfig::n_deliveries)
		.def_readwrite("context_effect", &ingest::SynthConfig::context_effect)
		.def_readwrite("seed", &ingest::SynthConfig::seed);
	py::class_<ingest::SynthGroundTruth>(ing_m, "SynthGroundTruth")
		.def_readonly("archetype", &ingest::SynthGroundTruth::archetype)
		.def_readonly("mu_true", &ingest::SynthGroundTruth::mu_true)
		.def_readonly("sigma_true", &ingest::SynthGroundTruth::sigma_true);
	py::class_<ingest::SynthCity>(ing_m, "SynthCity")
		.def_readonly("features", &ingest::SynthCity::features)
		.def_readonly("deliveries", &ingest::SynthCity::deliveries)
		.def_readonly("truth", &ingest::SynthCity::truth);
	ing_m.def("synth_city", &ingest::synth_city);
	ing_m.def("super_tag_names", &ingest::super_tag_names);
	ing_m.def("super_tag_rollup", &ingest::super_tag_rollup);
	ing_m.def("read_features_json", &ingest::read_features_json);
	ing_m.def("write_features_json", &ingest::write_features_json);
	ing_m.def(
		"load_deliveries_csv",
		[](const std::string& path, const std::vector<geo::Tessellation>& tess) {
			return ingest::load_deliveries_csv(path, tess);
		},
		py::arg("path"), py::arg("tessellations"));

	// ---- baselines -----------------------------------------------------------
	auto base_m = m.def_submodule("baselines", "lognormal city and neighbourhood baselines");
	base_m.def("inv_norm_cdf", &baselines::inv_norm_cdf);
	base_m.def("norm_cdf", &baselines::norm_cdf);
	py::class_<baselines::FittedLognormal>(base_m, "FittedLognormal")
		.def(py::init<double, double>(), py::arg("mu"), py::arg("sigma"))
		.def_property_readonly("mu", &baselines::FittedLognormal::mu)
		.def_property_readonly("sigma", &baselines::FittedLognormal::sigma)
		.def("cdf", &baselines::FittedLognormal::cdf)
		.def("quantile", &baselines::FittedLognormal::quantile)
		.def("mean", &baselines::FittedLognormal::mean);
	base_m.def("fit_quantile_match", &baselines::fit_quantile_match, py::arg("samples"),
			   py::arg("tau_lo") = 0.5, py::arg("tau_hi") = 0.9);
	base_m.def("city_model", &baselines::city_model);
	py::class_<baselines::KringFit>(base_m, "KringFit")
		.def_readonly("dist", &baselines::KringFit::dist)
		.def_readonly("k_used", &baselines::KringFit::k_used)
		.def_readonly("city_fallback", &baselines::KringFit::city_fallback)
		.def_readonly("n_samples", &baselines::KringFit::n_samples);
	base_m.def("kring_model", &baselines::kring_model, py::arg("cell"), py::arg("delivery_cells"),
			   py::arg("service_times_s"), py::arg("k") = 3,
			   py::arg("min_n") = baselines::kMinFitSamples);

	// ---- embed ----------------------------------------------------------------
	auto emb_m = m.def_submodule("embed", "hexagonal convolutional autoencoder");
	emb_m.def("patch_size", &embed::patch_size);
	emb_m.def("ring_of_index", &embed::ring_of_index);
	emb_m.def("location_weight", &embed::location_weight);
	emb_m.def("zip_nll", &embed::zip_nll);
	py::class_<embed::HexPatch>(emb_m, "HexPatch")
		.def_readonly("center", &embed::HexPatch::center)
		.def_readonly("radius", &embed::HexPatch::radius)
		.def_readonly("mask", &embed::HexPatch::mask);
	emb_m.def("build_patch", &embed::build_patch, py::arg("matrix"), py::arg("center"),
			  py::arg("radius") = 3, py::arg("log1p_scale") = true);
	py::class_<embed::EncoderConfig>(emb_m, "EncoderConfig")
		.def(py::init<>())
		.def_readwrite("radius", &embed::EncoderConfig::radius)
		.def_readwrite("n_tags", &embed::EncoderConfig::n_tags)
		.def_readwrite("conv_width", &embed::EncoderConfig::conv_width)
		.def_readwrite("hidden_width", &embed::EncoderConfig::hidden_width)
		.def_readwrite("bottleneck", &embed::EncoderConfig::bottleneck)
		.def_readwrite("log1p_inputs", &embed::EncoderConfig::log1p_inputs);
	py::class_<embed::EncoderParams>(emb_m, "EncoderParams")
		.def(py::init<const embed::EncoderConfig&, std::uint64_t>(), py::arg("config"),
			 py::arg("seed"))
		.def("n_params", &embed::EncoderParams::n_params)
		.def("save", &embed::EncoderParams::save)
		.def_static("load", &embed::EncoderParams::load);
	py::class_<embed::TrainConfig>(emb_m, "TrainConfig")
		.def(py::init<>())
		.def_readwrite("epochs", &embed::TrainConfig::epochs)
		.def_readwrite("learning_rate", &embed::TrainConfig::learning_rate)
		.def_readwrite("batch_size", &embed::TrainConfig::batch_size)
		.def_readwrite("momentum", &embed::TrainConfig::momentum)
		.def_readwrite("seed", &embed::TrainConfig::seed);
	emb_m.def("train", &embed::train, py::arg("params"), py::arg("patches"), py::arg("config"));
	py::class_<embed::EmbeddingMatrix>(emb_m, "EmbeddingMatrix")
		.def_readonly("cells", &embed::EmbeddingMatrix::cells)
		.def_readonly("values", &embed::EmbeddingMatrix::values)
		.def("row_of", &embed::EmbeddingMatrix::row_of);
	emb_m.def("embed_cells", &embed::embed_cells);
	emb_m.def("write_embeddings_csv", &embed::write_embeddings_csv);
	emb_m.def("read_embeddings_csv", &embed::read_embeddings_csv);

	// ---- cluster ----------------------------------------------------------------
	auto clu_m = m.def_submodule("cluster", "agglomerative clustering of embeddings");
	py::enum_<cluster::Linkage>(clu_m, "Linkage")
		.value("ward", cluster::Linkage::ward)
		.value("average", cluster::Linkage::average);
	py::class_<cluster::Dendrogram>(clu_m, "Dendrogram")
		.def_readonly("labels", &cluster::Dendrogram::labels)
		.def_readonly("k", &cluster::Dendrogram::k);
	clu_m.def("agglomerate", &cluster::agglomerate, py::arg("points"), py::arg("k"),
			  py::arg("linkage") = cluster::Linkage::ward);
	py::class_<cluster::ClusterAssignment>(clu_m, "ClusterAssignment")
		.def_readonly("cells", &cluster::ClusterAssignment::cells)
		.def_readonly("labels", &cluster::ClusterAssignment::labels)
		.def_readonly("k", &cluster::ClusterAssignment::k);
	clu_m.def("assign_cells", &cluster::assign_cells);
	clu_m.def("order_by_service_time", &cluster::order_by_service_time, py::arg("assignment"),
			  py::arg("deliveries"), py::arg("use_mean") = false);

	// ---- boosting ------------------------------------------------------------
	auto boo_m = m.def_submodule("boosting", "gradient-boosted point and distribution models");
	py::class_<boosting::TreeParams>(boo_m, "TreeParams")
		.def(py::init<>())
		.def_readwrite("max_depth", &boosting::TreeParams::max_depth)
		.def_readwrite("min_child_weight", &boosting::TreeParams::min_child_weight)
		.def_readwrite("lambda_", &boosting::TreeParams::lambda);
	py::class_<boosting::GbtParams>(boo_m, "GbtParams")
		.def(py::init<>())
		.def_readwrite("n_trees", &boosting::GbtParams::n_trees)
		.def_readwrite("learning_rate", &boosting::GbtParams::learning_rate)
		.def_readwrite("tree", &boosting::GbtParams::tree);
	py::class_<boosting::GbtEnsemble>(boo_m, "GbtEnsemble")
		.def("predict",
			 [](const boosting::GbtEnsemble& g, const std::vector<double>& x) {
				 return g.predict(x.data());
			 })
		.def("predict_all",
			 [](const boosting::GbtEnsemble& g, const Matrix& x) { return g.predict(x); })
		.def("save", [](const boosting::GbtEnsemble& g, const std::string& p) {
			boosting::save_gbt(p, g);
		})
		.def_static("load", &boosting::load_gbt);
	boo_m.def("gbt_fit", &boosting::gbt_fit, py::arg("x"), py::arg("y"), py::arg("params"));
	py::class_<boosting::LssParams>(boo_m, "LssParams")
		.def(py::init<>())
		.def_readwrite("n_rounds", &boosting::LssParams::n_rounds)
		.def_readwrite("learning_rate", &boosting::LssParams::learning_rate)
		.def_readwrite("tree", &boosting::LssParams::tree);
	py::class_<boosting::LssEnsemble>(boo_m, "LssEnsemble")
		.def("predict_mu",
			 [](const boosting::LssEnsemble& l, const std::vector<double>& x) {
				 return l.predict_mu(x.data());
			 })
		.def("predict_s",
			 [](const boosting::LssEnsemble& l, const std::vector<double>& x) {
				 return l.predict_s(x.data());
			 })
		.def("predict_distribution",
			 [](const boosting::LssEnsemble& l, const std::vector<double>& x) {
				 return l.predict_distribution(x.data());
			 })
		.def("mean_nll", &boosting::LssEnsemble::mean_nll)
		.def("save", [](const boosting::LssEnsemble& l, const std::string& p) {
			boosting::save_lss(p, l);
		})
		.def_static("load", &boosting::load_lss);
	boo_m.def("lss_fit", &boosting::lss_fit, py::arg("x"), py::arg("y"), py::arg("params"));
	boo_m.def("lss_nll", &boosting::lss_nll);

	// ---- conformal -------------------------------------------------------------
	auto con_m = m.def_submodule("conformal", "Mondrian conformal predictive system");
	py::class_<conformal::CpsParams>(con_m, "CpsParams")
		.def(py::init<>())
		.def_readwrite("n_bins", &conformal::CpsParams::n_bins)
		.def_readwrite("min_cal", &conformal::CpsParams::min_cal);
	py::class_<conformal::CpsDistribution>(con_m, "CpsDistribution")
		.def("cdf", &conformal::CpsDistribution::cdf)
		.def("quantile", &conformal::CpsDistribution::quantile)
		.def("interval", &conformal::CpsDistribution::interval, py::arg("coverage") = 0.9)
		.def_property_readonly("point", &conformal::CpsDistribution::point)
		.def_property_readonly("category", &conformal::CpsDistribution::category)
		.def_property_readonly("atoms", &conformal::CpsDistribution::atoms);
	py::class_<conformal::CpsModel>(con_m, "CpsModel")
		.def_static(
			"calibrate",
			[](const std::function<double(std::vector<double>)>& base, const Matrix& x_cal,
			   const std::vector<double>& y_cal, const conformal::CpsParams& params) {
				return conformal::CpsModel::calibrate(wrap_base(base, x_cal.cols), x_cal, y_cal,
													  params);
			},
			py::arg("base"), py::arg("x_cal"), py::arg("y_cal"),
			py::arg("params") = conformal::CpsParams{})
		.def("predict",
			 [](const conformal::CpsModel& cps,
				const std::function<double(std::vector<double>)>& base,
				const std::vector<double>& x) {
				 return cps.predict(wrap_base(base, x.size()), x.data());
			 })
		.def("predict_from_score", &conformal::CpsModel::predict_from_score)
		.def("n_categories", &conformal::CpsModel::n_categories)
		.def("save", &conformal::CpsModel::save)
		.def_static("load", &conformal::CpsModel::load);

	// ---- metrics ----------------------------------------------------------------
	auto met_m = m.def_submodule("metrics", "distributional scores and rank tests");
	met_m.def("pinball", &metrics::pinball, py::arg("y"), py::arg("q"), py::arg("tau"));
	met_m.def("crps_step", &metrics::crps_step, py::arg("atoms"), py::arg("y"));
	met_m.def("crps_lognormal", &metrics::crps_lognormal, py::arg("mu"), py::arg("sigma"),
			  py::arg("y"));
	met_m.def("chi2_sf", &metrics::chi2_sf);
	py::class_<metrics::KruskalWallisResult>(met_m, "KruskalWallisResult")
		.def_readonly("h", &metrics::KruskalWallisResult::h)
		.def_readonly("p_value", &metrics::KruskalWallisResult::p_value)
		.def_readonly("k", &metrics::KruskalWallisResult::k)
		.def_readonly("n", &metrics::KruskalWallisResult::n);
	met_m.def("kruskal_wallis", &metrics::kruskal_wallis);
	py::class_<metrics::RankSumResult>(met_m, "RankSumResult")
		.def_readonly("u", &metrics::RankSumResult::u)
		.def_readonly("p_value", &metrics::RankSumResult::p_value)
		.def_readonly("z", &metrics::RankSumResult::z);
	met_m.def("rank_sum_u", &metrics::rank_sum_u);

	// ---- eval ---------------------------------------------------------------------
	auto ev_m = m.def_submodule("eval", "hex-fold cross-validation experiments");
	ev_m.def(
		"hex_kfold",
		[](const std::vector<geo::HexCellId>& hexes, std::size_t k, std::uint64_t seed) {
			return eval::hex_kfold(hexes, k, seed).test_hexes;
		},
		py::arg("hexes"), py::arg("k"), py::arg("seed"));
	py::class_<eval::CityData>(ev_m, "CityData")
		.def(py::init([](const ingest::RegionFeatureMatrix& counts,
						 const embed::EmbeddingMatrix& embeddings,
						 const std::vector<ingest::DeliveryRecord>& deliveries) {
				 return eval::CityData{counts.tess, counts, embeddings, deliveries};
			 }),
			 py::arg("counts"), py::arg("embeddings"), py::arg("deliveries"));
	py::class_<eval::Corpus>(ev_m, "Corpus")
		.def(py::init<>())
		.def("add_city", [](eval::Corpus& c, const eval::CityData& city) {
			c.cities.insert_or_assign(city.tess.city_id, city);
		});
	py::class_<eval::ExperimentConfig>(ev_m, "ExperimentConfig")
		.def(py::init<>())
		.def_property(
			"model",
			[](const eval::ExperimentConfig& c) { return eval::to_string(c.model); },
			[](eval::ExperimentConfig& c, const std::string& s) { c.model = eval::parse_model(s); })
		.def_property(
			"scheme",
			[](const eval::ExperimentConfig& c) { return eval::to_string(c.scheme); },
			[](eval::ExperimentConfig& c, const std::string& s) {
				c.scheme = eval::parse_scheme(s);
			})
		.def_property(
			"features",
			[](const eval::ExperimentConfig& c) { return eval::to_string(c.features); },
			[](eval::ExperimentConfig& c, const std::string& s) {
				c.features = eval::parse_features(s);
			})
		.def_readwrite("target_city", &eval::ExperimentConfig::target_city)
		.def_readwrite("k_folds", &eval::ExperimentConfig::k_folds)
		.def_readwrite("seed", &eval::ExperimentConfig::seed)
		.def_readwrite("coverage_level", &eval::ExperimentConfig::coverage_level)
		.def_readwrite("gbt", &eval::ExperimentConfig::gbt)
		.def_readwrite("lss", &eval::ExperimentConfig::lss)
		.def_readwrite("cps", &eval::ExperimentConfig::cps)
		.def_readwrite("cal_fraction", &eval::ExperimentConfig::cal_fraction)
		.def_readwrite("kring_k", &eval::ExperimentConfig::kring_k)
		.def_readwrite("kring_leaky", &eval::ExperimentConfig::kring_leaky);
	py::class_<metrics::FoldStat>(ev_m, "FoldStat")
		.def_readonly("mean", &metrics::FoldStat::mean)
		.def_readonly("stddev", &metrics::FoldStat::stddev);
	py::class_<metrics::EvalReport>(ev_m, "EvalReport")
		.def_readonly("model", &metrics::EvalReport::model)
		.def_readonly("scheme", &metrics::EvalReport::scheme)
		.def_readonly("features", &metrics::EvalReport::features)
		.def_readonly("n_folds", &metrics::EvalReport::n_folds)
		.def_readonly("crps", &metrics::EvalReport::crps)
		.def_readonly("pinball_p50", &metrics::EvalReport::pinball_p50)
		.def_readonly("pinball_p95", &metrics::EvalReport::pinball_p95)
		.def_readonly("coverage", &metrics::EvalReport::coverage)
		.def_readonly("interval_width", &metrics::EvalReport::interval_width)
		.def_readonly("fold_crps", &metrics::EvalReport::fold_crps);
	ev_m.def("run_experiment", &eval::run_experiment, py::arg("corpus"), py::arg("config"));
}
