#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lastmile/boosting.hpp"
#include "lastmile/conformal.hpp"
#include "lastmile/distribution.hpp"
#include "lastmile/embed.hpp"
#include "lastmile/geo.hpp"
#include "lastmile/ingest.hpp"
#include "lastmile/metrics.hpp"

namespace lastmile::eval {

enum class ModelKind { city, kring3, cps_geo, lss_geo, lss_osm };
enum class FeatureKind { embedding, osm_counts };
enum class Scheme { city_specific, transfer, full };

ModelKind parse_model(const std::string& name);
FeatureKind parse_features(const std::string& name);
Scheme parse_scheme(const std::string& name);
std::string to_string(ModelKind m);
std::string to_string(FeatureKind f);
std::string to_string(Scheme s);

/// Everything known about one city: the tessellation it was ingested with,
/// its per-cell tag counts, optional embeddings, and its deliveries.
struct CityData {
	geo::Tessellation tess;
	ingest::RegionFeatureMatrix counts;
	embed::EmbeddingMatrix embeddings;  // may be empty when unused
	std::vector<ingest::DeliveryRecord> deliveries;
};

struct Corpus {
	std::map<std::string, CityData> cities;  // keyed by city id

	const CityData& at(const std::string& city_id) const;
};

/// Cross-validation folds over *hexes*, not deliveries: every delivery in a
/// test hex is held out together, so a model never scores stops whose
/// micro-region it trained on.
struct FoldPlan {
	std::vector<std::vector<geo::HexCellId>> test_hexes;  // per fold, sorted
};

FoldPlan hex_kfold(std::vector<geo::HexCellId> hexes, std::size_t k, std::uint64_t seed);

struct ExperimentConfig {
	Scheme scheme = Scheme::city_specific;
	ModelKind model = ModelKind::city;
	FeatureKind features = FeatureKind::embedding;
	std::string target_city;
	std::size_t k_folds = 5;
	std::uint64_t seed = 1;
	double coverage_level = 0.9;

	boosting::GbtParams gbt;       // point regressor under the conformal layer
	boosting::LssParams lss;
	conformal::CpsParams cps;
	double cal_fraction = 0.25;    // share of the train fold held for calibration
	int kring_k = 3;
	bool kring_leaky = false;      // pool neighbours from all target deliveries,
								   // including held-out hexes (diagnostic mode)
};

/// Train/test delivery pointers for one fold under a scheme. Test rows are
/// always target-city deliveries in the fold's hexes; the train side depends
/// on the scheme (target remainder, other cities, or both).
struct FoldSplit {
	std::vector<const ingest::DeliveryRecord*> train;
	std::vector<const ingest::DeliveryRecord*> test;
};

FoldSplit fold_split(const Corpus& corpus, const ExperimentConfig& cfg, const FoldPlan& plan,
					 std::size_t fold);

metrics::EvalReport run_experiment(const Corpus& corpus, const ExperimentConfig& cfg);

void write_report_json(const std::filesystem::path& path, const metrics::EvalReport& report,
					   const ExperimentConfig& cfg);
void write_folds_csv(const std::filesystem::path& path, const metrics::EvalReport& report);

/// Per-cell exceedance probabilities P(T > t) for a set of thresholds.
struct ExceedanceRow {
	geo::HexCellId cell;
	std::vector<double> probs;  // parallel to the thresholds
};

std::vector<ExceedanceRow> exceedance_map(const std::vector<geo::HexCellId>& cells,
										  const std::vector<const PredictiveDistribution*>& dists,
										  const std::vector<double>& thresholds);

/// GeoJSON FeatureCollection of hex polygons with properties p_<threshold>.
void write_exceedance_geojson(const std::filesystem::path& path, const geo::Tessellation& tess,
							  const std::vector<ExceedanceRow>& rows,
							  const std::vector<double>& thresholds);

}  // namespace lastmile::eval
