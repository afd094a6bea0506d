#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lastmile/errors.hpp"
#include "lastmile/geo.hpp"
#include "lastmile/matrix.hpp"

namespace lastmile::ingest {

// The nine coarse tag families, in canonical column order.
inline constexpr std::size_t kNumSuperTags = 9;
const std::array<std::string, kNumSuperTags>& super_tag_names();

// Ordered list of "key=value" sub-tags plus the regex rules that fold them
// into the nine families (first matching rule wins).
class TagVocabulary {
public:
	static TagVocabulary from_subtags(std::vector<std::string> subtags);
	static TagVocabulary load(const std::string& path);      // one tag per line, # comments
	static TagVocabulary parse(std::istream& in, const std::string& origin);

	const std::vector<std::string>& subtags() const { return subtags_; }
	std::size_t size() const { return subtags_.size(); }
	std::optional<std::size_t> index_of(const std::string& subtag) const;

	// Family index for any "key=value" string, vocabulary member or not.
	std::optional<std::size_t> super_of(const std::string& subtag) const;

private:
	std::vector<std::string> subtags_;
	std::unordered_map<std::string, std::size_t> index_;
};

// A geometry reduced to a representative point, carrying its tags as
// "key=value" strings.
struct TaggedFeature {
	geo::GeoPoint point;
	std::vector<std::string> tags;
};

// RFC 7946 FeatureCollection -> representative points. Polygons use the area
// centroid of the first (outer) ring, lines their first vertex, points
// themselves; Multi* geometries use their first member.
std::vector<TaggedFeature> load_tagged_geojson(const std::string& path);
std::vector<TaggedFeature> parse_tagged_geojson(std::istream& in, const std::string& origin);

struct DeliveryRecord {
	std::string city_id;
	geo::GeoPoint location;
	double service_time_s = 0.0;
	std::string vehicle;   // "van" | "cargo_bike"
	std::string route_id;  // optional, may be empty
	geo::HexCellId cell;
};

inline constexpr double kMaxServiceTimeS = 86400.0;
inline constexpr double kMaxBadRowFraction = 0.10;

struct DeliveryLoadStats {
	std::size_t n_read = 0;      // data rows seen
	std::size_t n_kept = 0;
	std::size_t n_rejected = 0;  // validation failures (logged, not fatal)
	std::vector<std::string> rejects;  // "line N: reason", capped
};

// CSV with header city_id,lat,lon,service_time_s,vehicle[,route_id]. Rows
// failing validation are dropped and counted; more than kMaxBadRowFraction of
// the file bad is an IngestError. Rows whose city has no tessellation in
// `tessellations` are rejected too; cells are assigned on load.
std::vector<DeliveryRecord> load_deliveries_csv(
	const std::string& path, const std::vector<geo::Tessellation>& tessellations,
	DeliveryLoadStats* stats = nullptr);
std::vector<DeliveryRecord> parse_deliveries_csv(
	std::istream& in, const std::string& origin,
	const std::vector<geo::Tessellation>& tessellations,
	DeliveryLoadStats* stats = nullptr);

void write_deliveries_csv(const std::string& path,
						  const std::vector<DeliveryRecord>& records);

// Per-cell counts of vocabulary sub-tags.
struct RegionFeatureMatrix {
	geo::Tessellation tess;
	TagVocabulary vocab;
	std::vector<geo::HexCellId> cells;   // sorted by (q, r); unique
	std::vector<std::uint32_t> counts;   // |cells| x |vocab|, row-major

	std::uint32_t count(std::size_t row, std::size_t tag) const {
		return counts[row * vocab.size() + tag];
	}
	std::uint32_t& count(std::size_t row, std::size_t tag) {
		return counts[row * vocab.size() + tag];
	}
	std::optional<std::size_t> row_of(const geo::HexCellId& cell) const;
	void rebuild_index();

private:
	std::unordered_map<geo::HexCellId, std::size_t> row_index_;
};

struct DropReport {
	std::map<std::string, std::uint64_t> unmatched;  // subtag -> occurrences
	std::uint64_t out_of_range = 0;                  // features beyond projection range
};

// Tally each feature's vocabulary tags into its containing cell. Cells without
// any matched tag get no row unless listed in `ensure_cells`.
RegionFeatureMatrix build_feature_matrix(const std::vector<TaggedFeature>& features,
										 const geo::Tessellation& tess,
										 const TagVocabulary& vocab,
										 DropReport* report = nullptr,
										 const std::vector<geo::HexCellId>& ensure_cells = {});

// |cells| x 9 matrix of counts folded into the super-tag families. Sub-tags
// that match no family rule are dropped.
Matrix super_tag_rollup(const RegionFeatureMatrix& m);

std::string drop_report_json(const DropReport& report);

// Feature-matrix store (JSON), the interchange format between pipeline stages.
void write_features_json(const std::string& path, const RegionFeatureMatrix& m);
RegionFeatureMatrix read_features_json(const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic city with planted archetypes.

struct SynthConfig {
	std::string city_id = "synthville";
	geo::GeoPoint origin{45.0, 7.0};
	double edge_m = geo::kDefaultEdgeM;
	std::size_t n_cells = 200;
	std::size_t n_deliveries = 4000;  // must be >= 10 * n_cells
	double context_effect = 1.0;      // scales archetype mu/sigma offsets
	std::uint64_t seed = 1;
};

inline constexpr int kNumArchetypes = 4;

struct SynthGroundTruth {
	std::vector<int> archetype;      // aligned with features.cells
	std::vector<double> mu_true;     // log-scale location per cell
	std::vector<double> sigma_true;  // log-scale spread per cell
	double base_mu = 0.0;
	double base_sigma = 0.0;
	double context_effect = 0.0;
};

struct SynthCity {
	RegionFeatureMatrix features;
	std::vector<DeliveryRecord> deliveries;
	SynthGroundTruth truth;
};

// Vocabulary used by the generator (realistic key=value tags spanning all nine
// families).
const TagVocabulary& synth_vocabulary();

// Deterministic in `cfg.seed`: same config, same bytes out. Archetypes are laid
// out as four well-separated hex districts with distinct tag-count profiles;
// service times are i.i.d. Lognormal(mu_true(cell), sigma_true(cell)).
SynthCity synth_city(const SynthConfig& cfg);

void write_ground_truth_json(const std::string& path, const geo::Tessellation& tess,
							 const std::vector<geo::HexCellId>& cells,
							 const SynthGroundTruth& truth);

}  // namespace lastmile::ingest
