#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "lastmile/ingest.hpp"
#include "lastmile/rng.hpp"

using nlohmann::ordered_json;

namespace lastmile::ingest {

namespace {

constexpr double kBaseMu = 5.0106;   // log-seconds; median ~150 s
constexpr double kBaseSigma = 0.52;

// Archetype 0 reads like a commercial core (slowest stops), 3 like a low-rise
// residential fringe (fastest); offsets are scaled by context_effect.
constexpr double kMuOffset[kNumArchetypes] = {0.45, 0.15, -0.15, -0.45};
constexpr double kSigmaOffset[kNumArchetypes] = {0.12, 0.04, -0.04, -0.12};

struct TagProfile {
	const char* tag;
	double rate[kNumArchetypes];  // mean tag count per cell, by archetype
};

// Poisson intensities per cell. Archetype signatures: 0 = dense mixed-use
// core, 1 = mid-rise residential, 2 = industrial/logistics, 3 = low-rise
// suburb. Small rates make zero counts common, which is what the
// zero-inflated reconstruction has to cope with.
constexpr TagProfile kProfiles[] = {
	{"building=yes", {8, 6, 4, 10}},
	{"building=apartments", {5, 12, 0.5, 0.2}},
	{"building=house", {0.2, 1, 0.1, 14}},
	{"building=detached", {0, 0.3, 0, 8}},
	{"building=commercial", {6, 1, 2, 0.2}},
	{"building=retail", {7, 1.5, 0.5, 0.3}},
	{"building=industrial", {0.3, 0.2, 9, 0.1}},
	{"building=warehouse", {0.5, 0.1, 11, 0}},
	{"building=garage", {0.2, 1, 1.5, 6}},
	{"highway=footway", {14, 8, 2, 3}},
	{"highway=pedestrian", {6, 2, 0.2, 0.1}},
	{"highway=residential", {2, 7, 1, 9}},
	{"highway=service", {8, 5, 10, 4}},
	{"highway=primary", {3, 2, 2, 0.5}},
	{"highway=bus_stop", {5, 3, 1, 0.8}},
	{"railway=rail", {1, 0.5, 5, 0.1}},
	{"public_transport=platform", {4, 2, 0.5, 0.2}},
	{"natural=tree", {3, 6, 1, 12}},
	{"natural=water", {0.3, 0.5, 0.8, 1}},
	{"landuse=grass", {0.5, 3, 1, 7}},
	{"amenity=restaurant", {10, 3, 0.5, 0.3}},
	{"amenity=cafe", {8, 2.5, 0.3, 0.2}},
	{"amenity=bank", {3, 0.8, 0.1, 0.1}},
	{"amenity=pharmacy", {2.5, 1.2, 0.1, 0.4}},
	{"amenity=parking", {4, 3, 6, 2}},
	{"leisure=park", {1, 2.5, 0.2, 4}},
	{"leisure=pitch", {0.3, 1, 0.3, 3}},
	{"tourism=hotel", {4, 0.8, 0.1, 0}},
	{"barrier=fence", {1, 2, 7, 5}},
	{"barrier=gate", {0.8, 1.5, 3, 3}},
	{"power=substation", {0.1, 0.2, 2.5, 0.3}},
	{"man_made=works", {0.1, 0, 3, 0}},
	{"shop=convenience", {7, 4, 0.5, 1}},
	{"shop=clothes", {9, 1.5, 0.2, 0.1}},
	{"shop=supermarket", {2, 1.5, 0.3, 0.8}},
	{"office=company", {5, 1.5, 2, 0.3}},
	{"craft=carpenter", {0.3, 0.5, 2, 0.8}},
	{"historic=memorial", {1.5, 0.5, 0.1, 0.3}},
};
constexpr std::size_t kNumProfiles = sizeof(kProfiles) / sizeof(kProfiles[0]);

// Smallest disk radius covering n cells.
int disk_radius(std::size_t n) {
	int k = 0;
	while (static_cast<std::size_t>(3 * k * (k + 1) + 1) < n) ++k;
	return k;
}

}  // namespace

const TagVocabulary& synth_vocabulary() {
	static const TagVocabulary vocab = [] {
		std::vector<std::string> tags;
		for (const auto& p : kProfiles) tags.emplace_back(p.tag);
		return TagVocabulary::from_subtags(std::move(tags));
	}();
	return vocab;
}

SynthCity synth_city(const SynthConfig& cfg) {
	if (cfg.n_cells < 16)
		throw ConfigError("synth_city: n_cells must be at least 16");
	if (cfg.n_deliveries < 10 * cfg.n_cells)
		throw ConfigError("synth_city: n_deliveries must be at least 10 * n_cells");
	if (cfg.context_effect < 0.0 || !std::isfinite(cfg.context_effect))
		throw ConfigError("synth_city: context_effect must be finite and >= 0");
	if (cfg.context_effect * 0.12 >= kBaseSigma)
		throw ConfigError("synth_city: context_effect too large, sigma would hit zero");

	const geo::Tessellation tess(cfg.city_id, cfg.origin, cfg.edge_m);
	Rng rng(cfg.seed);

	// Four archetype districts as disjoint hex disks, far enough apart that no
	// patch of radius <= 5 can straddle two districts.
	std::size_t per[kNumArchetypes];
	int max_rd = 0;
	for (int d = 0; d < kNumArchetypes; ++d) {
		per[d] = cfg.n_cells / kNumArchetypes +
				 (static_cast<std::size_t>(d) < cfg.n_cells % kNumArchetypes ? 1 : 0);
		max_rd = std::max(max_rd, disk_radius(per[d]));
	}
	const int spacing = 2 * max_rd + 12;
	const geo::HexCellId centers[kNumArchetypes] = {
		{-spacing, 0, cfg.city_id},
		{spacing, 0, cfg.city_id},
		{0, -spacing, cfg.city_id},
		{0, spacing, cfg.city_id},
	};

	std::vector<std::pair<geo::HexCellId, int>> cell_arch;
	for (int d = 0; d < kNumArchetypes; ++d) {
		auto disk = geo::k_ring(centers[d], disk_radius(per[d]));
		for (std::size_t i = 0; i < per[d]; ++i) cell_arch.emplace_back(disk[i], d);
	}
	std::sort(cell_arch.begin(), cell_arch.end());

	const TagVocabulary& vocab = synth_vocabulary();
	RegionFeatureMatrix features;
	features.tess = tess;
	features.vocab = vocab;
	for (const auto& [cell, arch] : cell_arch) features.cells.push_back(cell);
	features.counts.assign(features.cells.size() * vocab.size(), 0);
	features.rebuild_index();

	SynthGroundTruth truth;
	truth.base_mu = kBaseMu;
	truth.base_sigma = kBaseSigma;
	truth.context_effect = cfg.context_effect;
	for (std::size_t row = 0; row < cell_arch.size(); ++row) {
		const int arch = cell_arch[row].second;
		truth.archetype.push_back(arch);
		truth.mu_true.push_back(kBaseMu + cfg.context_effect * kMuOffset[arch]);
		truth.sigma_true.push_back(kBaseSigma + cfg.context_effect * kSigmaOffset[arch]);
		for (std::size_t t = 0; t < kNumProfiles; ++t)
			features.count(row, t) = rng.poisson(kProfiles[t].rate[arch]);
	}

	SynthCity city;
	city.features = std::move(features);
	city.truth = std::move(truth);

	// Deliveries: uniform over cells, jittered inside the hexagon (0.3 edge
	// stays well within the inradius of 0.866 edge).
	city.deliveries.reserve(cfg.n_deliveries);
	for (std::size_t i = 0; i < cfg.n_deliveries; ++i) {
		const std::size_t row = static_cast<std::size_t>(rng.below(cell_arch.size()));
		const geo::HexCellId& cell = city.features.cells[row];
		const geo::PlanarXY c = geo::cell_center_xy(tess, cell);
		const double ang = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
		const double rad = 0.3 * cfg.edge_m * std::sqrt(rng.uniform01());

		DeliveryRecord rec;
		rec.city_id = cfg.city_id;
		rec.location = geo::unproject(
			tess, {c.x + rad * std::cos(ang), c.y + rad * std::sin(ang)});
		rec.service_time_s = std::min(
			kMaxServiceTimeS,
			rng.lognormal(city.truth.mu_true[row], city.truth.sigma_true[row]));
		rec.vehicle = rng.uniform01() < 0.85 ? "van" : "cargo_bike";
		rec.cell = cell;
		city.deliveries.push_back(std::move(rec));
	}
	return city;
}

void write_ground_truth_json(const std::string& path, const geo::Tessellation& tess,
							 const std::vector<geo::HexCellId>& cells,
							 const SynthGroundTruth& truth) {
	if (cells.size() != truth.archetype.size())
		throw LengthMismatchError("ground truth: cells and archetypes differ in length");
	ordered_json j;
	j["format"] = "synth-truth";
	j["version"] = 1;
	j["city_id"] = tess.city_id;
	j["base_mu"] = truth.base_mu;
	j["base_sigma"] = truth.base_sigma;
	j["context_effect"] = truth.context_effect;
	auto arr = ordered_json::array();
	for (std::size_t i = 0; i < cells.size(); ++i)
		arr.push_back({cells[i].q, cells[i].r, truth.archetype[i], truth.mu_true[i],
					   truth.sigma_true[i]});
	j["cells"] = std::move(arr);
	std::ofstream out(path, std::ios::binary);
	if (!out) throw ParseError("ground truth: cannot write '" + path + "'");
	out << j.dump(1, '\t') << "\n";
}

}  // namespace lastmile::ingest
