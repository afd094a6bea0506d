#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lastmile/geo.hpp"
#include "lastmile/ingest.hpp"
#include "lastmile/matrix.hpp"

namespace lastmile::cluster {

enum class Linkage { ward, average };

Linkage parse_linkage(const std::string& name);
std::string to_string(Linkage linkage);

/// Flat labels in [0, k) for each input row, plus the merge trace that
/// produced them (useful for diagnostics and tests).
struct Dendrogram {
	struct Merge {
		std::size_t left = 0;   // cluster ids being joined; an id is the smallest
		std::size_t right = 0;  // original row index among the cluster's members
		double distance = 0.0;  // linkage distance at which the merge happened
	};
	std::vector<Merge> merges;             // n_rows - 1 entries for a full tree
	std::vector<std::size_t> labels;       // per row, compact ids 0..k-1
	std::size_t k = 0;
};

/// Bottom-up agglomeration over row vectors. Ward uses the Lance-Williams
/// update on squared Euclidean distances; average linkage averages plain
/// distances. Ties on the merge criterion break towards the lexicographically
/// smallest (left, right) cluster-id pair, which pins the tree layout for any
/// input order. O(n^2) memory, O(n^3) worst-case time -- fine for the few
/// hundred micro-regions a city produces.
Dendrogram agglomerate(const Matrix& points, std::size_t k, Linkage linkage = Linkage::ward);

struct ClusterAssignment {
	std::vector<geo::HexCellId> cells;
	std::vector<std::size_t> labels;  // parallel to cells
	std::size_t k = 0;
};

ClusterAssignment assign_cells(const std::vector<geo::HexCellId>& cells,
							   const Dendrogram& dendrogram);

/// Relabels clusters so that label 0 carries the slowest service and labels
/// increase towards faster ones. Central tendency per cluster is the median
/// (or mean) of all member-cell delivery times. Clusters with no deliveries
/// sort after every populated one, keeping their relative order.
ClusterAssignment order_by_service_time(const ClusterAssignment& assignment,
										const std::vector<ingest::DeliveryRecord>& deliveries,
										bool use_mean = false);

struct ClusterProfile {
	std::size_t label = 0;
	std::size_t n_cells = 0;
	std::size_t n_deliveries = 0;
	double service_median = 0.0;
	std::vector<double> mean_super_counts;  // canonical super-tag order
};

std::vector<ClusterProfile> cluster_summary(const ClusterAssignment& assignment,
											const ingest::RegionFeatureMatrix& features,
											const std::vector<ingest::DeliveryRecord>& deliveries);

void write_summary_json(const std::filesystem::path& path,
						const std::vector<ClusterProfile>& profiles);

void write_assignments_csv(const std::filesystem::path& path, const ClusterAssignment& assignment,
						   const std::string& city_id);
ClusterAssignment read_assignments_csv(const std::filesystem::path& path, std::string* city_id_out = nullptr);

}  // namespace lastmile::cluster
