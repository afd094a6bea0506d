#include "lastmile/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "lastmile/errors.hpp"

namespace lastmile::cluster {

namespace {

double sq_euclidean(const Matrix& m, std::size_t a, std::size_t b) {
	double acc = 0.0;
	const double* ra = m.row(a);
	const double* rb = m.row(b);
	for (std::size_t c = 0; c < m.cols; ++c) {
		const double d = ra[c] - rb[c];
		acc += d * d;
	}
	return acc;
}

double median_of(std::vector<double> xs) {
	std::sort(xs.begin(), xs.end());
	const std::size_t n = xs.size();
	return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::vector<std::string> split_csv_line(const std::string& line) {
	std::vector<std::string> out;
	std::string cur;
	for (char ch : line) {
		if (ch == ',') {
			out.push_back(cur);
			cur.clear();
		} else if (ch != '\r') {
			cur.push_back(ch);
		}
	}
	out.push_back(cur);
	return out;
}

}  // namespace

Linkage parse_linkage(const std::string& name) {
	if (name == "ward") return Linkage::ward;
	if (name == "average") return Linkage::average;
	throw ConfigError("unknown linkage '" + name + "' (expected ward or average)");
}

std::string to_string(Linkage linkage) {
	return linkage == Linkage::ward ? "ward" : "average";
}

Dendrogram agglomerate(const Matrix& points, std::size_t k, Linkage linkage) {
	const std::size_t n = points.rows;
	if (n == 0) throw EmptyCollectionError("agglomerate: no points");
	if (k == 0 || k > n)
		throw OutOfRangeError("agglomerate: k must lie in [1, " + std::to_string(n) + "]");
	for (double v : points.data)
		if (!std::isfinite(v)) throw DomainError("agglomerate: non-finite coordinate");

	// Pairwise dissimilarities: squared distances for Ward (the Lance-Williams
	// recurrence is exact on those), plain distances for average linkage.
	std::vector<double> dist(n * n, 0.0);
	for (std::size_t i = 0; i < n; ++i) {
		for (std::size_t j = i + 1; j < n; ++j) {
			double d = sq_euclidean(points, i, j);
			if (linkage == Linkage::average) d = std::sqrt(d);
			dist[i * n + j] = dist[j * n + i] = d;
		}
	}

	std::vector<bool> alive(n, true);
	std::vector<double> size(n, 1.0);
	std::vector<std::size_t> owner(n);
	for (std::size_t r = 0; r < n; ++r) owner[r] = r;

	Dendrogram out;
	out.merges.reserve(n - k);

	for (std::size_t round = 0; round + k < n; ++round) {
		std::size_t bi = 0, bj = 0;
		double best = std::numeric_limits<double>::infinity();
		// Scanning ids in increasing (i, j) order with a strict '<' makes ties
		// resolve to the lexicographically smallest pair.
		for (std::size_t i = 0; i < n; ++i) {
			if (!alive[i]) continue;
			for (std::size_t j = i + 1; j < n; ++j) {
				if (!alive[j]) continue;
				if (dist[i * n + j] < best) {
					best = dist[i * n + j];
					bi = i;
					bj = j;
				}
			}
		}

		const double ni = size[bi], nj = size[bj];
		for (std::size_t m = 0; m < n; ++m) {
			if (!alive[m] || m == bi || m == bj) continue;
			const double dmi = dist[m * n + bi];
			const double dmj = dist[m * n + bj];
			double upd;
			if (linkage == Linkage::ward) {
				const double nm = size[m];
				upd = ((nm + ni) * dmi + (nm + nj) * dmj - nm * best) / (nm + ni + nj);
			} else {
				upd = (ni * dmi + nj * dmj) / (ni + nj);
			}
			dist[m * n + bi] = dist[bi * n + m] = upd;
		}
		size[bi] += size[bj];
		alive[bj] = false;
		for (std::size_t r = 0; r < n; ++r)
			if (owner[r] == bj) owner[r] = bi;
		out.merges.push_back({bi, bj, best});
	}

	std::vector<std::size_t> compact(n, 0);
	std::size_t next = 0;
	for (std::size_t i = 0; i < n; ++i)
		if (alive[i]) compact[i] = next++;
	out.labels.resize(n);
	for (std::size_t r = 0; r < n; ++r) out.labels[r] = compact[owner[r]];
	out.k = next;
	return out;
}

ClusterAssignment assign_cells(const std::vector<geo::HexCellId>& cells,
							   const Dendrogram& dendrogram) {
	if (cells.size() != dendrogram.labels.size())
		throw LengthMismatchError("assign_cells: " + std::to_string(cells.size()) + " cells vs " +
								  std::to_string(dendrogram.labels.size()) + " labels");
	ClusterAssignment out;
	out.cells = cells;
	out.labels = dendrogram.labels;
	out.k = dendrogram.k;
	return out;
}

ClusterAssignment order_by_service_time(const ClusterAssignment& assignment,
										const std::vector<ingest::DeliveryRecord>& deliveries,
										bool use_mean) {
	if (assignment.cells.size() != assignment.labels.size())
		throw LengthMismatchError("order_by_service_time: ragged assignment");

	std::unordered_map<geo::HexCellId, std::size_t> label_of;
	label_of.reserve(assignment.cells.size());
	for (std::size_t i = 0; i < assignment.cells.size(); ++i)
		label_of.emplace(assignment.cells[i], assignment.labels[i]);

	std::vector<std::vector<double>> times(assignment.k);
	for (const auto& d : deliveries) {
		auto it = label_of.find(d.cell);
		if (it != label_of.end()) times[it->second].push_back(d.service_time_s);
	}

	struct Entry {
		std::size_t label;
		bool populated;
		double stat;
	};
	std::vector<Entry> entries;
	entries.reserve(assignment.k);
	bool any = false;
	for (std::size_t c = 0; c < assignment.k; ++c) {
		if (times[c].empty()) {
			entries.push_back({c, false, 0.0});
			continue;
		}
		any = true;
		double stat;
		if (use_mean) {
			double s = 0.0;
			for (double t : times[c]) s += t;
			stat = s / static_cast<double>(times[c].size());
		} else {
			stat = median_of(times[c]);
		}
		entries.push_back({c, true, stat});
	}
	if (!any) throw NoDeliveriesError("order_by_service_time: no cluster has deliveries");

	// Slowest first; empty clusters trail in their original order.
	std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
		if (a.populated != b.populated) return a.populated;
		return a.stat > b.stat;
	});

	std::vector<std::size_t> relabel(assignment.k, 0);
	for (std::size_t pos = 0; pos < entries.size(); ++pos) relabel[entries[pos].label] = pos;

	ClusterAssignment out;
	out.cells = assignment.cells;
	out.k = assignment.k;
	out.labels.reserve(assignment.labels.size());
	for (std::size_t lab : assignment.labels) out.labels.push_back(relabel[lab]);
	return out;
}

std::vector<ClusterProfile> cluster_summary(const ClusterAssignment& assignment,
											const ingest::RegionFeatureMatrix& features,
											const std::vector<ingest::DeliveryRecord>& deliveries) {
	if (assignment.cells.size() != assignment.labels.size())
		throw LengthMismatchError("cluster_summary: ragged assignment");

	const Matrix rollup = ingest::super_tag_rollup(features);
	std::vector<ClusterProfile> out(assignment.k);
	for (std::size_t c = 0; c < assignment.k; ++c) {
		out[c].label = c;
		out[c].mean_super_counts.assign(ingest::kNumSuperTags, 0.0);
	}

	for (std::size_t i = 0; i < assignment.cells.size(); ++i) {
		const auto row = features.row_of(assignment.cells[i]);
		if (!row)
			throw ValidationError("cluster_summary: cell (" + std::to_string(assignment.cells[i].q) +
								  ", " + std::to_string(assignment.cells[i].r) +
								  ") missing from feature matrix");
		auto& prof = out[assignment.labels[i]];
		prof.n_cells += 1;
		for (std::size_t s = 0; s < ingest::kNumSuperTags; ++s)
			prof.mean_super_counts[s] += rollup.at(*row, s);
	}
	for (auto& prof : out) {
		if (prof.n_cells == 0) continue;
		for (double& v : prof.mean_super_counts) v /= static_cast<double>(prof.n_cells);
	}

	std::unordered_map<geo::HexCellId, std::size_t> label_of;
	label_of.reserve(assignment.cells.size());
	for (std::size_t i = 0; i < assignment.cells.size(); ++i)
		label_of.emplace(assignment.cells[i], assignment.labels[i]);
	std::vector<std::vector<double>> times(assignment.k);
	for (const auto& d : deliveries) {
		auto it = label_of.find(d.cell);
		if (it != label_of.end()) times[it->second].push_back(d.service_time_s);
	}
	for (std::size_t c = 0; c < assignment.k; ++c) {
		out[c].n_deliveries = times[c].size();
		out[c].service_median = times[c].empty() ? 0.0 : median_of(std::move(times[c]));
	}
	return out;
}

void write_summary_json(const std::filesystem::path& path,
						const std::vector<ClusterProfile>& profiles) {
	const auto& supers = ingest::super_tag_names();
	nlohmann::ordered_json arr = nlohmann::ordered_json::array();
	for (const auto& p : profiles) {
		nlohmann::ordered_json counts;
		for (std::size_t s = 0; s < supers.size() && s < p.mean_super_counts.size(); ++s)
			counts[supers[s]] = p.mean_super_counts[s];
		arr.push_back({{"label", p.label},
					   {"n_cells", p.n_cells},
					   {"n_deliveries", p.n_deliveries},
					   {"service_median", p.service_median},
					   {"mean_super_counts", std::move(counts)}});
	}
	std::ofstream out(path);
	if (!out) throw IngestError("cannot open " + path.string() + " for writing");
	out << arr.dump(2) << '\n';
}

void write_assignments_csv(const std::filesystem::path& path, const ClusterAssignment& assignment,
						   const std::string& city_id) {
	if (assignment.cells.size() != assignment.labels.size())
		throw LengthMismatchError("write_assignments_csv: ragged assignment");
	std::ofstream out(path);
	if (!out) throw IngestError("cannot open " + path.string() + " for writing");
	out << "city_id,q,r,cluster\n";
	for (std::size_t i = 0; i < assignment.cells.size(); ++i) {
		out << city_id << ',' << assignment.cells[i].q << ',' << assignment.cells[i].r << ','
			<< assignment.labels[i] << '\n';
	}
}

ClusterAssignment read_assignments_csv(const std::filesystem::path& path, std::string* city_id_out) {
	std::ifstream in(path);
	if (!in) throw IngestError("cannot open " + path.string());
	std::string line;
	if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file");
	if (split_csv_line(line) != std::vector<std::string>{"city_id", "q", "r", "cluster"})
		throw SchemaError(path.string() + ": unexpected header '" + line + "'");

	ClusterAssignment out;
	std::string city;
	std::size_t line_no = 1;
	while (std::getline(in, line)) {
		++line_no;
		if (line.empty()) continue;
		const auto f = split_csv_line(line);
		if (f.size() != 4)
			throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
		if (city.empty()) {
			city = f[0];
		} else if (city != f[0]) {
			throw SchemaError(path.string() + ":" + std::to_string(line_no) +
							  ": mixed city ids in one assignment file");
		}
		try {
			geo::HexCellId cell{static_cast<std::int32_t>(std::stol(f[1])),
								static_cast<std::int32_t>(std::stol(f[2])), f[0]};
			const long lab = std::stol(f[3]);
			if (lab < 0) throw std::invalid_argument("negative");
			out.cells.push_back(cell);
			out.labels.push_back(static_cast<std::size_t>(lab));
		} catch (const std::logic_error&) {
			throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": bad numeric field");
		}
	}
	if (out.cells.empty()) throw EmptyCollectionError(path.string() + ": no assignments");
	for (std::size_t lab : out.labels) out.k = std::max(out.k, lab + 1);
	if (city_id_out) *city_id_out = city;
	return out;
}

}  // namespace lastmile::cluster
