#include "lastmile/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

using nlohmann::json;
using nlohmann::ordered_json;

namespace lastmile::ingest {

namespace {

struct SuperRule {
	std::regex re;
	std::size_t super_idx;
};

// First match wins; the specific landuse rules sit above the catch-all one.
const std::vector<SuperRule>& super_rules() {
	static const std::vector<SuperRule> rules = [] {
		auto rx = [](const char* pat) {
			return std::regex(pat, std::regex::ECMAScript | std::regex::optimize);
		};
		std::vector<SuperRule> r;
		r.push_back({rx("^landuse=(commercial|industrial|retail|depot|garages|quarry|landfill)$"), 7});
		r.push_back({rx("^landuse=(forest|meadow|grass|orchard|vineyard|farmland|farmyard|"
						"greenfield|village_green|flowerbed|plant_nursery|salt_pond|basin|"
						"reservoir)$"), 2});
		r.push_back({rx("^landuse=(recreation_ground|allotments|winter_sports)$"), 4});
		r.push_back({rx("^landuse=(cemetery|religious)$"), 8});
		r.push_back({rx("^building[=:]"), 0});
		r.push_back({rx("^(highway|railway|public_transport|aeroway|aerialway|route|cycleway|"
						"bridge|tunnel|junction)="), 1});
		r.push_back({rx("^(natural|water|waterway|wetland|coastline)="), 2});
		r.push_back({rx("^(amenity|healthcare|emergency)="), 3});
		r.push_back({rx("^(leisure|sport|tourism)="), 4});
		r.push_back({rx("^(barrier|boundary)="), 5});
		r.push_back({rx("^(power|man_made|utility|telecom|communication)="), 6});
		r.push_back({rx("^(shop|office|craft|industrial)="), 7});
		r.push_back({rx("^(historic|heritage|memorial|ruins)="), 8});
		r.push_back({rx("^landuse="), 0});
		return r;
	}();
	return rules;
}

std::string trim(const std::string& s) {
	std::size_t b = 0, e = s.size();
	while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
	while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
	return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
	std::vector<std::string> out;
	std::string cur;
	for (char c : line) {
		if (c == ',') {
			out.push_back(cur);
			cur.clear();
		} else {
			cur += c;
		}
	}
	out.push_back(cur);
	return out;
}

std::string fmt_double(double v) {
	char buf[32];
	std::snprintf(buf, sizeof buf, "%.17g", v);
	return buf;
}

geo::GeoPoint ring_centroid(const json& ring, const std::string& where) {
	if (!ring.is_array() || ring.empty())
		throw SchemaError(where + ": polygon ring must be a non-empty array");
	std::vector<std::array<double, 2>> pts;
	for (const auto& c : ring) {
		if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
			throw SchemaError(where + ": ring coordinate must be [lon, lat]");
		pts.push_back({c[0].get<double>(), c[1].get<double>()});
	}
	// RFC 7946 closes rings by repeating the first vertex; drop the duplicate.
	if (pts.size() > 1 && pts.front() == pts.back()) pts.pop_back();
	if (pts.empty()) throw SchemaError(where + ": degenerate ring");

	// Shoelace centroid; for (near-)zero-area rings fall back to vertex mean.
	double a2 = 0.0, cx = 0.0, cy = 0.0;
	for (std::size_t i = 0; i < pts.size(); ++i) {
		const auto& p = pts[i];
		const auto& q = pts[(i + 1) % pts.size()];
		const double cross = p[0] * q[1] - q[0] * p[1];
		a2 += cross;
		cx += (p[0] + q[0]) * cross;
		cy += (p[1] + q[1]) * cross;
	}
	if (std::abs(a2) > 1e-14) {
		return {cy / (3.0 * a2), cx / (3.0 * a2)};
	}
	double sx = 0.0, sy = 0.0;
	for (const auto& p : pts) {
		sx += p[0];
		sy += p[1];
	}
	const double n = static_cast<double>(pts.size());
	return {sy / n, sx / n};
}

geo::GeoPoint coord_point(const json& c, const std::string& where) {
	if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
		throw SchemaError(where + ": coordinate must be [lon, lat]");
	return {c[1].get<double>(), c[0].get<double>()};
}

std::optional<geo::GeoPoint> representative_point(const json& geom, const std::string& where) {
	if (geom.is_null()) return std::nullopt;
	if (!geom.is_object() || !geom.contains("type"))
		throw SchemaError(where + ": geometry must be an object with a type");
	const std::string type = geom.value("type", "");
	const auto coords = geom.find("coordinates");
	if (type == "GeometryCollection") {
		const auto geoms = geom.find("geometries");
		if (geoms == geom.end() || !geoms->is_array() || geoms->empty()) return std::nullopt;
		return representative_point((*geoms)[0], where);
	}
	if (coords == geom.end()) throw SchemaError(where + ": geometry missing coordinates");

	if (type == "Point") return coord_point(*coords, where);
	if (type == "LineString" || type == "MultiPoint") {
		if (!coords->is_array() || coords->empty())
			throw SchemaError(where + ": empty coordinate array");
		return coord_point((*coords)[0], where);
	}
	if (type == "Polygon") {
		if (!coords->is_array() || coords->empty())
			throw SchemaError(where + ": polygon needs at least one ring");
		return ring_centroid((*coords)[0], where);
	}
	if (type == "MultiLineString") {
		if (!coords->is_array() || coords->empty() || !(*coords)[0].is_array() ||
			(*coords)[0].empty())
			throw SchemaError(where + ": empty multi-line");
		return coord_point((*coords)[0][0], where);
	}
	if (type == "MultiPolygon") {
		if (!coords->is_array() || coords->empty() || !(*coords)[0].is_array() ||
			(*coords)[0].empty())
			throw SchemaError(where + ": empty multi-polygon");
		return ring_centroid((*coords)[0][0], where);
	}
	throw SchemaError(where + ": unsupported geometry type '" + type + "'");
}

std::optional<std::string> scalar_to_string(const json& v) {
	if (v.is_string()) return v.get<std::string>();
	if (v.is_boolean()) return v.get<bool>() ? std::string("true") : std::string("false");
	if (v.is_number_integer()) return std::to_string(v.get<long long>());
	if (v.is_number()) return fmt_double(v.get<double>());
	return std::nullopt;  // nulls, arrays, nested objects carry no tag value
}

}  // namespace

const std::array<std::string, kNumSuperTags>& super_tag_names() {
	static const std::array<std::string, kNumSuperTags> names = {
		"Built Environment",    "Transportation",       "Natural Elements",
		"Amenities",            "Leisure & Recreation", "Barriers & Boundaries",
		"Utilities & Services", "Commerce & Industry",  "Historical & Cultural"};
	return names;
}

TagVocabulary TagVocabulary::from_subtags(std::vector<std::string> subtags) {
	TagVocabulary v;
	v.subtags_ = std::move(subtags);
	for (std::size_t i = 0; i < v.subtags_.size(); ++i) {
		const std::string& tag = v.subtags_[i];
		if (tag.find('=') == std::string::npos)
			throw SchemaError("vocabulary: sub-tag '" + tag + "' is not key=value");
		if (!v.index_.emplace(tag, i).second)
			throw SchemaError("vocabulary: duplicate sub-tag '" + tag + "'");
	}
	if (v.subtags_.empty()) throw SchemaError("vocabulary: no sub-tags");
	return v;
}

TagVocabulary TagVocabulary::parse(std::istream& in, const std::string& origin) {
	std::vector<std::string> tags;
	std::string line;
	while (std::getline(in, line)) {
		if (!line.empty() && line.back() == '\r') line.pop_back();
		const std::string t = trim(line);
		if (t.empty() || t[0] == '#') continue;
		tags.push_back(t);
	}
	try {
		return from_subtags(std::move(tags));
	} catch (const SchemaError& e) {
		throw SchemaError(origin + ": " + e.what());
	}
}

TagVocabulary TagVocabulary::load(const std::string& path) {
	std::ifstream in(path);
	if (!in) throw ParseError("vocabulary: cannot open '" + path + "'");
	return parse(in, path);
}

std::optional<std::size_t> TagVocabulary::index_of(const std::string& subtag) const {
	auto it = index_.find(subtag);
	if (it == index_.end()) return std::nullopt;
	return it->second;
}

std::optional<std::size_t> TagVocabulary::super_of(const std::string& subtag) const {
	for (const auto& rule : super_rules())
		if (std::regex_search(subtag, rule.re)) return rule.super_idx;
	return std::nullopt;
}

std::vector<TaggedFeature> parse_tagged_geojson(std::istream& in, const std::string& origin) {
	json doc;
	try {
		doc = json::parse(in);
	} catch (const json::parse_error& e) {
		throw ParseError(origin + ": malformed JSON at byte " + std::to_string(e.byte) +
						 " (" + e.what() + ")");
	}
	if (!doc.is_object() || doc.value("type", "") != "FeatureCollection")
		throw SchemaError(origin + ": expected a FeatureCollection");
	const auto features = doc.find("features");
	if (features == doc.end() || !features->is_array())
		throw SchemaError(origin + ": FeatureCollection without a features array");

	std::vector<TaggedFeature> out;
	std::size_t idx = 0;
	for (const auto& f : *features) {
		const std::string where = origin + ": feature " + std::to_string(idx++);
		if (!f.is_object() || f.value("type", "") != "Feature")
			throw SchemaError(where + ": expected a Feature object");
		auto point = representative_point(f.contains("geometry") ? f["geometry"] : json(),
										  where);
		if (!point) continue;  // null/empty geometry carries no location
		geo::validate(*point);

		TaggedFeature tf;
		tf.point = *point;
		if (f.contains("properties") && f["properties"].is_object()) {
			for (const auto& [key, value] : f["properties"].items()) {
				if (auto s = scalar_to_string(value)) tf.tags.push_back(key + "=" + *s);
			}
		}
		std::sort(tf.tags.begin(), tf.tags.end());
		out.push_back(std::move(tf));
	}
	if (out.empty()) throw EmptyCollectionError(origin + ": no usable features");
	return out;
}

std::vector<TaggedFeature> load_tagged_geojson(const std::string& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw ParseError("geojson: cannot open '" + path + "'");
	return parse_tagged_geojson(in, path);
}

std::vector<DeliveryRecord> parse_deliveries_csv(
	std::istream& in, const std::string& origin,
	const std::vector<geo::Tessellation>& tessellations, DeliveryLoadStats* stats) {
	std::unordered_map<std::string, const geo::Tessellation*> by_city;
	for (const auto& t : tessellations) by_city[t.city_id] = &t;

	std::string line;
	if (!std::getline(in, line)) throw SchemaError(origin + ": empty file");
	if (!line.empty() && line.back() == '\r') line.pop_back();
	std::vector<std::string> header = split_csv_line(line);
	for (auto& h : header) h = trim(h);

	const std::vector<std::string> base = {"city_id", "lat", "lon", "service_time_s",
										   "vehicle"};
	bool has_route = false;
	if (header.size() == 6 && header[5] == "route_id")
		has_route = true;
	else if (header.size() != 5)
		throw SchemaError(origin +
						  ": header must be city_id,lat,lon,service_time_s,vehicle[,route_id]");
	for (std::size_t i = 0; i < base.size(); ++i)
		if (header[i] != base[i])
			throw SchemaError(origin + ": unexpected header column " + std::to_string(i) +
							  " '" + header[i] + "'");

	DeliveryLoadStats local;
	DeliveryLoadStats& st = stats ? *stats : local;
	st = {};

	auto reject = [&](std::size_t line_no, const std::string& why) {
		++st.n_rejected;
		if (st.rejects.size() < 50)
			st.rejects.push_back("line " + std::to_string(line_no) + ": " + why);
	};

	std::vector<DeliveryRecord> out;
	std::size_t line_no = 1;
	while (std::getline(in, line)) {
		++line_no;
		if (!line.empty() && line.back() == '\r') line.pop_back();
		if (trim(line).empty()) continue;
		++st.n_read;
		std::vector<std::string> cols = split_csv_line(line);
		if (cols.size() != header.size()) {
			reject(line_no, "expected " + std::to_string(header.size()) + " columns, got " +
							   std::to_string(cols.size()));
			continue;
		}
		DeliveryRecord rec;
		rec.city_id = trim(cols[0]);
		char* end = nullptr;
		const std::string lat_s = trim(cols[1]), lon_s = trim(cols[2]),
						  time_s = trim(cols[3]);
		rec.location.lat = std::strtod(lat_s.c_str(), &end);
		if (end == lat_s.c_str() || *end != '\0') {
			reject(line_no, "bad lat '" + lat_s + "'");
			continue;
		}
		rec.location.lon = std::strtod(lon_s.c_str(), &end);
		if (end == lon_s.c_str() || *end != '\0') {
			reject(line_no, "bad lon '" + lon_s + "'");
			continue;
		}
		rec.service_time_s = std::strtod(time_s.c_str(), &end);
		if (end == time_s.c_str() || *end != '\0') {
			reject(line_no, "bad service_time_s '" + time_s + "'");
			continue;
		}
		rec.vehicle = trim(cols[4]);
		if (has_route) rec.route_id = trim(cols[5]);

		if (rec.city_id.empty()) {
			reject(line_no, "empty city_id");
			continue;
		}
		if (!(rec.service_time_s > 0.0) || rec.service_time_s > kMaxServiceTimeS ||
			!std::isfinite(rec.service_time_s)) {
			reject(line_no, "service_time_s out of (0, 86400]");
			continue;
		}
		if (rec.vehicle != "van" && rec.vehicle != "cargo_bike") {
			reject(line_no, "unknown vehicle '" + rec.vehicle + "'");
			continue;
		}
		auto it = by_city.find(rec.city_id);
		if (it == by_city.end()) {
			reject(line_no, "no tessellation for city '" + rec.city_id + "'");
			continue;
		}
		try {
			geo::validate(rec.location);
			rec.cell = geo::point_to_cell(*it->second, rec.location);
		} catch (const Error& e) {
			reject(line_no, e.what());
			continue;
		}
		++st.n_kept;
		out.push_back(std::move(rec));
	}

	if (st.n_read == 0) throw EmptyCollectionError(origin + ": no data rows");
	const double bad_frac =
		static_cast<double>(st.n_rejected) / static_cast<double>(st.n_read);
	if (bad_frac > kMaxBadRowFraction)
		throw IngestError(origin + ": " + std::to_string(st.n_rejected) + "/" +
						  std::to_string(st.n_read) +
						  " rows rejected, above the 10% trust threshold");
	if (out.empty()) throw EmptyCollectionError(origin + ": all rows rejected");
	return out;
}

std::vector<DeliveryRecord> load_deliveries_csv(
	const std::string& path, const std::vector<geo::Tessellation>& tessellations,
	DeliveryLoadStats* stats) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw ParseError("deliveries: cannot open '" + path + "'");
	return parse_deliveries_csv(in, path, tessellations, stats);
}

void write_deliveries_csv(const std::string& path,
						  const std::vector<DeliveryRecord>& records) {
	std::ofstream out(path, std::ios::binary);
	if (!out) throw ParseError("deliveries: cannot write '" + path + "'");
	bool any_route = false;
	for (const auto& r : records)
		if (!r.route_id.empty()) any_route = true;
	out << "city_id,lat,lon,service_time_s,vehicle";
	if (any_route) out << ",route_id";
	out << "\n";
	for (const auto& r : records) {
		out << r.city_id << ',' << fmt_double(r.location.lat) << ','
			<< fmt_double(r.location.lon) << ',' << fmt_double(r.service_time_s) << ','
			<< r.vehicle;
		if (any_route) out << ',' << r.route_id;
		out << "\n";
	}
}

std::optional<std::size_t> RegionFeatureMatrix::row_of(const geo::HexCellId& cell) const {
	auto it = row_index_.find(cell);
	if (it == row_index_.end()) return std::nullopt;
	return it->second;
}

void RegionFeatureMatrix::rebuild_index() {
	row_index_.clear();
	for (std::size_t i = 0; i < cells.size(); ++i) row_index_[cells[i]] = i;
}

RegionFeatureMatrix build_feature_matrix(const std::vector<TaggedFeature>& features,
										 const geo::Tessellation& tess,
										 const TagVocabulary& vocab, DropReport* report,
										 const std::vector<geo::HexCellId>& ensure_cells) {
	// First pass: locate every feature and collect the cell set.
	std::vector<std::pair<geo::HexCellId, const TaggedFeature*>> located;
	located.reserve(features.size());
	DropReport local;
	DropReport& rep = report ? *report : local;
	for (const auto& f : features) {
		try {
			located.emplace_back(geo::point_to_cell(tess, f.point), &f);
		} catch (const OutOfRangeError&) {
			++rep.out_of_range;
		}
	}

	std::vector<geo::HexCellId> cells;
	for (const auto& [cell, f] : located) {
		for (const auto& tag : f->tags)
			if (vocab.index_of(tag)) {
				cells.push_back(cell);
				break;
			}
	}
	for (const auto& c : ensure_cells) {
		if (c.city_id != tess.city_id)
			throw CityMismatchError("build_feature_matrix: ensure_cells city '" +
									c.city_id + "' != '" + tess.city_id + "'");
		cells.push_back(c);
	}
	std::sort(cells.begin(), cells.end());
	cells.erase(std::unique(cells.begin(), cells.end()), cells.end());

	RegionFeatureMatrix m;
	m.tess = tess;
	m.vocab = vocab;
	m.cells = std::move(cells);
	m.counts.assign(m.cells.size() * vocab.size(), 0);
	m.rebuild_index();

	for (const auto& [cell, f] : located) {
		// row is only dereferenced for vocabulary hits, and any feature with a
		// vocabulary hit put its cell into the row set above.
		const auto row = m.row_of(cell);
		for (const auto& tag : f->tags) {
			if (auto idx = vocab.index_of(tag)) {
				m.count(*row, *idx) += 1;
			} else {
				++rep.unmatched[tag];
			}
		}
	}
	return m;
}

Matrix super_tag_rollup(const RegionFeatureMatrix& m) {
	// Resolve each vocabulary column to its family once.
	std::vector<std::optional<std::size_t>> col_super(m.vocab.size());
	for (std::size_t t = 0; t < m.vocab.size(); ++t)
		col_super[t] = m.vocab.super_of(m.vocab.subtags()[t]);

	Matrix out(m.cells.size(), kNumSuperTags, 0.0);
	for (std::size_t r = 0; r < m.cells.size(); ++r)
		for (std::size_t t = 0; t < m.vocab.size(); ++t)
			if (col_super[t]) out.at(r, *col_super[t]) += m.count(r, t);
	return out;
}

std::string drop_report_json(const DropReport& report) {
	ordered_json j = ordered_json::object();
	for (const auto& [tag, n] : report.unmatched) j[tag] = n;  // std::map: sorted keys
	return j.dump(2) + "\n";
}

void write_features_json(const std::string& path, const RegionFeatureMatrix& m) {
	ordered_json j;
	j["format"] = "region-features";
	j["version"] = 1;
	j["city_id"] = m.tess.city_id;
	j["origin"] = {{"lat", m.tess.origin.lat}, {"lon", m.tess.origin.lon}};
	j["edge_m"] = m.tess.edge_m;
	j["subtags"] = m.vocab.subtags();
	auto cells = ordered_json::array();
	for (const auto& c : m.cells) cells.push_back({c.q, c.r});
	j["cells"] = std::move(cells);
	auto counts = ordered_json::array();
	for (std::size_t r = 0; r < m.cells.size(); ++r)
		for (std::size_t t = 0; t < m.vocab.size(); ++t)
			if (m.count(r, t) != 0) counts.push_back({r, t, m.count(r, t)});
	j["counts"] = std::move(counts);

	std::ofstream out(path, std::ios::binary);
	if (!out) throw ParseError("features: cannot write '" + path + "'");
	out << j.dump(1, '\t') << "\n";
}

RegionFeatureMatrix read_features_json(const std::string& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw ParseError("features: cannot open '" + path + "'");
	json j;
	try {
		j = json::parse(in);
	} catch (const json::parse_error& e) {
		throw ParseError(path + ": malformed JSON at byte " + std::to_string(e.byte));
	}
	if (j.value("format", "") != "region-features" || j.value("version", 0) != 1)
		throw SchemaError(path + ": not a version-1 region-features file");

	RegionFeatureMatrix m;
	m.tess = geo::Tessellation(j.at("city_id").get<std::string>(),
							   {j.at("origin").at("lat").get<double>(),
								j.at("origin").at("lon").get<double>()},
							   j.at("edge_m").get<double>());
	m.vocab = TagVocabulary::from_subtags(j.at("subtags").get<std::vector<std::string>>());
	for (const auto& c : j.at("cells"))
		m.cells.push_back({c.at(0).get<std::int32_t>(), c.at(1).get<std::int32_t>(),
						   m.tess.city_id});
	for (std::size_t i = 1; i < m.cells.size(); ++i)
		if (!(m.cells[i - 1] < m.cells[i]))
			throw SchemaError(path + ": cells must be sorted and unique");
	m.counts.assign(m.cells.size() * m.vocab.size(), 0);
	m.rebuild_index();
	for (const auto& triple : j.at("counts")) {
		const auto r = triple.at(0).get<std::size_t>();
		const auto t = triple.at(1).get<std::size_t>();
		if (r >= m.cells.size() || t >= m.vocab.size())
			throw SchemaError(path + ": count entry out of bounds");
		m.count(r, t) = triple.at(2).get<std::uint32_t>();
	}
	return m;
}

}  // namespace lastmile::ingest
