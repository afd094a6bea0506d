#include "lastmile/geo.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace lastmile::geo {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDeg2Rad = kPi / 180.0;
constexpr double kRad2Deg = 180.0 / kPi;
constexpr double kSqrt3 = 1.7320508075688772;

// Axial neighbour offsets. Index 0 is the north-east neighbour; walking the
// array forward moves clockwise (NE, E, SE, SW, W, NW) when +y is north.
constexpr std::array<std::array<int, 2>, 6> kDirs = {{
	{0, 1},    // NE
	{1, 0},    // E
	{1, -1},   // SE
	{0, -1},   // SW
	{-1, 0},   // W
	{-1, 1},   // NW
}};

}  // namespace

void validate(const GeoPoint& p) {
	if (!std::isfinite(p.lat) || !std::isfinite(p.lon))
		throw DomainError("GeoPoint: coordinates must be finite");
	if (p.lat < -90.0 || p.lat > 90.0)
		throw DomainError("GeoPoint: latitude out of [-90, 90]");
	if (p.lon < -180.0 || p.lon > 180.0)
		throw DomainError("GeoPoint: longitude out of [-180, 180]");
}

Tessellation::Tessellation(std::string city, GeoPoint orig, double edge)
	: city_id(std::move(city)), origin(orig), edge_m(edge) {
	validate(origin);
	if (!(edge_m > 0.0) || !std::isfinite(edge_m))
		throw DomainError("Tessellation: edge_m must be positive and finite");
	if (city_id.empty()) throw DomainError("Tessellation: city_id must be non-empty");
}

PlanarXY project(const Tessellation& tess, const GeoPoint& p) {
	validate(p);
	const double lat0 = tess.origin.lat * kDeg2Rad;
	const double lon0 = tess.origin.lon * kDeg2Rad;
	const double lat = p.lat * kDeg2Rad;
	const double dlon = p.lon * kDeg2Rad - lon0;

	const double cos_c =
		std::sin(lat0) * std::sin(lat) + std::cos(lat0) * std::cos(lat) * std::cos(dlon);
	const double c = std::acos(std::clamp(cos_c, -1.0, 1.0));
	const double dist = c * kEarthRadiusM;
	if (dist > kMaxRangeM)
		throw OutOfRangeError("project: point " + std::to_string(dist / 1000.0) +
							  " km from origin exceeds " +
							  std::to_string(kMaxRangeM / 1000.0) + " km");
	if (c < 1e-12) return {0.0, 0.0};

	const double scale = c / std::sin(c);  // metres per unit of the direction cosines
	const double x = kEarthRadiusM * scale * std::cos(lat) * std::sin(dlon);
	const double y = kEarthRadiusM * scale *
					 (std::cos(lat0) * std::sin(lat) -
					  std::sin(lat0) * std::cos(lat) * std::cos(dlon));
	return {x, y};
}

GeoPoint unproject(const Tessellation& tess, const PlanarXY& xy) {
	const double rho = std::hypot(xy.x, xy.y);
	if (!std::isfinite(rho)) throw DomainError("unproject: non-finite coordinates");
	if (rho > kMaxRangeM * 1.5)
		throw OutOfRangeError("unproject: point beyond projection validity radius");
	const double lat0 = tess.origin.lat * kDeg2Rad;
	const double lon0 = tess.origin.lon * kDeg2Rad;
	if (rho < 1e-9) return tess.origin;

	const double c = rho / kEarthRadiusM;
	const double sin_c = std::sin(c), cos_c = std::cos(c);
	const double lat = std::asin(std::clamp(
		cos_c * std::sin(lat0) + (xy.y * sin_c * std::cos(lat0)) / rho, -1.0, 1.0));
	const double lon = lon0 + std::atan2(xy.x * sin_c,
										 rho * cos_c * std::cos(lat0) -
											 xy.y * sin_c * std::sin(lat0));
	double lon_deg = lon * kRad2Deg;
	if (lon_deg > 180.0) lon_deg -= 360.0;
	if (lon_deg < -180.0) lon_deg += 360.0;
	return {lat * kRad2Deg, lon_deg};
}

PlanarXY cell_center_xy(const Tessellation& tess, const HexCellId& cell) {
	if (cell.city_id != tess.city_id)
		throw CityMismatchError("cell_center: cell belongs to '" + cell.city_id +
								"', tessellation is '" + tess.city_id + "'");
	const double s = tess.edge_m;
	return {s * kSqrt3 * (cell.q + 0.5 * cell.r), s * 1.5 * cell.r};
}

GeoPoint cell_center(const Tessellation& tess, const HexCellId& cell) {
	return unproject(tess, cell_center_xy(tess, cell));
}

HexCellId point_to_cell(const Tessellation& tess, const GeoPoint& p) {
	const PlanarXY xy = project(tess, p);
	const double s = tess.edge_m;

	// Fractional axial coordinates, then cube-round to a candidate cell.
	const double rf = xy.y / (1.5 * s);
	const double qf = xy.x / (kSqrt3 * s) - 0.5 * rf;
	double q = std::round(qf), r = std::round(rf), z = std::round(-qf - rf);
	const double dq = std::abs(q - qf), dr = std::abs(r - rf), dz = std::abs(z + qf + rf);
	if (dq > dr && dq > dz)
		q = -r - z;
	else if (dr > dz)
		r = -q - z;

	// Rounding lands in the containing hexagon up to float noise; settle exact
	// boundaries by explicit nearest-centre search over the candidate's
	// neighbourhood with a lexicographic (q, r) tie-break.
	HexCellId best;
	double best_d2 = 0.0;
	bool first = true;
	const double tie_eps = 1e-6 * s;  // squared-metre slack ≈ sub-micron asymmetry
	const auto qi = static_cast<std::int32_t>(q);
	const auto ri = static_cast<std::int32_t>(r);
	for (const HexCellId& cand : k_ring({qi, ri, tess.city_id}, 1)) {
		const PlanarXY c = cell_center_xy(tess, cand);
		const double d2 = (c.x - xy.x) * (c.x - xy.x) + (c.y - xy.y) * (c.y - xy.y);
		if (first || d2 < best_d2 - tie_eps ||
			(std::abs(d2 - best_d2) <= tie_eps && cand < best)) {
			best = cand;
			best_d2 = d2;
			first = false;
		}
	}
	return best;
}

int hex_distance(const HexCellId& a, const HexCellId& b) {
	if (a.city_id != b.city_id)
		throw CityMismatchError("hex_distance: cells from different cities ('" + a.city_id +
								"' vs '" + b.city_id + "')");
	const int dq = a.q - b.q;
	const int dr = a.r - b.r;
	return (std::abs(dq) + std::abs(dr) + std::abs(dq + dr)) / 2;
}

std::vector<HexCellId> k_ring(const HexCellId& center, int k) {
	if (k < 0) throw DomainError("k_ring: k must be non-negative");
	std::vector<HexCellId> out;
	out.reserve(static_cast<std::size_t>(3 * k * (k + 1) + 1));
	out.push_back(center);
	for (int ring = 1; ring <= k; ++ring) {
		// Start at the north-east corner of the ring, then walk each of the six
		// sides; side i moves in direction kDirs[(i+2) % 6], which traces the
		// ring clockwise.
		int q = center.q + kDirs[0][0] * ring;
		int r = center.r + kDirs[0][1] * ring;
		for (int side = 0; side < 6; ++side) {
			const auto& d = kDirs[(side + 2) % 6];
			for (int step = 0; step < ring; ++step) {
				out.push_back({q, r, center.city_id});
				q += d[0];
				r += d[1];
			}
		}
	}
	return out;
}

std::vector<GeoPoint> cell_polygon(const Tessellation& tess, const HexCellId& cell) {
	const PlanarXY c = cell_center_xy(tess, cell);
	std::vector<GeoPoint> ring;
	ring.reserve(6);
	// Pointy-top vertices at 30°, 90°, ..., 330°; increasing angle = CCW.
	for (int i = 0; i < 6; ++i) {
		const double ang = kDeg2Rad * (30.0 + 60.0 * i);
		ring.push_back(unproject(tess, {c.x + tess.edge_m * std::cos(ang),
										c.y + tess.edge_m * std::sin(ang)}));
	}
	return ring;
}

}  // namespace lastmile::geo
