#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lastmile/errors.hpp"

namespace lastmile::geo {

inline constexpr double kEarthRadiusM = 6371008.8;   // IUGG mean radius
inline constexpr double kMaxRangeM = 100'000.0;      // projection validity radius
inline constexpr double kDefaultEdgeM = 174.4;       // hexagon edge length, metres

struct GeoPoint {
	double lat = 0.0;  // degrees, [-90, 90]
	double lon = 0.0;  // degrees, [-180, 180]
};

// East/north offsets in metres relative to a tessellation origin.
struct PlanarXY {
	double x = 0.0;
	double y = 0.0;
};

void validate(const GeoPoint& p);  // throws DomainError on NaN or out-of-bounds

// Axial coordinates of a pointy-top hexagon, tagged with the owning city so
// cells from different tessellations can never be mixed silently.
struct HexCellId {
	std::int32_t q = 0;
	std::int32_t r = 0;
	std::string city_id;

	bool operator==(const HexCellId& o) const {
		return q == o.q && r == o.r && city_id == o.city_id;
	}
	bool operator!=(const HexCellId& o) const { return !(*this == o); }
	// (q, r) lexicographic within a city; city_id first so sorting mixed
	// containers is still a strict weak order.
	bool operator<(const HexCellId& o) const {
		if (city_id != o.city_id) return city_id < o.city_id;
		if (q != o.q) return q < o.q;
		return r < o.r;
	}
};

// One hex grid laid over one city: an azimuthal-equidistant plane centred on
// `origin`, tiled with pointy-top hexagons of edge `edge_m`.
struct Tessellation {
	std::string city_id;
	GeoPoint origin;
	double edge_m = kDefaultEdgeM;

	Tessellation() = default;
	Tessellation(std::string city, GeoPoint orig, double edge = kDefaultEdgeM);
};

// Azimuthal equidistant projection about tess.origin (spherical earth).
// Throws OutOfRangeError beyond kMaxRangeM.
PlanarXY project(const Tessellation& tess, const GeoPoint& p);
GeoPoint unproject(const Tessellation& tess, const PlanarXY& xy);

PlanarXY cell_center_xy(const Tessellation& tess, const HexCellId& cell);
GeoPoint cell_center(const Tessellation& tess, const HexCellId& cell);

// Hexagon containing p: nearest cell centre in the projected plane, ties
// broken toward lexicographically smallest (q, r).
HexCellId point_to_cell(const Tessellation& tess, const GeoPoint& p);

// Grid-steps metric between two cells of the same city.
int hex_distance(const HexCellId& a, const HexCellId& b);

// All cells within grid distance k, in spiral order: center first, then ring
// 1..k, each ring walked clockwise starting from the north-east neighbour
// direction. Size is always 3k(k+1)+1.
std::vector<HexCellId> k_ring(const HexCellId& center, int k);

// The six counter-clockwise vertices of the cell, as geographic points
// (closed ring is implied; the first vertex is not repeated).
std::vector<GeoPoint> cell_polygon(const Tessellation& tess, const HexCellId& cell);

}  // namespace lastmile::geo

template <>
struct std::hash<lastmile::geo::HexCellId> {
	std::size_t operator()(const lastmile::geo::HexCellId& c) const noexcept {
		std::size_t h = std::hash<std::string>{}(c.city_id);
		std::uint64_t qr = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.q)) << 32) |
						   static_cast<std::uint32_t>(c.r);
		h ^= std::hash<std::uint64_t>{}(qr) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
		return h;
	}
};
