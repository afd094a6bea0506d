#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "lastmile/conformal.hpp"
#include "lastmile/rng.hpp"
#include "support/stats.hpp"

using namespace lastmile;
using conformal::CpsDistribution;
using conformal::CpsModel;
using conformal::CpsParams;

namespace {

// Five distinct base scores, 60 rows each, with residuals 100*g + j for row j
// of group g.  Equal-frequency binning then lands each score value in its own
// category, so every downstream quantity is known in closed form.
struct GroupedCal {
	Matrix x;
	std::vector<double> y;
};

GroupedCal grouped_cal() {
	GroupedCal out;
	out.x = Matrix(300, 1);
	out.y.resize(300);
	for (std::size_t g = 0; g < 5; ++g)
		for (std::size_t j = 0; j < 60; ++j) {
			const std::size_t i = g * 60 + j;
			out.x.at(i, 0) = 10.0 * static_cast<double>(g + 1);
			out.y[i] = out.x.at(i, 0) + 100.0 * static_cast<double>(g) + static_cast<double>(j);
		}
	return out;
}

const CpsModel::BaseFn identity = [](const double* x) { return x[0]; };

}  // namespace

TEST_SUITE("conformal") {

TEST_CASE("step cdf: rank/(n+1) off atoms, mid-rank on atoms") {
	CpsDistribution d(100.0, {90.0, 100.0, 110.0}, 0);
	CHECK(d.cdf(89.0) == doctest::Approx(0.0));
	CHECK(d.cdf(90.0) == doctest::Approx(0.25));
	CHECK(d.cdf(99.9) == doctest::Approx(0.25));
	CHECK(d.cdf(100.0) == doctest::Approx(0.5));
	CHECK(d.cdf(110.0) == doctest::Approx(0.75));
	// sup of the cdf is n/(n+1), not 1: the (n+1)-th rank is the test point.
	CHECK(d.cdf(1e9) == doctest::Approx(0.75));

	CpsDistribution tied(100.0, {100.0, 100.0, 110.0}, 0);
	CHECK(tied.cdf(100.0) == doctest::Approx(0.375));  // (0 + (2+1)/2) / 4
	CHECK(tied.cdf(105.0) == doctest::Approx(0.5));
	CHECK(tied.cdf(110.0) == doctest::Approx(0.75));
}

TEST_CASE("quantile walks the atom ladder by ceil(tau*(n+1)), clamped") {
	CpsDistribution d(100.0, {90.0, 100.0, 110.0}, 0);
	CHECK(d.quantile(0.01) == 90.0);
	CHECK(d.quantile(0.25) == 90.0);   // ceil(1.00) = 1
	CHECK(d.quantile(0.26) == 100.0);  // ceil(1.04) = 2
	CHECK(d.quantile(0.5) == 100.0);
	CHECK(d.quantile(0.51) == 110.0);
	CHECK(d.quantile(0.75) == 110.0);
	CHECK(d.quantile(0.99) == 110.0);  // rank 4 clamps to n
	CHECK_THROWS_AS(d.quantile(0.0), DomainError);
	CHECK_THROWS_AS(d.quantile(1.0), DomainError);
	CHECK_THROWS_AS(d.cdf(std::nan("")), DomainError);
}

TEST_CASE("cdf and quantile are monotone and mutually consistent") {
	Rng rng(71);
	std::vector<double> atoms(25);
	for (auto& a : atoms) a = rng.normal() * 10.0;
	std::sort(atoms.begin(), atoms.end());
	atoms[7] = atoms[6];  // plant a tie
	CpsDistribution d(0.0, atoms, 0);

	double prev_cdf = -1.0;
	for (double y = -40.0; y <= 40.0; y += 0.37) {
		const double f = d.cdf(y);
		CHECK(f >= prev_cdf);
		prev_cdf = f;
	}
	double prev_q = -1e18;
	for (double tau = 0.02; tau < 1.0; tau += 0.02) {
		const double q = d.quantile(tau);
		CHECK(q >= prev_q);
		// The quantile is itself an atom, so the cdf there reaches tau's rank.
		CHECK(d.cdf(q) + 1e-12 >= std::floor(tau * 26.0) / 26.0);
		prev_q = q;
	}
}

TEST_CASE("central interval uses the symmetric tail quantiles") {
	std::vector<double> atoms(19);
	for (std::size_t i = 0; i < atoms.size(); ++i) atoms[i] = static_cast<double>(i + 1);
	CpsDistribution d(10.0, atoms, 0);
	const auto [lo, hi] = d.interval(0.9);
	CHECK(lo == 1.0);   // ceil(0.05 * 20) = 1
	CHECK(hi == 19.0);  // ceil(0.95 * 20) = 19
	const auto [lo5, hi5] = d.interval(0.5);
	CHECK(lo5 == 5.0);
	CHECK(hi5 == 15.0);
	CHECK(lo5 <= hi5);
	CHECK_THROWS_AS(d.interval(0.0), DomainError);
	CHECK_THROWS_AS(d.interval(1.0), DomainError);
}

TEST_CASE("construction rejects empty or unsorted atoms") {
	CHECK_THROWS_AS(CpsDistribution(0.0, {}, 0), InsufficientDataError);
	CHECK_THROWS_AS(CpsDistribution(0.0, {2.0, 1.0}, 0), DomainError);
}

TEST_CASE("calibrate bins by base score and keeps per-category residuals") {
	const auto cal = grouped_cal();
	const auto model = CpsModel::calibrate(identity, cal.x, cal.y, {5, 50});

	REQUIRE(model.n_categories() == 5);
	REQUIRE(model.edges().size() == 4);
	CHECK(model.edges() == std::vector<double>{20.0, 30.0, 40.0, 50.0});
	for (std::size_t g = 0; g < 5; ++g) {
		const auto& res = model.residuals()[g];
		REQUIRE(res.size() == 60);
		CHECK(res.front() == doctest::Approx(100.0 * static_cast<double>(g)));
		CHECK(res.back() == doctest::Approx(100.0 * static_cast<double>(g) + 59.0));
		CHECK(std::is_sorted(res.begin(), res.end()));
	}

	// A score equal to an inner edge belongs to the bin on its right.
	CHECK(model.category_of(10.0) == 0);
	CHECK(model.category_of(20.0) == 1);
	CHECK(model.category_of(50.0) == 4);
	CHECK(model.category_of(19.999) == 0);

	const auto d = model.predict_from_score(10.0);
	CHECK(d.point() == 10.0);
	CHECK(d.category() == 0);
	REQUIRE(d.atoms().size() == 60);
	CHECK(d.atoms().front() == doctest::Approx(10.0));
	CHECK(d.atoms().back() == doctest::Approx(69.0));
	CHECK(d.quantile(0.5) == doctest::Approx(40.0));  // ceil(0.5*61) = 31 -> atom 30

	// predict() is predict_from_score() of the base output.
	const double x0 = 10.0;
	const auto via_fn = model.predict(identity, &x0);
	CHECK(via_fn.atoms() == d.atoms());
}

TEST_CASE("thin bins merge into a neighbour until min_cal holds") {
	Matrix x(300, 1);
	std::vector<double> y(300);
	for (std::size_t i = 0; i < 300; ++i) {
		x.at(i, 0) = i < 30 ? 10.0 : (i < 120 ? 20.0 : (i < 210 ? 30.0 : 40.0));
		y[i] = x.at(i, 0) + static_cast<double>(i % 7);
	}
	const auto model = CpsModel::calibrate(identity, x, y, {4, 50});
	REQUIRE(model.n_categories() == 3);
	CHECK(model.residuals()[0].size() == 120);  // the 30-row bin folded rightwards
	CHECK(model.residuals()[1].size() == 90);
	CHECK(model.residuals()[2].size() == 90);
	std::size_t total = 0;
	for (const auto& r : model.residuals()) total += r.size();
	CHECK(total == 300);
}

TEST_CASE("constant base score collapses to a single category") {
	Matrix x(250, 1);
	std::vector<double> y(250);
	Rng rng(5);
	for (std::size_t i = 0; i < 250; ++i) {
		x.at(i, 0) = 3.0;
		y[i] = 3.0 + rng.normal();
	}
	const auto model = CpsModel::calibrate(identity, x, y, {5, 50});
	CHECK(model.n_categories() == 1);
	CHECK(model.edges().empty());
	CHECK(model.residuals()[0].size() == 250);
}

TEST_CASE("calibration validation") {
	const auto cal = grouped_cal();
	CHECK_THROWS_WITH_AS(
		CpsModel::calibrate(identity, Matrix(225, 1), std::vector<double>(225, 1.0), {5, 50}),
		"cps: need at least 250 calibration points, got 225", InsufficientCalibrationError);
	CHECK_THROWS_AS(CpsModel::calibrate(identity, cal.x, std::vector<double>(299, 1.0), {5, 50}),
					LengthMismatchError);
	CHECK_THROWS_AS(CpsModel::calibrate(nullptr, cal.x, cal.y, {5, 50}), ConfigError);
	CHECK_THROWS_AS(CpsModel::calibrate(identity, cal.x, cal.y, {0, 50}), ConfigError);
	const CpsModel::BaseFn broken = [](const double*) { return std::nan(""); };
	CHECK_THROWS_AS(CpsModel::calibrate(broken, cal.x, cal.y, {5, 50}), DomainError);
}

TEST_CASE("checkpoint round trip preserves every residual") {
	const auto cal = grouped_cal();
	const auto model = CpsModel::calibrate(identity, cal.x, cal.y, {5, 50});
	testsupport::ScratchDir dir("cps");
	const auto path = dir.path("model.json");

	model.save(path);
	const auto back = CpsModel::load(path);
	CHECK(back.edges() == model.edges());
	REQUIRE(back.n_categories() == model.n_categories());
	for (std::size_t g = 0; g < model.n_categories(); ++g)
		CHECK(back.residuals()[g] == model.residuals()[g]);
	CHECK(back.predict_from_score(35.0).atoms() == model.predict_from_score(35.0).atoms());

	CHECK_THROWS_AS(CpsModel::load(dir.path("absent.json")), ParseError);
	{
		std::ofstream bad(dir.path("junk.json"));
		bad << "{not json";
	}
	CHECK_THROWS_AS(CpsModel::load(dir.path("junk.json")), ParseError);
	{
		std::ofstream wrong(dir.path("wrong.json"));
		wrong << R"({"format":"other","version":1,"edges":[],"residuals":[[1.0]]})";
	}
	CHECK_THROWS_AS(CpsModel::load(dir.path("wrong.json")), SchemaError);
	{
		std::ofstream mism(dir.path("mismatch.json"));
		mism << R"({"format":"mondrian-cps","version":1,"edges":[1.0],"residuals":[[1.0]]})";
	}
	CHECK_THROWS_AS(CpsModel::load(dir.path("mismatch.json")), SchemaError);
}

TEST_CASE("held-out coverage tracks the nominal level on iid data") {
	Rng rng(2024);
	const auto draw = [&rng](Matrix& x, std::vector<double>& y, std::size_t n) {
		x = Matrix(n, 1);
		y.resize(n);
		for (std::size_t i = 0; i < n; ++i) {
			x.at(i, 0) = rng.uniform(20.0, 80.0);
			y[i] = x.at(i, 0) + 6.0 * rng.normal();
		}
	};
	Matrix x_cal, x_test;
	std::vector<double> y_cal, y_test;
	draw(x_cal, y_cal, 600);
	draw(x_test, y_test, 600);

	const auto model = CpsModel::calibrate(identity, x_cal, y_cal, {5, 50});
	std::size_t hits = 0;
	for (std::size_t i = 0; i < y_test.size(); ++i) {
		const auto [lo, hi] = model.predict(identity, x_test.row(i)).interval(0.8);
		if (y_test[i] >= lo && y_test[i] <= hi) ++hits;
	}
	const double cov = static_cast<double>(hits) / static_cast<double>(y_test.size());
	CHECK(cov > 0.72);
	CHECK(cov < 0.88);
}

}  // TEST_SUITE
