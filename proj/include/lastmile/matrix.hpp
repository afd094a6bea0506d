#pragma once

#include <cstddef>
#include <vector>

#include "lastmile/errors.hpp"

namespace lastmile {

// Row-major dense matrix of doubles. Deliberately minimal: the numeric code in
// this library works on raw rows, so all we need is storage plus bounds-checked
// construction.
struct Matrix {
	std::size_t rows = 0;
	std::size_t cols = 0;
	std::vector<double> data;  // rows*cols, row-major

	Matrix() = default;
	Matrix(std::size_t r, std::size_t c, double fill = 0.0)
		: rows(r), cols(c), data(r * c, fill) {}

	double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
	double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

	const double* row(std::size_t r) const { return data.data() + r * cols; }
	double* row(std::size_t r) { return data.data() + r * cols; }

	void require_shape(std::size_t r, std::size_t c, const char* what) const {
		if (rows != r || cols != c)
			throw ShapeError(std::string(what) + ": expected " + std::to_string(r) + "x" +
							 std::to_string(c) + ", got " + std::to_string(rows) + "x" +
							 std::to_string(cols));
	}
};

}  // namespace lastmile
