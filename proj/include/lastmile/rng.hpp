#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "lastmile/errors.hpp"

namespace lastmile {

// Deterministic random layer. mt19937_64 output is pinned by the standard,
// but the standard *distributions* (normal, poisson, shuffle) are not, so every
// transformation here is spelled out explicitly. Given a seed, the stream of
// draws is bit-identical across platforms and compilers.
class Rng {
public:
	explicit Rng(std::uint64_t seed) : eng_(seed) {}

	std::uint64_t next_u64() { return eng_(); }

	// Uniform in [0, 1) with 53 bits of mantissa.
	double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

	// Uniform in (0, 1); never returns an exact endpoint so inverse-CDF
	// transforms stay finite.
	double uniform_open() {
		double u;
		do { u = uniform01(); } while (u == 0.0);
		return u;
	}

	double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

	// Unbiased integer in [0, n) by rejection on the top of the 64-bit stream.
	std::uint64_t below(std::uint64_t n) {
		if (n == 0) throw DomainError("Rng::below: n must be positive");
		const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
		std::uint64_t x;
		do { x = eng_(); } while (x >= limit);
		return x % n;
	}

	double normal();                 // standard normal via inverse CDF
	double lognormal(double mu, double sigma);
	std::uint32_t poisson(double lambda);   // CDF inversion; lambda modest

	template <typename T>
	void shuffle(std::vector<T>& v) {
		for (std::size_t i = v.size(); i > 1; --i) {
			std::size_t j = static_cast<std::size_t>(below(i));
			std::swap(v[i - 1], v[j]);
		}
	}

private:
	std::mt19937_64 eng_;
};

}  // namespace lastmile
