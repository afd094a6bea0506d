#pragma once

// Shared helpers for the test binaries: moments, adjusted Rand index and a
// tiny deterministic scratch-directory guard.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace testsupport {

inline double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean_of: empty");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

inline double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

// Adjusted Rand index between two labelings of the same items.
template <typename A, typename B>
double adjusted_rand_index(const std::vector<A>& a, const std::vector<B>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("adjusted_rand_index: size mismatch");
    std::map<std::pair<A, B>, double> joint;
    std::map<A, double> rows;
    std::map<B, double> cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    auto comb2 = [](double n) { return n * (n - 1.0) / 2.0; };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [k, n] : joint) sum_ij += comb2(n);
    for (const auto& [k, n] : rows) sum_a += comb2(n);
    for (const auto& [k, n] : cols) sum_b += comb2(n);
    const double total = comb2(static_cast<double>(a.size()));
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;  // both labelings trivial
    return (sum_ij - expected) / (max_index - expected);
}

// Creates a unique scratch directory and removes it on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& tag) {
        namespace fs = std::filesystem;
        base_ = fs::temp_directory_path() / ("lastmile_" + tag + "_" + std::to_string(counter_++));
        fs::remove_all(base_);
        fs::create_directories(base_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(base_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    std::filesystem::path path(const std::string& name = "") const {
        return name.empty() ? base_ : base_ / name;
    }

private:
    std::filesystem::path base_;
    static inline int counter_ = 0;
};

}  // namespace testsupport
