#pragma once

#include "subcrit/subcrit.hpp"

#include <cstdlib>
#include <random>

namespace testing {

/// The default-precision table, built by the ctest fixture into
/// SUBCRIT_CACHE_DIR (or built here when run by hand).
inline const subcrit::TwTable& default_table() {
    static const subcrit::TwTable table = [] {
        const char* dir = std::getenv("SUBCRIT_CACHE_DIR");
        return subcrit::build_or_load(dir ? dir : "twcache", subcrit::TwTableKey{}).table;
    }();
    return table;
}

/// Small table for fast tests: quantiles are rough but the plumbing is real.
inline const subcrit::TwTable& small_table() {
    static const subcrit::TwTable table = [] {
        subcrit::TwTableKey key;
        key.d = 12;
        key.goe_n = 200;
        key.reps = 4000;
        key.seed = 77;
        return subcrit::build_table(key);
    }();
    return table;
}

inline subcrit::Matrix gaussian(int n, int p, std::uint64_t seed) {
    subcrit::Engine rng = subcrit::replicate_engine(seed, 0);
    std::normal_distribution<double> z(0.0, 1.0);
    subcrit::Matrix y(n, p);
    for (int j = 0; j < p; ++j)
        for (int i = 0; i < n; ++i) y(i, j) = z(rng);
    return y;
}

/// Null data with identity covariance.
inline subcrit::EigenReport null_report(int n, int p, std::uint64_t seed) {
    return subcrit::spectrum(gaussian(n, p, seed));
}

/// Data with covariance diag(leading..., 1, ..., 1).
inline subcrit::EigenReport spiked_report(int n, int p, const std::vector<double>& leading, std::uint64_t seed) {
    subcrit::Matrix y = gaussian(n, p, seed);
    for (std::size_t j = 0; j < leading.size(); ++j) y.col(static_cast<Eigen::Index>(j)) *= std::sqrt(leading[j]);
    return subcrit::spectrum(y);
}

} // namespace testing
