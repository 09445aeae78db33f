#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace subcrit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error hierarchy. Each family maps onto one CLI exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

class InputError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class IndexError : public InputError {
public:
    using InputError::InputError;
};

class DimensionError : public InputError {
public:
    using InputError::InputError;
};

class DomainError : public InputError {
public:
    using InputError::InputError;
};

/// Raised when a Monte Carlo table is too small for the requested query.
class PrecisionError : public InputError {
public:
    using InputError::InputError;
};

class ParseError : public InputError {
public:
    using InputError::InputError;
};

class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class DegenerateSpectrumError : public NumericError {
public:
    using NumericError::NumericError;
};

class CacheError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

inline bool is_sorted_descending(std::span<const double> v) {
    return std::is_sorted(v.begin(), v.end(), std::greater<>());
}

inline std::vector<double> sorted_descending(std::vector<double> v) {
    std::sort(v.begin(), v.end(), std::greater<>());
    return v;
}

inline double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sd_of(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Type-7 quantile (linear interpolation between order statistics) of an
/// ascending sorted sample.
inline double quantile_type7_sorted(std::span<const double> sorted, double level) {
    if (sorted.empty()) throw InputError("quantile of an empty sample");
    if (!(level >= 0.0 && level <= 1.0)) throw DomainError("quantile level must lie in [0,1]");
    const double h = level * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile_type7(std::vector<double> sample, double level) {
    std::sort(sample.begin(), sample.end());
    return quantile_type7_sorted(sample, level);
}

/// Two-sample Kolmogorov-Smirnov distance sup_t |F_a(t) - F_b(t)|.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw InputError("KS distance of an empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double t = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= t) ++i;
        while (j < b.size() && b[j] <= t) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

} // namespace subcrit
