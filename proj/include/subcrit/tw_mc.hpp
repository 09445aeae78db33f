#pragma once

#include "subcrit/common.hpp"
#include "subcrit/rng.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace subcrit {

enum class GoeSampler {
    tridiagonal, // Dumitriu-Edelman beta = 1 tridiagonal model, Sturm bisection
    dense        // full N x N GOE matrix and a dense symmetric eigensolver
};

inline const char* to_string(GoeSampler s) { return s == GoeSampler::dense ? "dense" : "tridiagonal"; }

inline constexpr std::uint64_t kDefaultTwSeed = 20240917;

struct TwTableKey {
    int d = 12;
    int goe_n = 2000;
    std::int64_t reps = 20000;
    std::uint64_t seed = kDefaultTwSeed;
    GoeSampler sampler = GoeSampler::tridiagonal;

    bool operator==(const TwTableKey&) const = default;
};

namespace detail {

/// Number of eigenvalues of the symmetric tridiagonal (diag, offdiag^2)
/// strictly below x.
inline int sturm_count_below(std::span<const double> diag, std::span<const double> off2, double x) {
    int count = 0;
    double d = diag[0] - x;
    if (d < 0.0) ++count;
    for (std::size_t i = 1; i < diag.size(); ++i) {
        if (d == 0.0) d = 1e-300;
        d = diag[i] - x - off2[i - 1] / d;
        if (d < 0.0) ++count;
    }
    return count;
}

/// Largest `d` eigenvalues of a symmetric tridiagonal matrix by bisection
/// to absolute tolerance `tol`. Every Sturm count also tightens the
/// brackets of the other wanted eigenvalues.
inline std::vector<double> tridiagonal_top(std::span<const double> diag, std::span<const double> off, int d,
                                           double tol = 0.0) {
    const std::size_t n = diag.size();
    std::vector<double> off2(off.size());
    double lo = diag[0], hi = diag[0];
    for (std::size_t i = 0; i < n; ++i) {
        const double left = i > 0 ? std::abs(off[i - 1]) : 0.0;
        const double right = i + 1 < n ? std::abs(off[i]) : 0.0;
        lo = std::min(lo, diag[i] - left - right);
        hi = std::max(hi, diag[i] + left + right);
    }
    for (std::size_t i = 0; i < off.size(); ++i) off2[i] = off[i] * off[i];
    if (tol <= 0.0) tol = 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi));

    // bracket j holds the (j+1)-th largest eigenvalue in [a_j, b_j]
    const auto dd = static_cast<std::size_t>(d);
    std::vector<double> a(dd, lo), b(dd, hi);
    const int total = static_cast<int>(n);
    std::vector<double> out(dd);
    for (std::size_t j = 0; j < dd; ++j) {
        if (j > 0) b[j] = std::min(b[j], b[j - 1]);
        while (b[j] - a[j] > tol) {
            const double mid = 0.5 * (a[j] + b[j]);
            if (mid <= a[j] || mid >= b[j]) break;
            // eigenvalues >= mid: the largest `above` ones
            const int above = total - sturm_count_below(diag, off2, mid);
            for (std::size_t i = j; i < dd; ++i) {
                if (static_cast<int>(i) < above)
                    a[i] = std::max(a[i], mid);
                else
                    b[i] = std::min(b[i], mid);
            }
        }
        out[j] = 0.5 * (a[j] + b[j]);
    }
    return out;
}

} // namespace detail

/// Top-d eigenvalues of one GOE(goe_n) draw W = (G + G')/sqrt(2), scaled as
/// goe_n^{2/3} (lambda_j(W)/sqrt(goe_n) - 2). Output is non-increasing.
inline std::vector<double> sample_goe_scaled_eigs(int goe_n, int d, Engine& rng,
                                                  GoeSampler sampler = GoeSampler::tridiagonal) {
    if (goe_n < 1 || d < 1) throw InputError("GOE size and d must be positive");
    if (d > goe_n) throw DimensionError("cannot take more eigenvalues than the GOE dimension");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(goe_n));
    std::vector<double> top;

    if (sampler == GoeSampler::tridiagonal) {
        std::vector<double> diag(static_cast<std::size_t>(goe_n));
        std::vector<double> off(static_cast<std::size_t>(goe_n - 1));
        for (int i = 0; i < goe_n; ++i) diag[static_cast<std::size_t>(i)] = std::sqrt(2.0) * normal(rng) * inv_sqrt_n;
        for (int i = 1; i < goe_n; ++i) {
            std::chi_squared_distribution<double> chi2(static_cast<double>(goe_n - i));
            off[static_cast<std::size_t>(i - 1)] = std::sqrt(chi2(rng)) * inv_sqrt_n;
        }
        // 1e-13 in the unscaled units is far below the n^{-2/3} resolution
        top = detail::tridiagonal_top(diag, off, d, 1e-13);
    } else {
        Matrix g(goe_n, goe_n);
        for (Eigen::Index j = 0; j < g.cols(); ++j)
            for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
        const Matrix w = (g + g.transpose()) * (inv_sqrt_n / std::sqrt(2.0));
        Eigen::SelfAdjointEigenSolver<Matrix> es(w, Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw NumericError("GOE eigensolver failed");
        top.resize(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) top[static_cast<std::size_t>(j)] = es.eigenvalues()(goe_n - 1 - j);
    }
    const double scale = std::pow(static_cast<double>(goe_n), 2.0 / 3.0);
    for (double& v : top) v = scale * (v - 2.0);
    return top;
}

/// Monte Carlo sample of the d-dimensional Tracy-Widom law: reps rows of d
/// non-increasing scaled edge eigenvalues. Immutable once built.
class TwTable {
public:
    TwTable(TwTableKey key, std::vector<double> samples) : key_(key), samples_(std::move(samples)) {
        if (key_.d < 1 || key_.reps < 1) throw InputError("TW table needs d >= 1 and reps >= 1");
        if (samples_.size() != static_cast<std::size_t>(key_.reps) * static_cast<std::size_t>(key_.d))
            throw DimensionError("TW table sample count does not match reps x d");
        for (std::int64_t i = 0; i < key_.reps; ++i) {
            for (int j = 0; j < key_.d; ++j) {
                const double v = at(i, j);
                if (!std::isfinite(v)) throw NumericError("TW table holds a non-finite sample");
                if (j > 0 && v > at(i, j - 1)) throw NumericError("TW table row is not non-increasing");
            }
        }
        sorted_top_.resize(static_cast<std::size_t>(key_.reps));
        for (std::int64_t i = 0; i < key_.reps; ++i) sorted_top_[static_cast<std::size_t>(i)] = at(i, 0);
        std::sort(sorted_top_.begin(), sorted_top_.end());
        if (key_.d >= 2) {
            sorted_gaps_.resize(static_cast<std::size_t>(key_.reps));
            for (std::int64_t i = 0; i < key_.reps; ++i) sorted_gaps_[static_cast<std::size_t>(i)] = at(i, 0) - at(i, 1);
            std::sort(sorted_gaps_.begin(), sorted_gaps_.end());
        }
    }

    const TwTableKey& key() const noexcept { return key_; }
    int d() const noexcept { return key_.d; }
    int goe_n() const noexcept { return key_.goe_n; }
    std::int64_t reps() const noexcept { return key_.reps; }
    std::uint64_t seed() const noexcept { return key_.seed; }
    const std::vector<double>& samples() const noexcept { return samples_; }

    double at(std::int64_t row, int col) const {
        return samples_[static_cast<std::size_t>(row) * static_cast<std::size_t>(key_.d) + static_cast<std::size_t>(col)];
    }

    /// zeta_1 - zeta_2 per replicate, ascending.
    std::span<const double> sorted_gaps() const {
        if (key_.d < 2) throw DimensionError("gap queries need d >= 2");
        return sorted_gaps_;
    }
    std::span<const double> sorted_top() const { return sorted_top_; }

    /// zeta_1 - zeta_2 in replicate order.
    std::vector<double> gaps() const {
        if (key_.d < 2) throw DimensionError("gap queries need d >= 2");
        std::vector<double> g(static_cast<std::size_t>(key_.reps));
        for (std::int64_t i = 0; i < key_.reps; ++i) g[static_cast<std::size_t>(i)] = at(i, 0) - at(i, 1);
        return g;
    }

private:
    TwTableKey key_;
    std::vector<double> samples_;
    std::vector<double> sorted_top_;
    std::vector<double> sorted_gaps_;
};

inline constexpr std::int64_t kMinQueryReps = 1000;

namespace detail {
inline void check_query(const TwTable& t, double alpha) {
    if (t.reps() < kMinQueryReps) {
        std::ostringstream os;
        os << "TW table has " << t.reps() << " replicates; quantile queries need at least " << kMinQueryReps;
        throw PrecisionError(os.str());
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("level must lie in (0,1)");
}
} // namespace detail

/// (1 - alpha)-quantile of zeta_1 - zeta_2.
inline double gap_quantile(const TwTable& table, double alpha) {
    if (table.d() < 2) throw DimensionError("gap_quantile needs d >= 2");
    detail::check_query(table, alpha);
    return quantile_type7_sorted(table.sorted_gaps(), 1.0 - alpha);
}

/// level-quantile of zeta_1 (one-dimensional Tracy-Widom).
inline double tw1_quantile(const TwTable& table, double level) {
    detail::check_query(table, level);
    return quantile_type7_sorted(table.sorted_top(), level);
}

/// Add-one Monte Carlo p-value: (1 + #{gap >= t}) / (reps + 1).
inline double gap_p_value(const TwTable& table, double t) {
    const auto g = table.sorted_gaps();
    const auto at_least = static_cast<double>(g.end() - std::lower_bound(g.begin(), g.end(), t));
    return (1.0 + at_least) / (static_cast<double>(g.size()) + 1.0);
}

/// max_{1<=j<=kappa} (zeta_j - zeta_{j+1}) / (zeta_{j+1} - zeta_{j+2}) per replicate.
inline std::vector<double> onatski_null_sample(const TwTable& table, int kappa) {
    if (kappa < 1) throw InputError("kappa must be at least 1");
    if (table.d() < kappa + 2) {
        std::ostringstream os;
        os << "Onatski statistic with kappa = " << kappa << " needs d >= " << kappa + 2 << ", table has d = " << table.d();
        throw DimensionError(os.str());
    }
    std::vector<double> out(static_cast<std::size_t>(table.reps()));
    for (std::int64_t i = 0; i < table.reps(); ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < kappa; ++j) {
            const double num = table.at(i, j) - table.at(i, j + 1);
            const double den = table.at(i, j + 1) - table.at(i, j + 2);
            best = std::max(best, num / den);
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

inline double onatski_critical(const TwTable& table, int kappa, double alpha) {
    detail::check_query(table, alpha);
    return quantile_type7(onatski_null_sample(table, kappa), 1.0 - alpha);
}

/// Sorted Onatski null sample for repeated critical value / p-value queries.
class OnatskiReference {
public:
    OnatskiReference(const TwTable& table, int kappa) : kappa_(kappa), sorted_(onatski_null_sample(table, kappa)) {
        std::sort(sorted_.begin(), sorted_.end());
    }
    int kappa() const noexcept { return kappa_; }
    double critical(double alpha) const {
        if (static_cast<std::int64_t>(sorted_.size()) < kMinQueryReps)
            throw PrecisionError("Onatski reference needs at least 1000 replicates");
        if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("level must lie in (0,1)");
        return quantile_type7_sorted(sorted_, 1.0 - alpha);
    }
    double p_value(double r) const {
        const auto at_least = static_cast<double>(sorted_.end() - std::lower_bound(sorted_.begin(), sorted_.end(), r));
        return (1.0 + at_least) / (static_cast<double>(sorted_.size()) + 1.0);
    }

private:
    int kappa_;
    std::vector<double> sorted_;
};

/// Builds a table; replicate i draws from stream derive_seed(seed, i), so the
/// result does not depend on the thread count.
inline TwTable build_table(const TwTableKey& key, unsigned threads = 0) {
    if (key.d < 1 || key.goe_n < 1 || key.reps < 1) throw InputError("TW table needs positive d, goe_n and reps");
    if (key.d > key.goe_n) throw DimensionError("TW table d exceeds the GOE dimension");
    std::vector<double> samples(static_cast<std::size_t>(key.reps) * static_cast<std::size_t>(key.d));
    parallel_for(static_cast<std::size_t>(key.reps), threads, [&](std::size_t i) {
        Engine rng = replicate_engine(key.seed, i);
        const auto row = sample_goe_scaled_eigs(key.goe_n, key.d, rng, key.sampler);
        std::copy(row.begin(), row.end(), samples.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(key.d)));
    });
    return TwTable(key, std::move(samples));
}

// ---------------------------------------------------------------------------
// Cache file: "TWMC", u32 format, u32 d, u32 goe_n, u64 reps, u64 seed, then
// reps x d row-major little-endian binary64.

inline constexpr std::uint32_t kTwFormatVersion = 1;

namespace detail {

inline void put_le(std::ostream& os, std::uint64_t v, int bytes) {
    for (int b = 0; b < bytes; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline std::uint64_t get_le(std::istream& is, int bytes) {
    std::uint64_t v = 0;
    for (int b = 0; b < bytes; ++b) {
        const int c = is.get();
        if (c == std::char_traits<char>::eof()) throw CacheError("truncated TW cache file");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
    }
    return v;
}

} // namespace detail

inline std::filesystem::path cache_file_name(const TwTableKey& key) {
    std::ostringstream os;
    os << "twmc_d" << key.d << "_n" << key.goe_n << "_r" << key.reps << "_s" << key.seed << "_" << to_string(key.sampler)
       << ".bin";
    return os.str();
}

inline void write_table(const std::filesystem::path& path, const TwTable& table) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CacheError("cannot write TW cache file: " + path.string());
    os.write("TWMC", 4);
    detail::put_le(os, kTwFormatVersion, 4);
    detail::put_le(os, static_cast<std::uint32_t>(table.d()), 4);
    detail::put_le(os, static_cast<std::uint32_t>(table.goe_n()), 4);
    detail::put_le(os, static_cast<std::uint64_t>(table.reps()), 8);
    detail::put_le(os, table.seed(), 8);
    for (double v : table.samples()) detail::put_le(os, std::bit_cast<std::uint64_t>(v), 8);
    if (!os) throw CacheError("failed while writing TW cache file: " + path.string());
}

/// Reads a cache file. The sampler is not stored in the header; it is taken
/// from `sampler` (the cache file name carries it).
inline TwTable read_table(const std::filesystem::path& path, GoeSampler sampler = GoeSampler::tridiagonal) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CacheError("cannot open TW cache file: " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "TWMC") throw CacheError("bad magic in TW cache file: " + path.string());
    const auto format = static_cast<std::uint32_t>(detail::get_le(is, 4));
    if (format != kTwFormatVersion) throw CacheError("unsupported TW cache format version " + std::to_string(format));
    TwTableKey key;
    key.d = static_cast<int>(detail::get_le(is, 4));
    key.goe_n = static_cast<int>(detail::get_le(is, 4));
    key.reps = static_cast<std::int64_t>(detail::get_le(is, 8));
    key.seed = detail::get_le(is, 8);
    key.sampler = sampler;
    if (key.d < 1 || key.reps < 1 || key.d > 100000 || key.reps > (std::int64_t{1} << 40))
        throw CacheError("implausible TW cache header");
    std::vector<double> samples(static_cast<std::size_t>(key.reps) * static_cast<std::size_t>(key.d));
    for (double& v : samples) v = std::bit_cast<double>(detail::get_le(is, 8));
    if (is.peek() != std::char_traits<char>::eof()) throw CacheError("trailing bytes in TW cache file");
    try {
        return TwTable(key, std::move(samples));
    } catch (const Error& e) {
        throw CacheError(std::string("corrupt TW cache file: ") + e.what());
    }
}

struct TableLoad {
    TwTable table;
    bool loaded_from_cache = false;
    std::string warning; // non-empty when a cache file was rejected and rebuilt
};

/// Loads the cached table for `key` from `cache_dir` when the header matches
/// exactly; otherwise builds, persists and returns a fresh table.
inline TableLoad build_or_load(const std::filesystem::path& cache_dir, const TwTableKey& key, unsigned threads = 0) {
    std::error_code ec;
    std::filesystem::create_directories(cache_dir, ec);
    if (ec) throw CacheError("cannot create cache directory " + cache_dir.string() + ": " + ec.message());
    const auto path = cache_dir / cache_file_name(key);
    std::string warning;
    if (std::filesystem::exists(path)) {
        try {
            TwTable t = read_table(path, key.sampler);
            if (t.key() == key) return {std::move(t), true, {}};
            warning = "TW cache header mismatch, rebuilding " + path.string();
        } catch (const CacheError& e) {
            warning = std::string(e.what()) + "; rebuilding";
        }
    }
    TwTable t = build_table(key, threads);
    write_table(path, t);
    return {std::move(t), false, warning};
}

inline void write_table_csv(std::ostream& os, const TwTable& table) {
    for (int j = 0; j < table.d(); ++j) os << (j ? "," : "") << "zeta_" << (j + 1);
    os << "\n";
    os.precision(17);
    for (std::int64_t i = 0; i < table.reps(); ++i) {
        for (int j = 0; j < table.d(); ++j) os << (j ? "," : "") << table.at(i, j);
        os << "\n";
    }
}

} // namespace subcrit
