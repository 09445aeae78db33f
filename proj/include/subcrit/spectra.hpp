#pragma once

#include "subcrit/common.hpp"

#include <sstream>

namespace subcrit {

namespace detail {

inline void require_finite(const Eigen::Ref<const Matrix>& y) {
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
            if (!std::isfinite(y(i, j))) {
                std::ostringstream os;
                os << "non-finite data entry at row " << i << ", column " << j;
                throw InputError(os.str());
            }
        }
    }
}

} // namespace detail

/// n x p observation matrix (rows are observations). Construction enforces
/// n >= 3, p >= 3 and finite entries.
class DataMatrix {
public:
    explicit DataMatrix(Matrix values) : values_(std::move(values)) {
        if (values_.rows() < 3 || values_.cols() < 3) {
            std::ostringstream os;
            os << "data matrix must be at least 3x3, got " << values_.rows() << "x" << values_.cols();
            throw DimensionError(os.str());
        }
        detail::require_finite(values_);
    }

    int n() const noexcept { return static_cast<int>(values_.rows()); }
    int p() const noexcept { return static_cast<int>(values_.cols()); }
    const Matrix& values() const noexcept { return values_; }

    /// Copy with every column centred at its sample mean.
    DataMatrix demeaned() const {
        Matrix centred = values_.rowwise() - values_.colwise().mean();
        return DataMatrix(std::move(centred));
    }

private:
    Matrix values_;
};

struct EigenReport {
    std::vector<double> cov_eigs;       // p eigenvalues of Y'Y/n, descending
    std::vector<double> companion_eigs; // n eigenvalues of YY'/n, descending
    int n = 0;
    int p = 0;
    double y_n = 0.0;

    double lambda1() const { return cov_eigs.at(0); }
    double lambda2() const { return cov_eigs.at(1); }
};

/// (1/n) Y'Y.
inline Matrix sample_covariance(const Eigen::Ref<const Matrix>& y) {
    detail::require_finite(y);
    const auto n = y.rows();
    const auto p = y.cols();
    if (n == 0 || p == 0) throw DimensionError("sample_covariance of an empty matrix");
    Matrix s = Matrix::Zero(p, p);
    s.selfadjointView<Eigen::Lower>().rankUpdate(y.transpose(), 1.0 / static_cast<double>(n));
    s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
    return s;
}

inline Matrix sample_covariance(const DataMatrix& data) { return sample_covariance(data.values()); }

namespace detail {

/// Gram matrix of the smaller side: (1/n) Y'Y when p <= n, else (1/n) YY'.
inline Matrix smaller_gram(const Eigen::Ref<const Matrix>& y) {
    const auto n = y.rows();
    const auto p = y.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    if (p <= n) {
        Matrix g = Matrix::Zero(p, p);
        g.selfadjointView<Eigen::Lower>().rankUpdate(y.transpose(), inv_n);
        return g;
    }
    Matrix g = Matrix::Zero(n, n);
    g.selfadjointView<Eigen::Lower>().rankUpdate(y, inv_n);
    return g;
}

/// Descending eigenvalues of a symmetric PSD matrix (lower triangle read).
/// Tiny negative round-off is clamped at zero; anything below
/// -1e-10 * lambda_1 is reported as a numeric failure.
inline std::vector<double> psd_eigenvalues_descending(const Matrix& lower) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(lower, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        std::ostringstream os;
        os << "symmetric eigensolver did not converge (dimension " << lower.rows()
           << ", max |entry| " << lower.cwiseAbs().maxCoeff() << ")";
        throw NumericError(os.str());
    }
    const Vector& ev = solver.eigenvalues(); // ascending
    const auto m = ev.size();
    std::vector<double> out(static_cast<std::size_t>(m));
    const double top = m > 0 ? std::max(ev(m - 1), 0.0) : 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        double v = ev(m - 1 - i);
        if (v < 0.0) {
            if (v < -1e-10 * top) {
                std::ostringstream os;
                os << "covariance eigenvalue " << v << " is negative beyond round-off (lambda_1 = " << top
                   << ")";
                throw NumericError(os.str());
            }
            v = 0.0;
        }
        out[static_cast<std::size_t>(i)] = v;
    }
    return out;
}

} // namespace detail

/// Spectra of Y'Y/n and YY'/n from a single min(n,p)-dimensional solve.
inline EigenReport spectrum(const Eigen::Ref<const Matrix>& y) {
    detail::require_finite(y);
    const int n = static_cast<int>(y.rows());
    const int p = static_cast<int>(y.cols());
    if (n == 0 || p == 0) throw DimensionError("spectrum of an empty matrix");

    std::vector<double> core = detail::psd_eigenvalues_descending(detail::smaller_gram(y));

    EigenReport r;
    r.n = n;
    r.p = p;
    r.y_n = static_cast<double>(p) / static_cast<double>(n);
    r.cov_eigs = core;
    r.companion_eigs = core;
    r.cov_eigs.resize(static_cast<std::size_t>(p), 0.0);
    r.companion_eigs.resize(static_cast<std::size_t>(n), 0.0);
    return r;
}

inline EigenReport spectrum(const DataMatrix& data) { return spectrum(data.values()); }

/// Spectrum after centring each column. Centring removes one degree of
/// freedom, so the report uses n - 1 as sample size (divisor and companion
/// dimension); the structural zero of the companion matrix is dropped.
inline EigenReport centred_spectrum(const DataMatrix& data) {
    const Matrix& y = data.values();
    const Matrix c = y.rowwise() - y.colwise().mean();
    EigenReport r = spectrum(c);
    const int m = r.n - 1;
    const double rescale = static_cast<double>(r.n) / static_cast<double>(m);
    for (double& v : r.cov_eigs) v *= rescale;
    for (double& v : r.companion_eigs) v *= rescale;
    r.companion_eigs.resize(static_cast<std::size_t>(m));
    if (r.p >= r.n) r.cov_eigs[static_cast<std::size_t>(m)] = 0.0;
    r.n = m;
    r.y_n = static_cast<double>(r.p) / static_cast<double>(m);
    return r;
}

/// Empirical spectral distribution (1/len) #{j : eig_j <= t}.
inline double esd(std::span<const double> eigs, double t) {
    if (eigs.empty()) return 0.0;
    std::size_t count = 0;
    for (double e : eigs) count += (e <= t) ? 1 : 0;
    return static_cast<double>(count) / static_cast<double>(eigs.size());
}

} // namespace subcrit
