#pragma once

#include "subcrit/mp_core.hpp"
#include "subcrit/quest.hpp"
#include "subcrit/spectra.hpp"

namespace subcrit {

/// Estimated population eigenvalues capped at 1/(xi_hat (1 + epsilon)).
struct TruncatedSpectrum {
    std::vector<double> lambdas; // descending, strictly positive, <= cap
    double cap = 0.0;
    double epsilon = 0.0;
    double xi_hat = 0.0;

    /// Uniform-weight atomic measure over the truncated eigenvalues.
    SpectralModel model(double y) const { return SpectralModel::uniform(lambdas, y); }
};

struct BootstrapNormalizers {
    double xi_tilde0 = 0.0;
    double r_tilde = 0.0;
    double sigma_tilde = 0.0;
};

inline constexpr double kTieTolerance = 1e-12;

/// True when lambda_1 and lambda_2 coincide up to relative tolerance 1e-12.
inline bool leading_tie(double lambda1, double lambda2) {
    return std::abs(lambda1 - lambda2) <= kTieTolerance * std::max(std::abs(lambda1), 1e-300);
}

/// xi_hat = -s_tilde(lambda_1), where s_tilde(z) = (1/n) sum_{j>=2} 1/(lambda_j - z)
/// runs over the companion spectrum; z = lambda_1 + 1 when lambda_1 = lambda_2.
inline double xi_hat(const EigenReport& report) {
    const auto& c = report.companion_eigs;
    if (c.size() < 2) throw DimensionError("xi_hat needs at least two companion eigenvalues");
    const double l1 = report.cov_eigs.at(0);
    const double l2 = report.cov_eigs.size() > 1 ? report.cov_eigs[1] : 0.0;
    const double z = leading_tie(l1, l2) ? l1 + 1.0 : l1;
    double s = 0.0;
    for (std::size_t j = 1; j < c.size(); ++j) s += 1.0 / (c[j] - z);
    return -s / static_cast<double>(c.size());
}

/// Elementwise minimum of the estimated eigenvalues with 1/(xi_hat (1 + epsilon)).
inline TruncatedSpectrum truncate_spectrum(const SpectrumEstimate& est, double xi_hat_value, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("epsilon must lie in (0,1)");
    if (!(xi_hat_value > 0.0) || !std::isfinite(xi_hat_value)) throw DomainError("xi_hat must be positive and finite");
    TruncatedSpectrum t;
    t.epsilon = epsilon;
    t.xi_hat = xi_hat_value;
    t.cap = 1.0 / (xi_hat_value * (1.0 + epsilon));
    t.lambdas.reserve(est.quantile_eigs.size());
    for (double v : est.quantile_eigs) {
        if (!(v > 0.0)) throw DomainError("spectrum estimate must be strictly positive");
        t.lambdas.push_back(std::min(v, t.cap));
    }
    t.lambdas = sorted_descending(std::move(t.lambdas));
    return t;
}

/// Plug-in scale estimate: cube root of
/// (1/xi_hat^3)(1 + y_n int (lambda xi_hat/(1 - lambda xi_hat))^3 dH_tilde).
inline double sigma_hat(const TruncatedSpectrum& trunc, double y_n) {
    return std::cbrt(sigma_cubed(trunc.model(y_n), trunc.xi_hat));
}

inline XiSolution xi_tilde0_solution(const TruncatedSpectrum& trunc, int n) {
    const double y = static_cast<double>(trunc.lambdas.size()) / static_cast<double>(n);
    return solve_xi(trunc.model(y), n, 0);
}

inline double xi_tilde0(const TruncatedSpectrum& trunc, int n) { return xi_tilde0_solution(trunc, n).xi; }

/// Centring and scale of the bootstrap world, built from xi_tilde0 (not xi_hat).
inline BootstrapNormalizers bootstrap_normalizers(const TruncatedSpectrum& trunc, double y_n, int n) {
    const SpectralModel model = trunc.model(y_n);
    BootstrapNormalizers b;
    b.xi_tilde0 = solve_xi(model, n, 0).xi;
    b.r_tilde = edge(model, b.xi_tilde0);
    b.sigma_tilde = std::cbrt(sigma_cubed(model, b.xi_tilde0));
    return b;
}

} // namespace subcrit
