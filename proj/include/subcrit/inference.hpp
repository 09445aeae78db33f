#pragma once

#include "subcrit/estimators.hpp"
#include "subcrit/tw_mc.hpp"

#include <memory>
#include <optional>

namespace subcrit {

/// T_n = (n^{2/3} / sigma_hat) (lambda_1 - lambda_2).
inline double t_statistic(double lambda1, double lambda2, double sigma_hat, int n) {
    if (lambda1 < lambda2) throw InputError("t_statistic: lambda1 must be >= lambda2");
    if (!(sigma_hat > 0.0)) throw DomainError("t_statistic: sigma_hat must be positive");
    if (n <= 0) throw InputError("t_statistic: n must be positive");
    return std::pow(static_cast<double>(n), 2.0 / 3.0) * (lambda1 - lambda2) / sigma_hat;
}

/// R_n(kappa) = max_{j <= kappa} (l_j - l_{j+1}) / (l_{j+1} - l_{j+2}).
inline double onatski(std::span<const double> eigs, int kappa) {
    if (kappa < 1) throw InputError("onatski: kappa must be at least 1");
    if (eigs.size() < static_cast<std::size_t>(kappa) + 2)
        throw DimensionError("onatski: need at least kappa + 2 eigenvalues");
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < kappa; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        const double den = eigs[jj + 1] - eigs[jj + 2];
        if (!(den > 0.0)) {
            std::ostringstream os;
            os << "onatski: zero eigengap between positions " << j + 2 << " and " << j + 3;
            throw DegenerateSpectrumError(os.str());
        }
        best = std::max(best, (eigs[jj] - eigs[jj + 1]) / den);
    }
    return best;
}

/// K_hat = min{k : T_{n,k} < n^nu} - 1, with T_{n,k} the scaled k-th gap.
/// Scans k = 1 .. eigs.size() - 1.
inline int k_hat(std::span<const double> eigs, double sigma_hat, int n, double nu = 1.0 / 3.0) {
    if (!(nu > 0.0 && nu < 2.0 / 3.0)) throw DomainError("k_hat: nu must lie in (0, 2/3)");
    if (!(sigma_hat > 0.0)) throw DomainError("k_hat: sigma_hat must be positive");
    if (eigs.size() < 2) throw DimensionError("k_hat: need at least two eigenvalues");
    const double threshold = std::pow(static_cast<double>(n), nu);
    const double scale = std::pow(static_cast<double>(n), 2.0 / 3.0) / sigma_hat;
    for (std::size_t k = 1; k < eigs.size(); ++k) {
        if (scale * (eigs[k - 1] - eigs[k]) < threshold) return static_cast<int>(k) - 1;
    }
    throw NumericError("k_hat: every eigengap exceeds the threshold n^nu");
}

struct EpsilonSearch {
    double eps_min = 1e-4;
    double eps_max = 0.999;
    double tolerance = 1e-4;   // on epsilon
    double t_tolerance = 1e-4; // keep bisecting until T(eps_hat) - q is this small
};

struct TestOptions {
    double epsilon = 0.2;
    double alpha = 0.05;
    double nu = 1.0 / 3.0;
    bool demean = false;
    std::optional<int> kappa; // Onatski comparison
    bool want_epsilon_hat = true;
    bool want_k_hat = true;
    EpsilonSearch search{};
    QuestOptions quest{};
};

struct EpsilonHat {
    double value = std::numeric_limits<double>::infinity(); // +inf: T(eps_max) < q
    bool at_lower_bound = false;
    bool finite() const { return std::isfinite(value); }
};

struct TestReport {
    int n = 0;
    int p = 0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double t_n = 0.0;
    double sigma_hat = 0.0;
    double xi_hat = 0.0;
    double epsilon = 0.0;
    double alpha = 0.0;
    double critical = 0.0;
    double p_value = 1.0;
    bool reject = false;
    EpsilonHat epsilon_hat{};
    double ci_lambda1_lower = 0.0;
    bool ci_lambda1_informative = false;
    double ci_rn_lower = 0.0;
    double ci_rn_upper = 0.0;
    std::optional<int> k_hat;
    std::optional<int> kappa;
    std::optional<double> onatski;
    std::optional<double> onatski_critical;
    std::optional<double> onatski_p_value;
    bool degenerate = false;
    bool quest_converged = true;
    std::vector<std::string> notes;
};

/// Everything the test needs that does not depend on epsilon.
struct PreparedSample {
    EigenReport report;
    double xi_hat = 0.0;
    SpectrumEstimate estimate;
};

inline PreparedSample prepare(EigenReport report, const SpectrumEstimator& estimator) {
    if (report.cov_eigs.size() < 2) throw DimensionError("need at least two eigenvalues");
    if (!(report.lambda2() > 0.0)) throw DegenerateSpectrumError("second sample eigenvalue is zero");
    PreparedSample s;
    s.xi_hat = xi_hat(report);
    s.estimate = estimator.estimate(report);
    s.report = std::move(report);
    return s;
}

struct StatisticAt {
    double t_n = 0.0;
    double sigma_hat = 0.0;
};

inline StatisticAt statistic_at(const PreparedSample& s, double epsilon) {
    const TruncatedSpectrum trunc = truncate_spectrum(s.estimate, s.xi_hat, epsilon);
    StatisticAt out;
    out.sigma_hat = sigma_hat(trunc, s.report.y_n);
    out.t_n = t_statistic(s.report.lambda1(), s.report.lambda2(), out.sigma_hat, s.report.n);
    return out;
}

/// eps_hat = inf{eps : T_n(eps) >= q}, by bisection on the non-decreasing
/// map eps -> T_n(eps).
inline EpsilonHat epsilon_hat(const PreparedSample& s, double q, const EpsilonSearch& opt = {}) {
    if (!(opt.eps_min > 0.0 && opt.eps_min < opt.eps_max && opt.eps_max < 1.0))
        throw DomainError("epsilon search bracket must satisfy 0 < eps_min < eps_max < 1");
    EpsilonHat out;
    if (statistic_at(s, opt.eps_min).t_n >= q) {
        out.value = opt.eps_min;
        out.at_lower_bound = true;
        return out;
    }
    double t_hi = statistic_at(s, opt.eps_max).t_n;
    if (t_hi < q) return out;
    double lo = opt.eps_min, hi = opt.eps_max;
    for (int it = 0; it < 200; ++it) {
        if (hi - lo <= opt.tolerance && t_hi - q <= opt.t_tolerance) break;
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double t = statistic_at(s, mid).t_n;
        if (t >= q) {
            hi = mid;
            t_hi = t;
        } else {
            lo = mid;
        }
    }
    out.value = hi;
    return out;
}

struct Intervals {
    double lambda1_lower = 0.0;
    bool lambda1_informative = false;
    double rn_lower = 0.0;
    double rn_upper = 0.0;
};

/// lambda_1(Sigma) > 1/((1 + eps_hat) xi_hat), and
/// r_n in lambda_1(Sigma_hat) -+ |q'_{alpha/2}| sigma_hat / n^{2/3}.
inline Intervals confidence_intervals(double lambda1, double sigma_hat_value, double xi_hat_value, int n,
                                      const EpsilonHat& eps_hat, double tw1_half_alpha_quantile) {
    Intervals ci;
    if (eps_hat.finite()) {
        ci.lambda1_lower = 1.0 / ((1.0 + eps_hat.value) * xi_hat_value);
        ci.lambda1_informative = true;
    }
    const double half = std::abs(tw1_half_alpha_quantile) * sigma_hat_value / std::pow(static_cast<double>(n), 2.0 / 3.0);
    ci.rn_lower = lambda1 - half;
    ci.rn_upper = lambda1 + half;
    return ci;
}

inline Intervals confidence_intervals(double lambda1, double sigma_hat_value, double xi_hat_value, int n,
                                      const EpsilonHat& eps_hat, double alpha, const TwTable& table) {
    return confidence_intervals(lambda1, sigma_hat_value, xi_hat_value, n, eps_hat, tw1_quantile(table, alpha / 2.0));
}

namespace detail {

inline void check_levels(const TestOptions& opt) {
    if (!(opt.epsilon > 0.0 && opt.epsilon < 1.0)) throw DomainError("epsilon must lie in (0,1)");
    if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");
}

inline TestReport degenerate_report(const EigenReport& r, const TestOptions& opt, const std::string& why) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    TestReport rep;
    rep.n = r.n;
    rep.p = r.p;
    rep.lambda1 = r.cov_eigs.empty() ? nan : r.cov_eigs[0];
    rep.lambda2 = r.cov_eigs.size() > 1 ? r.cov_eigs[1] : nan;
    rep.epsilon = opt.epsilon;
    rep.alpha = opt.alpha;
    rep.t_n = rep.sigma_hat = rep.xi_hat = rep.critical = nan;
    rep.ci_lambda1_lower = rep.ci_rn_lower = rep.ci_rn_upper = nan;
    rep.p_value = nan;
    rep.reject = false;
    rep.degenerate = true;
    rep.notes.push_back("degenerate spectrum: " + why);
    return rep;
}

} // namespace detail

/// Full test on a precomputed spectrum. An Onatski reference may be passed
/// to avoid rebuilding the null sample on every call.
inline TestReport run_test(const EigenReport& report, const TwTable& table, const TestOptions& opt = {},
                           const SpectrumEstimator* estimator = nullptr,
                           const OnatskiReference* onatski_ref = nullptr) {
    detail::check_levels(opt);
    const QuantileMatchingEstimator fallback(opt.quest);
    const SpectrumEstimator& est = estimator ? *estimator : fallback;

    PreparedSample s;
    try {
        s = prepare(report, est);
    } catch (const DegenerateSpectrumError& e) {
        return detail::degenerate_report(report, opt, e.what());
    }

    TestReport rep;
    rep.n = report.n;
    rep.p = report.p;
    rep.lambda1 = report.lambda1();
    rep.lambda2 = report.lambda2();
    rep.epsilon = opt.epsilon;
    rep.alpha = opt.alpha;
    rep.xi_hat = s.xi_hat;
    rep.quest_converged = s.estimate.converged;
    if (!s.estimate.converged) rep.notes.push_back("spectrum estimate stopped before its tolerance was met");

    const StatisticAt at = statistic_at(s, opt.epsilon);
    rep.t_n = at.t_n;
    rep.sigma_hat = at.sigma_hat;
    rep.critical = gap_quantile(table, opt.alpha);
    rep.p_value = gap_p_value(table, rep.t_n);
    rep.reject = rep.t_n > rep.critical;

    if (opt.want_epsilon_hat) rep.epsilon_hat = epsilon_hat(s, rep.critical, opt.search);
    const Intervals ci = confidence_intervals(rep.lambda1, rep.sigma_hat, rep.xi_hat, rep.n, rep.epsilon_hat,
                                              opt.alpha, table);
    rep.ci_lambda1_lower = ci.lambda1_lower;
    rep.ci_lambda1_informative = opt.want_epsilon_hat && ci.lambda1_informative;
    rep.ci_rn_lower = ci.rn_lower;
    rep.ci_rn_upper = ci.rn_upper;

    if (opt.want_k_hat) {
        const auto m = static_cast<std::size_t>(std::min(report.n, report.p));
        try {
            rep.k_hat = k_hat(std::span<const double>(report.cov_eigs.data(), m), rep.sigma_hat, rep.n, opt.nu);
        } catch (const NumericError& e) {
            rep.notes.push_back(e.what());
        }
    }

    if (opt.kappa) {
        rep.kappa = *opt.kappa;
        std::optional<OnatskiReference> local;
        if (!onatski_ref || onatski_ref->kappa() != *opt.kappa) {
            local.emplace(table, *opt.kappa);
            onatski_ref = &*local;
        }
        rep.onatski = onatski(report.cov_eigs, *opt.kappa);
        rep.onatski_critical = onatski_ref->critical(opt.alpha);
        rep.onatski_p_value = onatski_ref->p_value(*rep.onatski);
    }
    return rep;
}

inline TestReport run_test(const DataMatrix& data, const TwTable& table, const TestOptions& opt = {},
                           const SpectrumEstimator* estimator = nullptr) {
    const EigenReport report = opt.demean ? centred_spectrum(data) : spectrum(data);
    return run_test(report, table, opt, estimator);
}

} // namespace subcrit
