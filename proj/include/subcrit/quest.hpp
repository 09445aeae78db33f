#pragma once

#include "subcrit/mp_core.hpp"
#include "subcrit/spectra.hpp"

#include <fstream>
#include <memory>
#include <optional>

namespace subcrit {

/// Estimated population spectrum, as its p quantile eigenvalues.
struct SpectrumEstimate {
    std::vector<double> quantile_eigs; // descending, strictly positive
    double fit_residual = 0.0;         // mean squared quantile mismatch
    int iterations = 0;
    bool converged = true;             // tolerance met, or the final fit is within fit_tolerance
};

struct ForwardMapOptions {
    int grid_points = 512;
    double eta = 0.0; // 0 selects 1e-5 * support scale
};

namespace detail {

/// Grid on [lo, hi] mixing equispaced points, geometric points (resolves
/// small eigenvalues of fast-decaying spectra) and points clustered
/// quadratically at both ends (square-root edges).
inline std::vector<double> forward_grid(double lo, double hi, int points) {
    const int g = std::max(points, 16);
    const int per = g / 4;
    std::vector<double> x;
    x.reserve(static_cast<std::size_t>(4 * per + 2));
    const double span = hi - lo;
    for (int i = 0; i <= per; ++i) {
        const double u = static_cast<double>(i) / per;
        x.push_back(lo + span * u);
        x.push_back(lo * std::pow(hi / lo, u));
        x.push_back(hi - span * 0.25 * u * u);
        x.push_back(lo + span * 0.25 * u * u);
    }
    std::sort(x.begin(), x.end());
    std::vector<double> out;
    out.reserve(x.size());
    for (double v : x) {
        if (v < lo || v > hi) continue;
        if (out.empty() || v - out.back() > 1e-12 * hi) out.push_back(v);
    }
    return out;
}

/// Merges exactly equal neighbouring atoms; the forward map only depends on
/// the distribution.
inline SpectralModel compress(const SpectralModel& model) {
    std::vector<double> a, w;
    for (std::size_t i = 0; i < model.size(); ++i) {
        if (!a.empty() && a.back() == model.atoms()[i])
            w.back() += model.weights()[i];
        else {
            a.push_back(model.atoms()[i]);
            w.push_back(model.weights()[i]);
        }
    }
    double total = 0.0;
    for (double v : w) total += v;
    for (double& v : w) v /= total;
    return SpectralModel(std::move(a), std::move(w), model.y());
}

} // namespace detail

/// Model-implied sample eigenvalue quantiles: inverts the cumulative
/// trapezoid integral of mp_density at levels (j - 1/2)/p and returns them
/// descending. For y > 1 the mass 1 - 1/y at zero yields zero quantiles.
inline std::vector<double> forward_map(const SpectralModel& model_in, int p, const ForwardMapOptions& opt = {}) {
    if (p <= 0) throw InputError("forward_map: p must be positive");
    const SpectralModel model = detail::compress(model_in);
    const double y = model.y();
    const double sy = 1.0 - std::sqrt(y);
    const double lo = std::max(model.smallest() * sy * sy * (1.0 - 1e-3), 1e-12 * model.largest());
    const double hi = edge(model, solve_xi(model, static_cast<int>(std::lround(std::max(1.0, p / y))), 0).xi);

    const std::vector<double> grid = detail::forward_grid(lo, hi, opt.grid_points);
    DensityOptions dopt;
    dopt.eta = opt.eta;
    const std::vector<double> rho = mp_density(model, grid, dopt);

    std::vector<double> cum(grid.size(), 0.0);
    for (std::size_t i = 1; i < grid.size(); ++i)
        cum[i] = cum[i - 1] + 0.5 * (rho[i] + rho[i - 1]) * (grid[i] - grid[i - 1]);
    const double total = cum.back();
    if (!(total > 0.0)) throw NumericError("forward_map: density integrates to zero");

    const double zero_mass = std::max(0.0, 1.0 - 1.0 / y);
    std::vector<double> q(static_cast<std::size_t>(p), 0.0);
    std::size_t seg = 1;
    // ascending levels; written back descending
    for (int j = 1; j <= p; ++j) {
        const double u = (j - 0.5) / p;
        double value = 0.0;
        if (u > zero_mass) {
            const double target = (u - zero_mass) / (1.0 - zero_mass) * total;
            while (seg + 1 < cum.size() && cum[seg] < target) ++seg;
            const double c0 = cum[seg - 1], c1 = cum[seg];
            const double t = c1 > c0 ? std::clamp((target - c0) / (c1 - c0), 0.0, 1.0) : 0.0;
            value = grid[seg - 1] + t * (grid[seg] - grid[seg - 1]);
        }
        q[static_cast<std::size_t>(p - j)] = value;
    }
    return q;
}

/// The sweep count is deliberately small: the iteration is stopped early,
/// which regularizes the fit (late sweeps chase sampling noise in the bulk).
struct QuestOptions {
    int max_iterations = 8;
    double tolerance = 1e-6;     // on max relative atom change
    double fit_tolerance = 0.05; // relative rms quantile mismatch accepted as a fit
    double damping = 1.0;        // exponent on the quantile ratio update
    ForwardMapOptions forward{};
};

/// Pluggable estimator of the population spectrum.
class SpectrumEstimator {
public:
    virtual ~SpectrumEstimator() = default;
    virtual SpectrumEstimate estimate(const EigenReport& report) const = 0;
};

namespace detail {

/// Value of a descending positive sample at fractional 0-based position t.
inline double interp_desc(std::span<const double> v, double t) {
    const double last = static_cast<double>(v.size() - 1);
    t = std::clamp(t, 0.0, last);
    const auto i = static_cast<std::size_t>(std::floor(t));
    if (i + 1 >= v.size()) return v.back();
    const double f = t - static_cast<double>(i);
    return v[i] + f * (v[i + 1] - v[i]);
}

inline double mse(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

} // namespace detail

/// Fits p population atoms (weight 1/p each) so that the forward map
/// reproduces the observed sample eigenvalue quantiles. Each sweep rescales
/// atom j by the ratio of observed to model-implied sample quantile at the
/// matching level of the nonzero part of the spectrum, then restores the
/// trace (the mean of H equals E tr(Sigma_hat)/p).
inline SpectrumEstimate estimate_spectrum(const EigenReport& report, const QuestOptions& opt = {}) {
    const int n = report.n;
    const int p = report.p;
    if (n < 3 || p < 3) throw DimensionError("estimate_spectrum needs n >= 3 and p >= 3");
    const std::vector<double>& obs = report.cov_eigs;
    const std::size_t m0 = static_cast<std::size_t>(std::min(n, p));
    std::span<const double> obs_pos(obs.data(), m0);
    if (!(obs_pos.back() > 0.0)) throw DegenerateSpectrumError("estimate_spectrum: sample covariance is rank deficient");

    double trace = 0.0;
    for (double v : obs) trace += v;
    const double level = trace / p;

    SpectrumEstimate est;
    const double spread = (obs_pos.front() - obs_pos.back()) / obs_pos.front();
    if (spread < 1e-12) {
        est.quantile_eigs.assign(static_cast<std::size_t>(p), level);
        est.iterations = 0;
        est.converged = true;
        return est;
    }

    const double y = report.y_n;
    std::vector<double> tau(static_cast<std::size_t>(p), level);
    // fractional position of population atom j within the nonzero sample part
    std::vector<double> pos(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) pos[static_cast<std::size_t>(j)] = (j + 0.5) / p * static_cast<double>(m0) - 0.5;
    std::vector<double> target(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) target[static_cast<std::size_t>(j)] = detail::interp_desc(obs_pos, pos[static_cast<std::size_t>(j)]);

    std::vector<double> model_q;
    est.converged = false;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        model_q = forward_map(SpectralModel::uniform(tau, y), p, opt.forward);
        std::span<const double> mq_pos(model_q.data(), m0);
        double change = 0.0;
        for (int j = 0; j < p; ++j) {
            const auto jj = static_cast<std::size_t>(j);
            const double mq = detail::interp_desc(mq_pos, pos[jj]);
            const double ratio = mq > 0.0 ? target[jj] / mq : 1.0;
            const double updated = tau[jj] * std::pow(ratio, opt.damping);
            change = std::max(change, std::abs(updated / tau[jj] - 1.0));
            tau[jj] = updated;
        }
        tau = sorted_descending(std::move(tau));
        double s = 0.0;
        for (double v : tau) s += v;
        const double rescale = trace / s;
        for (double& v : tau) v *= rescale;
        if (change < opt.tolerance) {
            est.converged = true;
            ++it;
            break;
        }
    }
    est.iterations = it;
    model_q = forward_map(SpectralModel::uniform(tau, y), p, opt.forward);
    est.fit_residual = detail::mse(model_q, obs);
    const double rel_rms = std::sqrt(detail::mse(std::span<const double>(model_q.data(), m0), obs_pos)) / mean_of(obs_pos);
    est.converged = est.converged || rel_rms <= opt.fit_tolerance;
    est.quantile_eigs = std::move(tau);
    return est;
}

class QuantileMatchingEstimator final : public SpectrumEstimator {
public:
    explicit QuantileMatchingEstimator(QuestOptions opt = {}) : opt_(opt) {}
    SpectrumEstimate estimate(const EigenReport& report) const override { return estimate_spectrum(report, opt_); }

private:
    QuestOptions opt_;
};

/// Injects precomputed quantile eigenvalues (e.g. from a reference QuEST
/// implementation). CSV layout: header "lambda_tilde_q", p rows, descending.
class ExternalQuestAdapter final : public SpectrumEstimator {
public:
    explicit ExternalQuestAdapter(std::vector<double> quantile_eigs) : eigs_(std::move(quantile_eigs)) {
        if (eigs_.empty()) throw InputError("external spectrum estimate is empty");
        if (!is_sorted_descending(eigs_)) throw InputError("external spectrum estimate must be descending");
        if (!(eigs_.back() > 0.0)) throw InputError("external spectrum estimate must be strictly positive");
    }

    static ExternalQuestAdapter from_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open spectrum estimate file: " + path);
        std::string line;
        if (!std::getline(in, line)) throw ParseError("spectrum estimate file is empty: " + path);
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line != "lambda_tilde_q") throw ParseError("spectrum estimate header must be 'lambda_tilde_q'");
        std::vector<double> v;
        int row = 1;
        while (std::getline(in, line)) {
            ++row;
            if (line.empty() || line == "\r") continue;
            try {
                std::size_t used = 0;
                v.push_back(std::stod(line, &used));
            } catch (const std::exception&) {
                throw ParseError("non-numeric value in spectrum estimate file at row " + std::to_string(row));
            }
        }
        return ExternalQuestAdapter(std::move(v));
    }

    SpectrumEstimate estimate(const EigenReport& report) const override {
        if (static_cast<int>(eigs_.size()) != report.p)
            throw DimensionError("external spectrum estimate has " + std::to_string(eigs_.size()) +
                                 " rows, expected p = " + std::to_string(report.p));
        SpectrumEstimate e;
        e.quantile_eigs = eigs_;
        e.iterations = 0;
        e.converged = true;
        return e;
    }

private:
    std::vector<double> eigs_;
};

} // namespace subcrit
