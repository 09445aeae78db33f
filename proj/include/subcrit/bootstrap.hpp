#pragma once

#include "subcrit/estimators.hpp"
#include "subcrit/rng.hpp"

#include <functional>

namespace subcrit {

/// A statistic of the k leading bootstrap eigenvalues with `width` outputs.
struct Functional {
    std::string name;
    int k = 1;
    int width = 1;
    std::function<void(std::span<const double> top, std::span<double> out)> eval;

    static Functional lambda1() {
        return {"lambda1", 1, 1, [](std::span<const double> t, std::span<double> o) { o[0] = t[0]; }};
    }
    static Functional top2() {
        return {"top2", 2, 2, [](std::span<const double> t, std::span<double> o) {
                    o[0] = t[0];
                    o[1] = t[1];
                }};
    }
    static Functional gap() {
        return {"gap", 2, 1, [](std::span<const double> t, std::span<double> o) { o[0] = t[0] - t[1]; }};
    }
    static Functional topk(int k) {
        if (k < 1) throw InputError("topk needs k >= 1");
        return {"top" + std::to_string(k), k, k,
                [](std::span<const double> t, std::span<double> o) { std::copy(t.begin(), t.end(), o.begin()); }};
    }
    static Functional custom(std::string name, int k, int width,
                             std::function<void(std::span<const double>, std::span<double>)> f) {
        if (k < 1 || width < 1) throw InputError("functional needs k >= 1 and width >= 1");
        return {std::move(name), k, width, std::move(f)};
    }
};

/// Result of the parametric bootstrap: B rows of functional values.
class BootstrapRun {
public:
    BootstrapRun(std::vector<double> lambdas, int n, int width, std::vector<double> stats,
                 BootstrapNormalizers normalizers, std::uint64_t seed, std::string functional)
        : lambdas_(std::move(lambdas)), n_(n), width_(width), stats_(std::move(stats)), normalizers_(normalizers),
          seed_(seed), functional_(std::move(functional)) {}

    const std::vector<double>& lambdas() const noexcept { return lambdas_; }
    int n() const noexcept { return n_; }
    int B() const noexcept { return static_cast<int>(stats_.size() / static_cast<std::size_t>(width_)); }
    int width() const noexcept { return width_; }
    const std::vector<double>& stats() const noexcept { return stats_; }
    const BootstrapNormalizers& normalizers() const noexcept { return normalizers_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::string& functional() const noexcept { return functional_; }

    double at(int b, int j) const {
        return stats_[static_cast<std::size_t>(b) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(j)];
    }
    std::vector<double> column(int j) const {
        if (j < 0 || j >= width_) throw IndexError("bootstrap column out of range");
        std::vector<double> c(static_cast<std::size_t>(B()));
        for (int b = 0; b < B(); ++b) c[static_cast<std::size_t>(b)] = at(b, j);
        return c;
    }

private:
    std::vector<double> lambdas_;
    int n_;
    int width_;
    std::vector<double> stats_;
    BootstrapNormalizers normalizers_;
    std::uint64_t seed_;
    std::string functional_;
};

namespace detail {

/// Leading eigenvalues of (1/n) Y'Y for Y with independent N(0, lambda_j)
/// columns.
inline std::vector<double> diagonal_gaussian_top(std::span<const double> lambdas, int n, int k, Engine& rng) {
    const auto p = static_cast<Eigen::Index>(lambdas.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix y(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double s = std::sqrt(lambdas[static_cast<std::size_t>(j)]);
        for (Eigen::Index i = 0; i < n; ++i) y(i, j) = s * normal(rng);
    }
    std::vector<double> eigs = psd_eigenvalues_descending(smaller_gram(y));
    eigs.resize(static_cast<std::size_t>(k), 0.0);
    return eigs;
}

} // namespace detail

/// Draws B Gaussian datasets of size n from N(0, diag(trunc.lambdas)) and
/// evaluates `phi` on the leading eigenvalues of each sample covariance.
/// Replicate b uses stream derive_seed(seed, b).
inline BootstrapRun run_bootstrap(const TruncatedSpectrum& trunc, int n, int B, const Functional& phi,
                                  std::uint64_t seed, unsigned threads = 0) {
    if (B < 1) throw InputError("bootstrap needs B >= 1");
    if (n < 1) throw InputError("bootstrap needs n >= 1");
    const int p = static_cast<int>(trunc.lambdas.size());
    if (phi.k > std::min(n, p)) throw DimensionError("functional needs more eigenvalues than min(n, p)");
    const double y = static_cast<double>(p) / static_cast<double>(n);
    const BootstrapNormalizers norm = bootstrap_normalizers(trunc, y, n);

    std::vector<double> stats(static_cast<std::size_t>(B) * static_cast<std::size_t>(phi.width));
    parallel_for(static_cast<std::size_t>(B), threads, [&](std::size_t b) {
        Engine rng = replicate_engine(seed, b);
        const std::vector<double> top = detail::diagonal_gaussian_top(trunc.lambdas, n, phi.k, rng);
        std::span<double> out(stats.data() + b * static_cast<std::size_t>(phi.width), static_cast<std::size_t>(phi.width));
        phi.eval(top, out);
        for (double v : out)
            if (!std::isfinite(v)) throw NumericError("bootstrap functional returned a non-finite value");
    });
    return BootstrapRun(trunc.lambdas, n, phi.width, std::move(stats), norm, seed, phi.name);
}

struct NormalizedSamples {
    std::vector<double> L; // n^{2/3} (lambda1* - r~) / sigma~
    std::vector<double> G; // n^{2/3} (lambda1* - lambda2*) / sigma~
};

inline NormalizedSamples normalized_samples(const BootstrapRun& run) {
    if (run.width() < 2) throw DimensionError("normalized samples need a functional returning (lambda1*, lambda2*)");
    const double scale = std::pow(static_cast<double>(run.n()), 2.0 / 3.0) / run.normalizers().sigma_tilde;
    NormalizedSamples s;
    s.L.resize(static_cast<std::size_t>(run.B()));
    s.G.resize(static_cast<std::size_t>(run.B()));
    for (int b = 0; b < run.B(); ++b) {
        s.L[static_cast<std::size_t>(b)] = scale * (run.at(b, 0) - run.normalizers().r_tilde);
        s.G[static_cast<std::size_t>(b)] = scale * (run.at(b, 0) - run.at(b, 1));
    }
    return s;
}

/// Spectrum estimate truncated at 1/(xi_hat (1 + epsilon)): the population
/// the bootstrap samples from.
inline TruncatedSpectrum bootstrap_population(const EigenReport& report, double epsilon,
                                              const SpectrumEstimator& estimator) {
    return truncate_spectrum(estimator.estimate(report), xi_hat(report), epsilon);
}

inline TruncatedSpectrum bootstrap_population(const EigenReport& report, double epsilon, const QuestOptions& quest = {}) {
    return bootstrap_population(report, epsilon, QuantileMatchingEstimator(quest));
}

struct BiasEstimate {
    double value = 0.0;        // mean lambda1* - lambda~_1
    double lambda_tilde1 = 0.0;
    double mean_lambda1_star = 0.0;
    int B = 0;
    bool low_precision = false; // B < 2: no spread information
};

/// Estimate of E lambda_1(Sigma_hat) - lambda_1(Sigma).
inline BiasEstimate bias_estimate(const EigenReport& report, double epsilon, int B, std::uint64_t seed,
                                  const QuestOptions& quest = {}, unsigned threads = 0) {
    const TruncatedSpectrum trunc = bootstrap_population(report, epsilon, quest);
    const BootstrapRun run = run_bootstrap(trunc, report.n, B, Functional::lambda1(), seed, threads);
    const std::vector<double> l1 = run.column(0);
    BiasEstimate e;
    e.B = B;
    e.lambda_tilde1 = trunc.lambdas.front();
    e.mean_lambda1_star = mean_of(l1);
    e.value = e.mean_lambda1_star - e.lambda_tilde1;
    e.low_precision = B < 2;
    return e;
}

inline BiasEstimate bias_estimate(const DataMatrix& data, double epsilon, int B, std::uint64_t seed,
                                  const QuestOptions& quest = {}, unsigned threads = 0) {
    return bias_estimate(spectrum(data), epsilon, B, seed, quest, threads);
}

/// Type-7 quantile of a bootstrap sample.
inline double bootstrap_quantile(std::span<const double> sample, double level) {
    if (sample.empty()) throw InputError("quantile of an empty sample");
    return quantile_type7(std::vector<double>(sample.begin(), sample.end()), level);
}

/// Fraction of a ground-truth sample at or below q.
inline double coverage(std::span<const double> truth, double q) {
    if (truth.empty()) throw InputError("coverage of an empty sample");
    std::size_t c = 0;
    for (double v : truth) c += v <= q ? 1 : 0;
    return static_cast<double>(c) / static_cast<double>(truth.size());
}

} // namespace subcrit
