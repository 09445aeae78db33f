#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace subcrit;
using Catch::Approx;

namespace {

EigenReport report_from(std::vector<double> cov, std::vector<double> companion) {
    EigenReport r;
    r.p = static_cast<int>(cov.size());
    r.n = static_cast<int>(companion.size());
    r.y_n = static_cast<double>(r.p) / r.n;
    r.cov_eigs = std::move(cov);
    r.companion_eigs = std::move(companion);
    return r;
}

SpectrumEstimate estimate_of(std::vector<double> v) {
    SpectrumEstimate e;
    e.quantile_eigs = std::move(v);
    return e;
}

double bisect_xi(const std::vector<double>& eigs, int n) {
    const long double p = static_cast<long double>(eigs.size());
    long double lo = 0, hi = 1.0L / eigs.front();
    for (int i = 0; i < 300; ++i) {
        const long double mid = 0.5L * (lo + hi);
        long double s = 0;
        for (double l : eigs) {
            const long double u = l * mid / (1 - l * mid);
            s += u * u;
        }
        (s / p < n / p ? lo : hi) = mid;
    }
    return static_cast<double>(lo);
}

} // namespace

TEST_CASE("xi_hat on hand-computed companion spectra", "[estimators]") {
    CHECK(xi_hat(report_from({3, 1, 1}, {3, 1, 1})) == Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(xi_hat(report_from({2, 2, 1}, {2, 2, 1})) == Approx(0.5).epsilon(1e-15));
    // ties within relative 1e-12 take the shifted branch
    CHECK(xi_hat(report_from({2, 2 - 1e-13, 1}, {2, 2 - 1e-13, 1})) == Approx(0.5).epsilon(1e-9));
    CHECK(leading_tie(1.0, 1.0 - 1e-13));
    CHECK_FALSE(leading_tie(1.0, 1.0 - 1e-11));
}

TEST_CASE("xi_hat is positive whenever the top eigenvalue is simple", "[estimators][property]") {
    Engine rng(8);
    std::uniform_int_distribution<int> dim(3, 60);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = dim(rng), p = dim(rng);
        const EigenReport r = testing::null_report(n, p, 500 + static_cast<std::uint64_t>(trial));
        if (leading_tie(r.lambda1(), r.lambda2())) continue;
        const double x = xi_hat(r);
        CHECK(x > 0.0);
        CHECK(std::isfinite(x));
    }
}

TEST_CASE("xi_hat is consistent under the null", "[estimators]") {
    const double xi0 = 1.0 / (1.0 + std::sqrt(400.0 / 600.0));
    double dev = 0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) dev += std::abs(xi_hat(testing::null_report(600, 400, seed)) - xi0);
    INFO("mean |xi_hat - xi0| = " << dev / 200);
    CHECK(dev / 200 < 0.03);
}

TEST_CASE("truncate_spectrum caps at 1/(xi_hat (1 + epsilon))", "[estimators]") {
    const TruncatedSpectrum t = truncate_spectrum(estimate_of({3, 1, 1}), 0.5, 0.2);
    CHECK(t.cap == Approx(1.0 / 0.6));
    CHECK(t.lambdas[0] == Approx(1.6666667).margin(1e-6));
    CHECK(t.lambdas[1] == 1.0);
    CHECK(t.lambdas[2] == 1.0);
    const TruncatedSpectrum same = truncate_spectrum(estimate_of({1.5, 1, 0.5}), 0.5, 0.2);
    CHECK(same.lambdas == std::vector<double>{1.5, 1, 0.5});
    CHECK_THROWS_AS(truncate_spectrum(estimate_of({1}), 0.5, 0.0), DomainError);
    CHECK_THROWS_AS(truncate_spectrum(estimate_of({1}), 0.5, 1.0), DomainError);
    CHECK_THROWS_AS(truncate_spectrum(estimate_of({1}), -0.5, 0.2), DomainError);
    CHECK_THROWS_AS(truncate_spectrum(estimate_of({1, 0}), 0.5, 0.2), DomainError);
}

TEST_CASE("truncation invariants on random inputs", "[estimators][property]") {
    Engine rng(9);
    std::uniform_real_distribution<double> u(0.01, 10.0), e(0.001, 0.999), xi(0.05, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(static_cast<std::size_t>(5 + trial % 30));
        for (double& x : v) x = u(rng);
        const SpectrumEstimate est = estimate_of(sorted_descending(v));
        const double x0 = xi(rng);
        const double e1 = e(rng), e2 = e(rng);
        const TruncatedSpectrum a = truncate_spectrum(est, x0, std::min(e1, e2));
        const TruncatedSpectrum b = truncate_spectrum(est, x0, std::max(e1, e2));
        CHECK(is_sorted_descending(a.lambdas));
        for (std::size_t j = 0; j < v.size(); ++j) {
            CHECK(a.lambdas[j] * x0 * (1 + a.epsilon) <= 1.0 + 1e-15);
            CHECK(b.lambdas[j] <= a.lambdas[j]);
            CHECK(a.lambdas[j] > 0.0);
        }
        CHECK(sigma_hat(b, 0.7) <= sigma_hat(a, 0.7) * (1 + 1e-14));
    }
}

TEST_CASE("sigma_hat reduces to the population formula at exact inputs", "[estimators]") {
    const double y = 2.0 / 3.0;
    const double xi0 = 1.0 / (1.0 + std::sqrt(y));
    const TruncatedSpectrum t = truncate_spectrum(estimate_of(std::vector<double>(400, 1.0)), xi0, 0.2);
    CHECK(std::pow(sigma_hat(t, y), 3) == Approx(13.33475).margin(1e-4));
    CHECK(sigma_hat(t, y) == Approx(std::cbrt(std::pow(1 + std::sqrt(y), 4) / std::sqrt(y))).epsilon(1e-12));
}

TEST_CASE("sigma_hat stays finite with every eigenvalue at the cap", "[estimators]") {
    const double x0 = 0.4, eps = 0.2, y = 0.5;
    const TruncatedSpectrum t = truncate_spectrum(estimate_of(std::vector<double>(10, 100.0)), x0, eps);
    for (double v : t.lambdas) CHECK(v == Approx(t.cap));
    const double integrand = std::pow((1 / (1 + eps)) / (1 - 1 / (1 + eps)), 3);
    CHECK(integrand == Approx(std::pow(eps, -3)).epsilon(1e-12));
    CHECK(std::pow(sigma_hat(t, y), 3) == Approx((1 + y * integrand) / (x0 * x0 * x0)).epsilon(1e-12));
}

TEST_CASE("xi_tilde0 closed form, homogeneity and bisection oracle", "[estimators]") {
    const int n = 600, p = 400;
    const TruncatedSpectrum unit = truncate_spectrum(estimate_of(std::vector<double>(p, 1.0)), 0.5, 0.2);
    CHECK(xi_tilde0(unit, n) == Approx(1.0 / (1.0 + std::sqrt(400.0 / 600.0))).epsilon(0).margin(1e-10));
    CHECK(xi_tilde0_solution(unit, n).residual < 1e-10);

    std::vector<double> spiked(p, 1.0);
    spiked[0] = 1.6;
    spiked[1] = 1.4;
    const TruncatedSpectrum s = truncate_spectrum(estimate_of(spiked), 0.5, 0.2);
    CHECK(xi_tilde0(s, n) == Approx(bisect_xi(s.lambdas, n)).epsilon(0).margin(1e-12));
    for (double c : {0.3, 2.0, 11.0}) {
        std::vector<double> scaled = spiked;
        for (double& v : scaled) v *= c;
        const TruncatedSpectrum sc = truncate_spectrum(estimate_of(scaled), 0.5 / c, 0.2);
        CHECK(xi_tilde0(sc, n) == Approx(xi_tilde0(s, n) / c).epsilon(1e-10));
    }
}

TEST_CASE("bootstrap normalizers closed forms and psi link", "[estimators]") {
    const int n = 600, p = 400;
    const double y = static_cast<double>(p) / n;
    const TruncatedSpectrum unit = truncate_spectrum(estimate_of(std::vector<double>(p, 1.0)), 0.5, 0.2);
    const BootstrapNormalizers b = bootstrap_normalizers(unit, y, n);
    CHECK(b.r_tilde == Approx(std::pow(1 + std::sqrt(y), 2)).epsilon(0).margin(1e-10));
    CHECK(std::pow(b.sigma_tilde, 3) == Approx(std::pow(1 + std::sqrt(y), 4) / std::sqrt(y)).epsilon(1e-10));

    std::vector<double> spiked(p, 1.0);
    spiked[0] = 1.5;
    const TruncatedSpectrum s = truncate_spectrum(estimate_of(spiked), 0.5, 0.2);
    const BootstrapNormalizers bs = bootstrap_normalizers(s, y, n);
    CHECK(bs.xi_tilde0 == Approx(xi_tilde0(s, n)).epsilon(1e-15));
    CHECK(std::abs(psi(s.model(y), 1.0 / bs.xi_tilde0) - bs.r_tilde) < 1e-8);
    // built from xi_tilde0, not xi_hat
    CHECK(bs.xi_tilde0 != Approx(s.xi_hat));
}

TEST_CASE("plug-in scales are consistent under the null", "[estimators]") {
    const int n = 600, p = 400;
    const double y = static_cast<double>(p) / n;
    const double sigma = std::cbrt(std::pow(1 + std::sqrt(y), 4) / std::sqrt(y));
    double dev_hat = 0, dev_tilde = 0;
    const int reps = 200;
    for (int seed = 1; seed <= reps; ++seed) {
        const EigenReport r = testing::null_report(n, p, static_cast<std::uint64_t>(seed));
        const TruncatedSpectrum t = truncate_spectrum(estimate_spectrum(r), xi_hat(r), 0.2);
        dev_hat += std::abs(sigma_hat(t, r.y_n) / sigma - 1);
        dev_tilde += std::abs(bootstrap_normalizers(t, r.y_n, n).sigma_tilde / sigma - 1);
    }
    INFO("sigma_hat " << dev_hat / reps << " sigma_tilde " << dev_tilde / reps);
    CHECK(dev_hat / reps < 0.05);
    CHECK(dev_tilde / reps < 0.07);
}

TEST_CASE("estimators are deterministic", "[estimators][property]") {
    const EigenReport r = testing::spiked_report(200, 120, {3.0}, 42);
    const TruncatedSpectrum a = truncate_spectrum(estimate_spectrum(r), xi_hat(r), 0.2);
    const TruncatedSpectrum b = truncate_spectrum(estimate_spectrum(r), xi_hat(r), 0.2);
    CHECK(a.lambdas == b.lambdas);
    CHECK(sigma_hat(a, r.y_n) == sigma_hat(b, r.y_n));
}
