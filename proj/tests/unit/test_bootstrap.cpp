#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace subcrit;
using Catch::Approx;

namespace {

TruncatedSpectrum flat(double c, int p) {
    TruncatedSpectrum t;
    t.lambdas.assign(static_cast<std::size_t>(p), c);
    t.xi_hat = 0.5 / c;
    t.epsilon = 0.2;
    t.cap = 1.0 / (t.xi_hat * 1.2);
    return t;
}

} // namespace

TEST_CASE("bootstrap on c*I matches a direct white Wishart simulation", "[bootstrap]") {
    const int n = 100, p = 60, B = 2000;
    const double c = 2.0;
    const BootstrapRun run = run_bootstrap(flat(c, p), n, B, Functional::lambda1(), 123);
    REQUIRE(run.B() == B);
    std::vector<double> direct(B);
    std::mt19937_64 rng(987654321);
    std::normal_distribution<double> z(0, 1);
    for (int b = 0; b < B; ++b) {
        Matrix x(n, p);
        for (int j = 0; j < p; ++j)
            for (int i = 0; i < n; ++i) x(i, j) = z(rng);
        Eigen::SelfAdjointEigenSolver<Matrix> es(x.transpose() * x / n, Eigen::EigenvaluesOnly);
        direct[static_cast<std::size_t>(b)] = c * es.eigenvalues()(p - 1);
    }
    CHECK(ks_distance(run.column(0), direct) < 0.05);
}

TEST_CASE("constant functional and determinism", "[bootstrap]") {
    const TruncatedSpectrum t = flat(1.0, 20);
    const auto seven = Functional::custom("seven", 1, 3, [](std::span<const double>, std::span<double> o) {
        std::fill(o.begin(), o.end(), 7.0);
    });
    const BootstrapRun r = run_bootstrap(t, 30, 50, seven, 1);
    CHECK(r.width() == 3);
    for (double v : r.stats()) CHECK(v == 7.0);

    const BootstrapRun a = run_bootstrap(t, 30, 64, Functional::top2(), 99, 1);
    const BootstrapRun b = run_bootstrap(t, 30, 64, Functional::top2(), 99, 4);
    const BootstrapRun c = run_bootstrap(t, 30, 64, Functional::top2(), 100, 2);
    CHECK(a.stats() == b.stats());
    CHECK(a.stats() != c.stats());
    for (int i = 0; i < a.B(); ++i) CHECK(a.at(i, 0) >= a.at(i, 1));
}

TEST_CASE("built-in functionals agree with each other", "[bootstrap]") {
    const TruncatedSpectrum t = flat(1.5, 25);
    const BootstrapRun top = run_bootstrap(t, 40, 30, Functional::topk(4), 5);
    const BootstrapRun two = run_bootstrap(t, 40, 30, Functional::top2(), 5);
    const BootstrapRun gap = run_bootstrap(t, 40, 30, Functional::gap(), 5);
    const BootstrapRun one = run_bootstrap(t, 40, 30, Functional::lambda1(), 5);
    for (int b = 0; b < 30; ++b) {
        CHECK(top.at(b, 0) == two.at(b, 0));
        CHECK(one.at(b, 0) == two.at(b, 0));
        CHECK(gap.at(b, 0) == Approx(two.at(b, 0) - two.at(b, 1)));
        CHECK(top.at(b, 2) >= top.at(b, 3));
    }
    CHECK(top.functional() == "top4");
    CHECK_THROWS_AS(Functional::topk(0), InputError);
    CHECK_THROWS_AS(run_bootstrap(t, 3, 5, Functional::topk(4), 1), DimensionError);
    CHECK_THROWS_AS(run_bootstrap(t, 40, 0, Functional::lambda1(), 1), InputError);
    CHECK_THROWS_AS(top.column(4), IndexError);
}

TEST_CASE("non-finite functional values are rejected", "[bootstrap]") {
    const auto bad = Functional::custom("nan", 1, 1, [](std::span<const double>, std::span<double> o) { o[0] = std::nan(""); });
    CHECK_THROWS_AS(run_bootstrap(flat(1.0, 10), 20, 3, bad, 1), NumericError);
}

TEST_CASE("normalized samples centre and scale", "[bootstrap]") {
    const TruncatedSpectrum t = flat(1.0, 200);
    const BootstrapNormalizers norm = bootstrap_normalizers(t, 200.0 / 300.0, 300);
    const double r = norm.r_tilde;
    const BootstrapRun run(t.lambdas, 300, 2, {r, r, r + 0.1, r - 0.2}, norm, 0, "top2");
    const NormalizedSamples s = normalized_samples(run);
    CHECK(s.L[0] == Approx(0.0).margin(1e-12));
    CHECK(s.G[0] == Approx(0.0).margin(1e-12));
    const double scale = std::pow(300.0, 2.0 / 3.0) / norm.sigma_tilde;
    CHECK(s.L[1] == Approx(0.1 * scale));
    CHECK(s.G[1] == Approx(0.3 * scale));
    const BootstrapRun narrow(t.lambdas, 300, 1, {r}, norm, 0, "lambda1");
    CHECK_THROWS_AS(normalized_samples(narrow), DimensionError);
}

TEST_CASE("bootstrap population is subcritical by construction", "[bootstrap][property]") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const EigenReport r = testing::spiked_report(200, 100, {1.0 + static_cast<double>(seed)}, seed);
        const double eps = 0.05 + 0.09 * static_cast<double>(seed);
        const TruncatedSpectrum t = bootstrap_population(r, eps);
        const double x = xi_hat(r);
        for (double v : t.lambdas) CHECK(v * x * (1 + eps) <= 1.0 + 1e-14);
    }
}

TEST_CASE("identity pipeline reproduces the null moments", "[bootstrap]") {
    const EigenReport r = testing::null_report(500, 300, 2024);
    const TruncatedSpectrum t = bootstrap_population(r, 0.2);
    const NormalizedSamples s = normalized_samples(run_bootstrap(t, 500, 500, Functional::top2(), 7));
    INFO("L mean " << mean_of(s.L) << " sd " << sd_of(s.L) << " G mean " << mean_of(s.G) << " sd " << sd_of(s.G));
    CHECK(std::abs(mean_of(s.L) + 1.31) < 0.12);
    CHECK(std::abs(sd_of(s.L) - 1.25) < 0.10);
    CHECK(std::abs(mean_of(s.G) - 2.02) < 0.12);
    CHECK(std::abs(sd_of(s.G) - 1.11) < 0.08);
}

TEST_CASE("bias estimate with a single replicate", "[bootstrap]") {
    const EigenReport r = testing::null_report(60, 40, 5);
    const BiasEstimate e = bias_estimate(r, 0.2, 1, 3);
    CHECK(e.low_precision);
    CHECK(e.B == 1);
    CHECK(std::isfinite(e.value));
    CHECK(e.value == Approx(e.mean_lambda1_star - e.lambda_tilde1));
    CHECK_FALSE(bias_estimate(r, 0.2, 5, 3).low_precision);
}

TEST_CASE("bias estimates at (500, 600)", "[bootstrap][slow]") {
    // truth from the bias table: 3.34 for the identity, 3.14 for (1.2, 1.1)
    const BiasEstimate id = bias_estimate(testing::null_report(500, 600, 11), 0.2, 500, 1);
    INFO("identity bias " << id.value);
    CHECK(std::abs(id.value - 3.34) < 0.35);
    const BiasEstimate sp = bias_estimate(testing::spiked_report(500, 600, {1.2, 1.1}, 12), 0.2, 500, 2);
    INFO("(1.2, 1.1) bias " << sp.value);
    CHECK(std::abs(sp.value - 3.14) < 0.35);
}

TEST_CASE("quantile and coverage helpers", "[bootstrap]") {
    const std::vector<double> c(17, 2.5);
    CHECK(bootstrap_quantile(c, 0.95) == 2.5);
    CHECK(bootstrap_quantile(std::vector<double>{1, 2, 3, 4, 5}, 0.5) == 3.0);
    CHECK(bootstrap_quantile(std::vector<double>{1, 2, 3, 4, 5}, 0.9) == Approx(4.6));
    CHECK(coverage(std::vector<double>{1, 2, 3, 4}, 2.5) == 0.5);
    CHECK(coverage(std::vector<double>{1, 2, 3, 4}, 4.0) == 1.0);
    CHECK_THROWS_AS(bootstrap_quantile(std::vector<double>{}, 0.5), InputError);
    CHECK_THROWS_AS(coverage(std::vector<double>{}, 0.5), InputError);
}
