#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace subcrit;
using Catch::Approx;

TEST_CASE("t_statistic arithmetic", "[inference]") {
    CHECK(t_statistic(3.40, 3.30, 2.37, 600) == Approx(std::pow(600.0, 2.0 / 3.0) * 0.10 / 2.37).epsilon(1e-12));
    CHECK(t_statistic(3.40, 3.30, 2.37, 600) == Approx(3.0016).margin(1e-3));
    CHECK(t_statistic(2.0, 2.0, 1.0, 100) == 0.0);
    for (double c : {0.1, 3.0, 1e4}) CHECK(t_statistic(c * 3.4, c * 3.3, c * 2.37, 600) == Approx(t_statistic(3.4, 3.3, 2.37, 600)).epsilon(1e-12));
    CHECK_THROWS_AS(t_statistic(1.0, 2.0, 1.0, 10), InputError);
    CHECK_THROWS_AS(t_statistic(2.0, 1.0, 0.0, 10), DomainError);
}

TEST_CASE("Onatski gap ratio", "[inference]") {
    CHECK(onatski(std::vector<double>{5, 3, 2, 1.5}, 2) == Approx(2.0));
    CHECK(onatski(std::vector<double>{4, 2, 1}, 1) == Approx(2.0));
    CHECK(onatski(std::vector<double>{4, 3, 2, 1}, 2) == Approx(1.0));
    CHECK_THROWS_AS(onatski(std::vector<double>{4, 2, 2, 1}, 2), DegenerateSpectrumError);
    CHECK_THROWS_AS(onatski(std::vector<double>{4, 2}, 1), DimensionError);
    CHECK_THROWS_AS(onatski(std::vector<double>{4, 2, 1}, 0), InputError);
}

TEST_CASE("k_hat scans gaps against n^nu", "[inference]") {
    const int n = 1000; // threshold n^{1/3} = 10, scale n^{2/3}/sigma = 100 with sigma = 1
    CHECK(k_hat(std::vector<double>{1.05, 1.0, 0.99, 0.98}, 1.0, n) == 0);
    CHECK(k_hat(std::vector<double>{3.0, 2.0, 1.0, 0.99, 0.98}, 1.0, n) == 2);
    CHECK(k_hat(std::vector<double>{3.0, 2.95, 1.0}, 1.0, n) == 0);
    CHECK_THROWS_AS(k_hat(std::vector<double>{3.0, 2.0, 1.0}, 1.0, n), NumericError);
    CHECK_THROWS_AS(k_hat(std::vector<double>{3.0, 2.0}, 1.0, n, 0.7), DomainError);
    CHECK_THROWS_AS(k_hat(std::vector<double>{3.0, 2.0}, 0.0, n), DomainError);
}

TEST_CASE("k_hat ignores eigenvalues appended below the scan stop", "[inference][property]") {
    Engine rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> e{5.0 * u(rng) + 2.0};
        const int len = 4 + trial % 20;
        for (int j = 1; j < len; ++j) e.push_back(e.back() - (u(rng) < 0.5 ? 0.001 : 0.5) * u(rng));
        int k = 0;
        try {
            k = k_hat(e, 1.0, 800);
        } catch (const NumericError&) {
            continue;
        }
        std::vector<double> longer = e;
        const double floor = e[static_cast<std::size_t>(std::min<int>(k + 1, len - 1))];
        for (int j = 0; j < 10; ++j) longer.push_back(floor * u(rng));
        longer = sorted_descending(longer);
        CHECK(k_hat(longer, 1.0, 800) == k);
    }
}

TEST_CASE("k_hat finds well separated spikes and none under the null", "[inference]") {
    int exact = 0, null_zero = 0;
    const int reps = 40;
    for (int seed = 1; seed <= reps; ++seed) {
        for (bool spiked : {true, false}) {
            const EigenReport r = spiked ? testing::spiked_report(600, 400, {8.0, 5.0}, static_cast<std::uint64_t>(seed))
                                         : testing::null_report(600, 400, static_cast<std::uint64_t>(seed));
            const TruncatedSpectrum t = truncate_spectrum(estimate_spectrum(r), xi_hat(r), 0.2);
            const int k = k_hat(std::span<const double>(r.cov_eigs.data(), 400), sigma_hat(t, r.y_n), 600);
            (spiked ? exact : null_zero) += (k == (spiked ? 2 : 0));
        }
    }
    CHECK(exact >= reps - 2);
    CHECK(null_zero >= static_cast<int>(0.9 * reps));
}

TEST_CASE("confidence interval arithmetic", "[inference]") {
    EpsilonHat e;
    e.value = 0.2;
    Intervals ci = confidence_intervals(3.30, 2.37, 0.55, 600, e, -3.52);
    CHECK(ci.lambda1_lower == Approx(1.0 / (1.2 * 0.55)));
    CHECK(ci.lambda1_lower == Approx(1.5152).margin(1e-4));
    CHECK(ci.lambda1_informative);
    CHECK(ci.rn_lower == Approx(3.183).margin(1e-3));
    CHECK(ci.rn_upper == Approx(3.417).margin(1e-3));
    CHECK(0.5 * (ci.rn_lower + ci.rn_upper) == Approx(3.30));

    const Intervals inf = confidence_intervals(3.30, 2.37, 0.55, 600, EpsilonHat{}, -3.52);
    CHECK_FALSE(inf.lambda1_informative);
    CHECK(inf.lambda1_lower == 0.0);

    const TwTable& t = testing::small_table();
    const Intervals via_table = confidence_intervals(3.30, 2.37, 0.55, 600, e, 0.05, t);
    const double half = std::abs(tw1_quantile(t, 0.025)) * 2.37 / std::pow(600.0, 2.0 / 3.0);
    CHECK(via_table.rn_upper - 3.30 == Approx(half).epsilon(1e-12));
}

TEST_CASE("T_n(epsilon) is non-decreasing", "[inference][property]") {
    const QuantileMatchingEstimator est;
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const EigenReport r = seed % 2 ? testing::null_report(300, 200, seed)
                                       : testing::spiked_report(300, 200, {1.0 + 0.7 * static_cast<double>(seed)}, seed);
        const PreparedSample s = prepare(r, est);
        double prev = 0;
        for (int i = 0; i < 50; ++i) {
            const double eps = 1e-4 + (0.999 - 1e-4) * i / 49.0;
            const double t = statistic_at(s, eps).t_n;
            CHECK(t >= prev * (1 - 1e-13));
            prev = t;
        }
    }
}

TEST_CASE("epsilon_hat contracts", "[inference]") {
    const QuantileMatchingEstimator est;
    const EigenReport r = testing::spiked_report(600, 400, {4.0}, 3);
    const PreparedSample s = prepare(r, est);
    const double q = 4.1;

    const EpsilonHat e = epsilon_hat(s, q);
    REQUIRE(e.finite());
    CHECK_FALSE(e.at_lower_bound);
    CHECK(std::abs(statistic_at(s, e.value).t_n - q) < 1e-3);
    CHECK(statistic_at(s, e.value).t_n >= q);

    // grid scan oracle over 10^4 points
    const EpsilonSearch opt;
    double first = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 10000; ++i) {
        const double eps = opt.eps_min + (opt.eps_max - opt.eps_min) * i / 9999.0;
        if (statistic_at(s, eps).t_n >= q) {
            first = eps;
            break;
        }
    }
    CHECK(std::abs(first - e.value) <= (opt.eps_max - opt.eps_min) / 9999.0 + opt.tolerance);

    const EpsilonHat low = epsilon_hat(s, 1e-3);
    CHECK(low.at_lower_bound);
    CHECK(low.value == opt.eps_min);
    const EpsilonHat none = epsilon_hat(s, 1e6);
    CHECK_FALSE(none.finite());
    CHECK(std::isinf(none.value));
    EpsilonSearch bad;
    bad.eps_max = 1.0;
    CHECK_THROWS_AS(epsilon_hat(s, q, bad), DomainError);
}

TEST_CASE("run_test wires the pipeline consistently", "[inference]") {
    const TwTable& table = testing::small_table();
    TestOptions opt;
    opt.kappa = 3;
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const std::vector<double> lead = seed % 3 == 0 ? std::vector<double>{1.0} : std::vector<double>{1.5 + 0.25 * static_cast<double>(seed)};
        const EigenReport r = testing::spiked_report(300, 200, lead, seed);
        const TestReport rep = run_test(r, table, opt);
        CHECK_FALSE(rep.degenerate);
        CHECK(rep.reject == (rep.t_n > rep.critical));
        CHECK(rep.critical == gap_quantile(table, 0.05));
        CHECK(rep.p_value == gap_p_value(table, rep.t_n));
        const double slack = 2.0 / (static_cast<double>(table.reps()) + 1.0);
        if (rep.reject)
            CHECK(rep.p_value <= opt.alpha + slack);
        else
            CHECK(rep.p_value >= opt.alpha - slack);
        CHECK(rep.p_value > 0.0);
        CHECK(rep.p_value <= 1.0);
        CHECK(0.5 * (rep.ci_rn_lower + rep.ci_rn_upper) == Approx(rep.lambda1));
        CHECK(rep.ci_rn_upper - rep.lambda1 ==
              Approx(std::abs(tw1_quantile(table, 0.025)) * rep.sigma_hat / std::pow(300.0, 2.0 / 3.0)));
        CHECK(rep.t_n == Approx(t_statistic(rep.lambda1, rep.lambda2, rep.sigma_hat, 300)));
        CHECK(rep.xi_hat == xi_hat(r));
        REQUIRE(rep.k_hat.has_value());
        REQUIRE(rep.onatski.has_value());
        CHECK(*rep.onatski == onatski(r.cov_eigs, 3));
        CHECK(*rep.onatski_critical == Approx(onatski_critical(table, 3, 0.05)));
        if (rep.epsilon_hat.finite()) {
            CHECK(rep.ci_lambda1_informative);
            CHECK(rep.ci_lambda1_lower == Approx(1.0 / ((1 + rep.epsilon_hat.value) * rep.xi_hat)));
        }
        // rejecting at epsilon means eps_hat <= epsilon
        if (rep.reject) CHECK(rep.epsilon_hat.value <= opt.epsilon + 1e-4);
        const TestReport again = run_test(r, table, opt);
        CHECK(again.t_n == rep.t_n);
    }
}

TEST_CASE("run_test flags degenerate data instead of failing", "[inference]") {
    Matrix y(40, 10);
    const Matrix col = testing::gaussian(40, 1, 9);
    for (int j = 0; j < 10; ++j) y.col(j) = col;
    const TestReport rep = run_test(DataMatrix(y), testing::small_table());
    CHECK(rep.degenerate);
    CHECK_FALSE(rep.reject);
    CHECK(std::isnan(rep.t_n));
    CHECK_FALSE(rep.notes.empty());
}

TEST_CASE("run_test validates levels", "[inference]") {
    const EigenReport r = testing::null_report(60, 30, 1);
    TestOptions opt;
    opt.epsilon = 1.0;
    CHECK_THROWS_AS(run_test(r, testing::small_table(), opt), DomainError);
    opt.epsilon = 0.2;
    opt.alpha = 0.0;
    CHECK_THROWS_AS(run_test(r, testing::small_table(), opt), DomainError);
}

TEST_CASE("demeaning removes a location shift", "[inference]") {
    Matrix y = testing::gaussian(200, 50, 4);
    const TestOptions plain;
    TestOptions centred;
    centred.demean = true;
    const TestReport a = run_test(DataMatrix(y), testing::small_table(), centred);
    y.array() += 3.0;
    const TestReport b = run_test(DataMatrix(y), testing::small_table(), centred);
    CHECK(a.t_n == Approx(b.t_n).epsilon(1e-8));
    CHECK(b.n == 199);
    const TestReport shifted = run_test(DataMatrix(y), testing::small_table(), plain);
    CHECK(shifted.lambda1 > 100.0);
}
