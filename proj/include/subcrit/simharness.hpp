#pragma once

#include "subcrit/bootstrap.hpp"
#include "subcrit/inference.hpp"

#include <iomanip>
#include <ostream>

namespace subcrit {

enum class SpectrumKind { spiked, decaying, custom };
enum class DataLaw { gaussian, t10 };

inline const char* to_string(SpectrumKind k) {
    switch (k) {
    case SpectrumKind::spiked: return "spiked";
    case SpectrumKind::decaying: return "decaying";
    case SpectrumKind::custom: return "custom";
    }
    return "?";
}
inline const char* to_string(DataLaw l) { return l == DataLaw::t10 ? "t10" : "gaussian"; }

struct Scenario {
    SpectrumKind kind = SpectrumKind::spiked;
    std::vector<double> leading{1.0}; // spiked: top eigenvalues; decaying: lambda_1
    double decay_c = 1.0;
    std::vector<double> custom_atoms; // custom: all p eigenvalues
    int n = 600;
    int p = 400;
    DataLaw law = DataLaw::gaussian;
    bool rotate = false;
    int reps = 200;
    std::uint64_t seed = 1;
    double epsilon = 0.2;
    double alpha = 0.05;

    bool operator==(const Scenario&) const = default;
};

/// Last index (1-based) of the unit block of the decaying spectrum.
inline constexpr int kDecayingUnitBlockEnd = 151;

/// Population eigenvalues, descending.
///   spiked:   (leading..., 1, ..., 1)
///   decaying: lambda_1, then 1 for j = 2..151, then j^{-c} for j = 152..p
inline std::vector<double> population_eigenvalues(const Scenario& s) {
    if (s.p < 3) throw DimensionError("scenario needs p >= 3");
    std::vector<double> lam;
    switch (s.kind) {
    case SpectrumKind::spiked:
        if (s.leading.size() > static_cast<std::size_t>(s.p)) throw DimensionError("more spikes than dimensions");
        lam.assign(static_cast<std::size_t>(s.p), 1.0);
        std::copy(s.leading.begin(), s.leading.end(), lam.begin());
        break;
    case SpectrumKind::decaying:
        if (!(s.decay_c > 0.0)) throw DomainError("decay parameter must be positive");
        if (s.leading.empty()) throw InputError("decaying spectrum needs lambda_1");
        lam.resize(static_cast<std::size_t>(s.p));
        lam[0] = s.leading[0];
        for (int j = 2; j <= s.p; ++j)
            lam[static_cast<std::size_t>(j - 1)] = j <= kDecayingUnitBlockEnd ? 1.0 : std::pow(static_cast<double>(j), -s.decay_c);
        break;
    case SpectrumKind::custom:
        if (s.custom_atoms.size() != static_cast<std::size_t>(s.p))
            throw DimensionError("custom spectrum must list exactly p eigenvalues");
        lam = s.custom_atoms;
        break;
    }
    for (double v : lam)
        if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("population eigenvalues must be positive and finite");
    return sorted_descending(std::move(lam));
}

inline SpectralModel gen_spectrum(const Scenario& s) {
    return SpectralModel::uniform(population_eigenvalues(s), static_cast<double>(s.p) / static_cast<double>(s.n));
}

/// Haar-distributed p x p orthogonal matrix: Q from the QR factorization of a
/// Gaussian matrix, columns flipped so that R has a positive diagonal.
inline Matrix haar_orthogonal(int p, Engine& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix g(p, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < p; ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(p, p);
    const Matrix& r = qr.matrixQR();
    for (Eigen::Index j = 0; j < p; ++j)
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    return q;
}

/// Y = X Sigma^{1/2} with X having i.i.d. standardized entries and
/// Sigma = Q diag(eigs) Q' (Q = I unless `rotate`).
inline Matrix gen_data(std::span<const double> eigs, bool rotate, DataLaw law, int n, Engine& rng) {
    const int p = static_cast<int>(eigs.size());
    if (n < 1 || p < 1) throw DimensionError("gen_data needs n >= 1 and p >= 1");
    Matrix x(n, p);
    if (law == DataLaw::gaussian) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index i = 0; i < n; ++i) x(i, j) = normal(rng);
    } else {
        std::student_t_distribution<double> t(10.0);
        const double scale = 1.0 / std::sqrt(1.25); // var(t_10) = 10/8
        for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index i = 0; i < n; ++i) x(i, j) = scale * t(rng);
    }
    Vector root(p);
    for (Eigen::Index j = 0; j < p; ++j) root(j) = std::sqrt(eigs[static_cast<std::size_t>(j)]);
    if (!rotate) return x * root.asDiagonal();
    const Matrix q = haar_orthogonal(p, rng);
    return ((x * q) * root.asDiagonal()) * q.transpose();
}

/// Data for replicate `index` of a scenario.
inline Matrix scenario_data(const Scenario& s, std::span<const double> eigs, std::uint64_t index) {
    Engine rng = replicate_engine(s.seed, index);
    return gen_data(eigs, s.rotate, s.law, s.n, rng);
}

/// Null references for the Onatski statistics used in the sweeps.
struct OnatskiPair {
    OnatskiReference r1;
    OnatskiReference r10;
    explicit OnatskiPair(const TwTable& t) : r1(t, 1), r10(t, 10) {}
};

struct ReplicateOutcome {
    TestReport report;
    double r1 = 0.0;
    double r10 = 0.0;
    bool reject_r1 = false;
    bool reject_r10 = false;
};

struct SweepOptions {
    QuestOptions quest{};
    bool want_k_hat = false;
    bool want_epsilon_hat = false;
    double nu = 1.0 / 3.0;
    unsigned threads = 0;
};

/// Runs the test (and both Onatski statistics) on every replicate.
inline std::vector<ReplicateOutcome> simulate(const Scenario& s, const TwTable& table, const OnatskiPair& refs,
                                              const SweepOptions& opt = {}) {
    if (s.reps < 1) throw InputError("scenario needs reps >= 1");
    const std::vector<double> eigs = population_eigenvalues(s);
    TestOptions topt;
    topt.epsilon = s.epsilon;
    topt.alpha = s.alpha;
    topt.nu = opt.nu;
    topt.want_k_hat = opt.want_k_hat;
    topt.want_epsilon_hat = opt.want_epsilon_hat;
    topt.quest = opt.quest;
    const double c1 = refs.r1.critical(s.alpha);
    const double c10 = refs.r10.critical(s.alpha);
    const QuantileMatchingEstimator estimator(opt.quest);

    std::vector<ReplicateOutcome> out(static_cast<std::size_t>(s.reps));
    parallel_for(out.size(), opt.threads, [&](std::size_t i) {
        const EigenReport er = spectrum(scenario_data(s, eigs, i));
        ReplicateOutcome& o = out[i];
        o.report = run_test(er, table, topt, &estimator);
        o.r1 = onatski(er.cov_eigs, 1);
        o.r10 = onatski(er.cov_eigs, 10);
        o.reject_r1 = o.r1 > c1;
        o.reject_r10 = o.r10 > c10;
    });
    return out;
}

struct RejectionRates {
    double t_n = 0.0;
    double r1 = 0.0;
    double r10 = 0.0;
    int reps = 0;
    int degenerate = 0;
};

inline RejectionRates rejection_rates(const std::vector<ReplicateOutcome>& v) {
    RejectionRates r;
    r.reps = static_cast<int>(v.size());
    for (const auto& o : v) {
        r.t_n += o.report.reject ? 1.0 : 0.0;
        r.r1 += o.reject_r1 ? 1.0 : 0.0;
        r.r10 += o.reject_r10 ? 1.0 : 0.0;
        r.degenerate += o.report.degenerate ? 1 : 0;
    }
    if (r.reps > 0) {
        r.t_n /= r.reps;
        r.r1 /= r.reps;
        r.r10 /= r.reps;
    }
    return r;
}

// --- power curves ----------------------------------------------------------

struct CurvePoint {
    double lambda1 = 0.0;
    RejectionRates rates;
};

struct PowerCurve {
    Scenario base;
    std::vector<CurvePoint> points;
    double h0_boundary = 0.0; // 1/((1+eps) xi_{n,1})
    double h1_boundary = 0.0; // 1/((1-eps) xi_{n,1})
};

/// 26 equispaced points on [1, 3.5].
inline std::vector<double> default_lambda1_grid() {
    std::vector<double> g(26);
    for (int i = 0; i < 26; ++i) g[static_cast<std::size_t>(i)] = 1.0 + 0.1 * i;
    return g;
}

/// Boundaries of the null and alternative regions in lambda_1, from the
/// population model with its top eigenvalue excluded.
inline std::pair<double, double> hypothesis_boundaries(const Scenario& s) {
    const SpectralModel model = gen_spectrum(s);
    const double xi1 = solve_xi(model, s.n, 1).xi;
    return {1.0 / ((1.0 + s.epsilon) * xi1), 1.0 / ((1.0 - s.epsilon) * xi1)};
}

inline PowerCurve power_curve(const Scenario& base, std::span<const double> grid, const TwTable& table,
                              const SweepOptions& opt = {}) {
    const OnatskiPair refs(table);
    PowerCurve curve;
    curve.base = base;
    std::tie(curve.h0_boundary, curve.h1_boundary) = hypothesis_boundaries(base);
    for (double l1 : grid) {
        Scenario s = base;
        if (s.leading.empty()) s.leading.push_back(l1);
        s.leading[0] = l1;
        if (s.kind == SpectrumKind::spiked) s.leading = sorted_descending(s.leading);
        curve.points.push_back({l1, rejection_rates(simulate(s, table, refs, opt))});
    }
    return curve;
}

// --- Table-1 style rows ----------------------------------------------------

struct TableRow {
    Scenario scenario;
    std::string hypothesis; // "H0" or "H1(K)"
    int supercritical = 0;  // K
    RejectionRates rates;
};

/// Leading-eigenvalue triples of the three-spike experiment, with K.
inline std::vector<std::pair<std::array<double, 3>, int>> table1_settings() {
    return {{{1, 1, 1}, 0},         {{1.25, 1.25, 1.25}, 0}, {{1.25, 1.25, 1}, 0}, {{1.3, 1.3, 1.3}, 0},
            {{1.3, 1.3, 1}, 0},     {{1.5, 1.5, 1.3}, 0},    {{1.5, 1.5, 1}, 0},    {{2.5, 1.5, 1.3}, 1},
            {{3, 1.5, 1.3}, 1},     {{3.5, 1.5, 1.3}, 1},    {{4, 1.5, 1.3}, 1},    {{4.5, 1.5, 1.3}, 1},
            {{5, 1.5, 1.3}, 1},     {{4, 3, 1}, 2},          {{5, 3, 1}, 2}};
}

inline std::vector<Scenario> table1_scenarios(const Scenario& base) {
    std::vector<Scenario> out;
    for (const auto& [lead, k] : table1_settings()) {
        Scenario s = base;
        s.kind = SpectrumKind::spiked;
        s.leading.assign(lead.begin(), lead.end());
        out.push_back(s);
    }
    return out;
}

inline std::vector<TableRow> table_runner(const std::vector<Scenario>& scenarios, const TwTable& table,
                                          const SweepOptions& opt = {}) {
    const OnatskiPair refs(table);
    std::vector<TableRow> rows;
    for (const Scenario& s : scenarios) {
        TableRow row;
        row.scenario = s;
        // supercritical count from the population: lambda_j > 1/xi_{n,j}
        const SpectralModel model = gen_spectrum(s);
        const auto eigs = population_eigenvalues(s);
        int k = 0;
        while (k + 1 < s.p && eigs[static_cast<std::size_t>(k)] * solve_xi(model, s.n, k + 1).xi > 1.0) ++k;
        row.supercritical = k;
        row.hypothesis = k == 0 ? "H0" : "H1(" + std::to_string(k) + ")";
        row.rates = rejection_rates(simulate(s, table, refs, opt));
        rows.push_back(row);
    }
    return rows;
}

// --- bootstrap evaluation (Tables 2-3 protocol) ----------------------------

struct MomentSummary {
    double mean = 0.0;
    double sd = 0.0;
};

struct BootstrapEvalRow {
    Scenario scenario;
    int truth_reps = 0;
    int outer = 0;
    int B = 0;
    // ground truth from direct simulation
    double truth_mean_L = 0.0, truth_sd_L = 0.0, truth_q95_L = 0.0;
    double truth_mean_G = 0.0, truth_sd_G = 0.0, truth_q95_G = 0.0;
    // bootstrap estimates across outer datasets (mean and sd across datasets)
    MomentSummary boot_mean_L, boot_sd_L, boot_mean_G, boot_sd_G;
    double coverage_L = 0.0; // P(L_n <= q95_hat) averaged over outer datasets
    double coverage_G = 0.0;
};

/// Population centring and scale r_n, sigma_n of the scenario.
inline std::pair<double, double> population_edge_scale(const Scenario& s) {
    const SpectralModel model = gen_spectrum(s);
    const double xi0 = solve_xi(model, s.n, 0).xi;
    return {edge(model, xi0), std::cbrt(sigma_cubed(model, xi0))};
}

struct DirectSample {
    std::vector<double> L;
    std::vector<double> G;
    std::vector<double> lambda1;
};

/// L_n and G_n by direct simulation, replicates offset by `first_index`.
inline DirectSample direct_simulation(const Scenario& s, int reps, std::uint64_t first_index = 0, unsigned threads = 0) {
    const auto eigs = population_eigenvalues(s);
    const auto [r, sigma] = population_edge_scale(s);
    const double scale = std::pow(static_cast<double>(s.n), 2.0 / 3.0) / sigma;
    DirectSample d;
    d.L.resize(static_cast<std::size_t>(reps));
    d.G.resize(static_cast<std::size_t>(reps));
    d.lambda1.resize(static_cast<std::size_t>(reps));
    parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t i) {
        const EigenReport er = spectrum(scenario_data(s, eigs, first_index + i));
        d.lambda1[i] = er.lambda1();
        d.L[i] = scale * (er.lambda1() - r);
        d.G[i] = scale * (er.lambda1() - er.lambda2());
    });
    return d;
}

inline MomentSummary summarize(std::span<const double> v) { return {mean_of(v), v.size() > 1 ? sd_of(v) : 0.0}; }

/// Ground truth from `truth_reps` direct replicates; bootstrap summaries from
/// the first `outer` of them with B resamples each.
inline BootstrapEvalRow bootstrap_eval(const Scenario& s, int truth_reps, int outer, int B,
                                       const QuestOptions& quest = {}, unsigned threads = 0) {
    if (outer > truth_reps) throw InputError("outer datasets must not exceed the ground-truth replicates");
    const DirectSample truth = direct_simulation(s, truth_reps, 0, threads);
    BootstrapEvalRow row;
    row.scenario = s;
    row.truth_reps = truth_reps;
    row.outer = outer;
    row.B = B;
    row.truth_mean_L = mean_of(truth.L);
    row.truth_sd_L = sd_of(truth.L);
    row.truth_q95_L = quantile_type7(truth.L, 0.95);
    row.truth_mean_G = mean_of(truth.G);
    row.truth_sd_G = sd_of(truth.G);
    row.truth_q95_G = quantile_type7(truth.G, 0.95);

    const auto eigs = population_eigenvalues(s);
    std::vector<double> mL(static_cast<std::size_t>(outer)), sL(mL.size()), mG(mL.size()), sG(mL.size());
    std::vector<double> cL(mL.size()), cG(mL.size());
    parallel_for(static_cast<std::size_t>(outer), threads, [&](std::size_t i) {
        const EigenReport er = spectrum(scenario_data(s, eigs, i));
        const TruncatedSpectrum trunc = bootstrap_population(er, s.epsilon, quest);
        const BootstrapRun run = run_bootstrap(trunc, s.n, B, Functional::top2(), derive_seed(s.seed ^ 0xB007u, i), 1);
        const NormalizedSamples ns = normalized_samples(run);
        mL[i] = mean_of(ns.L);
        sL[i] = B > 1 ? sd_of(ns.L) : 0.0;
        mG[i] = mean_of(ns.G);
        sG[i] = B > 1 ? sd_of(ns.G) : 0.0;
        cL[i] = coverage(truth.L, bootstrap_quantile(ns.L, 0.95));
        cG[i] = coverage(truth.G, bootstrap_quantile(ns.G, 0.95));
    });
    row.boot_mean_L = summarize(mL);
    row.boot_sd_L = summarize(sL);
    row.boot_mean_G = summarize(mG);
    row.boot_sd_G = summarize(sG);
    row.coverage_L = mean_of(cL);
    row.coverage_G = mean_of(cG);
    return row;
}

/// The six model/law combinations of the bootstrap tables at (500, 300).
inline std::vector<Scenario> bootstrap_table_scenarios(const Scenario& base) {
    std::vector<Scenario> out;
    const std::vector<std::vector<double>> spectra{{1.0}, {1.4, 1.2}, {1.3, 1.3, 1.3, 1.3, 1.3}};
    for (DataLaw law : {DataLaw::gaussian, DataLaw::t10}) {
        for (const auto& lead : spectra) {
            Scenario s = base;
            s.kind = SpectrumKind::spiked;
            s.leading = lead;
            s.n = 500;
            s.p = 300;
            s.law = law;
            s.rotate = true;
            out.push_back(s);
        }
    }
    return out;
}

// --- emitters --------------------------------------------------------------

namespace detail {
inline std::string join_leading(const std::vector<double>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ";" : "") << v[i];
    return os.str();
}
} // namespace detail

inline void write_curve_csv(std::ostream& os, const PowerCurve& c) {
    os << "lambda1,T_n,R_n(1),R_n(10),reps,h0_boundary,h1_boundary\n";
    os << std::setprecision(10);
    for (const auto& pt : c.points)
        os << pt.lambda1 << "," << pt.rates.t_n << "," << pt.rates.r1 << "," << pt.rates.r10 << "," << pt.rates.reps
           << "," << c.h0_boundary << "," << c.h1_boundary << "\n";
}

inline void write_table_csv(std::ostream& os, const std::vector<TableRow>& rows) {
    os << "hypothesis,K,leading,n,p,law,reps,T_n,R_n(1),R_n(10),degenerate\n";
    os << std::setprecision(10);
    for (const auto& r : rows)
        os << r.hypothesis << "," << r.supercritical << "," << detail::join_leading(r.scenario.leading) << ","
           << r.scenario.n << "," << r.scenario.p << "," << to_string(r.scenario.law) << "," << r.rates.reps << ","
           << r.rates.t_n << "," << r.rates.r1 << "," << r.rates.r10 << "," << r.rates.degenerate << "\n";
}

inline void write_bootstrap_eval_csv(std::ostream& os, const std::vector<BootstrapEvalRow>& rows) {
    os << "law,leading,n,p,truth_reps,outer,B,"
          "truth_mean_L,truth_sd_L,boot_mean_L,boot_mean_L_sd,boot_sd_L,boot_sd_L_sd,coverage_L,"
          "truth_mean_G,truth_sd_G,boot_mean_G,boot_mean_G_sd,boot_sd_G,boot_sd_G_sd,coverage_G\n";
    os << std::setprecision(10);
    for (const auto& r : rows)
        os << to_string(r.scenario.law) << "," << detail::join_leading(r.scenario.leading) << "," << r.scenario.n << ","
           << r.scenario.p << "," << r.truth_reps << "," << r.outer << "," << r.B << "," << r.truth_mean_L << ","
           << r.truth_sd_L << "," << r.boot_mean_L.mean << "," << r.boot_mean_L.sd << "," << r.boot_sd_L.mean << ","
           << r.boot_sd_L.sd << "," << r.coverage_L << "," << r.truth_mean_G << "," << r.truth_sd_G << ","
           << r.boot_mean_G.mean << "," << r.boot_mean_G.sd << "," << r.boot_sd_G.mean << "," << r.boot_sd_G.sd << ","
           << r.coverage_G << "\n";
}

/// Minimal SVG line plot of a power curve: one polyline per statistic, the
/// nominal level as a dashed line and the hypothesis boundaries as ticks.
inline void write_curve_svg(std::ostream& os, const PowerCurve& c) {
    constexpr double w = 640, h = 400, ml = 50, mr = 20, mt = 20, mb = 40;
    if (c.points.empty()) throw InputError("empty power curve");
    const double x0 = c.points.front().lambda1, x1 = c.points.back().lambda1;
    const double span = x1 > x0 ? x1 - x0 : 1.0;
    auto px = [&](double x) { return ml + (x - x0) / span * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - y * (h - mt - mb); };
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << py(0) << "\" x2=\"" << w - mr << "\" y2=\"" << py(0)
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << py(0) << "\" x2=\"" << ml << "\" y2=\"" << py(1)
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << py(c.base.alpha) << "\" x2=\"" << w - mr << "\" y2=\""
       << py(c.base.alpha) << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
    for (double b : {c.h0_boundary, c.h1_boundary})
        if (b >= x0 && b <= x1)
            os << "<line x1=\"" << px(b) << "\" y1=\"" << py(0) << "\" x2=\"" << px(b) << "\" y2=\"" << py(1)
               << "\" stroke=\"lightgray\"/>\n";
    const std::array<std::pair<const char*, const char*>, 3> series{
        {{"T_n", "#1f77b4"}, {"R_n(1)", "#d62728"}, {"R_n(10)", "#2ca02c"}}};
    for (std::size_t sidx = 0; sidx < series.size(); ++sidx) {
        os << "<polyline fill=\"none\" stroke=\"" << series[sidx].second << "\" points=\"";
        for (const auto& pt : c.points) {
            const double v = sidx == 0 ? pt.rates.t_n : sidx == 1 ? pt.rates.r1 : pt.rates.r10;
            os << px(pt.lambda1) << "," << py(v) << " ";
        }
        os << "\"/>\n";
        os << "<text x=\"" << w - mr - 70 << "\" y=\"" << mt + 15 * (sidx + 1) << "\" fill=\"" << series[sidx].second
           << "\" font-size=\"12\">" << series[sidx].first << "</text>\n";
    }
    os << "<text x=\"" << w / 2 << "\" y=\"" << h - 8 << "\" font-size=\"12\" text-anchor=\"middle\">lambda_1(Sigma)</text>\n";
    os << "</svg>\n";
}

} // namespace subcrit
