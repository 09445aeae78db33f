// Command-line front end: TW tables, the subcriticality test, K-hat, the
// parametric bootstrap, simulation sweeps and price-to-return conversion.

#include "subcrit/subcrit.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>

namespace fs = std::filesystem;
using namespace subcrit;

namespace {

fs::path default_cache_dir() {
    if (const char* home = std::getenv("HOME"); home && *home) return fs::path(home) / ".cache" / "subcrit";
    return ".subcrit-cache";
}

struct TableFlags {
    int d = 12;
    int goe_n = 2000;
    std::int64_t reps = 20000;
    std::uint64_t seed = kDefaultTwSeed;
    std::string sampler = "tridiagonal";

    TwTableKey key() const {
        TwTableKey k;
        k.d = d;
        k.goe_n = goe_n;
        k.reps = reps;
        k.seed = seed;
        k.sampler = sampler == "dense" ? GoeSampler::dense : GoeSampler::tridiagonal;
        return k;
    }
};

struct Globals {
    unsigned threads = 0;
    std::string cache_dir = default_cache_dir().string();
    TableFlags table;
};

void add_table_flags(CLI::App* cmd, TableFlags& t, bool short_names) {
    cmd->add_option("--d", t.d, "joint TW dimension (columns kept per GOE draw)")->check(CLI::Range(1, 1000));
    cmd->add_option("--goe-n", t.goe_n, "GOE matrix size N")->check(CLI::PositiveNumber);
    cmd->add_option(short_names ? "--reps" : "--tw-reps", t.reps, "Monte Carlo replicates")->check(CLI::PositiveNumber);
    cmd->add_option(short_names ? "--seed" : "--tw-seed", t.seed, "table seed");
    cmd->add_option("--sampler", t.sampler, "GOE sampler")->check(CLI::IsMember({"tridiagonal", "dense"}));
}

TwTable load_table(const Globals& g) {
    TableLoad l = build_or_load(g.cache_dir, g.table.key(), g.threads);
    if (!l.warning.empty()) std::cerr << "warning: " << l.warning << "\n";
    return std::move(l.table);
}

MissingPolicy policy_of(const std::string& s) {
    return s == "columns" ? MissingPolicy::drop_columns : MissingPolicy::drop_rows;
}

DataMatrix read_data(const std::string& path, const std::string& missing) {
    CsvTable t = ingest_csv(path, policy_of(missing));
    if (t.dropped_rows > 0) std::cerr << "warning: dropped " << t.dropped_rows << " row(s) with missing values\n";
    if (t.dropped_columns > 0)
        std::cerr << "warning: dropped " << t.dropped_columns << " column(s) with missing values\n";
    return DataMatrix(std::move(t.values));
}

void require_file(const std::string& path) {
    if (!fs::is_regular_file(path)) throw InputError("input file not found: " + path);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot write file: " + path.string());
    os << text;
}

void emit_json(const std::string& target, const Json& j) {
    if (target.empty()) return;
    if (target == "-")
        std::cout << j.dump(2) << "\n";
    else
        write_text(target, j.dump(2) + "\n");
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ParseError("cannot parse number '" + item + "' in list '" + s + "'");
        }
    }
    if (v.empty()) throw ParseError("empty number list");
    return v;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Test whether the largest population covariance eigenvalue is subcritical"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key = value configuration file (flags take precedence)");

    Globals g;
    app.add_option("--threads", g.threads, "worker threads (0 = all cores)");
    app.add_option("--cache-dir", g.cache_dir, "TW table cache directory")->envname("SUBCRIT_CACHE_DIR");

    // tw-table
    auto* tw = app.add_subcommand("tw-table", "build or load a Tracy-Widom Monte Carlo table");
    add_table_flags(tw, g.table, true);
    std::string tw_csv;
    tw->add_option("--csv", tw_csv, "also export the samples as CSV");

    // test
    auto* test = app.add_subcommand("test", "run the subcriticality test on a data file");
    std::string input, missing = "rows", json_out, external;
    TestOptions topt;
    int kappa = 0, quest_iters = topt.quest.max_iterations;
    test->add_option("--input", input, "CSV file, rows are observations")->required();
    test->add_option("--epsilon", topt.epsilon, "separation parameter")->check(CLI::Range(0.0, 1.0));
    test->add_option("--alpha", topt.alpha, "significance level")->check(CLI::Range(0.0, 1.0));
    test->add_flag("--demean", topt.demean, "centre columns (uses n - 1 degrees of freedom)");
    test->add_option("--kappa", kappa, "also report Onatski's R_n(kappa)")->check(CLI::Range(1, 100));
    test->add_option("--nu", topt.nu, "K-hat threshold exponent");
    test->add_option("--json", json_out, "write the report as JSON ('-' for stdout)");
    test->add_option("--missing", missing, "drop rows or columns with missing cells")
        ->check(CLI::IsMember({"rows", "columns"}));
    test->add_option("--spectrum-estimate", external, "CSV of precomputed population eigenvalues (lambda_tilde_q)");
    test->add_option("--quest-iterations", quest_iters, "spectrum estimator sweeps")->check(CLI::PositiveNumber);
    add_table_flags(test, g.table, false);

    // khat
    auto* kh = app.add_subcommand("khat", "estimate the number of supercritical eigenvalues");
    kh->add_option("--input", input, "CSV file, rows are observations")->required();
    kh->add_option("--nu", topt.nu, "threshold exponent, t_n = n^nu");
    kh->add_option("--epsilon", topt.epsilon, "separation parameter used for sigma_hat")->check(CLI::Range(0.0, 1.0));
    kh->add_flag("--demean", topt.demean, "centre columns");
    kh->add_option("--missing", missing, "drop rows or columns with missing cells")
        ->check(CLI::IsMember({"rows", "columns"}));

    // bootstrap
    auto* bs = app.add_subcommand("bootstrap", "parametric bootstrap from the truncated spectrum estimate");
    int B = 500;
    std::string stat = "top2", csv_out;
    std::uint64_t seed = 1;
    bs->add_option("--input", input, "CSV file, rows are observations")->required();
    bs->add_option("--B", B, "bootstrap replicates")->check(CLI::PositiveNumber);
    bs->add_option("--stat", stat, "functional")->check(CLI::IsMember({"lambda1", "gap", "top2", "bias"}));
    bs->add_option("--seed", seed, "seed");
    bs->add_option("--epsilon", topt.epsilon, "separation parameter")->check(CLI::Range(0.0, 1.0));
    bs->add_flag("--demean", topt.demean, "centre columns");
    bs->add_option("--csv", csv_out, "write replicate values as CSV");
    bs->add_option("--json", json_out, "write the summary as JSON ('-' for stdout)");
    bs->add_option("--missing", missing, "drop rows or columns with missing cells")
        ->check(CLI::IsMember({"rows", "columns"}));

    // simulate
    auto* sim = app.add_subcommand("simulate", "reproduce the simulation experiments");
    std::string scenario = "spiked", out_dir = "sim-out", leading = "1", law = "gaussian", scenario_file;
    int reps = 200, n = 600, p = 400, outer = 100, truth_reps = 5000;
    double decay_c = 1.0;
    bool rotate = false, full = false;
    seed = 1;
    sim->add_option("--scenario", scenario, "experiment")
        ->check(CLI::IsMember({"spiked", "decaying", "table1", "figure1", "bootstrap-tables"}));
    sim->add_option("--reps", reps, "replicates per setting")->check(CLI::PositiveNumber);
    sim->add_option("--seed", seed, "seed");
    sim->add_option("--out", out_dir, "output directory");
    sim->add_option("--n", n, "sample size")->check(CLI::Range(3, 1000000));
    sim->add_option("--p", p, "dimension")->check(CLI::Range(3, 1000000));
    sim->add_option("--leading", leading, "comma-separated leading eigenvalues (spiked)");
    sim->add_option("--decay-c", decay_c, "decay exponent c (decaying)");
    sim->add_option("--law", law, "entry law")->check(CLI::IsMember({"gaussian", "t10"}));
    sim->add_flag("--rotate", rotate, "conjugate Sigma by a Haar rotation");
    sim->add_option("--epsilon", topt.epsilon, "separation parameter")->check(CLI::Range(0.0, 1.0));
    sim->add_option("--alpha", topt.alpha, "significance level")->check(CLI::Range(0.0, 1.0));
    sim->add_option("--outer", outer, "datasets bootstrapped per row (bootstrap-tables)")->check(CLI::PositiveNumber);
    sim->add_option("--B", B, "bootstrap replicates (bootstrap-tables)")->check(CLI::PositiveNumber);
    sim->add_option("--truth-reps", truth_reps, "direct replicates for ground truth")->check(CLI::PositiveNumber);
    sim->add_option("--scenario-file", scenario_file, "base scenario as JSON (overrides the size and law flags)");
    sim->add_flag("--full", full, "full-scale replicate counts (30000 ground truth, 600 outer)");
    add_table_flags(sim, g.table, false);

    // returns
    auto* ret = app.add_subcommand("returns", "convert a price panel to log returns");
    std::string prices, out_file;
    int stride = 1;
    std::string ret_missing = "columns";
    ret->add_option("--prices", prices, "CSV of prices, rows are dates")->required();
    ret->add_option("--stride", stride, "period length in rows")->check(CLI::PositiveNumber);
    ret->add_option("--out", out_file, "output CSV")->required();
    ret->add_option("--missing", ret_missing, "drop rows or columns with missing prices")
        ->check(CLI::IsMember({"rows", "columns"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*tw) {
            TableLoad l = build_or_load(g.cache_dir, g.table.key(), g.threads);
            if (!l.warning.empty()) std::cerr << "warning: " << l.warning << "\n";
            const TwTable& t = l.table;
            std::cout << "table      " << (fs::path(g.cache_dir) / cache_file_name(t.key())).string() << "\n";
            std::cout << "source     " << (l.loaded_from_cache ? "cache" : "built") << "\n";
            std::cout << "d x reps   " << t.d() << " x " << t.reps() << " (N = " << t.goe_n() << ", "
                      << to_string(t.key().sampler) << ")\n";
            std::vector<double> top(t.sorted_top().begin(), t.sorted_top().end());
            std::cout << "zeta1 mean " << mean_of(top) << ", sd " << sd_of(top) << "\n";
            if (t.reps() >= kMinQueryReps && t.d() >= 2)
                std::cout << "gap q0.95  " << gap_quantile(t, 0.05) << "\n";
            if (!tw_csv.empty()) {
                std::ofstream os(tw_csv);
                if (!os) throw InputError("cannot write file: " + tw_csv);
                write_table_csv(os, t);
            }
            return 0;
        }

        if (*test) {
            require_file(input);
            if (!external.empty()) require_file(external);
            const DataMatrix data = read_data(input, missing);
            if (kappa > 0) topt.kappa = kappa;
            topt.quest.max_iterations = quest_iters;
            const TwTable table = load_table(g);
            std::unique_ptr<SpectrumEstimator> est;
            if (!external.empty())
                est = std::make_unique<ExternalQuestAdapter>(ExternalQuestAdapter::from_csv(external));
            else
                est = std::make_unique<QuantileMatchingEstimator>(topt.quest);
            const TestReport rep = run_test(data, table, topt, est.get());
            if (json_out != "-") std::cout << format_report(rep);
            emit_json(json_out, to_json(rep));
            return 0;
        }

        if (*kh) {
            require_file(input);
            const DataMatrix data = read_data(input, missing);
            const EigenReport er = topt.demean ? centred_spectrum(data) : spectrum(data);
            const PreparedSample s = prepare(er, QuantileMatchingEstimator(topt.quest));
            const StatisticAt at = statistic_at(s, topt.epsilon);
            const auto m = static_cast<std::size_t>(std::min(er.n, er.p));
            const int k = k_hat(std::span<const double>(er.cov_eigs.data(), m), at.sigma_hat, er.n, topt.nu);
            const double scale = std::pow(static_cast<double>(er.n), 2.0 / 3.0) / at.sigma_hat;
            std::cout << "k_hat      " << k << "\n";
            std::cout << "threshold  " << std::pow(static_cast<double>(er.n), topt.nu) << "\n";
            std::cout << "sigma_hat  " << at.sigma_hat << "\n";
            for (int j = 1; j <= std::min<int>(k + 1, static_cast<int>(m) - 1); ++j)
                std::cout << "T_n," << j << "      " << scale * (er.cov_eigs[j - 1] - er.cov_eigs[j]) << "\n";
            return 0;
        }

        if (*bs) {
            require_file(input);
            const DataMatrix data = read_data(input, missing);
            const EigenReport er = topt.demean ? centred_spectrum(data) : spectrum(data);
            const TruncatedSpectrum trunc = bootstrap_population(er, topt.epsilon, topt.quest);
            const Functional phi = stat == "lambda1" || stat == "bias" ? Functional::lambda1()
                                   : stat == "gap"                     ? Functional::gap()
                                                                       : Functional::top2();
            const BootstrapRun run = run_bootstrap(trunc, er.n, B, phi, seed, g.threads);
            Json summary = bootstrap_summary(run);
            if (stat == "bias") {
                const double m = mean_of(run.column(0));
                summary["bias"] = {{"estimate", m - trunc.lambdas.front()},
                                   {"lambda_tilde1", trunc.lambdas.front()},
                                   {"low_precision", B < 2}};
            }
            if (!csv_out.empty()) {
                std::ofstream os(csv_out);
                if (!os) throw InputError("cannot write file: " + csv_out);
                write_bootstrap_csv(os, run);
            }
            if (json_out != "-") std::cout << summary.dump(2) << "\n";
            emit_json(json_out, summary);
            return 0;
        }

        if (*sim) {
            Scenario base;
            if (!scenario_file.empty()) {
                require_file(scenario_file);
                std::ifstream in(scenario_file);
                Json j;
                try {
                    in >> j;
                } catch (const nlohmann::json::exception& e) {
                    throw ParseError(std::string("cannot parse scenario file: ") + e.what());
                }
                base = scenario_from_json(j);
            } else {
                base.n = n;
                base.p = p;
                base.law = law == "t10" ? DataLaw::t10 : DataLaw::gaussian;
                base.rotate = rotate;
                base.epsilon = topt.epsilon;
                base.alpha = topt.alpha;
                base.leading = parse_list(leading);
                base.decay_c = decay_c;
            }
            base.reps = reps;
            base.seed = seed;
            fs::create_directories(out_dir);
            const fs::path out(out_dir);
            SweepOptions so;
            so.threads = g.threads;

            auto curve_files = [&](const std::string& stem, const Scenario& s, const TwTable& table) {
                const PowerCurve c = power_curve(s, default_lambda1_grid(), table, so);
                std::ofstream csv(out / (stem + ".csv"));
                write_curve_csv(csv, c);
                std::ofstream svg(out / (stem + ".svg"));
                write_curve_svg(svg, c);
                write_text(out / (stem + ".scenario.json"), to_json(s).dump(2) + "\n");
                std::cout << "wrote " << (out / (stem + ".csv")).string() << "\n";
            };

            if (scenario == "spiked" || scenario == "decaying") {
                const TwTable table = load_table(g);
                Scenario s = base;
                s.kind = scenario == "decaying" ? SpectrumKind::decaying : SpectrumKind::spiked;
                curve_files(scenario + "_curve", s, table);
            } else if (scenario == "figure1") {
                const TwTable table = load_table(g);
                Scenario s = base;
                s.kind = SpectrumKind::spiked;
                s.leading = {1.0};
                s.law = DataLaw::gaussian;
                curve_files("figure1_spiked_gaussian", s, table);
                s.law = DataLaw::t10;
                curve_files("figure1_spiked_t10", s, table);
                s.kind = SpectrumKind::decaying;
                s.law = DataLaw::gaussian;
                s.decay_c = 1.0;
                curve_files("figure1_decaying_c1", s, table);
                s.decay_c = 0.5;
                curve_files("figure1_decaying_c0.5", s, table);
            } else if (scenario == "table1") {
                const TwTable table = load_table(g);
                const auto rows = table_runner(table1_scenarios(base), table, so);
                std::ofstream csv(out / "table1.csv");
                write_table_csv(csv, rows);
                write_table_csv(std::cout, rows);
            } else {
                if (full) {
                    truth_reps = 30000;
                    outer = 600;
                    B = 500;
                }
                std::vector<BootstrapEvalRow> rows;
                for (const Scenario& s : bootstrap_table_scenarios(base))
                    rows.push_back(bootstrap_eval(s, truth_reps, std::min(outer, truth_reps), B, topt.quest, g.threads));
                std::ofstream csv(out / "bootstrap_tables.csv");
                write_bootstrap_eval_csv(csv, rows);
                write_bootstrap_eval_csv(std::cout, rows);
            }
            return 0;
        }

        if (*ret) {
            require_file(prices);
            CsvTable t = ingest_csv(prices, policy_of(ret_missing));
            if (t.dropped_rows > 0) std::cerr << "warning: dropped " << t.dropped_rows << " row(s) with missing prices\n";
            if (t.dropped_columns > 0)
                std::cerr << "warning: dropped " << t.dropped_columns << " column(s) with missing prices\n";
            const Matrix r = log_returns(t.values, stride);
            write_csv(fs::path(out_file), t.columns, r);
            std::cout << "wrote " << r.rows() << " x " << r.cols() << " returns to " << out_file << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
