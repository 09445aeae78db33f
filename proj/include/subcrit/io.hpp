#pragma once

#include "subcrit/bootstrap.hpp"
#include "subcrit/inference.hpp"
#include "subcrit/simharness.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "json.hpp"

namespace subcrit {

inline constexpr int kSchemaVersion = 1;

// --- CSV ---------------------------------------------------------------------

enum class MissingPolicy { drop_rows, drop_columns };

/// Numeric table read from CSV. No shape constraints; wrap the values in a
/// DataMatrix before running the test.
struct CsvTable {
    std::vector<std::string> columns;
    Matrix values;
    int dropped_rows = 0;
    int dropped_columns = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "null" || cell == "NULL";
}

} // namespace detail

/// Reads a rectangular CSV with a header row; rows are observations. Cells
/// that are empty, NA, NaN or null count as missing and are removed by
/// dropping either the affected rows or the affected columns.
inline CsvTable parse_csv(std::istream& in, MissingPolicy policy = MissingPolicy::drop_rows) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("CSV input is empty");
    CsvTable t;
    for (auto& h : detail::split_csv_line(line)) t.columns.push_back(detail::trim(h));
    const std::size_t width = t.columns.size();

    std::vector<std::vector<double>> rows;
    std::vector<std::vector<char>> missing;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty() || line == "\r") continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != width) {
            std::ostringstream os;
            os << "CSV line " << line_no << " has " << cells.size() << " cells, header has " << width;
            throw ParseError(os.str());
        }
        std::vector<double> row(width, 0.0);
        std::vector<char> miss(width, 0);
        for (std::size_t j = 0; j < width; ++j) {
            const std::string cell = detail::trim(cells[j]);
            if (detail::is_missing(cell)) {
                miss[j] = 1;
                continue;
            }
            double v = 0.0;
            const auto* first = cell.data();
            const auto* last = cell.data() + cell.size();
            if (*first == '+') ++first;
            const auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
                std::ostringstream os;
                os << "non-numeric CSV cell '" << cell << "' at line " << line_no << ", column " << j + 1 << " ("
                   << t.columns[j] << ")";
                throw ParseError(os.str());
            }
            row[j] = v;
        }
        rows.push_back(std::move(row));
        missing.push_back(std::move(miss));
    }

    std::vector<char> keep_row(rows.size(), 1), keep_col(width, 1);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j)
            if (missing[i][j]) (policy == MissingPolicy::drop_rows ? keep_row[i] : keep_col[j]) = 0;

    std::vector<std::size_t> ri, ci;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (keep_row[i]) ri.push_back(i);
    for (std::size_t j = 0; j < width; ++j)
        if (keep_col[j]) ci.push_back(j);
    t.dropped_rows = static_cast<int>(rows.size() - ri.size());
    t.dropped_columns = static_cast<int>(width - ci.size());

    std::vector<std::string> cols;
    for (std::size_t j : ci) cols.push_back(t.columns[j]);
    t.columns = std::move(cols);
    t.values.resize(static_cast<Eigen::Index>(ri.size()), static_cast<Eigen::Index>(ci.size()));
    for (std::size_t a = 0; a < ri.size(); ++a)
        for (std::size_t b = 0; b < ci.size(); ++b)
            t.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = rows[ri[a]][ci[b]];
    return t;
}

inline CsvTable ingest_csv(const std::filesystem::path& path, MissingPolicy policy = MissingPolicy::drop_rows) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open input file: " + path.string());
    return parse_csv(in, policy);
}

inline void write_csv(std::ostream& os, const std::vector<std::string>& columns, const Eigen::Ref<const Matrix>& values) {
    if (static_cast<Eigen::Index>(columns.size()) != values.cols())
        throw DimensionError("CSV header width does not match the matrix");
    for (std::size_t j = 0; j < columns.size(); ++j) os << (j ? "," : "") << columns[j];
    os << "\n" << std::setprecision(17);
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) os << (j ? "," : "") << values(i, j);
        os << "\n";
    }
}

inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& columns,
                      const Eigen::Ref<const Matrix>& values) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot write file: " + path.string());
    write_csv(os, columns, values);
}

/// Default header x1..xp for matrices without column names.
inline std::vector<std::string> default_columns(Eigen::Index p) {
    std::vector<std::string> c;
    for (Eigen::Index j = 0; j < p; ++j) c.push_back("x" + std::to_string(j + 1));
    return c;
}

/// Non-overlapping log returns: entry (t, j) = ln(P[(t+1)s, j] / P[t s, j]).
inline Matrix log_returns(const Eigen::Ref<const Matrix>& prices, int stride = 1) {
    if (stride < 1) throw InputError("stride must be at least 1");
    for (Eigen::Index j = 0; j < prices.cols(); ++j)
        for (Eigen::Index i = 0; i < prices.rows(); ++i)
            if (!(prices(i, j) > 0.0)) {
                std::ostringstream os;
                os << "non-positive price " << prices(i, j) << " at row " << i + 1 << ", column " << j + 1;
                throw DomainError(os.str());
            }
    const Eigen::Index rows = prices.rows() > 0 ? (prices.rows() - 1) / stride : 0;
    Matrix r(rows, prices.cols());
    for (Eigen::Index t = 0; t < rows; ++t)
        for (Eigen::Index j = 0; j < prices.cols(); ++j)
            r(t, j) = std::log(prices((t + 1) * stride, j) / prices(t * stride, j));
    return r;
}

// --- JSON ----------------------------------------------------------------------

using Json = nlohmann::ordered_json;

namespace detail {
inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
} // namespace detail

/// Report as JSON; non-finite numbers become null except epsilon_hat = +inf,
/// which is written as the string "inf".
inline Json to_json(const TestReport& r) {
    Json j;
    j["schema"] = kSchemaVersion;
    j["t_n"] = detail::number_or_null(r.t_n);
    j["sigma_hat"] = detail::number_or_null(r.sigma_hat);
    j["xi_hat"] = detail::number_or_null(r.xi_hat);
    j["epsilon"] = r.epsilon;
    j["alpha"] = r.alpha;
    j["critical"] = detail::number_or_null(r.critical);
    j["p_value"] = detail::number_or_null(r.p_value);
    j["reject"] = r.reject;
    if (r.degenerate)
        j["epsilon_hat"] = nullptr;
    else if (r.epsilon_hat.finite())
        j["epsilon_hat"] = r.epsilon_hat.value;
    else
        j["epsilon_hat"] = "inf";
    j["ci_lambda1_lower"] = detail::number_or_null(r.ci_lambda1_lower);
    j["ci_rn_lower"] = detail::number_or_null(r.ci_rn_lower);
    j["ci_rn_upper"] = detail::number_or_null(r.ci_rn_upper);
    j["k_hat"] = r.k_hat ? Json(*r.k_hat) : Json(nullptr);
    j["n"] = r.n;
    j["p"] = r.p;
    j["lambda1"] = detail::number_or_null(r.lambda1);
    j["lambda2"] = detail::number_or_null(r.lambda2);
    j["epsilon_hat_at_lower_bound"] = r.epsilon_hat.at_lower_bound;
    j["ci_lambda1_informative"] = r.ci_lambda1_informative;
    j["degenerate"] = r.degenerate;
    j["quest_converged"] = r.quest_converged;
    if (r.kappa) {
        j["onatski"] = {{"kappa", *r.kappa},
                        {"statistic", detail::number_or_null(r.onatski.value_or(NAN))},
                        {"critical", detail::number_or_null(r.onatski_critical.value_or(NAN))},
                        {"p_value", detail::number_or_null(r.onatski_p_value.value_or(NAN))},
                        {"reject", r.onatski && r.onatski_critical && *r.onatski > *r.onatski_critical}};
    }
    j["notes"] = r.notes;
    return j;
}

/// Two-column text rendering of a report.
inline std::string format_report(const TestReport& r) {
    std::ostringstream os;
    auto row = [&](const std::string& k, const std::string& v) { os << std::left << std::setw(20) << k << v << "\n"; };
    auto num = [](double v) {
        if (std::isnan(v)) return std::string("n/a");
        std::ostringstream s;
        s << std::setprecision(6) << v;
        return s.str();
    };
    row("n x p", std::to_string(r.n) + " x " + std::to_string(r.p));
    row("lambda1", num(r.lambda1));
    row("lambda2", num(r.lambda2));
    row("t_n", num(r.t_n));
    row("sigma_hat", num(r.sigma_hat));
    row("xi_hat", num(r.xi_hat));
    row("epsilon", num(r.epsilon));
    row("alpha", num(r.alpha));
    row("critical", num(r.critical));
    row("p_value", num(r.p_value));
    row("reject", r.reject ? "yes" : "no");
    row("epsilon_hat", r.degenerate ? "n/a"
                       : r.epsilon_hat.finite() ? num(r.epsilon_hat.value) + (r.epsilon_hat.at_lower_bound ? " (lower bound)" : "")
                                                 : "inf");
    row("ci_lambda1_lower", num(r.ci_lambda1_lower) + (r.ci_lambda1_informative ? "" : " (uninformative)"));
    row("ci_rn", "[" + num(r.ci_rn_lower) + ", " + num(r.ci_rn_upper) + "]");
    row("k_hat", r.k_hat ? std::to_string(*r.k_hat) : "n/a");
    if (r.kappa) {
        row("onatski kappa", std::to_string(*r.kappa));
        row("onatski R_n", num(r.onatski.value_or(NAN)));
        row("onatski critical", num(r.onatski_critical.value_or(NAN)));
        row("onatski p_value", num(r.onatski_p_value.value_or(NAN)));
    }
    if (r.degenerate) row("degenerate", "yes");
    if (!r.quest_converged) row("quest_converged", "no");
    for (const auto& n : r.notes) row("note", n);
    return os.str();
}

inline Json bootstrap_summary(const BootstrapRun& run, const std::vector<double>& levels = {0.05, 0.5, 0.95}) {
    Json j;
    j["schema"] = kSchemaVersion;
    j["functional"] = run.functional();
    j["B"] = run.B();
    j["seed"] = run.seed();
    j["n"] = run.n();
    j["p"] = run.lambdas().size();
    j["normalizers"] = {{"xi_tilde0", run.normalizers().xi_tilde0},
                        {"r_tilde", run.normalizers().r_tilde},
                        {"sigma_tilde", run.normalizers().sigma_tilde}};
    auto describe = [&](const std::vector<double>& v) {
        Json d;
        d["mean"] = mean_of(v);
        d["sd"] = v.size() > 1 ? Json(sd_of(v)) : Json(nullptr);
        Json q = Json::object();
        for (double l : levels) {
            std::ostringstream k;
            k << l;
            q[k.str()] = quantile_type7(v, l);
        }
        d["quantiles"] = q;
        return d;
    };
    Json cols = Json::array();
    for (int c = 0; c < run.width(); ++c) {
        Json d = describe(run.column(c));
        d["column"] = c;
        cols.push_back(d);
    }
    j["columns"] = cols;
    if (run.width() >= 2 && run.functional() != "gap") {
        const NormalizedSamples ns = normalized_samples(run);
        j["L_star"] = describe(ns.L);
        j["G_star"] = describe(ns.G);
    }
    return j;
}

inline void write_bootstrap_csv(std::ostream& os, const BootstrapRun& run) {
    os << "b";
    for (int c = 0; c < run.width(); ++c) os << ",stat" << c + 1;
    os << "\n" << std::setprecision(17);
    for (int b = 0; b < run.B(); ++b) {
        os << b;
        for (int c = 0; c < run.width(); ++c) os << "," << run.at(b, c);
        os << "\n";
    }
}

inline Json to_json(const Scenario& s) {
    Json j;
    j["schema"] = kSchemaVersion;
    j["kind"] = to_string(s.kind);
    j["leading"] = s.leading;
    j["decay_c"] = s.decay_c;
    j["custom_atoms"] = s.custom_atoms;
    j["n"] = s.n;
    j["p"] = s.p;
    j["law"] = to_string(s.law);
    j["rotate"] = s.rotate;
    j["reps"] = s.reps;
    j["seed"] = s.seed;
    j["epsilon"] = s.epsilon;
    j["alpha"] = s.alpha;
    return j;
}

inline Scenario scenario_from_json(const Json& j) {
    try {
        Scenario s;
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "spiked")
            s.kind = SpectrumKind::spiked;
        else if (kind == "decaying")
            s.kind = SpectrumKind::decaying;
        else if (kind == "custom")
            s.kind = SpectrumKind::custom;
        else
            throw ParseError("unknown spectrum kind '" + kind + "'");
        s.leading = j.at("leading").get<std::vector<double>>();
        s.decay_c = j.value("decay_c", 1.0);
        s.custom_atoms = j.value("custom_atoms", std::vector<double>{});
        s.n = j.at("n").get<int>();
        s.p = j.at("p").get<int>();
        const std::string law = j.value("law", std::string("gaussian"));
        if (law == "gaussian")
            s.law = DataLaw::gaussian;
        else if (law == "t10")
            s.law = DataLaw::t10;
        else
            throw ParseError("unknown data law '" + law + "'");
        s.rotate = j.value("rotate", false);
        s.reps = j.value("reps", 200);
        s.seed = j.value("seed", std::uint64_t{1});
        s.epsilon = j.value("epsilon", 0.2);
        s.alpha = j.value("alpha", 0.05);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid scenario JSON: ") + e.what());
    }
}

} // namespace subcrit
