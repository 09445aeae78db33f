#pragma once

#include "subcrit/common.hpp"

#include <complex>
#include <limits>
#include <sstream>

namespace subcrit {

using Complex = std::complex<double>;

/// Population spectrum as a weighted-atom distribution together with the
/// aspect ratio y = p/n.
class SpectralModel {
public:
    SpectralModel(std::vector<double> atoms, std::vector<double> weights, double y)
        : atoms_(std::move(atoms)), weights_(std::move(weights)), y_(y) {
        validate();
    }

    /// Uniform weights 1/m; atoms are sorted descending.
    static SpectralModel uniform(std::vector<double> atoms, double y) {
        atoms = sorted_descending(std::move(atoms));
        const std::size_t m = atoms.size();
        if (m == 0) throw InputError("spectral model needs at least one atom");
        std::vector<double> w(m, 1.0 / static_cast<double>(m));
        return SpectralModel(std::move(atoms), std::move(w), y);
    }

    const std::vector<double>& atoms() const noexcept { return atoms_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    double y() const noexcept { return y_; }
    std::size_t size() const noexcept { return atoms_.size(); }
    double largest() const { return atoms_.front(); }
    double smallest() const { return atoms_.back(); }

    /// y = 1 is outside the regime the asymptotics cover; callers may warn.
    bool unit_ratio() const noexcept { return std::abs(y_ - 1.0) < 1e-12; }

    /// Same atoms, different aspect ratio.
    SpectralModel with_ratio(double y) const { return SpectralModel(atoms_, weights_, y); }

private:
    void validate() const {
        if (atoms_.empty()) throw InputError("spectral model needs at least one atom");
        if (atoms_.size() != weights_.size()) throw DimensionError("atoms and weights differ in length");
        if (!(y_ > 0.0) || !std::isfinite(y_)) throw DomainError("aspect ratio y must be positive and finite");
        double total = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
            if (!(atoms_[i] > 0.0) || !std::isfinite(atoms_[i]))
                throw DomainError("spectral model atoms must be strictly positive and finite");
            if (i > 0 && atoms_[i] > atoms_[i - 1]) throw InputError("spectral model atoms must be non-increasing");
            if (!(weights_[i] >= 0.0)) throw DomainError("spectral model weights must be nonnegative");
            total += weights_[i];
        }
        if (std::abs(total - 1.0) > 1e-12) throw DomainError("spectral model weights must sum to 1");
    }

    std::vector<double> atoms_;
    std::vector<double> weights_;
    double y_;
};

struct XiSolution {
    int k = 0;
    double xi = 0.0;
    double residual = 0.0;
};

struct XiOptions {
    int max_iterations = 200;
    double tolerance = 1e-14;
};

namespace detail {

struct TrimmedAtoms {
    std::vector<double> atoms;
    std::vector<double> weights; // not renormalised: the k excluded atoms keep their 1/p share
};

/// Removes probability mass k/p from the top of the model.
inline TrimmedAtoms trim_top(const SpectralModel& model, double removed_mass) {
    TrimmedAtoms t;
    double left = removed_mass;
    for (std::size_t i = 0; i < model.size(); ++i) {
        double w = model.weights()[i];
        if (left > 0.0) {
            const double take = std::min(w, left);
            w -= take;
            left -= take;
        }
        if (w > 1e-15) {
            t.atoms.push_back(model.atoms()[i]);
            t.weights.push_back(w);
        }
    }
    return t;
}

inline double xi_lhs(const TrimmedAtoms& t, double xi) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.atoms.size(); ++i) {
        const double u = t.atoms[i] * xi;
        const double r = u / (1.0 - u);
        s += t.weights[i] * r * r;
    }
    return s;
}

} // namespace detail

/// Critical threshold xi_{n,k}: the root in (0, 1/lambda_{k+1}) of
/// (1/p) sum_{j>k} (lambda_j xi / (1 - lambda_j xi))^2 = n/p, by bisection on
/// the strictly increasing left-hand side.
inline XiSolution solve_xi(const SpectralModel& model, int n, int k, const XiOptions& opt = {}) {
    if (n <= 0) throw InputError("solve_xi: n must be positive");
    if (k < 0 || static_cast<std::size_t>(k) >= model.size()) {
        std::ostringstream os;
        os << "solve_xi: k = " << k << " must be below the number of atoms (" << model.size() << ")";
        throw IndexError(os.str());
    }
    const double p = model.y() * static_cast<double>(n);
    const auto trimmed = detail::trim_top(model, static_cast<double>(k) / p);
    if (trimmed.atoms.empty()) throw IndexError("solve_xi: no population mass left after excluding k atoms");
    const double top = trimmed.atoms.front();
    // (1/p) sum -> weights already carry the 1/p factor; the target n/p is 1/y.
    const double target = 1.0 / model.y();

    double lo = 1e-12;
    double hi = (1.0 - 1e-9) / top;
    if (detail::xi_lhs(trimmed, hi) < target) throw NumericError("solve_xi: root is not bracketed");
    int it = 0;
    for (; it < opt.max_iterations && hi - lo > opt.tolerance; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (detail::xi_lhs(trimmed, mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    XiSolution sol;
    sol.k = k;
    const double r_lo = std::abs(detail::xi_lhs(trimmed, lo) - target);
    const double r_hi = std::abs(detail::xi_lhs(trimmed, hi) - target);
    sol.xi = r_lo <= r_hi ? lo : hi;
    sol.residual = std::min(r_lo, r_hi);
    return sol;
}

/// Rightmost support endpoint r = (1/xi0)(1 + y int lambda xi0/(1 - lambda xi0) dH).
inline double edge(const SpectralModel& model, double xi0) {
    if (!(xi0 > 0.0) || xi0 * model.largest() >= 1.0)
        throw DomainError("edge: xi0 must satisfy 0 < xi0 * lambda_1 < 1");
    double s = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const double u = model.atoms()[i] * xi0;
        s += model.weights()[i] * u / (1.0 - u);
    }
    return (1.0 + model.y() * s) / xi0;
}

/// sigma^3 = (1/xi^3)(1 + y int (lambda xi/(1 - lambda xi))^3 dH).
inline double sigma_cubed(const SpectralModel& model, double xi) {
    if (!(xi > 0.0) || xi * model.largest() >= 1.0)
        throw DomainError("sigma_cubed: xi must satisfy 0 < xi * lambda_1 < 1");
    double s = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const double u = model.atoms()[i] * xi;
        const double r = u / (1.0 - u);
        s += model.weights()[i] * r * r * r;
    }
    return (1.0 + model.y() * s) / (xi * xi * xi);
}

inline constexpr double kAtomCollision = 1e-9;

namespace detail {
inline bool hits_atom(const SpectralModel& model, double beta) {
    for (double a : model.atoms())
        if (std::abs(beta - a) <= kAtomCollision) return true;
    return false;
}
} // namespace detail

/// psi(beta) = beta + y beta int lambda/(beta - lambda) dH.
inline double psi(const SpectralModel& model, double beta) {
    if (detail::hits_atom(model, beta)) throw DomainError("psi: beta collides with an atom of H");
    double s = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) s += model.weights()[i] * model.atoms()[i] / (beta - model.atoms()[i]);
    return beta + model.y() * beta * s;
}

/// psi'(beta) = 1 - y int lambda^2/(beta - lambda)^2 dH, with the convention
/// psi' = 0 on the support of H.
inline double psi_prime(const SpectralModel& model, double beta) {
    if (detail::hits_atom(model, beta)) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const double r = model.atoms()[i] / (beta - model.atoms()[i]);
        s += model.weights()[i] * r * r;
    }
    return 1.0 - model.y() * s;
}

// ---------------------------------------------------------------------------
// Stieltjes transform of the companion limit law.

struct StieltjesOptions {
    int max_fixed_point = 20000;
    double damping = 0.5;
    double fixed_point_tolerance = 1e-10;
    int max_newton = 100;
    double tolerance = 1e-12; // on |residual|
};

namespace detail {

struct MpTerms {
    Complex sum1; // sum w lambda/(1 + s lambda)
    Complex sum2; // sum w lambda^2/(1 + s lambda)^2
};

inline MpTerms mp_terms(const SpectralModel& model, Complex s) {
    const double sr = s.real();
    const double si = s.imag();
    double a1 = 0.0, b1 = 0.0, a2 = 0.0, b2 = 0.0;
    const auto& lam = model.atoms();
    const auto& w = model.weights();
    for (std::size_t i = 0; i < lam.size(); ++i) {
        const double l = lam[i];
        const double re = 1.0 + sr * l;
        const double im = si * l;
        const double inv = 1.0 / (re * re + im * im);
        // q = l/(1 + s l) = l (re - i im) * inv
        const double qr = l * re * inv;
        const double qi = -l * im * inv;
        a1 += w[i] * qr;
        b1 += w[i] * qi;
        a2 += w[i] * (qr * qr - qi * qi);
        b2 += w[i] * (2.0 * qr * qi);
    }
    return {Complex(a1, b1), Complex(a2, b2)};
}

inline Complex mp_f(const SpectralModel& model, Complex z, Complex s, const MpTerms& t) {
    return z + 1.0 / s - model.y() * t.sum1;
}

/// Newton iteration restricted to the upper half plane. Returns false when
/// it fails to reach the residual tolerance.
inline bool newton_upper(const SpectralModel& model, Complex z, Complex& s, int max_it, double tol) {
    MpTerms t = mp_terms(model, s);
    Complex f = mp_f(model, z, s, t);
    double fabs = std::abs(f);
    for (int it = 0; it < max_it; ++it) {
        if (fabs < tol) return true;
        const Complex fp = -1.0 / (s * s) + model.y() * t.sum2;
        if (fp == Complex(0.0, 0.0)) return false;
        Complex step = -f / fp;
        bool accepted = false;
        for (int h = 0; h < 40; ++h) {
            const Complex cand = s + step;
            if (cand.imag() > 0.0) {
                const MpTerms tc = mp_terms(model, cand);
                const Complex fc = mp_f(model, z, cand, tc);
                const double fcabs = std::abs(fc);
                if (fcabs < fabs || h == 39) {
                    s = cand;
                    t = tc;
                    f = fc;
                    fabs = fcabs;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!accepted) return false;
    }
    return fabs < tol;
}

inline Complex fixed_point(const SpectralModel& model, Complex z, Complex s, const StieltjesOptions& opt) {
    for (int it = 0; it < opt.max_fixed_point; ++it) {
        const MpTerms t = mp_terms(model, s);
        const Complex next = -1.0 / (z - model.y() * t.sum1);
        const Complex upd = (1.0 - opt.damping) * s + opt.damping * next;
        if (std::abs(upd - s) < opt.fixed_point_tolerance * std::max(1.0, std::abs(s))) return upd;
        s = upd;
    }
    return s;
}

inline double support_scale(const SpectralModel& model) {
    const double sy = 1.0 + std::sqrt(model.y());
    return model.largest() * sy * sy;
}

} // namespace detail

inline double mp_residual(const SpectralModel& model, Complex z, Complex s) {
    return std::abs(detail::mp_f(model, z, s, detail::mp_terms(model, s)));
}

/// Solves z = -1/s + y int lambda/(1 + s lambda) dH for the root with Im s > 0.
/// Damped fixed-point iteration from s = -1/z followed by Newton polishing;
/// for z close to the real axis the solve is continued down from a larger
/// imaginary part.
inline Complex mp_stieltjes(Complex z, const SpectralModel& model, const StieltjesOptions& opt = {}) {
    if (!(z.imag() > 0.0)) throw DomainError("mp_stieltjes: Im z must be positive");
    const double scale = detail::support_scale(model);
    const double eta_start = std::max(z.imag(), 0.25 * scale);

    Complex zk(z.real(), eta_start);
    Complex s = detail::fixed_point(model, zk, -1.0 / zk, opt);
    if (!(s.imag() > 0.0)) s = -1.0 / zk;
    bool ok = detail::newton_upper(model, zk, s, opt.max_newton, opt.tolerance);

    double eta = eta_start;
    while (ok && eta > z.imag()) {
        eta = std::max(z.imag(), eta * 0.1);
        zk = Complex(z.real(), eta);
        ok = detail::newton_upper(model, zk, s, opt.max_newton, opt.tolerance);
    }
    if (!ok) {
        // Last resort: plain damped iteration at the target point.
        s = detail::fixed_point(model, z, -1.0 / z, opt);
        ok = s.imag() > 0.0 && detail::newton_upper(model, z, s, opt.max_newton, opt.tolerance);
    }
    if (!ok || !(s.imag() > 0.0) || mp_residual(model, z, s) >= 1e-10) {
        std::ostringstream os;
        os.precision(12);
        os << "mp_stieltjes did not converge at z = " << z.real() << " + " << z.imag() << "i";
        throw NumericError(os.str());
    }
    return s;
}

/// Newton from a nearby solution (grid continuation); falls back to the full
/// solve when the warm start fails.
inline Complex mp_stieltjes_from(Complex z, const SpectralModel& model, Complex guess,
                                 const StieltjesOptions& opt = {}) {
    Complex s = guess;
    if (s.imag() <= 0.0) s = Complex(s.real(), std::max(z.imag(), 1e-12));
    if (detail::newton_upper(model, z, s, 30, opt.tolerance) && s.imag() > 0.0) return s;
    return mp_stieltjes(z, model, opt);
}

struct DensityOptions {
    double eta = 0.0; // 0 selects 1e-5 * support scale
    StieltjesOptions stieltjes{};
};

inline double default_eta(const SpectralModel& model) { return 1e-5 * detail::support_scale(model); }

/// Limiting density of the p-dimensional sample spectrum,
/// Im s(x + i eta) / (pi y), evaluated on an increasing grid.
inline std::vector<double> mp_density(const SpectralModel& model, std::span<const double> grid,
                                      const DensityOptions& opt = {}) {
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw InputError("mp_density: grid must be strictly increasing");
    const double eta = opt.eta > 0.0 ? opt.eta : default_eta(model);
    std::vector<double> out(grid.size(), 0.0);
    if (grid.empty()) return out;
    const double pi = 3.14159265358979323846;

    Complex s = mp_stieltjes(Complex(grid.back(), eta), model, opt.stieltjes);
    for (std::size_t k = grid.size(); k-- > 0;) {
        const Complex z(grid[k], eta);
        s = (k + 1 == grid.size()) ? s : mp_stieltjes_from(z, model, s, opt.stieltjes);
        double rho = s.imag() / (pi * model.y());
        if (rho < 0.0) {
            if (rho < -1e-8) throw NumericError("mp_density: negative density");
            rho = 0.0;
        }
        out[k] = rho;
    }
    return out;
}

} // namespace subcrit
