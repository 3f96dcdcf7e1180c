#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "filtration/common.hpp"
#include "filtration/problem_model.hpp"

namespace filtration {

enum class DecayTag { SlowDecay, FastDecay, Undetermined };
enum class EnvelopeSide { upper, lower };

inline const char* to_string(DecayTag tag) {
    switch (tag) {
        case DecayTag::SlowDecay: return "SlowDecay";
        case DecayTag::FastDecay: return "FastDecay";
        default: return "Undetermined";
    }
}

struct DecayClass {
    DecayTag tag = DecayTag::Undetermined;
    /// Estimate of the integral of r * env(r) over [rhat, oo); +inf on detected divergence.
    double integral_estimate = std::numeric_limits<double>::infinity();
    double partial_integral = 0.0;  // over [rhat, r_cut]
    double tail_estimate = 0.0;     // over [r_cut, oo) from the power fit
    double decade_exponent = 0.0;   // fitted decay exponent on the last decade
    double local_exponent = 0.0;    // fitted decay exponent at r_cut
    std::string diagnostics;
};

struct DecayOptions {
    double abs_tol = 1e-9;
    double cut_factor = 1e4;      // r_cut = cut_factor * rhat
    double divergence_cap = 1e6;  // partial integrals above this with growth count as divergence
    double exponent_margin = 0.02;
};

namespace detail {

/// Adaptive G7/K15 on [a, b] split into geometric panels of ratio <= 2.
/// Throws on non-finite values or when the error estimate stays large.
template <class F>
double panel_integral(F&& f, double a, double b, double abs_tol) {
    if (b <= a) return 0.0;
    double total = 0.0;
    double lo = a;
    while (lo < b) {
        const double hi = lo > 0.0 ? std::min(b, 2.0 * lo) : b;
        double err = 0.0;
        const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, lo, hi, 12, 1e-12,
                                                                                         &err);
        if (!std::isfinite(v) || err > std::max(1e-6, 1e-3 * std::abs(v)))
            throw PreconditionError("non-integrable singularity in [" + std::to_string(lo) + ", " +
                                    std::to_string(hi) + "]");
        (void)abs_tol;
        total += v;
        lo = hi;
    }
    return total;
}

inline double decay_exponent(const ScalarFn& env, double x0, double x1) {
    const double v0 = env(x0);
    const double v1 = env(x1);
    if (!(v0 > 0.0) || !(v1 > 0.0)) return std::numeric_limits<double>::infinity();
    return -std::log(v1 / v0) / std::log(x1 / x0);
}

}  // namespace detail

/// Tail test of the integral of r * env(r) over [rhat, oo).
///
/// Convergence is certified (FastDecay) only for an upper envelope whose
/// fitted exponent on the last decade exceeds 2 + margin. Divergence (SlowDecay)
/// is declared only for a lower envelope tagged as a power law with exponent
/// <= 2, or whose partial integrals exceed the cap while growing.
inline DecayClass classify_envelope(const Envelope& env, double rhat, EnvelopeSide which,
                                    const DecayOptions& opt = {}) {
    DecayClass out;
    const double x = opt.cut_factor * rhat;
    auto integrand = [&env](double r) { return r * env(r); };
    out.partial_integral = detail::panel_integral(integrand, rhat, x, opt.abs_tol);
    const double partial_short = detail::panel_integral(integrand, rhat, x / 10.0, opt.abs_tol);

    const bool vanishing_tail = env(x) == 0.0 && env(x / 10.0) == 0.0;
    out.decade_exponent = vanishing_tail ? std::numeric_limits<double>::infinity()
                                         : detail::decay_exponent(env.fn, x / 10.0, x);
    out.local_exponent = vanishing_tail ? std::numeric_limits<double>::infinity()
                                        : detail::decay_exponent(env.fn, x / 1.01, x);

    const bool converges = vanishing_tail || (out.decade_exponent > 2.0 + opt.exponent_margin &&
                                              out.local_exponent > 2.0);
    if (converges) {
        out.tail_estimate = vanishing_tail ? 0.0 : x * x * env(x) / (out.local_exponent - 2.0);
        out.integral_estimate = out.partial_integral + out.tail_estimate;
        if (which == EnvelopeSide::upper) {
            out.tag = DecayTag::FastDecay;
            out.diagnostics = "tail exponent above 2: integral converges";
        } else {
            out.diagnostics = "lower envelope integrable: no divergence certificate";
        }
        return out;
    }

    out.integral_estimate = std::numeric_limits<double>::infinity();
    const bool symbolic = env.power_exponent && *env.power_exponent <= 2.0;
    const bool capped = out.partial_integral > opt.divergence_cap && out.partial_integral > partial_short;
    if (which == EnvelopeSide::lower && (symbolic || capped)) {
        out.tag = DecayTag::SlowDecay;
        out.diagnostics = symbolic ? "power-law family with exponent <= 2" : "partial integrals exceed cap";
    } else {
        out.diagnostics = "tail exponent <= 2 + margin: convergence not certified";
    }
    return out;
}

inline DecayClass classify_decay(const RadialDensity& density, EnvelopeSide which, const DecayOptions& opt = {}) {
    const auto& env = which == EnvelopeSide::upper ? density.upper : density.lower;
    if (!env) throw PreconditionError("envelope required");
    return classify_envelope(*env, density.rhat, which, opt);
}

/// Radial potential V on [rhat, oo) with its derivative.
struct Potential {
    ScalarFn value;
    ScalarFn derivative;
    double rhat = 1.0;
    int dimension = 3;

    double operator()(double r) const { return value(r); }
};

struct PotentialOptions {
    DecayOptions decay;
    double panel_ratio = 1.05;
    std::optional<double> c0;  // coefficient of the harmonic add-on r^{2-N}
};

namespace detail {

struct PotentialTable {
    Envelope env;
    int dimension = 3;
    double rhat = 1.0;
    double c0 = 0.0;
    double r_cut = 1.0;
    double local_exponent = 0.0;
    std::vector<double> nodes;
    std::vector<double> mass;       // int_{rhat}^{r_k} s^{N-1} env
    std::vector<double> far_first;  // int_{r_k}^{r_cut} s env + tail(r_cut)

    double volume_weight(double s) const { return std::pow(s, dimension - 1) * env(s); }
    double linear_weight(double s) const { return s * env(s); }

    double tail_beyond(double r) const {
        const double v = env(r);
        if (v == 0.0 || !std::isfinite(local_exponent)) return 0.0;
        return r * r * v / (local_exponent - 2.0);
    }

    /// (int_{rhat}^r s^{N-1} env, int_r^oo s env)
    std::pair<double, double> moments(double r) const {
        auto vw = [this](double s) { return volume_weight(s); };
        auto lw = [this](double s) { return linear_weight(s); };
        if (r <= nodes.front()) {
            const double m = -panel_integral(vw, r, nodes.front(), 0.0);
            const double f = far_first.front() + panel_integral(lw, r, nodes.front(), 0.0);
            return {m, f};
        }
        if (r >= r_cut) {
            const double m = mass.back() + panel_integral(vw, r_cut, r, 0.0);
            return {m, tail_beyond(r)};
        }
        const auto it = std::upper_bound(nodes.begin(), nodes.end(), r);
        const std::size_t k = static_cast<std::size_t>(std::distance(nodes.begin(), it)) - 1;
        // panels have ratio <= 1.05, where a fixed 15-point Gauss rule is exact to rounding
        const double dm = boost::math::quadrature::gauss<double, 15>::integrate(vw, nodes[k], r);
        const double df = boost::math::quadrature::gauss<double, 15>::integrate(lw, nodes[k], r);
        return {mass[k] + dm, far_first[k] - df};
    }

    double value(double r) const {
        const auto [m, f] = moments(r);
        const double n2 = static_cast<double>(dimension - 2);
        const double fund = std::pow(r, 2 - dimension);
        return (fund * m + f) / n2 + c0 * fund;
    }

    double derivative(double r) const {
        const auto [m, f] = moments(r);
        (void)f;
        return -std::pow(r, 1 - dimension) * (m + c0 * static_cast<double>(dimension - 2));
    }
};

}  // namespace detail

/// V(r) = int_r^oo s^{1-N} int_{rhat}^s eta^{N-1} env(eta) d eta ds + c0 r^{2-N},
/// evaluated through the Fubini form ((r^{2-N} F(r) + int_r^oo s env) / (N-2)).
/// Then (r^{N-1} V')' = -r^{N-1} env exactly.
inline Potential build_potential(const Envelope& upper, double rhat, int dimension,
                                 const PotentialOptions& opt = {}) {
    if (dimension < 3) throw PreconditionError("potential requires N >= 3");
    const auto decay = classify_envelope(upper, rhat, EnvelopeSide::upper, opt.decay);
    if (decay.tag != DecayTag::FastDecay) throw PreconditionError("potential may be infinite");

    auto table = std::make_shared<detail::PotentialTable>();
    table->env = upper;
    table->dimension = dimension;
    table->rhat = rhat;
    table->r_cut = opt.decay.cut_factor * rhat;
    table->local_exponent = decay.local_exponent;

    for (double r = rhat; r < table->r_cut; r *= opt.panel_ratio) table->nodes.push_back(r);
    table->nodes.push_back(table->r_cut);
    const std::size_t n = table->nodes.size();
    table->mass.assign(n, 0.0);
    table->far_first.assign(n, 0.0);
    auto vw = [t = table.get()](double s) { return t->volume_weight(s); };
    auto lw = [t = table.get()](double s) { return t->linear_weight(s); };
    using rule = boost::math::quadrature::gauss<double, 15>;
    for (std::size_t k = 1; k < n; ++k)
        table->mass[k] = table->mass[k - 1] + rule::integrate(vw, table->nodes[k - 1], table->nodes[k]);
    table->far_first[n - 1] = table->tail_beyond(table->r_cut);
    for (std::size_t k = n - 1; k-- > 0;)
        table->far_first[k] =
            table->far_first[k + 1] + rule::integrate(lw, table->nodes[k], table->nodes[k + 1]);

    if (opt.c0) {
        table->c0 = std::max(0.0, *opt.c0);
    } else {
        table->c0 = table->far_first.front() > 0.0 ? 0.0 : std::pow(rhat, dimension - 2);
    }

    Potential p;
    p.value = [table](double r) { return table->value(r); };
    p.derivative = [table](double r) { return table->derivative(r); };
    p.rhat = rhat;
    p.dimension = dimension;
    return p;
}

/// Radial fundamental profile r^{2-N}.
inline double fundamental(double r, int dimension) {
    if (!(r > 0.0)) throw PreconditionError("fundamental profile is singular at r = 0");
    return std::pow(r, 2 - dimension);
}

struct PotentialResidualRow {
    double r;
    double laplacian;
    double rho_bar;
    double residual;
};

struct PotentialReport {
    std::vector<PotentialResidualRow> rows;
    double max_residual = -std::numeric_limits<double>::infinity();
    double argmax = 0.0;
    std::size_t monotonicity_violations = 0;
    std::size_t positivity_violations = 0;
    double tail_value = 0.0;
    bool passed = false;
};

/// Residual V'' + (N-1)V'/r + rho_bar on a uniform grid. The Laplacian uses
/// centered differences at steps h and h/2 combined by Richardson extrapolation.
inline PotentialReport verify_potential(const Potential& v, const ScalarFn& rho_bar, const std::vector<double>& grid,
                                        double tol) {
    PotentialReport rep;
    if (grid.size() < 3) throw PreconditionError("verification grid needs at least 3 points");
    const double h = grid[1] - grid[0];
    const double nm1 = static_cast<double>(v.dimension - 1);
    auto centered = [&](double r, double step, double v0) {
        const double vp = v(r + step);
        const double vm = v(r - step);
        return (vp - 2.0 * v0 + vm) / (step * step) + nm1 / r * (vp - vm) / (2.0 * step);
    };
    std::vector<double> vals(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) vals[i] = v(grid[i]);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double r = grid[i];
        const double lap = (4.0 * centered(r, 0.5 * h, vals[i]) - centered(r, h, vals[i])) / 3.0;
        const double rb = rho_bar(r);
        const double res = lap + rb;
        rep.rows.push_back({r, lap, rb, res});
        if (res > rep.max_residual) {
            rep.max_residual = res;
            rep.argmax = r;
        }
        if (!(vals[i] > 0.0)) ++rep.positivity_violations;
        if (i + 1 < grid.size() && vals[i + 1] > vals[i]) ++rep.monotonicity_violations;
    }
    rep.tail_value = vals.back();
    rep.passed = rep.max_residual <= tol && rep.monotonicity_violations == 0 && rep.positivity_violations == 0;
    return rep;
}

}  // namespace filtration
