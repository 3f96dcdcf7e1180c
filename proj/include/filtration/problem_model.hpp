#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "filtration/common.hpp"

namespace filtration {

using ScalarFn = std::function<double(double)>;
using SpaceTimeFn = std::function<double(double r, double t)>;

struct NonDegenerate {
    double alpha0;  // lower bound of G'
};

struct DegeneratePowerLike {
    double delta;  // G' monotone on (-delta, 0) and (0, delta)
};

using NonlinearityKind = std::variant<NonDegenerate, DegeneratePowerLike>;

/// Constitutive map G of the filtration equation together with G' and G^{-1}.
///
/// Construction never validates; use check_nonlinearity / validate_h0 to
/// obtain a report, so that planted violations can be inspected.
class Nonlinearity {
public:
    Nonlinearity(ScalarFn g, ScalarFn dg, ScalarFn ginv, NonlinearityKind kind,
                 std::optional<double> exponent = std::nullopt)
        : g_(std::move(g)), dg_(std::move(dg)), ginv_(std::move(ginv)), kind_(kind),
          exponent_(exponent) {}

    double operator()(double u) const { return g_(u); }
    double evaluate(double u) const { return g_(u); }
    double derivative(double u) const { return dg_(u); }
    double inverse(double v) const { return ginv_(v); }

    const NonlinearityKind& kind() const { return kind_; }
    bool is_nondegenerate() const { return std::holds_alternative<NonDegenerate>(kind_); }
    double alpha0() const {
        if (!is_nondegenerate()) throw PreconditionError("nonlinearity is degenerate: no alpha0");
        return std::get<NonDegenerate>(kind_).alpha0;
    }
    std::optional<double> exponent() const { return exponent_; }

private:
    ScalarFn g_;
    ScalarFn dg_;
    ScalarFn ginv_;
    NonlinearityKind kind_;
    std::optional<double> exponent_;
};

/// G(u) = |u|^{m-1} u.
inline Nonlinearity make_power_nonlinearity(double m) {
    if (!(m >= 1.0)) throw PreconditionError("power nonlinearity requires m >= 1");
    auto g = [m](double u) { return std::pow(std::abs(u), m - 1.0) * u; };
    auto dg = [m](double u) { return m * std::pow(std::abs(u), m - 1.0); };
    auto ginv = [m](double v) { return std::copysign(std::pow(std::abs(v), 1.0 / m), v); };
    NonlinearityKind kind = m == 1.0 ? NonlinearityKind{NonDegenerate{1.0}}
                                     : NonlinearityKind{DegeneratePowerLike{1.0}};
    return Nonlinearity(g, dg, ginv, kind, m);
}

/// Affine continuation of G outside [-bound, bound] with slopes
/// max(G'(+-bound), 1), making G a bijection of R.
inline Nonlinearity extend_inverse(const Nonlinearity& nl, double bound) {
    const double b = std::abs(bound);
    const double g_hi = nl(b);
    const double g_lo = nl(-b);
    const double s_hi = std::max(nl.derivative(b), 1.0);
    const double s_lo = std::max(nl.derivative(-b), 1.0);
    auto g = [nl, b, g_hi, g_lo, s_hi, s_lo](double u) {
        if (u > b) return g_hi + s_hi * (u - b);
        if (u < -b) return g_lo + s_lo * (u + b);
        return nl(u);
    };
    auto dg = [nl, b, s_hi, s_lo](double u) {
        if (u > b) return s_hi;
        if (u < -b) return s_lo;
        return nl.derivative(u);
    };
    auto ginv = [nl, b, g_hi, g_lo, s_hi, s_lo](double v) {
        if (v > g_hi) return b + (v - g_hi) / s_hi;
        if (v < g_lo) return -b + (v - g_lo) / s_lo;
        return nl.inverse(v);
    };
    return Nonlinearity(g, dg, ginv, nl.kind(), nl.exponent());
}

/// Radial envelope function; power_exponent tags the family c * r^{-alpha}.
struct Envelope {
    ScalarFn fn;
    std::optional<double> power_exponent;

    double operator()(double r) const { return fn(r); }
};

inline Envelope power_law_envelope(double alpha, double coefficient = 1.0) {
    return Envelope{[alpha, coefficient](double r) { return coefficient * std::pow(r, -alpha); }, alpha};
}

struct RadialDensity {
    ScalarFn rho;
    std::optional<Envelope> upper;
    std::optional<Envelope> lower;
    double rhat = 1.0;
    std::optional<double> sup_bound;

    double operator()(double r) const { return rho(r); }
};

/// rho(r) = (1 + r)^{-alpha}, alpha >= 0, with envelopes on [rhat, oo), rhat >= 1:
/// upper r^{-alpha}, lower 2^{-alpha} r^{-alpha}.
inline RadialDensity shifted_power_density(double alpha, double rhat = 1.0) {
    if (alpha < 0.0) throw PreconditionError("shifted power density requires alpha >= 0");
    if (rhat < 1.0) throw PreconditionError("shifted power density envelopes need rhat >= 1");
    RadialDensity d;
    d.rho = [alpha](double r) { return std::pow(1.0 + r, -alpha); };
    d.upper = power_law_envelope(alpha);
    d.lower = power_law_envelope(alpha, std::pow(2.0, -alpha));
    d.rhat = rhat;
    d.sup_bound = 1.0;
    return d;
}

inline RadialDensity constant_density(double value, double rhat = 1.0) {
    if (!(value > 0.0)) throw PreconditionError("constant density must be positive");
    RadialDensity d;
    d.rho = [value](double) { return value; };
    d.upper = power_law_envelope(0.0, value);
    d.lower = power_law_envelope(0.0, value);
    d.rhat = rhat;
    d.sup_bound = value;
    return d;
}

struct BoundaryTrace {
    ScalarFn a;
    double horizon = 1.0;

    double operator()(double t) const { return a(t); }

    std::vector<double> sample_times(std::size_t count = 1001) const {
        return linspace(0.0, horizon, count);
    }
    double sup_norm(std::size_t count = 1001) const {
        double s = 0.0;
        for (double t : sample_times(count)) s = std::max(s, std::abs(a(t)));
        return s;
    }
    double minimum(std::size_t count = 1001) const {
        double s = std::numeric_limits<double>::infinity();
        for (double t : sample_times(count)) s = std::min(s, a(t));
        return s;
    }
    double maximum(std::size_t count = 1001) const {
        double s = -std::numeric_limits<double>::infinity();
        for (double t : sample_times(count)) s = std::max(s, a(t));
        return s;
    }
    bool positive(std::size_t count = 1001) const { return minimum(count) > 0.0; }
};

inline BoundaryTrace constant_trace(double value, double horizon) {
    return BoundaryTrace{[value](double) { return value; }, horizon};
}

inline BoundaryTrace linear_trace(double start, double slope, double horizon) {
    return BoundaryTrace{[start, slope](double t) { return start + slope * t; }, horizon};
}

struct InitialDatum {
    ScalarFn u0;
    std::optional<double> limit_at_infinity;
    double sup_norm = 0.0;

    double operator()(double r) const { return u0(r); }
};

/// Builds an InitialDatum, sampling the sup norm on [0, 1e4].
inline InitialDatum make_initial(ScalarFn u0, std::optional<double> limit) {
    InitialDatum d{std::move(u0), limit, 0.0};
    for (double r : linspace(0.0, 10.0, 2001)) d.sup_norm = std::max(d.sup_norm, std::abs(d.u0(r)));
    for (double r : geomspace(10.0, 1e4, 1001)) d.sup_norm = std::max(d.sup_norm, std::abs(d.u0(r)));
    if (limit) d.sup_norm = std::max(d.sup_norm, std::abs(*limit));
    return d;
}

inline InitialDatum constant_initial(double value) { return make_initial([value](double) { return value; }, value); }

/// u0(r) = base + amplitude * exp(-(r / width)^2).
inline InitialDatum bump_initial(double base, double amplitude, double width) {
    return make_initial(
        [=](double r) { return base + amplitude * std::exp(-(r / width) * (r / width)); }, base);
}

/// u0(r) = base + amplitude / (1 + r).
inline InitialDatum algebraic_initial(double base, double amplitude) {
    return make_initial([=](double r) { return base + amplitude / (1.0 + r); }, base);
}

struct ProblemSpec {
    int dimension = 3;
    double horizon = 1.0;
    RadialDensity density;
    Nonlinearity nonlinearity;
    InitialDatum initial;
    BoundaryTrace trace;

    void validate() const {
        if (dimension < 3) throw PreconditionError("dimension must be >= 3");
        if (!(horizon > 0.0)) throw PreconditionError("horizon must be positive");
    }
};

/// max(||u0||_oo, ||a||_oo) on the sample grids.
inline double sup_bound_K(const InitialDatum& initial, const BoundaryTrace& trace) {
    return std::max(initial.sup_norm, trace.sup_norm());
}

/// Smooth cutoff: 1 on [0, j/2], 0 on [j, oo), reversed quintic smoothstep between.
inline double cutoff(int j, double r) {
    if (j < 1) throw PreconditionError("cutoff index j must be >= 1");
    const double half = 0.5 * static_cast<double>(j);
    if (r <= half) return 1.0;
    if (r >= static_cast<double>(j)) return 0.0;
    const double s = (r - half) / half;
    const double step = s * s * s * (s * (6.0 * s - 15.0) + 10.0);
    return 1.0 - step;
}

// ---------------------------------------------------------------------------
// Hypothesis validation

struct ClauseResult {
    std::string clause;
    bool passed = true;
    std::optional<double> witness;  // violating sample point
    std::string detail;
};

struct ValidationReport {
    std::vector<ClauseResult> clauses;

    bool all_passed() const {
        return std::all_of(clauses.begin(), clauses.end(), [](const ClauseResult& c) { return c.passed; });
    }
    const ClauseResult* find(const std::string& id) const {
        for (const auto& c : clauses)
            if (c.clause == id) return &c;
        return nullptr;
    }
};

/// Sampled continuity: a jump between neighbours counts as a discontinuity
/// when subdividing the interval does not shrink it.
inline std::optional<double> find_discontinuity(const ScalarFn& f, const std::vector<double>& xs,
                                                double jump_tol) {
    for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
        const double jump = std::abs(f(xs[k + 1]) - f(xs[k]));
        if (jump <= jump_tol) continue;
        double sub = 0.0;
        double prev = f(xs[k]);
        for (int s = 1; s <= 8; ++s) {
            const double x = xs[k] + (xs[k + 1] - xs[k]) * s / 8.0;
            const double v = f(x);
            sub = std::max(sub, std::abs(v - prev));
            prev = v;
        }
        if (sub > 0.5 * jump) return xs[k];
    }
    return std::nullopt;
}

struct ValidationOptions {
    SampleGrid radii;
    std::size_t nonlinearity_points = 2000;
    double jump_tol = 1e-3;
    double inverse_tol = 1e-10;
};

/// Sample-based check of the structural conditions on G.
inline std::vector<ClauseResult> check_nonlinearity(const Nonlinearity& nl, double working_bound,
                                                    const ValidationOptions& opt = {}) {
    std::vector<ClauseResult> out;
    const double w = std::max(working_bound, 1.0);
    const auto us = linspace(-w, w, opt.nonlinearity_points);

    ClauseResult zero{"H0(ii) G(0)=0", std::abs(nl(0.0)) <= 1e-12, std::nullopt, {}};
    if (!zero.passed) {
        zero.witness = 0.0;
        zero.detail = "G(0) = " + std::to_string(nl(0.0));
    }
    out.push_back(zero);

    ClauseResult mono{"H0(ii) G strictly increasing", true, std::nullopt, {}};
    for (std::size_t k = 0; k + 1 < us.size(); ++k)
        if (!(nl(us[k + 1]) > nl(us[k]))) {
            mono.passed = false;
            mono.witness = us[k];
            break;
        }
    out.push_back(mono);

    ClauseResult pos{"H0(ii) G'>0 off 0", true, std::nullopt, {}};
    for (double u : us)
        if (u != 0.0 && !(nl.derivative(u) > 0.0)) {
            pos.passed = false;
            pos.witness = u;
            break;
        }
    out.push_back(pos);

    if (nl.is_nondegenerate()) {
        const double a0 = nl.alpha0();
        ClauseResult nd{"G' >= alpha0", a0 > 0.0, std::nullopt, {}};
        for (double u : us)
            if (nl.derivative(u) < a0) {
                nd.passed = false;
                nd.witness = u;
                break;
            }
        out.push_back(nd);
    } else {
        const double delta = std::get<DegeneratePowerLike>(nl.kind()).delta;
        ClauseResult dm{"H0(ii) G' monotone near 0", true, std::nullopt, {}};
        const auto right = linspace(0.0, delta, opt.nonlinearity_points / 2);
        for (std::size_t k = 1; k + 1 < right.size(); ++k) {
            if (nl.derivative(right[k + 1]) < nl.derivative(right[k])) {
                dm.passed = false;
                dm.witness = right[k];
                break;
            }
            if (nl.derivative(-right[k + 1]) < nl.derivative(-right[k])) {
                dm.passed = false;
                dm.witness = -right[k];
                break;
            }
        }
        out.push_back(dm);
    }

    ClauseResult inv{"G^{-1}(G(s)) = s", true, std::nullopt, {}};
    for (double u : us)
        if (std::abs(nl.inverse(nl(u)) - u) > opt.inverse_tol * std::max(1.0, std::abs(u))) {
            inv.passed = false;
            inv.witness = u;
            break;
        }
    out.push_back(inv);
    return out;
}

inline ValidationReport validate_h0(const ProblemSpec& spec, const ValidationOptions& opt = {}) {
    ValidationReport report;
    const auto rs = sample_radii(spec.density.rhat, opt.radii);

    ClauseResult rho_pos{"H0(i) rho>0", true, std::nullopt, {}};
    for (double r : rs)
        if (!(spec.density(r) > 0.0)) {
            rho_pos.passed = false;
            rho_pos.witness = r;
            break;
        }
    report.clauses.push_back(rho_pos);

    ClauseResult rho_c{"H0(i) rho continuous", true, std::nullopt, {}};
    if (auto x = find_discontinuity(spec.density.rho, rs, opt.jump_tol)) {
        rho_c.passed = false;
        rho_c.witness = *x;
    }
    report.clauses.push_back(rho_c);

    if (spec.density.upper || spec.density.lower) {
        ClauseResult env{"envelope ordering", true, std::nullopt, {}};
        for (double r : rs) {
            if (r < spec.density.rhat) continue;
            const double v = spec.density(r);
            const double slack = 1e-12 * std::max(1.0, std::abs(v));
            if ((spec.density.upper && v > (*spec.density.upper)(r) + slack) ||
                (spec.density.lower && v < (*spec.density.lower)(r) - slack)) {
                env.passed = false;
                env.witness = r;
                break;
            }
        }
        report.clauses.push_back(env);
    }

    const double K = sup_bound_K(spec.initial, spec.trace);
    for (auto& c : check_nonlinearity(spec.nonlinearity, K, opt)) report.clauses.push_back(std::move(c));

    ClauseResult bounded{"H0(iii) u0 bounded", true, std::nullopt, {}};
    for (double r : rs)
        if (!std::isfinite(spec.initial(r))) {
            bounded.passed = false;
            bounded.witness = r;
            break;
        }
    report.clauses.push_back(bounded);

    ClauseResult cont{"H0(iii) u0 continuous", true, std::nullopt, {}};
    if (auto x = find_discontinuity(spec.initial.u0, rs, opt.jump_tol)) {
        cont.passed = false;
        cont.witness = *x;
    }
    report.clauses.push_back(cont);
    return report;
}

}  // namespace filtration
