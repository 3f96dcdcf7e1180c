#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "filtration/common.hpp"
#include "filtration/density_analysis.hpp"
#include "filtration/problem_model.hpp"

namespace filtration {

/// Constants of one local barrier pair around t0.
struct BarrierSpec {
    double t0 = 0.0;
    double sigma = 0.0;
    double delta = 0.0;
    double R = 0.0;
    double M_low = 0.0;
    double M_high = 0.0;
    double lambda_low = 0.0;
    double lambda_high = 0.0;
    double window_lo = 0.0;
    double window_hi = 0.0;
    std::optional<double> gamma_slope;
    std::optional<double> beta_floor;
    double a_t0 = 0.0;  // a(t0)

    void validate(double horizon) const {
        if (!(window_lo >= 0.0 && window_hi <= horizon && window_lo < window_hi))
            throw PreconditionError("barrier window must satisfy 0 <= t_lo < t_hi <= T");
        if (!(sigma > 0.0 && delta > 0.0)) throw PreconditionError("sigma and delta must be positive");
        if (M_low < 0.0 || M_high < 0.0 || lambda_low < 0.0 || lambda_high < 0.0)
            throw PreconditionError("barrier constants must be nonnegative");
    }
};

inline std::pair<double, double> barrier_window(double t0, double delta, double horizon) {
    return {std::max(t0 - delta, 0.0), std::min(t0 + delta, horizon)};
}

struct BarrierOptions {
    double safety_factor = 1.05;
    std::size_t samples = 2001;
};

// ---------------------------------------------------------------------------
// Moduli

struct ModulusOptions {
    std::size_t samples = 1001;
    int bisection_steps = 60;
    double jump_tol = 1e-3;
};

/// Largest delta with |G(a(t)) - G(a(t0))| <= sigma whenever |t - t0| <= delta, uniformly in t0.
inline double modulus_delta(const BoundaryTrace& trace, const Nonlinearity& nl, double sigma,
                            const ModulusOptions& opt = {}) {
    if (!(sigma > 0.0)) throw PreconditionError("sigma must be positive");
    const auto ts = trace.sample_times(opt.samples);
    if (auto at = find_discontinuity(trace.a, ts, opt.jump_tol))
        throw PreconditionError("trace discontinuous near t = " + std::to_string(*at));
    const double T = trace.horizon;
    std::vector<double> ga(ts.size());
    for (std::size_t k = 0; k < ts.size(); ++k) ga[k] = nl(trace(ts[k]));
    const double dt = T / static_cast<double>(ts.size() - 1);

    auto feasible = [&](double delta) {
        for (std::size_t k = 0; k < ts.size(); ++k) {
            const double t0 = ts[k];
            const double lo = std::max(0.0, t0 - delta), hi = std::min(T, t0 + delta);
            if (std::abs(nl(trace(lo)) - ga[k]) > sigma || std::abs(nl(trace(hi)) - ga[k]) > sigma) return false;
            const auto first = static_cast<std::size_t>(std::ceil(lo / dt - 1e-12));
            const auto last = std::min(ts.size() - 1, static_cast<std::size_t>(std::floor(hi / dt + 1e-12)));
            for (std::size_t i = first; i <= last; ++i)
                if (std::abs(ga[i] - ga[k]) > sigma) return false;
        }
        return true;
    };
    if (feasible(T)) return T;
    double lo = 0.0, hi = T;
    for (int it = 0; it < opt.bisection_steps; ++it) {
        const double mid = 0.5 * (lo + hi);
        (feasible(mid) ? lo : hi) = mid;
    }
    if (!(lo > 0.0)) throw NumericalError("no positive modulus found for sigma = " + std::to_string(sigma));
    return lo;
}

struct RadiusOptions {
    double step = 0.01;  // relative to rhat
    double extent_factor = 1e4;
    std::size_t tail_samples = 4001;
    int bisection_steps = 60;
};

/// Smallest R > rhat with |G(u0(r)) - G(target)| <= sigma for all sampled r >= R.
inline double radius_for_sigma(const InitialDatum& initial, double target, const Nonlinearity& nl, double sigma,
                               double rhat = 1.0, const RadiusOptions& opt = {}) {
    if (!(sigma > 0.0)) throw PreconditionError("sigma must be positive");
    if (!initial.limit_at_infinity || std::abs(*initial.limit_at_infinity - target) > 1e-12)
        throw PreconditionError("limit mismatch: initial datum does not tend to the target");
    const double gt = nl(target);
    auto ok = [&](double r) { return std::abs(nl(initial.u0(r)) - gt) <= sigma; };
    const double first = rhat * (1.0 + opt.step);
    const auto rs = geomspace(first, rhat * opt.extent_factor, opt.tail_samples);
    if (!ok(rs.back())) throw NumericalError("initial datum not within sigma of its limit on the sample tail");
    std::size_t fail = rs.size();
    for (std::size_t k = rs.size(); k-- > 0;)
        if (!ok(rs[k])) {
            fail = k;
            break;
        }
    if (fail == rs.size()) return first;
    double lo = rs[fail], hi = rs[fail + 1];
    for (int it = 0; it < opt.bisection_steps; ++it) {
        const double mid = 0.5 * (lo + hi);
        (ok(mid) ? hi : lo) = mid;
    }
    return hi;
}

// ---------------------------------------------------------------------------
// Constants

struct NondegenerateConstants {
    double lambda_low, M_low, lambda_high, M_high;
};

inline NondegenerateConstants nondegenerate_constants(const Nonlinearity& nl, double a_sup, double K, double delta,
                                                      double V_R, double safety_factor = 1.0) {
    if (!(V_R > 0.0)) throw PreconditionError("V(R) must be positive");
    if (!(delta > 0.0)) throw PreconditionError("delta must be positive");
    const double alpha0 = nl.alpha0();
    const double low_gap = nl(a_sup) - nl(-K);
    const double high_gap = nl(K) - nl(-a_sup);
    NondegenerateConstants c{};
    c.lambda_low = safety_factor * low_gap / (delta * delta);
    c.M_low = safety_factor * std::max(2.0 * c.lambda_low * delta / alpha0, low_gap / V_R);
    c.lambda_high = safety_factor * high_gap / (delta * delta);
    c.M_high = safety_factor * std::max(2.0 * c.lambda_high * delta / alpha0, high_gap / V_R);
    return c;
}

inline BarrierSpec nondegenerate_constants(const ProblemSpec& problem, const Potential& V, double t0, double sigma,
                                           double delta, double R, const BarrierOptions& opt = {}) {
    if (!problem.nonlinearity.is_nondegenerate())
        throw PreconditionError("nondegenerate constants need G' >= alpha0 > 0");
    if (!(R > V.rhat)) throw PreconditionError("R must exceed rhat");
    const double a_sup = problem.trace.sup_norm();
    const double K = sup_bound_K(problem.initial, problem.trace);
    const auto c = nondegenerate_constants(problem.nonlinearity, a_sup, K, delta, V(R), opt.safety_factor);
    BarrierSpec s;
    s.t0 = t0;
    s.sigma = sigma;
    s.delta = delta;
    s.R = R;
    s.lambda_low = c.lambda_low;
    s.M_low = c.M_low;
    s.lambda_high = c.lambda_high;
    s.M_high = c.M_high;
    std::tie(s.window_lo, s.window_hi) = barrier_window(t0, delta, problem.horizon);
    s.a_t0 = problem.trace(t0);
    s.validate(problem.horizon);
    return s;
}

// ---------------------------------------------------------------------------
// Barrier fields

struct BarrierField {
    SpaceTimeFn value;
    double r_min = 0.0;
    double r_max = std::numeric_limits<double>::infinity();
    double t_lo = 0.0;
    double t_hi = 0.0;

    double operator()(double r, double t) const { return value(r, t); }
};

namespace detail {
inline double checked_inverse(const Nonlinearity& nl, double arg) {
    const double u = nl.inverse(arg);
    if (!std::isfinite(u) || std::abs(nl(u) - arg) > 1e-9 * std::max(1.0, std::abs(arg)))
        throw NumericalError("argument " + std::to_string(arg) + " outside the invertible range of G");
    return u;
}
}  // namespace detail

struct ParabolicBarriers {
    BarrierField low;
    BarrierField high;
};

inline ParabolicBarriers parabolic_barriers(const BarrierSpec& spec, const Potential& V, const BoundaryTrace& trace,
                                            const Nonlinearity& nl) {
    spec.validate(trace.horizon);
    const double ga = nl(trace(spec.t0));
    ParabolicBarriers b;
    b.low.value = [=](double r, double t) {
        const double s = t - spec.t0;
        return detail::checked_inverse(nl, -spec.M_low * V(r) - spec.sigma + ga - spec.lambda_low * s * s);
    };
    b.high.value = [=](double r, double t) {
        const double s = t - spec.t0;
        return detail::checked_inverse(nl, spec.M_high * V(r) + spec.sigma + ga + spec.lambda_high * s * s);
    };
    for (auto* f : {&b.low, &b.high}) {
        f->r_min = spec.R;
        f->t_lo = spec.window_lo;
        f->t_hi = spec.window_hi;
    }
    return b;
}

struct EllipticBarriers {
    BarrierField low;
    BarrierField high;
    double M_low = 0.0;
    double M_high = 0.0;
};

/// W = G^{-1}[+-M Gamma +- sigma + G(a0)] with Gamma = r^{2-N} and minimal M.
inline EllipticBarriers elliptic_barriers(double a0, double sigma, double K, double R, int dimension,
                                          const Nonlinearity& nl, double horizon = 1.0) {
    if (!(R > 0.0)) throw PreconditionError("R must be positive");
    const double gamma_R = fundamental(R, dimension);
    const double ga = nl(a0);
    EllipticBarriers e;
    e.M_high = std::max(0.0, (nl(K) - ga) / gamma_R);
    e.M_low = std::max(0.0, (ga - nl(-K)) / gamma_R);
    e.high.value = [=, M = e.M_high](double r, double) {
        return detail::checked_inverse(nl, M * fundamental(r, dimension) + sigma + ga);
    };
    e.low.value = [=, M = e.M_low](double r, double) {
        return detail::checked_inverse(nl, -M * fundamental(r, dimension) - sigma + ga);
    };
    for (auto* f : {&e.low, &e.high}) {
        f->r_min = R;
        f->t_lo = 0.0;
        f->t_hi = horizon;
    }
    return e;
}

struct SubsolutionAtInfinity {
    double alpha_level = 0.0;
    double M_floor = 0.0;
    double R = 0.0;
    double beta = 0.0;
    double kink_radius = 0.0;
    ScalarFn profile;
};

/// Radial nondecreasing profile equal to -M on B_R and tending to alpha.
inline SubsolutionAtInfinity subsolution_at_infinity(double alpha_level, double R, double M_floor,
                                                     const Nonlinearity& nl) {
    if (!(R > 0.0) || M_floor < 0.0) throw PreconditionError("need R > 0 and M >= 0");
    const double gap = nl(alpha_level) - nl(-M_floor);
    if (!(gap > 0.0)) throw PreconditionError("alpha must exceed -M");
    SubsolutionAtInfinity s;
    s.alpha_level = alpha_level;
    s.M_floor = M_floor;
    s.R = R;
    s.beta = R * gap;
    s.kink_radius = s.beta / gap;
    const double ga = nl(alpha_level);
    s.profile = [=, beta = s.beta, kink = s.kink_radius](double r) {
        if (r <= kink) return -M_floor;
        return std::max(nl.inverse(ga - beta / r), -M_floor);
    };
    return s;
}

namespace detail {
inline double min_derivative(const Nonlinearity& nl, double lo, double hi, std::size_t samples) {
    double g = std::numeric_limits<double>::infinity();
    for (double s : linspace(lo, hi, samples)) g = std::min(g, nl.derivative(s));
    return g;
}
}  // namespace detail

struct DegenerateOptions {
    BarrierOptions barrier;
    double radius_ratio = 1.01;  // geometric search step for R
    double radius_extent = 1e4;  // search up to rhat * extent
    ModulusOptions modulus;
    RadiusOptions radius;
};

/// Constants of the lower barrier for degenerate G driven by a subsolution at infinity.
inline BarrierSpec degenerate_constants(const ProblemSpec& problem, const Potential& V,
                                        const SubsolutionAtInfinity& sub, double t0, double sigma,
                                        const DegenerateOptions& opt = {}) {
    const auto& nl = problem.nonlinearity;
    const auto& trace = problem.trace;
    if (!(sigma > 0.0)) throw PreconditionError("sigma must be positive");
    if (!trace.positive()) throw PreconditionError("trace must be positive");
    const double rhat = V.rhat;
    for (double r : sample_radii(rhat, SampleGrid{}))
        if (problem.initial.u0(r) < sub.profile(r) - 1e-12)
            throw PreconditionError("initial datum below the subsolution at r = " + std::to_string(r));
    const double a_sup = trace.sup_norm();
    const double a_min = trace.minimum();
    const double K = sup_bound_K(problem.initial, trace);
    const double ga_sup = nl(a_sup);
    if (!(2.0 * nl(sub.alpha_level) > ga_sup))
        throw PreconditionError("time-partition required: 2G(min a - eps) <= G(|a|)");

    // beta with G(beta) halfway inside the margin; independent of R.
    const double g_beta = nl(sub.alpha_level) - 0.5 * ga_sup;
    const double beta = nl.inverse(g_beta);
    const double gamma = detail::min_derivative(nl, beta, K, opt.barrier.samples) / opt.barrier.safety_factor;
    if (!(gamma > 0.0)) throw PreconditionError("G' vanishes on [beta, K]");

    const double delta_mod = modulus_delta(trace, nl, sigma, opt.modulus);
    const double r_init =
        radius_for_sigma(problem.initial, trace(0.0), nl, sigma, rhat, opt.radius);
    auto admissible = [&](double R) {
        const double u = sub.profile(R);
        return u > beta && 2.0 * nl(u) - g_beta - ga_sup > 0.0 && R >= r_init && 2.0 * V(R) / gamma <= delta_mod;
    };
    double R = rhat * opt.radius_ratio;
    while (!admissible(R)) {
        R *= opt.radius_ratio;
        if (R > rhat * opt.radius_extent) throw NumericalError("no admissible radius for the degenerate barrier");
    }

    BarrierSpec s;
    s.t0 = t0;
    s.sigma = sigma;
    s.R = R;
    s.gamma_slope = gamma;
    s.beta_floor = beta;
    s.a_t0 = trace(t0);
    s.delta = 2.0 * V(R) / gamma;
    const double g_a0 = nl(s.a_t0);
    const double g_under = nl(sub.profile(R));
    s.lambda_low = (g_a0 - g_under) / (s.delta * s.delta);
    s.M_low = 2.0 * s.lambda_low * s.delta / gamma;
    const double identity_gap = s.M_low * V(R) - (g_a0 - g_under);
    if (std::abs(identity_gap) > 1e-12 * std::max(1.0, std::abs(g_a0 - g_under)))
        throw NumericalError("M V(R) = G(a(t0)) - G(u(R)) identity violated by " + std::to_string(identity_gap));
    const double left = -s.M_low * V(R) - sigma + g_a0 - s.lambda_low * s.delta * s.delta;
    if (!(left > g_beta)) throw PreconditionError("shrink sigma: lower barrier does not stay above beta");

    const double high_gap = nl(K) - nl(-a_sup);
    const double slope_a = detail::min_derivative(nl, a_min, a_sup, opt.barrier.samples);
    s.lambda_high = opt.barrier.safety_factor * high_gap / (s.delta * s.delta);
    s.M_high = opt.barrier.safety_factor * std::max(2.0 * s.lambda_high * s.delta / slope_a, high_gap / V(R));
    std::tie(s.window_lo, s.window_hi) = barrier_window(t0, s.delta, problem.horizon);
    s.validate(problem.horizon);
    return s;
}

// ---------------------------------------------------------------------------
// Conditions on the data

struct Condition24 {
    bool holds = false;
    double I = 0.0;
    double S = 0.0;
};

inline Condition24 check_condition_2_4(const InitialDatum& initial, const BoundaryTrace& trace, double R0,
                                       double eps, const Nonlinearity& nl) {
    if (!(R0 > 0.0 && eps > 0.0)) throw PreconditionError("R0 and eps must be positive");
    Condition24 c;
    c.I = std::numeric_limits<double>::infinity();
    for (double r : geomspace(R0, R0 * 1e4, 4001)) c.I = std::min(c.I, initial.u0(r));
    c.S = -std::numeric_limits<double>::infinity();
    for (double t : linspace(0.0, std::min(eps, trace.horizon), 1001)) c.S = std::max(c.S, trace(t));
    c.holds = 2.0 * nl(c.I) > nl(c.S);
    return c;
}

struct TimePartition {
    double tau = 0.0;
    std::vector<double> breakpoints;
};

/// Largest dyadic tau = T/2^k with 2G(min a - eps) > G(max a) on every window [t, t + tau].
inline TimePartition time_partition(const BoundaryTrace& trace, const Nonlinearity& nl, double eps,
                                    std::size_t samples = 4001, std::size_t starts = 400) {
    if (!(eps > 0.0)) throw PreconditionError("eps must be positive");
    const auto ts = trace.sample_times(samples);
    std::vector<double> av(ts.size());
    for (std::size_t k = 0; k < ts.size(); ++k) av[k] = trace(ts[k]);
    if (*std::min_element(av.begin(), av.end()) <= 0.0) throw PreconditionError("trace must be positive");
    const double T = trace.horizon;
    const double dt = T / static_cast<double>(ts.size() - 1);

    auto window_ok = [&](double t, double tau) {
        const double hi = std::min(t + tau, T);
        double lo_v = std::min(trace(t), trace(hi)), hi_v = std::max(trace(t), trace(hi));
        const auto first = static_cast<std::size_t>(std::ceil(t / dt - 1e-12));
        const auto last = std::min(ts.size() - 1, static_cast<std::size_t>(std::floor(hi / dt + 1e-12)));
        for (std::size_t i = first; i <= last; ++i) {
            lo_v = std::min(lo_v, av[i]);
            hi_v = std::max(hi_v, av[i]);
        }
        return lo_v - eps > 0.0 && 2.0 * nl(lo_v - eps) > nl(hi_v);
    };
    for (int k = 0; k < 40; ++k) {
        const double tau = T / std::ldexp(1.0, k);
        bool ok = true;
        for (std::size_t s = 0; s <= starts && ok; ++s) ok = window_ok(T * static_cast<double>(s) / starts, tau);
        for (double t = 0.0; t < T && ok; t += tau) ok = window_ok(t, tau);
        if (!ok) continue;
        TimePartition p;
        p.tau = tau;
        const auto pieces = static_cast<std::size_t>(std::ldexp(1.0, k));
        for (std::size_t i = 0; i <= pieces; ++i) p.breakpoints.push_back(std::min(T, tau * static_cast<double>(i)));
        return p;
    }
    throw NumericalError("no dyadic time partition found for eps = " + std::to_string(eps));
}

// ---------------------------------------------------------------------------
// Verification

enum class BarrierKind { Sub, Super };
enum class BoundaryLocation { Inner, Outer, Initial };
enum class Ordering { FieldBelow, FieldAbove };

struct BoundaryCheck {
    std::string id;
    BoundaryLocation location = BoundaryLocation::Inner;
    SpaceTimeFn bound;
    Ordering relation = Ordering::FieldBelow;
};

struct VerificationSetup {
    ScalarFn rho;
    Nonlinearity nonlinearity = make_power_nonlinearity(1.0);
    int dimension = 3;
    double r_lo = 1.0;
    double r_hi = 10.0;
    double t_lo = 0.0;
    double t_hi = 1.0;
    BarrierKind kind = BarrierKind::Sub;
    double h = 1e-2;  // finite-difference step in r and t
    double tol = 1e-3;
    std::size_t radial_points = 200;
    std::size_t time_points = 20;
    std::optional<double> kink_radius;
    std::vector<BoundaryCheck> boundary;
};

struct VerificationRow {
    double r;
    double t;
    double field_value;
    double residual;  // NaN on boundary rows
    std::string check_id;
    bool pass;
};

struct VerificationReport {
    std::vector<VerificationRow> rows;
    double worst_residual = 0.0;  // signed: max for sub, min for super
    std::vector<std::pair<std::string, double>> boundary_worst;  // worst signed violation per check
    bool interior_pass = true;
    bool boundary_pass = true;
    std::size_t skipped = 0;

    bool passed() const { return interior_pass && boundary_pass; }
};

/// Interior residual rho d_t w - Delta[G(w)] by centered differences plus parabolic-boundary orderings.
inline VerificationReport verify_subsupersolution(const BarrierField& field, const VerificationSetup& v) {
    const double h = v.h;
    const auto& nl = v.nonlinearity;
    const double n1 = static_cast<double>(v.dimension - 1);
    VerificationReport rep;
    const bool sub = v.kind == BarrierKind::Sub;
    rep.worst_residual = sub ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();

    const bool stationary = v.t_hi - v.t_lo < 2.0 * h;
    const auto rs = linspace(v.r_lo + h, v.r_hi - h, v.radial_points);
    const auto ts = stationary ? std::vector<double>{0.5 * (v.t_lo + v.t_hi)}
                               : linspace(v.t_lo + h, v.t_hi - h, v.time_points);
    const double cell = (v.r_hi - v.r_lo) / static_cast<double>(v.radial_points - 1);
    for (double t : ts)
        for (double r : rs) {
            if (v.kink_radius && std::abs(r - *v.kink_radius) <= cell + h) {
                ++rep.skipped;
                continue;
            }
            const double g0 = nl(field(r, t)), gp = nl(field(r + h, t)), gm = nl(field(r - h, t));
            const double lap = (gp - 2.0 * g0 + gm) / (h * h) + n1 / r * (gp - gm) / (2.0 * h);
            const double dtw = stationary ? 0.0 : (field(r, t + h) - field(r, t - h)) / (2.0 * h);
            const double res = v.rho(r) * dtw - lap;
            const bool ok = sub ? res <= v.tol : res >= -v.tol;
            rep.worst_residual = sub ? std::max(rep.worst_residual, res) : std::min(rep.worst_residual, res);
            rep.interior_pass = rep.interior_pass && ok;
            rep.rows.push_back({r, t, field(r, t), res, "interior", ok});
        }

    const auto tb = linspace(v.t_lo, v.t_hi, std::max<std::size_t>(v.time_points, 2));
    const auto rb = linspace(v.r_lo, v.r_hi, v.radial_points);
    for (const auto& check : v.boundary) {
        double worst = -std::numeric_limits<double>::infinity();
        auto probe = [&](double r, double t) {
            const double w = field(r, t);
            const double b = check.bound(r, t);
            const double viol = check.relation == Ordering::FieldBelow ? w - b : b - w;
            const bool ok = viol <= v.tol;
            worst = std::max(worst, viol);
            rep.boundary_pass = rep.boundary_pass && ok;
            rep.rows.push_back({r, t, w, std::numeric_limits<double>::quiet_NaN(), check.id, ok});
        };
        switch (check.location) {
            case BoundaryLocation::Inner:
                for (double t : tb) probe(v.r_lo, t);
                break;
            case BoundaryLocation::Outer:
                for (double t : tb) probe(v.r_hi, t);
                break;
            case BoundaryLocation::Initial:
                for (double r : rb) probe(r, v.t_lo);
                break;
        }
        rep.boundary_worst.emplace_back(check.id, worst);
    }
    return rep;
}

inline void write_verification_csv(std::ostream& os, const VerificationReport& rep) {
    os << "r,t,field_value,residual,boundary_check_id,pass\n" << std::setprecision(17);
    for (const auto& row : rep.rows) {
        os << row.r << ',' << row.t << ',' << row.field_value << ',';
        if (std::isnan(row.residual))
            os << "nan";
        else
            os << row.residual;
        os << ',' << row.check_id << ',' << (row.pass ? 1 : 0) << '\n';
    }
}

}  // namespace filtration
