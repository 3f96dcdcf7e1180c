#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "filtration/barrier_kit.hpp"
#include "filtration/common.hpp"
#include "filtration/density_analysis.hpp"
#include "filtration/problem_model.hpp"
#include "filtration/radial_solver.hpp"
#include "filtration/table.hpp"

namespace filtration {

/// fn(0..count-1) on up to `workers` threads; results and the first failing
/// index do not depend on scheduling.
template <class F>
auto parallel_map(std::size_t count, int workers, F&& fn) -> std::vector<decltype(fn(std::size_t{0}))> {
    using R = decltype(fn(std::size_t{0}));
    std::vector<std::optional<R>> slots(count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto n = static_cast<std::size_t>(std::max(1, workers));
    if (n == 1 || count < 2) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t k = 0; k < std::min(n, count); ++k) pool.emplace_back(work);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<R> out;
    out.reserve(count);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

/// Spacing and time stepping shared by every ball in a study.
struct BallDiscretization {
    double h = 0.1;
    SchemeParams scheme;
};

inline RadialGrid ball_grid(double radius, int dimension, double h) {
    return RadialGrid::with_spacing(0.0, radius, h, dimension);
}

struct TimedField {
    SolutionField field;
    double seconds = 0.0;
};

inline TimedField timed_solve_ball(const ProblemSpec& problem, int j, const BallDiscretization& d) {
    const auto start = std::chrono::steady_clock::now();
    auto f = solve_ball(problem, j, ball_grid(j, problem.dimension, d.h), d.scheme);
    const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
    return {std::move(f), el.count()};
}

namespace detail {

/// sup |u - v| over nodes with r <= radius and levels with t in [t_lo, t_hi].
inline double local_distance(const SolutionField& u, const SolutionField& v, double radius, double t_lo,
                             double t_hi) {
    if (std::abs(u.grid.h - v.grid.h) > 1e-12 || u.times.size() != v.times.size())
        throw PreconditionError("fields must share spacing and time levels");
    double d = 0.0;
    for (std::size_t k = 0; k < u.times.size(); ++k) {
        if (std::abs(u.times[k] - v.times[k]) > 1e-9) throw PreconditionError("time levels differ");
        if (u.times[k] < t_lo - 1e-12 || u.times[k] > t_hi + 1e-12) continue;
        for (std::size_t i = 0; i < std::min(u.grid.size(), v.grid.size()); ++i) {
            if (u.grid.nodes[i] > radius + 1e-12) break;
            d = std::max(d, std::abs(u.values[k][i] - v.values[k][i]));
        }
    }
    return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Expanding balls

struct ConvergenceRow {
    int j;
    double compact_radius;
    double distance;
    double seconds;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;

    Table table() const {
        Table t({"j", "compact_radius", "distance_to_finest"});
        for (const auto& r : rows) t.add(r.j, r.compact_radius, r.distance);
        return t;
    }
};

inline ConvergenceTable expanding_ball_study(const ProblemSpec& problem, std::vector<int> j_list,
                                             double compact_radius, const BallDiscretization& d, int workers = 1,
                                             double t_min_fraction = 0.05) {
    std::sort(j_list.begin(), j_list.end());
    if (j_list.empty() || !(j_list.back() > compact_radius))
        throw PreconditionError("largest j must exceed the compact radius");
    auto runs = parallel_map(j_list.size(), workers,
                             [&](std::size_t i) { return timed_solve_ball(problem, j_list[i], d); });
    const auto& finest = runs.back().field;
    ConvergenceTable out;
    for (std::size_t i = 0; i < runs.size(); ++i)
        out.rows.push_back({j_list[i], compact_radius,
                            detail::local_distance(runs[i].field, finest, compact_radius,
                                                   t_min_fraction * problem.horizon, problem.horizon),
                            runs[i].seconds});
    return out;
}

// ---------------------------------------------------------------------------
// Attainment at infinity

struct RadiusValue {
    double R;
    double value;
};

/// sup over stored levels in [t_lo, t_hi] of |u(R,t) - a(t)|.
inline std::vector<RadiusValue> attainment_profile(const SolutionField& field, const BoundaryTrace& trace,
                                                   const std::vector<double>& radii, double t_lo, double t_hi) {
    std::vector<RadiusValue> out;
    for (double R : radii) {
        if (R < field.grid.nodes.front() || R > field.grid.nodes.back())
            throw PreconditionError("radius " + std::to_string(R) + " outside the computed domain");
        double s = 0.0;
        for (std::size_t k = 0; k < field.times.size(); ++k) {
            const double t = field.times[k];
            if (t < t_lo - 1e-12 || t > t_hi + 1e-12) continue;
            s = std::max(s, std::abs(field.interpolate(R, k) - trace(t)));
        }
        out.push_back({R, s});
    }
    return out;
}

/// Barrier envelope bound at R: max of |G^{-1}[G(a(t)) +- (M V(R) + sigma + lambda delta^2)] - a(t)|.
inline double barrier_envelope(const BoundaryTrace& trace, const Nonlinearity& nl, double M, double V_R,
                               double sigma, double lambda, double delta, double t_lo, double t_hi) {
    const double shift = M * V_R + sigma + lambda * delta * delta;
    double s = 0.0;
    for (double t : linspace(t_lo, t_hi, 1001)) {
        const double a = trace(t), ga = nl(a);
        s = std::max({s, std::abs(nl.inverse(ga + shift) - a), std::abs(nl.inverse(ga - shift) - a)});
    }
    return s;
}

struct IntegralConditionRow {
    double R;
    double sup_difference;  // sup_t |U(R,t) - A(t)|
    double sphere_form;     // R^{1-N} * integral over the sphere, = unit-sphere area * pointwise in radial symmetry
};

/// U(R,t) = int_0^t G(u(R,s)) ds by the trapezoid rule on the stored levels.
inline std::vector<IntegralConditionRow> integral_condition_metric(const SolutionField& field,
                                                                   const Nonlinearity& nl, const ScalarFn& A,
                                                                   const std::vector<double>& radii) {
    const double area = unit_sphere_area(field.grid.dimension);
    std::vector<IntegralConditionRow> out;
    for (double R : radii) {
        double U = 0.0, s = std::abs(A(field.times.front()) - 0.0);
        double prev = nl(field.interpolate(R, 0));
        for (std::size_t k = 1; k < field.times.size(); ++k) {
            const double g = nl(field.interpolate(R, k));
            U += 0.5 * (field.times[k] - field.times[k - 1]) * (g + prev);
            prev = g;
            s = std::max(s, std::abs(U - A(field.times[k])));
        }
        out.push_back({R, s, area * s});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Separation of limits with different traces

struct SeparationRow {
    int j;
    double separation;
    double seconds;
};

struct SeparationReport {
    std::vector<SeparationRow> rows;
    double stabilized = 0.0;  // min over the last two j
    double threshold = 0.05;
    bool distinct = false;   // stabilized >= threshold
    bool collapsed = false;  // last <= half of first
    bool compatible_first = false;
    bool compatible_second = false;

    Table table() const {
        Table t({"j", "separation"});
        for (const auto& r : rows) t.add(r.j, r.separation);
        return t;
    }
};

namespace detail {

inline bool compatible(const ProblemSpec& p, const BoundaryTrace& trace) {
    return p.initial.limit_at_infinity && std::abs(*p.initial.limit_at_infinity - trace(0.0)) < 1e-12;
}

inline SeparationReport separation_study(const ProblemSpec& problem, const BoundaryTrace& first,
                                         const BoundaryTrace& second, std::vector<int> j_list,
                                         double compact_radius, const BallDiscretization& d, int workers,
                                         double threshold) {
    if (!first.positive() || !second.positive()) throw PreconditionError("traces must be positive");
    std::sort(j_list.begin(), j_list.end());
    if (j_list.size() < 2) throw PreconditionError("need at least two values of j");
    ProblemSpec p1 = problem, p2 = problem;
    p1.trace = first;
    p2.trace = second;
    auto runs = parallel_map(2 * j_list.size(), workers, [&](std::size_t i) {
        return timed_solve_ball(i % 2 == 0 ? p1 : p2, j_list[i / 2], d);
    });
    SeparationReport rep;
    rep.threshold = threshold;
    rep.compatible_first = compatible(problem, first);
    rep.compatible_second = compatible(problem, second);
    for (std::size_t k = 0; k < j_list.size(); ++k) {
        const auto& a = runs[2 * k].field;
        const auto& b = runs[2 * k + 1].field;
        rep.rows.push_back({j_list[k],
                            local_distance(a, b, compact_radius, 0.5 * problem.horizon, problem.horizon),
                            runs[2 * k].seconds + runs[2 * k + 1].seconds});
    }
    const std::size_t m = rep.rows.size();
    rep.stabilized = std::min(rep.rows[m - 1].separation, rep.rows[m - 2].separation);
    rep.distinct = rep.stabilized >= threshold;
    rep.collapsed = rep.rows.back().separation <= 0.5 * rep.rows.front().separation;
    return rep;
}

}  // namespace detail

/// Same u0, two traces, fast-decaying density: separation on B_R x [T/2, T] per j.
inline SeparationReport nonuniqueness_demo(const ProblemSpec& problem, const BoundaryTrace& first,
                                           const BoundaryTrace& second, std::vector<int> j_list,
                                           double compact_radius, const BallDiscretization& d, int workers = 1,
                                           double threshold = 0.05) {
    if (classify_decay(problem.density, EnvelopeSide::upper).tag != DecayTag::FastDecay)
        throw PreconditionError("nonuniqueness needs a fast-decaying density");
    return detail::separation_study(problem, first, second, std::move(j_list), compact_radius, d, workers,
                                    threshold);
}

/// Same protocol for a slowly decaying density; separation should collapse as j grows.
inline SeparationReport uniqueness_cross_bc(const ProblemSpec& problem, const BoundaryTrace& first,
                                            const BoundaryTrace& second, std::vector<int> j_list,
                                            double compact_radius, const BallDiscretization& d, int workers = 1) {
    if (classify_decay(problem.density, EnvelopeSide::lower).tag != DecayTag::SlowDecay)
        throw PreconditionError("uniqueness check needs a slowly decaying density");
    if (!problem.initial.limit_at_infinity) throw PreconditionError("initial datum needs a limit at infinity");
    return detail::separation_study(problem, first, second, std::move(j_list), compact_radius, d, workers, 0.05);
}

// ---------------------------------------------------------------------------
// Duality

struct DualityRow {
    int n = 0;
    int dimension = 3;
    double defect = 0.0;          // ||(q_n - q)/sqrt(q_n)|| over B_n x (0, tau) where u1 != u2
    double interior_term = 0.0;   // int int (q - q_n) w Delta psi_n
    double boundary_term = 0.0;   // int int_{dB_n} (G(u1) - G(u2)) d_nu psi_n
    double initial_term = 0.0;    // int rho w(0) psi_n(0)
    double mass = 0.0;            // int rho chi w(tau)
    double identity_gap = 0.0;    // mass - initial - (interior - boundary)
    double energy = 0.0;          // int int q_n (Delta psi_n)^2
    double quadratic_lhs = 0.0;
    double quadratic_rhs = 0.0;
    bool quadratic_ok = false;
    double psi_min = 0.0;
    double psi_max = 0.0;
    double flux_max = 0.0;        // max |d_nu psi_n| on dB_n
    double flux_sup = 0.0;        // max of d_nu psi_n (should be <= 0)
    double flux_constant = 0.0;   // flux_max * n^{N-1}
};

struct DualityReport {
    std::vector<DualityRow> rows;
    double flux_slope = 0.0;
    double fitted_constant = 0.0;
    bool psi_bounds_ok = false;
    bool flux_bounds_ok = false;
    bool quadratic_ok = false;
    bool defect_nonincreasing = false;
    bool mass_decreasing = false;

    Table table() const {
        Table t({"n", "defect", "interior_term", "boundary_term", "initial_term", "mass", "identity_gap", "energy",
                 "quadratic_lhs", "quadratic_rhs", "psi_min", "psi_max", "flux_max", "flux_constant"});
        for (const auto& r : rows)
            t.add(r.n, r.defect, r.interior_term, r.boundary_term, r.initial_term, r.mass, r.identity_gap, r.energy,
                  r.quadratic_lhs, r.quadratic_rhs, r.psi_min, r.psi_max, r.flux_max, r.flux_constant);
        return t;
    }
};

struct DualityOptions {
    double psi_tol = 1e-10;
    double flux_tol = 1e-10;
};

/// q = (G(u1) - G(u2))/(u1 - u2), 0 where u1 = u2. Near-equal values use G' at the midpoint.
inline double difference_quotient(const Nonlinearity& nl, double u1, double u2) {
    if (u1 == u2) return 0.0;
    if (std::abs(u1 - u2) <= 1e-8 * std::max({1.0, std::abs(u1), std::abs(u2)}))
        return nl.derivative(0.5 * (u1 + u2));
    return (nl(u1) - nl(u2)) / (u1 - u2);
}

/// q_n = clamp((1 - theta) q + theta M3(q), 1/n^2, sup q + 1/n^2) with theta = min(1, n0/n)
/// and M3 the three-cell average in r.
inline std::vector<double> smooth_coefficient(const std::vector<double>& q, double q_sup, int n, double n0) {
    const double floor = 1.0 / (static_cast<double>(n) * n);
    const double theta = std::min(1.0, n0 / n);
    const std::size_t m = q.size();
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t lo = i == 0 ? 0 : i - 1, hi = std::min(m - 1, i + 1);
        double avg = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) avg += q[k];
        avg /= static_cast<double>(hi - lo + 1);
        out[i] = std::clamp((1.0 - theta) * q[i] + theta * avg, floor, q_sup + floor);
    }
    return out;
}

/// One level of the duality argument on B_n for two fields covering B_n with common time levels.
inline DualityRow duality_level(const SolutionField& u1, const SolutionField& u2, const ScalarFn& rho,
                                const Nonlinearity& nl, const ScalarFn& chi, int n, double n0, double tau) {
    if (!(n > n0)) throw PreconditionError("need n > n0");
    const double h = u1.grid.h;
    if (std::abs(u2.grid.h - h) > 1e-12 || u1.grid.nodes.front() != 0.0 || u2.grid.nodes.front() != 0.0)
        throw PreconditionError("fields must be balls with a common spacing");
    if (u1.grid.nodes.back() < n - 1e-9 || u2.grid.nodes.back() < n - 1e-9)
        throw PreconditionError("fields must cover B_n");
    if (u1.times.size() != u2.times.size()) throw PreconditionError("fields must share time levels");
    const auto M = static_cast<std::size_t>(std::llround(n / h));
    if (std::abs(static_cast<double>(M) * h - n) > 1e-9) throw PreconditionError("n must be a grid node");
    const auto grid = RadialGrid::uniform(0.0, n, M, u1.grid.dimension);
    const double dt = u1.times[1] - u1.times[0];
    const auto K = static_cast<std::size_t>(std::llround(tau / dt));
    if (K < 1 || K >= u1.times.size() || std::abs(u1.times[K] - tau) > 1e-9)
        throw PreconditionError("tau must be a stored time level");
    for (std::size_t k = 1; k <= K; ++k)
        if (std::abs(u1.times[k] - u1.times[k - 1] - dt) > 1e-9 || std::abs(u2.times[k] - u1.times[k]) > 1e-12)
            throw PreconditionError("duality needs every time step stored");

    const double N = grid.dimension;
    const double area = unit_sphere_area(grid.dimension);
    std::vector<std::vector<double>> q(K + 1, std::vector<double>(M + 1));
    double q_sup = 0.0, u_sup1 = 0.0, u_sup2 = 0.0;
    for (std::size_t k = 0; k <= K; ++k)
        for (std::size_t i = 0; i <= M; ++i) {
            const double a = u1.values[k][i], b = u2.values[k][i];
            q[k][i] = difference_quotient(nl, a, b);
            if (!std::isfinite(q[k][i])) throw NumericalError("coefficient q is unbounded");
            q_sup = std::max(q_sup, q[k][i]);
            u_sup1 = std::max(u_sup1, std::abs(a));
            u_sup2 = std::max(u_sup2, std::abs(b));
        }
    // smoothed from q with G'(u) filled in where u1 = u2
    std::vector<std::vector<double>> qn(K + 1);
    for (std::size_t k = 0; k <= K; ++k) {
        auto filled = q[k];
        for (std::size_t i = 0; i <= M; ++i)
            if (u1.values[k][i] == u2.values[k][i]) filled[i] = nl.derivative(u1.values[k][i]);
        qn[k] = smooth_coefficient(filled, q_sup, n, n0);
    }

    auto q_at = [&](double r, double t) {
        const auto i = std::min<std::size_t>(M, static_cast<std::size_t>(std::llround(r / h)));
        const auto k = std::min<std::size_t>(K, static_cast<std::size_t>(std::llround(t / dt)));
        return qn[k][i];
    };
    SchemeParams scheme;
    scheme.dt = dt;
    const auto psi = solve_backward(q_at, rho, chi, n, n0, tau, grid, scheme);
    const auto flux = boundary_flux(psi);

    DualityRow row;
    row.n = n;
    row.dimension = grid.dimension;
    row.psi_min = std::numeric_limits<double>::infinity();
    row.psi_max = -std::numeric_limits<double>::infinity();
    for (const auto& lvl : psi.values)
        for (double v : lvl) {
            row.psi_min = std::min(row.psi_min, v);
            row.psi_max = std::max(row.psi_max, v);
        }
    std::vector<double> rho_n = sample_on(grid, rho);
    double defect2 = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const auto lap = discrete_laplacian(grid, psi.values[k]);
        for (std::size_t i = 0; i < M; ++i) {
            const double wt = dt * area * grid.volumes[i];
            const double w = u1.values[k][i] - u2.values[k][i];
            const double dq = q[k][i] - qn[k][i];
            row.interior_term += wt * dq * w * lap[i];
            if (w != 0.0) defect2 += wt * dq * dq / qn[k][i];
            row.energy += wt * qn[k][i] * lap[i] * lap[i];
        }
        const double dg = nl(u1.values[k][M]) - nl(u2.values[k][M]);
        row.boundary_term += dt * area * std::pow(n, N - 1) * dg * flux[k];
        row.flux_max = std::max(row.flux_max, std::abs(flux[k]));
        row.flux_sup = k == 0 ? flux[k] : std::max(row.flux_sup, flux[k]);
    }
    for (std::size_t i = 0; i <= M; ++i) {
        const double wt = area * grid.volumes[i] * rho_n[i];
        row.mass += wt * chi(grid.nodes[i]) * (u1.values[K][i] - u2.values[K][i]);
        row.initial_term += wt * psi.values[0][i] * (u1.values[0][i] - u2.values[0][i]);
    }
    row.defect = std::sqrt(defect2);
    row.identity_gap = row.mass - row.initial_term - (row.interior_term - row.boundary_term);
    const double cbar = (u_sup1 + u_sup2) * (u_sup1 + u_sup2);
    row.quadratic_lhs = row.interior_term * row.interior_term;
    row.quadratic_rhs = cbar * defect2 * row.energy;
    row.quadratic_ok = row.quadratic_lhs <= row.quadratic_rhs * (1.0 + 1e-10) + 1e-300;
    row.flux_constant = row.flux_max * std::pow(n, N - 1);
    return row;
}

namespace detail {

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t m = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

inline DualityReport summarize(std::vector<DualityRow> rows, const DualityOptions& opt) {
    DualityReport rep;
    rep.rows = std::move(rows);
    std::sort(rep.rows.begin(), rep.rows.end(), [](const auto& a, const auto& b) { return a.n < b.n; });
    rep.psi_bounds_ok = rep.quadratic_ok = rep.defect_nonincreasing = rep.mass_decreasing = true;
    std::vector<double> ns, fl;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const auto& r = rep.rows[i];
        rep.psi_bounds_ok = rep.psi_bounds_ok && r.psi_min >= -opt.psi_tol && r.psi_max <= 1.0 + opt.psi_tol;
        rep.quadratic_ok = rep.quadratic_ok && r.quadratic_ok;
        rep.fitted_constant = std::max(rep.fitted_constant, r.flux_constant);
        if (i > 0) {
            rep.defect_nonincreasing = rep.defect_nonincreasing && r.defect <= rep.rows[i - 1].defect;
            rep.mass_decreasing = rep.mass_decreasing && std::abs(r.mass) < std::abs(rep.rows[i - 1].mass);
        }
        ns.push_back(r.n);
        fl.push_back(r.flux_max);
    }
    rep.flux_bounds_ok = true;
    for (const auto& r : rep.rows)
        rep.flux_bounds_ok = rep.flux_bounds_ok && r.flux_sup <= opt.flux_tol &&
                             r.flux_max <= rep.fitted_constant * std::pow(r.n, 1.0 - r.dimension) * (1.0 + 1e-12) +
                                               opt.flux_tol;
    bool positive = rep.rows.size() >= 2;
    for (double f : fl) positive = positive && f > 0.0;
    rep.flux_slope = positive ? loglog_slope(ns, fl) : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

}  // namespace detail

/// Duality for a fixed pair on a common grid across several n.
inline DualityReport duality_probe(const SolutionField& u1, const SolutionField& u2, const ScalarFn& rho,
                                   const Nonlinearity& nl, const ScalarFn& chi, const std::vector<int>& n_list,
                                   double tau, double n0, int workers = 1, const DualityOptions& opt = {}) {
    auto rows = parallel_map(n_list.size(), workers, [&](std::size_t i) {
        return duality_level(u1, u2, rho, nl, chi, n_list[i], n0, tau);
    });
    return detail::summarize(std::move(rows), opt);
}

/// Pair (u_n, u_{2n}) with the same trace, compared on B_n for each n.
inline DualityReport duality_same_trace(const ProblemSpec& problem, const ScalarFn& chi,
                                        const std::vector<int>& n_list, double tau, double n0,
                                        const BallDiscretization& d, int workers = 1,
                                        const DualityOptions& opt = {}) {
    auto disc = d;
    disc.scheme.output_stride = 1;
    auto rows = parallel_map(n_list.size(), workers, [&](std::size_t i) {
        const int n = n_list[i];
        const auto a = solve_ball(problem, n, ball_grid(n, problem.dimension, disc.h), disc.scheme);
        const auto b = solve_ball(problem, 2 * n, ball_grid(2 * n, problem.dimension, disc.h), disc.scheme);
        return duality_level(a, b, problem.density.rho, problem.nonlinearity, chi, n, n0, tau);
    });
    return detail::summarize(std::move(rows), opt);
}

/// Pair (u_n^{a1}, u_n^{a2}) with different traces on B_n.
inline DualityReport duality_trace_contrast(const ProblemSpec& problem, const BoundaryTrace& second,
                                            const ScalarFn& chi, const std::vector<int>& n_list, double tau,
                                            double n0, const BallDiscretization& d, int workers = 1,
                                            const DualityOptions& opt = {}) {
    auto disc = d;
    disc.scheme.output_stride = 1;
    ProblemSpec other = problem;
    other.trace = second;
    auto rows = parallel_map(n_list.size(), workers, [&](std::size_t i) {
        const int n = n_list[i];
        const auto grid = ball_grid(n, problem.dimension, disc.h);
        const auto a = solve_ball(problem, n, grid, disc.scheme);
        const auto b = solve_ball(other, n, grid, disc.scheme);
        return duality_level(a, b, problem.density.rho, problem.nonlinearity, chi, n, n0, tau);
    });
    return detail::summarize(std::move(rows), opt);
}

// ---------------------------------------------------------------------------
// Barrier certificate

struct CertificateOptions {
    double t0 = 0.5;
    double sigma = 0.1;
    double fd_step = 1e-2;              // verification step in r and t
    int j = 40;                         // ball whose solution is sandwiched
    BallDiscretization disc{0.05, {}};  // solver discretization for u_j
    std::optional<double> alpha_level;  // set: degenerate lower barrier from a subsolution at infinity
    double sub_radius = 1.0;
};

struct CertificateReport {
    BarrierSpec spec;
    VerificationReport low;
    VerificationReport high;
    double below_worst = 0.0;  // max (w_low - u_j) on the annulus and window
    double above_worst = 0.0;  // max (u_j - w_high)
    double sandwich_tol = 0.0;
    bool sandwich_ok = false;

    bool passed() const { return low.passed() && high.passed() && sandwich_ok; }

    Table table() const {
        Table t({"quantity", "value"});
        t.add("R", spec.R);
        t.add("delta", spec.delta);
        t.add("t_lo", spec.window_lo);
        t.add("t_hi", spec.window_hi);
        t.add("M_low", spec.M_low);
        t.add("lambda_low", spec.lambda_low);
        t.add("M_high", spec.M_high);
        t.add("lambda_high", spec.lambda_high);
        t.add("low_worst_residual", low.worst_residual);
        t.add("high_worst_residual", high.worst_residual);
        t.add("low_pass", low.passed());
        t.add("high_pass", high.passed());
        t.add("below_worst", below_worst);
        t.add("above_worst", above_worst);
        t.add("sandwich_tol", sandwich_tol);
        t.add("sandwich_pass", sandwich_ok);
        return t;
    }
};

/// Builds the local barrier pair around t0, verifies both on [R, j] x window and checks
/// w_low - tol <= u_j <= w_high + tol with tol = 10 (h^2 + dt).
inline CertificateReport barrier_certificate(const ProblemSpec& problem, const CertificateOptions& opt = {}) {
    if (!problem.density.upper) throw PreconditionError("barriers need an upper density envelope");
    const auto& nl = problem.nonlinearity;
    const auto& trace = problem.trace;
    const auto V = build_potential(*problem.density.upper, problem.density.rhat, problem.dimension);
    const double K = sup_bound_K(problem.initial, trace);

    CertificateReport rep;
    std::optional<SubsolutionAtInfinity> sub;
    if (opt.alpha_level) {
        sub = subsolution_at_infinity(*opt.alpha_level, opt.sub_radius, 0.0, nl);
        rep.spec = degenerate_constants(problem, V, *sub, opt.t0, opt.sigma);
    } else {
        const double delta = modulus_delta(trace, nl, opt.sigma);
        const double R = std::max(2.0 * problem.density.rhat,
                                  radius_for_sigma(problem.initial, trace(0.0), nl, opt.sigma, problem.density.rhat));
        rep.spec = nondegenerate_constants(problem, V, opt.t0, opt.sigma, delta, R);
    }
    const auto& s = rep.spec;
    if (!(opt.j > s.R + 1.0)) throw PreconditionError("j must exceed the barrier radius");
    const auto b = parabolic_barriers(s, V, trace, nl);

    auto setup = [&](BarrierKind kind) {
        VerificationSetup v;
        v.rho = problem.density.rho;
        v.nonlinearity = nl;
        v.dimension = problem.dimension;
        v.r_lo = s.R;
        v.r_hi = opt.j;
        v.t_lo = s.window_lo;
        v.t_hi = s.window_hi;
        v.kind = kind;
        v.h = opt.fd_step;
        v.tol = 10.0 * opt.fd_step * opt.fd_step;
        return v;
    };
    auto a = [&](double, double t) { return trace(t); };
    SpaceTimeFn floor = [K](double, double) { return -K; };
    if (sub) floor = [prof = sub->profile](double r, double) { return prof(r); };
    auto ceiling = [K](double, double) { return K; };

    auto lo = setup(BarrierKind::Sub);
    lo.boundary = {{"inner", BoundaryLocation::Inner, floor, Ordering::FieldBelow},
                   {"outer", BoundaryLocation::Outer, a, Ordering::FieldBelow},
                   {"initial", BoundaryLocation::Initial, floor, Ordering::FieldBelow}};
    rep.low = verify_subsupersolution(b.low, lo);
    auto hi = setup(BarrierKind::Super);
    hi.boundary = {{"inner", BoundaryLocation::Inner, ceiling, Ordering::FieldAbove},
                   {"outer", BoundaryLocation::Outer, a, Ordering::FieldAbove},
                   {"initial", BoundaryLocation::Initial, ceiling, Ordering::FieldAbove}};
    rep.high = verify_subsupersolution(b.high, hi);

    const auto u = solve_ball(problem, opt.j, ball_grid(opt.j, problem.dimension, opt.disc.h), opt.disc.scheme);
    rep.sandwich_tol = 10.0 * (opt.disc.h * opt.disc.h + opt.disc.scheme.dt);
    rep.below_worst = rep.above_worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < u.times.size(); ++k) {
        const double t = u.times[k];
        if (t < s.window_lo - 1e-12 || t > s.window_hi + 1e-12) continue;
        for (std::size_t i = 0; i < u.grid.size(); ++i) {
            const double r = u.grid.nodes[i];
            if (r < s.R) continue;
            rep.below_worst = std::max(rep.below_worst, b.low(r, t) - u.values[k][i]);
            rep.above_worst = std::max(rep.above_worst, u.values[k][i] - b.high(r, t));
        }
    }
    rep.sandwich_ok = rep.below_worst <= rep.sandwich_tol && rep.above_worst <= rep.sandwich_tol;
    return rep;
}

// ---------------------------------------------------------------------------
// Weak form

/// psi(r,t) = phi(r) theta(t) on the ball [0, outer] or the annulus [inner, outer].
struct TestFunction {
    double inner = 0.0;
    double outer = 1.0;
    int dimension = 3;
    ScalarFn phi;
    ScalarFn dphi;
    ScalarFn lap_phi;
    ScalarFn theta;
    ScalarFn dtheta;

    double value(double r, double t) const { return phi(r) * theta(t); }

    void check_admissible(double tau) const {
        if (!(outer > inner) || inner < 0.0) throw PreconditionError("test function domain is empty");
        if (phi(outer) != 0.0 || (inner > 0.0 && phi(inner) != 0.0))
            throw PreconditionError("inadmissible test function: nonzero on the lateral boundary");
        for (double r : linspace(inner, outer, 101))
            for (double t : linspace(0.0, tau, 11))
                if (value(r, t) < 0.0) throw PreconditionError("inadmissible test function: negative value");
    }
};

/// Quadratic bump vanishing on the boundary, times theta(t) = 1 + slope t.
inline TestFunction polynomial_bump(double inner, double outer, int dimension, double slope = 1.0) {
    TestFunction f;
    f.inner = inner;
    f.outer = outer;
    f.dimension = dimension;
    const double n1 = dimension - 1;
    if (inner == 0.0) {
        const double b2 = outer * outer;
        f.phi = [b2](double r) { return b2 - r * r; };
        f.dphi = [](double r) { return -2.0 * r; };
        f.lap_phi = [dimension](double) { return -2.0 * dimension; };
    } else {
        const double a = inner, b = outer;
        f.phi = [a, b](double r) { return (r - a) * (b - r); };
        f.dphi = [a, b](double r) { return a + b - 2.0 * r; };
        f.lap_phi = [a, b, n1](double r) { return -2.0 + n1 * (a + b - 2.0 * r) / r; };
    }
    f.theta = [slope](double t) { return 1.0 + slope * t; };
    f.dtheta = [slope](double) { return slope; };
    return f;
}

struct WeakResidual {
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0;
};

/// Both sides of the very weak identity on the test domain up to time tau:
///   int rho u psi |_0^tau = int_0^tau int (rho u psi_t + G(u) Delta psi) - int_0^tau oint G(u) d_nu psi.
inline WeakResidual weak_residual(const SolutionField& field, const ScalarFn& rho, const Nonlinearity& nl,
                                  const TestFunction& psi, double tau) {
    psi.check_admissible(tau);
    if (psi.inner < field.grid.nodes.front() - 1e-12 || psi.outer > field.grid.nodes.back() + 1e-12)
        throw PreconditionError("test domain outside the field's domain");
    const auto K = field.level_near(tau);
    if (std::abs(field.times[K] - tau) > 1e-9) throw PreconditionError("tau must be a stored time level");
    const double N = field.grid.dimension;
    const double area = unit_sphere_area(field.grid.dimension);
    using Quad = boost::math::quadrature::gauss<double, 5>;

    // breakpoints: grid nodes inside the test domain plus its endpoints
    std::vector<double> cuts{psi.inner};
    for (double r : field.grid.nodes)
        if (r > psi.inner + 1e-14 && r < psi.outer - 1e-14) cuts.push_back(r);
    cuts.push_back(psi.outer);

    auto space = [&](std::size_t k, auto&& integrand) {
        double s = 0.0;
        for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
            const double a = cuts[c], b = cuts[c + 1];
            s += Quad::integrate([&](double r) { return integrand(r, field.interpolate(r, k)) * std::pow(r, N - 1); },
                                 a, b);
        }
        return area * s;
    };
    auto mass_k = [&](std::size_t k) {
        return space(k, [&](double r, double u) { return rho(r) * u * psi.phi(r); });
    };
    auto bulk_k = [&](std::size_t k) {
        const double t = field.times[k];
        const double dth = psi.dtheta(t), th = psi.theta(t);
        return space(k, [&](double r, double u) {
            return rho(r) * u * psi.phi(r) * dth + nl(u) * psi.lap_phi(r) * th;
        });
    };
    auto lateral_k = [&](std::size_t k) {
        const double th = psi.theta(field.times[k]);
        double s = area * std::pow(psi.outer, N - 1) * nl(field.interpolate(psi.outer, k)) * psi.dphi(psi.outer);
        if (psi.inner > 0.0)
            s -= area * std::pow(psi.inner, N - 1) * nl(field.interpolate(psi.inner, k)) * psi.dphi(psi.inner);
        return s * th;
    };

    WeakResidual w;
    w.lhs = mass_k(K) * psi.theta(field.times[K]) - mass_k(0) * psi.theta(field.times[0]);
    double prev = bulk_k(0) - lateral_k(0);
    for (std::size_t k = 1; k <= K; ++k) {
        const double cur = bulk_k(k) - lateral_k(k);
        w.rhs += 0.5 * (field.times[k] - field.times[k - 1]) * (prev + cur);
        prev = cur;
    }
    w.residual = std::abs(w.lhs - w.rhs);
    return w;
}

}  // namespace filtration
