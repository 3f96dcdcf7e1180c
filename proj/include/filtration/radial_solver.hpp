#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "filtration/common.hpp"
#include "filtration/problem_model.hpp"

namespace filtration {

/// Uniform radial grid with finite-volume weights.
///
/// volumes[i] is the measure of the control volume of node i divided by the
/// unit-sphere area, i.e. (r_{i+1/2}^N - r_{i-1/2}^N)/N clipped to the domain.
struct RadialGrid {
    std::vector<double> nodes;
    std::vector<double> faces;  // faces[i] = r_{i+1/2}
    std::vector<double> volumes;
    double h = 0.0;
    int dimension = 3;

    static RadialGrid uniform(double r0, double r1, std::size_t intervals, int dimension) {
        if (!(r1 > r0) || r0 < 0.0 || intervals < 2) throw PreconditionError("invalid radial grid");
        RadialGrid g;
        g.dimension = dimension;
        g.nodes = linspace(r0, r1, intervals + 1);
        g.h = (r1 - r0) / static_cast<double>(intervals);
        g.faces.resize(intervals);
        for (std::size_t i = 0; i < intervals; ++i) g.faces[i] = 0.5 * (g.nodes[i] + g.nodes[i + 1]);
        const double n = static_cast<double>(dimension);
        g.volumes.resize(g.nodes.size());
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            const double lo = i == 0 ? g.nodes.front() : g.faces[i - 1];
            const double hi = i + 1 == g.nodes.size() ? g.nodes.back() : g.faces[i];
            g.volumes[i] = (std::pow(hi, n) - std::pow(lo, n)) / n;
        }
        return g;
    }

    /// Grid on [r0, r1] with spacing as close to h as an integer count allows.
    static RadialGrid with_spacing(double r0, double r1, double spacing, int dimension) {
        const auto count = static_cast<std::size_t>(std::llround((r1 - r0) / spacing));
        return uniform(r0, r1, std::max<std::size_t>(count, 2), dimension);
    }

    std::size_t size() const { return nodes.size(); }
    double face_coefficient(std::size_t face) const { return std::pow(faces[face], dimension - 1) / h; }

    /// Index of the node nearest to r.
    std::size_t nearest(double r) const {
        const double x = (r - nodes.front()) / h;
        const auto k = static_cast<long long>(std::llround(x));
        return static_cast<std::size_t>(std::clamp<long long>(k, 0, static_cast<long long>(nodes.size()) - 1));
    }

    bool same_as(const RadialGrid& other) const {
        return dimension == other.dimension && nodes.size() == other.nodes.size() &&
               std::abs(nodes.front() - other.nodes.front()) < 1e-12 &&
               std::abs(nodes.back() - other.nodes.back()) < 1e-12;
    }
};

struct SchemeParams {
    double dt = 1e-3;
    double newton_tol = 1e-12;
    int max_newton = 50;
    double eps_reg = 1e-10;  // added to G' in the Jacobian only
    double damping = 1.0;    // initial Newton step fraction
    std::size_t output_stride = 1;

    void validate() const {
        if (!(dt > 0.0)) throw PreconditionError("time step must be positive");
        if (!(newton_tol > 0.0) || max_newton < 1) throw PreconditionError("Newton settings must be positive");
        if (!(damping > 0.0 && damping <= 1.0)) throw PreconditionError("damping must lie in (0, 1]");
        if (output_stride < 1) throw PreconditionError("output stride must be >= 1");
    }
};

/// Grid function u[k][i] at times[k] and nodes grid.nodes[i].
struct SolutionField {
    RadialGrid grid;
    std::vector<double> times;
    std::vector<std::vector<double>> values;
    std::map<std::string, std::string> metadata;

    double at(std::size_t node, std::size_t level) const { return values[level][node]; }

    double sup_norm() const {
        double s = 0.0;
        for (const auto& row : values)
            for (double v : row) s = std::max(s, std::abs(v));
        return s;
    }

    /// Linear interpolation in r at a stored time level.
    double interpolate(double r, std::size_t level) const {
        if (r < grid.nodes.front() - 1e-12 || r > grid.nodes.back() + 1e-12)
            throw PreconditionError("radius outside the computed domain");
        const double x = std::clamp((r - grid.nodes.front()) / grid.h, 0.0, static_cast<double>(grid.size() - 1));
        const auto i = std::min(static_cast<std::size_t>(x), grid.size() - 2);
        const double s = x - static_cast<double>(i);
        return (1.0 - s) * values[level][i] + s * values[level][i + 1];
    }

    /// Index of the stored time level nearest to t.
    std::size_t level_near(double t) const {
        const auto it = std::lower_bound(times.begin(), times.end(), t);
        if (it == times.end()) return times.size() - 1;
        const auto k = static_cast<std::size_t>(std::distance(times.begin(), it));
        if (k > 0 && std::abs(times[k - 1] - t) < std::abs(times[k] - t)) return k - 1;
        return k;
    }
};

enum class BoundaryKind { Symmetry, Dirichlet, ZeroFlux };

struct BoundaryCondition {
    BoundaryKind kind = BoundaryKind::Dirichlet;
    ScalarFn value;  // Dirichlet datum in time

    static BoundaryCondition symmetry() { return {BoundaryKind::Symmetry, {}}; }
    static BoundaryCondition zero_flux() { return {BoundaryKind::ZeroFlux, {}}; }
    static BoundaryCondition dirichlet(ScalarFn a) { return {BoundaryKind::Dirichlet, std::move(a)}; }
};

/// One evolution of rho d_t u = div(grad G(u)) on a grid with given end conditions.
struct EvolutionProblem {
    RadialGrid grid;
    std::vector<double> rho;  // at nodes
    Nonlinearity nonlinearity;
    BoundaryCondition left;
    BoundaryCondition right;
    std::vector<double> initial;  // at nodes
    double t_begin = 0.0;
    double t_end = 1.0;
    std::optional<double> bound;  // |u| <= bound expected by comparison
};

namespace detail {

/// Thomas algorithm; sub[0] and sup[n-1] are ignored. Overwrites rhs with the solution.
inline void solve_tridiagonal(std::span<const double> sub, std::span<double> diag, std::span<const double> sup,
                              std::span<double> rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = sub[i] / diag[i - 1];
        diag[i] -= m * sup[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
}

inline bool is_dirichlet(const BoundaryCondition& bc) { return bc.kind == BoundaryKind::Dirichlet; }

}  // namespace detail

/// Conservative implicit-Euler scheme, each step solved by damped Newton
/// with Armijo backtracking on the volume-scaled residual.
///
///   w_i rho_i (u_i - u_i^old)/dt = c_{i+1/2}(G_{i+1} - G_i) - c_{i-1/2}(G_i - G_{i-1})
///
/// with c = r_face^{N-1}/h and w_i the control-volume weights of RadialGrid.
inline SolutionField evolve(const EvolutionProblem& p, const SchemeParams& scheme) {
    scheme.validate();
    const auto& grid = p.grid;
    const std::size_t n = grid.size();
    if (p.rho.size() != n || p.initial.size() != n) throw PreconditionError("data size does not match grid");
    if (p.left.kind == BoundaryKind::Symmetry && grid.nodes.front() != 0.0)
        throw PreconditionError("symmetry closure requires r0 = 0");
    if (p.right.kind == BoundaryKind::Symmetry) throw PreconditionError("symmetry closure only at r = 0");

    const double span_t = p.t_end - p.t_begin;
    if (!(span_t > 0.0)) throw PreconditionError("empty time interval");
    const auto steps = static_cast<std::size_t>(std::max<long long>(1, std::llround(span_t / scheme.dt)));
    const double dt = span_t / static_cast<double>(steps);

    std::vector<double> coef(n - 1);
    for (std::size_t f = 0; f + 1 < n; ++f) coef[f] = grid.face_coefficient(f);
    std::vector<double> mass(n);
    for (std::size_t i = 0; i < n; ++i) mass[i] = grid.volumes[i] * p.rho[i] / dt;

    const auto& nl = p.nonlinearity;
    const bool fix_left = detail::is_dirichlet(p.left);
    const bool fix_right = detail::is_dirichlet(p.right);

    SolutionField out;
    out.grid = grid;
    out.times.push_back(p.t_begin);
    std::vector<double> u = p.initial;
    if (fix_left) u.front() = p.left.value(p.t_begin);
    if (fix_right) u.back() = p.right.value(p.t_begin);
    out.values.push_back(u);

    std::vector<double> old(n), g(n), res(n), sub(n), diag(n), sup(n), delta(n), trial(n), gt(n);
    auto residual = [&](const std::vector<double>& v, const std::vector<double>& gv, std::vector<double>& r,
                        double left_value, double right_value) {
        for (std::size_t i = 0; i < n; ++i) {
            double flux = 0.0;
            if (i + 1 < n) flux += coef[i] * (gv[i + 1] - gv[i]);
            if (i > 0) flux -= coef[i - 1] * (gv[i] - gv[i - 1]);
            r[i] = mass[i] * (v[i] - old[i]) - flux;
        }
        if (fix_left) r.front() = v.front() - left_value;
        if (fix_right) r.back() = v.back() - right_value;
    };
    auto scaled_norm = [&](const std::vector<double>& r) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool fixed = (i == 0 && fix_left) || (i + 1 == n && fix_right);
            const double w = fixed ? 1.0 : grid.volumes[i];
            s = std::max(s, std::abs(r[i]) / w);
        }
        return s;
    };

    for (std::size_t step = 1; step <= steps; ++step) {
        const double t = p.t_begin + dt * static_cast<double>(step);
        const double left_value = fix_left ? p.left.value(t) : 0.0;
        const double right_value = fix_right ? p.right.value(t) : 0.0;
        old = u;
        if (fix_left) u.front() = left_value;
        if (fix_right) u.back() = right_value;

        bool converged = false;
        int iter = 0;
        double last_update = 0.0;
        for (std::size_t i = 0; i < n; ++i) g[i] = nl(u[i]);
        residual(u, g, res, left_value, right_value);
        double norm = scaled_norm(res);
        for (; iter < scheme.max_newton; ++iter) {
            for (std::size_t i = 0; i < n; ++i) {
                const double dg = nl.derivative(u[i]) + scheme.eps_reg;
                const double cl = i > 0 ? coef[i - 1] : 0.0;
                const double cr = i + 1 < n ? coef[i] : 0.0;
                diag[i] = mass[i] + (cl + cr) * dg;
                // off-diagonals hold derivatives w.r.t. neighbours, filled below
                sub[i] = 0.0;
                sup[i] = 0.0;
                delta[i] = -res[i];
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (i > 0) sub[i] = -coef[i - 1] * (nl.derivative(u[i - 1]) + scheme.eps_reg);
                if (i + 1 < n) sup[i] = -coef[i] * (nl.derivative(u[i + 1]) + scheme.eps_reg);
            }
            if (fix_left) {
                diag.front() = 1.0;
                sup.front() = 0.0;
            }
            if (fix_right) {
                diag.back() = 1.0;
                sub.back() = 0.0;
            }
            detail::solve_tridiagonal(sub, diag, sup, delta);

            double lambda = scheme.damping;
            double trial_norm = 0.0;
            for (int ls = 0; ls < 30; ++ls) {
                for (std::size_t i = 0; i < n; ++i) {
                    trial[i] = u[i] + lambda * delta[i];
                    gt[i] = nl(trial[i]);
                }
                residual(trial, gt, res, left_value, right_value);
                trial_norm = scaled_norm(res);
                if (trial_norm <= (1.0 - 1e-4 * lambda) * norm || norm == 0.0) break;
                lambda *= 0.5;
            }
            last_update = 0.0;
            double scale = 1.0;
            for (std::size_t i = 0; i < n; ++i) {
                last_update = std::max(last_update, std::abs(trial[i] - u[i]));
                scale = std::max(scale, std::abs(trial[i]));
            }
            u.swap(trial);
            g.swap(gt);
            norm = trial_norm;
            if (last_update <= scheme.newton_tol * scale) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw NumericalError("Newton did not converge at step " + std::to_string(step) + " (t = " +
                                 std::to_string(t) + ") after " + std::to_string(scheme.max_newton) +
                                 " iterations; last update " + std::to_string(last_update) + ", residual " +
                                 std::to_string(norm));
        if (p.bound) {
            const double slack = 10.0 * scheme.newton_tol * std::max(1.0, *p.bound) + 1e-12;
            for (std::size_t i = 0; i < n; ++i)
                if (std::abs(u[i]) > *p.bound + slack)
                    throw NumericalError("comparison violation at r = " + std::to_string(grid.nodes[i]) +
                                         ", t = " + std::to_string(t));
        }
        if (step % scheme.output_stride == 0 || step == steps) {
            out.times.push_back(t);
            out.values.push_back(u);
        }
    }
    out.metadata["dt"] = std::to_string(dt);
    out.metadata["h"] = std::to_string(grid.h);
    out.metadata["newton_tol"] = std::to_string(scheme.newton_tol);
    out.metadata["eps_reg"] = std::to_string(scheme.eps_reg);
    out.metadata["steps"] = std::to_string(steps);
    return out;
}

/// zeta_j u0 + (1 - zeta_j) anchor.
inline ScalarFn blend_initial(const InitialDatum& initial, double anchor, int j) {
    if (j < 1) throw PreconditionError("blend index j must be >= 1");
    return [u0 = initial.u0, anchor, j](double r) {
        const double z = cutoff(j, r);
        if (z == 1.0) return u0(r);
        return z * u0(r) + (1.0 - z) * anchor;
    };
}

inline std::vector<double> sample_on(const RadialGrid& grid, const ScalarFn& f) {
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = f(grid.nodes[i]);
    return out;
}

namespace detail {
inline double discrete_bound(const std::vector<double>& initial, const ScalarFn& a, double t0, double t1,
                             double dt) {
    double k = 0.0;
    for (double v : initial) k = std::max(k, std::abs(v));
    const auto steps = static_cast<std::size_t>(std::max<long long>(1, std::llround((t1 - t0) / dt)));
    for (std::size_t s = 0; s <= steps; ++s)
        k = std::max(k, std::abs(a(t0 + (t1 - t0) * static_cast<double>(s) / static_cast<double>(steps))));
    return k;
}
}  // namespace detail

/// Approximating problem on B_j: u = a(t) on r = j, u(0) = blend of u0 and a(0).
inline SolutionField solve_ball(const ProblemSpec& problem, int j, const RadialGrid& grid,
                                const SchemeParams& scheme) {
    problem.validate();
    if (grid.nodes.front() != 0.0 || std::abs(grid.nodes.back() - j) > 1e-9 || grid.dimension != problem.dimension)
        throw PreconditionError("grid must cover [0, j] in the problem dimension");
    EvolutionProblem ev{grid,
                        sample_on(grid, problem.density.rho),
                        problem.nonlinearity,
                        BoundaryCondition::symmetry(),
                        BoundaryCondition::dirichlet(problem.trace.a),
                        sample_on(grid, blend_initial(problem.initial, problem.trace(0.0), j)),
                        0.0,
                        problem.horizon,
                        std::nullopt};
    ev.bound = detail::discrete_bound(ev.initial, problem.trace.a, 0.0, problem.horizon, scheme.dt);
    auto field = evolve(ev, scheme);
    field.metadata["domain"] = "ball";
    field.metadata["j"] = std::to_string(j);
    return field;
}

struct AnnulusData {
    ScalarFn inner;    // u on r = R, in time
    ScalarFn outer;    // u on r = j, in time
    ScalarFn initial;  // u at t_begin, in r
};

/// Same scheme on the annulus R < r < j with Dirichlet data at both ends.
inline SolutionField solve_annulus(const ProblemSpec& problem, double inner_radius, double outer_radius,
                                   const AnnulusData& data, const RadialGrid& grid, const SchemeParams& scheme,
                                   double t_begin, double t_end) {
    problem.validate();
    if (!(inner_radius < outer_radius)) throw PreconditionError("annulus requires R < j");
    if (std::abs(grid.nodes.front() - inner_radius) > 1e-9 || std::abs(grid.nodes.back() - outer_radius) > 1e-9)
        throw PreconditionError("grid must cover [R, j]");
    EvolutionProblem ev{grid,
                        sample_on(grid, problem.density.rho),
                        problem.nonlinearity,
                        BoundaryCondition::dirichlet(data.inner),
                        BoundaryCondition::dirichlet(data.outer),
                        sample_on(grid, data.initial),
                        t_begin,
                        t_end,
                        std::nullopt};
    auto field = evolve(ev, scheme);
    field.metadata["domain"] = "annulus";
    return field;
}

/// (1/w_i) [c_{i+1/2}(v_{i+1} - v_i) - c_{i-1/2}(v_i - v_{i-1})], zero-flux at open ends.
inline std::vector<double> discrete_laplacian(const RadialGrid& grid, std::span<const double> v) {
    const std::size_t n = grid.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double flux = 0.0;
        if (i + 1 < n) flux += grid.face_coefficient(i) * (v[i + 1] - v[i]);
        if (i > 0) flux -= grid.face_coefficient(i - 1) * (v[i] - v[i - 1]);
        out[i] = flux / grid.volumes[i];
    }
    return out;
}

/// Backward problem rho d_t psi + q Delta psi = 0 on B_n x (0, tau), psi = 0 on r = n,
/// psi(tau) = chi. Solved forward in s = tau - t with the implicit linear scheme.
inline SolutionField solve_backward(const SpaceTimeFn& q, const ScalarFn& rho, const ScalarFn& chi, double n,
                                    double support_radius, double tau, const RadialGrid& grid,
                                    const SchemeParams& scheme) {
    scheme.validate();
    if (grid.nodes.front() != 0.0 || std::abs(grid.nodes.back() - n) > 1e-9)
        throw PreconditionError("backward grid must cover [0, n]");
    if (support_radius > n) throw PreconditionError("support of chi must lie inside B_n");
    const std::size_t m = grid.size();
    std::vector<double> psi(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double r = grid.nodes[i];
        const double c = chi(r);
        if (c < 0.0 || c > 1.0) throw PreconditionError("terminal profile must satisfy 0 <= chi <= 1");
        if (r >= support_radius && std::abs(c) > 1e-14)
            throw PreconditionError("terminal profile support violation at r = " + std::to_string(r));
        psi[i] = c;
    }
    psi.back() = 0.0;
    const double floor = 1.0 / (n * n);
    const auto steps = static_cast<std::size_t>(std::max<long long>(1, std::llround(tau / scheme.dt)));
    const double ds = tau / static_cast<double>(steps);

    std::vector<double> coef(m - 1);
    for (std::size_t f = 0; f + 1 < m; ++f) coef[f] = grid.face_coefficient(f);
    std::vector<double> rho_n = sample_on(grid, rho);

    std::vector<std::vector<double>> levels{psi};
    std::vector<double> times{tau};
    std::vector<double> sub(m), diag(m), sup(m), rhs(m);
    for (std::size_t step = 1; step <= steps; ++step) {
        const double t = tau - ds * static_cast<double>(step);
        for (std::size_t i = 0; i + 1 < m; ++i) {
            const double qi = q(grid.nodes[i], t);
            if (qi < floor * (1.0 - 1e-12))
                throw PreconditionError("coefficient below 1/n^2 at r = " + std::to_string(grid.nodes[i]));
            const double a = grid.volumes[i] * rho_n[i] / ds;
            const double cl = i > 0 ? coef[i - 1] : 0.0;
            const double cr = coef[i];
            diag[i] = a + qi * (cl + cr);
            sub[i] = i > 0 ? -qi * cl : 0.0;
            sup[i] = -qi * cr;
            rhs[i] = a * psi[i];
        }
        diag[m - 1] = 1.0;
        sub[m - 1] = 0.0;
        rhs[m - 1] = 0.0;
        detail::solve_tridiagonal(sub, diag, sup, rhs);
        psi = rhs;
        if (step % scheme.output_stride == 0 || step == steps) {
            levels.push_back(psi);
            times.push_back(t);
        }
    }
    SolutionField out;
    out.grid = grid;
    out.times.assign(times.rbegin(), times.rend());
    out.values.assign(levels.rbegin(), levels.rend());
    out.metadata["domain"] = "backward";
    out.metadata["dt"] = std::to_string(ds);
    return out;
}

/// Outward normal derivative at the outer radius, second-order one-sided.
inline std::vector<double> boundary_flux(const SolutionField& field) {
    const std::size_t m = field.grid.size();
    if (m < 3) throw PreconditionError("flux needs at least 3 nodes");
    std::vector<double> out(field.times.size());
    for (std::size_t k = 0; k < field.times.size(); ++k) {
        const auto& v = field.values[k];
        out[k] = (3.0 * v[m - 1] - 4.0 * v[m - 2] + v[m - 3]) / (2.0 * field.grid.h);
    }
    return out;
}

struct ComparisonReport {
    double worst_violation = 0.0;  // max of lower - upper
    std::size_t node = 0;
    std::size_t level = 0;
    bool ordered = true;
};

inline ComparisonReport discrete_comparison_check(const SolutionField& lower, const SolutionField& upper,
                                                  double tol = 1e-12) {
    if (!lower.grid.same_as(upper.grid) || lower.times.size() != upper.times.size())
        throw PreconditionError("comparison requires identical grids and time levels");
    for (std::size_t k = 0; k < lower.times.size(); ++k)
        if (std::abs(lower.times[k] - upper.times[k]) > 1e-12) throw PreconditionError("time levels differ");
    ComparisonReport rep;
    rep.worst_violation = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < lower.times.size(); ++k)
        for (std::size_t i = 0; i < lower.grid.size(); ++i) {
            const double d = lower.values[k][i] - upper.values[k][i];
            if (d > rep.worst_violation) {
                rep.worst_violation = d;
                rep.node = i;
                rep.level = k;
            }
        }
    rep.ordered = rep.worst_violation <= tol;
    return rep;
}


/// Rows r,t,u with 17 significant digits.
inline void write_field_csv(std::ostream& os, const SolutionField& field) {
    os << "r,t,u\n" << std::setprecision(17);
    for (std::size_t k = 0; k < field.times.size(); ++k)
        for (std::size_t i = 0; i < field.grid.size(); ++i)
            os << field.grid.nodes[i] << ',' << field.times[k] << ',' << field.values[k][i] << '\n';
}

inline void write_field_metadata(std::ostream& os, const SolutionField& field) {
    os << "dimension=" << field.grid.dimension << '\n'
       << "nodes=" << field.grid.size() << '\n'
       << "levels=" << field.times.size() << '\n';
    for (const auto& [k, v] : field.metadata) os << k << '=' << v << '\n';
}

inline void save_field(const std::string& csv_path, const SolutionField& field) {
    std::ofstream csv(csv_path);
    if (!csv) throw Error("cannot open " + csv_path);
    write_field_csv(csv, field);
    std::ofstream meta(csv_path + ".meta");
    write_field_metadata(meta, field);
}

}  // namespace filtration
