#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "filtration/radial_solver.hpp"

using namespace filtration;

namespace {

constexpr double pi = std::numbers::pi;

ProblemSpec constant_problem(double c, double m, double horizon) {
    return ProblemSpec{3, horizon, shifted_power_density(3.0), make_power_nonlinearity(m), constant_initial(c),
                       constant_trace(c, horizon)};
}

double sinc(double r) { return r < 1e-8 ? 1.0 - r * r / 6.0 : std::sin(r) / r; }

// Heat equation on the ball of radius pi, u = e^{-t} sin(r)/r.
double spectral_error(std::size_t intervals, double dt, double horizon) {
    auto grid = RadialGrid::uniform(0.0, pi, intervals, 3);
    EvolutionProblem ev{grid,
                        std::vector<double>(grid.size(), 1.0),
                        make_power_nonlinearity(1.0),
                        BoundaryCondition::symmetry(),
                        BoundaryCondition::dirichlet([](double) { return 0.0; }),
                        sample_on(grid, sinc),
                        0.0,
                        horizon,
                        std::nullopt};
    SchemeParams s;
    s.dt = dt;
    s.output_stride = 1000000;
    const auto f = evolve(ev, s);
    double err = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        err = std::max(err, std::abs(f.values.back()[i] - std::exp(-horizon) * sinc(grid.nodes[i])));
    return err;
}

}  // namespace

TEST(RadialGrid, WeightsSumToBallVolume) {
    for (int n : {3, 4, 6}) {
        auto g = RadialGrid::uniform(0.0, 2.0, 40, n);
        double s = 0.0;
        for (double w : g.volumes) s += w;
        EXPECT_NEAR(s, std::pow(2.0, n) / n, 1e-12);
        for (std::size_t i = 0; i + 1 < g.size(); ++i) {
            EXPECT_LT(g.nodes[i], g.faces[i]);
            EXPECT_LT(g.faces[i], g.nodes[i + 1]);
        }
    }
    EXPECT_NEAR(RadialGrid::uniform(0.0, 1.0, 10, 3).volumes[0], std::pow(0.05, 3) / 3.0, 1e-15);
    EXPECT_THROW(RadialGrid::uniform(1.0, 1.0, 10, 3), PreconditionError);
}

TEST(BlendInitial, CutoffValues) {
    auto zero = constant_initial(0.0);
    auto f = blend_initial(zero, 1.0, 4);
    EXPECT_NEAR(f(3.0), 0.5, 1e-15);
    EXPECT_EQ(f(4.0), 1.0);
    auto bump = bump_initial(0.5, 1.0, 1.0);
    auto g = blend_initial(bump, 2.0, 6);
    for (double r : {0.0, 1.0, 2.5, 3.0}) EXPECT_EQ(g(r), bump.u0(r));
    auto same = blend_initial(constant_initial(0.7), 0.7, 3);
    for (double r : linspace(0.0, 3.0, 31)) EXPECT_NEAR(same(r), 0.7, 1e-15);
    EXPECT_THROW(blend_initial(zero, 1.0, 0), PreconditionError);
}

TEST(SolveBall, ConstantStaysConstant) {
    for (double m : {1.0, 2.0}) {
        auto p = constant_problem(0.8, m, 0.5);
        auto grid = RadialGrid::uniform(0.0, 4.0, 80, 3);
        SchemeParams s;
        s.dt = 0.01;
        auto f = solve_ball(p, 4, grid, s);
        EXPECT_EQ(f.times.size(), 51u);
        for (const auto& row : f.values)
            for (double v : row) EXPECT_NEAR(v, 0.8, 1e-12);
    }
}

TEST(SolveBall, SpectralOracleWithinFirstOrderBound) {
    const double h = pi / 100.0;
    const double dt = 1e-3;
    EXPECT_LE(spectral_error(100, dt, 0.1), 0.5 * (h * h + dt));
}

TEST(SolveBall, SpectralOracleOrders) {
    const double e1 = spectral_error(100, 1e-6, 0.002);
    const double e2 = spectral_error(200, 1e-6, 0.002);
    EXPECT_GE(std::log2(e1 / e2), 1.9);
    const double t1 = spectral_error(2000, 2e-2, 0.4);
    const double t2 = spectral_error(2000, 1e-2, 0.4);
    EXPECT_GE(std::log2(t1 / t2), 0.9);
}

TEST(SolveBall, PorousMediumStaysInRange) {
    ProblemSpec p{3, 0.5, constant_density(1.0), make_power_nonlinearity(2.0), bump_initial(0.0, 1.0, 1.0),
                  constant_trace(0.0, 0.5)};
    auto grid = RadialGrid::uniform(0.0, 6.0, 120, 3);
    SchemeParams s;
    s.dt = 0.005;
    auto f = solve_ball(p, 6, grid, s);
    const double top = f.values.front()[0];
    for (const auto& row : f.values)
        for (double v : row) {
            EXPECT_GE(v, -1e-12);
            EXPECT_LE(v, top + 1e-12);
        }
}

TEST(SolveBall, NewtonBudgetExhaustionReported) {
    ProblemSpec p{3, 0.1, constant_density(1.0), make_power_nonlinearity(2.0), bump_initial(0.0, 1.0, 1.0),
                  constant_trace(0.0, 0.1)};
    auto grid = RadialGrid::uniform(0.0, 4.0, 40, 3);
    SchemeParams s;
    s.dt = 0.01;
    s.max_newton = 1;
    EXPECT_THROW(solve_ball(p, 4, grid, s), NumericalError);
}

TEST(SolveBall, RejectsMismatchedGrid) {
    auto p = constant_problem(0.0, 1.0, 0.1);
    EXPECT_THROW(solve_ball(p, 4, RadialGrid::uniform(0.0, 3.0, 30, 3), SchemeParams{}), PreconditionError);
}

TEST(SolveAnnulus, ConstantDataStayConstant) {
    auto p = constant_problem(0.0, 2.0, 0.2);
    auto c = [](double) { return -0.3; };
    auto grid = RadialGrid::uniform(2.0, 8.0, 60, 3);
    SchemeParams s;
    s.dt = 0.01;
    auto f = solve_annulus(p, 2.0, 8.0, {c, c, c}, grid, s, 0.0, 0.2);
    for (const auto& row : f.values)
        for (double v : row) EXPECT_NEAR(v, -0.3, 1e-12);
}

TEST(Comparison, RandomOrderedPairsStayOrdered) {
    std::mt19937_64 rng(20261014);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto grid = RadialGrid::uniform(0.0, 3.0, 30, 4);
    std::vector<double> rho(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) rho[i] = std::pow(1.0 + grid.nodes[i], -2.5);
    SchemeParams s;
    s.dt = 0.02;
    s.output_stride = 1;
    double worst = -1.0;
    for (int trial = 0; trial < 100; ++trial) {
        const double m = trial % 2 == 0 ? 1.0 : 1.0 + 2.0 * unit(rng);
        std::vector<double> a(grid.size()), b(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            a[i] = 2.0 * unit(rng) - 1.0;
            b[i] = a[i] + unit(rng) * unit(rng);
        }
        const double la = 2.0 * unit(rng) - 1.0;
        const double lb = la + 0.5 * unit(rng);
        a.back() = la;
        b.back() = lb;
        auto run = [&](const std::vector<double>& init, double edge) {
            EvolutionProblem ev{grid,
                                rho,
                                make_power_nonlinearity(m),
                                BoundaryCondition::symmetry(),
                                BoundaryCondition::dirichlet([edge](double t) { return edge * (1.0 + t); }),
                                init,
                                0.0,
                                0.2,
                                std::nullopt};
            return evolve(ev, s);
        };
        auto rep = discrete_comparison_check(run(a, la), run(b, lb));
        worst = std::max(worst, rep.worst_violation);
        EXPECT_TRUE(rep.ordered) << "trial " << trial << " violation " << rep.worst_violation;
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(Comparison, PlantedSwapDetectedAndIdenticalClean) {
    auto p = constant_problem(0.2, 1.0, 0.1);
    auto grid = RadialGrid::uniform(0.0, 3.0, 30, 3);
    SchemeParams s;
    s.dt = 0.01;
    auto f = solve_ball(p, 3, grid, s);
    EXPECT_EQ(discrete_comparison_check(f, f).worst_violation, 0.0);
    auto g = f;
    g.values[0][5] -= 0.1;
    auto rep = discrete_comparison_check(f, g);
    EXPECT_FALSE(rep.ordered);
    EXPECT_EQ(rep.level, 0u);
    EXPECT_EQ(rep.node, 5u);
    auto other = solve_ball(p, 3, RadialGrid::uniform(0.0, 3.0, 60, 3), s);
    EXPECT_THROW(discrete_comparison_check(f, other), PreconditionError);
}

TEST(Conservation, ZeroFluxBothEndsKeepsMass) {
    auto grid = RadialGrid::uniform(1.0, 5.0, 80, 3);
    std::vector<double> rho(grid.size()), init(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        rho[i] = std::pow(1.0 + grid.nodes[i], -3.0);
        init[i] = std::exp(-std::pow(grid.nodes[i] - 3.0, 2));
    }
    EvolutionProblem ev{grid, rho, make_power_nonlinearity(2.0), BoundaryCondition::zero_flux(),
                        BoundaryCondition::zero_flux(), init, 0.0, 1.0, std::nullopt};
    SchemeParams s;
    s.dt = 0.01;
    auto f = evolve(ev, s);
    auto mass = [&](const std::vector<double>& u) {
        double m = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) m += grid.volumes[i] * rho[i] * u[i];
        return m;
    };
    const double m0 = mass(f.values.front());
    for (const auto& row : f.values) EXPECT_NEAR(mass(row), m0, 1e-12 * std::max(1.0, m0) * 100);
    EXPECT_GT(std::abs(f.values.back()[0] - init[0]), 1e-4);
}

TEST(Backward, ZeroTerminalGivesZero) {
    auto grid = RadialGrid::uniform(0.0, 4.0, 40, 3);
    SchemeParams s;
    s.dt = 0.01;
    auto f = solve_backward([](double, double) { return 1.0; }, [](double) { return 1.0; },
                            [](double) { return 0.0; }, 4.0, 2.0, 0.5, grid, s);
    EXPECT_EQ(f.sup_norm(), 0.0);
    EXPECT_DOUBLE_EQ(f.times.front(), 0.0);
    EXPECT_DOUBLE_EQ(f.times.back(), 0.5);
    for (double v : boundary_flux(f)) EXPECT_EQ(v, 0.0);
}

TEST(Backward, StaysBetweenZeroAndOne) {
    auto grid = RadialGrid::uniform(0.0, 8.0, 80, 3);
    SchemeParams s;
    s.dt = 0.02;
    auto q = [](double r, double t) { return 1.0 / 64.0 + 0.5 * (1.0 + std::sin(3.0 * r + t)); };
    auto chi = [](double r) { return r < 2.0 ? std::pow(std::cos(pi * r / 4.0), 2) : 0.0; };
    auto f = solve_backward(q, [](double r) { return 1.0 / (1.0 + r * r); }, chi, 8.0, 2.0, 1.0, grid, s);
    for (const auto& row : f.values)
        for (double v : row) {
            EXPECT_GE(v, -1e-14);
            EXPECT_LE(v, 1.0 + 1e-14);
        }
    for (double v : boundary_flux(f)) EXPECT_LE(v, 1e-14);
}

TEST(Backward, RejectsBadData) {
    auto grid = RadialGrid::uniform(0.0, 4.0, 40, 3);
    SchemeParams s;
    auto one = [](double) { return 1.0; };
    auto chi = [](double r) { return r < 1.0 ? 1.0 - r : 0.0; };
    EXPECT_THROW(solve_backward([](double, double) { return 0.01; }, one, chi, 4.0, 2.0, 0.1, grid, s),
                 PreconditionError);
    EXPECT_THROW(solve_backward([](double, double) { return 1.0; }, one, one, 4.0, 2.0, 0.1, grid, s),
                 PreconditionError);
}

TEST(Backward, SpectralOracle) {
    // Eigenfunction sin(r)/r on the ball of radius pi, eigenvalue 1.
    const double c = 0.7, tau = 0.2;
    auto grid = RadialGrid::uniform(0.0, pi, 200, 3);
    SchemeParams s;
    s.dt = 1e-3;
    auto f = solve_backward([c](double, double) { return c; }, [](double) { return 1.0; }, sinc, pi, pi, tau, grid,
                            s);
    double err = 0.0;
    for (std::size_t k = 0; k < f.times.size(); ++k)
        for (std::size_t i = 0; i < grid.size(); ++i)
            err = std::max(err, std::abs(f.values[k][i] - std::exp(-c * (tau - f.times[k])) * sinc(grid.nodes[i])));
    const double h = grid.h;
    EXPECT_LE(err, 0.5 * (h * h + s.dt));
}

TEST(BoundaryFlux, MatchesComparisonFunction) {
    const int n = 5;
    const double chat = 2.0, N = 3.0;
    const double exact = (2.0 - N) * chat * std::pow(n, 1.0 - N) / (1.0 - std::pow(n, 2.0 - N));
    auto z = [&](double r) { return chat * (std::pow(r, 2.0 - N) - std::pow(n, 2.0 - N)) / (1.0 - std::pow(n, 2.0 - N)); };
    double prev = 0.0;
    for (std::size_t m : {40u, 80u}) {
        SolutionField f;
        f.grid = RadialGrid::uniform(1.0, n, m, 3);
        f.times = {0.0};
        f.values = {sample_on(f.grid, z)};
        const double err = std::abs(boundary_flux(f)[0] - exact);
        EXPECT_LE(err, 10.0 * f.grid.h * f.grid.h);
        if (prev > 0.0) {
            EXPECT_GT(prev / err, 3.5);
        }
        prev = err;
    }
}

TEST(FieldIo, CsvHeaderAndPrecision) {
    auto p = constant_problem(1.0 / 3.0, 1.0, 0.02);
    SchemeParams s;
    s.dt = 0.01;
    auto f = solve_ball(p, 2, RadialGrid::uniform(0.0, 2.0, 4, 3), s);
    std::ostringstream os;
    write_field_csv(os, f);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "r,t,u");
    std::getline(is, line);
    EXPECT_EQ(line, "0,0,0.33333333333333331");
    std::ostringstream meta;
    write_field_metadata(meta, f);
    EXPECT_NE(meta.str().find("domain=ball"), std::string::npos);
}
