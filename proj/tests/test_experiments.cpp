#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "filtration/experiments.hpp"

using namespace filtration;

namespace {

constexpr double pi = std::numbers::pi;

BallDiscretization coarse(double h = 0.25, double dt = 0.01) {
    BallDiscretization d;
    d.h = h;
    d.scheme.dt = dt;
    return d;
}

ProblemSpec pme_problem(double alpha, double horizon, BoundaryTrace trace) {
    return ProblemSpec{3, horizon, shifted_power_density(alpha), make_power_nonlinearity(2.0),
                       bump_initial(1.0, 0.5, 2.0), std::move(trace)};
}

double sinc(double r) { return r < 1e-8 ? 1.0 - r * r / 6.0 : std::sin(r) / r; }

SolutionField heat_oracle_field(std::size_t intervals, double dt, double horizon) {
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
    return evolve(ev, s);
}

SolutionField constant_field(double c, double radius, double horizon) {
    SolutionField f;
    f.grid = RadialGrid::uniform(0.0, radius, 40, 3);
    f.times = linspace(0.0, horizon, 11);
    f.values.assign(f.times.size(), std::vector<double>(f.grid.size(), c));
    return f;
}

}  // namespace

TEST(ParallelMap, OrderAndErrorsIndependentOfWorkers) {
    auto sq = [](std::size_t i) { return static_cast<double>(i * i); };
    EXPECT_EQ(parallel_map(50, 1, sq), parallel_map(50, 4, sq));
    auto bad = [](std::size_t i) -> int {
        if (i == 3 || i == 7) throw NumericalError("fail " + std::to_string(i));
        return 0;
    };
    for (int w : {1, 4}) {
        try {
            parallel_map(10, w, bad);
            FAIL();
        } catch (const NumericalError& e) {
            EXPECT_STREQ(e.what(), "fail 3");
        }
    }
}

TEST(ExpandingBall, ConstantDataGiveZeroDistance) {
    ProblemSpec p{3, 0.2, shifted_power_density(4.0), make_power_nonlinearity(2.0), constant_initial(1.0),
                  constant_trace(1.0, 0.2)};
    auto t = expanding_ball_study(p, {8, 4, 16}, 3.0, coarse());
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(t.rows[0].j, 4);
    for (const auto& r : t.rows) EXPECT_LE(r.distance, 1e-12);
    EXPECT_THROW(expanding_ball_study(p, {2, 3}, 5.0, coarse()), PreconditionError);
}

TEST(ExpandingBall, DistancesDecreaseForPorousMedium) {
    auto p = pme_problem(4.0, 0.5, constant_trace(1.0, 0.5));
    auto t = expanding_ball_study(p, {10, 20, 40}, 5.0, coarse(), 3);
    EXPECT_GT(t.rows[0].distance, t.rows[1].distance);
    EXPECT_EQ(t.rows[2].distance, 0.0);
    auto csv = t.table();
    EXPECT_EQ(csv.columns.front(), "j");
}

TEST(Attainment, ConstantIsZeroAndRadiusChecked) {
    auto f = constant_field(0.7, 10.0, 1.0);
    for (const auto& v : attainment_profile(f, constant_trace(0.7, 1.0), {1.0, 5.0, 10.0}, 0.0, 1.0))
        EXPECT_EQ(v.value, 0.0);
    EXPECT_THROW(attainment_profile(f, constant_trace(0.7, 1.0), {11.0}, 0.0, 1.0), PreconditionError);
}

TEST(Attainment, FastDecayValuesDecreaseAndRespectBarrier) {
    auto density = shifted_power_density(4.0);
    auto trace = linear_trace(1.0, 0.5, 1.0);
    ProblemSpec p{3, 1.0, density, make_power_nonlinearity(1.0), algebraic_initial(1.0, 0.5), trace};
    auto f = solve_ball(p, 40, ball_grid(40, 3, 0.25), coarse().scheme);
    auto prof = attainment_profile(f, trace, {5.0, 10.0, 20.0}, 0.0, 1.0);
    EXPECT_GT(prof[0].value, prof[1].value);
    EXPECT_GT(prof[1].value, prof[2].value);

    auto V = build_potential(*density.upper, 1.0, 3);
    const double sigma = 0.1, delta = modulus_delta(trace, p.nonlinearity, sigma);
    for (double t0 : {0.25, 0.5, 0.75}) {
        auto s = nondegenerate_constants(p, V, t0, sigma, delta, 4.0);
        for (double R : {5.0, 10.0, 20.0}) {
            auto local = attainment_profile(f, trace, {R}, s.window_lo, s.window_hi);
            const double bound = std::max(
                barrier_envelope(trace, p.nonlinearity, s.M_low, V(R), sigma, s.lambda_low, delta, s.window_lo,
                                 s.window_hi),
                barrier_envelope(trace, p.nonlinearity, s.M_high, V(R), sigma, s.lambda_high, delta, s.window_lo,
                                 s.window_hi));
            EXPECT_LE(local[0].value, bound);
        }
    }
}

TEST(IntegralCondition, ExactCases) {
    auto pme = make_power_nonlinearity(2.0);
    auto f = constant_field(0.5, 10.0, 1.0);
    for (const auto& r : integral_condition_metric(f, pme, [](double t) { return 0.25 * t; }, {1.0, 9.0}))
        EXPECT_NEAR(r.sup_difference, 0.0, 1e-15);
    auto z = constant_field(0.0, 10.0, 1.0);
    for (const auto& r : integral_condition_metric(z, pme, [](double) { return 0.0; }, {2.0}))
        EXPECT_EQ(r.sup_difference, 0.0);
}

TEST(IntegralCondition, DecreasesTowardInfinity) {
    auto trace = linear_trace(1.0, 0.5, 1.0);
    auto p = pme_problem(4.0, 1.0, trace);
    p.initial = algebraic_initial(1.0, 0.5);
    auto f = solve_ball(p, 40, ball_grid(40, 3, 0.25), coarse().scheme);
    auto A = [](double t) {  // int_0^t (1 + s/2)^2 ds
        return (std::pow(1.0 + 0.5 * t, 3) - 1.0) / 1.5;
    };
    auto rows = integral_condition_metric(f, p.nonlinearity, A, {5.0, 10.0, 20.0});
    EXPECT_GT(rows[0].sup_difference, rows[1].sup_difference);
    EXPECT_GT(rows[1].sup_difference, rows[2].sup_difference);
    EXPECT_NEAR(rows[0].sphere_form, 4.0 * pi * rows[0].sup_difference, 1e-12);
}

TEST(Nonuniqueness, IdenticalTracesAndGuard) {
    auto a = constant_trace(1.0, 0.4);
    auto p = pme_problem(4.0, 0.4, a);
    auto same = nonuniqueness_demo(p, a, a, {6, 12}, 5.0, coarse());
    for (const auto& r : same.rows) EXPECT_EQ(r.separation, 0.0);
    EXPECT_FALSE(same.distinct);
    auto slow = pme_problem(1.0, 0.4, a);
    EXPECT_THROW(nonuniqueness_demo(slow, a, a, {6, 12}, 5.0, coarse()), PreconditionError);
    EXPECT_THROW(nonuniqueness_demo(p, a, constant_trace(-1.0, 0.4), {6, 12}, 5.0, coarse()), PreconditionError);
}

TEST(Nonuniqueness, DifferentTracesSeparate) {
    auto a1 = constant_trace(1.0, 1.0), a2 = constant_trace(2.0, 1.0);
    auto p = pme_problem(4.0, 1.0, a1);
    auto rep = nonuniqueness_demo(p, a1, a2, {10, 20}, 5.0, coarse(), 4);
    EXPECT_TRUE(rep.distinct);
    EXPECT_TRUE(rep.compatible_first);
    EXPECT_FALSE(rep.compatible_second);
}

TEST(UniquenessCross, IdenticalTracesGuardAndSubsetMonotone) {
    auto a = constant_trace(1.0, 0.5);
    auto p = pme_problem(0.0, 0.5, a);
    auto same = uniqueness_cross_bc(p, a, a, {6, 12}, 5.0, coarse());
    for (const auto& r : same.rows) EXPECT_EQ(r.separation, 0.0);
    EXPECT_THROW(uniqueness_cross_bc(pme_problem(4.0, 0.5, a), a, a, {6, 12}, 5.0, coarse()), PreconditionError);
    auto b = constant_trace(2.0, 0.5);
    auto big = uniqueness_cross_bc(p, a, b, {6, 12}, 5.0, coarse());
    auto small = uniqueness_cross_bc(p, a, b, {6, 12}, 3.0, coarse());
    for (std::size_t k = 0; k < big.rows.size(); ++k)
        EXPECT_LE(small.rows[k].separation, big.rows[k].separation);
}

TEST(Duality, DifferenceQuotientAndSmoothingBounds) {
    auto id = make_power_nonlinearity(1.0);
    auto pme = make_power_nonlinearity(2.0);
    EXPECT_EQ(difference_quotient(id, 0.3, 0.3), 0.0);
    EXPECT_DOUBLE_EQ(difference_quotient(id, 0.3, 1.7), 1.0);
    EXPECT_DOUBLE_EQ(difference_quotient(pme, 1.0, 2.0), 3.0);
    std::vector<double> q{0.0, 0.5, 2.0, 0.0, 1.0, 1.5};
    for (int n : {2, 5, 40}) {
        auto qn = smooth_coefficient(q, 2.0, n, 2.0);
        for (double v : qn) {
            EXPECT_GE(v, 1.0 / (n * n));
            EXPECT_LE(v, 2.0 + 1.0 / (n * n));
        }
    }
}

TEST(Duality, IdenticalFieldsGiveZeroTerms) {
    auto a = constant_trace(1.0, 0.5);
    auto p = pme_problem(4.0, 0.5, a);
    auto d = coarse(0.25, 0.01);
    d.scheme.output_stride = 1;
    auto u = solve_ball(p, 8, ball_grid(8, 3, d.h), d.scheme);
    auto chi = [](double r) { return r < 2.0 ? std::pow(std::cos(pi * r / 4.0), 2) : 0.0; };
    auto rep = duality_probe(u, u, p.density.rho, p.nonlinearity, chi, {4, 8}, 0.3, 2.0);
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.interior_term, 0.0);
        EXPECT_EQ(r.boundary_term, 0.0);
        EXPECT_EQ(r.mass, 0.0);
    }
    EXPECT_TRUE(rep.psi_bounds_ok);
    EXPECT_THROW(duality_probe(u, u, p.density.rho, p.nonlinearity, [](double) { return 1.0; }, {4}, 0.3, 2.0),
                 PreconditionError);
}

TEST(Duality, SameTracePairInvariants) {
    auto a = constant_trace(1.0, 0.5);
    auto p = pme_problem(4.0, 0.5, a);
    auto chi = [](double r) { return r < 2.0 ? std::pow(std::cos(pi * r / 4.0), 2) : 0.0; };
    auto rep1 = duality_same_trace(p, chi, {4, 8, 16}, 0.4, 2.0, coarse(0.25, 0.01), 1);
    auto rep4 = duality_same_trace(p, chi, {4, 8, 16}, 0.4, 2.0, coarse(0.25, 0.01), 4);
    EXPECT_TRUE(rep1.psi_bounds_ok);
    EXPECT_TRUE(rep1.flux_bounds_ok);
    EXPECT_TRUE(rep1.quadratic_ok);
    EXPECT_TRUE(rep1.defect_nonincreasing);
    ASSERT_EQ(rep1.rows.size(), rep4.rows.size());
    for (std::size_t i = 0; i < rep1.rows.size(); ++i) {
        EXPECT_EQ(rep1.rows[i].mass, rep4.rows[i].mass);
        EXPECT_EQ(rep1.rows[i].interior_term, rep4.rows[i].interior_term);
    }
    for (const auto& r : rep1.rows) EXPECT_LE(std::abs(r.identity_gap), 1e-2 * std::max(1.0, std::abs(r.mass)));
}

TEST(WeakResidual, ConstantFieldsSatisfyIdentity) {
    auto f = constant_field(0.8, 5.0, 1.0);
    auto pme = make_power_nonlinearity(2.0);
    auto rho = [](double r) { return 1.0 / (1.0 + r * r); };
    EXPECT_LE(weak_residual(f, rho, pme, polynomial_bump(0.0, 3.3, 3), 0.5).residual, 1e-9);
    EXPECT_LE(weak_residual(f, rho, pme, polynomial_bump(1.1, 4.0, 3, 2.0), 1.0).residual, 1e-9);
}

TEST(WeakResidual, InadmissibleRejected) {
    auto f = constant_field(0.8, 5.0, 1.0);
    auto id = make_power_nonlinearity(1.0);
    auto bad = polynomial_bump(0.0, 2.0, 3);
    bad.phi = [](double r) { return 5.0 - r * r; };
    EXPECT_THROW(weak_residual(f, [](double) { return 1.0; }, id, bad, 0.5), PreconditionError);
    EXPECT_THROW(weak_residual(f, [](double) { return 1.0; }, id, polynomial_bump(0.0, 6.0, 3), 0.5),
                 PreconditionError);
    EXPECT_THROW(weak_residual(f, [](double) { return 1.0; }, id, polynomial_bump(0.0, 2.0, 3, -5.0), 0.5),
                 PreconditionError);
}

TEST(WeakResidual, OracleFieldConvergesAtFirstOrder) {
    auto id = make_power_nonlinearity(1.0);
    auto one = [](double) { return 1.0; };
    for (const auto& psi : {polynomial_bump(0.0, 2.0, 3), polynomial_bump(0.5, 2.5, 3)}) {
        const double coarse_res = weak_residual(heat_oracle_field(50, 4e-3, 0.2), one, id, psi, 0.2).residual;
        const double fine_res = weak_residual(heat_oracle_field(100, 2e-3, 0.2), one, id, psi, 0.2).residual;
        EXPECT_GE(coarse_res / fine_res, 1.8);
    }
}

TEST(BarrierCertificate, LinearAndDegenerateConfigurations) {
    auto density = shifted_power_density(4.0);
    ProblemSpec lin{3, 1.0, density, make_power_nonlinearity(1.0), algebraic_initial(1.0, 0.5),
                    linear_trace(1.0, 0.5, 1.0)};
    CertificateOptions opt;
    opt.disc = coarse(0.1, 5e-3);
    auto r1 = barrier_certificate(lin, opt);
    EXPECT_TRUE(r1.low.passed());
    EXPECT_TRUE(r1.high.passed());
    EXPECT_TRUE(r1.sandwich_ok) << r1.below_worst << " " << r1.above_worst;
    ProblemSpec deg{3, 1.0, density, make_power_nonlinearity(2.0), algebraic_initial(1.0, 0.5),
                    constant_trace(1.0, 1.0)};
    opt.alpha_level = 0.9;
    auto r2 = barrier_certificate(deg, opt);
    EXPECT_TRUE(r2.passed()) << r2.low.worst_residual << " " << r2.below_worst;
    EXPECT_EQ(r2.table().rows.size(), 16u);
}
