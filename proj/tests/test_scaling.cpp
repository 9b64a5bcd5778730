#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "pdmp/analysis.hpp"
#include "pdmp/scaling.hpp"

using Catch::Approx;
using namespace pdmp;

namespace {

ScalingFamily constant_family(double N) {
    return {N, RatePair(RateSpec::constant(N), RateSpec::constant(N + 1.0)), [](double) { return 0.5; },
            [](double) { return 0.0; }};
}

double variance(const std::vector<double>& xs) {
    MeanSe m;
    for (double x : xs) m.add(x);
    double mean = m.mean(), s = 0.0;
    for (double x : xs) s += (x - mean) * (x - mean);
    return s / static_cast<double>(xs.size() - 1);
}

}  // namespace

TEST_CASE("constant rate sum gives a linear time change") {
    auto fam = constant_family(5.0);
    Stream rng(1, 0);
    std::vector<double> grid{0.0, 0.5, 1.0, 2.0};
    auto path = simulate_scaled(fam, 0.3, Velocity::plus, grid, rng, true);
    REQUIRE(path.time_change.has_value());
    for (double t : grid) CHECK(path.time_change->tau(t) == Approx(5.5 * t).margin(1e-12));
    CHECK(path.values.front() == 0.3);
}

TEST_CASE("time change is increasing and inverts consistently") {
    auto fam = ou_family(8.0);
    Stream rng(2, 0);
    std::vector<double> grid;
    for (int i = 0; i <= 400; ++i) grid.push_back(i * 0.005);
    auto path = simulate_scaled(fam, -0.7, Velocity::minus, grid, rng, true);
    const auto& tc = *path.time_change;
    CHECK(tc.tau(0.0) == 0.0);
    double prev = -1.0;
    for (double t : grid) {
        double tau = tc.tau(t);
        REQUIRE(tau > prev);
        REQUIRE(tc.time_of(tau) == Approx(t).margin(1e-9));
        prev = tau;
    }
    CHECK(path.values.front() == -0.7);
    CHECK(path.values.size() == grid.size());
}

TEST_CASE("scaled path starts at y0") {
    auto fam = ou_family(16.0);
    for (double y0 : {-1.5, 0.0, 2.0}) {
        Stream rng(3, 0);
        CHECK(scaled_value(fam, y0, Velocity::plus, 0.0, rng) == y0);
    }
}

TEST_CASE("OU family limit drift and hypotheses") {
    for (double N : {4.0, 16.0, 64.0}) {
        auto f = ou_family(N);
        for (double y : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
            double drift = -(sgn(y) * f.c1(y) + f.c2(y));
            CHECK(drift == Approx(-y).margin(1e-15));
            CHECK(f.rates.b(y) - f.rates.a(y) == Approx(2.0 * f.c1(y)));
            // (a' + b') / (a + b) vanishes on compacts as N grows.
            double ratio = std::abs(f.rates.a.derivative(y) + f.rates.b.derivative(y)) / (f.rates.a(y) + f.rates.b(y));
            CHECK(ratio <= 1.0 / N);
        }
    }
    CHECK(ou_family(4.0).rates.a(0.0) + ou_family(4.0).rates.b(0.0) <
          ou_family(16.0).rates.a(0.0) + ou_family(16.0).rates.b(0.0));
    ScalingFamily tab{1.0, RatePair(RateSpec::constant(1.0), RateSpec::tabulated({0.0, 1.0}, {1.0, 2.0})),
                      [](double) { return 0.0; }, [](double) { return 0.0; }};
    Stream rng(4, 0);
    CHECK_THROWS_AS(scaled_value(tab, 0.0, Velocity::plus, 1.0, rng), std::invalid_argument);
}

TEST_CASE("exact OU marginal") {
    for (double x : {-1.0, 0.0, 0.4, 2.0}) CHECK(ou_marginal_cdf(x, 1.0, 1.0) == Approx(oracle::ou_cdf(x, 1.0, 1.0)));
}

TEST_CASE("Euler scheme without drift is Brownian motion") {
    auto zero = [](double) { return 0.0; };
    const std::size_t n = 20000;
    auto ends = run_replicas(n, 5, [&](std::size_t, Stream& rng) { return simulate_limit_sde(zero, zero, 0.0, 1.0, 0.01, rng); });
    std::vector<double> c, f;
    for (auto& e : ends) {
        c.push_back(e.coarse);
        f.push_back(e.fine);
    }
    double se = std::sqrt(2.0 / static_cast<double>(n));
    CHECK(std::abs(variance(c) - 1.0) <= 3.0 * se);
    CHECK(std::abs(variance(f) - 1.0) <= 3.0 * se);
    Stream rng(5, 0);
    CHECK_THROWS_AS(simulate_limit_sde(zero, zero, 0.0, 1.0, 0.0, rng), std::domain_error);
}

TEST_CASE("Euler scheme for the OU limit reaches variance 1/2") {
    auto fam = ou_family(1.0);
    const std::size_t n = 20000;
    auto ends = run_replicas(n, 6, [&](std::size_t, Stream& rng) {
        return simulate_limit_sde(fam.c1, fam.c2, 0.0, 6.0, 2e-3, rng).fine;
    });
    double se = 0.5 * std::sqrt(2.0 / static_cast<double>(n));
    CHECK(std::abs(variance(ends) - 0.5) <= 3.0 * se);
}

TEST_CASE("long-run Euler histogram matches e^{-2U}") {
    // U(y) = y^2 / 2, so e^{-2U} is the N(0, 1/2) density.
    auto fam = ou_family(1.0);
    auto xs = run_replicas(20000, 7, [&](std::size_t, Stream& rng) {
        return simulate_limit_sde(fam.c1, fam.c2, 1.0, 8.0, 5e-3, rng).fine;
    });
    Binning b = freedman_diaconis(xs, -4.0, 4.0);
    auto emp = EmpiricalLaw::from_positions(xs, b);
    auto ref = EmpiricalLaw::from_cdf([](double y) { return oracle::gaussian_cdf(y * std::sqrt(2.0)); }, b);
    CHECK(tv_distance(emp, ref) <= 0.05);
}

TEST_CASE("unscaled affine family is stationary at N(0, 1)") {
    RatePair p(RateSpec::constant(1.0), RateSpec::affine(1.0, 1.0));
    auto xs = run_replicas(20000, 8, [&](std::size_t, Stream& rng) {
        return simulate(p, {0.0, Velocity::plus, 0.0}, 30.0, Flavor::unreflected, rng).final_state().position;
    });
    Binning b = freedman_diaconis(xs, -5.0, 5.0);
    auto emp = EmpiricalLaw::from_positions(xs, b);
    auto ref = EmpiricalLaw::from_cdf([](double y) { return oracle::gaussian_cdf(y); }, b);
    CHECK(tv_distance(emp, ref) <= 0.05);
}

TEST_CASE("weak convergence report at t = 0 and moment bounds") {
    std::vector<ScalingFamily> fams{ou_family(2.0), ou_family(8.0)};
    auto zero = weak_convergence_report(fams, 0.5, 0.0, 500, 9);
    for (const auto& r : zero.rows) CHECK(r.ks == 0.0);
    CHECK_THROWS_AS(weak_convergence_report({}, 0.5, 1.0, 10, 9), std::invalid_argument);

    fams.push_back(ou_family(32.0));
    auto rep = weak_convergence_report(fams, 1.0, 1.0, 4000, 10, [](double x) { return ou_marginal_cdf(x, 1.0, 1.0); });
    REQUIRE(rep.rows.size() == 3);
    // E|xi|^k for xi ~ N(e^{-1}, (1 - e^{-2}) / 2) is far below these caps.
    const double caps[4] = {1.0, 1.5, 2.5, 5.0};
    for (const auto& r : rep.rows) {
        for (int k = 0; k < 4; ++k) CHECK(std::abs(r.moments[k]) <= caps[k] + 5.0 * r.se[k]);
        CHECK(r.ks < 0.1);
    }
    CHECK(rep.reference_converged);
}

TEST_CASE("martingale diagnostics are centred") {
    for (const auto& fam : {ou_family(4.0), constant_family(4.0)}) {
        auto m = martingale_diagnostic(fam, 1.0, 1.0, 4000, 11);
        CHECK(std::abs(m.mean_M) <= 3.0 * m.se_M);
        CHECK(std::abs(m.mean_N) <= 3.0 * m.se_N);
        CHECK(m.se_M > 0.0);
    }
}

TEST_CASE("constant rates make the martingale drift piecewise linear") {
    // kappa' = 0, so J_t = -(b - a)/(a + b) * integral of sgn(Y); at t = 0 nothing accrues.
    auto fam = constant_family(3.0);
    Stream rng(12, 0);
    auto s = martingale_increments(fam, 0.5, Velocity::plus, 0.0, rng);
    CHECK(s.dM == Approx(0.0).margin(1e-12));
    CHECK(s.dN == Approx(0.0).margin(1e-12));
    // Before the first jump Y = 0.5 + u, W = +1: M changes by u + (b - a)/(a + b) u.
    Stream rng2(13, 0);
    double tiny = 1e-6;
    auto s2 = martingale_increments(fam, 0.5, Velocity::plus, tiny, rng2);
    double g = 0.5 * (3.0 + 4.0);
    double u = g * tiny;
    CHECK(s2.dM == Approx(u + u / 7.0).epsilon(1e-6));
}
