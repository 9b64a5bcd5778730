#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <set>

#include "oracles.hpp"
#include "pdmp/numerics.hpp"
#include "pdmp/parallel.hpp"
#include "pdmp/random.hpp"
#include "pdmp/statistics.hpp"

using Catch::Approx;
using namespace pdmp;

TEST_CASE("sign convention puts zero on the positive side") {
    CHECK(sgn(0.0) == 1.0);
    CHECK(sgn(-0.0) == 1.0);
    CHECK(sgn(-1e-300) == -1.0);
    CHECK(sgn(2.5) == 1.0);
}

TEST_CASE("adaptive Simpson integrates smooth functions") {
    CHECK(integrate([](double x) { return x * x * x; }, 0.0, 2.0) == Approx(4.0).margin(1e-12));
    CHECK(integrate([](double x) { return std::sin(x); }, 0.0, oracle::kPi) == Approx(2.0).margin(1e-9));
    CHECK(integrate([](double x) { return std::exp(x); }, 1.0, 0.0) == Approx(1.0 - std::exp(1.0)).margin(1e-9));
    CHECK(integrate([](double) { return 1.0; }, 3.0, 3.0) == 0.0);
}

TEST_CASE("integrate_to_infinity uses the tail bound to stop") {
    auto f = [](double x) { return std::exp(-x); };
    auto tail = [](double L) { return std::exp(-L); };
    CHECK(integrate_to_infinity(f, 0.0, tail) == Approx(1.0).margin(1e-10));
    auto g = [](double x) { return oracle::gaussian_pdf(x); };
    auto gtail = [](double L) { return std::exp(-0.5 * L * L); };
    CHECK(integrate_to_infinity(g, 0.0, gtail) == Approx(0.5).margin(1e-10));
}

TEST_CASE("safeguarded Newton and bisection find roots") {
    auto g = [](double x) { return x * x * x - 2.0; };
    auto dg = [](double x) { return 3.0 * x * x; };
    CHECK(solve_increasing(g, dg, 0.0, 2.0) == Approx(std::cbrt(2.0)).epsilon(1e-12));
    // A useless derivative forces the bisection fallback.
    CHECK(solve_increasing(g, [](double) { return 0.0; }, 0.0, 2.0, 1e-13) == Approx(std::cbrt(2.0)).epsilon(1e-10));
    CHECK_THROWS_AS(solve_increasing(g, dg, 2.0, 3.0), std::domain_error);
    CHECK(bisect([](double x) { return std::cos(x); }, 0.0, 3.0, 1e-12) == Approx(oracle::kPi / 2).epsilon(1e-11));
}

TEST_CASE("normal_cdf matches the erfc oracle") {
    for (double z : {-6.0, -1.96, -0.3, 0.0, 0.7, 2.5}) {
        CHECK(normal_cdf(z) == Approx(oracle::gaussian_cdf(z)).margin(1e-15));
        CHECK(normal_pdf(z) == Approx(oracle::gaussian_pdf(z)).epsilon(1e-14));
    }
}

TEST_CASE("streams are reproducible and distinct per index") {
    Stream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
    double xa = a.uniform();
    CHECK(xa == b.uniform());
    CHECK(xa != c.uniform());
    CHECK(xa != d.uniform());
    Stream e(1, 0);
    MeanSe m, ex;
    for (int i = 0; i < 200000; ++i) {
        double u = e.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        m.add(u);
        ex.add(e.exponential());
    }
    CHECK(std::abs(m.mean() - 0.5) < 4.0 * m.se());
    CHECK(std::abs(ex.mean() - 1.0) < 4.0 * ex.se());
}

TEST_CASE("run_replicas is independent of the worker count") {
    auto job = [](std::size_t i, Stream& rng) {
        double s = 0.0;
        for (std::size_t k = 0; k < 10 + i % 13; ++k) s += rng.exponential();
        return s;
    };
    setenv("PDMP_THREADS", "1", 1);
    auto one = run_replicas(1000, 99, job);
    setenv("PDMP_THREADS", "5", 1);
    auto five = run_replicas(1000, 99, job);
    unsetenv("PDMP_THREADS");
    CHECK(one == five);
    REQUIRE(one.size() == 1000);
}

TEST_CASE("run_replicas rethrows the first failing replica") {
    setenv("PDMP_THREADS", "3", 1);
    auto job = [](std::size_t i, Stream&) -> int {
        if (i == 300 || i == 700) throw std::runtime_error("replica " + std::to_string(i));
        return 0;
    };
    try {
        run_replicas(1000, 1, job);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "replica 300");
    }
    unsetenv("PDMP_THREADS");
}

TEST_CASE("running mean and standard error") {
    MeanSe m;
    for (double x : {1.0, 2.0, 3.0, 4.0}) m.add(x);
    CHECK(m.mean() == Approx(2.5));
    CHECK(m.variance() == Approx(5.0 / 3.0));
    CHECK(m.se() == Approx(std::sqrt(5.0 / 12.0)));
    CHECK(MeanSe().se() == 0.0);
}

TEST_CASE("Kolmogorov tail and KS statistics") {
    // Tabulated quantiles of the Kolmogorov distribution.
    CHECK(kolmogorov_tail(1.3581) == Approx(0.05).margin(2e-4));
    CHECK(kolmogorov_tail(1.6276) == Approx(0.01).margin(1e-4));
    CHECK(kolmogorov_tail(0.1) == 1.0);

    std::vector<double> xs = {0.1, 0.2, 0.3, 0.4};
    auto r = ks_one_sample(xs, [](double x) { return std::clamp(x, 0.0, 1.0); });
    CHECK(r.statistic == Approx(0.6));
    CHECK(ks_two_sample({1, 2, 3}, {1, 2, 3}).statistic == 0.0);
    CHECK(ks_two_sample({1, 2}, {3, 4}).statistic == 1.0);
    CHECK(dkw_epsilon(100000, 0.05) == Approx(std::sqrt(std::log(40.0) / 200000.0)));
}

TEST_CASE("KS on uniform draws rarely rejects") {
    Stream rng(5, 0);
    std::vector<double> xs(20000);
    for (auto& x : xs) x = rng.uniform();
    auto r = ks_one_sample(xs, [](double x) { return std::clamp(x, 0.0, 1.0); });
    CHECK(r.p_value > 0.001);
}
