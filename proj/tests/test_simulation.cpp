#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "pdmp/parallel.hpp"
#include "pdmp/simulation.hpp"
#include "pdmp/statistics.hpp"

using Catch::Approx;
using namespace pdmp;

namespace {

RatePair gaussian_pair() { return RatePair(RateSpec::constant(1.0), RateSpec::affine(1.0, 1.0)); }
RatePair const_pair(double a, double b) { return RatePair(RateSpec::constant(a), RateSpec::constant(b)); }

// Rate of leaving (y, w) for the unreflected process: b when moving away from 0, a otherwise.
double switch_rate(const RatePair& p, double y, Velocity w) {
    return sgn(y) * value(w) > 0.0 ? p.b(y) : p.a(y);
}

}  // namespace

TEST_CASE("zero horizon keeps the initial state") {
    Stream rng(1, 0);
    auto tr = simulate(gaussian_pair(), {2.0, Velocity::minus, 0.0}, 0.0, Flavor::unreflected, rng);
    CHECK(tr.events.empty());
    CHECK(tr.final_state().position == 2.0);
    CHECK(tr.final_state().velocity == Velocity::minus);
    CHECK_THROWS_AS(simulate(gaussian_pair(), {2.0, Velocity::minus, 0.0}, -1.0, Flavor::unreflected, rng),
                    std::domain_error);
    CHECK_THROWS_AS(simulate(gaussian_pair(), {-2.0, Velocity::minus, 0.0}, 1.0, Flavor::reflected, rng),
                    std::domain_error);
}

TEST_CASE("reflected start at the origin moving down flips at once") {
    Stream rng(2, 0);
    auto tr = simulate(gaussian_pair(), {0.0, Velocity::minus, 0.0}, 1.0, Flavor::reflected, rng);
    REQUIRE_FALSE(tr.events.empty());
    CHECK(tr.events[0].time == 0.0);
    CHECK(tr.events[0].kind == EventKind::origin);
    CHECK(tr.events[0].velocity == Velocity::plus);
}

TEST_CASE("trajectories are piecewise linear with unit speed") {
    Stream rng(3, 0);
    auto tr = simulate(gaussian_pair(), {5.0, Velocity::minus, 1.0}, 20.0, Flavor::unreflected, rng);
    CHECK(tr.horizon == 21.0);
    double prev = tr.initial.clock;
    State s = tr.initial;
    for (const auto& e : tr.events) {
        REQUIRE(e.time > prev);
        REQUIRE(e.time <= tr.horizon);
        REQUIRE(e.kind == EventKind::jump);
        CHECK(e.position == Approx(s.position + value(s.velocity) * (e.time - prev)).margin(1e-9));
        REQUIRE(e.velocity == flipped(s.velocity));
        s = {e.position, e.velocity, e.time};
        prev = e.time;
    }
    // Between events the position moves with the current velocity.
    for (double t = 1.0; t + 1e-3 <= 21.0; t += 0.37) {
        State a = tr.at(t), b = tr.at(t + 1e-3);
        if (a.velocity == b.velocity) CHECK(b.position == Approx(a.position + value(a.velocity) * 1e-3).margin(1e-9));
    }
}

TEST_CASE("reflection identities") {
    auto p = gaussian_pair();
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Stream rng(4, seed);
        double y0 = seed % 2 ? -3.0 : 1.5;
        auto refl = simulate(p, fold({y0, Velocity::plus, 0.0}), 15.0, Flavor::reflected, rng);
        auto un = unreflect(refl, y0);
        // |Y| = X at every event and every probe time.
        for (const auto& e : un.events) REQUIRE(std::abs(e.position) == refl.at(e.time).position);
        for (double t = 0.0; t <= 15.0; t += 0.5) CHECK(std::abs(un.at(t).position) == Approx(refl.at(t).position).margin(1e-12));
        // Round trips reproduce the event lists exactly.
        auto back = reflect(un);
        REQUIRE(back.events == refl.events);
        auto again = unreflect(back, y0);
        REQUIRE(again.events == un.events);
    }
}

TEST_CASE("unreflect alternates the sign at each origin hit") {
    Trajectory refl;
    refl.flavor = Flavor::reflected;
    refl.initial = {3.0, Velocity::minus, 0.0};
    refl.horizon = 10.0;
    refl.events = {{3.0, 0.0, Velocity::plus, EventKind::origin},
                   {4.0, 1.0, Velocity::minus, EventKind::jump},
                   {5.0, 0.0, Velocity::plus, EventKind::origin}};
    auto un = unreflect(refl, -3.0);
    CHECK(un.at(1.0).position == -2.0);
    CHECK(un.at(3.5).position == 0.5);
    CHECK(un.at(4.5).position == 0.5);
    CHECK(un.at(6.0).position == -1.0);
    REQUIRE(un.events.size() == 1);
    CHECK(un.events[0].velocity == Velocity::minus);

    Trajectory straight;
    straight.flavor = Flavor::unreflected;
    straight.initial = {2.0, Velocity::minus, 0.0};
    straight.horizon = 3.0;
    auto r = reflect(straight);
    REQUIRE(r.events.size() == 1);
    CHECK(r.events[0].time == 2.0);
    CHECK(r.events[0].kind == EventKind::origin);

    Trajectory positive = straight;
    positive.initial = {2.0, Velocity::plus, 0.0};
    positive.events = {{1.0, 3.0, Velocity::minus, EventKind::jump}};
    CHECK(reflect(positive).events == positive.events);
    CHECK(unreflect(reflect(positive), 2.0).events == positive.events);
    CHECK_THROWS_AS(unreflect(r, 1.0), std::invalid_argument);
}

TEST_CASE("trajectory CSV layout") {
    Trajectory tr;
    tr.initial = {1.0, Velocity::plus, 0.0};
    tr.horizon = 2.0;
    tr.events = {{0.5, 1.5, Velocity::minus, EventKind::jump}};
    std::ostringstream os;
    write_csv(os, tr);
    CHECK(os.str() == "t,position,velocity\n0,1,1\n0.5,1.5,-1\n2,0,-1\n");
}

TEST_CASE("event guard trips loudly") {
    Stream rng(5, 0);
    CHECK_THROWS_AS(simulate(gaussian_pair(), {1.0, Velocity::plus, 0.0}, 1e6, Flavor::unreflected, rng, 100),
                    GuardError);
}

TEST_CASE("stationarity of the invariant law") {
    auto p = gaussian_pair();
    InvariantLaw law(p);
    const std::size_t n = 100000;
    auto pairs = run_replicas(n, 6, [&](std::size_t, Stream& rng) {
        State s{law.quantile(rng.uniform() * (1 - 2e-12) + 1e-12), rng.bernoulli(0.5) ? Velocity::plus : Velocity::minus,
                0.0};
        double later = simulate(p, s, 5.0, Flavor::unreflected, rng).final_state().position;
        return std::pair<double, double>{s.position, later};
    });
    std::vector<double> before, after;
    for (auto [b, a] : pairs) {
        before.push_back(b);
        after.push_back(a);
    }
    CHECK(ks_two_sample(before, after).p_value > 0.01);
    CHECK(ks_one_sample(after, oracle::gaussian_cdf).p_value > 0.01);
}

TEST_CASE("generator consistency on a grid of states") {
    auto p = gaussian_pair();
    auto f = [](double y, Velocity w) { return std::exp(-y * y) * (1.0 + 0.5 * value(w)) + 0.3 * std::sin(y); };
    auto df = [](double y, Velocity w) { return -2.0 * y * std::exp(-y * y) * (1.0 + 0.5 * value(w)) + 0.3 * std::cos(y); };
    const double h = 0.01;
    const std::size_t n = 400000;
    for (double y : {-1.3, -0.4, 0.6, 2.0}) {
        for (Velocity w : {Velocity::minus, Velocity::plus}) {
            double Lf = value(w) * df(y, w) + switch_rate(p, y, w) * (f(y, flipped(w)) - f(y, w));
            auto inc = run_replicas(n, 7, [&](std::size_t, Stream& rng) {
                UnreflectedWalker walker(p, {y, w, 0.0});
                walker.advance_to(h, rng);
                State z = walker.state();
                return (f(z.position, z.velocity) - f(y, w)) / h;
            });
            MeanSe m = summarize(inc);
            INFO("y=" << y << " w=" << value(w) << " Lf=" << Lf << " mc=" << m.mean() << " se=" << m.se());
            CHECK(std::abs(m.mean() - Lf) < 3.0 * m.se() + 10.0 * h);
        }
    }
}

TEST_CASE("hitting time of the origin") {
    auto p = gaussian_pair();
    Stream rng(8, 0);
    CHECK(hitting_time_zero(p, {0.0, Velocity::minus, 0.0}, rng) == 0.0);
    for (int i = 0; i < 1000; ++i) REQUIRE(hitting_time_zero(p, {1.5, Velocity::minus, 2.0}, rng) >= 1.5);

    const std::size_t n = 50000;
    std::vector<double> zm(n), zp(n);
    for (auto& z : zm) z = hitting_time_zero(p, {1.0, Velocity::minus, 0.0}, rng);
    for (auto& z : zp) z = hitting_time_zero(p, {1.0, Velocity::plus, 0.0}, rng);
    // Z(x, -1) is stochastically smaller: its CDF lies above within the DKW band.
    std::sort(zm.begin(), zm.end());
    std::sort(zp.begin(), zp.end());
    double worst = 0.0;
    for (double t = 0.0; t < 20.0; t += 0.05) {
        double fm = static_cast<double>(std::upper_bound(zm.begin(), zm.end(), t) - zm.begin()) / n;
        double fp = static_cast<double>(std::upper_bound(zp.begin(), zp.end(), t) - zp.begin()) / n;
        worst = std::max(worst, fp - fm);
    }
    CHECK(worst <= 2.0 * dkw_epsilon(n, 0.01));
}

TEST_CASE("constant-rate hitting transform") {
    CHECK(constant_rate_hitting_laplace(1, 2, 1.0, Velocity::minus, 0.0) == Approx(1.0));
    CHECK(constant_rate_hitting_laplace(1, 2, 1.0, Velocity::plus, 0.0) == Approx(1.0));
    double lc = critical_hitting_exponent(1, 2);
    CHECK(lc == Approx(0.0857864376).epsilon(1e-9));
    CHECK(constant_rate_hitting_laplace(1, 2, 1.0, Velocity::minus, lc + 1e-9) == kInf);
    CHECK(std::isfinite(constant_rate_hitting_laplace(1, 2, 1.0, Velocity::minus, lc)));

    // phi(x, -1) = e^{cx}, phi(x, +1) = psi e^{cx} must solve the generator equations
    //   -phi_-' + a (phi_+ - phi_-) + lambda phi_- = 0,  phi_+' + b (phi_- - phi_+) + lambda phi_+ = 0.
    for (double a : {0.5, 1.0}) {
        for (double b : {2.0, 3.5}) {
            for (double lam : {-0.7, 0.01, 0.9 * critical_hitting_exponent(a, b)}) {
                double x = 0.8, h = 1e-6;
                auto pm = [&](double y) { return constant_rate_hitting_laplace(a, b, y, Velocity::minus, lam); };
                auto pp = [&](double y) { return constant_rate_hitting_laplace(a, b, y, Velocity::plus, lam); };
                double dm = (pm(x + h) - pm(x - h)) / (2 * h), dp = (pp(x + h) - pp(x - h)) / (2 * h);
                CHECK(-dm + a * (pp(x) - pm(x)) + lam * pm(x) == Approx(0.0).margin(1e-7));
                CHECK(dp + b * (pm(x) - pp(x)) + lam * pp(x) == Approx(0.0).margin(1e-7));
            }
        }
    }
}

TEST_CASE("constant-rate hitting transform against simulation") {
    // 2 lambda < lambda_c keeps the variance finite.
    const std::size_t n = 100000;
    auto p = const_pair(1.0, 2.0);
    double lam = 0.03;
    auto v = run_replicas(n, 9, [&](std::size_t, Stream& rng) {
        return std::exp(lam * hitting_time_zero(p, {1.0, Velocity::minus, 0.0}, rng));
    });
    MeanSe m = summarize(v);
    CHECK(std::abs(m.mean() - constant_rate_hitting_laplace(1, 2, 1.0, Velocity::minus, lam)) < 3.0 * m.se());
}
