#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "numerics.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "rate_model.hpp"
#include "simulation.hpp"
#include "statistics.hpp"

namespace pdmp {

/// One member (a_N, b_N) of a scaling sequence with the drift data (c1, c2) of its limit
/// d xi = dB - (sgn(xi) c1(xi) + c2(xi)) dt.
struct ScalingFamily {
    double N = 1.0;
    RatePair rates;
    std::function<double(double)> c1;
    std::function<double(double)> c2;
};

/// a_N = N, b_N = N + 2|y|: the limit is the Ornstein-Uhlenbeck process d xi = dB - xi dt.
inline ScalingFamily ou_family(double N) {
    return {N, RatePair(RateSpec::constant(N), RateSpec::affine(N, 2.0)), [](double y) { return std::abs(y); },
            [](double) { return 0.0; }};
}

/// Exact marginal CDF of d xi = dB - xi dt at time t from xi0.
inline double ou_marginal_cdf(double x, double xi0, double t) {
    double mean = xi0 * std::exp(-t);
    double var = 0.5 * (1.0 - std::exp(-2.0 * t));
    return normal_cdf((x - mean) / std::sqrt(var));
}

namespace detail {

// (a + b)(y) / 2 = k0 + k1 |y| for constant and affine families.
struct HalfSum {
    double k0 = 0.0;
    double k1 = 0.0;

    static HalfSum of(const RatePair& p) {
        for (const RateSpec* r : {&p.a, &p.b}) {
            if (r->family() == RateFamily::tabulated) {
                throw std::invalid_argument("scaling: only constant and affine rate families are supported");
            }
        }
        auto slope = [](const RateSpec& r) { return r.family() == RateFamily::affine ? r.slope() : 0.0; };
        return {0.5 * (p.a.base() + p.b.base()), 0.5 * (slope(p.a) + slope(p.b))};
    }

    double at(double m) const { return k0 + k1 * m; }

    // External time spent while |Y| moves from m at rate nu (= +-1) for internal duration d.
    double external(double m, double nu, double d) const {
        double g = at(m);
        if (k1 == 0.0) return d / g;
        return std::log1p(k1 * nu * d / g) / (k1 * nu);
    }

    // Inverse of `external` in d.
    double internal(double m, double nu, double dt) const {
        double g = at(m);
        if (k1 == 0.0) return dt * g;
        return g * std::expm1(k1 * nu * dt) / (k1 * nu);
    }
};

}  // namespace detail

/// Piecewise description of tau_N with tau_N' = (a_N + b_N)(Y_{tau_N}) / 2.
class TimeChange {
public:
    struct Knot {
        double tau;  ///< internal time at the segment start
        double t;    ///< external time at the segment start
        double m;    ///< |Y| at the segment start
        double nu;   ///< d|Y| / d tau on the segment
    };

    TimeChange() = default;
    explicit TimeChange(detail::HalfSum g) : g_(g) {}

    void add(const Knot& k) { knots_.push_back(k); }
    const std::vector<Knot>& knots() const { return knots_; }

    /// tau_N(t).
    double tau(double t) const {
        if (knots_.empty()) throw std::logic_error("TimeChange: empty");
        auto it = std::upper_bound(knots_.begin(), knots_.end(), t, [](double v, const Knot& k) { return v < k.t; });
        const Knot& k = it == knots_.begin() ? knots_.front() : *(it - 1);
        return k.tau + g_.internal(k.m, k.nu, t - k.t);
    }

    /// Inverse of tau_N.
    double time_of(double tau) const {
        if (knots_.empty()) throw std::logic_error("TimeChange: empty");
        auto it = std::upper_bound(knots_.begin(), knots_.end(), tau,
                                   [](double v, const Knot& k) { return v < k.tau; });
        const Knot& k = it == knots_.begin() ? knots_.front() : *(it - 1);
        return k.t + g_.external(k.m, k.nu, tau - k.tau);
    }

private:
    detail::HalfSum g_;
    std::vector<Knot> knots_;
};

struct ScaledPath {
    std::vector<double> times;
    std::vector<double> values;  ///< xi^N at `times`
    std::optional<TimeChange> time_change;
};

namespace detail {

/// Walks the unreflected process segment by segment in internal time while tracking the
/// external clock. `visit(x, v, s, tau, t, d, dt)` sees each reflected segment: height x,
/// reflected velocity v, sign s, start times tau and t, internal length d and external length dt.
/// It returns false to stop.
template <class Visit>
void walk_scaled(const RatePair& rates, const HalfSum& g, State start, Stream& rng, std::uint64_t guard, Visit&& visit) {
    ReflectedWalker rw(rates, fold(start), guard);
    double s = sgn(start.position);
    double tau = start.clock;
    double t = 0.0;
    for (;;) {
        double te = rw.next_event_time(rng);
        double d = te - tau;
        double x = rw.position();
        Velocity v = rw.velocity();
        double dt = g.external(x, value(v), d);
        if (!visit(x, v, s, tau, t, d, dt)) return;
        Event e = rw.step(rng);
        if (e.kind == EventKind::origin) s = -s;
        tau = te;
        t += dt;
    }
}

}  // namespace detail

/// xi^N(t) = Y(tau_N(t)) on the grid `times` (increasing, >= 0).
inline ScaledPath simulate_scaled(const ScalingFamily& fam, double y0, Velocity w0, const std::vector<double>& times,
                                  Stream& rng, bool keep_time_change = false,
                                  std::uint64_t guard = kDefaultEventGuard) {
    auto g = detail::HalfSum::of(fam.rates);
    ScaledPath out;
    out.times = times;
    out.values.reserve(times.size());
    if (keep_time_change) out.time_change.emplace(g);
    if (times.empty()) return out;
    std::size_t k = 0;
    detail::walk_scaled(fam.rates, g, {y0, w0, 0.0}, rng, guard,
                        [&](double x, Velocity v, double s, double tau, double t, double, double dt) {
                            if (out.time_change) out.time_change->add({tau, t, x, value(v)});
                            while (k < times.size() && times[k] <= t + dt) {
                                double d = g.internal(x, value(v), times[k] - t);
                                out.values.push_back(s * (x + value(v) * d));
                                ++k;
                            }
                            return k < times.size();
                        });
    return out;
}

/// xi^N(t) at a single time.
inline double scaled_value(const ScalingFamily& fam, double y0, Velocity w0, double t, Stream& rng) {
    return simulate_scaled(fam, y0, w0, {t}, rng).values.front();
}

struct EulerPair {
    double coarse = 0.0;  ///< step dt
    double fine = 0.0;    ///< step dt / 2, same Brownian path
};

/// Euler-Maruyama for d xi = dB - (sgn(xi) c1 + c2) dt, run at dt and dt / 2 on one Brownian path.
inline EulerPair simulate_limit_sde(const std::function<double(double)>& c1, const std::function<double(double)>& c2,
                                    double xi0, double horizon, double dt, Stream& rng) {
    if (!(dt > 0.0)) throw std::domain_error("simulate_limit_sde: dt must be positive");
    auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
    double h = 0.5 * dt;
    double sh = std::sqrt(h);
    double coarse = xi0, fine = xi0;
    auto drift = [&](double x) { return -(sgn(x) * c1(x) + c2(x)); };
    for (std::size_t i = 0; i < steps; ++i) {
        double z1 = rng.normal() * sh, z2 = rng.normal() * sh;
        coarse += drift(coarse) * dt + z1 + z2;
        fine += drift(fine) * h + z1;
        fine += drift(fine) * h + z2;
    }
    return {coarse, fine};
}

struct ScalingRow {
    double N = 0.0;
    double ks = 0.0;            ///< against the exact marginal when given, else the SDE reference
    double ks_reference = 0.0;  ///< against the Euler reference at dt
    std::array<double, 4> moments{};
    std::array<double, 4> se{};
};

struct ScalingReport {
    std::vector<ScalingRow> rows;
    double dt = 1e-3;
    double richardson_shift = 0.0;  ///< max over N of |KS(dt) - KS(dt/2)|
    bool reference_converged = false;
};

/// Compares xi^N(t) against the limit SDE (and the exact marginal when `exact_cdf` is given).
inline ScalingReport weak_convergence_report(const std::vector<ScalingFamily>& fams, double y0, double t,
                                             std::size_t n, std::uint64_t seed,
                                             std::function<double(double)> exact_cdf = {}, double dt = 1e-3) {
    if (fams.empty()) throw std::invalid_argument("weak_convergence_report: no families");
    ScalingReport rep;
    rep.dt = dt;
    auto ref = run_replicas(n, seed ^ 0x5eedULL, [&](std::size_t, Stream& rng) {
        return simulate_limit_sde(fams.front().c1, fams.front().c2, y0, t, dt, rng);
    });
    std::vector<double> coarse(n), fine(n);
    for (std::size_t i = 0; i < n; ++i) {
        coarse[i] = ref[i].coarse;
        fine[i] = ref[i].fine;
    }
    for (std::size_t f = 0; f < fams.size(); ++f) {
        const auto& fam = fams[f];
        auto xs = run_replicas(n, seed + 1000 * (f + 1), [&](std::size_t, Stream& rng) {
            return scaled_value(fam, y0, Velocity::plus, t, rng);
        });
        ScalingRow row;
        row.N = fam.N;
        double ks_c = ks_two_sample(xs, coarse).statistic;
        double ks_f = ks_two_sample(xs, fine).statistic;
        row.ks_reference = ks_c;
        rep.richardson_shift = std::max(rep.richardson_shift, std::abs(ks_c - ks_f));
        row.ks = exact_cdf ? ks_one_sample(xs, exact_cdf).statistic : ks_c;
        for (int k = 0; k < 4; ++k) {
            MeanSe m;
            for (double x : xs) m.add(std::pow(x, k + 1));
            row.moments[k] = m.mean();
            row.se[k] = m.se();
        }
        rep.rows.push_back(row);
    }
    rep.reference_converged = rep.richardson_shift < 0.005;
    return rep;
}

struct MartingaleReport {
    double mean_M = 0.0;
    double se_M = 0.0;
    double mean_N = 0.0;
    double se_N = 0.0;
};

struct MartingaleSample {
    double dM = 0.0;  ///< M_T - M_0
    double dN = 0.0;  ///< N_T - N_0
};

/// Increments of M = Y + kappa(Y) W - J and of the compensated square N of Y + kappa(Y) W,
/// kappa = 1/(a+b), evaluated at internal time tau_N(t).
inline MartingaleSample martingale_increments(const ScalingFamily& fam, double y0, Velocity w0, double t, Stream& rng) {
    const RatePair& p = fam.rates;
    auto g = detail::HalfSum::of(p);
    auto sum = [&](double y) { return p.a(y) + p.b(y); };
    auto kappa = [&](double y) { return 1.0 / sum(y); };
    auto dkappa = [&](double y) {
        double s = sum(y);
        return -(p.a.derivative(y) + p.b.derivative(y)) / (s * s);
    };
    auto j = [&](double y) { return dkappa(y) - sgn(y) * (p.b(y) - p.a(y)) / sum(y); };
    auto hat = [&](double y, Velocity w) { return y + kappa(y) * value(w); };

    double J = 0.0, Ik = 0.0, Iyj = 0.0, Ikk = 0.0;
    double yT = y0;
    Velocity wT = w0;
    detail::walk_scaled(p, g, {y0, w0, 0.0}, rng, kDefaultEventGuard,
                        [&](double x, Velocity v, double s, double, double t0, double d, double dt) {
                            double len = d;
                            bool last = t0 + dt >= t;
                            if (last) len = g.internal(x, value(v), t - t0);
                            auto y_at = [&](double u) { return s * (x + value(v) * u); };
                            double w = s * value(v);  // unreflected velocity on this segment
                            J += integrate([&](double u) { return j(y_at(u)); }, 0.0, len, 1e-13);
                            Ik += integrate([&](double u) { return kappa(y_at(u)); }, 0.0, len, 1e-13);
                            Iyj += integrate([&](double u) { double y = y_at(u); return y * j(y); }, 0.0, len, 1e-13);
                            Ikk += w * integrate([&](double u) { double y = y_at(u); return dkappa(y) * kappa(y); },
                                                 0.0, len, 1e-13);
                            if (last) {
                                yT = y_at(len);
                                wT = velocity_of(w);
                            }
                            return !last;
                        });
    double h0 = hat(y0, w0), hT = hat(yT, wT);
    return {hT - h0 - J, hT * hT - h0 * h0 - 2.0 * Ik - 2.0 * Iyj - 2.0 * Ikk};
}

inline MartingaleReport martingale_diagnostic(const ScalingFamily& fam, double y0, double t, std::size_t n,
                                              std::uint64_t seed) {
    auto samples = run_replicas(n, seed, [&](std::size_t, Stream& rng) {
        return martingale_increments(fam, y0, Velocity::plus, t, rng);
    });
    MeanSe m, q;
    for (const auto& s : samples) {
        m.add(s.dM);
        q.add(s.dN);
    }
    return {m.mean(), m.se(), q.mean(), q.se()};
}

}  // namespace pdmp
