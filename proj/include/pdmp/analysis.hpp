#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coupling.hpp"
#include "jump_sampler.hpp"
#include "numerics.hpp"
#include "random.hpp"
#include "rate_model.hpp"
#include "statistics.hpp"

namespace pdmp {

// ---------------------------------------------------------------------------------------------
// Empirical laws and total variation

struct Binning {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t bins = 1;

    double width() const { return (hi - lo) / static_cast<double>(bins); }
    double edge(std::size_t i) const { return lo + static_cast<double>(i) * width(); }
    /// Bin index, or `bins` when x falls outside [lo, hi).
    std::size_t index(double x) const {
        if (!(x >= lo && x < hi)) return bins;
        auto i = static_cast<std::size_t>((x - lo) / width());
        return std::min(i, bins - 1);
    }
    friend bool operator==(const Binning&, const Binning&) = default;
};

/// Freedman-Diaconis bin count for `pooled`, on the fixed range [lo, hi].
inline Binning freedman_diaconis(std::vector<double> pooled, double lo, double hi, std::size_t max_bins = 2000) {
    if (pooled.size() < 4) throw std::invalid_argument("freedman_diaconis: need at least 4 points");
    if (!(hi > lo)) throw std::invalid_argument("freedman_diaconis: empty range");
    std::sort(pooled.begin(), pooled.end());
    auto q = [&](double p) {
        double pos = p * static_cast<double>(pooled.size() - 1);
        auto i = static_cast<std::size_t>(pos);
        double f = pos - static_cast<double>(i);
        return i + 1 < pooled.size() ? pooled[i] * (1 - f) + pooled[i + 1] * f : pooled[i];
    };
    double iqr = q(0.75) - q(0.25);
    double h = 2.0 * iqr / std::cbrt(static_cast<double>(pooled.size()));
    std::size_t bins = h > 0.0 ? static_cast<std::size_t>(std::ceil((hi - lo) / h)) : 1;
    return {lo, hi, std::clamp<std::size_t>(bins, 1, max_bins)};
}

/// Histogram of (position, velocity) with separate masses per velocity channel.
struct EmpiricalLaw {
    Binning binning;
    std::vector<double> mass_plus;
    std::vector<double> mass_minus;
    double out_of_range = 0.0;
    std::size_t n = 0;  ///< sample size; 0 for exact reference laws

    static EmpiricalLaw from_states(const std::vector<State>& states, const Binning& b) {
        if (states.empty()) throw std::invalid_argument("EmpiricalLaw: empty sample");
        EmpiricalLaw e;
        e.binning = b;
        e.mass_plus.assign(b.bins, 0.0);
        e.mass_minus.assign(b.bins, 0.0);
        e.n = states.size();
        for (const auto& s : states) {
            std::size_t i = b.index(s.position);
            if (i == b.bins) {
                e.out_of_range += 1.0;
            } else if (s.velocity == Velocity::plus) {
                e.mass_plus[i] += 1.0;
            } else {
                e.mass_minus[i] += 1.0;
            }
        }
        double n = static_cast<double>(states.size());
        for (auto& m : e.mass_plus) m /= n;
        for (auto& m : e.mass_minus) m /= n;
        e.out_of_range /= n;
        return e;
    }

    static EmpiricalLaw from_positions(const std::vector<double>& xs, const Binning& b) {
        if (xs.empty()) throw std::invalid_argument("EmpiricalLaw: empty sample");
        std::vector<State> s;
        s.reserve(xs.size());
        for (double x : xs) s.push_back({x, Velocity::plus, 0.0});
        return from_states(s, b);
    }

    /// Exact bin masses of a law with CDF `cdf`, split between channels with weight `plus_share`.
    template <class Cdf>
    static EmpiricalLaw from_cdf(const Cdf& cdf, const Binning& b, double plus_share = 1.0) {
        EmpiricalLaw e;
        e.binning = b;
        e.mass_plus.assign(b.bins, 0.0);
        e.mass_minus.assign(b.bins, 0.0);
        double inside = 0.0;
        for (std::size_t i = 0; i < b.bins; ++i) {
            double m = cdf(b.edge(i + 1)) - cdf(b.edge(i));
            e.mass_plus[i] = plus_share * m;
            e.mass_minus[i] = (1.0 - plus_share) * m;
            inside += m;
        }
        e.out_of_range = std::max(0.0, 1.0 - inside);
        return e;
    }

    /// Law of the position alone (all mass moved to the plus channel).
    EmpiricalLaw position_marginal() const {
        EmpiricalLaw e = *this;
        for (std::size_t i = 0; i < e.mass_plus.size(); ++i) {
            e.mass_plus[i] += e.mass_minus[i];
            e.mass_minus[i] = 0.0;
        }
        return e;
    }
};

struct TvEstimate {
    double tv = 0.0;
    double se = 0.0;
};

/// Histogram total variation with a delta-method standard error.
inline TvEstimate tv_with_se(const EmpiricalLaw& p, const EmpiricalLaw& q) {
    if (!(p.binning == q.binning)) throw std::invalid_argument("tv_distance: binning mismatch");
    double tv = 0.0, sp = 0.0, sq = 0.0;
    auto cell = [&](double a, double b) {
        double s = a > b ? 1.0 : (a < b ? -1.0 : 0.0);
        tv += std::abs(a - b);
        sp += s * a;
        sq += s * b;
    };
    for (std::size_t i = 0; i < p.mass_plus.size(); ++i) {
        cell(p.mass_plus[i], q.mass_plus[i]);
        cell(p.mass_minus[i], q.mass_minus[i]);
    }
    cell(p.out_of_range, q.out_of_range);
    double var = 0.0;
    if (p.n > 0) var += (1.0 - sp * sp) / static_cast<double>(p.n);
    if (q.n > 0) var += (1.0 - sq * sq) / static_cast<double>(q.n);
    return {std::min(1.0, 0.5 * tv), 0.5 * std::sqrt(std::max(0.0, var))};
}

inline double tv_distance(const EmpiricalLaw& p, const EmpiricalLaw& q) { return tv_with_se(p, q).tv; }

struct DecayFit {
    double lambda_hat = 0.0;
    double K_hat = 0.0;
    double r2 = 0.0;
    std::size_t used = 0;
};

/// Least squares fit of log tv = log K - lambda t over the points with tv above `floor`.
inline DecayFit decay_fit(const std::vector<double>& times, const std::vector<double>& tvs, double floor = 0.0) {
    if (times.size() != tvs.size()) throw std::invalid_argument("decay_fit: length mismatch");
    std::vector<double> t, y;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (tvs[i] > floor && tvs[i] > 0.0) {
            t.push_back(times[i]);
            y.push_back(std::log(tvs[i]));
        }
    }
    if (t.size() < 3) throw std::invalid_argument("decay_fit: fewer than 3 usable points");
    double n = static_cast<double>(t.size());
    double mt = 0, my = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        mt += t[i];
        my += y[i];
    }
    mt /= n;
    my /= n;
    double stt = 0, sty = 0, syy = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        stt += (t[i] - mt) * (t[i] - mt);
        sty += (t[i] - mt) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (stt == 0.0) throw std::invalid_argument("decay_fit: times must not all coincide");
    double slope = sty / stt;
    DecayFit f;
    f.lambda_hat = -slope;
    f.K_hat = std::exp(my - slope * mt);
    f.r2 = syy > 0.0 ? (sty * sty) / (stt * syy) : 1.0;
    f.used = t.size();
    return f;
}

// ---------------------------------------------------------------------------------------------
// Explicit coupling-time bound

/// e^{-A(R)} * integral of b(u) exp(-integral_0^u b(R+s) ds) du over u >= 0.
inline double p_R_lower_bound(const RatePair& p, double R) {
    if (R < 0.0) throw std::domain_error("p_R_lower_bound: R must be >= 0");
    double bR = p.b.integral(R);
    auto surv = [&](double u) { return std::exp(-(p.b.integral(R + u) - bR)); };
    auto f = [&](double u) { return p.b(u) * surv(u); };
    // b(u) <= b(R + u), so the tail over [L, inf) is at most surv(L).
    double integral = integrate_to_infinity(f, 0.0, surv, 1e-12, 1e-14);
    return std::exp(-p.a.integral(R)) * integral;
}

/// Smallest lambda > 0 with (alpha+1) lambda >= b(R)(1 - e^{-(abar + (alpha-1) lambda) R}) -
/// ((alpha+1)/(alpha-1)) abar, or nothing when the search is infeasible at this R.
inline std::optional<double> lambda_c_search(const RatePair& p, double R, double alpha) {
    if (!(alpha > 1.0)) throw std::domain_error("lambda_c_search: alpha must be > 1");
    double abar = p.a_upper();
    double bR = p.b(R);
    double k = (alpha + 1.0) / (alpha - 1.0);
    auto g = [&](double lam) {
        return bR * (1.0 - std::exp(-(abar + (alpha - 1.0) * lam) * R)) - k * abar - (alpha + 1.0) * lam;
    };
    if (!(g(0.0) > 0.0)) return std::nullopt;
    double hi = bR / (alpha + 1.0);
    return bisect(g, 0.0, hi, 1e-10);
}

struct Admissibility {
    bool admissible = false;
    double product = kInf;
    double eta = 0.0;
};

/// phi_{(R,+1)}(beta + lambda) * phi_{(R,-1)}(lambda - beta) < 1, with eta = 1 / product.
inline Admissibility admissibility_and_eta(const RatePair& p, double R, double lambda, double beta) {
    if (!(lambda < beta)) throw std::domain_error("admissibility: need lambda < beta");
    if (!(lambda + beta < p.b_upper())) throw std::domain_error("admissibility: need lambda + beta < sup b");
    Admissibility a;
    a.product = laplace_jump(p, R, Velocity::plus, beta + lambda) * laplace_jump(p, R, Velocity::minus, lambda - beta);
    a.admissible = a.product < 1.0;
    a.eta = a.admissible ? 1.0 / a.product : 0.0;
    return a;
}

struct EREstimate {
    double value = 0.0;  ///< max over the grid of mean + standard error
    double argmax = 0.0;
    std::vector<double> grid;
    std::vector<double> means;
    std::vector<double> ses;
};

/// Monte Carlo estimate of sup over y in [0, R] of E_y[e^{gamma T(y,+1)} 1{first attempt fails}]
/// on a 33-point grid with n / 33 replicas per point.
inline EREstimate E_R_estimate(const RatePair& p, double R, double gamma, std::size_t n, std::uint64_t seed) {
    const std::size_t points = 33;
    std::size_t per = std::max<std::size_t>(2, n / points);
    EREstimate e;
    e.value = -kInf;
    for (std::size_t k = 0; k < points; ++k) {
        double y = R * static_cast<double>(k) / static_cast<double>(points - 1);
        Stream rng(seed, k);
        MeanSe acc;
        for (std::size_t i = 0; i < per; ++i) {
            StickAttempt s = stick_attempt(p, y, rng);
            acc.add(s.success() ? 0.0 : std::exp(gamma * s.u_plus));
        }
        e.grid.push_back(y);
        e.means.push_back(acc.mean());
        e.ses.push_back(acc.se());
        if (acc.mean() + acc.se() > e.value) {
            e.value = acc.mean() + acc.se();
            e.argmax = y;
        }
    }
    return e;
}

struct BoundParams {
    double R = 0.0;
    double lambda = 0.0;
    double beta = 0.0;
    double alpha = 0.0;
    double eta = 0.0;
    double pR = 0.0;
    double ER = 0.0;
    double bound = kInf;
    bool admissible = false;
};

/// e^{beta x 1{x > R}} phi_{(0,+1)}(lambda) phi_{(R,-1)}(lambda) / (1 - E_R(lambda + beta)).
inline double coupling_time_bound(const RatePair& p, double x, const BoundParams& b) {
    if (!b.admissible) throw std::domain_error("coupling_time_bound: parameters are not admissible");
    if (!(b.ER < 1.0)) throw std::domain_error("coupling_time_bound: E_R(lambda + beta) must be < 1");
    double lead = x > b.R ? std::exp(b.beta * x) : 1.0;
    return lead * laplace_jump(p, 0.0, Velocity::plus, b.lambda) * laplace_jump(p, b.R, Velocity::minus, b.lambda) /
           (1.0 - b.ER);
}

/// Searches (R, lambda, beta) for alpha in `alphas`, then evaluates the bound at crossing height x.
/// `full_rate_cap` keeps lambda + beta / 2 below the given value (needed by full_coupling_time_bound).
inline BoundParams search_bound_params(const RatePair& p, double x, std::size_t n, std::uint64_t seed,
                                       std::vector<double> alphas = {2.0, 3.0, 5.0}, double R_step = 0.25,
                                       double R_max = 20.0, double full_rate_cap = kInf) {
    BoundParams best;
    std::size_t n_search = std::max<std::size_t>(n / 5, 3300);
    for (double alpha : alphas) {
        for (double R = R_step; R <= R_max + 1e-12; R += R_step) {
            auto lc = lambda_c_search(p, R, alpha);
            if (!lc) continue;
            double cap = *lc;
            double ub = p.b_upper();
            if (std::isfinite(ub)) cap = std::min(cap, 0.999 * ub / (alpha + 1.0));
            auto failing = [&](double lam) {
                return E_R_estimate(p, R, (alpha + 1.0) * lam, n_search, seed).value >= 1.0;
            };
            double lpc = cap;
            if (failing(cap)) {
                if (failing(0.0)) continue;
                lpc = bisect([&](double lam) { return failing(lam) ? -1.0 : 1.0; }, 0.0, cap, 1e-6);
            }
            double lambda = 0.5 * std::min(*lc, lpc);
            lambda = std::min(lambda, 0.99 * full_rate_cap / (1.0 + 0.5 * alpha));
            double beta = alpha * lambda;
            if (!(lambda > 0.0) || !(lambda + beta < ub)) continue;
            Admissibility adm = admissibility_and_eta(p, R, lambda, beta);
            if (!adm.admissible) continue;
            EREstimate er = E_R_estimate(p, R, lambda + beta, n, seed + 1);
            if (!(er.value < 1.0)) continue;
            BoundParams cand{R, lambda, beta, alpha, adm.eta, p_R_lower_bound(p, R), er.value, kInf, true};
            cand.bound = coupling_time_bound(p, x, cand);
            if (!best.admissible || cand.lambda > best.lambda) best = cand;
            break;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------------------------
// Hitting-time bound (Lyapunov function e^{alpha x + beta v})

struct LyapunovParameters {
    double M = 0.0;
    double alpha = 0.0;  ///< (b(M) - a(M)) / 2
    double beta = 0.0;   ///< (log b(M) - log a(M)) / 4
    double rho = 0.0;    ///< (sqrt b(M) - sqrt a(M))^2 / 2
};

inline LyapunovParameters lyapunov_parameters(const RatePair& p, double M) {
    double a = p.a(M), b = p.b(M);
    double d = std::sqrt(b) - std::sqrt(a);
    return {M, 0.5 * (b - a), 0.25 * (std::log(b) - std::log(a)), 0.5 * d * d};
}

/// sqrt(b(M)/a(M)) e^{M (sqrt b(M) - sqrt a(M))^2} (1 - e^{-A(M)}).
inline double hitting_condition(const RatePair& p, double M) {
    double a = p.a(M), b = p.b(M);
    double d = std::sqrt(b) - std::sqrt(a);
    return std::sqrt(b / a) * std::exp(M * d * d) * (1.0 - std::exp(-p.a.integral(M)));
}

/// Largest grid point M with hitting_condition(M) < 1, or nothing.
inline std::optional<double> find_M_c(const RatePair& p, double step = 0.01, double extent = 50.0) {
    std::optional<double> best;
    auto n = static_cast<std::size_t>(std::llround(extent / step));
    for (std::size_t i = 1; i <= n; ++i) {
        double M = static_cast<double>(i) * step;
        if (hitting_condition(p, M) < 1.0) best = M;
    }
    return best;
}

struct HittingBound {
    LyapunovParameters lyapunov;
    double phi_bar = kInf;  ///< bound on E[e^{lambda Z(M,-1)}]
    double C = kInf;
    double bound = kInf;
};

/// Bound C e^{(x v M)(b(M) - a(M))/2} on E[e^{lambda Z(x, v)}] for both velocities.
inline HittingBound hitting_bound(const RatePair& p, double x, double lambda, double step = 0.01) {
    if (lambda < 0.0) throw std::domain_error("hitting_bound: lambda must be >= 0");
    auto M = find_M_c(p, step);
    if (!M) throw std::domain_error("hitting_bound: no admissible M on the grid");
    HittingBound h;
    h.lyapunov = lyapunov_parameters(p, *M);
    const auto& L = h.lyapunov;
    if (lambda > L.rho) throw std::domain_error("hitting_bound: lambda exceeds the Lyapunov rate at M_c");
    double q = 1.0 - std::exp(-p.a.integral(L.M));
    double ratio = L.rho > 0.0 ? lambda / L.rho : 0.0;
    double denom = 1.0 - q * std::exp(2.0 * (lambda * L.M + L.beta * ratio));
    if (!(denom > 0.0)) throw std::domain_error("hitting_bound: renewal bound diverges");
    h.phi_bar = std::exp(-p.a.integral(L.M)) * std::exp(lambda * L.M) / denom;
    h.C = std::exp(lambda * L.M) * std::exp(2.0 * L.beta * ratio) * h.phi_bar * std::exp(-L.alpha * L.M);
    h.bound = h.C * std::exp(L.alpha * std::max(x, L.M));
    return h;
}

struct DriftReport {
    double M = 0.0;
    double target = 0.0;  ///< -rho(M)
    std::vector<double> grid;
    std::vector<double> ratio_plus;
    std::vector<double> ratio_minus;
    double sup_plus = -kInf;
    double sup_minus = -kInf;
};

/// Evaluates L f / f for f = e^{alpha x + beta v} on the grid {M, M + step, ..., x_max}.
inline DriftReport lyapunov_drift_check(const RatePair& p, double M, double alpha, double beta, double x_max,
                                        double step = 0.01) {
    DriftReport r;
    r.M = M;
    r.target = -lyapunov_parameters(p, M).rho;
    auto n = static_cast<std::size_t>(std::floor((x_max - M) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) {
        double x = M + static_cast<double>(i) * step;
        double rp = alpha - p.b(x) * (1.0 - std::exp(-2.0 * beta));
        double rm = -alpha + p.a(x) * (std::exp(2.0 * beta) - 1.0);
        r.grid.push_back(x);
        r.ratio_plus.push_back(rp);
        r.ratio_minus.push_back(rm);
        r.sup_plus = std::max(r.sup_plus, rp);
        r.sup_minus = std::max(r.sup_minus, rm);
    }
    return r;
}

/// Bound on E[e^{lambda T_*}] for the full reflected coupling from (x, v) above (x_tilde, v~):
/// the stick bound at the crossing point combined with the hitting bound for the upper path.
/// Uses X_{T_c} <= (Z + x_tilde) / 2.
inline double full_coupling_time_bound(const RatePair& p, double x, double x_tilde, const BoundParams& b) {
    if (!b.admissible || !(b.ER < 1.0)) throw std::domain_error("full_coupling_time_bound: inadmissible parameters");
    auto M = find_M_c(p);
    if (!M) throw std::domain_error("full_coupling_time_bound: no admissible M on the grid");
    if (!(b.lambda + 0.5 * b.beta < lyapunov_parameters(p, *M).rho)) {
        throw std::domain_error("full_coupling_time_bound: need lambda + beta / 2 < rho(M_c)");
    }
    double k = laplace_jump(p, 0.0, Velocity::plus, b.lambda) * laplace_jump(p, b.R, Velocity::minus, b.lambda) /
               (1.0 - b.ER);
    HittingBound h = hitting_bound(p, x, b.lambda + 0.5 * b.beta);
    return k * std::exp(0.5 * b.beta * x_tilde) * h.bound;
}

}  // namespace pdmp
