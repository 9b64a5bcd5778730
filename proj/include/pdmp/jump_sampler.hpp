#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "random.hpp"
#include "rate_model.hpp"
#include "statistics.hpp"
#include "trajectory.hpp"

namespace pdmp {

/// Outcome of one inter-jump draw in the reflected frame. `hits_origin` is set when a descent
/// reaches 0 before the rate clock rings; then `duration` equals the starting height.
struct JumpDraw {
    double duration = 0.0;
    bool hits_origin = false;
};

/// Maps an Exp(1) variate to T(x, v) by inversion of the integrated rate.
inline JumpDraw jump_from_exponential(const RatePair& p, double x, Velocity v, double e) {
    if (x < 0.0) throw std::domain_error("jump time: position must be >= 0");
    if (v == Velocity::plus) return {p.b.forward_time(x, e), false};
    if (auto t = p.a.backward_time(x, e)) return {*t, false};
    return {x, true};
}

inline JumpDraw draw_jump(const RatePair& p, double x, Velocity v, Stream& rng) {
    return jump_from_exponential(p, x, v, rng.exponential());
}

/// T(x, v) sampled by inversion.
inline double sample_jump(const RatePair& p, double x, Velocity v, Stream& rng) {
    return draw_jump(p, x, v, rng).duration;
}

/// Law of T(x, v). For v = -1 the law has an atom of mass exp(-A(x)) at x.
class JumpLaw {
public:
    JumpLaw(const RatePair& p, double x, Velocity v) : pair_(p), x_(x), v_(v) {
        if (x < 0.0) throw std::domain_error("jump_law: position must be >= 0");
    }

    double position() const { return x_; }
    Velocity velocity() const { return v_; }

    double atom_mass() const { return v_ == Velocity::minus ? std::exp(-pair_.a.integral(x_)) : 0.0; }

    /// Right end of the support (infinite for ascents).
    double support_end() const { return v_ == Velocity::minus ? x_ : kInf; }

    /// Density of the absolutely continuous part.
    double density(double t) const {
        if (t < 0.0) return 0.0;
        if (v_ == Velocity::plus) return pair_.b(x_ + t) * survival(t);
        if (t >= x_) return 0.0;
        return pair_.a(x_ - t) * survival(t);
    }

    /// P(T > t).
    double survival(double t) const {
        if (t < 0.0) return 1.0;
        if (v_ == Velocity::plus) return std::exp(-(pair_.b.integral(x_ + t) - pair_.b.integral(x_)));
        if (t >= x_) return 0.0;
        return std::exp(-(pair_.a.integral(x_) - pair_.a.integral(x_ - t)));
    }

    double cdf(double t) const { return 1.0 - survival(t); }

private:
    RatePair pair_;
    double x_;
    Velocity v_;
};

inline JumpLaw jump_law(const RatePair& p, double x, Velocity v) { return JumpLaw(p, x, v); }

/// E[exp(lambda T(x, v))]. Returns +inf when the transform diverges.
inline double laplace_jump(const RatePair& p, double x, Velocity v, double lambda) {
    if (lambda == 0.0) return 1.0;
    JumpLaw law(p, x, v);
    if (v == Velocity::minus) {
        double atom = std::exp(lambda * x) * law.atom_mass();
        return atom + integrate([&](double t) { return std::exp(lambda * t) * law.density(t); }, 0.0, x, 1e-12);
    }
    if (lambda >= p.b_upper()) return kInf;
    // E[e^{lambda T}] = 1 + lambda * int e^{lambda t} P(T > t) dt.
    double z = 0.0;
    while (p.b(x + z) <= lambda) z = 2.0 * z + 1.0;
    double decay = p.b(x + z) - lambda;
    auto f = [&](double t) { return std::exp(lambda * t) * law.survival(t); };
    auto tail = [&](double L) {
        if (L < z) return kInf;
        return std::abs(lambda) * std::exp(lambda * L) * law.survival(L) / decay;
    };
    return 1.0 + lambda * integrate_to_infinity(f, 0.0, tail, 1e-12, 1e-13);
}

/// Joint draw of jump times from two ordered positions with the same velocity.
/// `lower_time` <= `upper_time`; the longer one equals the shorter plus `overshoot`, which is
/// nonzero only when `bernoulli_mark` is set.
struct CoupledJumpPair {
    double lower_time = 0.0;
    double upper_time = 0.0;
    bool bernoulli_mark = false;
    double mark_parameter = 0.0;
    double overshoot = 0.0;
    bool lower_hits_origin = false;   ///< descents only: the shorter draw is the atom
    bool upper_hits_origin = false;   ///< descents only: the longer draw ends at 0
};

/// Ascents from x >= x_tilde. lower_time is T(x, +1), upper_time is T(x_tilde, +1).
inline CoupledJumpPair coupled_pair_plus(const RatePair& p, double x, double x_tilde, Stream& rng) {
    if (!(x >= x_tilde && x_tilde >= 0.0)) throw std::domain_error("coupled_pair_plus: need x >= x_tilde >= 0");
    CoupledJumpPair out;
    double t = draw_jump(p, x, Velocity::plus, rng).duration;
    double bx = p.b(x + t);
    out.lower_time = t;
    out.mark_parameter = (bx - p.b(x_tilde + t)) / bx;
    out.bernoulli_mark = rng.bernoulli(out.mark_parameter);
    if (out.bernoulli_mark) out.overshoot = draw_jump(p, x_tilde + t, Velocity::plus, rng).duration;
    out.upper_time = t + out.overshoot;
    return out;
}

/// Descents from x > x_tilde > 0. lower_time is T(x_tilde, -1), upper_time is T(x, -1).
inline CoupledJumpPair coupled_pair_minus(const RatePair& p, double x, double x_tilde, Stream& rng) {
    if (!(x > x_tilde && x_tilde > 0.0)) throw std::domain_error("coupled_pair_minus: need x > x_tilde > 0");
    CoupledJumpPair out;
    JumpDraw d = draw_jump(p, x_tilde, Velocity::minus, rng);
    double t = d.duration;
    out.lower_time = t;
    out.lower_hits_origin = d.hits_origin;
    if (d.hits_origin) {
        out.mark_parameter = 1.0;
    } else {
        double at = p.a(x_tilde - t);
        out.mark_parameter = (at - p.a(x - t)) / at;
    }
    out.bernoulli_mark = d.hits_origin || rng.bernoulli(out.mark_parameter);
    if (out.bernoulli_mark) {
        JumpDraw extra = draw_jump(p, x - t, Velocity::minus, rng);
        out.overshoot = extra.duration;
        out.upper_hits_origin = extra.hits_origin;
    }
    out.upper_time = t + out.overshoot;
    return out;
}

struct OrderReport {
    double max_violation = 0.0;       ///< largest signed breach of the claimed ordering
    double max_abs_difference = 0.0;  ///< sup |F - G|
    double band = 0.0;                ///< two-sample DKW allowance
    bool holds = true;
};

/// Empirical check of T(x, +1) <= T(x_tilde, +1) (ascents) or T(x, -1) >= T(x_tilde, -1)
/// (descents) in the usual stochastic order, for x >= x_tilde.
inline OrderReport stochastic_order_check(const RatePair& p, double x, double x_tilde, Velocity v,
                                          std::size_t n, Stream& rng, double alpha = 0.01) {
    if (!(x >= x_tilde && x_tilde >= 0.0)) throw std::domain_error("stochastic_order_check: need x >= x_tilde >= 0");
    if (n == 0) throw std::invalid_argument("stochastic_order_check: n must be positive");
    std::vector<double> s(n), st(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = sample_jump(p, x, v, rng);
    for (std::size_t i = 0; i < n; ++i) st[i] = sample_jump(p, x_tilde, v, rng);
    std::sort(s.begin(), s.end());
    std::sort(st.begin(), st.end());
    // Ascents: F_x >= F_x_tilde is claimed. Descents: F_x <= F_x_tilde is claimed.
    OrderReport r;
    std::size_t i = 0, j = 0;
    double nn = static_cast<double>(n);
    while (i < n || j < n) {
        double t = (j >= n || (i < n && s[i] <= st[j])) ? s[i] : st[j];
        while (i < n && s[i] <= t) ++i;
        while (j < n && st[j] <= t) ++j;
        double fx = static_cast<double>(i) / nn;
        double fxt = static_cast<double>(j) / nn;
        double breach = v == Velocity::plus ? fxt - fx : fx - fxt;
        r.max_violation = std::max(r.max_violation, breach);
        r.max_abs_difference = std::max(r.max_abs_difference, std::abs(fx - fxt));
    }
    r.band = 2.0 * dkw_epsilon(n, alpha);
    r.holds = r.max_violation <= r.band;
    return r;
}

}  // namespace pdmp
