#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "jump_sampler.hpp"
#include "numerics.hpp"
#include "simulation.hpp"

namespace pdmp {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct CouplingOutcome {
    double t_crossing = 0.0;
    double x_crossing = 0.0;
    double t_star = 0.0;
    std::size_t attempts = 0;
    Flavor flavor = Flavor::reflected;
    /// First time the path that started higher reaches 0 (reflected runs with tracking on).
    double z_upper = kNaN;
    double upper_start = 0.0;
    double lower_start = 0.0;
    /// First origin visit of the merged path at or after t_star (when requested).
    double common_origin_time = kNaN;
    /// Passes through the fold / couple / window loop (unreflected runs).
    std::size_t outer_iterations = 0;
};

struct CouplingOptions {
    /// Record both paths up to this absolute time; negative disables recording.
    double record_until = -1.0;
    bool track_upper_hitting = false;
    bool stop_at_common_origin = false;
    std::uint64_t event_guard = kDefaultEventGuard;
    std::size_t max_attempts = 10'000'000;
    std::size_t max_outer_iterations = 1'000'000;
};

struct CoupledRun {
    CouplingOutcome outcome;
    Trajectory first;
    Trajectory second;
};

/// One attempt of the stick scheme from two paths at height x with opposite velocities.
struct StickAttempt {
    double height = 0.0;
    double u_plus = 0.0;   ///< ascent of the rising path
    double l_minus = 0.0;  ///< descent of the falling path
    bool l_hits_origin = false;
    double xi_parameter = 0.0;
    double chi_parameter = 0.0;
    bool xi = false;
    bool chi = false;
    std::optional<JumpDraw> up_overshoot;    ///< present iff xi
    std::optional<JumpDraw> down_overshoot;  ///< present iff chi

    bool success() const { return xi != chi; }
    double elapsed() const { return u_plus + l_minus; }
    double next_height() const { return height + u_plus - l_minus; }
};

/// Stick attempt with given first draws: an ascent from x and a descent from x.
inline StickAttempt stick_attempt_from(const RatePair& p, double x, JumpDraw up, JumpDraw down, Stream& rng) {
    StickAttempt s;
    s.height = x;
    s.u_plus = up.duration;
    s.l_minus = down.duration;
    s.l_hits_origin = down.hits_origin;
    double corner = x + s.u_plus - s.l_minus;
    double b_top = p.b(x + s.u_plus);
    s.xi_parameter = (b_top - p.b(corner)) / b_top;
    if (s.l_hits_origin) {
        s.chi_parameter = 1.0;
    } else {
        double a_low = p.a(x - s.l_minus);
        s.chi_parameter = (a_low - p.a(corner)) / a_low;
    }
    s.xi = rng.bernoulli(s.xi_parameter);
    s.chi = s.l_hits_origin || rng.bernoulli(s.chi_parameter);
    if (s.xi) s.up_overshoot = draw_jump(p, corner, Velocity::plus, rng);
    if (s.chi) s.down_overshoot = draw_jump(p, corner, Velocity::minus, rng);
    return s;
}

inline StickAttempt stick_attempt(const RatePair& p, double x, Stream& rng) {
    if (x < 0.0) throw std::domain_error("stick_attempt: height must be >= 0");
    JumpDraw up = draw_jump(p, x, Velocity::plus, rng);
    JumpDraw down = draw_jump(p, x, Velocity::minus, rng);
    return stick_attempt_from(p, x, up, down, rng);
}

/// The chain of heights Phi_n, durations sigma_n and marks until the first success.
struct StickChain {
    std::vector<double> phi;
    std::vector<double> sigma;
    std::vector<bool> xi;
    std::vector<bool> chi;
    std::vector<bool> kappa;
    std::size_t rho = 0;  ///< index (1-based) of the first success
    double t_star = 0.0;  ///< sum of sigma_1..sigma_rho
};

inline StickChain run_stick_chain(const RatePair& p, double x, Stream& rng, std::size_t max_attempts = 10'000'000) {
    StickChain chain;
    chain.phi.push_back(x);
    std::optional<JumpDraw> up, down;
    for (std::size_t n = 1;; ++n) {
        if (n > max_attempts) throw GuardError("stick chain: attempt guard exceeded");
        JumpDraw u = up ? *up : draw_jump(p, x, Velocity::plus, rng);
        JumpDraw d = down ? *down : draw_jump(p, x, Velocity::minus, rng);
        StickAttempt s = stick_attempt_from(p, x, u, d, rng);
        chain.sigma.push_back(s.elapsed());
        chain.xi.push_back(s.xi);
        chain.chi.push_back(s.chi);
        chain.kappa.push_back(s.success());
        chain.t_star += s.elapsed();
        x = s.next_height();
        chain.phi.push_back(x);
        if (s.success()) {
            chain.rho = n;
            return chain;
        }
        up = s.up_overshoot;
        down = s.down_overshoot;
    }
}

namespace detail {

struct PathLog {
    std::vector<Event> events;
    double first_origin = kNaN;
    bool recording = false;

    void push(const Event& e) {
        if (e.kind == EventKind::origin && std::isnan(first_origin)) first_origin = e.time;
        if (recording) events.push_back(e);
    }
};

inline Trajectory finish(const State& initial, std::vector<Event> events, double horizon, Flavor flavor) {
    Trajectory tr;
    tr.initial = initial;
    tr.flavor = flavor;
    tr.horizon = horizon;
    while (!events.empty() && events.back().time > horizon) events.pop_back();
    tr.events = std::move(events);
    return tr;
}

}  // namespace detail

struct CrossingResult {
    double time = 0.0;
    double position = 0.0;
    bool identical = false;  ///< the paths already coincide; no crossing phase needed
    int rising = 0;          ///< index of the path moving up right after the crossing
};

/// Runs two independent reflected paths until they meet. Touching with equal velocities only
/// happens at the start (then `identical` is set); later meetings always have opposite velocities.
inline CrossingResult crossing(const RatePair& p, const State& s0, const State& s1, Stream& rng,
                               detail::PathLog* logs = nullptr, std::uint64_t guard = kDefaultEventGuard) {
    std::array<ReflectedWalker, 2> w{ReflectedWalker(p, s0, guard), ReflectedWalker(p, s1, guard)};
    double t = s0.clock;
    for (;;) {
        double x0 = w[0].position(), x1 = w[1].position();
        int up = x0 >= x1 ? 0 : 1;
        int lo = 1 - up;
        double gap = std::abs(x0 - x1);
        Velocity vu = w[up].velocity(), vl = w[lo].velocity();
        if (gap == 0.0 && t == s0.clock) {
            if (vu == vl) return {t, x0, true, 0};
            return {t, x0, false, vu == Velocity::plus ? up : lo};
        }
        double tn = std::min(w[0].next_event_time(rng), w[1].next_event_time(rng));
        if (vu == Velocity::minus && vl == Velocity::plus) {
            double tm = t + 0.5 * gap;
            if (tm < tn) {
                double xm = 0.5 * (w[up].position() + w[lo].position());
                return {tm, xm, false, lo};
            }
        }
        for (int i = 0; i < 2; ++i) {
            w[i].advance_to(tn, rng, [&](const Event& e) {
                if (logs) logs[i].push(e);
            });
        }
        t = tn;
    }
}

/// Couples two reflected paths: independent until they cross, then the stick scheme.
inline CoupledRun couple_reflected(const RatePair& p, State s0, State s1, Stream& rng,
                                   const CouplingOptions& opt = {}) {
    if (s0.position < 0.0 || s1.position < 0.0) throw std::domain_error("couple_reflected: positions must be >= 0");
    if (s0.clock != s1.clock) throw std::invalid_argument("couple_reflected: both paths must start at the same time");
    const double t0 = s0.clock;
    detail::PathLog log[2];
    log[0].recording = log[1].recording = opt.record_until >= t0 || opt.stop_at_common_origin;
    const State initial[2] = {s0, s1};

    // A path at (0, -1) reflects at once.
    State st[2] = {s0, s1};
    for (int i = 0; i < 2; ++i) {
        if (st[i].position == 0.0 && st[i].velocity == Velocity::minus) {
            log[i].push({t0, 0.0, Velocity::plus, EventKind::origin});
            st[i].velocity = Velocity::plus;
        }
    }

    CouplingOutcome out;
    out.flavor = Flavor::reflected;
    int upper = s0.position >= s1.position ? 0 : 1;
    out.upper_start = initial[upper].position;
    out.lower_start = initial[1 - upper].position;

    CrossingResult cr = crossing(p, st[0], st[1], rng, log, opt.event_guard);
    out.t_crossing = cr.time;
    out.x_crossing = cr.position;

    State common;
    std::optional<JumpDraw> pending;
    if (cr.identical) {
        out.t_star = cr.time;
        common = {cr.position, st[0].velocity, cr.time};
    } else {
        int rising = cr.rising;
        double x = cr.position;
        double t = cr.time;
        std::optional<JumpDraw> up, down;
        for (;;) {
            if (out.attempts >= opt.max_attempts) throw GuardError("couple_reflected: attempt guard exceeded");
            ++out.attempts;
            int falling = 1 - rising;
            JumpDraw u = up ? *up : draw_jump(p, x, Velocity::plus, rng);
            JumpDraw d = down ? *down : draw_jump(p, x, Velocity::minus, rng);
            StickAttempt s = stick_attempt_from(p, x, u, d, rng);
            double tc = t + s.elapsed();
            double y = s.next_height();
            log[rising].push({t + s.u_plus, x + s.u_plus, Velocity::minus, EventKind::jump});
            log[falling].push({t + s.l_minus, x - s.l_minus, Velocity::plus,
                               s.l_hits_origin ? EventKind::origin : EventKind::jump});
            if (!s.xi) log[falling].push({tc, y, Velocity::minus, EventKind::jump});
            if (!s.chi) log[rising].push({tc, y, Velocity::plus, EventKind::jump});
            t = tc;
            x = y;
            if (s.success()) {
                Velocity v = s.xi ? Velocity::plus : Velocity::minus;
                common = {y, v, tc};
                pending = s.xi ? s.up_overshoot : s.down_overshoot;
                for (auto& l : log) l.push({tc, y, v, EventKind::mark});
                break;
            }
            if (s.xi) rising = falling;
            up = s.up_overshoot;
            down = s.down_overshoot;
        }
        out.t_star = t;
    }

    // Merged continuation.
    ReflectedWalker cw(p, common, opt.event_guard);
    if (pending) cw.set_pending(*pending);
    for (;;) {
        bool rec = opt.record_until >= t0 && cw.next_event_time(rng) <= opt.record_until;
        bool track = opt.track_upper_hitting && std::isnan(log[upper].first_origin);
        bool origin = opt.stop_at_common_origin && std::isnan(out.common_origin_time);
        if (!(rec || track || origin)) break;
        Event e = cw.step(rng);
        for (auto& l : log) l.push(e);
        if (e.kind == EventKind::origin && std::isnan(out.common_origin_time)) out.common_origin_time = e.time;
    }
    if (opt.track_upper_hitting) out.z_upper = log[upper].first_origin - t0;

    CoupledRun run;
    run.outcome = out;
    if (log[0].recording) {
        double horizon = std::max(opt.record_until, opt.stop_at_common_origin ? out.common_origin_time : t0);
        run.first = detail::finish(initial[0], std::move(log[0].events), horizon, Flavor::reflected);
        run.second = detail::finish(initial[1], std::move(log[1].events), horizon, Flavor::reflected);
    }
    return run;
}

/// Maximal coupling of the one-jump / two-jump sub-laws of two unreflected paths started at
/// (0, -1) and (0, +1), over a window of length t.
class WindowCoupler {
public:
    WindowCoupler(const RatePair& p, double t, double tol = 1e-8) : pair_(p), t_(t) {
        if (!(t > 0.0)) throw std::domain_error("WindowCoupler: window must be positive");
        auto m = [&](double u) { return overlap(u); };
        epsilon_ = 2.0 * (integrate(m, -t_, 0.0, tol) + integrate(m, 0.0, t_, tol));
    }

    double window() const { return t_; }
    double epsilon() const { return epsilon_; }

    /// Density of f_{(0,+1)}.
    double f_up0(double s) const { return pair_.b(s) * std::exp(-pair_.b.integral(s)); }

    /// Density of the first jump time from (y, -1), y >= 0, unreflected.
    double f_down(double y, double s) const {
        if (s < y) return pair_.a(y - s) * std::exp(-(pair_.a.integral(y) - pair_.a.integral(y - s)));
        return std::exp(-pair_.a.integral(y)) * pair_.b(s - y) * std::exp(-pair_.b.integral(s - y));
    }

    /// P(no jump during tau) from (y, +1), unreflected, any sign of y.
    double survival_up(double y, double tau) const {
        if (y >= 0.0) return std::exp(-(pair_.b.integral(y + tau) - pair_.b.integral(y)));
        double z = y + tau;
        if (z < 0.0) return std::exp(-(pair_.a.integral(-y) - pair_.a.integral(-z)));
        return std::exp(-pair_.a.integral(-y) - pair_.b.integral(z));
    }

    /// Density at Y_t = u of {one jump before t} from (0, -1); then W_t = +1.
    double h_minus(double u) const {
        if (!(u > -t_ && u < t_)) return 0.0;
        double s = 0.5 * (t_ - u);
        return 0.5 * f_up0(s) * survival_up(-s, 0.5 * (t_ + u));
    }

    /// Density at Y_t = u of {two jumps before t} from (0, +1); then W_t = +1.
    double h_plus(double u) const {
        if (!(u > -t_ && u < t_)) return 0.0;
        double s2 = 0.5 * (t_ - u);
        double top = 0.5 * (t_ + u);
        auto g = [&](double s1) { return second_jump_integrand(s1, s2, top); };
        if (s2 > 0.0 && s2 < top) return integrate(g, 0.0, s2, 1e-12) + integrate(g, s2, top, 1e-12);
        return integrate(g, 0.0, top, 1e-12);
    }

    double overlap(double u) const { return std::min(h_minus(u), h_plus(u)); }

    struct Attempt {
        bool success = false;
        std::vector<Event> from_minus;  ///< events of the path started at (0, -1)
        std::vector<Event> from_plus;   ///< events of the path started at (0, +1)
        State end_minus;
        State end_plus;
    };

    /// One window attempt starting at absolute time `start`.
    Attempt attempt(double start, Stream& rng, std::uint64_t guard = kDefaultEventGuard) const {
        Attempt out;
        const double end = start + t_;
        auto run = [&](Velocity w, std::vector<Event>& events) {
            events.clear();
            UnreflectedWalker walker(pair_, {0.0, w, start}, guard);
            walker.advance_to(end, rng, [&](const Event& e) { events.push_back(e); });
            return std::pair<State, std::uint64_t>{walker.state(), walker.jumps()};
        };

        auto [sa, ka] = run(Velocity::minus, out.from_minus);
        // Sub-density of the matching component at the end point, and the common part.
        double q = 0.0, m = 0.0;
        if (sa.velocity == Velocity::plus && ka == 1) {
            q = h_minus(sa.position);
            m = overlap(sa.position);
        } else if (sa.velocity == Velocity::minus && ka == 2) {
            q = h_plus(-sa.position);
            m = overlap(-sa.position);
        }
        double u = rng.uniform();
        if (q > 0.0 && u < m / q) {
            out.success = true;
            out.end_minus = out.end_plus = sa;
            out.from_plus = bridge_from_plus(sa, start, rng);
            Event mark{end, sa.position, sa.velocity, EventKind::mark};
            out.from_minus.push_back(mark);
            out.from_plus.push_back(mark);
            return out;
        }
        out.end_minus = sa;
        for (std::uint64_t tries = 0;; ++tries) {
            if (tries > guard) throw GuardError("window coupling: rejection guard exceeded");
            auto [sb, kb] = run(Velocity::plus, out.from_plus);
            double qb = 0.0, mb = 0.0;
            if (sb.velocity == Velocity::plus && kb == 2) {
                qb = h_plus(sb.position);
                mb = overlap(sb.position);
            } else if (sb.velocity == Velocity::minus && kb == 1) {
                qb = h_minus(-sb.position);
                mb = overlap(-sb.position);
            }
            double keep = qb > 0.0 ? 1.0 - mb / qb : 1.0;
            if (rng.uniform() < keep) {
                out.end_plus = sb;
                return out;
            }
        }
    }

private:
    double second_jump_integrand(double s1, double s2, double top) const {
        return 0.5 * f_up0(s1) * f_down(s1, s2) * survival_up(s1 - s2, top - s1);
    }

    /// Path from (0, +1) conditioned on its end state, when that end state lies in the
    /// component paired with the (0, -1) path.
    std::vector<Event> bridge_from_plus(const State& end_state, double start, Stream& rng) const {
        std::vector<Event> ev;
        double u = end_state.position;
        if (end_state.velocity == Velocity::minus) {
            // One jump: up for s1, then down; u = 2 s1 - t.
            double s1 = 0.5 * (t_ + u);
            ev.push_back({start + s1, s1, Velocity::minus, EventKind::jump});
            return ev;
        }
        // Two jumps: s2 = (t - u) / 2 is fixed, s1 has density proportional to the integrand.
        double s2 = 0.5 * (t_ - u);
        double top = 0.5 * (t_ + u);
        auto g = [&](double s1) { return second_jump_integrand(s1, s2, top); };
        auto cum = [&](double x) {
            if (s2 > 0.0 && s2 < x) return integrate(g, 0.0, s2, 1e-13) + integrate(g, s2, x, 1e-13);
            return integrate(g, 0.0, x, 1e-13);
        };
        double total = cum(top);
        double target = rng.uniform() * total;
        double s1 = solve_increasing([&](double x) { return cum(x) - target; }, g, 0.0, top, 1e-12);
        ev.push_back({start + s1, s1, Velocity::minus, EventKind::jump});
        ev.push_back({start + s1 + s2, s1 - s2, Velocity::plus, EventKind::jump});
        return ev;
    }

    RatePair pair_;
    double t_;
    double epsilon_ = 0.0;
};

/// epsilon_t = 2 * integral of min(h_minus, h_plus) over (-t, t).
inline double epsilon_t(const RatePair& p, double t) { return WindowCoupler(p, t).epsilon(); }

/// Couples two unreflected paths: fold, couple the reflected copies, follow the merged copy to
/// the origin, and if the signs disagree try the window coupling; repeat on failure.
inline CoupledRun couple_unreflected(const RatePair& p, State s0, State s1, const WindowCoupler& wc, Stream& rng,
                                     const CouplingOptions& opt = {}) {
    if (s0.clock != s1.clock) throw std::invalid_argument("couple_unreflected: both paths must start at the same time");
    const double t0 = s0.clock;
    const State initial[2] = {s0, s1};
    std::vector<Event> ev[2];
    CouplingOutcome out;
    out.flavor = Flavor::unreflected;
    double t = t0;
    State cur[2] = {s0, s1};
    State common;
    bool first_pass = true;
    for (;;) {
        if (out.outer_iterations >= opt.max_outer_iterations) throw GuardError("couple_unreflected: iteration guard exceeded");
        ++out.outer_iterations;
        if (cur[0].position == cur[1].position && cur[0].velocity == cur[1].velocity) {
            out.t_star = t;
            common = cur[0];
            if (first_pass) {
                out.t_crossing = t;
                out.x_crossing = cur[0].position;
            }
            break;
        }
        CouplingOptions inner;
        inner.stop_at_common_origin = true;
        inner.event_guard = opt.event_guard;
        inner.max_attempts = opt.max_attempts;
        CoupledRun r = couple_reflected(p, fold(cur[0]), fold(cur[1]), rng, inner);
        out.attempts += r.outcome.attempts;
        if (first_pass) {
            out.t_crossing = r.outcome.t_crossing;
            out.x_crossing = r.outcome.x_crossing;
            first_pass = false;
        }
        double sigma = r.outcome.common_origin_time;
        Trajectory u0 = unreflect(r.first, cur[0].position);
        Trajectory u1 = unreflect(r.second, cur[1].position);
        Velocity w0 = u0.at(sigma).velocity, w1 = u1.at(sigma).velocity;
        bool merged = w0 == w1;
        for (int i = 0; i < 2; ++i) {
            for (const Event& e : (i == 0 ? u0 : u1).events) {
                // The reflected copies merge here but the signed paths are mirror images.
                if (e.kind == EventKind::mark && !merged) continue;
                ev[i].push_back(e);
            }
        }
        if (merged) {
            out.t_star = r.outcome.t_star;
            common = {0.0, w0, sigma};
            break;
        }
        int minus_idx = w0 == Velocity::minus ? 0 : 1;
        WindowCoupler::Attempt a = wc.attempt(sigma, rng, opt.event_guard);
        auto& em = ev[minus_idx];
        auto& ep = ev[1 - minus_idx];
        em.insert(em.end(), a.from_minus.begin(), a.from_minus.end());
        ep.insert(ep.end(), a.from_plus.begin(), a.from_plus.end());
        t = sigma + wc.window();
        cur[minus_idx] = a.end_minus;
        cur[1 - minus_idx] = a.end_plus;
        cur[0].clock = cur[1].clock = t;
        if (a.success) {
            out.t_star = t;
            common = cur[0];
            break;
        }
    }

    CoupledRun run;
    run.outcome = out;
    if (opt.record_until >= t0) {
        if (common.clock < opt.record_until) {
            UnreflectedWalker w(p, common, opt.event_guard);
            std::vector<Event> tail;
            w.advance_to(opt.record_until, rng, [&](const Event& e) { tail.push_back(e); });
            for (auto& v : ev) v.insert(v.end(), tail.begin(), tail.end());
        }
        run.first = detail::finish(initial[0], std::move(ev[0]), opt.record_until, Flavor::unreflected);
        run.second = detail::finish(initial[1], std::move(ev[1]), opt.record_until, Flavor::unreflected);
    }
    return run;
}

inline CoupledRun couple_unreflected(const RatePair& p, State s0, State s1, double window, Stream& rng,
                                     const CouplingOptions& opt = {}) {
    WindowCoupler wc(p, window);
    return couple_unreflected(p, s0, s1, wc, rng, opt);
}

}  // namespace pdmp
