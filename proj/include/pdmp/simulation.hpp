#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "jump_sampler.hpp"
#include "trajectory.hpp"

namespace pdmp {

/// Raised when a run exceeds its event or iteration budget.
struct GuardError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kDefaultEventGuard = 100'000'000;

/// Folds an unreflected state (y, w) to (|y|, w sgn(y)).
inline State fold(const State& s) {
    return {std::abs(s.position), s.position < 0.0 ? flipped(s.velocity) : s.velocity, s.clock};
}

/// Event-driven walker for the reflected process. Advancing never stores history unless asked.
class ReflectedWalker {
public:
    ReflectedWalker(const RatePair& p, State s, std::uint64_t guard = kDefaultEventGuard)
        : pair_(&p), x_(s.position), v_(s.velocity), t_(s.clock), guard_(guard) {
        if (x_ < 0.0) throw std::domain_error("reflected state needs position >= 0");
    }

    double position() const { return x_; }
    Velocity velocity() const { return v_; }
    double clock() const { return t_; }
    std::uint64_t events() const { return count_; }
    State state() const { return {x_, v_, t_}; }

    /// Time of the next switch; draws it on first call after each switch.
    double next_event_time(Stream& rng) {
        if (!pending_) {
            draw_ = draw_jump(*pair_, x_, v_, rng);
            pending_ = true;
        }
        return t_ + draw_.duration;
    }

    /// Overrides the pending inter-event duration (used to continue with an already drawn time).
    void set_pending(JumpDraw d) {
        draw_ = d;
        pending_ = true;
    }

    /// Moves to the next switch and returns it.
    Event step(Stream& rng) {
        double te = next_event_time(rng);
        Event e;
        e.time = te;
        if (draw_.hits_origin) {
            x_ = 0.0;
            e.kind = EventKind::origin;
        } else {
            x_ = x_ + value(v_) * draw_.duration;
            if (x_ < 0.0) x_ = 0.0;
            e.kind = EventKind::jump;
        }
        v_ = flipped(v_);
        t_ = te;
        e.position = x_;
        e.velocity = v_;
        pending_ = false;
        if (++count_ > guard_) throw GuardError("event guard exceeded");
        return e;
    }

    /// Advances to absolute time t (no switch at t itself is performed unless it is due at t).
    /// Every switch on the way is passed to `sink`.
    template <class Sink>
    void advance_to(double t, Stream& rng, Sink&& sink) {
        while (next_event_time(rng) <= t) sink(step(rng));
        x_ = x_ + value(v_) * (t - t_);
        if (x_ < 0.0) x_ = 0.0;
        draw_.duration -= t - t_;
        if (draw_.duration < 0.0) draw_.duration = 0.0;
        t_ = t;
    }

    void advance_to(double t, Stream& rng) {
        advance_to(t, rng, [](const Event&) {});
    }

    /// Drops the pending draw. Valid by memorylessness whenever the draw is not conditioned on.
    void forget_pending() { pending_ = false; }

private:
    const RatePair* pair_;
    double x_;
    Velocity v_;
    double t_;
    JumpDraw draw_{};
    bool pending_ = false;
    std::uint64_t count_ = 0;
    std::uint64_t guard_;
};

/// Reflected path started from |y| with the sign of y tracked; yields the unreflected state.
class UnreflectedWalker {
public:
    UnreflectedWalker(const RatePair& p, State s, std::uint64_t guard = kDefaultEventGuard)
        : inner_(p, fold(s), guard), sign_(sgn(s.position)) {}

    State state() const {
        return {sign_ * inner_.position(), sign_ < 0 ? flipped(inner_.velocity()) : inner_.velocity(), inner_.clock()};
    }
    std::uint64_t jumps() const { return jumps_; }

    template <class Sink>
    void advance_to(double t, Stream& rng, Sink&& sink) {
        inner_.advance_to(t, rng, [&](const Event& e) {
            if (e.kind == EventKind::origin) {
                sign_ = -sign_;
                return;
            }
            ++jumps_;
            sink(Event{e.time, sign_ * e.position, sign_ < 0 ? flipped(e.velocity) : e.velocity, EventKind::jump});
        });
    }

    void advance_to(double t, Stream& rng) {
        advance_to(t, rng, [](const Event&) {});
    }

    ReflectedWalker& reflected() { return inner_; }
    double sign() const { return sign_; }

private:
    ReflectedWalker inner_;
    double sign_;
    std::uint64_t jumps_ = 0;
};

/// Unreflected path from a reflected one started at |y0| = initial position.
inline Trajectory unreflect(const Trajectory& tr, double y0) {
    if (tr.flavor != Flavor::reflected) throw std::invalid_argument("unreflect: expects a reflected trajectory");
    if (std::abs(y0) != tr.initial.position) throw std::invalid_argument("unreflect: |y0| must equal the initial position");
    double s = sgn(y0);
    Trajectory out;
    out.flavor = Flavor::unreflected;
    out.horizon = tr.horizon;
    out.initial = {y0, s < 0 ? flipped(tr.initial.velocity) : tr.initial.velocity, tr.initial.clock};
    out.events.reserve(tr.events.size());
    for (const auto& e : tr.events) {
        if (e.kind == EventKind::origin) {
            s = -s;
            continue;
        }
        out.events.push_back({e.time, s * e.position, s < 0 ? flipped(e.velocity) : e.velocity, e.kind});
    }
    return out;
}

/// Reflected path (|Y|, W sgn(Y)) of an unreflected one; zero crossings become origin events.
inline Trajectory reflect(const Trajectory& tr) {
    if (tr.flavor != Flavor::unreflected) throw std::invalid_argument("reflect: expects an unreflected trajectory");
    Trajectory out;
    out.flavor = Flavor::reflected;
    out.horizon = tr.horizon;
    out.initial = fold(tr.initial);
    double t = tr.initial.clock;
    double y = tr.initial.position;
    Velocity w = tr.initial.velocity;
    auto crossing = [&](double t_next, bool inclusive) {
        bool toward = (y >= 0.0) ? w == Velocity::minus : w == Velocity::plus;
        if (!toward) return;
        double tc = t + std::abs(y);
        if (tc < t_next || (inclusive && tc <= t_next)) out.events.push_back({tc, 0.0, Velocity::plus, EventKind::origin});
    };
    for (const auto& e : tr.events) {
        crossing(e.time, false);
        out.events.push_back({e.time, std::abs(e.position), e.position < 0.0 ? flipped(e.velocity) : e.velocity, e.kind});
        t = e.time;
        y = e.position;
        w = e.velocity;
    }
    crossing(tr.horizon, true);
    return out;
}

/// Simulates over [initial.clock, initial.clock + horizon].
inline Trajectory simulate(const RatePair& p, const State& initial, double horizon, Flavor flavor, Stream& rng,
                           std::uint64_t guard = kDefaultEventGuard) {
    if (horizon < 0.0) throw std::domain_error("simulate: horizon must be >= 0");
    State start = flavor == Flavor::reflected ? initial : fold(initial);
    if (start.position < 0.0) throw std::domain_error("simulate: reflected position must be >= 0");
    Trajectory refl;
    refl.flavor = Flavor::reflected;
    refl.initial = start;
    refl.horizon = initial.clock + horizon;
    ReflectedWalker walker(p, start, guard);
    walker.advance_to(refl.horizon, rng, [&](const Event& e) { refl.events.push_back(e); });
    if (flavor == Flavor::reflected) return refl;
    return unreflect(refl, initial.position);
}

/// First time the reflected process started at `start` reaches 0 with velocity -1.
inline double hitting_time_zero(const RatePair& p, const State& start, Stream& rng,
                                std::uint64_t guard = kDefaultEventGuard) {
    ReflectedWalker w(p, start, guard);
    for (;;) {
        Event e = w.step(rng);
        if (e.kind == EventKind::origin) return e.time - start.clock;
    }
}

/// Closed-form E[exp(lambda Z(x, v))] for constant rates a < b; +inf beyond the critical exponent.
inline double constant_rate_hitting_laplace(double a, double b, double x, Velocity v, double lambda) {
    if (!(b > a && a > 0.0)) throw std::domain_error("constant_rate_hitting_laplace: need 0 < a < b");
    double lc = 0.5 * (std::sqrt(b) - std::sqrt(a)) * (std::sqrt(b) - std::sqrt(a));
    if (lambda > lc) return kInf;
    double s = a + b - 2.0 * lambda;
    double disc = std::max(0.0, s * s - 4.0 * a * b);
    double c = 0.5 * (b - a - std::sqrt(disc));
    double base = std::exp(x * c);
    if (v == Velocity::minus) return base;
    double psi = (s - std::sqrt(disc)) / (2.0 * a);
    return psi * base;
}

inline double critical_hitting_exponent(double a, double b) {
    return 0.5 * (std::sqrt(b) - std::sqrt(a)) * (std::sqrt(b) - std::sqrt(a));
}

}  // namespace pdmp
