#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "numerics.hpp"

namespace pdmp {

enum class Velocity : std::int8_t { minus = -1, plus = 1 };

inline double value(Velocity v) { return v == Velocity::plus ? 1.0 : -1.0; }
inline Velocity flipped(Velocity v) { return v == Velocity::plus ? Velocity::minus : Velocity::plus; }
inline Velocity velocity_of(double s) { return s < 0.0 ? Velocity::minus : Velocity::plus; }
inline Velocity velocity_from_int(int w) {
    if (w != 1 && w != -1) throw std::invalid_argument("velocity must be +1 or -1");
    return w > 0 ? Velocity::plus : Velocity::minus;
}

enum class Flavor { reflected, unreflected };

inline const char* to_string(Flavor f) { return f == Flavor::reflected ? "reflected" : "unreflected"; }

struct State {
    double position = 0.0;
    Velocity velocity = Velocity::plus;
    double clock = 0.0;

    friend bool operator==(const State&, const State&) = default;
};

/// A velocity switch. `origin` is a reflection at 0 of the reflected process and never appears in
/// unreflected trajectories. `mark` is a bookkeeping row without a switch (written where two
/// coupled paths merge).
enum class EventKind : std::uint8_t { jump, origin, mark };

struct Event {
    double time = 0.0;
    double position = 0.0;
    Velocity velocity = Velocity::plus;  ///< velocity right after the event
    EventKind kind = EventKind::jump;

    friend bool operator==(const Event&, const Event&) = default;
};

/// Piecewise-linear path with unit speed. Velocity is right-continuous.
struct Trajectory {
    State initial;
    std::vector<Event> events;
    double horizon = 0.0;  ///< absolute end time
    Flavor flavor = Flavor::reflected;

    /// State at absolute time t in [initial.clock, horizon].
    State at(double t) const {
        double t0 = initial.clock;
        double y = initial.position;
        Velocity v = initial.velocity;
        std::size_t lo = 0, hi = events.size();
        while (lo < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (events[mid].time <= t) lo = mid + 1; else hi = mid;
        }
        if (lo > 0) {
            const Event& e = events[lo - 1];
            t0 = e.time;
            y = e.position;
            v = e.velocity;
        }
        return {y + value(v) * (t - t0), v, t};
    }

    double position_at(double t) const { return at(t).position; }
    Velocity velocity_at(double t) const { return at(t).velocity; }

    State final_state() const { return at(horizon); }
};

namespace detail {
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}
}  // namespace detail

/// CSV with header `t,position,velocity`: the initial state, one row per event, and the horizon.
inline void write_csv(std::ostream& os, const Trajectory& tr) {
    os << "t,position,velocity\n";
    auto row = [&](double t, double y, Velocity v) {
        os << detail::fmt17(t) << ',' << detail::fmt17(y) << ',' << static_cast<int>(v) << '\n';
    };
    row(tr.initial.clock, tr.initial.position, tr.initial.velocity);
    for (const auto& e : tr.events) row(e.time, e.position, e.velocity);
    State end = tr.final_state();
    row(tr.horizon, end.position, end.velocity);
}

}  // namespace pdmp
