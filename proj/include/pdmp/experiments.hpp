#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "config.hpp"
#include "coupling.hpp"
#include "parallel.hpp"
#include "scaling.hpp"
#include "simulation.hpp"
#include "statistics.hpp"

namespace pdmp {

/// Where an experiment writes its files; an empty path disables file output.
struct OutputDir {
    std::filesystem::path dir;

    bool enabled() const { return !dir.empty(); }

    void write(const std::string& name, const std::string& content) const {
        if (!enabled()) return;
        std::filesystem::create_directories(dir);
        std::ofstream os(dir / name, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
        os << content;
    }
};

namespace detail {

inline json state_to_json(const State& s) { return {{"position", s.position}, {"velocity", static_cast<int>(s.velocity)}}; }

inline State state_param(const json& params, const char* key, State fallback) {
    return params.contains(key) ? parse_state(params.at(key)) : fallback;
}

inline std::vector<double> times_param(const json& params, const char* key, std::vector<double> fallback) {
    if (!params.contains(key)) return fallback;
    auto ts = numbers_at(params, key);
    if (ts.empty()) throw ConfigError(std::string("'") + key + "' must not be empty");
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (!(ts[i] >= 0.0) || (i > 0 && !(ts[i] > ts[i - 1]))) {
            throw ConfigError(std::string("'") + key + "' must be non-negative and strictly increasing");
        }
    }
    return ts;
}

inline void require_reflected_start(const State& s, Flavor f) {
    if (f == Flavor::reflected && s.position < 0.0) throw ConfigError("reflected runs need non-negative start positions");
}

/// Positions and velocities at each time in `times` for every replica.
inline std::vector<std::vector<State>> sample_states(const RatePair& p, const State& start, Flavor flavor,
                                                     const std::vector<double>& times, std::size_t n,
                                                     std::uint64_t seed, std::uint64_t guard = kDefaultEventGuard) {
    auto rows = run_replicas(n, seed, [&](std::size_t, Stream& rng) {
        std::vector<State> out;
        out.reserve(times.size());
        if (flavor == Flavor::reflected) {
            ReflectedWalker w(p, start, guard);
            for (double t : times) {
                w.advance_to(t, rng);
                out.push_back(w.state());
            }
        } else {
            UnreflectedWalker w(p, start, guard);
            for (double t : times) {
                w.advance_to(t, rng);
                out.push_back(w.state());
            }
        }
        return out;
    });
    std::vector<std::vector<State>> by_time(times.size(), std::vector<State>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < times.size(); ++k) by_time[k][i] = rows[i][k];
    }
    return by_time;
}

inline std::vector<double> positions(const std::vector<State>& s) {
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i].position;
    return out;
}

inline std::pair<double, double> extent_of(const std::vector<double>& xs) {
    auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    double pad = 1e-9 * std::max(1.0, *hi - *lo);
    return {*lo - pad, *hi + pad};
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------

/// Final states of `replicas` trajectories; the first `dump` trajectories are written in full.
inline json run_simulate(const ExperimentConfig& c, const OutputDir& out) {
    const auto& P = c.params;
    State start = detail::state_param(P, "start", {5.0, Velocity::minus, 0.0});
    double horizon = param_or(P, "horizon", 22.0);
    Flavor flavor = parse_flavor(P, Flavor::unreflected);
    auto dump = param_or<std::size_t>(P, "dump", 1);
    if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
    detail::require_reflected_start(start, flavor);

    struct Row {
        State end;
        std::size_t events = 0;
        std::string csv;
    };
    auto rows = run_replicas(c.replicas, c.seed, [&](std::size_t i, Stream& rng) {
        Trajectory tr = simulate(c.rates, start, horizon, flavor, rng, c.event_guard);
        Row r{tr.final_state(), tr.events.size(), {}};
        if (i < dump && out.enabled()) {
            std::ostringstream os;
            write_csv(os, tr);
            r.csv = os.str();
        }
        return r;
    });

    std::ostringstream fin;
    fin << "replica,position,velocity,events\n";
    MeanSe pos, ev;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        fin << i << ',' << detail::fmt17(r.end.position) << ',' << static_cast<int>(r.end.velocity) << ',' << r.events
            << '\n';
        pos.add(r.end.position);
        ev.add(static_cast<double>(r.events));
        if (!r.csv.empty()) out.write("trajectory_" + std::to_string(i) + ".csv", r.csv);
    }
    out.write("final_states.csv", fin.str());
    return {{"experiment", "simulate"}, {"replicas", c.replicas}, {"seed", c.seed},
            {"flavor", to_string(flavor)}, {"horizon", horizon}, {"mean_position", pos.mean()},
            {"se_position", pos.se()}, {"var_position", pos.variance()}, {"mean_events", ev.mean()}};
}

struct InvariantResult {
    std::vector<double> times;
    std::vector<TvEstimate> tv;
    Binning binning;
};

/// Histogram TV between the position law at each time and the invariant law.
inline InvariantResult invariant_tv(const RatePair& p, const State& start, Flavor flavor,
                                    const std::vector<double>& times, std::size_t n, std::uint64_t seed,
                                    std::vector<EmpiricalLaw>* laws = nullptr, std::uint64_t guard = kDefaultEventGuard) {
    InvariantLaw law(p);
    auto states = detail::sample_states(p, start, flavor, times, n, seed, guard);
    std::vector<double> pooled;
    pooled.reserve(n * times.size());
    for (const auto& s : states) {
        auto xs = detail::positions(s);
        pooled.insert(pooled.end(), xs.begin(), xs.end());
    }
    double r = std::max(law.quantile(1.0 - 1e-7), std::abs(start.position)) + 1.0;
    double lo = flavor == Flavor::reflected ? 0.0 : -r;
    InvariantResult res;
    res.times = times;
    res.binning = freedman_diaconis(pooled, lo, r);
    EmpiricalLaw ref = flavor == Flavor::reflected
                           ? EmpiricalLaw::from_cdf([&](double x) { return 2.0 * law.cdf(x) - 1.0; }, res.binning)
                           : EmpiricalLaw::from_cdf([&](double x) { return law.cdf(x); }, res.binning);
    for (const auto& s : states) {
        EmpiricalLaw e = EmpiricalLaw::from_states(s, res.binning).position_marginal();
        res.tv.push_back(tv_with_se(e, ref));
        if (laws) laws->push_back(e);
    }
    if (laws) laws->push_back(ref);
    return res;
}

inline json run_invariant(const ExperimentConfig& c, const OutputDir& out) {
    const auto& P = c.params;
    State start = detail::state_param(P, "start", {5.0, Velocity::minus, 0.0});
    auto times = detail::times_param(P, "times", {2, 6, 10, 14, 18, 22});
    Flavor flavor = parse_flavor(P, Flavor::unreflected);
    detail::require_reflected_start(start, flavor);

    std::vector<EmpiricalLaw> laws;
    InvariantResult res = invariant_tv(c.rates, start, flavor, times, c.replicas, c.seed, &laws, c.event_guard);
    const EmpiricalLaw& ref = laws.back();

    std::ostringstream hist, tvs;
    hist << "t,bin_lo,bin_hi,mass,reference\n";
    tvs << "t,tv,se\n";
    json tv = json::array(), se = json::array();
    for (std::size_t k = 0; k < times.size(); ++k) {
        for (std::size_t i = 0; i < res.binning.bins; ++i) {
            hist << detail::fmt17(times[k]) << ',' << detail::fmt17(res.binning.edge(i)) << ','
                 << detail::fmt17(res.binning.edge(i + 1)) << ',' << detail::fmt17(laws[k].mass_plus[i]) << ','
                 << detail::fmt17(ref.mass_plus[i]) << '\n';
        }
        tvs << detail::fmt17(times[k]) << ',' << detail::fmt17(res.tv[k].tv) << ',' << detail::fmt17(res.tv[k].se)
            << '\n';
        tv.push_back(res.tv[k].tv);
        se.push_back(res.tv[k].se);
    }
    out.write("histograms.csv", hist.str());
    out.write("tv.csv", tvs.str());
    return {{"experiment", "invariant"}, {"replicas", c.replicas}, {"seed", c.seed}, {"flavor", to_string(flavor)},
            {"start", detail::state_to_json(start)}, {"times", times}, {"bins", res.binning.bins},
            {"tv", tv}, {"se", se}};
}

// ---------------------------------------------------------------------------------------------

/// True when both paths of a coupled run carry identical events from t_star on and agree at the
/// horizon.
inline bool merged_after(const CoupledRun& run) {
    double ts = run.outcome.t_star;
    if (ts > run.first.horizon) return true;
    auto tail = [&](const Trajectory& tr) {
        std::vector<Event> ev;
        for (const auto& e : tr.events) {
            if (e.time > ts) ev.push_back(e);
        }
        return ev;
    };
    auto a = tail(run.first), b = tail(run.second);
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].time != b[i].time || a[i].position != b[i].position || a[i].velocity != b[i].velocity) return false;
    }
    State x = run.first.at(ts), y = run.second.at(ts);
    State xe = run.first.final_state(), ye = run.second.final_state();
    return x.position == y.position && x.velocity == y.velocity && xe.position == ye.position &&
           xe.velocity == ye.velocity;
}

struct CouplingSample {
    CouplingOutcome outcome;
    State probe_first;
    State probe_second;
    bool merged = true;
};

inline std::vector<CouplingSample> coupling_samples(const RatePair& p, const State& s0, const State& s1, Flavor flavor,
                                                    double probe, double window, std::size_t n, std::uint64_t seed,
                                                    std::uint64_t guard = kDefaultEventGuard) {
    std::optional<WindowCoupler> wc;
    if (flavor == Flavor::unreflected) wc.emplace(p, window);
    CouplingOptions opt;
    opt.record_until = probe;
    opt.event_guard = guard;
    return run_replicas(n, seed, [&](std::size_t, Stream& rng) {
        CoupledRun r = flavor == Flavor::reflected ? couple_reflected(p, s0, s1, rng, opt)
                                                   : couple_unreflected(p, s0, s1, *wc, rng, opt);
        return CouplingSample{r.outcome, r.first.at(probe), r.second.at(probe), merged_after(r)};
    });
}

inline json run_couple(const ExperimentConfig& c, const OutputDir& out) {
    const auto& P = c.params;
    Flavor flavor = parse_flavor(P, Flavor::reflected);
    State s0 = detail::state_param(P, "first", {2.0, Velocity::plus, 0.0});
    State s1 = detail::state_param(P, "second", {0.0, Velocity::minus, 0.0});
    double probe = param_or(P, "probe_time", 5.0);
    double window = param_or(P, "window", 1.0);
    if (!(probe >= 0.0)) throw ConfigError("probe_time must be >= 0");
    if (!(window > 0.0)) throw ConfigError("window must be positive");
    detail::require_reflected_start(s0, flavor);
    detail::require_reflected_start(s1, flavor);

    auto samples = coupling_samples(c.rates, s0, s1, flavor, probe, window, c.replicas, c.seed, c.event_guard);
    auto indep = [&](const State& s, std::uint64_t seed) {
        return run_replicas(c.replicas, seed, [&](std::size_t, Stream& rng) {
            return simulate(c.rates, s, probe, flavor, rng, c.event_guard).final_state().position;
        });
    };
    auto ref0 = indep(s0, c.seed + 1), ref1 = indep(s1, c.seed + 2);

    std::ostringstream csv;
    csv << "replica,t_crossing,x_crossing,t_star,attempts\n";
    std::vector<double> x0, x1;
    MeanSe tstar, attempts;
    std::size_t merged = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& o = samples[i].outcome;
        csv << i << ',' << detail::fmt17(o.t_crossing) << ',' << detail::fmt17(o.x_crossing) << ','
            << detail::fmt17(o.t_star) << ',' << o.attempts << '\n';
        x0.push_back(samples[i].probe_first.position);
        x1.push_back(samples[i].probe_second.position);
        tstar.add(o.t_star);
        attempts.add(static_cast<double>(o.attempts));
        if (samples[i].merged) ++merged;
    }
    out.write("coupling.csv", csv.str());
    KsResult k0 = ks_two_sample(x0, ref0), k1 = ks_two_sample(x1, ref1);
    return {{"experiment", "couple"}, {"replicas", c.replicas}, {"seed", c.seed}, {"flavor", to_string(flavor)},
            {"first", detail::state_to_json(s0)}, {"second", detail::state_to_json(s1)},
            {"mean_t_star", tstar.mean()}, {"se_t_star", tstar.se()}, {"mean_attempts", attempts.mean()},
            {"merged_fraction", static_cast<double>(merged) / static_cast<double>(samples.size())},
            {"probe_time", probe}, {"ks_first", k0.statistic}, {"p_first", k0.p_value},
            {"ks_second", k1.statistic}, {"p_second", k1.p_value}};
}

// ---------------------------------------------------------------------------------------------

struct DecayCurve {
    std::vector<double> times;
    std::vector<TvEstimate> tv;
    std::vector<double> null_tv;  ///< TV between the two halves of the first sample, over sqrt(2)
    double floor = 0.0;
};

/// Histogram TV between the joint laws of (Y_t, W_t) from two starts. The fit floor is 2/sqrt(n);
/// the split-sample TV is reported alongside as a gauge of the histogram noise.
inline DecayCurve decay_curve(const RatePair& p, const State& s0, const State& s1, Flavor flavor,
                              const std::vector<double>& times, std::size_t n, std::uint64_t seed,
                              std::uint64_t guard = kDefaultEventGuard) {
    auto a = detail::sample_states(p, s0, flavor, times, n, seed, guard);
    auto b = detail::sample_states(p, s1, flavor, times, n, seed + 1, guard);
    DecayCurve d;
    d.times = times;
    for (std::size_t k = 0; k < times.size(); ++k) {
        auto pooled = detail::positions(a[k]);
        auto pb = detail::positions(b[k]);
        pooled.insert(pooled.end(), pb.begin(), pb.end());
        auto [lo, hi] = detail::extent_of(pooled);
        Binning bins = freedman_diaconis(pooled, lo, hi);
        d.tv.push_back(tv_with_se(EmpiricalLaw::from_states(a[k], bins), EmpiricalLaw::from_states(b[k], bins)));
        std::size_t half = n / 2;
        std::vector<State> h1(a[k].begin(), a[k].begin() + static_cast<std::ptrdiff_t>(half));
        std::vector<State> h2(a[k].begin() + static_cast<std::ptrdiff_t>(half), a[k].end());
        double null = tv_distance(EmpiricalLaw::from_states(h1, bins), EmpiricalLaw::from_states(h2, bins)) /
                      std::sqrt(2.0);
        d.null_tv.push_back(null);
    }
    d.floor = 2.0 / std::sqrt(static_cast<double>(n));
    return d;
}

inline std::vector<double> default_decay_times() {
    std::vector<double> t;
    for (int i = 1; i <= 16; ++i) t.push_back(0.5 * i);
    return t;
}

inline json run_decay(const ExperimentConfig& c, const OutputDir& out) {
    const auto& P = c.params;
    Flavor flavor = parse_flavor(P, Flavor::unreflected);
    State s0 = detail::state_param(P, "first", {1.0, Velocity::plus, 0.0});
    State s1 = detail::state_param(P, "second", {0.0, Velocity::minus, 0.0});
    auto times = detail::times_param(P, "times", default_decay_times());
    detail::require_reflected_start(s0, flavor);
    detail::require_reflected_start(s1, flavor);
    if (c.replicas < 2) throw ConfigError("decay needs at least 2 replicas");

    DecayCurve d = decay_curve(c.rates, s0, s1, flavor, times, c.replicas, c.seed, c.event_guard);
    std::vector<double> tv;
    std::ostringstream csv;
    csv << "t,tv,se\n";
    for (std::size_t k = 0; k < times.size(); ++k) {
        csv << detail::fmt17(times[k]) << ',' << detail::fmt17(d.tv[k].tv) << ',' << detail::fmt17(d.tv[k].se) << '\n';
        tv.push_back(d.tv[k].tv);
    }
    out.write("decay.csv", csv.str());
    json summary = {{"experiment", "decay"}, {"replicas", c.replicas}, {"seed", c.seed},
                    {"flavor", to_string(flavor)}, {"first", detail::state_to_json(s0)},
                    {"second", detail::state_to_json(s1)}, {"floor", d.floor}, {"tv", tv},
                    {"split_sample_tv", d.null_tv}};
    try {
        DecayFit f = decay_fit(times, tv, d.floor);
        json fit = {{"lambda_hat", f.lambda_hat}, {"K_hat", f.K_hat}, {"r2", f.r2}};
        out.write("decay_fit.json", fit.dump() + "\n");
        summary["fit"] = fit;
        summary["used"] = f.used;
    } catch (const std::invalid_argument& e) {
        summary["fit"] = nullptr;
        summary["fit_error"] = e.what();
    }
    return summary;
}

// ---------------------------------------------------------------------------------------------

inline json bound_params_json(const BoundParams& b) {
    return {{"R", b.R},   {"lambda", b.lambda}, {"beta", b.beta}, {"alpha", b.alpha}, {"eta", b.eta},
            {"pR", b.pR}, {"ER", b.ER},         {"bound", b.bound}, {"admissible", b.admissible}};
}

inline MeanSe mc_coupling_laplace(const RatePair& p, double x, double lambda, std::size_t n, std::uint64_t seed) {
    auto v = run_replicas(n, seed, [&](std::size_t, Stream& rng) {
        return std::exp(lambda * run_stick_chain(p, x, rng).t_star);
    });
    return summarize(v);
}

inline MeanSe mc_hitting_laplace(const RatePair& p, const State& s, double lambda, std::size_t n, std::uint64_t seed,
                                 std::uint64_t guard = kDefaultEventGuard) {
    auto v = run_replicas(n, seed, [&](std::size_t, Stream& rng) {
        return std::exp(lambda * hitting_time_zero(p, s, rng, guard));
    });
    return summarize(v);
}

inline json run_bounds(const ExperimentConfig& c, const OutputDir& out) {
    const auto& P = c.params;
    double x = param_or(P, "x", 1.0);
    State hs = detail::state_param(P, "hitting_start", {2.0, Velocity::minus, 0.0});
    bool mc = param_or(P, "monte_carlo", true);
    auto n_er = param_or<std::size_t>(P, "er_replicas", c.replicas);
    std::vector<double> alphas = P.contains("alphas") ? numbers_at(P, "alphas") : std::vector<double>{2.0, 3.0, 5.0};
    if (!(x >= 0.0)) throw ConfigError("x must be >= 0");
    if (hs.position < 0.0) throw ConfigError("hitting_start must have a non-negative position");

    BoundParams b = search_bound_params(c.rates, x, n_er, c.seed, alphas);
    json bj = bound_params_json(b);
    json summary = {{"experiment", "bounds"}, {"replicas", c.replicas}, {"seed", c.seed}, {"x", x}, {"coupling", bj}};

    auto Mc = find_M_c(c.rates);
    json hit = nullptr;
    if (Mc) {
        double rho = lyapunov_parameters(c.rates, *Mc).rho;
        double lambda = param_or(P, "hitting_lambda", 0.25 * rho);
        HittingBound h = hitting_bound(c.rates, hs.position, lambda);
        hit = {{"M_c", *Mc}, {"rho", rho}, {"lambda", lambda}, {"C", h.C}, {"bound", h.bound},
               {"start", detail::state_to_json(hs)}};
        if (mc) {
            MeanSe m = mc_hitting_laplace(c.rates, hs, lambda, c.replicas, c.seed + 7, c.event_guard);
            hit["mc_mean"] = m.mean();
            hit["mc_se"] = m.se();
        }
    }
    summary["hitting"] = hit;
    if (mc && b.admissible) {
        MeanSe m = mc_coupling_laplace(c.rates, x, b.lambda, c.replicas, c.seed + 5);
        summary["coupling"]["mc_mean"] = m.mean();
        summary["coupling"]["mc_se"] = m.se();
    }
    out.write("bounds.json", bj.dump() + "\n");
    out.write("hitting.json", hit.dump() + "\n");
    return summary;
}

// ---------------------------------------------------------------------------------------------

inline json scaling_row_json(const ScalingRow& r) {
    return {{"N", r.N}, {"ks", r.ks}, {"moments", r.moments}, {"se", r.se}};
}

inline json run_scaling(const ExperimentConfig& c, const OutputDir& out) {
    const auto& P = c.params;
    std::string family = param_or<std::string>(P, "family", "ou");
    if (family != "ou") throw ConfigError("scaling: only the 'ou' family is built in");
    std::vector<double> Ns = P.contains("N") ? numbers_at(P, "N") : std::vector<double>{4, 16, 64};
    double t = param_or(P, "t", 1.0);
    double y0 = param_or(P, "y0", 1.0);
    double dt = param_or(P, "dt", 1e-3);
    double mN = param_or(P, "martingale_N", 16.0);
    if (Ns.size() < 2) throw ConfigError("scaling: at least two values of N are required");
    if (!(t > 0.0) || !(dt > 0.0)) throw ConfigError("scaling: t and dt must be positive");

    std::vector<ScalingFamily> fams;
    for (double N : Ns) {
        if (!(N > 0.0)) throw ConfigError("scaling: N must be positive");
        fams.push_back(ou_family(N));
    }
    ScalingReport rep = weak_convergence_report(
        fams, y0, t, c.replicas, c.seed, [&](double x) { return ou_marginal_cdf(x, y0, t); }, dt);
    MartingaleReport mart = martingale_diagnostic(ou_family(mN), y0, t, c.replicas, c.seed + 11);

    std::string lines;
    json rows = json::array();
    bool decreasing = true;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        json r = scaling_row_json(rep.rows[i]);
        lines += r.dump() + "\n";
        rows.push_back(r);
        if (i > 0 && !(rep.rows[i].ks < rep.rows[i - 1].ks)) decreasing = false;
    }
    json mj = {{"N", mN}, {"mean_M", mart.mean_M}, {"se_M", mart.se_M}, {"mean_N", mart.mean_N}, {"se_N", mart.se_N}};
    out.write("scaling.jsonl", lines);
    out.write("martingale.json", mj.dump() + "\n");
    return {{"experiment", "scaling"}, {"replicas", c.replicas}, {"seed", c.seed}, {"t", t}, {"y0", y0},
            {"rows", rows}, {"ks_decreasing", decreasing}, {"richardson_shift", rep.richardson_shift},
            {"reference_converged", rep.reference_converged}, {"martingale", mj}};
}

// ---------------------------------------------------------------------------------------------

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"simulate", "invariant", "couple", "decay", "bounds", "scaling"};
    return names;
}

/// Validates the rates and runs the named experiment.
inline json run_experiment(const ExperimentConfig& c, const OutputDir& out) {
    try {
        require_admissible(c.rates);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (c.replicas == 0) throw ConfigError("replicas must be positive");
    if (c.experiment == "simulate") return run_simulate(c, out);
    if (c.experiment == "invariant") return run_invariant(c, out);
    if (c.experiment == "couple") return run_couple(c, out);
    if (c.experiment == "decay") return run_decay(c, out);
    if (c.experiment == "bounds") return run_bounds(c, out);
    if (c.experiment == "scaling") return run_scaling(c, out);
    throw ConfigError("unknown experiment '" + c.experiment + "'");
}

}  // namespace pdmp
