#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "numerics.hpp"

namespace pdmp {

enum class RateFamily { constant, affine, tabulated };

enum class Monotonicity { constant, non_decreasing, non_increasing };

/// An even rate function y -> r(|y|). Tabulated rates interpolate linearly between knots and are
/// flat before the first knot and after the last one.
class RateSpec {
public:
    static RateSpec constant(double level) {
        RateSpec r;
        r.family_ = RateFamily::constant;
        r.base_ = level;
        return r;
    }

    static RateSpec affine(double base, double slope) {
        RateSpec r;
        r.family_ = RateFamily::affine;
        r.base_ = base;
        r.slope_ = slope;
        return r;
    }

    static RateSpec tabulated(std::vector<double> knots, std::vector<double> values) {
        if (knots.empty() || knots.size() != values.size()) {
            throw std::invalid_argument("tabulated rate: knots and values must be non-empty and of equal length");
        }
        if (knots.front() < 0.0) throw std::invalid_argument("tabulated rate: knots must be >= 0");
        for (std::size_t i = 1; i < knots.size(); ++i) {
            if (!(knots[i] > knots[i - 1])) throw std::invalid_argument("tabulated rate: knots must be strictly increasing");
        }
        bool up = true, down = true;
        for (std::size_t i = 1; i < values.size(); ++i) {
            if (values[i] < values[i - 1]) up = false;
            if (values[i] > values[i - 1]) down = false;
        }
        if (!up && !down) throw std::invalid_argument("tabulated rate: values must be monotone");
        RateSpec r;
        r.family_ = RateFamily::tabulated;
        r.knots_ = std::move(knots);
        r.values_ = std::move(values);
        r.cumulative_.assign(r.knots_.size(), 0.0);
        r.cumulative_[0] = r.values_[0] * r.knots_[0];
        for (std::size_t i = 1; i < r.knots_.size(); ++i) {
            r.cumulative_[i] = r.cumulative_[i - 1] +
                               0.5 * (r.values_[i] + r.values_[i - 1]) * (r.knots_[i] - r.knots_[i - 1]);
        }
        return r;
    }

    RateFamily family() const { return family_; }
    double base() const { return base_; }
    double slope() const { return slope_; }
    const std::vector<double>& knots() const { return knots_; }
    const std::vector<double>& values() const { return values_; }

    double operator()(double y) const {
        double x = std::abs(y);
        switch (family_) {
            case RateFamily::constant: return base_;
            case RateFamily::affine: return base_ + slope_ * x;
            case RateFamily::tabulated: {
                auto [i, in_segment] = segment(x);
                if (!in_segment) return x < knots_.front() ? values_.front() : values_.back();
                double w = (x - knots_[i]) / (knots_[i + 1] - knots_[i]);
                return values_[i] + w * (values_[i + 1] - values_[i]);
            }
        }
        return 0.0;
    }

    /// d/dy of y -> r(|y|), using sgn(0) = +1 at the kink.
    double derivative(double y) const {
        double s = sgn(y);
        double x = std::abs(y);
        switch (family_) {
            case RateFamily::constant: return 0.0;
            case RateFamily::affine: return s * slope_;
            case RateFamily::tabulated: {
                auto [i, in_segment] = segment(x);
                if (!in_segment) return 0.0;
                return s * (values_[i + 1] - values_[i]) / (knots_[i + 1] - knots_[i]);
            }
        }
        return 0.0;
    }

    Monotonicity direction() const {
        switch (family_) {
            case RateFamily::constant: return Monotonicity::constant;
            case RateFamily::affine:
                return slope_ > 0 ? Monotonicity::non_decreasing
                                  : (slope_ < 0 ? Monotonicity::non_increasing : Monotonicity::constant);
            case RateFamily::tabulated:
                if (values_.front() == values_.back()) return Monotonicity::constant;
                return values_.back() > values_.front() ? Monotonicity::non_decreasing : Monotonicity::non_increasing;
        }
        return Monotonicity::constant;
    }

    double infimum() const {
        switch (family_) {
            case RateFamily::constant: return base_;
            case RateFamily::affine: return slope_ < 0 ? -kInf : base_;
            case RateFamily::tabulated: return *std::min_element(values_.begin(), values_.end());
        }
        return 0.0;
    }

    double supremum() const {
        switch (family_) {
            case RateFamily::constant: return base_;
            case RateFamily::affine: return slope_ > 0 ? kInf : base_;
            case RateFamily::tabulated: return *std::max_element(values_.begin(), values_.end());
        }
        return 0.0;
    }

    /// R(x) = integral of the rate over [0, x], x >= 0.
    double integral(double x) const {
        switch (family_) {
            case RateFamily::constant: return base_ * x;
            case RateFamily::affine: return x * (base_ + 0.5 * slope_ * x);
            case RateFamily::tabulated: {
                if (x <= knots_[0]) return values_[0] * x;
                auto [i, in_segment] = segment(x);
                if (!in_segment) return cumulative_.back() + values_.back() * (x - knots_.back());
                double d = x - knots_[i];
                double s = (values_[i + 1] - values_[i]) / (knots_[i + 1] - knots_[i]);
                return cumulative_[i] + d * (values_[i] + 0.5 * s * d);
            }
        }
        return 0.0;
    }

    /// Solves R(x) = u for x >= 0.
    double inverse_integral(double u) const {
        if (u < 0.0) throw std::domain_error("inverse_integral: negative argument");
        switch (family_) {
            case RateFamily::constant: return u / base_;
            case RateFamily::affine: return forward_time(0.0, u);
            case RateFamily::tabulated: {
                if (u <= cumulative_[0]) return u / values_[0];
                auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
                if (it == cumulative_.end()) return knots_.back() + (u - cumulative_.back()) / values_.back();
                std::size_t i = static_cast<std::size_t>(it - cumulative_.begin()) - 1;
                double s = (values_[i + 1] - values_[i]) / (knots_[i + 1] - knots_[i]);
                return knots_[i] + solve_forward(values_[i], s, u - cumulative_[i]);
            }
        }
        return 0.0;
    }

    /// Duration t >= 0 with integral over [x, x + t] equal to e.
    double forward_time(double x, double e) const {
        switch (family_) {
            case RateFamily::constant: return e / base_;
            case RateFamily::affine: return solve_forward(base_ + slope_ * x, slope_, e);
            case RateFamily::tabulated: return inverse_integral(integral(x) + e) - x;
        }
        return 0.0;
    }

    /// Duration t in [0, x) with integral over [x - t, x] equal to e, or nothing when e >= R(x).
    std::optional<double> backward_time(double x, double e) const {
        double total = integral(x);
        if (e >= total) return std::nullopt;
        double t = 0.0;
        switch (family_) {
            case RateFamily::constant: t = e / base_; break;
            case RateFamily::affine: t = solve_forward(base_ + slope_ * x, -slope_, e); break;
            case RateFamily::tabulated: t = x - inverse_integral(total - e); break;
        }
        return std::min(t, x);
    }

private:
    // Root of c t + s t^2 / 2 = e written to avoid cancellation.
    static double solve_forward(double c, double s, double e) {
        if (s == 0.0) return e / c;
        double disc = c * c + 2.0 * s * e;
        if (disc < 0.0) disc = 0.0;
        return 2.0 * e / (c + std::sqrt(disc));
    }

    // Index i with knots[i] <= x < knots[i+1]; in_segment is false outside the knot range.
    std::pair<std::size_t, bool> segment(double x) const {
        if (x < knots_.front()) return {0, false};
        auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
        if (it == knots_.end()) return {knots_.size() - 1, false};
        return {static_cast<std::size_t>(it - knots_.begin()) - 1, true};
    }

    RateFamily family_ = RateFamily::constant;
    double base_ = 1.0;
    double slope_ = 0.0;
    std::vector<double> knots_;
    std::vector<double> values_;
    std::vector<double> cumulative_;
};

/// The two switching rates: a while approaching the origin, b while moving away.
struct RatePair {
    RateSpec a;
    RateSpec b;

    RatePair() = default;
    RatePair(RateSpec a_, RateSpec b_) : a(std::move(a_)), b(std::move(b_)) {}

    double a_lower() const { return a.infimum(); }
    double b_lower() const { return b.infimum(); }
    /// a(0), the largest value of a under the standing hypothesis.
    double a_upper() const { return a(0.0); }
    double b_upper() const { return b.supremum(); }
};

struct Violation {
    std::string clause;
    double first_point = 0.0;
    std::size_t count = 0;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

/// Checks the standing hypothesis on the grid {0, step, ..., extent}.
inline ValidationReport validate_hypothesis(const RatePair& p, double step = 0.01, double extent = 50.0) {
    ValidationReport report;
    auto flag = [&](const std::string& clause, double y) {
        for (auto& v : report.violations) {
            if (v.clause == clause) { ++v.count; return; }
        }
        report.violations.push_back({clause, y, 1});
    };
    std::size_t n = static_cast<std::size_t>(std::llround(extent / step));
    double prev_a = p.a(0.0), prev_b = p.b(0.0);
    for (std::size_t i = 0; i <= n; ++i) {
        double y = static_cast<double>(i) * step;
        double av = p.a(y), bv = p.b(y);
        if (!(av > 0.0)) flag("a(y) > 0", y);
        if (!(bv > 0.0)) flag("b(y) > 0", y);
        if (i > 0) {
            if (av > prev_a) flag("a non-increasing", y);
            if (bv < prev_b) flag("b non-decreasing", y);
            if (!(bv > av)) flag("b(y) > a(y) for all y != 0", y);
        }
        prev_a = av;
        prev_b = bv;
    }
    if (!(p.a_lower() > 0.0)) flag("a bounded below by a positive constant", kInf);
    if (!(p.b_lower() > 0.0)) flag("b bounded below by a positive constant", kInf);
    return report;
}

/// Throws std::invalid_argument listing the violated clauses.
inline void require_admissible(const RatePair& p) {
    auto r = validate_hypothesis(p);
    if (r.ok()) return;
    std::string msg = "rate pair violates the standing hypothesis:";
    for (const auto& v : r.violations) msg += " [" + v.clause + "]";
    throw std::invalid_argument(msg);
}

enum class Which { a, b };

inline double integrated_rate(const RatePair& p, Which which, double x) {
    if (x < 0.0) throw std::domain_error("integrated_rate: x must be >= 0");
    return which == Which::a ? p.a.integral(x) : p.b.integral(x);
}

inline double inverse_integrated_rate(const RatePair& p, Which which, double u) {
    if (u < 0.0) throw std::domain_error("inverse_integrated_rate: u must be >= 0");
    return which == Which::a ? p.a.inverse_integral(u) : p.b.inverse_integral(u);
}

/// The invariant law of the position, proportional to exp(-F(y)) with
/// F(y) = integral over [0, |y|] of (b - a).
class InvariantLaw {
public:
    explicit InvariantLaw(const RatePair& p, double cell = 0.01) : pair_(p), cell_(cell) {
        // Tail beyond L is at most exp(-F(L)) / (b(L) - a(L)) because F' is non-decreasing.
        extent_ = 1.0;
        for (int k = 0; k < 60; ++k) {
            double gap = pair_.b(extent_) - pair_.a(extent_);
            if (gap > 0.0 && std::exp(-potential(extent_)) / gap < 1e-13) break;
            extent_ *= 1.5;
        }
        std::size_t n = static_cast<std::size_t>(std::ceil(extent_ / cell_));
        extent_ = static_cast<double>(n) * cell_;
        half_mass_.assign(n + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double lo = static_cast<double>(i) * cell_;
            half_mass_[i + 1] = half_mass_[i] + integrate([&](double y) { return std::exp(-potential(y)); }, lo, lo + cell_, 1e-14);
        }
        normalizer_ = 2.0 * half_mass_.back();
    }

    double potential(double y) const {
        double x = std::abs(y);
        return pair_.b.integral(x) - pair_.a.integral(x);
    }

    double normalizer() const { return normalizer_; }
    double extent() const { return extent_; }

    double density(double y) const { return std::exp(-potential(y)) / normalizer_; }

    /// Density of the law of |Y|, i.e. (2 / C_F) exp(-F).
    double reflected_density(double x) const { return x < 0.0 ? 0.0 : 2.0 * density(x); }

    double cdf(double y) const {
        double m = mass_from_zero(std::abs(y)) / normalizer_;
        return y < 0.0 ? 0.5 - m : 0.5 + m;
    }

    double quantile(double p) const {
        if (!(p > 0.0 && p < 1.0)) throw std::domain_error("invariant_quantile: p must lie in (0, 1)");
        double target = std::abs(p - 0.5) * normalizer_;
        if (target == 0.0) return 0.0;
        double y;
        if (target >= half_mass_.back()) {
            y = extent_;
        } else {
            auto it = std::upper_bound(half_mass_.begin(), half_mass_.end(), target);
            std::size_t i = static_cast<std::size_t>(it - half_mass_.begin()) - 1;
            double lo = static_cast<double>(i) * cell_;
            double base = half_mass_[i];
            auto g = [&](double x) {
                return base + integrate([&](double z) { return std::exp(-potential(z)); }, lo, x, 1e-15) - target;
            };
            auto dg = [&](double x) { return std::exp(-potential(x)); };
            y = solve_increasing(g, dg, lo, lo + cell_, 1e-13);
        }
        return p < 0.5 ? -y : y;
    }

    /// Integral of exp(theta y) against the law over [-radius, radius].
    double truncated_mgf(double theta, double radius) const {
        auto f = [&](double y) { return std::exp(theta * y - potential(y)); };
        double total = 0.0;
        for (double lo = -radius; lo < radius; lo += 1.0) total += integrate(f, lo, std::min(lo + 1.0, radius), 1e-12);
        return total / normalizer_;
    }

private:
    double mass_from_zero(double x) const {
        if (x >= extent_) return half_mass_.back();
        std::size_t i = static_cast<std::size_t>(x / cell_);
        if (i >= half_mass_.size() - 1) i = half_mass_.size() - 2;
        double lo = static_cast<double>(i) * cell_;
        return half_mass_[i] + integrate([&](double z) { return std::exp(-potential(z)); }, lo, x, 1e-15);
    }

    RatePair pair_;
    double cell_;
    double extent_ = 0.0;
    double normalizer_ = 0.0;
    std::vector<double> half_mass_;
};

inline double invariant_density(const RatePair& p, double y) { return InvariantLaw(p).density(y); }

inline double invariant_quantile(const RatePair& p, double prob) { return InvariantLaw(p).quantile(prob); }

}  // namespace pdmp
