#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace pdmp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// sgn with the convention sgn(0) = +1.
inline double sgn(double y) { return y < 0.0 ? -1.0 : 1.0; }

namespace detail {

template <class F>
double simpson_step(const F& f, double a, double fa, double b, double fb, double m, double fm,
                    double whole, double tol, int depth) {
    double lm = 0.5 * (a + m);
    double rm = 0.5 * (m + b);
    double flm = f(lm);
    double frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
template <class F>
double integrate(const F& f, double a, double b, double tol = 1e-10, int max_depth = 40) {
    if (a == b) return 0.0;
    if (b < a) return -integrate(f, b, a, tol, max_depth);
    // Seed with a four-panel split so that narrow features are not skipped.
    double total = 0.0;
    const int panels = 4;
    double h = (b - a) / panels;
    for (int i = 0; i < panels; ++i) {
        double lo = a + i * h;
        double hi = (i + 1 == panels) ? b : lo + h;
        double m = 0.5 * (lo + hi);
        double flo = f(lo), fhi = f(hi), fm = f(m);
        double whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi);
        total += detail::simpson_step(f, lo, flo, hi, fhi, m, fm, whole, tol / panels, max_depth);
    }
    return total;
}

/// Integral of f over [a, inf). `tail(L)` must bound the integral over [L, inf).
/// The range is covered in doubling chunks until the tail bound drops below `tail_tol`.
template <class F, class Tail>
double integrate_to_infinity(const F& f, double a, const Tail& tail, double tol = 1e-11,
                             double tail_tol = 1e-13, double first_chunk = 1.0) {
    double total = 0.0;
    double lo = a;
    double width = first_chunk;
    for (int k = 0; k < 200; ++k) {
        double hi = lo + width;
        total += integrate(f, lo, hi, tol);
        lo = hi;
        if (tail(lo) < tail_tol) return total;
        if (k >= 8) width *= 2.0;
    }
    throw std::runtime_error("integrate_to_infinity: tail bound never became small");
}

/// Safeguarded Newton on an increasing function g with g(lo) <= 0 <= g(hi).
/// Falls back to bisection whenever the Newton step leaves the bracket.
template <class G, class DG>
double solve_increasing(const G& g, const DG& dg, double lo, double hi, double tol = 1e-12,
                        int max_iter = 200) {
    double glo = g(lo);
    double ghi = g(hi);
    if (glo > 0.0 || ghi < 0.0) throw std::domain_error("solve_increasing: root not bracketed");
    if (glo == 0.0) return lo;
    if (ghi == 0.0) return hi;
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < max_iter; ++it) {
        double gx = g(x);
        if (gx == 0.0) return x;
        if (gx < 0.0) lo = x; else hi = x;
        double d = dg(x);
        double next = (d > 0.0 && std::isfinite(d)) ? x - gx / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= tol * (1.0 + std::abs(x)) || hi - lo <= tol * (1.0 + std::abs(x))) {
            return next;
        }
        x = next;
    }
    return x;
}

/// Bisection on the sign of g over [lo, hi]; returns the midpoint of the final bracket.
template <class G>
double bisect(const G& g, double lo, double hi, double tol = 1e-10, int max_iter = 400) {
    bool left_sign = g(lo) > 0.0;
    for (int it = 0; it < max_iter && hi - lo > tol; ++it) {
        double m = 0.5 * (lo + hi);
        if ((g(m) > 0.0) == left_sign) lo = m; else hi = m;
    }
    return 0.5 * (lo + hi);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_pdf(double z) {
    static const double inv_sqrt_2pi = 0.3989422804014327;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

}  // namespace pdmp
