#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "forge/curve_checks.hpp"
#include "forge/dynamics.hpp"

namespace testutil {

/// Independent integrator for quadrature oracles (adaptive Simpson).
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-12, int depth = 24) {
    std::function<double(double, double, double, double, double, double, int)> rec =
        [&](double lo, double hi, double flo, double fmid, double fhi, double whole, int d) {
            const double m = 0.5 * (lo + hi);
            const double lm = 0.5 * (lo + m), rm = 0.5 * (m + hi);
            const double flm = f(lm), frm = f(rm);
            const double left = (m - lo) / 6.0 * (flo + 4.0 * flm + fmid);
            const double right = (hi - m) / 6.0 * (fmid + 4.0 * frm + fhi);
            if (d <= 0 || std::abs(left + right - whole) < 15.0 * tol)
                return left + right + (left + right - whole) / 15.0;
            return rec(lo, m, flo, flm, fmid, left, d - 1) +
                   rec(m, hi, fmid, frm, fhi, right, d - 1);
        };
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return rec(a, b, fa, fm, fb, whole, depth);
}

/// Least-squares slope of log10(err) against log10(eps), dropping points at
/// the double-precision noise floor.
inline double loglog_slope(const std::vector<double>& eps, const std::vector<double>& err,
                           double floor_abs = 1e-14) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (err[i] < floor_abs) continue;
        const double x = std::log10(eps[i]);
        const double y = std::log10(err[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline const forge::BoundaryTable& circle_table() {
    static forge::BoundaryTable t =
        forge::make_table(forge::FourierCurve::circle(1.0 / forge::kTwoPi));
    return t;
}

inline const forge::BoundaryTable& ellipse_table() {
    static forge::BoundaryTable t = forge::make_table(forge::FourierCurve::ellipse(1.0, 0.5));
    return t;
}

inline forge::Mat2 fd_jacobian(const std::function<forge::Vec2(const forge::PhasePoint&)>& f,
                               const forge::PhasePoint& x, double h = 1e-6) {
    forge::Mat2 J;
    J.col(0) = (f({x.s + h, x.phi}) - f({x.s - h, x.phi})) / (2 * h);
    J.col(1) = (f({x.s, x.phi + h}) - f({x.s, x.phi - h})) / (2 * h);
    return J;
}

} // namespace testutil
