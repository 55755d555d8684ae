#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "forge/geometry.hpp"

namespace forge {

/// Closed plane curve given by truncated Fourier series in a 1-periodic
/// parameter theta:
///   x(theta) = cx[0] + sum_k cx[k] cos(2 pi k theta) + sx[k] sin(2 pi k theta)
/// and likewise y(theta). Coefficient lists are index-aligned with the
/// harmonic k; sx[0] and sy[0] are ignored.
class FourierCurve {
public:
    FourierCurve() = default;
    FourierCurve(std::vector<double> cx, std::vector<double> sx,
                 std::vector<double> cy, std::vector<double> sy);

    static FourierCurve circle(double radius);
    static FourierCurve ellipse(double a, double b);

    /// Derivative of order `order` (0..4) with respect to theta.
    Vec2 evaluate(double theta, int order) const;

    /// Derivatives 0..max_order in one pass.
    std::array<Vec2, 5> jet(double theta, int max_order) const;

    int degree() const { return degree_; }
    const std::vector<double>& cx() const { return cx_; }
    const std::vector<double>& sx() const { return sx_; }
    const std::vector<double>& cy() const { return cy_; }
    const std::vector<double>& sy() const { return sy_; }

    std::string to_json() const;
    static FourierCurve from_json(const std::string& text);

private:
    std::vector<double> cx_{0.0}, sx_{0.0}, cy_{0.0}, sy_{0.0};
    int degree_ = 0;
};

/// Project a smooth 1-periodic plane map onto a Fourier series by FFT,
/// doubling the sample count until the top octave of coefficients is
/// negligible. Trailing harmonics below `tail_tol` (relative to the largest
/// coefficient) are trimmed.
FourierCurve fit_fourier(const std::function<Vec2(double)>& f,
                         double tail_tol = 1e-13, int max_samples = 16384);

namespace detail {
/// In-place radix-2 FFT on interleaved complex data (re, im), n a power of 2.
void fft_radix2(std::vector<double>& re, std::vector<double>& im, bool inverse);
} // namespace detail

} // namespace forge
