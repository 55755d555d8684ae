#pragma once

#include <functional>
#include <string>
#include <vector>

#include "forge/geometry.hpp"

namespace forge {

/// Trigonometric polynomial lambda: T -> R used as a normal deformation of a
/// boundary, lambda(s) = c0 + sum_k ck cos(2 pi k s) + sk sin(2 pi k s).
/// Carries the strip half-width r used for the certified analytic norm.
class NormalPerturbation {
public:
    NormalPerturbation() = default;
    NormalPerturbation(double c0, std::vector<double> ck, std::vector<double> sk, double r);

    double value(double s) const { return derivative(s, 0); }
    /// d^m/ds^m, m in 0..3.
    double derivative(double s, int order) const;

    /// Certified upper bound of sup over the strip T_r:
    ///   |c0| + sum_k (|ck| + |sk|) e^{2 pi k r}.
    double strip_norm() const { return strip_norm(r_); }
    double strip_norm(double r) const;

    NormalPerturbation scaled(double factor) const;
    NormalPerturbation truncated(int degree) const;
    NormalPerturbation operator+(const NormalPerturbation& other) const;

    int degree() const { return static_cast<int>(ck_.size()) - 1; }
    double r() const { return r_; }
    double c0() const { return c0_; }
    const std::vector<double>& ck() const { return ck_; }
    const std::vector<double>& sk() const { return sk_; }
    bool is_zero() const;

    std::string to_json() const;
    static NormalPerturbation from_json(const std::string& text);

    /// Fourier projection of a smooth 1-periodic function (FFT, 2048 samples).
    static NormalPerturbation fit(const std::function<double(double)>& f, double r,
                                  int degree, int samples = 2048);

private:
    double c0_ = 0.0;
    std::vector<double> ck_{0.0}, sk_{0.0}; // index = harmonic, entry 0 unused
    double r_ = 0.1;
};

/// Jets 0..2 of a scalar deformation, with optional compact support.
/// NormalPerturbation and the bump below both adapt to this view; the
/// Melnikov machinery only needs this much.
struct PerturbationView {
    std::function<double(double)> f0, f1, f2;
    bool compact = false;
    double lo = 0.0, hi = 0.0; // support as an arc [lo, hi] on T, valid if compact

    double operator()(double s, int order) const {
        switch (order) {
            case 0: return f0(s);
            case 1: return f1(s);
            default: return f2(s);
        }
    }
    bool supports(double s) const;
};

PerturbationView view_of(const NormalPerturbation& p);

/// C^2 bump compactly supported on [center-w, center+w]: equals the quadratic
/// jet a + b (s-c) + (q/2)(s-c)^2 on the inner half of the support, decays to
/// zero through a quintic smoothstep on the outer half.
struct SupportedBump {
    double center = 0.0;
    double half_width = 0.05;
    double a = 0.0, b = 0.0, q = 0.0; // value, first, second derivative at center

    double eval(double s, int order) const;
};

PerturbationView view_of(const SupportedBump& bump);

} // namespace forge
