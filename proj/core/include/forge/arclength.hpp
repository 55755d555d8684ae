#pragma once

#include <memory>
#include <vector>

#include "forge/fourier.hpp"
#include "forge/geometry.hpp"
#include "forge/perturbation.hpp"

namespace forge {

/// Cumulative arc length sigma(theta) of a FourierCurve, normalized so that
/// sigma(1) = 1, with its inverse. The speed |gamma'| is expanded in a
/// Fourier series (it is analytic and periodic) and integrated term by term,
/// so sigma is spectrally accurate and O(degree) per query; a uniform node
/// table with a monotone cubic supplies inverse brackets and guesses, and a
/// Newton polish finishes each inverse query.
class ArcLengthTable {
public:
    ArcLengthTable() = default;
    ArcLengthTable(const FourierCurve& curve, int nodes = 4096);

    double perimeter() const { return perimeter_; }
    double sigma(double theta) const;
    double sigma_inv(double s) const;
    /// d sigma / d theta = |gamma'(theta)| / perimeter.
    double dsigma(double theta) const;
    int nodes() const { return static_cast<int>(sig_.size()) - 1; }

private:
    const FourierCurve* curve_ = nullptr;
    double perimeter_ = 0.0;
    std::vector<double> speed_cos_, speed_sin_; // series of |gamma'|/perimeter
    std::vector<double> sig_;       // sigma at theta_i = i/N, i = 0..N
    std::vector<double> slope_;     // monotone cubic slopes of theta(s)
    std::vector<double> inv_theta_; // theta at the same nodes

    double speed(double theta) const;
    double quad_segment(double a, double b) const;
};

/// Unit-perimeter arclength evaluator of a convex analytic table: the curve
/// beta(s) = gamma(sigma^{-1}(s)) / perimeter, with exact derivative chains.
/// This is the table object all dynamics run on.
class BoundaryTable {
public:
    struct Jet {
        Vec2 p, d1, d2, d3;
        Vec2 normal;     // outward unit normal
        double K;        // signed curvature, < 0 for convex tables
        double Kdot;     // dK/ds
    };

    BoundaryTable() = default;
    explicit BoundaryTable(FourierCurve curve, int nodes = 4096);

    Jet jet(double s) const;
    Vec2 point(double s) const;
    Vec2 tangent(double s) const;
    Vec2 normal(double s) const;
    double curvature(double s) const;

    /// Point and unit tangent in one chart lookup (hot path of the map solve).
    struct PT {
        Vec2 p, t;
    };
    PT point_tangent(double s) const;
    /// Point, unit tangent and curvature without the third-order terms.
    struct Jet2 {
        Vec2 p, d1;
        double K;
    };
    Jet2 jet2(double s) const;

    double perimeter() const { return chart_.perimeter(); }
    /// Chart map: original curve parameter of the arclength position s.
    double theta_of(double s) const { return chart_.sigma_inv(mod1(s)); }
    double s_of_theta(double theta) const { return chart_.sigma(theta); }
    double dsigma(double theta) const { return chart_.dsigma(theta); }

    const FourierCurve& curve() const { return *curve_; }

private:
    std::shared_ptr<const FourierCurve> curve_;
    ArcLengthTable chart_;
};

/// Exact normal deformation of an arclength table,
///   beta_eta(s) = beta(s) + eta(s) n(s),
/// with closed-form derivatives up to order 2 (chain rules through the
/// moving frame). The parameter s is the base table's arclength chart; the
/// perturbed curve is not arclength in s.
class PerturbedBoundary {
public:
    PerturbedBoundary(const BoundaryTable& base, PerturbationView eta)
        : base_(&base), eta_(std::move(eta)) {}

    Vec2 point(double s) const;
    Vec2 d1(double s) const;
    Vec2 d2(double s) const;
    double speed(double s) const { return d1(s).norm(); }
    /// Signed curvature of the perturbed curve at parameter s.
    double curvature(double s) const;
    /// Chord length between parameters s and s1.
    double chord(double s, double s1) const { return (point(s) - point(s1)).norm(); }

    const BoundaryTable& base() const { return *base_; }
    const PerturbationView& eta() const { return eta_; }

private:
    const BoundaryTable* base_;
    PerturbationView eta_;
};

struct FrameExpansion {
    double speed_exact, curvature_exact;
    double speed_first_order, curvature_first_order;
};

/// Exact perturbed frame data at s for beta + eps*eta*n together with the
/// first-order predictions |beta'_eps| ~ 1 - eps eta K and
/// K_eps ~ K + eps (eta'' + eta K^2).
FrameExpansion perturbed_frame(const BoundaryTable& base, const PerturbationView& eta,
                               double s, double eps);

} // namespace forge
