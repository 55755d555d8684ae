#pragma once

#include <array>
#include <optional>

#include "forge/arclength.hpp"
#include "forge/geometry.hpp"

namespace forge {

/// Point of the annulus A = T x (-pi/2, pi/2). The position s is kept lifted
/// (any real); reduction mod 1 happens only at serialization.
struct PhasePoint {
    double s = 0.0;
    double phi = 0.0;
};

/// One chord of the billiard flow: lifted endpoints s < s1 < s+1, length tau,
/// reflection angles at both ends.
struct ChordData {
    double s = 0.0, s1 = 0.0;
    double tau = 0.0;
    double phi = 0.0, phi1 = 0.0;
};

/// Margins keeping the dynamics away from the annulus boundary: |phi| <=
/// pi/2 - nu, chord parameter gap in [mu, 1-mu], chord length >= c.
struct AnnulusGuard {
    double nu = 0.05;
    double mu = 0.02;
    double c = 0.0;

    /// Derive c empirically as the minimum chord length over the boundary of
    /// the gap region.
    static AnnulusGuard standard(const BoundaryTable& table, double nu = 0.05, double mu = 0.02);
};

struct MarginReport {
    double gap_margin = 0.0;   // min(s1-s-mu, s+1-mu-s1)
    double angle_margin = 0.0; // min over ends of pi/2 - nu - |phi|
    double tau_margin = 0.0;   // tau - c
    bool pass() const { return gap_margin >= 0 && angle_margin >= 0 && tau_margin >= 0; }
};

/// Chord length tau(s, s') = |beta(s) - beta(s')| on the lifted plane.
double tau(const BoundaryTable& table, double s, double s1);

/// First partials (d1 tau, d2 tau) = (-sin phi, sin phi'). At the diagonal
/// s' - s in Z the continuous strip extension is used:
/// d1 tau(s, s+k) = (-1)^{k+1}, d2 tau(s, s+k) = (-1)^k.
std::array<double, 2> d_tau(const BoundaryTable& table, double s, double s1);

/// Second partials (d11, d12, d22) via the curvature formulas
///   d11 = K(s) cos phi + cos^2 phi / tau, d12 = cos phi cos phi' / tau,
///   d22 = K(s') cos phi' + cos^2 phi' / tau.
/// Throws DiagonalChord within 1e-9 of the diagonal.
std::array<double, 3> d2_tau(const BoundaryTable& table, double s, double s1);

/// Billiard map: solve d1 tau(s, s') = -sin phi on (s+mu, s+1-mu) and read
/// phi' from d2 tau. Guard margins are enforced on the input angle.
std::pair<PhasePoint, ChordData> step(const BoundaryTable& table, const PhasePoint& x,
                                      const AnnulusGuard& guard);

/// Inverse map through the time-reversal involution I(s,phi) = (s,-phi):
/// f^{-1} = I o f o I. The returned position is lifted backward (s' < s).
std::pair<PhasePoint, ChordData> step_inverse(const BoundaryTable& table, const PhasePoint& x,
                                              const AnnulusGuard& guard);

/// Differential of the billiard map at x (chord must come from step(x)).
Mat2 differential(const BoundaryTable& table, const ChordData& chord);

/// Partials of tau_hat(s, phi) = tau(s, s'(s, phi)):
///   d1 = -sin phi - (tau_hat K(s) + cos phi) tan phi', d2 = -tau_hat tan phi'.
std::array<double, 2> tau_hat_partials(const BoundaryTable& table, const ChordData& chord);

/// Second differential of the map as central finite differences of the exact
/// Df: result[k] is the derivative of Df with respect to (s, phi)_k.
std::array<Mat2, 2> second_differential(const BoundaryTable& table, const PhasePoint& x,
                                        const AnnulusGuard& guard, double h = 1e-6);

MarginReport check_away_from_boundary(const ChordData& chord, const AnnulusGuard& guard);
MarginReport check_away_from_boundary(const PhasePoint& x, const AnnulusGuard& guard);

/// Billiard map of an exactly perturbed table, written in the base table's
/// chart (the perturbed boundary is not arclength in s):
///   |beta_eta'(s)| sin phi = -d1 tau_eta(s, s'),
///   |beta_eta'(s')| sin phi' = d2 tau_eta(s, s').
/// This is the reference map for first-order expansion tests.
PhasePoint perturbed_step(const PerturbedBoundary& pb, const PhasePoint& x,
                          const AnnulusGuard& guard);

/// Angles (phi_eps, phi_eps') of the chord (s, s1) of a perturbed boundary,
/// measured against the perturbed normals.
std::array<double, 2> perturbed_chord_angles(const PerturbedBoundary& pb, double s, double s1);

/// Second partials of (s,s1) -> |c(s) - c(s1)| for a curve evaluator in an
/// arbitrary chart (direct differentiation, no arclength assumption).
std::array<double, 3> chord_second_partials(const PerturbedBoundary& pb, double s, double s1);

} // namespace forge
