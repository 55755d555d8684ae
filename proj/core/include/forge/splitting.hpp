#pragma once

#include <optional>
#include <vector>

#include "forge/manifolds.hpp"
#include "forge/orbits.hpp"
#include "forge/perturbation.hpp"

namespace forge {

/// First-order response of the billiard map to the normal deformation eta, in
/// the (s, phi) chart of the unperturbed table:
///   s-comp  = -(1/cos phi')(deta(s) tau_hat + eta(s) sin phi - eta(s') sin phi')
///   phi-comp = -(K(s')/cos phi')(same bracket) + (deta(s') - deta(s)).
/// Equivalently A(z,z')(eta,deta)(s) + B(z')(eta,deta)(s'); both forms are
/// computed and must agree to 1e-12.
class FirstOrderField {
public:
    FirstOrderField(const BoundaryTable& table, PerturbationView eta, const AnnulusGuard& guard)
        : table_(&table), eta_(std::move(eta)), guard_(guard) {}

    Vec2 value(const PhasePoint& x) const;
    Vec2 value_on_chord(const ChordData& chord) const;      // bracket form
    Vec2 value_on_chord_AB(const ChordData& chord) const;   // A/B-matrix form

    /// D[dGamma(0) eta](x): total derivative of the field with respect to
    /// (s, phi), assembled from the chain rule with the A/B partials.
    Mat2 jacobian(const PhasePoint& x) const;
    Mat2 jacobian_on_chord(const ChordData& chord, const Mat2& df) const;

    static Mat2 matA(const BoundaryTable& table, const ChordData& chord);
    static Mat2 matB(const BoundaryTable& table, const ChordData& chord);

private:
    const BoundaryTable* table_;
    PerturbationView eta_;
    AnnulusGuard guard_;
};

/// The 2x2 matrix of the compact-support splitting formulas,
///   T(s,phi,phi') = [[sin phi (cos phi + cos phi'), 0],
///                    [-K(s) sin phi (cos phi - cos phi'), cos phi (cos phi + cos phi')]].
struct MelnikovMatrix {
    Mat2 T;
    static MelnikovMatrix at(double curvature_s, double phi, double phi1);
    double det() const { return T.determinant(); }
};

/// Measurement frame at a reference homoclinic point: unit tangent t0 (the
/// stable tangent; at a tangency this is the common tangent), the line l_Q
/// through Q orthogonal to t0, and the branch pair carrying the intersection.
struct SplittingFrame {
    PhasePoint Q;
    Vec2 t0 = Vec2::UnitX(), n0 = Vec2::UnitY();
    Vec2 t0u = Vec2::UnitX(); // unstable tangent at Q, oriented along t0
    int stable_branch = -1, unstable_branch = -1;
    int s_base = 0, s_side = +1, u_base = 0, u_side = +1;
    double stable_arc = 0.0, unstable_arc = 0.0;
    double window = 0.05;   // half-width of the l_Q search window
    Fibering fibering = Fibering::Unresolved;
    int fiber_index = 0;
    double u_lo = 0.0, u_hi = 0.0; // fiber neighborhood U_Q (arc on T)
    double angle = 0.0;
};

SplittingFrame make_frame(const HomoclinicRecord& record,
                          const std::vector<ManifoldBranch>& branches);

struct PhiValue {
    double phi1 = 0.0, phi2 = 0.0;
};

/// Measure the splitting functional on the table deformed by lambda: continue
/// the orbit and the frame's branch pair, pull back to the base chart,
/// intersect with l_Q and report
///   Phi1 = t0 ^ (Q0u - Q0s), Phi2 = t0 ^ (t_u - t_s)
/// with the tangents normalized so that t - t0 is orthogonal to t0.
PhiValue measure_phi(const BoundaryTable& base, const PeriodicOrbit& base_orbit,
                     const SplittingFrame& frame, const NormalPerturbation& lambda,
                     const AnnulusGuard& guard, const GrowthParams& growth = {});

/// Homoclinic orbit of the frame point: exact iteration near the reference
/// point, eigen-captured linear tail once inside the local radius (keeps the
/// deep iterates pinned to the periodic orbit), with two transported tangent
/// families: the stable tangent (decays forward) and the unstable tangent
/// (decays backward). Sums use the stable family on the forward leg and the
/// unstable family on the backward leg; at a tangency the families coincide.
struct HomoclinicOrbitData {
    int M = 0; // indices i in [-M, M]; chords and tangents defined on [-M, M]
    std::vector<PhasePoint> pts; // size 2M+2, entry j = index j - M, includes i = M+1
    std::vector<ChordData> chords; // chord i -> i+1, size 2M+1
    std::vector<Mat2> df;          // Df at Q_i, size 2M+1
    std::vector<Vec2> tangent;     // stable-tangent family, size 2M+2
    std::vector<Vec2> tangent_u;   // unstable-tangent family, size 2M+2
    std::vector<double> cphi;      // cos(phi_i), size 2M+2
    double cos_theta = 1.0;        // <t0u, t0>: tangency angle cosine at Q

    const PhasePoint& at(int i) const { return pts[static_cast<std::size_t>(i + M)]; }
    const ChordData& chord(int i) const { return chords[static_cast<std::size_t>(i + M)]; }
    const Mat2& Df(int i) const { return df[static_cast<std::size_t>(i + M)]; }
    const Vec2& t(int i) const { return tangent[static_cast<std::size_t>(i + M)]; }
    const Vec2& tu(int i) const { return tangent_u[static_cast<std::size_t>(i + M)]; }
    double c(int i) const { return cphi[static_cast<std::size_t>(i + M)]; }
};

HomoclinicOrbitData build_homoclinic_orbit(const BoundaryTable& table, const PeriodicOrbit& orbit,
                                           const SplittingFrame& frame, const AnnulusGuard& guard,
                                           int M);

struct MelnikovOptions {
    int M_cap = 120;
    double shell_tol = 1e-12;
    double tail_tol = 1e-9;
};

struct MelnikovResult {
    double value = 0.0;
    int M = 0;
    double tail = 0.0;
    double w = 0.0; // variational-equation part (dPhi2 only)
};

/// First splitting derivative: the weighted orbit sum
///   dPhi1 = (1/cos phi_0) sum_i cos(phi_{i+1}) t_{i+1} ^ h(Q_i).
/// The cos weights transport Genecand's area-preserving-coordinate sums into
/// the (s, phi) chart, where the billiard map preserves cos phi dphi ^ ds.
MelnikovResult melnikov_dphi1(const BoundaryTable& table, const PeriodicOrbit& orbit,
                              const SplittingFrame& frame, const PerturbationView& eta,
                              const AnnulusGuard& guard, const MelnikovOptions& opts = {});

/// Second splitting derivative: adds Dh(Q_i) t_i and D^2 f(Q_i)(delta_i, t_i)
/// terms, with delta solved from the inhomogeneous variational equation with
/// decaying boundary conditions (stable leg for i >= 0, unstable for i < 0).
MelnikovResult melnikov_dphi2(const BoundaryTable& table, const PeriodicOrbit& orbit,
                              const SplittingFrame& frame, const PerturbationView& eta,
                              const AnnulusGuard& guard, const MelnikovOptions& opts = {});

struct ClosedFormResult {
    double dphi1 = 0.0;
    double dphi2_leading = 0.0; // coefficient part without w
    double w = 0.0;
    double dphi2 = 0.0; // leading + w
};

/// Compact-support collapse of the sums at the record's one-fibered iterate
/// (supp eta inside U_Q): two terms for dPhi1, the rank-one jacobian terms
/// for dPhi2 plus the numerically computed w.
ClosedFormResult closed_form_one_fibered(const BoundaryTable& table, const PeriodicOrbit& orbit,
                                         const SplittingFrame& frame, const PerturbationView& eta,
                                         const AnnulusGuard& guard,
                                         const MelnikovOptions& opts = {});

/// Symmetric two-fibered collapse: the pair of iterates (l, -l) related by the
/// involution contributes mirrored terms.
ClosedFormResult closed_form_two_fibered(const BoundaryTable& table, const PeriodicOrbit& orbit,
                                         const SplittingFrame& frame, const PerturbationView& eta,
                                         const AnnulusGuard& guard,
                                         const MelnikovOptions& opts = {});

struct BasisPerturbations {
    NormalPerturbation lambda1, lambda2;
    SupportedBump bump1, bump2;
    double det_untruncated = 0.0;
    double det_truncated = 0.0;
    int degree = 0;
    int ell = 0;
    Mat2 jacobian = Mat2::Zero(); // dPhi columns for (lambda1, lambda2)
};

/// Bump perturbations supported in U_Q with unit first / second jet at the
/// fibered position, truncated to trigonometric polynomials while keeping
/// |det(dPsi lambda1, dPsi lambda2)| >= 0.5 of the untruncated value.
BasisPerturbations basis_perturbations(const BoundaryTable& table, const PeriodicOrbit& orbit,
                                       const SplittingFrame& frame, const AnnulusGuard& guard,
                                       double r, const MelnikovOptions& opts = {});

struct BreakParams {
    double b_cap = 1e-4;
    int max_newton = 10;
    double growth_margin = 0.5;
    std::uint64_t rng_seed = 1;
    int workers = 1;
};

struct BreakReport {
    double c1 = 0.0, c2 = 0.0;
    NormalPerturbation lambda;
    double norm_r = 0.0;
    PhiValue phi_base, target, achieved;
    int newton_iters = 0;
    // post state (pipeline re-run on the perturbed table)
    bool post_computed = false;
    double post_angle = 0.0;
    int post_order = 0;
    PhasePoint post_location;
    int records_in_window = 0;
    bool order_bound_ok = true;
};

/// Solve Phi(Gamma(c1 lambda1 + c2 lambda2)) = Phi(0) + (0, b) by Newton with
/// the Melnikov Jacobian, then re-run the manifolds pipeline on the perturbed
/// table and report the continued intersection.
BreakReport break_tangency(const BoundaryTable& base, const PeriodicOrbit& orbit,
                           const SplittingFrame& frame,
                           const std::vector<HomoclinicRecord>& base_records, double b,
                           const AnnulusGuard& guard, const GrowthParams& growth = {},
                           const BreakParams& params = {}, const MelnikovOptions& opts = {});

} // namespace forge
