#pragma once

#include <optional>
#include <string>
#include <vector>

#include "forge/orbits.hpp"

namespace forge {

struct EigenFrame {
    Vec2 v_s = Vec2::Zero(), v_u = Vec2::Zero(); // unit, oriented with s-component >= 0
    double lambda_s = 0.0, lambda_u = 0.0;       // multipliers of Df^q
};

/// Stable/unstable directions of the monodromy at orbit point 0, transported
/// along the orbit by Df and re-normalized. Throws NotHyperbolic.
std::vector<EigenFrame> eigen_frames(const BoundaryTable& table, const PeriodicOrbit& orbit);

/// Oriented polyline of one invariant-manifold branch, grown from a
/// fundamental segment along the eigen-direction. Positions are lifted;
/// `arc` is cumulative intrinsic (polyline) length from the base point.
struct ManifoldBranch {
    int base_index = 0;
    char kind = 'u'; // 'u' or 's'
    int side = +1;
    PhasePoint base;
    std::vector<PhasePoint> points;
    std::vector<double> arc;
    bool truncated = false; // left A_nu before reaching the requested length
    int sweeps = 0;
    int steps_per_sweep = 0;

    /// Largest arc below which the branch is a graph over s (monotone s).
    double graph_radius() const;
};

struct GrowthParams {
    double h_max = 1e-3;
    double h_min = 1e-9;
    double delta0_factor = 1e-7; // initial offset = factor * phase-space diameter
    int max_sweeps = 200;
};

ManifoldBranch grow_branch(const BoundaryTable& table, const PeriodicOrbit& orbit,
                           const std::vector<EigenFrame>& frames, int base_index, char kind,
                           int side, double N, const AnnulusGuard& guard,
                           const GrowthParams& params = {}, bool strict = false);

/// All 4q branches (q base points x {s,u} x {+,-}), ordered by
/// (kind, base_index, side) with stable first.
std::vector<ManifoldBranch> grow_all_branches(const BoundaryTable& table,
                                              const PeriodicOrbit& orbit, double N,
                                              const AnnulusGuard& guard,
                                              const GrowthParams& params = {}, int workers = 1);

enum class Fibering { Unresolved, OneFibered, SymmetricTwoFibered };

std::string to_string(Fibering f);

struct HomoclinicRecord {
    PhasePoint location;          // mod-1 representative
    int stable_branch = -1;       // indices into the branch array handed to the finder
    int unstable_branch = -1;
    Vec2 stable_tangent = Vec2::Zero(), unstable_tangent = Vec2::Zero();
    double angle = 0.0;           // angle between tangent lines, in [0, pi/2]
    double stable_arc = 0.0, unstable_arc = 0.0;
    int order = 1;
    double leading_coeff = 0.0;
    Fibering fibering = Fibering::Unresolved;
    std::vector<PhasePoint> orbit_window; // iterates f^i(Q), i = -L..L
    int window_half_width = 0;
    double fiber_neighborhood_lo = 0.0, fiber_neighborhood_hi = 0.0; // U_Q as an arc
    int fiber_index = 0;          // iterate carrying U_Q (0 for one-fibered at Q itself)
    int max_per_fiber = 1;
    bool zero_section_iterate = false; // some window iterate within 1e-6 of phi = 0
};

struct HomoclinicSearch {
    std::vector<HomoclinicRecord> records;
    bool coincidence_suspected = false;
    int coincident_pairs = 0;
};

struct IntersectParams {
    double merge_tol = 1e-8;
    double refine_residual = 1e-10;
    double coincide_tol = 1e-9;
    double coincide_fraction = 0.5;
};

/// All transversal intersections between the stable and the unstable branch
/// polylines: segment sweep, then Newton on local cubic models. Branch pairs
/// that coincide within coincide_tol are reported, not enumerated.
HomoclinicSearch find_homoclinics(const std::vector<ManifoldBranch>& branches,
                                  const IntersectParams& params = {});

struct JetFit {
    int order = 1;
    double leading_coeff = 0.0;
    std::vector<double> coeffs; // a_k of the unstable-minus-stable graph
    double residual = 0.0;
};

/// Order of the homoclinic point: adapted affine chart flattening the stable
/// tangent, degree-6 least-squares jets of both graphs, order = first
/// coefficient of the difference jet above the noise-aware threshold.
JetFit tangency_order(const std::vector<ManifoldBranch>& branches, const HomoclinicRecord& record,
                      double window, double jet_tol = 1e-6);

/// Iterates of a point along its (numerically homoclinic) orbit with a
/// captured tail: once inside the local radius the deviation from the
/// periodic orbit evolves under the per-step differential and is re-projected
/// onto the contracting eigenline, so deep iterates stay pinned instead of
/// drifting off the manifold and roaming.
std::vector<PhasePoint> march_homoclinic(const BoundaryTable& table, const PeriodicOrbit& orbit,
                                         const std::vector<EigenFrame>& frames, PhasePoint start,
                                         const AnnulusGuard& guard, int count, bool forward);

struct FiberingParams {
    double fiber_tol = 1e-6;
    double zero_tol = 1e-6;
    int max_window = 60;
    int gap_window = 80; // deep iterates examined when sizing U_Q
};

/// Fibering classification of the record's orbit (one-fibered / symmetric
/// two-fibered / unresolved) with the fiber neighborhood U_Q. Fills the
/// record's orbit window and per-fiber statistics in place.
void classify_fibering(const BoundaryTable& table, const PeriodicOrbit& orbit,
                       HomoclinicRecord& record, const std::vector<ManifoldBranch>& branches,
                       const AnnulusGuard& guard, const FiberingParams& params = {});

/// Pull a polyline computed in the chart of `pert` (built by perturbed_table
/// on top of `base`'s chart) back to the base chart. phi is chart-invariant.
std::vector<PhasePoint> pull_back(const BoundaryTable& pert, const std::vector<PhasePoint>& pts);

struct PhaseWindow {
    double s_lo = 0.0, s_hi = 0.0;     // arc on T (s_lo <= s <= s_hi after unwrap)
    double phi_lo = 0.0, phi_hi = 0.0;
    bool contains(const PhasePoint& x) const;
};

struct WindowCountReport {
    int count_before = 0;
    int count_after = 0;
    int order_bound = 0; // order of the unperturbed record, 0 if window empty
    bool bound_ok = true;
};

/// Rouche-type count check: recompute the manifolds on the perturbed table,
/// pull back, and verify card(records in K) <= order of the unperturbed
/// record (Lemma-style bound). K must isolate at most one unperturbed record.
WindowCountReport count_homoclinics_in_window(
    const BoundaryTable& base, const BoundaryTable& pert, const PeriodicOrbit& base_orbit,
    const std::vector<HomoclinicRecord>& base_records, const PhaseWindow& K, double N,
    const AnnulusGuard& guard, const GrowthParams& growth = {}, int workers = 1);

} // namespace forge
