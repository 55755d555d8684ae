#pragma once

#include "forge/arclength.hpp"
#include "forge/fourier.hpp"
#include "forge/perturbation.hpp"

namespace forge {

struct CurveReport {
    bool embedded = false;
    bool convex = false;
    double turning_number = 0.0;   // winding of the tangent, +1 for anticlockwise embeddings
    double min_pairwise_dist = 0.0;
    double max_curvature = 0.0;    // max over samples of signed curvature (want < 0)
    double perimeter = 0.0;
};

/// Sample-based certification (4096 curvature samples, 1024-point pairwise
/// embedding check, tangent winding). Convention: accepted tables are
/// anticlockwise with strictly negative signed curvature.
CurveReport certify_curve(const FourierCurve& curve, int curvature_samples = 4096,
                          int embed_samples = 1024, double curvature_margin = -1e-8);

/// Validate invariants and build the unit-perimeter arclength table.
/// Throws NotEmbedded / NotConvex.
BoundaryTable make_table(const FourierCurve& curve, int nodes = 4096);

/// Apply a normal deformation in the table's arclength chart, refit the
/// result to a Fourier series (spectral accuracy), re-certify and rebuild.
/// The refit curve keeps the base arclength parameter, so
/// result.theta_of(s_new) recovers the base chart position.
BoundaryTable perturbed_table(const BoundaryTable& base, const PerturbationView& eta,
                              int nodes = 4096);
BoundaryTable perturbed_table(const BoundaryTable& base, const NormalPerturbation& lambda,
                              int nodes = 4096);

} // namespace forge
