#include "forge/curve_checks.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "forge/errors.hpp"

namespace forge {

CurveReport certify_curve(const FourierCurve& curve, int curvature_samples,
                          int embed_samples, double curvature_margin) {
    CurveReport rep;

    // Tangent winding: a closed curve with nonvanishing curvature is embedded
    // iff its tangent winds exactly once. This catches loops (limacon-type
    // self intersections) that an arbitrary finite sample set misses.
    double winding = 0.0;
    double prev = std::atan2(curve.evaluate(0.0, 1).y(), curve.evaluate(0.0, 1).x());
    const int W = curvature_samples;
    for (int i = 1; i <= W; ++i) {
        Vec2 t = curve.evaluate(static_cast<double>(i) / W, 1);
        double ang = std::atan2(t.y(), t.x());
        double d = ang - prev;
        while (d > kPi) d -= kTwoPi;
        while (d < -kPi) d += kTwoPi;
        winding += d;
        prev = ang;
    }
    rep.turning_number = winding / kTwoPi;

    // pairwise sample distances
    std::vector<Vec2> pts(embed_samples);
    for (int i = 0; i < embed_samples; ++i)
        pts[i] = curve.evaluate(static_cast<double>(i) / embed_samples, 0);
    double min_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < embed_samples; ++i)
        for (int j = i + 1; j < embed_samples; ++j)
            min_d = std::min(min_d, (pts[i] - pts[j]).norm());
    rep.min_pairwise_dist = min_d;

    // curvature sign (after unit-perimeter normalization curvature is O(2 pi),
    // so the margin threshold is scale-free)
    double per = 0.0;
    {
        const int N = curvature_samples;
        for (int i = 0; i < N; ++i)
            per += curve.evaluate((i + 0.5) / N, 1).norm() / N;
    }
    rep.perimeter = per;
    double max_K = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < curvature_samples; ++i) {
        const double theta = static_cast<double>(i) / curvature_samples;
        const auto j = curve.jet(theta, 2);
        const double n1 = j[1].norm();
        if (n1 < 1e-12) throw DegenerateTangent("certify_curve: |gamma'| ~ 0");
        const double K = -wedge(j[1], j[2]) / (n1 * n1 * n1);
        max_K = std::max(max_K, K * per); // normalized-scale curvature
    }
    rep.max_curvature = max_K;

    rep.embedded = (std::abs(rep.turning_number - 1.0) < 0.25) && (min_d > 0.0);
    rep.convex = (max_K < curvature_margin);
    return rep;
}

BoundaryTable make_table(const FourierCurve& curve, int nodes) {
    const CurveReport rep = certify_curve(curve);
    if (!rep.embedded) {
        std::ostringstream os;
        os << "tangent winding " << rep.turning_number << ", min pairwise sample distance "
           << rep.min_pairwise_dist;
        throw NotEmbedded(os.str());
    }
    if (!rep.convex) {
        std::ostringstream os;
        os << "max normalized curvature " << rep.max_curvature << " (needs < -1e-8)";
        throw NotConvex(os.str());
    }
    return BoundaryTable(curve, nodes);
}

BoundaryTable perturbed_table(const BoundaryTable& base, const PerturbationView& eta, int nodes) {
    PerturbedBoundary pb(base, eta);
    // convexity precondition of the deformation, with the worst sample reported
    double worst = -std::numeric_limits<double>::infinity();
    double worst_s = 0.0;
    const int N = 4096;
    for (int i = 0; i < N; ++i) {
        const double s = static_cast<double>(i) / N;
        const double K = pb.curvature(s);
        if (K > worst) {
            worst = K;
            worst_s = s;
        }
    }
    if (worst >= -1e-8) {
        std::ostringstream os;
        os << "worst curvature " << worst << " at s=" << worst_s;
        throw ConvexityLost(os.str());
    }
    FourierCurve refit = fit_fourier([&pb](double s) { return pb.point(s); });
    return make_table(refit, nodes);
}

BoundaryTable perturbed_table(const BoundaryTable& base, const NormalPerturbation& lambda, int nodes) {
    return perturbed_table(base, view_of(lambda), nodes);
}

} // namespace forge
