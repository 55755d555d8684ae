#include "forge/splitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "forge/curve_checks.hpp"
#include "forge/errors.hpp"

namespace forge {

namespace {

Vec2 jet_of(const PerturbationView& eta, double s) { return Vec2(eta.f0(s), eta.f1(s)); }
Vec2 djet_of(const PerturbationView& eta, double s) { return Vec2(eta.f1(s), eta.f2(s)); }

} // namespace

Mat2 FirstOrderField::matA(const BoundaryTable& table, const ChordData& chord) {
    const double sp = std::sin(chord.phi);
    const double c1 = std::cos(chord.phi1);
    const double K1 = table.curvature(chord.s1);
    Mat2 A;
    A << sp, chord.tau,
         sp * K1, K1 * chord.tau + c1;
    return -A / c1;
}

Mat2 FirstOrderField::matB(const BoundaryTable& table, const ChordData& chord) {
    const double s1 = std::sin(chord.phi1);
    const double c1 = std::cos(chord.phi1);
    const double K1 = table.curvature(chord.s1);
    Mat2 B;
    B << s1, 0.0,
         s1 * K1, c1;
    return B / c1;
}

Vec2 FirstOrderField::value_on_chord(const ChordData& chord) const {
    const double sp = std::sin(chord.phi), sp1 = std::sin(chord.phi1);
    const double c1 = std::cos(chord.phi1);
    const double bracket = eta_.f1(chord.s) * chord.tau + eta_.f0(chord.s) * sp -
                           eta_.f0(chord.s1) * sp1;
    const double K1 = table_->curvature(chord.s1);
    return Vec2(-bracket / c1,
                -K1 * bracket / c1 + (eta_.f1(chord.s1) - eta_.f1(chord.s)));
}

Vec2 FirstOrderField::value_on_chord_AB(const ChordData& chord) const {
    return matA(*table_, chord) * jet_of(eta_, chord.s) + matB(*table_, chord) * jet_of(eta_, chord.s1);
}

Vec2 FirstOrderField::value(const PhasePoint& x) const {
    auto [y, chord] = step(*table_, x, guard_);
    (void)y;
    return value_on_chord(chord);
}

Mat2 FirstOrderField::jacobian(const PhasePoint& x) const {
    auto [y, chord] = step(*table_, x, guard_);
    (void)y;
    return jacobian_on_chord(chord, differential(*table_, chord));
}

Mat2 FirstOrderField::jacobian_on_chord(const ChordData& chord, const Mat2& df) const {
    const double s = chord.s, s1 = chord.s1, t = chord.tau;
    const double sp = std::sin(chord.phi), cp = std::cos(chord.phi);
    const double sp1 = std::sin(chord.phi1), cp1 = std::cos(chord.phi1);
    const auto j1 = table_->jet(s1);
    const double K1 = j1.K, K1d = j1.Kdot;
    const auto [dth1, dth2] = tau_hat_partials(*table_, chord);

    Mat2 A = matA(*table_, chord);
    Mat2 B = matB(*table_, chord);

    Mat2 dA_s, dA_phi, dA_s1, dA_phi1, dB_s1, dB_phi1, unit22, tmp;
    dA_s << 0.0, dth1, 0.0, K1 * dth1;
    dA_s = -dA_s / cp1;
    dA_phi << cp, dth2, cp * K1, K1 * dth2;
    dA_phi = -dA_phi / cp1;
    dA_s1 << 0.0, 0.0, sp * K1d, K1d * t;
    dA_s1 = -dA_s1 / cp1;
    unit22 << 0.0, 0.0, 0.0, 1.0;
    dA_phi1 = (sp1 / cp1) * (A + unit22);
    dB_s1 << 0.0, 0.0, sp1 * K1d, 0.0;
    dB_s1 = dB_s1 / cp1;
    tmp << 1.0, 0.0, K1, -sp1 / cp1;
    dB_phi1 = (sp1 / cp1) * B + tmp;

    const double ds1_ds = df(0, 0), ds1_dphi = df(0, 1);
    const double dphi1_ds = df(1, 0), dphi1_dphi = df(1, 1);

    const Vec2 e_s = jet_of(eta_, s), de_s = djet_of(eta_, s);
    const Vec2 e_s1 = jet_of(eta_, s1), de_s1 = djet_of(eta_, s1);

    Mat2 out;
    out.col(0) = (dA_s + ds1_ds * dA_s1 + dphi1_ds * dA_phi1) * e_s + A * de_s +
                 (ds1_ds * dB_s1 + dphi1_ds * dB_phi1) * e_s1 + ds1_ds * (B * de_s1);
    out.col(1) = (dA_phi + ds1_dphi * dA_s1 + dphi1_dphi * dA_phi1) * e_s +
                 (ds1_dphi * dB_s1 + dphi1_dphi * dB_phi1) * e_s1 + ds1_dphi * (B * de_s1);
    return out;
}

MelnikovMatrix MelnikovMatrix::at(double curvature_s, double phi, double phi1) {
    const double sp = std::sin(phi), cp = std::cos(phi), cp1 = std::cos(phi1);
    MelnikovMatrix m;
    m.T << sp * (cp + cp1), 0.0,
           -curvature_s * sp * (cp - cp1), cp * (cp + cp1);
    return m;
}

SplittingFrame make_frame(const HomoclinicRecord& record,
                          const std::vector<ManifoldBranch>& branches) {
    SplittingFrame f;
    f.Q = record.location;
    f.t0 = record.stable_tangent.normalized();
    f.n0 = rotate_ccw(f.t0);
    f.t0u = record.unstable_tangent.normalized();
    if (f.t0u.dot(f.t0) < 0.0) f.t0u = -f.t0u;
    f.stable_branch = record.stable_branch;
    f.unstable_branch = record.unstable_branch;
    const auto& sb = branches[static_cast<std::size_t>(record.stable_branch)];
    const auto& ub = branches[static_cast<std::size_t>(record.unstable_branch)];
    f.s_base = sb.base_index;
    f.s_side = sb.side;
    f.u_base = ub.base_index;
    f.u_side = ub.side;
    f.stable_arc = record.stable_arc;
    f.unstable_arc = record.unstable_arc;
    f.fibering = record.fibering;
    f.fiber_index = record.fiber_index;
    f.u_lo = record.fiber_neighborhood_lo;
    f.u_hi = record.fiber_neighborhood_hi;
    f.angle = record.angle;
    return f;
}

namespace {

struct LocalCurve {
    std::array<double, 4> u{};
    std::array<Vec2, 4> p{};
    int n = 0;

    Vec2 eval(double t) const {
        Vec2 acc = Vec2::Zero();
        for (int i = 0; i < n; ++i) {
            double w = 1.0;
            for (int j = 0; j < n; ++j)
                if (j != i) w *= (t - u[j]) / (u[i] - u[j]);
            acc += w * p[i];
        }
        return acc;
    }
    Vec2 deriv(double t) const {
        Vec2 acc = Vec2::Zero();
        for (int i = 0; i < n; ++i) {
            double dw = 0.0;
            for (int k = 0; k < n; ++k) {
                if (k == i) continue;
                double term = 1.0 / (u[i] - u[k]);
                for (int j = 0; j < n; ++j)
                    if (j != i && j != k) term *= (t - u[j]) / (u[i] - u[j]);
                dw += term;
            }
            acc += dw * p[i];
        }
        return acc;
    }
};

struct Crossing {
    Vec2 xi;   // position relative to Q in the (s, phi) plane
    Vec2 T;    // curve tangent (d point / d arc)
    double offset; // coordinate along n0
};

/// Nearest crossing of a polyline with the line through Q orthogonal to t0.
std::optional<Crossing> line_crossing(const std::vector<PhasePoint>& pts,
                                      const std::vector<double>& arc,
                                      const SplittingFrame& frame) {
    std::vector<Vec2> rel(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        rel[i] = Vec2(circle_dist(mod1(pts[i].s), frame.Q.s), pts[i].phi - frame.Q.phi);

    std::optional<Crossing> best;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double g0 = rel[i].dot(frame.t0), g1 = rel[i + 1].dot(frame.t0);
        const double u0 = rel[i].dot(frame.n0), u1 = rel[i + 1].dot(frame.n0);
        if (std::abs(u0) > frame.window || std::abs(u1) > frame.window) continue;
        if (std::abs(g0) > frame.window || std::abs(g1) > frame.window) continue;
        if (g0 * g1 > 0.0) continue;
        // local cubic in the relative chart
        LocalCurve c;
        const std::size_t lo = (i == 0) ? 0 : i - 1;
        const std::size_t hi = std::min(pts.size() - 1, i + 2);
        for (std::size_t k = lo; k <= hi && c.n < 4; ++k) {
            c.u[c.n] = arc[k];
            c.p[c.n] = rel[k];
            ++c.n;
        }
        double t = 0.5 * (arc[i] + arc[i + 1]);
        bool ok = false;
        for (int it = 0; it < 30; ++it) {
            const double g = c.eval(t).dot(frame.t0);
            if (std::abs(g) < 1e-13) {
                ok = true;
                break;
            }
            const double dg = c.deriv(t).dot(frame.t0);
            if (std::abs(dg) < 1e-300) break;
            t -= g / dg;
        }
        if (!ok) continue;
        Crossing cr;
        cr.xi = c.eval(t);
        cr.T = c.deriv(t);
        cr.offset = cr.xi.dot(frame.n0);
        if (!best || std::abs(cr.offset) < std::abs(best->offset)) best = cr;
    }
    return best;
}

/// Tangent direction of the stable/unstable manifold through x, computed by
/// contracting a generic vector through N differentials along the orbit of x
/// (error (lambda_s/lambda_u)^N); far more accurate than polyline secants.
Vec2 manifold_tangent(const BoundaryTable& table, const AnnulusGuard& guard, PhasePoint x,
                      char kind, int steps) {
    const Vec2 w(0.3719, 1.0);
    if (kind == 's') {
        Mat2 A = Mat2::Identity();
        PhasePoint y = x;
        for (int i = 0; i < steps; ++i) {
            auto [yn, ch] = step(table, y, guard);
            A = differential(table, ch) * A;
            y = yn;
        }
        return A.fullPivLu().solve(w).normalized();
    }
    Mat2 A = Mat2::Identity();
    PhasePoint y = x;
    for (int i = 0; i < steps; ++i) {
        auto [yn, ch] = step_inverse(table, y, guard);
        A = A * differential(table, ch);
        y = yn;
    }
    return (A * w).normalized();
}

} // namespace

PhiValue measure_phi(const BoundaryTable& base, const PeriodicOrbit& base_orbit,
                     const SplittingFrame& frame, const NormalPerturbation& lambda,
                     const AnnulusGuard& guard, const GrowthParams& growth) {
    const bool trivial = lambda.is_zero();
    std::optional<BoundaryTable> pert_storage;
    const BoundaryTable* work = &base;
    if (!trivial) {
        pert_storage = perturbed_table(base, lambda);
        work = &*pert_storage;
    }

    PeriodicOrbit orb = base_orbit;
    if (!trivial) {
        std::vector<double> cfg = map_config_to(*work, base_orbit.config, base_orbit.rotation.p);
        if (!newton_polish(*work, base_orbit.rotation, guard, cfg))
            throw ContinuationLost("periodic orbit continuation failed in measure_phi");
        orb = build_orbit(*work, base_orbit.rotation, guard, cfg);
    }
    const auto frames = eigen_frames(*work, orb);

    auto branch_pulled = [&](int base_index, char kind, int side, double arc_budget) {
        ManifoldBranch br = grow_branch(*work, orb, frames, base_index, kind, side,
                                        arc_budget, guard, growth);
        if (!trivial) {
            br.points = pull_back(*work, br.points);
            for (std::size_t i = 1; i < br.points.size(); ++i)
                br.arc[i] = br.arc[i - 1] + std::hypot(br.points[i].s - br.points[i - 1].s,
                                                       br.points[i].phi - br.points[i - 1].phi);
        }
        return br;
    };

    const ManifoldBranch sb =
        branch_pulled(frame.s_base, 's', frame.s_side, frame.stable_arc + 0.5);
    const ManifoldBranch ub =
        branch_pulled(frame.u_base, 'u', frame.u_side, frame.unstable_arc + 0.5);

    const auto cs = line_crossing(sb.points, sb.arc, frame);
    const auto cu = line_crossing(ub.points, ub.arc, frame);
    if (!cs || !cu)
        throw ContinuationLost("branch no longer crosses l_Q inside the frame window");

    // map-based tangents at the crossings (the polyline secants carry O(h^3)
    // noise, visible in Phi2 at the 1e-8 scale)
    const int tangent_steps = 8 * orb.rotation.q;
    auto tangent_at = [&](const Crossing& cr, char kind) {
        PhasePoint xb{mod1(frame.Q.s + cr.xi.x()), frame.Q.phi + cr.xi.y()};
        Vec2 T;
        if (trivial) {
            T = manifold_tangent(*work, guard, xb, kind, tangent_steps);
        } else {
            const double theta = xb.s;
            PhasePoint xt{work->s_of_theta(theta), xb.phi};
            T = manifold_tangent(*work, guard, xt, kind, tangent_steps);
            T = Vec2(T.x() / work->dsigma(theta), T.y()).normalized();
        }
        return T;
    };

    PhiValue out;
    out.phi1 = wedge(frame.t0, cu->xi - cs->xi);
    auto normalize = [&](Vec2 T) {
        double proj = T.dot(frame.t0);
        if (proj < 0.0) {
            T = -T;
            proj = -proj;
        }
        if (std::abs(proj) < 1e-12) throw TangentVertical("branch tangent orthogonal to t0 on l_Q");
        return Vec2(T / proj); // now that - t0 is orthogonal to t0
    };
    out.phi2 = wedge(frame.t0, normalize(tangent_at(*cu, 'u')) - normalize(tangent_at(*cs, 's')));
    return out;
}

HomoclinicOrbitData build_homoclinic_orbit(const BoundaryTable& table, const PeriodicOrbit& orbit,
                                           const SplittingFrame& frame, const AnnulusGuard& guard,
                                           int M) {
    const auto frames = eigen_frames(table, orbit);

    HomoclinicOrbitData data;
    data.M = M;
    data.pts.resize(static_cast<std::size_t>(2 * M + 2));
    data.chords.resize(static_cast<std::size_t>(2 * M + 1));
    data.df.resize(static_cast<std::size_t>(2 * M + 1));
    data.tangent.resize(static_cast<std::size_t>(2 * M + 2));
    data.tangent_u.resize(static_cast<std::size_t>(2 * M + 2));
    data.cphi.resize(static_cast<std::size_t>(2 * M + 2));

    data.pts[static_cast<std::size_t>(M)] = frame.Q;
    {
        const auto fwd = march_homoclinic(table, orbit, frames, frame.Q, guard, M + 1, true);
        const auto bwd = march_homoclinic(table, orbit, frames, frame.Q, guard, M, false);
        for (int i = 1; i <= M + 1; ++i) data.pts[static_cast<std::size_t>(M + i)] = fwd[static_cast<std::size_t>(i - 1)];
        for (int i = 1; i <= M; ++i) data.pts[static_cast<std::size_t>(M - i)] = bwd[static_cast<std::size_t>(i - 1)];
    }
    for (int i = -M; i <= M; ++i) {
        const PhasePoint& a = data.at(i);
        const PhasePoint& b = data.pts[static_cast<std::size_t>(i + M + 1)];
        ChordData c;
        c.s = a.s;
        c.s1 = b.s;
        c.tau = tau(table, a.s, b.s);
        c.phi = a.phi;
        c.phi1 = b.phi;
        data.chords[static_cast<std::size_t>(i + M)] = c;
        data.df[static_cast<std::size_t>(i + M)] = differential(table, c);
    }
    for (int i = -M; i <= M + 1; ++i)
        data.cphi[static_cast<std::size_t>(i + M)] = std::cos(data.pts[static_cast<std::size_t>(i + M)].phi);

    // Transport the two tangent families. In the captured zone the decaying
    // family is re-projected onto its eigenline: the transported stable
    // tangent reaches its decay floor after ~log(1/eps)/log(lambda) steps and
    // roundoff would re-excite the expanding direction past it.
    const int q = orbit.rotation.q;
    auto near_index = [&](const PhasePoint& x, double& dist) {
        int best = 0;
        dist = std::numeric_limits<double>::infinity();
        for (int k = 0; k < q; ++k) {
            const double d = std::hypot(circle_dist(mod1(x.s), mod1(orbit.config[k])),
                                        x.phi - orbit.angles[k]);
            if (d < dist) {
                dist = d;
                best = k;
            }
        }
        return best;
    };
    auto project_line = [&](const Vec2& v, const PhasePoint& x, bool stable) {
        double d;
        const int k = near_index(x, d);
        if (d > 1e-4) return v;
        const Vec2 vs = frames[static_cast<std::size_t>(k)].v_s;
        const Vec2 vu = frames[static_cast<std::size_t>(k)].v_u;
        const double den = wedge(vs, vu);
        return stable ? Vec2((wedge(v, vu) / den) * vs) : Vec2((-wedge(v, vs) / den) * vu);
    };

    data.cos_theta = frame.t0u.dot(frame.t0);
    data.tangent[static_cast<std::size_t>(M)] = frame.t0;
    data.tangent_u[static_cast<std::size_t>(M)] = frame.t0u;
    for (int i = 0; i < M + 1; ++i) {
        const PhasePoint& xn = data.pts[static_cast<std::size_t>(M + i + 1)];
        data.tangent[static_cast<std::size_t>(M + i + 1)] = project_line(
            data.Df(i) * data.tangent[static_cast<std::size_t>(M + i)], xn, true);
        data.tangent_u[static_cast<std::size_t>(M + i + 1)] =
            data.Df(i) * data.tangent_u[static_cast<std::size_t>(M + i)];
    }
    for (int i = 0; i > -M; --i) {
        const PhasePoint& xn = data.pts[static_cast<std::size_t>(M + i - 1)];
        data.tangent[static_cast<std::size_t>(M + i - 1)] =
            data.Df(i - 1).fullPivLu().solve(data.tangent[static_cast<std::size_t>(M + i)]);
        data.tangent_u[static_cast<std::size_t>(M + i - 1)] = project_line(
            data.Df(i - 1).fullPivLu().solve(data.tangent_u[static_cast<std::size_t>(M + i)]), xn,
            false);
    }
    return data;
}

namespace {

struct ShellSum {
    double acc = 0.0;
    double tail = 0.0;
    int M_used = 0;
    bool converged = false;
};

/// Sum term(0), then shells (+j, -j) outward, stopping when two consecutive
/// shells fall below shell_tol relative to the running magnitude.
template <typename TermFn>
ShellSum shell_sum(int M, const TermFn& term, double shell_tol) {
    ShellSum s;
    s.acc = term(0);
    double scale = std::max(std::abs(s.acc), 1e-18);
    int quiet = 0;
    for (int j = 1; j <= M; ++j) {
        const double tp = term(j);
        const double tm = term(-j);
        s.acc += tp + tm;
        scale = std::max(scale, std::abs(s.acc));
        const double shell = std::abs(tp) + std::abs(tm);
        s.M_used = j;
        s.tail = shell;
        if (shell < shell_tol * scale) {
            if (++quiet >= 2) {
                s.converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    return s;
}

} // namespace

MelnikovResult melnikov_dphi1(const BoundaryTable& table, const PeriodicOrbit& orbit,
                              const SplittingFrame& frame, const PerturbationView& eta,
                              const AnnulusGuard& guard, const MelnikovOptions& opts) {
    const auto data = build_homoclinic_orbit(table, orbit, frame, guard, opts.M_cap);
    FirstOrderField field(table, eta, guard);
    const double c0 = data.c(0);
    const double ct = data.cos_theta;
    // forward leg rides the stable tangents, backward leg the unstable ones;
    // the backward normalization t0u ^ n0 = cos(theta) restores the frame
    auto term = [&](int i) {
        const Vec2 h = field.value_on_chord(data.chord(i));
        if (i >= 0) return (data.c(i + 1) / c0) * wedge(data.t(i + 1), h);
        return (data.c(i + 1) / (c0 * ct)) * wedge(data.tu(i + 1), h);
    };
    const ShellSum s = shell_sum(data.M, term, opts.shell_tol);
    MelnikovResult out;
    out.value = s.acc;
    out.M = s.M_used;
    out.tail = s.tail;
    if (!s.converged && s.tail > opts.tail_tol * std::max(std::abs(s.acc), 1e-15))
        throw TailNotConverged("dPhi1 tail estimate " + std::to_string(s.tail));
    return out;
}

MelnikovResult melnikov_dphi2(const BoundaryTable& table, const PeriodicOrbit& orbit,
                              const SplittingFrame& frame, const PerturbationView& eta,
                              const AnnulusGuard& guard, const MelnikovOptions& opts) {
    const auto data = build_homoclinic_orbit(table, orbit, frame, guard, opts.M_cap);
    FirstOrderField field(table, eta, guard);
    const double c0 = data.c(0);
    const double ct = data.cos_theta;
    const int M = data.M;

    // fields along the orbit
    std::vector<Vec2> h(static_cast<std::size_t>(2 * M + 1));
    for (int i = -M; i <= M; ++i)
        h[static_cast<std::size_t>(i + M)] = field.value_on_chord(data.chord(i));

    // delta legs with decaying boundary conditions: t ^ deltaQ0 is fixed by
    // the one-sided weighted sums, then the variational recursion transports
    // delta along the orbit (roundoff in the transported expanding component
    // is annihilated against the decaying tangent family in the wedge terms)
    double Sf = 0.0, Sb = 0.0;
    for (int j = 0; j <= M; ++j)
        Sf += (data.c(j + 1) / c0) * wedge(data.t(j + 1), h[static_cast<std::size_t>(j + M)]);
    for (int j = -M; j < 0; ++j)
        Sb += (data.c(j + 1) / c0) * wedge(data.tu(j + 1), h[static_cast<std::size_t>(j + M)]);
    std::vector<Vec2> delta(static_cast<std::size_t>(2 * M + 1), Vec2::Zero());
    // stable leg: t0 ^ delta0s = -Sf, delta0s along n0, t0 ^ n0 = 1
    delta[static_cast<std::size_t>(M)] = -Sf * frame.n0;
    for (int i = 0; i < M; ++i)
        delta[static_cast<std::size_t>(i + 1 + M)] =
            data.Df(i) * delta[static_cast<std::size_t>(i + M)] + h[static_cast<std::size_t>(i + M)];
    // unstable leg: t0u ^ delta0u = Sb, delta0u along n0, t0u ^ n0 = cos(theta)
    Vec2 cur = (Sb / ct) * frame.n0;
    for (int i = 0; i > -M; --i) {
        cur = data.Df(i - 1).fullPivLu().solve(cur - h[static_cast<std::size_t>(i - 1 + M)]);
        delta[static_cast<std::size_t>(i - 1 + M)] = cur;
    }

    auto d2f_apply = [&](int i, const Vec2& u, const Vec2& v) {
        const auto D2 = second_differential(table, data.at(i), guard);
        return Vec2(u.x() * (D2[0] * v) + u.y() * (D2[1] * v));
    };

    // dPhi2 = alpha_u / cos^2(theta) - alpha_s with the leg telescopes
    double w_sum = 0.0;
    auto term = [&](int i) {
        const bool fwd = (i >= 0);
        const Vec2& ti = fwd ? data.t(i) : data.tu(i);
        const Vec2& ti1 = fwd ? data.t(i + 1) : data.tu(i + 1);
        const double leg = fwd ? 1.0 : 1.0 / (ct * ct);
        const Mat2 Dh = field.jacobian_on_chord(data.chord(i), data.Df(i));
        const Vec2 f1 = Dh * ti;
        const Vec2 f2 = d2f_apply(i, delta[static_cast<std::size_t>(i + M)], ti);
        const double wfac = leg * data.c(i + 1) / c0;
        w_sum += wfac * wedge(ti1, f2);
        return wfac * wedge(ti1, f1 + f2);
    };
    const ShellSum s = shell_sum(M, term, opts.shell_tol);
    MelnikovResult out;
    out.value = s.acc;
    out.M = s.M_used;
    out.tail = s.tail;
    out.w = w_sum;
    if (!s.converged && s.tail > opts.tail_tol * std::max(std::abs(s.acc), 1e-15))
        throw TailNotConverged("dPhi2 tail estimate " + std::to_string(s.tail));
    return out;
}

namespace {

double w_part_only(const BoundaryTable& table, const PeriodicOrbit& orbit,
                   const SplittingFrame& frame, const PerturbationView& eta,
                   const AnnulusGuard& guard, const MelnikovOptions& opts) {
    return melnikov_dphi2(table, orbit, frame, eta, guard, opts).w;
}

} // namespace

namespace {

/// Collapsed pair of weighted sum terms (j = l-1, l) when supp eta only
/// touches the fiber of s_l:
///   (cos phi_l / cos phi_0) t_l ^ ([[2 tan phi_l, 0],[0, 2]] (eta, deta)(s_l)),
/// with the tangent family and normalization of the leg the pair lives on.
double collapsed_pair(const HomoclinicOrbitData& data, const PerturbationView& eta, int l,
                      double c0, double ct) {
    const double sl = data.at(l).s;
    const double tanl = std::tan(data.at(l).phi);
    if (l >= 1) {
        const Vec2 tl = data.t(l);
        return (data.c(l) / c0) * (2.0 * tl.x() * eta.f1(sl) - 2.0 * tl.y() * tanl * eta.f0(sl));
    }
    if (l <= -1) {
        const Vec2 tl = data.tu(l);
        return (data.c(l) / (c0 * ct)) *
               (2.0 * tl.x() * eta.f1(sl) - 2.0 * tl.y() * tanl * eta.f0(sl));
    }
    throw NotOneFibered("collapsed pair straddles both legs at l = 0");
}

double collapsed_pair_second(const HomoclinicOrbitData& data, const PerturbationView& eta, int l,
                             double c0, double ct) {
    const double sl = data.at(l).s;
    if (l >= 1) {
        const double t1 = data.t(l).x();
        return (data.c(l) / c0) * 2.0 * eta.f2(sl) * t1 * t1;
    }
    if (l <= -1) {
        const double t1 = data.tu(l).x();
        return (data.c(l) / (c0 * ct * ct)) * 2.0 * eta.f2(sl) * t1 * t1;
    }
    throw NotOneFibered("collapsed pair straddles both legs at l = 0");
}

} // namespace

ClosedFormResult closed_form_one_fibered(const BoundaryTable& table, const PeriodicOrbit& orbit,
                                         const SplittingFrame& frame, const PerturbationView& eta,
                                         const AnnulusGuard& guard, const MelnikovOptions& opts) {
    if (frame.fibering != Fibering::OneFibered)
        throw NotOneFibered("closed_form_one_fibered on a frame without the one-fibered class");
    const int l = frame.fiber_index;
    const int M = std::max(std::abs(l) + 2, 8);
    const auto data = build_homoclinic_orbit(table, orbit, frame, guard, M);
    const double c0 = data.c(0);
    const double ct = data.cos_theta;

    ClosedFormResult out;
    if (l != 0) {
        out.dphi1 = collapsed_pair(data, eta, l, c0, ct);
        out.dphi2_leading = collapsed_pair_second(data, eta, l, c0, ct);
    } else {
        // the support pair straddles the legs: forward term through
        // Df^{-1} A, backward term through B at the reference chord
        const ChordData& ch = data.chord(0);
        const Mat2 G1 = data.Df(0).fullPivLu().solve(FirstOrderField::matA(table, ch));
        const Mat2 G2 = FirstOrderField::matB(table, data.chord(-1));
        const Vec2 e(eta.f0(frame.Q.s), eta.f1(frame.Q.s));
        out.dphi1 = wedge(frame.t0, Vec2(G1 * e)) + wedge(frame.t0u, Vec2(G2 * e)) / ct;
        const double q2 = eta.f2(frame.Q.s);
        out.dphi2_leading = q2 * frame.t0.x() * frame.t0.x() +
                            q2 * frame.t0u.x() * frame.t0u.x() / (ct * ct);
    }
    out.w = w_part_only(table, orbit, frame, eta, guard, opts);
    out.dphi2 = out.dphi2_leading + out.w;
    return out;
}

ClosedFormResult closed_form_two_fibered(const BoundaryTable& table, const PeriodicOrbit& orbit,
                                         const SplittingFrame& frame, const PerturbationView& eta,
                                         const AnnulusGuard& guard, const MelnikovOptions& opts) {
    if (frame.fibering != Fibering::SymmetricTwoFibered)
        throw NotSymmetricTwoFibered("closed_form_two_fibered on a non symmetric-two-fibered frame");
    const int l = std::abs(frame.fiber_index);
    if (l == 0) throw NotSymmetricTwoFibered("two-fibered pair index must be nonzero");
    const int M = std::max(l + 2, 8);
    const auto data = build_homoclinic_orbit(table, orbit, frame, guard, M);
    const double c0 = data.c(0);
    const double ct = data.cos_theta;

    // involution symmetry of the inputs
    if (std::abs(circle_dist(mod1(data.at(-l).s), mod1(data.at(l).s))) > 1e-6 ||
        std::abs(data.at(-l).phi + data.at(l).phi) > 1e-6)
        throw NotSymmetricTwoFibered("iterates (l, -l) do not pair through the involution");

    ClosedFormResult out;
    out.dphi1 = collapsed_pair(data, eta, l, c0, ct) + collapsed_pair(data, eta, -l, c0, ct);
    out.dphi2_leading = collapsed_pair_second(data, eta, l, c0, ct) +
                        collapsed_pair_second(data, eta, -l, c0, ct);
    out.w = w_part_only(table, orbit, frame, eta, guard, opts);
    out.dphi2 = out.dphi2_leading + out.w;
    return out;
}

BasisPerturbations basis_perturbations(const BoundaryTable& table, const PeriodicOrbit& orbit,
                                       const SplittingFrame& frame, const AnnulusGuard& guard,
                                       double r, const MelnikovOptions& opts) {
    if (frame.fibering == Fibering::Unresolved)
        throw NotOneFibered("basis_perturbations requires a fibered frame");
    const int l = frame.fiber_index;
    const int Mmin = std::max(std::abs(l) + 2, 8);
    const auto data = build_homoclinic_orbit(table, orbit, frame, guard, Mmin);
    const Vec2 t_at_l = (l >= 0) ? data.t(l) : data.tu(l);
    if (std::abs(t_at_l.x()) < 1e-10)
        throw TangentVertical("pi1 t vanishes at the fibered iterate");

    const double span = mod1(frame.u_hi - frame.u_lo);
    const double center = mod1(frame.u_lo + 0.5 * span);
    const double half_width = std::min(0.45 * span, 0.2);
    if (half_width < 1e-5) throw NumericalFailure("fiber neighborhood too narrow for a bump");

    BasisPerturbations out;
    out.ell = l;
    out.bump1 = SupportedBump{center, half_width, 0.0, 1.0, 0.0};
    out.bump2 = SupportedBump{center, half_width, 0.0, 0.0, 1.0};

    auto closed = [&](const PerturbationView& v) {
        return frame.fibering == Fibering::OneFibered
                   ? closed_form_one_fibered(table, orbit, frame, v, guard, opts)
                   : closed_form_two_fibered(table, orbit, frame, v, guard, opts);
    };

    const ClosedFormResult cf1 = closed(view_of(out.bump1));
    const ClosedFormResult cf2u = closed(view_of(out.bump2));
    // scale bump2 so that dPhi2(lambda2) equals the leading coefficient alone
    const double D = cf2u.dphi2_leading;
    if (std::abs(D + cf2u.w) < 1e-300) throw NumericalFailure("degenerate dPhi2 for the basis bump");
    const double kappa = D / (D + cf2u.w);
    out.bump2.q = kappa;

    out.det_untruncated = cf1.dphi1 * D; // dPhi1(bump2) = 0 by the zero 1-jet
    if (std::abs(out.det_untruncated) < 1e-300)
        throw NumericalFailure("vanishing untruncated basis determinant");

    // truncate until the determinant both clears half of the untruncated
    // value and is stable under one more doubling of the cutoff
    int degree0 = 8;
    while (degree0 * half_width < 4.0 && degree0 < 512) degree0 *= 2;
    bool have_prev = false;
    NormalPerturbation prev1, prev2;
    Mat2 prevJ = Mat2::Zero();
    double prev_det = 0.0;
    int prev_degree = 0;
    for (int degree = degree0; degree <= 2048; degree *= 2) {
        NormalPerturbation l1 =
            NormalPerturbation::fit([&](double s) { return out.bump1.eval(s, 0); }, r, degree);
        NormalPerturbation l2 =
            NormalPerturbation::fit([&](double s) { return out.bump2.eval(s, 0); }, r, degree);
        const double a11 = melnikov_dphi1(table, orbit, frame, view_of(l1), guard, opts).value;
        const double a21 = melnikov_dphi2(table, orbit, frame, view_of(l1), guard, opts).value;
        const double a12 = melnikov_dphi1(table, orbit, frame, view_of(l2), guard, opts).value;
        const double a22 = melnikov_dphi2(table, orbit, frame, view_of(l2), guard, opts).value;
        const double det = a11 * a22 - a12 * a21;
        if (have_prev && std::abs(prev_det) >= 0.5 * std::abs(out.det_untruncated) &&
            std::abs(det - prev_det) < 0.01 * std::abs(det)) {
            out.lambda1 = prev1;
            out.lambda2 = prev2;
            out.det_truncated = prev_det;
            out.degree = prev_degree;
            out.jacobian = prevJ;
            return out;
        }
        have_prev = true;
        prev1 = l1;
        prev2 = l2;
        prev_det = det;
        prev_degree = degree;
        prevJ << a11, a12, a21, a22;
    }
    throw NumericalFailure("basis truncation did not stabilize the determinant");
}

BreakReport break_tangency(const BoundaryTable& base, const PeriodicOrbit& orbit,
                           const SplittingFrame& frame,
                           const std::vector<HomoclinicRecord>& base_records, double b,
                           const AnnulusGuard& guard, const GrowthParams& growth,
                           const BreakParams& params, const MelnikovOptions& opts) {
    if (std::abs(b) > params.b_cap)
        throw ConfigError("break_tangency: |b| exceeds the configured cap");

    BreakReport rep;
    const double r = 0.1;
    if (b == 0.0) {
        rep.lambda = NormalPerturbation(0.0, {}, {}, r);
        rep.phi_base = measure_phi(base, orbit, frame, rep.lambda, guard, growth);
        rep.target = rep.phi_base;
        rep.achieved = rep.phi_base;
        return rep;
    }

    const BasisPerturbations basis = basis_perturbations(base, orbit, frame, guard, r, opts);
    rep.phi_base = measure_phi(base, orbit, frame, NormalPerturbation(0.0, {}, {}, r), guard, growth);
    rep.target = PhiValue{rep.phi_base.phi1, rep.phi_base.phi2 + b};

    Eigen::Vector2d c(0.0, 0.0);
    Eigen::Vector2d residual(-0.0, -b);
    const Mat2 J = basis.jacobian;
    bool done = false;
    for (int it = 0; it < params.max_newton; ++it) {
        c -= J.fullPivLu().solve(residual).eval();
        NormalPerturbation lam = basis.lambda1.scaled(c[0]) + basis.lambda2.scaled(c[1]);
        const PhiValue phi = measure_phi(base, orbit, frame, lam, guard, growth);
        residual = Eigen::Vector2d(phi.phi1 - rep.target.phi1, phi.phi2 - rep.target.phi2);
        rep.newton_iters = it + 1;
        rep.achieved = phi;
        if (residual.norm() <= std::max(1e-3 * std::abs(b), 1e-10)) {
            done = true;
            break;
        }
    }
    if (!done) throw NewtonDiverged("break_tangency Newton did not reach the target");
    rep.c1 = c[0];
    rep.c2 = c[1];
    rep.lambda = basis.lambda1.scaled(rep.c1) + basis.lambda2.scaled(rep.c2);
    rep.norm_r = rep.lambda.strip_norm();

    // post state: rerun orbit + manifolds on the perturbed table
    const BoundaryTable pert = perturbed_table(base, rep.lambda);
    {
        auto survey = survey_maximizers(pert, orbit.rotation, guard, 8 * orbit.rotation.q,
                                        params.rng_seed, params.workers);
        if (survey.report.maximizer_clusters != 1)
            throw UniquenessLost("maximizing orbit no longer unique after the perturbation");
        std::vector<double> cfg = map_config_to(pert, orbit.config, orbit.rotation.p);
        if (!newton_polish(pert, orbit.rotation, guard, cfg))
            throw ContinuationLost("post-state orbit continuation failed");
        PeriodicOrbit orb2 = build_orbit(pert, orbit.rotation, guard, cfg);
        const double N = std::max(frame.stable_arc, frame.unstable_arc) + params.growth_margin;
        auto branches = grow_all_branches(pert, orb2, N, guard, growth, params.workers);
        for (auto& br : branches) {
            br.points = pull_back(pert, br.points);
            for (std::size_t i = 1; i < br.points.size(); ++i)
                br.arc[i] = br.arc[i - 1] + std::hypot(br.points[i].s - br.points[i - 1].s,
                                                       br.points[i].phi - br.points[i - 1].phi);
        }
        auto found = find_homoclinics(branches);
        // continued record: nearest to the frame point
        const HomoclinicRecord* bestr = nullptr;
        double bestd = std::numeric_limits<double>::infinity();
        for (const auto& rec : found.records) {
            const double d = std::hypot(circle_dist(rec.location.s, frame.Q.s),
                                        rec.location.phi - frame.Q.phi);
            if (d < bestd) {
                bestd = d;
                bestr = &rec;
            }
        }
        if (!bestr || bestd > frame.window)
            throw ContinuationLost("no continued homoclinic record inside the frame window");
        const JetFit jet = tangency_order(branches, *bestr, 0.01);
        rep.post_computed = true;
        rep.post_angle = bestr->angle;
        rep.post_order = jet.order;
        rep.post_location = bestr->location;

        PhaseWindow K;
        K.s_lo = mod1(frame.Q.s - frame.window);
        K.s_hi = K.s_lo + 2.0 * frame.window;
        K.phi_lo = frame.Q.phi - frame.window;
        K.phi_hi = frame.Q.phi + frame.window;
        int order_bound = 1;
        for (const auto& rec : base_records)
            if (K.contains(rec.location)) order_bound = std::max(order_bound, rec.order);
        rep.records_in_window = 0;
        for (const auto& rec : found.records)
            if (K.contains(rec.location)) ++rep.records_in_window;
        rep.order_bound_ok = rep.records_in_window <= order_bound;
    }
    return rep;
}

} // namespace forge
