#include "forge/dynamics.hpp"

#include <cmath>
#include <sstream>

#include "forge/errors.hpp"

namespace forge {

namespace {

double clamp_sin(double v, const char* who) {
    if (std::abs(v) > 1.0 + 1e-12) {
        std::ostringstream os;
        os << who << ": |sin| = " << std::abs(v) << " exceeds 1 beyond tolerance";
        throw NumericalFailure(os.str());
    }
    return std::clamp(v, -1.0, 1.0);
}

} // namespace

double tau(const BoundaryTable& table, double s, double s1) {
    return (table.point(s) - table.point(s1)).norm();
}

std::array<double, 2> d_tau(const BoundaryTable& table, double s, double s1) {
    const double gap = s1 - s;
    const double k = std::round(gap);
    if (std::abs(gap - k) < 1e-9) {
        // Continuous strip extension at the diagonal: gliding forward along
        // the boundary means phi -> pi/2, so d1 tau -> -1 on the lower edge of
        // the fundamental strip and +1 on its upper edge.
        const int ki = static_cast<int>(k);
        const double sgn = (ki % 2 == 0) ? 1.0 : -1.0;
        return {-sgn, sgn};
    }
    const Vec2 u = table.point(s) - table.point(s1);
    const double t = u.norm();
    return {table.tangent(s).dot(u) / t, -table.tangent(s1).dot(u) / t};
}

std::array<double, 3> d2_tau(const BoundaryTable& table, double s, double s1) {
    const double gap = s1 - s;
    if (std::abs(gap - std::round(gap)) < 1e-9)
        throw DiagonalChord("d2_tau at |s'-s| mod 1 < 1e-9");
    const auto ja = table.jet2(s);
    const auto jb = table.jet2(s1);
    const Vec2 u = ja.p - jb.p;
    const double t = u.norm();
    const double d1 = ja.d1.dot(u) / t;
    const double d2 = -jb.d1.dot(u) / t;
    const double cphi = std::sqrt(std::max(0.0, 1.0 - d1 * d1));  // sin phi = -d1
    const double cphi1 = std::sqrt(std::max(0.0, 1.0 - d2 * d2)); // sin phi' = d2
    return {ja.K * cphi + cphi * cphi / t, cphi * cphi1 / t, jb.K * cphi1 + cphi1 * cphi1 / t};
}

AnnulusGuard AnnulusGuard::standard(const BoundaryTable& table, double nu, double mu) {
    AnnulusGuard g;
    g.nu = nu;
    // The image gap of a grazing chord at |phi| = pi/2 - nu is about
    // 2 nu / |K|; mu must stay below it for the root bracket of the map to
    // contain the image (chi(A_nu) inside Delta_mu).
    double kmax = 0.0;
    const int N = 512;
    for (int i = 0; i < N; ++i)
        kmax = std::max(kmax, std::abs(table.curvature(static_cast<double>(i) / N)));
    g.mu = std::min(mu, nu / kmax);
    double cmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < N; ++i) {
        const double s = static_cast<double>(i) / N;
        cmin = std::min(cmin, tau(table, s, s + g.mu));
        cmin = std::min(cmin, tau(table, s, s + 1.0 - g.mu));
    }
    g.c = cmin;
    return g;
}

std::pair<PhasePoint, ChordData> step(const BoundaryTable& table, const PhasePoint& x,
                                      const AnnulusGuard& guard) {
    if (std::abs(x.phi) > kPi / 2 - guard.nu) {
        std::ostringstream os;
        os << "step at |phi| = " << std::abs(x.phi) << " outside A_nu (nu=" << guard.nu << ")";
        throw GuardViolation(os.str());
    }
    const double sphi = std::sin(x.phi);
    const double cphi = std::cos(x.phi);
    const auto at_s = table.point_tangent(x.s);

    // g(t) = d1 tau(s, t) + sin phi, increasing in t (d12 tau > 0); evaluate
    // the far endpoint only, and recycle tau and sin phi' as byproducts
    struct Eval {
        double g, tau, sphi1, cphi1;
    };
    auto eval = [&](double t) {
        const auto at_t = table.point_tangent(t);
        const Vec2 u = at_s.p - at_t.p;
        Eval e;
        e.tau = u.norm();
        e.g = at_s.t.dot(u) / e.tau + sphi;
        e.sphi1 = -at_t.t.dot(u) / e.tau;
        e.cphi1 = std::sqrt(std::max(0.0, 1.0 - e.sphi1 * e.sphi1));
        return e;
    };

    double lo = x.s + guard.mu, hi = x.s + 1.0 - guard.mu;
    Eval elo = eval(lo), ehi = eval(hi);
    if (elo.g > 0.0 || ehi.g < 0.0) {
        std::ostringstream os;
        os << "root of d1tau + sin phi not bracketed on (s+mu, s+1-mu): g(lo)=" << elo.g
           << " g(hi)=" << ehi.g << " (guard too tight?)";
        throw BracketFailure(os.str());
    }
    // coarse bisection into the Newton basin
    while (hi - lo > 0.05) {
        const double mid = 0.5 * (lo + hi);
        if (eval(mid).g <= 0.0)
            lo = mid;
        else
            hi = mid;
    }
    double t = 0.5 * (lo + hi);
    Eval e = eval(t);
    for (int it = 0; it < 60 && std::abs(e.g) >= 1e-13; ++it) {
        const double slope = cphi * e.cphi1 / e.tau; // d12 tau > 0
        double tn = t - e.g / slope;
        if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi); // safeguarded
        const Eval en = eval(tn);
        if (en.g <= 0.0)
            lo = std::max(lo, tn);
        else
            hi = std::min(hi, tn);
        t = tn;
        e = en;
    }
    ChordData chord;
    chord.s = x.s;
    chord.s1 = t;
    chord.tau = e.tau;
    chord.phi = x.phi;
    chord.phi1 = std::asin(clamp_sin(e.sphi1, "step"));
    return {PhasePoint{t, chord.phi1}, chord};
}

std::pair<PhasePoint, ChordData> step_inverse(const BoundaryTable& table, const PhasePoint& x,
                                              const AnnulusGuard& guard) {
    auto [y, chord] = step(table, PhasePoint{x.s, -x.phi}, guard);
    // lift backward: the preimage sits behind x
    PhasePoint out{y.s - 1.0, -y.phi};
    // the forward chord connecting preimage to x
    ChordData back;
    back.s = out.s;
    back.s1 = x.s;
    back.tau = chord.tau;
    back.phi = out.phi;
    back.phi1 = x.phi;
    return {out, back};
}

Mat2 differential(const BoundaryTable& table, const ChordData& chord) {
    const double Ks = table.jet2(chord.s).K;
    const double Ks1 = table.jet2(chord.s1).K;
    const double cphi = std::cos(chord.phi), cphi1 = std::cos(chord.phi1);
    const double th = chord.tau;
    Mat2 m;
    m << th * Ks + cphi, th,
         th * Ks * Ks1 + Ks * cphi1 + Ks1 * cphi, th * Ks1 + cphi1;
    return -m / cphi1;
}

std::array<double, 2> tau_hat_partials(const BoundaryTable& table, const ChordData& chord) {
    const double Ks = table.curvature(chord.s);
    const double tphi1 = std::tan(chord.phi1);
    const double d1 = -std::sin(chord.phi) - (chord.tau * Ks + std::cos(chord.phi)) * tphi1;
    const double d2 = -chord.tau * tphi1;
    return {d1, d2};
}

std::array<Mat2, 2> second_differential(const BoundaryTable& table, const PhasePoint& x,
                                        const AnnulusGuard& guard, double h) {
    auto dfat = [&](double s, double phi) {
        auto [y, chord] = step(table, PhasePoint{s, phi}, guard);
        (void)y;
        return differential(table, chord);
    };
    std::array<Mat2, 2> out;
    out[0] = (dfat(x.s + h, x.phi) - dfat(x.s - h, x.phi)) / (2.0 * h);
    out[1] = (dfat(x.s, x.phi + h) - dfat(x.s, x.phi - h)) / (2.0 * h);
    return out;
}

MarginReport check_away_from_boundary(const ChordData& chord, const AnnulusGuard& guard) {
    MarginReport r;
    const double gap = chord.s1 - chord.s;
    r.gap_margin = std::min(gap - guard.mu, 1.0 - guard.mu - gap);
    r.angle_margin = std::min(kPi / 2 - guard.nu - std::abs(chord.phi),
                              kPi / 2 - guard.nu - std::abs(chord.phi1));
    r.tau_margin = chord.tau - guard.c;
    return r;
}

MarginReport check_away_from_boundary(const PhasePoint& x, const AnnulusGuard& guard) {
    MarginReport r;
    r.gap_margin = 1.0;
    r.angle_margin = kPi / 2 - guard.nu - std::abs(x.phi);
    r.tau_margin = 1.0;
    return r;
}

std::array<double, 2> perturbed_chord_angles(const PerturbedBoundary& pb, double s, double s1) {
    const Vec2 u = pb.point(s) - pb.point(s1);
    const double t = u.norm();
    const double d1 = pb.d1(s).dot(u) / t;
    const double d2 = -pb.d1(s1).dot(u) / t;
    const double phi = std::asin(clamp_sin(-d1 / pb.speed(s), "perturbed_chord_angles"));
    const double phi1 = std::asin(clamp_sin(d2 / pb.speed(s1), "perturbed_chord_angles"));
    return {phi, phi1};
}

PhasePoint perturbed_step(const PerturbedBoundary& pb, const PhasePoint& x,
                          const AnnulusGuard& guard) {
    const double target = pb.speed(x.s) * std::sin(x.phi);
    auto g = [&](double t) {
        const Vec2 u = pb.point(x.s) - pb.point(t);
        return pb.d1(x.s).dot(u) / u.norm() + target;
    };
    double lo = x.s + guard.mu, hi = x.s + 1.0 - guard.mu;
    double glo = g(lo), ghi = g(hi);
    if (glo > 0.0 || ghi < 0.0) throw BracketFailure("perturbed_step: root not bracketed");
    while (hi - lo > 1e-3) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) <= 0.0 ? lo : hi) = mid;
    }
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 80; ++it) {
        const double r = g(t);
        if (std::abs(r) < 1e-13) break;
        const double slope = chord_second_partials(pb, x.s, t)[1];
        double tn = t - r / slope;
        if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);
        (g(tn) <= 0.0 ? lo : hi) = tn;
        t = tn;
    }
    const auto [phi, phi1] = perturbed_chord_angles(pb, x.s, t);
    (void)phi;
    return PhasePoint{t, phi1};
}

std::array<double, 3> chord_second_partials(const PerturbedBoundary& pb, double s, double s1) {
    const Vec2 u = pb.point(s) - pb.point(s1);
    const double t = u.norm();
    const Vec2 c1 = pb.d1(s), c11 = pb.d2(s);
    const Vec2 c2 = pb.d1(s1), c22 = pb.d2(s1);
    const double dt1 = c1.dot(u) / t;
    const double dt2 = -c2.dot(u) / t;
    const double d11 = (c11.dot(u) + c1.squaredNorm()) / t - dt1 * dt1 / t;
    const double d12 = -c1.dot(c2) / t - dt1 * dt2 / t;
    const double d22 = (-c22.dot(u) + c2.squaredNorm()) / t - dt2 * dt2 / t;
    return {d11, d12, d22};
}

} // namespace forge
