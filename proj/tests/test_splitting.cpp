#include <doctest.h>

#include "fixtures.hpp"
#include "forge/errors.hpp"
#include "forge/splitting.hpp"

using namespace forge;

namespace {

const SplittingFrame& fibered_frame(int q = 2) {
    // the resolved record with the widest fiber neighborhood carries the
    // best-conditioned compact-support basis
    static auto make = [](int qq) {
        const auto& recs = fixtures::classified_records(qq);
        const auto& ms = fixtures::circle_manifolds(qq);
        const HomoclinicRecord* best = nullptr;
        double widest = 0.0;
        for (const auto& r : recs) {
            if (r.fibering == Fibering::Unresolved) continue;
            const double span = mod1(r.fiber_neighborhood_hi - r.fiber_neighborhood_lo);
            if (span > widest) {
                widest = span;
                best = &r;
            }
        }
        if (!best) throw std::runtime_error("no fibered record in the fixture");
        return make_frame(*best, ms.branches);
    };
    static SplittingFrame f2 = make(2);
    static SplittingFrame f3 = make(3);
    return q == 3 ? f3 : f2;
}

} // namespace

TEST_CASE("first-order field: zero, two-path agreement, symmetric cancellation") {
    const auto& T = testutil::ellipse_table();
    const auto g = AnnulusGuard::standard(T);

    // eta = 0 gives the zero field
    FirstOrderField zero(T, view_of(NormalPerturbation(0.0, {}, {}, 0.1)), g);
    CHECK(zero.value(PhasePoint{0.2, 0.3}).norm() == 0.0);
    CHECK(zero.jacobian(PhasePoint{0.2, 0.3}).norm() == 0.0);

    // bracket form vs A/B-matrix form, everywhere sampled
    NormalPerturbation eta(0.01, {0.0, 0.013, 0.007}, {0.0, 0.0, 0.011}, 0.1);
    FirstOrderField field(T, view_of(eta), g);
    double dis = 0.0;
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j) {
            const PhasePoint x{(i + 0.5) / 12.0, (-0.85 + 1.7 * (j + 0.5) / 12.0) * (kPi / 2 - g.nu)};
            auto chord = step(T, x, g).second;
            dis = std::max(dis, (field.value_on_chord(chord) - field.value_on_chord_AB(chord)).norm());
        }
    CHECK(dis < 1e-12);

    // constant eta on a symmetric chord: the bracket collapses, s-component 0
    const auto& C = testutil::circle_table();
    const auto gc = AnnulusGuard::standard(C);
    FirstOrderField cfield(C, view_of(NormalPerturbation(1.0, {}, {}, 0.1)), gc);
    for (double phi : {-0.5, 0.0, 0.7}) {
        const Vec2 v = cfield.value(PhasePoint{0.3, phi});
        CHECK(std::abs(v.x()) < 1e-13);
        CHECK(std::abs(v.y()) < 1e-13);
    }
}

TEST_CASE("exact perturbed map minus first-order model is O(eps^2)") {
    const auto& T = testutil::ellipse_table();
    const auto g = AnnulusGuard::standard(T);
    NormalPerturbation eta(0.0, {0.0, 1.0, 0.0, 0.21}, {0.0, 0.0, 0.34}, 0.1);
    FirstOrderField field(T, view_of(eta), g);

    std::vector<double> eps{1e-2, 1e-3, 1e-4, 1e-5};
    std::vector<double> errs;
    for (double e : eps) {
        PerturbationView scaled = view_of(eta.scaled(e));
        PerturbedBoundary pb(T, scaled);
        double worst = 0.0;
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) {
                const PhasePoint x{(i + 0.5) / 10.0,
                                   (-0.8 + 1.6 * (j + 0.5) / 10.0) * (kPi / 2 - g.nu)};
                const PhasePoint exact = perturbed_step(pb, x, g);
                const auto base = step(T, x, g).first;
                const Vec2 model =
                    Vec2(base.s, base.phi) + e * field.value(x);
                worst = std::max(worst, (Vec2(exact.s, exact.phi) - model).norm());
            }
        errs.push_back(worst);
    }
    const double slope = testutil::loglog_slope(eps, errs);
    CHECK(slope > 1.9);
    CHECK(slope < 2.1);
}

TEST_CASE("tau_eps expansion: exact square identity and third-order remainder") {
    const auto& T = testutil::ellipse_table();
    NormalPerturbation eta(0.0, {0.0, 0.7}, {0.0, 0.4}, 0.1);
    const double s = 0.12, s1 = 0.58;
    const auto d = d_tau(T, s, s1);
    const double sphi = -d[0], sphi1 = d[1];
    const double cphi = std::sqrt(1 - sphi * sphi), cphi1 = std::sqrt(1 - sphi1 * sphi1);
    const double t0 = tau(T, s, s1);
    const Vec2 n_s = T.jet(s).normal, n_s1 = T.jet(s1).normal;
    const double e0 = eta.value(s), e1 = eta.value(s1);

    std::vector<double> eps{1e-2, 3.16e-3, 1e-3, 3.16e-4, 1e-4};
    std::vector<double> errs;
    for (double e : eps) {
        PerturbedBoundary pb(T, view_of(eta.scaled(e)));
        const double te = pb.chord(s, s1);
        // exact identity for tau_eps^2
        const double sq = t0 * t0 + 2.0 * e * t0 * (e0 * cphi + e1 * cphi1) +
                          e * e * (e0 * n_s - e1 * n_s1).squaredNorm();
        CHECK(te * te == doctest::Approx(sq).epsilon(1e-12));
        // second-order expansion of tau_eps, remainder O(eps^3)
        const double second =
            ((e0 * n_s - e1 * n_s1).squaredNorm() - std::pow(e0 * cphi + e1 * cphi1, 2)) /
            (2.0 * t0);
        const double model = t0 + e * (e0 * cphi + e1 * cphi1) + e * e * second;
        errs.push_back(std::abs(te - model));
    }
    const double slope = testutil::loglog_slope(eps, errs, 1e-15);
    CHECK(slope > 2.8);
    CHECK(slope < 3.2);
}

TEST_CASE("perturbed chord angles: first-order expansion with O(eps^2) remainder") {
    const auto& T = testutil::ellipse_table();
    NormalPerturbation eta(0.0, {0.0, 0.0, 0.55}, {0.0, 0.8}, 0.1);
    const double s = 0.32, s1 = 0.71;
    const auto d = d_tau(T, s, s1);
    const double phi = std::asin(-d[0]), phi1 = std::asin(d[1]);
    const double t0 = tau(T, s, s1);
    const double br = eta.value(s) * std::sin(phi) / t0 - eta.value(s1) * std::sin(phi1) / t0;

    std::vector<double> eps{1e-2, 1e-3, 1e-4, 1e-5};
    std::vector<double> err_a, err_b;
    for (double e : eps) {
        PerturbedBoundary pb(T, view_of(eta.scaled(e)));
        const auto [pa, pb1] = perturbed_chord_angles(pb, s, s1);
        err_a.push_back(std::abs(pa - (phi - e * (eta.derivative(s, 1) + br))));
        err_b.push_back(std::abs(pb1 - (phi1 + e * (eta.derivative(s1, 1) + br))));
    }
    const double sa = testutil::loglog_slope(eps, err_a);
    const double sb = testutil::loglog_slope(eps, err_b);
    CHECK(sa > 1.9);
    CHECK(sa < 2.1);
    CHECK(sb > 1.9);
    CHECK(sb < 2.1);
}

TEST_CASE("field jacobian: finite differences and the rank-one reduced forms") {
    const auto& T = testutil::ellipse_table();
    const auto g = AnnulusGuard::standard(T);

    // generic eta against central differences of the field
    {
        NormalPerturbation eta(0.0, {0.0, 0.4, 0.0, 0.09}, {0.0, 0.0, 0.23}, 0.1);
        FirstOrderField field(T, view_of(eta), g);
        const PhasePoint x{0.17, 0.33};
        const Mat2 J = field.jacobian(x);
        const Mat2 fd = testutil::fd_jacobian(
            [&field](const PhasePoint& p) { return field.value(p); }, x, 1e-6);
        CHECK((J - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff() < 1e-5);
    }

    // compactly supported eta with vanishing 1-jet at s0: at the chord from
    // s0 the jacobian collapses to the first column, at the preimage chord to
    // the second row
    {
        const PhasePoint x{0.4, 0.21};
        auto [y, chord] = step(T, x, g);
        SupportedBump bump{x.s, 0.02, 0.0, 0.0, 1.0}; // zero 1-jet, unit curvature
        FirstOrderField field(T, view_of(bump), g);

        const Mat2 J = field.jacobian(x);
        const double tau0 = chord.tau, c1 = std::cos(chord.phi1);
        const double K1 = T.curvature(chord.s1);
        Mat2 expect;
        expect << tau0, 0.0, K1 * tau0 + c1, 0.0;
        expect *= -1.0 / c1;
        CHECK((J - expect).cwiseAbs().maxCoeff() < 1e-9);

        // at the preimage point
        const auto xm = step_inverse(T, x, g).first;
        auto [ym, chm] = step(T, xm, g);
        (void)ym;
        const Mat2 Jm = field.jacobian(xm);
        const Mat2 dfm = differential(T, chm);
        Mat2 expectm;
        expectm << 0.0, 0.0, dfm(0, 0), dfm(0, 1);
        CHECK((Jm - expectm).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("Melnikov matrix invariants") {
    const double K = -7.3, phi = 0.4, phi1 = 0.13;
    const auto m = MelnikovMatrix::at(K, phi, phi1);
    CHECK(m.T(0, 1) == 0.0);
    const double det_expected =
        std::sin(phi) * std::cos(phi) * std::pow(std::cos(phi) + std::cos(phi1), 2);
    CHECK(m.det() == doctest::Approx(det_expected).epsilon(1e-13));
}

TEST_CASE("measure_phi: vanishing at the unperturbed table, sign flip") {
    const auto& fix = fixtures::hyperbolized_circle(2);
    const auto& frame = fibered_frame(2);

    const NormalPerturbation zero(0.0, {}, {}, 0.1);
    const PhiValue phi0 = measure_phi(fix.table, fix.orbit, frame, zero, fix.guard);
    CHECK(std::abs(phi0.phi1) < 1e-8);
    // at a transverse reference point Phi2(0) = tan(angle between manifolds)
    CHECK(std::abs(phi0.phi2) - std::tan(frame.angle) < 1e-6);

    SplittingFrame flipped = frame;
    flipped.t0 = -flipped.t0;
    flipped.n0 = -flipped.n0;
    const PhiValue phif = measure_phi(fix.table, fix.orbit, flipped, zero, fix.guard);
    CHECK(phif.phi1 == doctest::Approx(-phi0.phi1).epsilon(1e-6));
}

TEST_CASE("melnikov dphi1: zero field, linearity") {
    const auto& fix = fixtures::hyperbolized_circle(2);
    const auto& frame = fibered_frame(2);

    const auto z = melnikov_dphi1(fix.table, fix.orbit, frame,
                                  view_of(NormalPerturbation(0.0, {}, {}, 0.1)), fix.guard);
    CHECK(z.value == 0.0);

    NormalPerturbation l1(0.0, {0.0, 0.02}, {0.0, 0.005}, 0.1);
    NormalPerturbation l2(0.0, {0.0, 0.0, 0.013}, {0.0, 0.0, 0.0, 0.007}, 0.1);
    const double a = 0.7, b = -1.3;
    const double va = melnikov_dphi1(fix.table, fix.orbit, frame, view_of(l1), fix.guard).value;
    const double vb = melnikov_dphi1(fix.table, fix.orbit, frame, view_of(l2), fix.guard).value;
    const double vab = melnikov_dphi1(fix.table, fix.orbit, frame,
                                      view_of(l1.scaled(a) + l2.scaled(b)), fix.guard)
                           .value;
    CHECK(vab == doctest::Approx(a * va + b * vb).epsilon(1e-12));
}

TEST_CASE("closed forms equal the truncated sums for compactly supported eta") {
    for (int q : {2, 3}) {
        CAPTURE(q);
        const auto& fix = fixtures::hyperbolized_circle(q);
        const auto& frame = fibered_frame(q);
        const double span = mod1(frame.u_hi - frame.u_lo);
        const double center = mod1(frame.u_lo + 0.5 * span);
        const double hw = 0.45 * span;
        REQUIRE(hw > 1e-5);

        // generic 2-jet bump inside U_Q
        SupportedBump bump{center, hw, 0.013, 0.57, -2.1};
        const auto sum1 =
            melnikov_dphi1(fix.table, fix.orbit, frame, view_of(bump), fix.guard);

        ClosedFormResult cf;
        if (frame.fibering == Fibering::OneFibered)
            cf = closed_form_one_fibered(fix.table, fix.orbit, frame, view_of(bump), fix.guard);
        else
            cf = closed_form_two_fibered(fix.table, fix.orbit, frame, view_of(bump), fix.guard);
        const double scale1 = std::max(std::abs(sum1.value), 1e-6);
        CHECK(std::abs(sum1.value - cf.dphi1) / scale1 < 1e-10);

        // zero 1-jet bump: dphi2 closed form applies
        SupportedBump b2{center, hw, 0.0, 0.0, 1.0};
        const auto sum2 =
            melnikov_dphi2(fix.table, fix.orbit, frame, view_of(b2), fix.guard);
        ClosedFormResult cf2;
        if (frame.fibering == Fibering::OneFibered)
            cf2 = closed_form_one_fibered(fix.table, fix.orbit, frame, view_of(b2), fix.guard);
        else
            cf2 = closed_form_two_fibered(fix.table, fix.orbit, frame, view_of(b2), fix.guard);
        const double scale2 = std::max(std::abs(sum2.value), 1e-6);
        CHECK(std::abs(sum2.value - cf2.dphi2) / scale2 < 1e-10);
        // variational part vanishes: the field is zero along the orbit
        CHECK(std::abs(cf2.w) / scale2 < 1e-10);
    }
}

TEST_CASE("measured Phi1(eps)/eps matches dPhi1 within 5 percent") {
    const auto& fix = fixtures::hyperbolized_circle(2);
    const auto& frame = fibered_frame(2);
    const auto basis = basis_perturbations(fix.table, fix.orbit, frame, fix.guard, 0.1);

    const double dphi1 =
        melnikov_dphi1(fix.table, fix.orbit, frame, view_of(basis.lambda1), fix.guard).value;
    REQUIRE(std::abs(dphi1) > 1e-8);

    const double eps = 1e-5;
    const PhiValue base = measure_phi(fix.table, fix.orbit, frame,
                                      NormalPerturbation(0.0, {}, {}, 0.1), fix.guard);
    const PhiValue pert =
        measure_phi(fix.table, fix.orbit, frame, basis.lambda1.scaled(eps), fix.guard);
    const double fd = (pert.phi1 - base.phi1) / eps;
    CHECK(std::abs(fd - dphi1) / std::abs(dphi1) < 0.05);
}

TEST_CASE("basis perturbations: supports, determinant, truncation stability") {
    const auto& fix = fixtures::hyperbolized_circle(2);
    const auto& frame = fibered_frame(2);
    const auto basis = basis_perturbations(fix.table, fix.orbit, frame, fix.guard, 0.1);

    // bump supports inside U_Q before truncation
    const double span = mod1(frame.u_hi - frame.u_lo);
    CHECK(2.0 * basis.bump1.half_width <= span * 1.0001);
    CHECK(std::abs(circle_dist(basis.bump1.center, mod1(frame.u_lo + span / 2))) < 1e-12);

    // unit jets at the fibered position
    const double s_l = basis.bump1.center;
    CHECK(basis.bump1.eval(s_l, 0) == 0.0);
    CHECK(basis.bump1.eval(s_l, 1) == doctest::Approx(1.0));
    CHECK(basis.bump2.eval(s_l, 0) == 0.0);
    CHECK(basis.bump2.eval(s_l, 1) == 0.0);

    CHECK(std::abs(basis.det_truncated) >= 0.5 * std::abs(basis.det_untruncated));

    // C_k > 0 and the determinant has the cubic tangent-component structure
    const auto data = build_homoclinic_orbit(fix.table, fix.orbit, frame, fix.guard, 8);
    const int l = frame.fiber_index;
    const double C0 = 1.0 + data.c(l) / data.c(l + 1);
    CHECK(C0 > 0.0);
    CHECK(std::abs(basis.det_untruncated) > 0.0);

    // doubling the Fourier cutoff changes the determinant by < 1 percent
    NormalPerturbation l1d = NormalPerturbation::fit(
        [&](double s) { return basis.bump1.eval(s, 0); }, 0.1, 2 * basis.degree);
    NormalPerturbation l2d = NormalPerturbation::fit(
        [&](double s) { return basis.bump2.eval(s, 0); }, 0.1, 2 * basis.degree);
    const double a11 = melnikov_dphi1(fix.table, fix.orbit, frame, view_of(l1d), fix.guard).value;
    const double a21 = melnikov_dphi2(fix.table, fix.orbit, frame, view_of(l1d), fix.guard).value;
    const double a12 = melnikov_dphi1(fix.table, fix.orbit, frame, view_of(l2d), fix.guard).value;
    const double a22 = melnikov_dphi2(fix.table, fix.orbit, frame, view_of(l2d), fix.guard).value;
    const double det2 = a11 * a22 - a12 * a21;
    CHECK(std::abs(det2 - basis.det_truncated) / std::abs(basis.det_truncated) < 0.01);
}

TEST_CASE("break_tangency: fixed point at b = 0 and a small-b solve") {
    const auto& fix = fixtures::hyperbolized_circle(2);
    const auto& recs = fixtures::classified_records(2);
    const auto& ms = fixtures::circle_manifolds(2);
    const auto& frame = fibered_frame(2);

    // b = 0: no perturbation needed
    auto rep0 = break_tangency(fix.table, fix.orbit, frame, recs, 0.0, fix.guard);
    CHECK(rep0.c1 == 0.0);
    CHECK(rep0.c2 == 0.0);
    CHECK(rep0.lambda.is_zero());

    // b = 1e-6: Newton converges, post state transverse, count bounded
    const double b = 1e-6;
    auto rep = break_tangency(fix.table, fix.orbit, frame, recs, b, fix.guard);
    CHECK(std::abs(rep.achieved.phi2 - rep.target.phi2) <= 1e-3 * b + 1e-11);
    CHECK(std::abs(rep.achieved.phi1 - rep.target.phi1) <= 1e-3 * b + 1e-11);
    CHECK(rep.post_computed);
    CHECK(rep.post_order == 1);
    CHECK(rep.norm_r > 0.0);
    CHECK(rep.order_bound_ok);
    (void)ms;
}
