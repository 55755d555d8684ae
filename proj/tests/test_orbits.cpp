#include <doctest.h>

#include "forge/errors.hpp"
#include "forge/orbits.hpp"
#include "testutil.hpp"

using namespace forge;

TEST_CASE("action values on the circle") {
    const auto& C = testutil::circle_table();
    // (1,2) diameter pair
    CHECK(action(C, make_rotation(1, 2), {0.0, 0.5}) ==
          doctest::Approx(2.0 / kPi).epsilon(1e-12));
    // equilateral (1,3)
    CHECK(action(C, make_rotation(1, 3), {0.0, 1.0 / 3.0, 2.0 / 3.0}) ==
          doctest::Approx(3.0 * std::sin(kPi / 3.0) / kPi).epsilon(1e-12));
    // the diameter configuration is critical by symmetry
    CHECK(grad_action(C, make_rotation(1, 2), {0.0, 0.5}).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient of the action matches finite differences") {
    const auto& T = testutil::ellipse_table();
    const auto rot = make_rotation(2, 5);
    std::vector<double> cfg{0.02, 0.43, 0.81, 1.22, 1.63};
    const Eigen::VectorXd g = grad_action(T, rot, cfg);
    const double h = 1e-6;
    for (int k = 0; k < 5; ++k) {
        auto cp = cfg, cm = cfg;
        cp[static_cast<std::size_t>(k)] += h;
        cm[static_cast<std::size_t>(k)] -= h;
        const double fd = (action(T, rot, cp) - action(T, rot, cm)) / (2 * h);
        CHECK(g[k] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("ellipse (1,2): unique hyperbolic maximizer on the major axis") {
    const auto& T = testutil::ellipse_table();
    const auto g = AnnulusGuard::standard(T);
    const auto rot = make_rotation(1, 2);
    auto [orb, rep] = find_max_orbit(T, rot, g, 16, 42);
    CHECK(rep.maximizer_clusters == 1);

    // major-axis action: two traversals of the chord 2a on the unit-perimeter table
    const double L = T.perimeter();
    CHECK(orb.action == doctest::Approx(4.0 / L).epsilon(1e-9));
    CHECK(orb.criticality < 1e-9);
    CHECK(orb.hyperbolic);
    CHECK(orb.tests_agree);
    CHECK(std::abs(orb.trace) > 2.0);
    CHECK(orb.angles[0] == doctest::Approx(0.0).epsilon(1e-8));

    // minor-axis configuration is critical but not the maximizer
    std::vector<double> minor{T.s_of_theta(0.25), T.s_of_theta(0.75)};
    CHECK(newton_polish(T, rot, g, minor));
    CHECK(action(T, rot, minor) == doctest::Approx(2.0 / L).epsilon(1e-8));
    CHECK(action(T, rot, minor) < orb.action);

    // monodromy: det = 1, trace vs the closed-form Df product at phi = 0
    CHECK(orb.monodromy.determinant() == doctest::Approx(1.0).epsilon(1e-8));
    const double KT = T.curvature(orb.config[0]) * tau(T, orb.config[0], orb.config[1]);
    const double tr_df = -2.0 * (KT + 1.0); // trace of Df at a symmetric phi=0 bounce
    CHECK(orb.monodromy.trace() ==
          doctest::Approx(tr_df * tr_df - 2.0).epsilon(1e-6)); // tr(M^2) = tr^2 - 2 det
}

TEST_CASE("circle (1,2): ambiguous maximizer (family of diameters)") {
    const auto& C = testutil::circle_table();
    const auto g = AnnulusGuard::standard(C);
    CHECK_THROWS_AS((void)find_max_orbit(C, make_rotation(1, 2), g, 16, 7), AmbiguousMaximizer);
}

TEST_CASE("circle (1,2) monodromy is parabolic") {
    const auto& C = testutil::circle_table();
    const auto g = AnnulusGuard::standard(C);
    const PeriodicOrbit orb = build_orbit(C, make_rotation(1, 2), g, {0.0, 0.5});
    CHECK(std::abs(orb.trace) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(!orb.hyperbolic);
    CHECK(orb.tests_agree); // Hessian determinant vanishes as well
    CHECK(std::abs(orb.hessian_det) < 1e-8);
}

TEST_CASE("hyperbolizing lambda: closed form for q = 2") {
    const auto& C = testutil::circle_table();
    const auto g = AnnulusGuard::standard(C);
    const PeriodicOrbit orb = build_orbit(C, make_rotation(1, 2), g, {0.0, 0.5});
    const NormalPerturbation l0 = hyperbolizing_lambda(orb, 0.1);

    // product identity: -sin^2(pi s) sin^2(pi(s-1/2)) = -(1/4) sin^2(2 pi s)
    for (double s : {0.0, 0.1, 0.37, 0.5, 0.93}) {
        const double expect = -0.25 * std::pow(std::sin(kTwoPi * s), 2);
        CHECK(l0.value(s) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(l0.value(s) <= 1e-15);
    }
    // vanishing value and slope at the orbit, negative second derivative
    for (double sk : {0.0, 0.5}) {
        CHECK(std::abs(l0.value(sk)) < 1e-14);
        CHECK(std::abs(l0.derivative(sk, 1)) < 1e-12);
        CHECK(l0.derivative(sk, 2) < 0.0);
    }
    CHECK(l0.derivative(0.0, 2) == doctest::Approx(-2.0 * kPi * kPi).epsilon(1e-10));
    CHECK(l0.degree() <= 4);
}

TEST_CASE("hessian perturbation expansion on the circle (1,2)") {
    const auto& C = testutil::circle_table();
    const auto g = AnnulusGuard::standard(C);
    const PeriodicOrbit orb = build_orbit(C, make_rotation(1, 2), g, {0.0, 0.5});
    const NormalPerturbation l0 = hyperbolizing_lambda(orb, 0.1);

    // eps = 0: both sides equal det D^2 L^0 = 0 for the degenerate family
    const auto chk0 = hessian_perturbation_check(C, orb, l0, 0.0);
    CHECK(std::abs(chk0.det_unperturbed) < 1e-9);
    CHECK(chk0.det_exact == doctest::Approx(chk0.det_prediction).epsilon(1e-9));

    // prediction is strictly positive for small eps > 0 (sign (-1)^q):
    // det = 16 pi^3 eps / ||lambda0||_r for the diameter pair
    const double eps = 1e-3;
    const auto chk = hessian_perturbation_check(C, orb, l0, eps);
    const double expected = 16.0 * std::pow(kPi, 3) * eps / l0.strip_norm();
    CHECK(chk.det_prediction == doctest::Approx(expected).epsilon(1e-8));
    CHECK(chk.det_prediction > 0.0);

    // remainder is O(eps^2)
    std::vector<double> epses{1e-2, 1e-3, 1e-4, 1e-5};
    std::vector<double> errs;
    for (double e : epses) {
        const auto c = hessian_perturbation_check(C, orb, l0, e);
        errs.push_back(std::abs(c.det_exact - c.det_prediction));
    }
    const double slope = testutil::loglog_slope(epses, errs, 1e-12);
    CHECK(slope > 1.8);
    CHECK(slope < 2.2);
}

TEST_CASE("hyperbolization makes the circle (1,2) orbit unique and hyperbolic") {
    const auto& C = testutil::circle_table();
    const auto g = AnnulusGuard::standard(C);
    const PeriodicOrbit orb = build_orbit(C, make_rotation(1, 2), g, {0.0, 0.5});
    const NormalPerturbation l0 = hyperbolizing_lambda(orb, 0.1);

    // line-search flavor: first eps that yields a unique hyperbolic maximizer
    double eps = 1e-4;
    bool found = false;
    for (; eps <= 0.2 && !found; eps *= 2.0) {
        const BoundaryTable pert = perturbed_table(C, l0.scaled(eps / l0.strip_norm()));
        auto mc = survey_maximizers(pert, orb.rotation, g, 16, 11);
        if (mc.report.maximizer_clusters != 1) continue;
        const PeriodicOrbit po = build_orbit(pert, orb.rotation, g, mc.configs.front());
        if (std::abs(po.trace) > 2.0 + 1e-6) {
            found = true;
            // the maximizer stays on {0, 1/2} (some cyclic representative)
            const double d00 = std::abs(circle_dist(mod1(po.config[0]), 0.0));
            const double d05 = std::abs(circle_dist(mod1(po.config[0]), 0.5));
            CHECK(std::min(d00, d05) < 1e-6);
            CHECK(std::abs(circle_dist(mod1(po.config[1]), mod1(po.config[0] + 0.5))) < 1e-6);
            CHECK(po.angles[0] == doctest::Approx(0.0).epsilon(1e-8));
            CHECK(po.tests_agree);
        }
    }
    CHECK(found);
}

TEST_CASE("rotation number validation") {
    CHECK_THROWS_AS((void)make_rotation(2, 4), ConfigError);
    CHECK_THROWS_AS((void)make_rotation(3, 2), ConfigError);
    CHECK_THROWS_AS((void)make_rotation(1, 1), ConfigError);
    CHECK_THROWS_AS((void)make_rotation(1, 65), ConfigError);
    CHECK(make_rotation(2, 5).q == 5);
}
