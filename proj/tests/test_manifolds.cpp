#include <doctest.h>

#include "fixtures.hpp"
#include "forge/errors.hpp"
#include "forge/manifolds.hpp"

using namespace forge;

namespace {

ManifoldBranch synthetic_branch(char kind, const std::function<Vec2(double)>& curve,
                                double t_lo, double t_hi, int n) {
    ManifoldBranch br;
    br.kind = kind;
    br.side = +1;
    br.base = PhasePoint{curve(t_lo).x(), curve(t_lo).y()};
    double arc = 0.0;
    Vec2 prev = curve(t_lo);
    for (int i = 0; i <= n; ++i) {
        const Vec2 p = curve(t_lo + (t_hi - t_lo) * i / n);
        arc += (p - prev).norm();
        br.points.push_back(PhasePoint{p.x(), p.y()});
        br.arc.push_back(arc);
        prev = p;
    }
    return br;
}

} // namespace

TEST_CASE("eigen frames: transport consistency and multiplier relation") {
    const auto& fix = fixtures::hyperbolized_circle(2);
    const auto frames = eigen_frames(fix.table, fix.orbit);
    REQUIRE(frames.size() == 2);
    CHECK(frames[0].lambda_u > 1.0);
    CHECK(std::abs(frames[0].lambda_u * frames[0].lambda_s - 1.0) < 1e-8);

    for (const auto& fr : frames) {
        // Aubry-Mather directions are transverse to the vertical
        CHECK(std::abs(fr.v_u.x()) > 1e-3);
        CHECK(std::abs(fr.v_s.x()) > 1e-3);
    }

    // transported vector at index k is an eigenvector of the monodromy based at k
    const auto g = fix.guard;
    for (int k = 0; k < 2; ++k) {
        Mat2 M = Mat2::Identity();
        PhasePoint x = fix.orbit.point(k);
        for (int i = 0; i < 2; ++i) {
            auto [y, chord] = step(fix.table, x, g);
            M = differential(fix.table, chord) * M;
            x = y;
        }
        const Vec2 v = frames[static_cast<std::size_t>(k)].v_u;
        const Vec2 Mv = M * v;
        CHECK((Mv - frames[static_cast<std::size_t>(k)].lambda_u * v).norm() < 1e-6);
    }
}

TEST_CASE("grow_branch: arc budget, seed tangency, reversible symmetry") {
    const auto& fix = fixtures::hyperbolized_circle(2);
    const auto frames = eigen_frames(fix.table, fix.orbit);

    const double N = 1.5;
    ManifoldBranch wu = grow_branch(fix.table, fix.orbit, frames, 0, 'u', +1, N, fix.guard);
    CHECK((wu.arc.back() >= N || wu.truncated));
    REQUIRE(wu.points.size() > 100);

    // first segment aligned with the eigen-direction
    const Vec2 sec(wu.points[2].s - wu.points[1].s, wu.points[2].phi - wu.points[1].phi);
    const double ang = std::atan2(std::abs(wedge(sec.normalized(), frames[0].v_u)),
                                  std::abs(sec.normalized().dot(frames[0].v_u)));
    CHECK(ang < 1e-4);

    // adjacent spacing below h_max
    double hmax = 0.0;
    for (std::size_t i = 1; i < wu.points.size(); ++i)
        hmax = std::max(hmax, std::hypot(wu.points[i].s - wu.points[i - 1].s,
                                         wu.points[i].phi - wu.points[i - 1].phi));
    CHECK(hmax <= 1e-3 * 1.0001);

    // reversibility: the stable branch is the involution image of the unstable
    ManifoldBranch ws = grow_branch(fix.table, fix.orbit, frames, 0, 's', +1, N, fix.guard);
    double hausdorff = 0.0;
    for (std::size_t i = 0; i < ws.points.size(); i += 7) {
        const Vec2 x(mod1(ws.points[i].s), -ws.points[i].phi); // I-image of the stable point
        double best = 1e300;
        for (std::size_t j = 0; j + 1 < wu.points.size(); ++j) {
            const Vec2 a(mod1(wu.points[j].s), wu.points[j].phi);
            Vec2 b(mod1(wu.points[j + 1].s), wu.points[j + 1].phi);
            if (std::abs(b.x() - a.x()) > 0.5) continue; // wrap segment, skip
            const Vec2 d = b - a;
            double t = d.squaredNorm() > 0 ? (x - a).dot(d) / d.squaredNorm() : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            best = std::min(best, (x - (a + t * d)).norm());
        }
        hausdorff = std::max(hausdorff, best);
    }
    CHECK(hausdorff < 1e-5);
}

TEST_CASE("lambda-lemma sanity: backward return to the base") {
    const auto& fix = fixtures::hyperbolized_circle(2);
    const auto& ms = fixtures::circle_manifolds(2);
    const ManifoldBranch* wu = nullptr;
    for (const auto& br : ms.branches)
        if (br.kind == 'u') {
            wu = &br;
            break;
        }
    REQUIRE(wu != nullptr);
    PhasePoint x = wu->points.back();
    for (int i = 0; i < wu->sweeps * wu->steps_per_sweep; ++i)
        x = step_inverse(fix.table, x, fix.guard).first;
    // distance to the fundamental segment along the unstable eigenline
    const auto frames = eigen_frames(fix.table, fix.orbit);
    const Vec2 xi(circle_dist(mod1(x.s), mod1(wu->base.s)), x.phi - wu->base.phi);
    const Vec2 v = frames[static_cast<std::size_t>(wu->base_index)].v_u;
    const double along = xi.dot(v) * static_cast<double>(wu->side);
    const double perp = std::abs(wedge(v, xi));
    CHECK(perp < 1e-6);
    CHECK(along >= -1e-9);
    CHECK(along < 1e-5);
}

TEST_CASE("homoclinic detection on the hyperbolized circle") {
    const auto& ms = fixtures::circle_manifolds(2);
    CHECK(!ms.search.coincidence_suspected);
    REQUIRE(!ms.search.records.empty());

    for (const auto& rec : ms.search.records) {
        CHECK(std::abs(rec.location.phi) < kPi / 2);
        CHECK(rec.angle >= 0.0);
        CHECK(rec.stable_tangent.norm() == doctest::Approx(1.0));
        CHECK(rec.unstable_tangent.norm() == doctest::Approx(1.0));
    }
}

TEST_CASE("refinement stability under h_max halving") {
    const auto& fix = fixtures::hyperbolized_circle(2);
    const auto& coarse = fixtures::circle_manifolds(2);

    GrowthParams fine;
    fine.h_max = 5e-4;
    auto branches = grow_all_branches(fix.table, fix.orbit, 3.0, fix.guard, fine, 2);
    auto search = find_homoclinics(branches);
    CHECK(search.records.size() == coarse.search.records.size());

    for (const auto& rc : coarse.search.records) {
        double best = 1e300;
        for (const auto& rf : search.records)
            best = std::min(best, std::hypot(circle_dist(rc.location.s, rf.location.s),
                                             rc.location.phi - rf.location.phi));
        CHECK(best < 1e-7);
    }
}

TEST_CASE("coincident branch pair reports CoincidenceSuspected") {
    auto curve = [](double t) { return Vec2(mod1(0.2 + 0.4 * t), 0.3 * t - 0.1); };
    auto a = synthetic_branch('s', curve, 0.0, 1.0, 400);
    auto b = synthetic_branch('u', curve, 0.0, 1.0, 400);
    auto out = find_homoclinics({a, b});
    CHECK(out.coincidence_suspected);
    CHECK(out.records.empty());
}

TEST_CASE("tangency order on synthetic graphs") {
    // transverse crossing with slope tan(0.1)
    {
        auto flat =
            synthetic_branch('s', [](double t) { return Vec2(0.5 + t, 0.0); }, -0.02, 0.02, 200);
        auto tilted = synthetic_branch(
            'u', [](double t) { return Vec2(0.5 + t, std::tan(0.1) * t); }, -0.02, 0.02, 200);
        HomoclinicRecord rec;
        rec.location = PhasePoint{0.5, 0.0};
        rec.stable_branch = 0;
        rec.unstable_branch = 1;
        rec.stable_tangent = Vec2(1.0, 0.0);
        rec.unstable_tangent = Vec2(std::cos(0.1), std::sin(0.1));
        rec.stable_arc = 0.02;
        rec.unstable_arc = 0.02;
        const JetFit jet = tangency_order({flat, tilted}, rec, 0.01);
        CHECK(jet.order == 1);
        CHECK(jet.leading_coeff == doctest::Approx(std::tan(0.1)).epsilon(1e-6));
    }
    // quadratic tangency psi(x) = x^2
    {
        auto flat =
            synthetic_branch('s', [](double t) { return Vec2(0.5 + t, 0.0); }, -0.02, 0.02, 200);
        auto parab =
            synthetic_branch('u', [](double t) { return Vec2(0.5 + t, t * t); }, -0.02, 0.02, 200);
        HomoclinicRecord rec;
        rec.location = PhasePoint{0.5, 0.0};
        rec.stable_branch = 0;
        rec.unstable_branch = 1;
        rec.stable_tangent = Vec2(1.0, 0.0);
        rec.unstable_tangent = Vec2(1.0, 0.0);
        rec.stable_arc = 0.02;
        rec.unstable_arc = 0.02;
        const JetFit jet = tangency_order({flat, parab}, rec, 0.01);
        CHECK(jet.order == 2);
        CHECK(jet.leading_coeff == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("synthetic quadratic tangency: crossing counts respect the order bound") {
    // psi(x) = x^2 - delta: two crossings for delta > 0, none for delta < 0
    auto flat =
        synthetic_branch('s', [](double t) { return Vec2(0.5 + t, 0.0); }, -0.02, 0.02, 300);
    for (double delta : {1e-5, -1e-5}) {
        auto parab = synthetic_branch(
            'u', [delta](double t) { return Vec2(0.5 + t, t * t - delta); }, -0.02, 0.02, 300);
        auto out = find_homoclinics({flat, parab});
        const std::size_t expect = (delta > 0) ? 2 : 0;
        CHECK(out.records.size() == expect);
        CHECK(out.records.size() <= 2); // order-2 bound
    }
}

TEST_CASE("fibering classification on the hyperbolized circle") {
    const auto& fix = fixtures::hyperbolized_circle(2);
    const auto& ms = fixtures::circle_manifolds(2);

    int classified = 0;
    for (auto rec : ms.search.records) {
        try {
            classify_fibering(fix.table, fix.orbit, rec, ms.branches, fix.guard);
        } catch (const WindowTooSmall&) {
            continue;
        }
        if (rec.fibering == Fibering::Unresolved) continue;
        ++classified;
        CHECK(rec.max_per_fiber <= 2);
        if (rec.fibering == Fibering::SymmetricTwoFibered) {
            // pairs through the involution, with a zero-section point (q = 2)
            CHECK(std::abs(rec.location.phi) < 1e-6);
            CHECK(rec.zero_section_iterate);
            const int L = rec.window_half_width;
            for (int l = 1; l <= L; ++l) {
                const auto& p = rec.orbit_window[static_cast<std::size_t>(L + l)];
                const auto& m = rec.orbit_window[static_cast<std::size_t>(L - l)];
                CHECK(std::abs(circle_dist(mod1(p.s), mod1(m.s))) < 1e-6);
                CHECK(std::abs(p.phi + m.phi) < 1e-6);
            }
        }
    }
    CHECK(classified > 0);
}

TEST_CASE("q = 3: resolved homoclinic orbits are one-fibered") {
    const auto& fix = fixtures::hyperbolized_circle(3);
    const auto& ms = fixtures::circle_manifolds(3);
    REQUIRE(!ms.search.records.empty());

    int resolved = 0;
    for (auto rec : ms.search.records) {
        try {
            classify_fibering(fix.table, fix.orbit, rec, ms.branches, fix.guard);
        } catch (const WindowTooSmall&) {
            continue;
        }
        if (rec.fibering == Fibering::Unresolved) continue;
        ++resolved;
        CHECK(rec.fibering == Fibering::OneFibered);
    }
    CHECK(resolved > 0);
}

TEST_CASE("window count: empty window stays empty, transverse record continues") {
    const auto& fix = fixtures::hyperbolized_circle(2);
    const auto& ms = fixtures::circle_manifolds(2);

    NormalPerturbation lam(0.0, {0.0, 0.0, 0.0, 1e-7}, {0.0, 0.0, 0.0, 0.5e-7}, 0.1);
    const BoundaryTable pert = perturbed_table(fix.table, lam);

    PhaseWindow empty;
    empty.s_lo = 0.11;
    empty.s_hi = 0.115;
    empty.phi_lo = 1.1;
    empty.phi_hi = 1.2;
    bool any = false;
    for (const auto& r : ms.search.records) any = any || empty.contains(r.location);
    REQUIRE(!any);
    auto rep0 = count_homoclinics_in_window(fix.table, pert, fix.orbit, ms.search.records, empty,
                                            3.0, fix.guard, {}, 2);
    CHECK(rep0.count_before == 0);
    CHECK(rep0.count_after == 0);
    CHECK(rep0.bound_ok);

    // isolate one record
    const HomoclinicRecord& pick = ms.search.records.front();
    double iso = 1.0;
    for (const auto& r : ms.search.records) {
        if (&r == &pick) continue;
        iso = std::min(iso, std::hypot(circle_dist(r.location.s, pick.location.s),
                                       r.location.phi - pick.location.phi));
    }
    const double w = std::min(0.02, 0.4 * iso);
    PhaseWindow K;
    K.s_lo = mod1(pick.location.s - w);
    K.s_hi = K.s_lo + 2 * w;
    K.phi_lo = pick.location.phi - w;
    K.phi_hi = pick.location.phi + w;
    auto rep1 = count_homoclinics_in_window(fix.table, pert, fix.orbit, ms.search.records, K, 3.0,
                                            fix.guard, {}, 2);
    CHECK(rep1.count_before == 1);
    CHECK(rep1.count_after == 1);
    CHECK(rep1.bound_ok);
}
