#pragma once

#include "forge/curve_checks.hpp"
#include "forge/errors.hpp"
#include "forge/manifolds.hpp"
#include "forge/orbits.hpp"
#include "testutil.hpp"

namespace fixtures {

/// Circle hyperbolized at the (1,q) lattice anchored at 0, with a deformation
/// size giving robust hyperbolicity (multiplier well off the unit circle) so
/// the manifolds split at numerically visible scale.
struct HyperbolizedCircle {
    forge::BoundaryTable table;
    forge::PeriodicOrbit orbit;
    forge::AnnulusGuard guard;
    forge::NormalPerturbation lambda0;
    double eps;
};

inline const HyperbolizedCircle& hyperbolized_circle(int q = 2) {
    static auto make = [](int qq) {
        const auto& C = testutil::circle_table();
        const auto g0 = forge::AnnulusGuard::standard(C);
        std::vector<double> anchor(static_cast<std::size_t>(qq));
        for (int k = 0; k < qq; ++k) anchor[static_cast<std::size_t>(k)] = static_cast<double>(k) / qq;
        const forge::PeriodicOrbit base = forge::build_orbit(C, forge::make_rotation(1, qq), g0, anchor);
        const forge::NormalPerturbation l0 = forge::hyperbolizing_lambda(base, 0.1);
        const double eps = 0.05;
        HyperbolizedCircle fix{
            forge::perturbed_table(C, l0.scaled(eps / l0.strip_norm())),
            forge::PeriodicOrbit{},
            forge::AnnulusGuard{},
            l0,
            eps};
        fix.guard = forge::AnnulusGuard::standard(fix.table);
        std::vector<double> cfg = forge::map_config_to(fix.table, base.config, 1);
        forge::newton_polish(fix.table, base.rotation, fix.guard, cfg);
        fix.orbit = forge::build_orbit(fix.table, base.rotation, fix.guard, cfg);
        return fix;
    };
    static HyperbolizedCircle fix2 = make(2);
    static HyperbolizedCircle fix3 = make(3);
    return q == 3 ? fix3 : fix2;
}

struct ManifoldSet {
    std::vector<forge::ManifoldBranch> branches;
    forge::HomoclinicSearch search;
};

inline const ManifoldSet& circle_manifolds(int q = 2, double N = 3.0) {
    static auto make = [](int qq, double NN) {
        const auto& fix = hyperbolized_circle(qq);
        ManifoldSet ms;
        ms.branches = forge::grow_all_branches(fix.table, fix.orbit, NN, fix.guard, {}, 2);
        ms.search = forge::find_homoclinics(ms.branches);
        return ms;
    };
    static ManifoldSet ms2 = make(2, N);
    static ManifoldSet ms3 = make(3, N);
    return q == 3 ? ms3 : ms2;
}

/// Records of the q-fixture with tangency order and fibering classification
/// filled in (the lab pipeline's view of the manifolds stage).
inline const std::vector<forge::HomoclinicRecord>& classified_records(int q = 2) {
    static auto make = [](int qq) {
        const auto& fix = hyperbolized_circle(qq);
        const auto& ms = circle_manifolds(qq);
        std::vector<forge::HomoclinicRecord> out;
        for (auto rec : ms.search.records) {
            try {
                const forge::JetFit jet = forge::tangency_order(ms.branches, rec, 0.01);
                rec.order = jet.order;
                rec.leading_coeff = jet.leading_coeff;
                forge::classify_fibering(fix.table, fix.orbit, rec, ms.branches, fix.guard);
            } catch (const forge::ForgeError&) {
                continue;
            }
            out.push_back(rec);
        }
        return out;
    };
    static std::vector<forge::HomoclinicRecord> r2 = make(2);
    static std::vector<forge::HomoclinicRecord> r3 = make(3);
    return q == 3 ? r3 : r2;
}

} // namespace fixtures
