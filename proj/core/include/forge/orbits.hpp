#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "forge/dynamics.hpp"
#include "forge/perturbation.hpp"

namespace forge {

struct RotationNumber {
    int p = 1, q = 2;
};

/// Validated rotation number: gcd(p,q) = 1, 0 < p/q < 1, 2 <= q <= 64.
RotationNumber make_rotation(int p, int q);

/// Critical (p,q) configuration with its derived data. The configuration is
/// lifted: s_0 < s_1 < ... < s_{q-1} with the convention s_q = s_0 + p.
struct PeriodicOrbit {
    RotationNumber rotation;
    std::vector<double> config;
    std::vector<double> angles;
    double action = 0.0;
    Eigen::MatrixXd hessian;
    double hessian_det = 0.0;
    Mat2 monodromy = Mat2::Identity();
    double trace = 2.0;
    std::complex<double> multiplier_u, multiplier_s;
    bool hyperbolic = false;
    bool tests_agree = true; // trace test vs Hessian sign test
    double min_gap = 0.0;    // minimum separation of the mod-1 projections
    double criticality = 0.0;

    PhasePoint point(int k) const {
        const int q = rotation.q;
        int m = ((k % q) + q) % q;
        return PhasePoint{config[m] + rotation.p * static_cast<double>((k - m) / q), angles[m]};
    }
};

struct MaximizerSearchReport {
    int seeds = 0;
    int converged = 0;
    int distinct_criticals = 0;
    int maximizer_clusters = 0;
    double best_action = 0.0;
    double runner_up_action = 0.0;
};

double action(const BoundaryTable& table, const RotationNumber& rot,
              const std::vector<double>& config);
Eigen::VectorXd grad_action(const BoundaryTable& table, const RotationNumber& rot,
                            const std::vector<double>& config);
Eigen::MatrixXd hess_action(const BoundaryTable& table, const RotationNumber& rot,
                            const std::vector<double>& config);

/// Newton (Levenberg-damped) polish of a configuration to a critical point of
/// the action. Returns false if it fails to reach the residual target.
bool newton_polish(const BoundaryTable& table, const RotationNumber& rot,
                   const AnnulusGuard& guard, std::vector<double>& config,
                   double grad_tol = 1e-12, int max_iter = 80);

/// Assemble the full orbit record at a critical configuration (angles,
/// Hessian, monodromy, hyperbolicity with the two-test agreement).
PeriodicOrbit build_orbit(const BoundaryTable& table, const RotationNumber& rot,
                          const AnnulusGuard& guard, const std::vector<double>& config);

/// Multi-start maximizer search on the rotation lattice with seeded jitter.
/// Throws NoCriticalPoint or AmbiguousMaximizer; on success the unique
/// maximizing orbit is returned with the uniqueness report.
std::pair<PeriodicOrbit, MaximizerSearchReport> find_max_orbit(
    const BoundaryTable& table, const RotationNumber& rot, const AnnulusGuard& guard,
    int seeds, std::uint64_t rng_seed, int workers = 1);

/// Same search, but reports the clusters instead of throwing on ambiguity.
struct MaximizerClusters {
    std::vector<std::vector<double>> configs;
    std::vector<double> actions;
    MaximizerSearchReport report;
};
MaximizerClusters survey_maximizers(const BoundaryTable& table, const RotationNumber& rot,
                                    const AnnulusGuard& guard, int seeds,
                                    std::uint64_t rng_seed, int workers = 1);

Mat2 monodromy(const BoundaryTable& table, const PeriodicOrbit& orbit);

/// The hyperbolizing deformation of a maximizing orbit:
///   lambda0(s) = - prod_k sin^2(pi (s - sbar_k)),
/// expanded to explicit trigonometric coefficients (degree <= 2q).
NormalPerturbation hyperbolizing_lambda(const PeriodicOrbit& orbit, double r);

struct HessianPerturbationCheck {
    double det_unperturbed = 0.0;
    double det_exact = 0.0;      // det D^2 L^eps on the perturbed table, base chart
    double det_prediction = 0.0; // first-order formula with the principal minors
};

/// det D^2 L^eps at the frozen configuration for the deformation
/// eps * lambda0 / ||lambda0||_r, against the first-order prediction
/// det D^2 L^0 + 2 (eps/||lambda0||_r) sum_k ddot-lambda0(sbar_k) cos(phibar_k) delta_k.
HessianPerturbationCheck hessian_perturbation_check(const BoundaryTable& table,
                                                    const PeriodicOrbit& orbit,
                                                    const NormalPerturbation& lambda0,
                                                    double eps);

/// Re-express a lifted configuration in the chart of a perturbed table built
/// from this one (the new curve parameter is the old arclength).
std::vector<double> map_config_to(const BoundaryTable& new_table,
                                  const std::vector<double>& config, int p);

} // namespace forge
