#include "forge/orbits.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <numeric>
#include <optional>
#include <sstream>

#include "forge/errors.hpp"

namespace forge {

RotationNumber make_rotation(int p, int q) {
    if (q < 2 || q > 64 || p < 1 || p >= q || std::gcd(p, q) != 1)
        throw ConfigError("rotation number must be coprime p/q with 0 < p/q < 1, 2 <= q <= 64");
    return RotationNumber{p, q};
}

namespace {

void check_config(const RotationNumber& rot, const std::vector<double>& config,
                  const AnnulusGuard& guard) {
    const int q = rot.q;
    if (static_cast<int>(config.size()) != q) throw OrderingViolated("config size != q");
    for (int k = 0; k < q; ++k) {
        const double next = (k + 1 < q) ? config[k + 1] : config[0] + rot.p;
        const double gap = next - config[k];
        if (gap <= 0.0) throw OrderingViolated("configuration not strictly increasing");
        if (gap < guard.mu || gap > 1.0 - guard.mu) {
            std::ostringstream os;
            os << "gap " << gap << " outside [mu, 1-mu]";
            throw GapOutsideGuard(os.str());
        }
    }
}

double gap_of(const RotationNumber& rot, const std::vector<double>& config, int k) {
    const int q = rot.q;
    const double next = (k + 1 < q) ? config[k + 1] : config[0] + rot.p;
    return next - config[k];
}

/// project gaps into [mu+eps, 1-mu-eps] while keeping their sum = p
void repair_ordering(const RotationNumber& rot, std::vector<double>& config, double mu) {
    const int q = rot.q;
    std::vector<double> gaps(q);
    for (int k = 0; k < q; ++k) gaps[k] = gap_of(rot, config, k);
    const double lo = mu * 1.05, hi = 1.0 - mu * 1.05;
    for (int it = 0; it < 50; ++it) {
        for (auto& g : gaps) g = std::clamp(g, lo, hi);
        const double total = std::accumulate(gaps.begin(), gaps.end(), 0.0);
        const double excess = total - static_cast<double>(rot.p);
        if (std::abs(excess) < 1e-14) break;
        for (auto& g : gaps) g -= excess / q;
    }
    for (int k = 1; k < q; ++k) config[k] = config[k - 1] + gaps[k - 1];
}

std::vector<double> canonical_form(const RotationNumber& rot, const std::vector<double>& config) {
    const int q = rot.q;
    // rotate the cyclic word so that it starts at the smallest mod-1 position
    // (values within 1e-9 of the wrap count as 0)
    auto pos = [&](int k) {
        double m = mod1(config[k]);
        if (m > 1.0 - 1e-9) m = 0.0;
        return m;
    };
    int j0 = 0;
    double best = pos(0);
    for (int k = 1; k < q; ++k) {
        const double m = pos(k);
        if (m < best) {
            best = m;
            j0 = k;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(q));
    out[0] = best;
    for (int k = 1; k < q; ++k) {
        const int a = (j0 + k - 1) % q;
        out[static_cast<std::size_t>(k)] = out[static_cast<std::size_t>(k) - 1] + gap_of(rot, config, a);
    }
    return out;
}

/// distance between two configurations as cyclic words of mod-1 positions
double orbit_distance(const RotationNumber& rot, const std::vector<double>& a,
                      const std::vector<double>& b) {
    const int q = rot.q;
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < q; ++j) {
        double d = 0.0;
        for (int k = 0; k < q; ++k)
            d = std::max(d, std::abs(circle_dist(mod1(a[static_cast<std::size_t>(k)]),
                                                 mod1(b[static_cast<std::size_t>((k + j) % q)]))));
        best = std::min(best, d);
    }
    return best;
}

} // namespace

double action(const BoundaryTable& table, const RotationNumber& rot,
              const std::vector<double>& config) {
    double acc = 0.0;
    for (int k = 0; k < rot.q; ++k) {
        const double b = (k + 1 < rot.q) ? config[k + 1] : config[0] + rot.p;
        acc += tau(table, config[k], b);
    }
    return acc;
}

Eigen::VectorXd grad_action(const BoundaryTable& table, const RotationNumber& rot,
                            const std::vector<double>& config) {
    const int q = rot.q;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(q);
    for (int k = 0; k < q; ++k) {
        const double b = (k + 1 < q) ? config[k + 1] : config[0] + rot.p;
        const auto d = d_tau(table, config[k], b);
        g[k] += d[0];
        g[(k + 1) % q] += d[1];
    }
    return g;
}

Eigen::MatrixXd hess_action(const BoundaryTable& table, const RotationNumber& rot,
                            const std::vector<double>& config) {
    const int q = rot.q;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(q, q);
    for (int k = 0; k < q; ++k) {
        const double b = (k + 1 < q) ? config[k + 1] : config[0] + rot.p;
        const auto d2 = d2_tau(table, config[k], b);
        const int k1 = (k + 1) % q;
        H(k, k) += d2[0];
        H(k, k1) += d2[1];
        H(k1, k) += d2[1];
        H(k1, k1) += d2[2];
    }
    return H;
}

bool newton_polish(const BoundaryTable& table, const RotationNumber& rot,
                   const AnnulusGuard& guard, std::vector<double>& config,
                   double grad_tol, int max_iter) {
    const int q = rot.q;
    double damp = 0.0;
    Eigen::VectorXd g = grad_action(table, rot, config);
    for (int it = 0; it < max_iter; ++it) {
        const double gn = g.cwiseAbs().maxCoeff();
        if (gn <= grad_tol) return true;
        Eigen::MatrixXd H = hess_action(table, rot, config);
        if (damp > 0.0) H.diagonal().array() -= damp;
        Eigen::VectorXd delta = H.fullPivLu().solve(-g);
        std::vector<double> trial = config;
        for (int k = 0; k < q; ++k) trial[k] += delta[k];
        repair_ordering(rot, trial, guard.mu);
        Eigen::VectorXd gt = grad_action(table, rot, trial);
        if (gt.cwiseAbs().maxCoeff() < gn) {
            config = std::move(trial);
            g = std::move(gt);
            damp = damp / 4.0;
            if (damp < 1e-12) damp = 0.0;
        } else {
            damp = std::max(1e-6, damp * 10.0);
            if (damp > 1e12) return false;
        }
    }
    return g.cwiseAbs().maxCoeff() <= grad_tol;
}

PeriodicOrbit build_orbit(const BoundaryTable& table, const RotationNumber& rot,
                          const AnnulusGuard& guard, const std::vector<double>& config) {
    check_config(rot, config, guard);
    const int q = rot.q;
    PeriodicOrbit orb;
    orb.rotation = rot;
    orb.config = canonical_form(rot, config);
    orb.angles.resize(q);
    orb.action = action(table, rot, orb.config);
    Eigen::VectorXd g = grad_action(table, rot, orb.config);
    orb.criticality = g.cwiseAbs().maxCoeff();

    for (int k = 0; k < q; ++k) {
        const double b = (k + 1 < q) ? orb.config[k + 1] : orb.config[0] + rot.p;
        orb.angles[k] = std::asin(std::clamp(-d_tau(table, orb.config[k], b)[0], -1.0, 1.0));
    }

    orb.hessian = hess_action(table, rot, orb.config);
    orb.hessian_det = orb.hessian.fullPivLu().determinant();

    Mat2 M = Mat2::Identity();
    for (int k = 0; k < q; ++k) {
        const double b = (k + 1 < q) ? orb.config[k + 1] : orb.config[0] + rot.p;
        ChordData chord;
        chord.s = orb.config[k];
        chord.s1 = b;
        chord.tau = tau(table, chord.s, chord.s1);
        chord.phi = orb.angles[k];
        chord.phi1 = orb.angles[(k + 1) % q];
        M = differential(table, chord) * M;
    }
    orb.monodromy = M;
    orb.trace = M.trace();
    const double det = M.determinant();
    const double disc = orb.trace * orb.trace - 4.0 * det;
    if (disc >= 0.0) {
        const double r = std::sqrt(disc);
        double l1 = (orb.trace + r) / 2.0, l2 = (orb.trace - r) / 2.0;
        if (std::abs(l1) < std::abs(l2)) std::swap(l1, l2);
        orb.multiplier_u = l1;
        orb.multiplier_s = l2;
    } else {
        const double r = std::sqrt(-disc);
        orb.multiplier_u = std::complex<double>(orb.trace / 2.0, r / 2.0);
        orb.multiplier_s = std::conj(orb.multiplier_u);
    }

    const bool trace_test = std::abs(orb.trace) > 2.0 + 1e-8;
    const double signed_det = (q % 2 == 0) ? orb.hessian_det : -orb.hessian_det;
    // deadband on the Hessian sign test, scaled by the entry magnitude
    const double scale = std::pow(std::max(1.0, orb.hessian.cwiseAbs().maxCoeff()), q);
    const bool hess_test = signed_det > 1e-10 * scale;
    orb.hyperbolic = trace_test;
    orb.tests_agree = (trace_test == hess_test);

    double min_gap = 1.0;
    for (int i = 0; i < q; ++i)
        for (int j = i + 1; j < q; ++j)
            min_gap = std::min(min_gap, std::abs(circle_dist(orb.config[i], orb.config[j])));
    orb.min_gap = min_gap;
    if (min_gap < 1e-12) throw OrderingViolated("mod-1 projection of the configuration not injective");
    return orb;
}

MaximizerClusters survey_maximizers(const BoundaryTable& table, const RotationNumber& rot,
                                    const AnnulusGuard& guard, int seeds,
                                    std::uint64_t rng_seed, int workers) {
    const int q = rot.q;
    seeds = std::max(seeds, 8 * q);
    MaximizerClusters out;
    out.report.seeds = seeds;

    auto run_seed = [&](int j) -> std::optional<std::vector<double>> {
        std::vector<double> cfg(q);
        const double s0 = uniform01(rng_seed, 1, static_cast<std::uint64_t>(j));
        for (int k = 0; k < q; ++k) {
            const double jitter =
                (uniform01(rng_seed, 2, static_cast<std::uint64_t>(j) * q + k) - 0.5) * 0.6 / q;
            cfg[k] = s0 + k * static_cast<double>(rot.p) / q + jitter;
        }
        repair_ordering(rot, cfg, guard.mu);

        // projected gradient ascent until the Newton basin
        double step_len = 0.05 / q;
        for (int it = 0; it < 300; ++it) {
            Eigen::VectorXd g = grad_action(table, rot, cfg);
            if (g.cwiseAbs().maxCoeff() < 1e-3) break;
            const double base = action(table, rot, cfg);
            bool ok = false;
            for (int bt = 0; bt < 30; ++bt) {
                std::vector<double> trial = cfg;
                for (int k = 0; k < q; ++k) trial[k] += step_len * g[k];
                repair_ordering(rot, trial, guard.mu);
                if (action(table, rot, trial) > base) {
                    cfg = std::move(trial);
                    step_len = std::min(step_len * 1.5, 0.2 / q);
                    ok = true;
                    break;
                }
                step_len /= 2.0;
                if (step_len < 1e-12) break;
            }
            if (!ok) break;
        }
        if (!newton_polish(table, rot, guard, cfg)) return std::nullopt;
        return canonical_form(rot, cfg);
    };

    std::vector<std::optional<std::vector<double>>> results(seeds);
    if (workers <= 1) {
        for (int j = 0; j < seeds; ++j) results[j] = run_seed(j);
    } else {
        std::vector<std::future<void>> futs;
        std::atomic<int> next{0};
        for (int w = 0; w < workers; ++w)
            futs.push_back(std::async(std::launch::async, [&]() {
                for (;;) {
                    int j = next.fetch_add(1);
                    if (j >= seeds) return;
                    results[j] = run_seed(j);
                }
            }));
        for (auto& f : futs) f.get();
    }

    // deterministic ordered merge of converged configurations into clusters
    for (int j = 0; j < seeds; ++j) {
        if (!results[j]) continue;
        ++out.report.converged;
        const auto& cfg = *results[j];
        bool merged = false;
        for (std::size_t c = 0; c < out.configs.size(); ++c) {
            if (orbit_distance(rot, cfg, out.configs[c]) < 1e-7) {
                merged = true;
                break;
            }
        }
        if (!merged) {
            out.configs.push_back(cfg);
            out.actions.push_back(action(table, rot, cfg));
        }
    }
    out.report.distinct_criticals = static_cast<int>(out.configs.size());

    // sort clusters by action desc, tie-break lexicographically for determinism
    std::vector<std::size_t> idx(out.configs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (out.actions[a] != out.actions[b]) return out.actions[a] > out.actions[b];
        return out.configs[a] < out.configs[b];
    });
    std::vector<std::vector<double>> cfg_sorted;
    std::vector<double> act_sorted;
    for (auto i : idx) {
        cfg_sorted.push_back(out.configs[i]);
        act_sorted.push_back(out.actions[i]);
    }
    out.configs = std::move(cfg_sorted);
    out.actions = std::move(act_sorted);

    if (!out.actions.empty()) {
        out.report.best_action = out.actions.front();
        int ties = 0;
        for (double a : out.actions)
            if (out.actions.front() - a < 1e-10) ++ties;
        out.report.maximizer_clusters = ties;
        out.report.runner_up_action = out.actions.size() > 1 ? out.actions[1] : out.actions[0];
    }
    return out;
}

std::pair<PeriodicOrbit, MaximizerSearchReport> find_max_orbit(
    const BoundaryTable& table, const RotationNumber& rot, const AnnulusGuard& guard,
    int seeds, std::uint64_t rng_seed, int workers) {
    MaximizerClusters mc = survey_maximizers(table, rot, guard, seeds, rng_seed, workers);
    if (mc.configs.empty()) throw NoCriticalPoint("no multi-start seed converged");
    if (mc.report.maximizer_clusters >= 2) {
        std::ostringstream os;
        os << mc.report.maximizer_clusters << " maximizer clusters tied within 1e-10 of action "
           << mc.report.best_action;
        throw AmbiguousMaximizer(os.str());
    }
    PeriodicOrbit orb = build_orbit(table, rot, guard, mc.configs.front());
    if (orb.criticality > 1e-9) throw NumericalFailure("maximizer criticality above 1e-9");
    if (!orb.tests_agree)
        throw NumericalFailure("hyperbolicity trace test and Hessian sign test disagree");
    return {orb, mc.report};
}

Mat2 monodromy(const BoundaryTable& table, const PeriodicOrbit& orbit) {
    return build_orbit(table, orbit.rotation, AnnulusGuard{0.0, 1e-6, 0.0}, orbit.config).monodromy;
}

NormalPerturbation hyperbolizing_lambda(const PeriodicOrbit& orbit, double r) {
    std::vector<double> pos(orbit.config.size());
    for (std::size_t k = 0; k < pos.size(); ++k) pos[k] = mod1(orbit.config[k]);
    auto f = [pos](double s) {
        double prod = 1.0;
        for (double sk : pos) {
            const double v = std::sin(kPi * (s - sk));
            prod *= v * v;
        }
        return -prod;
    };
    return NormalPerturbation::fit(f, r, 2 * static_cast<int>(pos.size()));
}

HessianPerturbationCheck hessian_perturbation_check(const BoundaryTable& table,
                                                    const PeriodicOrbit& orbit,
                                                    const NormalPerturbation& lambda0,
                                                    double eps) {
    const int q = orbit.rotation.q;
    const double norm_r = lambda0.strip_norm();
    const NormalPerturbation scaled = lambda0.scaled(eps / norm_r);
    PerturbedBoundary pb(table, view_of(scaled));
    for (int i = 0; i < 256; ++i)
        if (pb.curvature(static_cast<double>(i) / 256) >= 0.0)
            throw ConvexityLost("hessian_perturbation_check");

    auto hess_on = [&](bool perturbed) {
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(q, q);
        for (int k = 0; k < q; ++k) {
            const double a = orbit.config[k];
            const double b = (k + 1 < q) ? orbit.config[k + 1] : orbit.config[0] + orbit.rotation.p;
            std::array<double, 3> d2;
            if (perturbed)
                d2 = chord_second_partials(pb, a, b);
            else
                d2 = d2_tau(table, a, b);
            const int k1 = (k + 1) % q;
            H(k, k) += d2[0];
            H(k, k1) += d2[1];
            H(k1, k) += d2[1];
            H(k1, k1) += d2[2];
        }
        return H;
    };

    HessianPerturbationCheck out;
    const Eigen::MatrixXd H0 = hess_on(false);
    out.det_unperturbed = H0.fullPivLu().determinant();
    out.det_exact = hess_on(true).fullPivLu().determinant();

    double corr = 0.0;
    for (int k = 0; k < q; ++k) {
        // principal minor: delete row/column k
        Eigen::MatrixXd M(q - 1, q - 1);
        for (int i = 0, ii = 0; i < q; ++i) {
            if (i == k) continue;
            for (int j = 0, jj = 0; j < q; ++j) {
                if (j == k) continue;
                M(ii, jj) = H0(i, j);
                ++jj;
            }
            ++ii;
        }
        const double minor_det = (q == 2) ? M(0, 0) : M.fullPivLu().determinant();
        corr += lambda0.derivative(mod1(orbit.config[k]), 2) * std::cos(orbit.angles[k]) * minor_det;
    }
    out.det_prediction = out.det_unperturbed + 2.0 * (eps / norm_r) * corr;
    return out;
}

std::vector<double> map_config_to(const BoundaryTable& new_table,
                                  const std::vector<double>& config, int p) {
    std::vector<double> out(config.size());
    double prev_theta = mod1(config[0]);
    out[0] = new_table.s_of_theta(prev_theta);
    double acc = out[0];
    for (std::size_t k = 1; k < config.size(); ++k) {
        const double th = mod1(config[k]);
        const double u = new_table.s_of_theta(th);
        const double uprev = new_table.s_of_theta(prev_theta);
        acc += mod1(u - uprev);
        out[k] = acc;
        prev_theta = th;
    }
    (void)p;
    return out;
}

} // namespace forge
