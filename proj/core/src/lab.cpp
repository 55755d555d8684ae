#include "forge/lab.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "forge/errors.hpp"

namespace forge {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << text;
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json curve_json(const FourierCurve& c) {
    return json{{"cx", c.cx()}, {"sx", c.sx()}, {"cy", c.cy()}, {"sy", c.sy()}};
}

json orbit_json(const PeriodicOrbit& o) {
    json j;
    j["rotation"] = {{"p", o.rotation.p}, {"q", o.rotation.q}};
    j["config"] = o.config;
    j["angles"] = o.angles;
    j["action"] = o.action;
    j["trace"] = o.trace;
    j["multipliers"] = {{o.multiplier_u.real(), o.multiplier_u.imag()},
                        {o.multiplier_s.real(), o.multiplier_s.imag()}};
    j["hyperbolic"] = o.hyperbolic;
    j["tests_agree"] = o.tests_agree;
    j["hessian_det"] = o.hessian_det;
    j["criticality"] = o.criticality;
    j["min_gap"] = o.min_gap;
    return j;
}

} // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    ExperimentConfig cfg;
    const auto& t = j.at("table");
    cfg.table = FourierCurve(t.at("cx").get<std::vector<double>>(),
                             t.value("sx", std::vector<double>{}),
                             t.at("cy").get<std::vector<double>>(),
                             t.value("sy", std::vector<double>{}));
    cfg.rotation = make_rotation(j.at("rotation").at("p").get<int>(),
                                 j.at("rotation").at("q").get<int>());
    cfg.N = j.value("N", 3.0);
    if (!(cfg.N > 0.0) || cfg.N > 50.0) throw ConfigError("N must be in (0, 50]");
    if (j.contains("guard")) {
        cfg.nu = j["guard"].value("nu", 0.05);
        cfg.mu = j["guard"].value("mu", 0.02);
    }
    cfg.r = j.value("r", 0.1);
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.workers = j.value("workers", 1);
    if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
    if (j.contains("tolerances")) {
        for (auto it = j["tolerances"].begin(); it != j["tolerances"].end(); ++it) {
            const double v = it.value().get<double>();
            if (!(v > 0.0)) throw ConfigError("tolerance " + it.key() + " must be positive");
            cfg.tolerances[it.key()] = v;
        }
    }
    if (j.contains("hyperbolize")) cfg.hyperbolize_anchor = j["hyperbolize"].value("anchor_s0", 0.0);
    if (j.contains("break")) cfg.break_b = j["break"].value("b", 1e-6);
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
    return from_json_text(read_file(file));
}

std::string ExperimentConfig::to_json_text() const {
    json j;
    j["schema"] = "forge.config.v1";
    j["table"] = curve_json(table);
    j["rotation"] = {{"p", rotation.p}, {"q", rotation.q}};
    j["N"] = N;
    j["guard"] = {{"nu", nu}, {"mu", mu}};
    j["r"] = r;
    j["seed"] = seed;
    j["workers"] = workers;
    j["tolerances"] = tolerances;
    j["hyperbolize"] = {{"anchor_s0", hyperbolize_anchor}};
    j["break"] = {{"b", break_b}};
    return j.dump(2) + "\n";
}

Lab::Lab(ExperimentConfig cfg, std::filesystem::path out_dir)
    : cfg_(std::move(cfg)), out_(std::move(out_dir)) {
    std::filesystem::create_directories(out_);
}

GrowthParams Lab::growth_params() const {
    GrowthParams g;
    g.h_max = cfg_.tol("h_max", 1e-3);
    g.h_min = cfg_.tol("h_min", 1e-9);
    return g;
}

void Lab::ensure_table() {
    if (table_) return;
    const auto file = out_ / "table.json";
    if (std::filesystem::exists(file)) {
        json j = json::parse(read_file(file));
        FourierCurve c(j.at("curve").at("cx").get<std::vector<double>>(),
                       j.at("curve").value("sx", std::vector<double>{}),
                       j.at("curve").at("cy").get<std::vector<double>>(),
                       j.at("curve").value("sy", std::vector<double>{}));
        table_ = make_table(c);
    } else {
        table_ = make_table(cfg_.table);
        json j;
        j["schema"] = "forge.table.v1";
        j["provenance"] = "input";
        j["curve"] = curve_json(cfg_.table);
        j["perimeter"] = table_->perimeter();
        write_file(file, j.dump(2) + "\n");
    }
    guard_ = AnnulusGuard::standard(*table_, cfg_.nu, cfg_.mu);
}

AnnulusGuard Lab::guard() {
    ensure_table();
    return *guard_;
}

const BoundaryTable& Lab::table() {
    ensure_table();
    return *table_;
}

void Lab::ensure_orbit() {
    if (orbit_) return;
    ensure_table();
    const auto file = out_ / "orbit.json";
    if (std::filesystem::exists(file)) {
        json j = json::parse(read_file(file));
        if (j.value("status", "unique") == "unique") {
            orbit_ = build_orbit(*table_, cfg_.rotation, *guard_,
                                 j.at("orbit").at("config").get<std::vector<double>>());
            return;
        }
    }
    auto [orb, rep] = find_max_orbit(*table_, cfg_.rotation, *guard_,
                                     8 * cfg_.rotation.q, cfg_.seed, cfg_.workers);
    (void)rep;
    orbit_ = orb;
}

const PeriodicOrbit& Lab::orbit() {
    ensure_orbit();
    return *orbit_;
}

void Lab::ensure_manifolds() {
    if (!branches_.empty()) return;
    ensure_orbit();
    if (!orbit_->hyperbolic)
        throw NotHyperbolic("manifolds require a hyperbolic orbit (run hyperbolize first)");
    branches_ = grow_all_branches(*table_, *orbit_, cfg_.N, *guard_, growth_params(), cfg_.workers);
    auto found = find_homoclinics(branches_);
    coincidence_ = found.coincidence_suspected;
    records_ = std::move(found.records);
    const double jet_window = cfg_.tol("jet_window", 0.01);
    const double jet_tol = cfg_.tol("jet_tol", 1e-6);
    FiberingParams fp;
    fp.fiber_tol = cfg_.tol("fiber_tol", 1e-6);
    for (auto& rec : records_) {
        try {
            const JetFit jet = tangency_order(branches_, rec, jet_window, jet_tol);
            rec.order = jet.order;
            rec.leading_coeff = jet.leading_coeff;
        } catch (const JetUnresolved&) {
            rec.order = 0; // unresolved jet, kept for reporting
        }
        try {
            classify_fibering(*table_, *orbit_, rec, branches_, *guard_, fp);
        } catch (const WindowTooSmall&) {
            rec.fibering = Fibering::Unresolved;
        }
    }
}

const std::vector<ManifoldBranch>& Lab::branches() {
    ensure_manifolds();
    return branches_;
}

const std::vector<HomoclinicRecord>& Lab::records() {
    ensure_manifolds();
    return records_;
}

void Lab::write_meta(const std::string& stage, double seconds) {
    // timings are kept out of the deterministic artifacts
    const auto file = out_ / "run_meta.json";
    json j = json::object();
    if (std::filesystem::exists(file)) j = json::parse(read_file(file));
    j["timings_s"][stage] = seconds;
    write_file(file, j.dump(2) + "\n");
}

std::vector<VerifyRow> Lab::validate_rows() {
    std::vector<VerifyRow> rows;
    auto push = [&rows](const std::string& name, double value, double bound, bool lower_is_pass) {
        VerifyRow r;
        r.name = name;
        r.value = value;
        r.bound = bound;
        r.pass = lower_is_pass ? (value <= bound) : (value >= bound);
        rows.push_back(r);
    };

    const CurveReport rep = certify_curve(cfg_.table);
    rows.push_back({"embedded", rep.embedded, rep.min_pairwise_dist, 0.0});
    rows.push_back({"convex", rep.convex, rep.max_curvature, -1e-8});
    if (!rep.embedded) throw NotEmbedded("validate: tangent winding or sample distance failed");
    if (!rep.convex) throw NotConvex("validate: curvature sign failed");

    ensure_table();
    const BoundaryTable& T = *table_;
    const AnnulusGuard g = *guard_;

    double speed_err = 0.0, round_err = 0.0;
    for (int i = 0; i < 4096; ++i) {
        const double s = static_cast<double>(i) / 4096;
        speed_err = std::max(speed_err, std::abs(T.jet(s).d1.norm() - 1.0));
        round_err = std::max(round_err, std::abs(T.s_of_theta(T.theta_of(s)) - s));
    }
    push("arclength_unit_speed", speed_err, 1e-9, true);
    push("sigma_roundtrip", round_err, 1e-10, true);

    // reparametrization idempotence through a refit
    {
        FourierCurve refit = fit_fourier([&T](double s) { return T.point(s); });
        BoundaryTable T2 = make_table(refit);
        double d = 0.0;
        for (int i = 0; i < 512; ++i) {
            const double s = static_cast<double>(i) / 512;
            d = std::max(d, (T.point(s) - T2.point(s)).norm());
        }
        push("reparametrize_idempotent", d, 1e-9, true);
    }

    double sympl = 0.0, rev = 0.0, gen = 0.0, resid = 0.0;
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 10; ++j) {
            PhasePoint x{(i + 0.5) / 10.0, (-0.9 + 1.8 * (j + 0.5) / 10.0) * (kPi / 2 - g.nu)};
            auto [y, chord] = step(T, x, g);
            const Mat2 Df = differential(T, chord);
            sympl = std::max(sympl,
                             std::abs(Df.determinant() - std::cos(x.phi) / std::cos(y.phi)));
            gen = std::max(gen, std::abs(std::sin(y.phi) - d_tau(T, chord.s, chord.s1)[1]));
            resid = std::max(resid, std::abs(d_tau(T, chord.s, chord.s1)[0] + std::sin(x.phi)));
        }
    }
    push("symplecticity", sympl, 1e-9, true);
    push("generating_function_consistency", gen, 1e-10, true);
    push("step_residual", resid, 1e-12, true);

    double roundtrip = 0.0;
    for (int i = 0; i < 100; ++i) {
        PhasePoint x{mod1(0.017 + 0.231 * i), (-0.8 + 1.6 * ((i * 37) % 100) / 100.0) * (kPi / 2 - g.nu)};
        auto fwd = step(T, PhasePoint{x.s, -x.phi}, g).first;
        PhasePoint lhs{fwd.s, -fwd.phi};
        auto inv = step_inverse(T, x, g).first;
        rev = std::max(rev, std::hypot(circle_dist(mod1(lhs.s), mod1(inv.s)), lhs.phi - inv.phi));
        auto back = step_inverse(T, step(T, x, g).first, g).first;
        roundtrip = std::max(roundtrip, std::hypot(circle_dist(mod1(back.s), x.s), back.phi - x.phi));
    }
    push("reversibility", rev, 1e-9, true);
    push("inverse_roundtrip", roundtrip, 1e-10, true);

    // ds'/dphi = -tau/cos phi' < 0: image position strictly monotone in phi
    bool twist_ok = true;
    for (int i = 0; i < 4 && twist_ok; ++i) {
        double prev = std::numeric_limits<double>::infinity();
        for (int j = 0; j < 64; ++j) {
            const double phi = (-1.0 + 2.0 * j / 63.0) * (kPi / 2 - g.nu);
            const double s1 = step(T, PhasePoint{0.23 * i, phi}, g).first.s;
            if (s1 >= prev) {
                twist_ok = false;
                break;
            }
            prev = s1;
        }
    }
    rows.push_back({"twist_monotone", twist_ok, twist_ok ? 1.0 : 0.0, 1.0});

    // chain identity d_tau vs finite differences of tau
    double chain = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double s = 0.093 * i, s1 = s + 0.2 + 0.05 * i;
        const double h = 1e-6;
        const auto d = d_tau(T, s, s1);
        const double fd1 = (tau(T, s + h, s1) - tau(T, s - h, s1)) / (2 * h);
        const double fd2 = (tau(T, s, s1 + h) - tau(T, s, s1 - h)) / (2 * h);
        chain = std::max(chain, std::abs(d[0] - fd1) / std::max(1.0, std::abs(fd1)));
        chain = std::max(chain, std::abs(d[1] - fd2) / std::max(1.0, std::abs(fd2)));
    }
    push("d_tau_finite_difference", chain, 1e-6, true);

    return rows;
}

std::vector<VerifyRow> Lab::cmd_validate() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<VerifyRow> rows = validate_rows();
    ensure_table();
    json j;
    j["schema"] = "forge.validate.v1";
    j["perimeter"] = ArcLengthTable(cfg_.table, 512).perimeter();
    j["guard"] = {{"nu", guard_->nu}, {"mu", guard_->mu}, {"c", guard_->c}};
    json jr = json::array();
    for (const auto& r : rows)
        jr.push_back({{"name", r.name}, {"pass", r.pass}, {"value", r.value}, {"bound", r.bound}});
    j["rows"] = jr;
    write_file(out_ / "validate.json", j.dump(2) + "\n");
    write_meta("validate", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    for (const auto& r : rows)
        if (!r.pass) throw NumericalFailure("validate row failed: " + r.name);
    return rows;
}

bool Lab::cmd_orbit() {
    const auto t0 = std::chrono::steady_clock::now();
    ensure_table();
    json j;
    j["schema"] = "forge.orbit.v1";
    bool unique = true;
    try {
        auto [orb, rep] = find_max_orbit(*table_, cfg_.rotation, *guard_,
                                         8 * cfg_.rotation.q, cfg_.seed, cfg_.workers);
        orbit_ = orb;
        j["status"] = "unique";
        j["orbit"] = orbit_json(orb);
        j["search"] = {{"seeds", rep.seeds},
                       {"converged", rep.converged},
                       {"distinct_criticals", rep.distinct_criticals},
                       {"maximizer_clusters", rep.maximizer_clusters}};
        // orbit dump, one chord per row
        std::ostringstream csv;
        csv << "i,s,phi,tau,phi_next\n";
        for (int k = 0; k < orb.rotation.q; ++k) {
            const double b = (k + 1 < orb.rotation.q) ? orb.config[k + 1]
                                                      : orb.config[0] + orb.rotation.p;
            csv << k << ',' << fmt17(orb.config[k]) << ',' << fmt17(orb.angles[k]) << ','
                << fmt17(tau(*table_, orb.config[k], b)) << ','
                << fmt17(orb.angles[(k + 1) % orb.rotation.q]) << "\n";
        }
        write_file(out_ / "orbit.csv", csv.str());
    } catch (const AmbiguousMaximizer& e) {
        unique = false;
        auto mc = survey_maximizers(*table_, cfg_.rotation, *guard_, 8 * cfg_.rotation.q,
                                    cfg_.seed, cfg_.workers);
        j["status"] = "ambiguous";
        j["detail"] = e.what();
        j["clusters"] = {{"count", mc.report.maximizer_clusters},
                         {"best_action", mc.report.best_action}};
    }
    write_file(out_ / "orbit.json", j.dump(2) + "\n");
    write_meta("orbit", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return unique;
}

void Lab::cmd_hyperbolize() {
    const auto t0 = std::chrono::steady_clock::now();
    ensure_table();
    const AnnulusGuard g = *guard_;
    const double trace_target = cfg_.tol("trace_target", 6.0);

    // anchor configuration: the unique maximizer when it exists, otherwise
    // the critical configuration polished from the anchored rotation lattice
    std::vector<double> anchor(static_cast<std::size_t>(cfg_.rotation.q));
    bool have_anchor = false;
    auto mc = survey_maximizers(*table_, cfg_.rotation, g, 8 * cfg_.rotation.q, cfg_.seed,
                                cfg_.workers);
    if (mc.report.maximizer_clusters == 1) {
        anchor = mc.configs.front();
        have_anchor = true;
    } else {
        for (int k = 0; k < cfg_.rotation.q; ++k)
            anchor[static_cast<std::size_t>(k)] =
                cfg_.hyperbolize_anchor + k * static_cast<double>(cfg_.rotation.p) / cfg_.rotation.q;
        have_anchor = newton_polish(*table_, cfg_.rotation, g, anchor);
        if (!have_anchor && !mc.configs.empty()) {
            anchor = mc.configs.front();
            have_anchor = true;
        }
    }
    if (!have_anchor) throw NoCriticalPoint("hyperbolize: no anchor configuration found");
    PeriodicOrbit base_orbit = build_orbit(*table_, cfg_.rotation, g, anchor);

    const NormalPerturbation lambda0 = hyperbolizing_lambda(base_orbit, cfg_.r);
    const double norm0 = lambda0.strip_norm();

    double eps = cfg_.tol("hyperbolize_eps0", 1e-4);
    const double eps_max = 0.5;
    std::optional<BoundaryTable> accepted;
    std::optional<PeriodicOrbit> accepted_orbit;
    double accepted_eps = 0.0;
    std::string stop_reason;
    while (eps <= eps_max) {
        try {
            const NormalPerturbation lam = lambda0.scaled(eps / norm0);
            BoundaryTable pert = perturbed_table(*table_, lam);
            std::vector<double> cfg = map_config_to(pert, base_orbit.config, cfg_.rotation.p);
            if (!newton_polish(pert, cfg_.rotation, g, cfg)) break;
            PeriodicOrbit orb = build_orbit(pert, cfg_.rotation, g, cfg);
            auto survey = survey_maximizers(pert, cfg_.rotation, g, 8 * cfg_.rotation.q,
                                            cfg_.seed, cfg_.workers);
            const bool unique = survey.report.maximizer_clusters == 1;
            const bool hyp = std::abs(orb.trace) > 2.0 + 1e-6;
            if (unique && hyp) {
                accepted = std::move(pert);
                accepted_orbit = orb;
                accepted_eps = eps;
                if (std::abs(orb.trace) >= trace_target) {
                    stop_reason = "trace_target";
                    break;
                }
            }
        } catch (const ConvexityLost&) {
            stop_reason = "convexity";
            break;
        }
        eps *= 2.0;
    }
    if (!accepted) throw NumericalFailure("hyperbolize line search found no admissible epsilon");

    table_ = std::move(*accepted);
    guard_ = AnnulusGuard::standard(*table_, cfg_.nu, cfg_.mu);
    orbit_ = build_orbit(*table_, cfg_.rotation, *guard_, accepted_orbit->config);
    branches_.clear();
    records_.clear();

    json jt;
    jt["schema"] = "forge.table.v1";
    jt["provenance"] = "hyperbolized";
    jt["curve"] = curve_json(table_->curve());
    jt["perimeter"] = table_->perimeter();
    write_file(out_ / "table.json", jt.dump(2) + "\n");

    json j;
    j["schema"] = "forge.hyperbolize.v1";
    j["epsilon"] = accepted_eps;
    j["stop_reason"] = stop_reason;
    j["lambda0"] = json::parse(lambda0.to_json());
    j["applied"] = json::parse(lambda0.scaled(accepted_eps / norm0).to_json());
    j["norm_r_lambda0"] = norm0;
    j["trace"] = orbit_->trace;
    write_file(out_ / "hyperbolize.json", j.dump(2) + "\n");

    json jo;
    jo["schema"] = "forge.orbit.v1";
    jo["status"] = "unique";
    jo["orbit"] = orbit_json(*orbit_);
    write_file(out_ / "orbit.json", jo.dump(2) + "\n");
    write_meta("hyperbolize",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

void Lab::cmd_manifolds() {
    const auto t0 = std::chrono::steady_clock::now();
    ensure_manifolds();

    for (std::size_t i = 0; i < branches_.size(); ++i) {
        const auto& br = branches_[i];
        std::ostringstream csv;
        csv << "arc,s,phi\n";
        for (std::size_t k = 0; k < br.points.size(); ++k)
            csv << fmt17(br.arc[k]) << ',' << fmt17(br.points[k].s) << ','
                << fmt17(br.points[k].phi) << "\n";
        std::ostringstream name;
        name << "branch_" << br.kind << br.base_index << (br.side > 0 ? "p" : "m") << ".csv";
        write_file(out_ / "branches" / name.str(), csv.str());
    }

    json j;
    j["schema"] = "forge.homoclinics.v1";
    j["coincidence_suspected"] = coincidence_;
    json arr = json::array();
    for (const auto& rec : records_) {
        json r;
        r["s"] = rec.location.s;
        r["phi"] = rec.location.phi;
        r["stable_branch"] = rec.stable_branch;
        r["unstable_branch"] = rec.unstable_branch;
        r["angle"] = rec.angle;
        r["order"] = rec.order;
        r["leading_coeff"] = rec.leading_coeff;
        r["fibering"] = to_string(rec.fibering);
        r["fiber_index"] = rec.fiber_index;
        r["max_per_fiber"] = rec.max_per_fiber;
        r["zero_section_iterate"] = rec.zero_section_iterate;
        json win = json::array();
        for (const auto& p : rec.orbit_window) win.push_back({p.s, p.phi});
        r["orbit_window"] = win;
        arr.push_back(r);
    }
    j["records"] = arr;
    write_file(out_ / "homoclinics.json", j.dump(2) + "\n");
    write_meta("manifolds",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

void Lab::cmd_break(double b) {
    const auto t0 = std::chrono::steady_clock::now();
    ensure_manifolds();
    if (records_.empty()) throw ContinuationLost("break: no homoclinic records to continue");

    // prefer a genuine tangency; among candidates take the widest fiber
    // neighborhood (best-conditioned compact-support basis)
    const HomoclinicRecord* chosen = nullptr;
    double best_key = -1.0;
    for (const auto& r : records_) {
        if (r.fibering == Fibering::Unresolved) continue;
        const double span = mod1(r.fiber_neighborhood_hi - r.fiber_neighborhood_lo);
        const double key = (r.order >= 2 ? 10.0 : 0.0) + span;
        if (key > best_key) {
            best_key = key;
            chosen = &r;
        }
    }
    if (!chosen) throw NotOneFibered("break: no record with a resolved fibering class");

    SplittingFrame frame = make_frame(*chosen, branches_);
    BreakParams bp;
    bp.b_cap = cfg_.tol("b_cap", 1e-4);
    bp.rng_seed = cfg_.seed;
    bp.workers = cfg_.workers;
    MelnikovOptions mo;
    BreakReport rep = break_tangency(*table_, *orbit_, frame, records_, b, *guard_,
                                     growth_params(), bp, mo);

    const auto d1 = melnikov_dphi1(*table_, *orbit_, frame, view_of(rep.lambda), *guard_, mo);
    const auto d2 = melnikov_dphi2(*table_, *orbit_, frame, view_of(rep.lambda), *guard_, mo);

    json j;
    j["schema"] = "forge.splitting.v1";
    j["phi1"] = rep.achieved.phi1;
    j["phi2"] = rep.achieved.phi2;
    j["phi1_base"] = rep.phi_base.phi1;
    j["phi2_base"] = rep.phi_base.phi2;
    j["dphi1"] = d1.value;
    j["dphi2"] = d2.value;
    j["M"] = std::max(d1.M, d2.M);
    j["tail_estimate"] = std::max(d1.tail, d2.tail);
    j["c1"] = rep.c1;
    j["c2"] = rep.c2;
    j["norm_r"] = rep.norm_r;
    j["b"] = b;
    j["lambda"] = json::parse(rep.lambda.to_json());
    j["post"] = {{"angle", rep.post_angle},
                 {"order", rep.post_order},
                 {"s", rep.post_location.s},
                 {"phi", rep.post_location.phi},
                 {"records_in_window", rep.records_in_window},
                 {"order_bound_ok", rep.order_bound_ok}};
    write_file(out_ / "splitting.json", j.dump(2) + "\n");
    write_meta("break", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::vector<VerifyRow> Lab::cmd_verify() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<VerifyRow> rows = validate_rows();
    ensure_table();
    const AnnulusGuard g = *guard_;
    auto push = [&rows](const std::string& name, double value, double bound, bool lower_is_pass) {
        VerifyRow r;
        r.name = name;
        r.value = value;
        r.bound = bound;
        r.pass = lower_is_pass ? (value <= bound) : (value >= bound);
        rows.push_back(r);
    };

    // first-order field: two-path agreement on a grid
    {
        NormalPerturbation eta(0.0, {0.0, 0.013, 0.007}, {0.0, 0.0, 0.011}, cfg_.r);
        FirstOrderField field(*table_, view_of(eta), g);
        double dis = 0.0;
        for (int i = 0; i < 8; ++i)
            for (int jj = 0; jj < 8; ++jj) {
                PhasePoint x{(i + 0.5) / 8.0, (-0.8 + 1.6 * (jj + 0.5) / 8.0) * (kPi / 2 - g.nu)};
                auto [y, chord] = step(*table_, x, g);
                (void)y;
                dis = std::max(dis,
                               (field.value_on_chord(chord) - field.value_on_chord_AB(chord)).norm());
            }
        push("field_two_path_agreement", dis, 1e-12, true);
    }

    // orbit rows
    try {
        ensure_orbit();
        push("orbit_criticality", orbit_->criticality, 1e-9, true);
        rows.push_back({"orbit_unique", true, 1.0, 1.0});
        rows.push_back({"hyperbolicity_tests_agree", orbit_->tests_agree,
                        orbit_->tests_agree ? 1.0 : 0.0, 1.0});
        // gradient vs finite differences of the action
        Eigen::VectorXd gr = grad_action(*table_, cfg_.rotation, orbit_->config);
        double gerr = 0.0;
        const double h = 1e-6;
        for (int k = 0; k < cfg_.rotation.q; ++k) {
            auto cfgp = orbit_->config, cfgm = orbit_->config;
            cfgp[static_cast<std::size_t>(k)] += h;
            cfgm[static_cast<std::size_t>(k)] -= h;
            const double fd = (action(*table_, cfg_.rotation, cfgp) -
                               action(*table_, cfg_.rotation, cfgm)) /
                              (2 * h);
            gerr = std::max(gerr, std::abs(gr[k] - fd) / std::max(1.0, std::abs(fd)));
        }
        push("grad_action_finite_difference", gerr, 1e-6, true);

        if (orbit_->hyperbolic) {
            ensure_manifolds();
            rows.push_back({"homoclinic_found", !records_.empty() || coincidence_,
                            static_cast<double>(records_.size()), 1.0});
            // lambda-lemma sanity: far branch points return to the seed segment
            const auto& br = branches_.front();
            if (br.points.size() > 10) {
                PhasePoint x = br.points.back();
                const int steps = br.sweeps * br.steps_per_sweep;
                for (int i = 0; i < steps; ++i)
                    x = (br.kind == 'u') ? step_inverse(*table_, x, g).first
                                         : step(*table_, x, g).first;
                const double d = std::hypot(circle_dist(mod1(x.s), mod1(br.base.s)),
                                            x.phi - br.base.phi);
                push("lambda_lemma_return", d, 1e-6, true);
            }
            // angle/order consistency over the records
            const double angle_tol = cfg_.tol("angle_tol", 1e-5);
            bool consistent = true;
            for (const auto& rec : records_)
                if (rec.order > 0 && ((rec.angle > angle_tol) != (rec.order == 1))) consistent = false;
            rows.push_back({"angle_order_consistency", consistent, consistent ? 1.0 : 0.0, 1.0});
        }
    } catch (const AmbiguousMaximizer&) {
        rows.push_back({"orbit_unique", false, 0.0, 1.0});
    }

    json j;
    j["schema"] = "forge.verify.v1";
    json jr = json::array();
    for (const auto& r : rows)
        jr.push_back({{"name", r.name}, {"pass", r.pass}, {"value", r.value}, {"bound", r.bound}});
    j["rows"] = jr;
    bool all = true;
    for (const auto& r : rows) all = all && r.pass;
    j["all_pass"] = all;
    write_file(out_ / "verify.json", j.dump(2) + "\n");
    write_meta("verify", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return rows;
}

int exit_code_of(const ForgeError& e) {
    return e.error_class() == ErrorClass::Invariant ? 2 : 3;
}

} // namespace forge
