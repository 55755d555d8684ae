#include "forge/manifolds.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <sstream>

#include <Eigen/Dense>

#include "forge/errors.hpp"

namespace forge {

namespace {

constexpr double kPhaseDiameter = 3.2969; // sqrt(1 + pi^2)

Vec2 orient(Vec2 v) {
    if (v.x() < 0.0 || (v.x() == 0.0 && v.y() < 0.0)) v = -v;
    return v;
}

ChordData chord_between(const BoundaryTable& table, double a, double b, double phi_a, double phi_b) {
    ChordData c;
    c.s = a;
    c.s1 = b;
    c.tau = tau(table, a, b);
    c.phi = phi_a;
    c.phi1 = phi_b;
    return c;
}

} // namespace

std::vector<EigenFrame> eigen_frames(const BoundaryTable& table, const PeriodicOrbit& orbit) {
    if (!orbit.hyperbolic) throw NotHyperbolic("eigen_frames requires a hyperbolic orbit");
    const int q = orbit.rotation.q;
    const Mat2& M = orbit.monodromy;
    const double lu = orbit.multiplier_u.real();
    const double ls = orbit.multiplier_s.real();

    auto eigenvector = [&](double lam) {
        Vec2 a(M(0, 1), lam - M(0, 0));
        Vec2 b(lam - M(1, 1), M(1, 0));
        Vec2 v = (a.norm() >= b.norm()) ? a : b;
        if (v.norm() < 1e-14) throw NotHyperbolic("degenerate eigenvector");
        return orient(v.normalized());
    };

    std::vector<EigenFrame> frames(q);
    frames[0].v_u = eigenvector(lu);
    frames[0].v_s = eigenvector(ls);
    frames[0].lambda_u = lu;
    frames[0].lambda_s = ls;
    for (int k = 1; k < q; ++k) {
        const double a = orbit.config[k - 1];
        const double b = (k < q) ? orbit.config[k] : orbit.config[0] + orbit.rotation.p;
        Mat2 Df = differential(table, chord_between(table, a, b, orbit.angles[k - 1], orbit.angles[k % q]));
        frames[k].v_u = orient((Df * frames[k - 1].v_u).normalized());
        frames[k].v_s = orient((Df * frames[k - 1].v_s).normalized());
        frames[k].lambda_u = lu;
        frames[k].lambda_s = ls;
    }
    return frames;
}

double ManifoldBranch::graph_radius() const {
    if (points.size() < 2) return 0.0;
    const double dir = (points[1].s >= points[0].s) ? 1.0 : -1.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (dir * (points[i].s - points[i - 1].s) <= 0.0) return arc[i - 1];
    }
    return arc.back();
}

ManifoldBranch grow_branch(const BoundaryTable& table, const PeriodicOrbit& orbit,
                           const std::vector<EigenFrame>& frames, int base_index, char kind,
                           int side, double N, const AnnulusGuard& guard,
                           const GrowthParams& params, bool strict) {
    const int q = orbit.rotation.q;
    const EigenFrame& fr = frames[base_index];
    const bool unstable = (kind == 'u');
    const double lam = unstable ? fr.lambda_u : 1.0 / fr.lambda_s;
    // With a negative multiplier f^q exchanges the two sides of a branch;
    // grow with the doubled return map.
    const int m = (lam > 0.0) ? q : 2 * q;
    const double g = std::pow(std::abs(lam), static_cast<double>(m) / q);

    const Vec2 v = (unstable ? fr.v_u : fr.v_s) * static_cast<double>(side);
    const PhasePoint base = orbit.point(base_index);
    const double delta0 = params.delta0_factor * kPhaseDiameter;

    auto seg = [&](double t) {
        const double r = delta0 * std::pow(g, t);
        return PhasePoint{base.s + r * v.x(), base.phi + r * v.y()};
    };
    // return map composed with the deck transformation: f^m shifts the lift
    // by p per q steps, and the branch lives in the annulus
    const double deck = static_cast<double>(orbit.rotation.p) / q;
    auto advance = [&](PhasePoint x, int n_steps) {
        for (int i = 0; i < n_steps; ++i)
            x = unstable ? step(table, x, guard).first : step_inverse(table, x, guard).first;
        x.s += (unstable ? -deck : deck) * n_steps;
        return x;
    };

    ManifoldBranch br;
    br.base_index = base_index;
    br.kind = kind;
    br.side = side;
    br.base = base;
    br.steps_per_sweep = m;
    br.points.push_back(base);
    br.arc.push_back(0.0);

    const double phi_cap = kPi / 2 - guard.nu;
    auto admissible = [&](const PhasePoint& x) { return std::abs(x.phi) <= phi_cap; };

    struct Node {
        double t;
        PhasePoint p;
    };
    // sweep 0 is the fundamental segment itself
    std::vector<Node> frontier;
    const int n0 = 33;
    for (int i = 0; i <= n0; ++i) frontier.push_back({static_cast<double>(i) / n0, seg(static_cast<double>(i) / n0)});

    double total_arc = 0.0;
    PhasePoint last = br.points.back();
    bool done = false;

    for (int sweep = 0; !done && sweep <= params.max_sweeps; ++sweep) {
        if (sweep > 0) {
            // advance the whole frontier one return-map application; the t=0
            // node duplicates the previous sweep's t=1 image and is skipped
            // at append time only
            std::vector<Node> next;
            next.reserve(frontier.size());
            for (const auto& nd : frontier) next.push_back({nd.t, advance(nd.p, m)});
            frontier = std::move(next);
        }
        // adaptive refinement: insert preimage midpoints until image spacing <= h_max
        for (std::size_t i = 0; i + 1 < frontier.size();) {
            const double d = std::hypot(frontier[i + 1].p.s - frontier[i].p.s,
                                        frontier[i + 1].p.phi - frontier[i].p.phi);
            const double dt = frontier[i + 1].t - frontier[i].t;
            if (d > params.h_max && dt > params.h_min) {
                const double tm = 0.5 * (frontier[i].t + frontier[i + 1].t);
                Node nn{tm, advance(seg(tm), sweep * m)};
                frontier.insert(frontier.begin() + static_cast<std::ptrdiff_t>(i) + 1, nn);
            } else {
                ++i;
            }
        }
        // append the sweep (skip the first node of later sweeps: duplicate)
        for (std::size_t i = (sweep == 0 ? 0 : 1); i < frontier.size(); ++i) {
            const PhasePoint& p = frontier[i].p;
            if (!admissible(p)) {
                br.truncated = true;
                done = true;
                break;
            }
            total_arc += std::hypot(p.s - last.s, p.phi - last.phi);
            br.points.push_back(p);
            br.arc.push_back(total_arc);
            last = p;
            if (total_arc >= N) {
                done = true;
                break;
            }
        }
        br.sweeps = sweep;
        if (sweep == params.max_sweeps && !done) br.truncated = true;
    }
    if (strict && br.truncated)
        throw LeftAnnulus("branch left A_nu at arc " + std::to_string(total_arc));
    return br;
}

std::vector<ManifoldBranch> grow_all_branches(const BoundaryTable& table,
                                              const PeriodicOrbit& orbit, double N,
                                              const AnnulusGuard& guard,
                                              const GrowthParams& params, int workers) {
    const int q = orbit.rotation.q;
    const auto frames = eigen_frames(table, orbit);
    struct Spec {
        int idx;
        char kind;
        int side;
    };
    std::vector<Spec> specs;
    for (char kind : {'s', 'u'})
        for (int k = 0; k < q; ++k)
            for (int side : {+1, -1}) specs.push_back({k, kind, side});

    std::vector<ManifoldBranch> out(specs.size());
    auto work = [&](std::size_t i) {
        out[i] = grow_branch(table, orbit, frames, specs[i].idx, specs[i].kind, specs[i].side, N,
                             guard, params);
    };
    if (workers <= 1) {
        for (std::size_t i = 0; i < specs.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::future<void>> futs;
        for (int w = 0; w < workers; ++w)
            futs.push_back(std::async(std::launch::async, [&]() {
                for (;;) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= specs.size()) return;
                    work(i);
                }
            }));
        for (auto& f : futs) f.get();
    }
    return out;
}

std::string to_string(Fibering f) {
    switch (f) {
        case Fibering::OneFibered: return "one-fibered";
        case Fibering::SymmetricTwoFibered: return "symmetric-two-fibered";
        default: return "unresolved";
    }
}

std::vector<PhasePoint> march_homoclinic(const BoundaryTable& table, const PeriodicOrbit& orbit,
                                         const std::vector<EigenFrame>& frames, PhasePoint start,
                                         const AnnulusGuard& guard, int count, bool forward) {
    const int q = orbit.rotation.q;
    const double capture_radius = 1e-5;

    auto nearest_index = [&](const PhasePoint& x, double& dist) {
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

    std::vector<PhasePoint> out;
    out.reserve(static_cast<std::size_t>(count));
    PhasePoint x = start;
    bool captured = false;
    int k = 0;
    double lift = 0.0;
    Vec2 xi = Vec2::Zero();
    for (int i = 1; i <= count; ++i) {
        if (!captured) {
            x = forward ? step(table, x, guard).first : step_inverse(table, x, guard).first;
            double d;
            const int kn = nearest_index(x, d);
            if (d < capture_radius) {
                captured = true;
                k = kn;
                const double sk = mod1(orbit.config[k]);
                xi = Vec2(circle_dist(mod1(x.s), sk), x.phi - orbit.angles[k]);
                lift = x.s - xi.x() - orbit.point(k).s;
            }
        } else {
            const int kn = forward ? k + 1 : k - 1;
            ChordData pc;
            const PhasePoint pa = orbit.point(forward ? k : kn);
            const PhasePoint pb = orbit.point(forward ? kn : k);
            pc.s = pa.s;
            pc.s1 = pb.s;
            pc.tau = tau(table, pa.s, pb.s);
            pc.phi = pa.phi;
            pc.phi1 = pb.phi;
            const Mat2 D = differential(table, pc);
            xi = forward ? Vec2(D * xi) : Vec2(D.fullPivLu().solve(xi));
            k = kn;
        }
        if (captured) {
            // keep only the eigencomponent that decays in this direction
            const int km = ((k % q) + q) % q;
            const Vec2 vs = frames[static_cast<std::size_t>(km)].v_s;
            const Vec2 vu = frames[static_cast<std::size_t>(km)].v_u;
            const double den = wedge(vs, vu);
            xi = forward ? Vec2((wedge(xi, vu) / den) * vs) : Vec2((-wedge(xi, vs) / den) * vu);
            const PhasePoint pk = orbit.point(k);
            x = PhasePoint{pk.s + lift + xi.x(), pk.phi + xi.y()};
        }
        out.push_back(x);
    }
    return out;
}

namespace {

// local cubic interpolation through up to 4 polyline points, parametrized by arc
struct LocalCurve {
    std::array<double, 4> u{};
    std::array<Vec2, 4> p{};
    int n = 0;

    Vec2 eval(double t) const {
        // Lagrange interpolation
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

LocalCurve local_curve(const ManifoldBranch& br, std::size_t seg_index, double s_shift) {
    LocalCurve c;
    const std::size_t n = br.points.size();
    const std::size_t lo = (seg_index == 0) ? 0 : seg_index - 1;
    const std::size_t hi = std::min(n - 1, seg_index + 2);
    for (std::size_t i = lo; i <= hi && c.n < 4; ++i) {
        c.u[c.n] = br.arc[i];
        c.p[c.n] = Vec2(br.points[i].s + s_shift, br.points[i].phi);
        ++c.n;
    }
    return c;
}

struct Segment {
    Vec2 a, b;      // endpoints, a.s reduced into [0,1)
    std::size_t k;  // polyline index of the first endpoint
    double shift;   // lifted-to-reduced shift applied
};

std::vector<Segment> reduced_segments(const ManifoldBranch& br) {
    std::vector<Segment> segs;
    segs.reserve(br.points.size());
    for (std::size_t k = 0; k + 1 < br.points.size(); ++k) {
        const auto& p = br.points[k];
        const auto& r = br.points[k + 1];
        Segment s;
        const double red = mod1(p.s);
        s.shift = red - p.s;
        s.a = Vec2(red, p.phi);
        s.b = Vec2(r.s + s.shift, r.phi);
        s.k = k;
        segs.push_back(s);
    }
    return segs;
}

bool seg_intersect(const Vec2& a1, const Vec2& a2, const Vec2& b1, const Vec2& b2) {
    const Vec2 r = a2 - a1, s = b2 - b1;
    const double denom = wedge(r, s);
    if (std::abs(denom) < 1e-300) return false;
    const double t = wedge(b1 - a1, s) / denom;
    const double u = wedge(b1 - a1, r) / denom;
    return t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0;
}

double point_to_polyline(const Vec2& x, const std::vector<Segment>& segs, double offs) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& sg : segs) {
        const Vec2 a(sg.a.x() + offs, sg.a.y()), b(sg.b.x() + offs, sg.b.y());
        const Vec2 d = b - a;
        const double len2 = d.squaredNorm();
        double t = (len2 > 0) ? (x - a).dot(d) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        best = std::min(best, (x - (a + t * d)).norm());
    }
    return best;
}

} // namespace

HomoclinicSearch find_homoclinics(const std::vector<ManifoldBranch>& branches,
                                  const IntersectParams& params) {
    HomoclinicSearch out;
    std::vector<int> stables, unstables;
    for (int i = 0; i < static_cast<int>(branches.size()); ++i)
        (branches[i].kind == 's' ? stables : unstables).push_back(i);

    std::vector<std::vector<Segment>> segcache(branches.size());
    for (int i = 0; i < static_cast<int>(branches.size()); ++i)
        segcache[i] = reduced_segments(branches[i]);

    const int B = 512;
    auto buckets_of = [&](const std::vector<Segment>& segs) {
        std::vector<std::vector<int>> buckets(B);
        for (int k = 0; k < static_cast<int>(segs.size()); ++k) {
            const double mid = 0.5 * (segs[k].a.x() + segs[k].b.x());
            int b = static_cast<int>(std::floor(mod1(mid) * B)) % B;
            buckets[b].push_back(k);
        }
        return buckets;
    };

    for (int si : stables) {
        const auto& ssegs = segcache[si];
        if (ssegs.empty()) continue;
        const auto sbuckets = buckets_of(ssegs);
        for (int ui : unstables) {
            const auto& usegs = segcache[ui];
            if (usegs.empty()) continue;

            // degenerate-case guard: numerically coincident branch pair
            int hits = 0, samples = 0;
            const std::size_t stride = std::max<std::size_t>(1, usegs.size() / 200);
            for (std::size_t k = 0; k < usegs.size(); k += stride) {
                double d = std::numeric_limits<double>::infinity();
                for (int offs : {-1, 0, 1})
                    d = std::min(d, point_to_polyline(Vec2(usegs[k].a.x() + offs, usegs[k].a.y()),
                                                      ssegs, 0.0));
                ++samples;
                if (d < params.coincide_tol) ++hits;
            }
            if (samples > 0 && hits > params.coincide_fraction * samples) {
                out.coincidence_suspected = true;
                ++out.coincident_pairs;
                continue;
            }

            // bucketed sweep
            const auto ubuckets = buckets_of(usegs);
            for (int b = 0; b < B; ++b) {
                for (int ks : sbuckets[b]) {
                    const Segment& A = ssegs[ks];
                    for (int db = -1; db <= 1; ++db) {
                        for (int ku : ubuckets[(b + db + B) % B]) {
                            const Segment& Bseg = usegs[ku];
                            for (int offs : {-1, 0, 1}) {
                                const Vec2 b1(Bseg.a.x() + offs, Bseg.a.y());
                                const Vec2 b2(Bseg.b.x() + offs, Bseg.b.y());
                                if (!seg_intersect(A.a, A.b, b1, b2)) continue;
                                // Newton on the local cubic models
                                LocalCurve Cs = local_curve(branches[si], A.k, A.shift);
                                LocalCurve Cu = local_curve(branches[ui], Bseg.k, Bseg.shift + offs);
                                double ua = 0.5 * (branches[si].arc[A.k] + branches[si].arc[A.k + 1]);
                                double ub = 0.5 * (branches[ui].arc[Bseg.k] + branches[ui].arc[Bseg.k + 1]);
                                bool ok = false;
                                for (int it = 0; it < 25; ++it) {
                                    const Vec2 r = Cs.eval(ua) - Cu.eval(ub);
                                    if (r.norm() < params.refine_residual) {
                                        ok = true;
                                        break;
                                    }
                                    Mat2 J;
                                    J.col(0) = Cs.deriv(ua);
                                    J.col(1) = -Cu.deriv(ub);
                                    Vec2 d = J.fullPivLu().solve(-r);
                                    ua += d.x();
                                    ub += d.y();
                                }
                                if (!ok) continue;
                                HomoclinicRecord rec;
                                const Vec2 loc = Cs.eval(ua);
                                rec.location = PhasePoint{mod1(loc.x()), loc.y()};
                                rec.stable_branch = si;
                                rec.unstable_branch = ui;
                                rec.stable_tangent = Cs.deriv(ua).normalized();
                                rec.unstable_tangent = Cu.deriv(ub).normalized();
                                rec.angle = std::atan2(
                                    std::abs(wedge(rec.stable_tangent, rec.unstable_tangent)),
                                    std::abs(rec.stable_tangent.dot(rec.unstable_tangent)));
                                rec.stable_arc = ua;
                                rec.unstable_arc = ub;
                                out.records.push_back(rec);
                            }
                        }
                    }
                }
            }
        }
    }

    // merge duplicates, deterministic order
    std::sort(out.records.begin(), out.records.end(), [](const auto& a, const auto& b) {
        if (a.location.s != b.location.s) return a.location.s < b.location.s;
        if (a.location.phi != b.location.phi) return a.location.phi < b.location.phi;
        if (a.stable_branch != b.stable_branch) return a.stable_branch < b.stable_branch;
        return a.unstable_branch < b.unstable_branch;
    });
    std::vector<HomoclinicRecord> merged;
    for (const auto& r : out.records) {
        bool dup = false;
        for (const auto& m : merged) {
            if (m.stable_branch == r.stable_branch && m.unstable_branch == r.unstable_branch &&
                std::abs(circle_dist(m.location.s, r.location.s)) < params.merge_tol &&
                std::abs(m.location.phi - r.location.phi) < params.merge_tol) {
                dup = true;
                break;
            }
        }
        if (!dup) merged.push_back(r);
    }
    out.records = std::move(merged);
    return out;
}

JetFit tangency_order(const std::vector<ManifoldBranch>& branches, const HomoclinicRecord& record,
                      double window, double jet_tol) {
    const Vec2 ex = record.stable_tangent;
    const Vec2 ey = rotate_ccw(ex);
    const Vec2 Q(record.location.s, record.location.phi);

    auto collect = [&](const ManifoldBranch& br, double arc0) {
        std::vector<Vec2> xy;
        for (std::size_t i = 0; i < br.points.size(); ++i) {
            if (std::abs(br.arc[i] - arc0) > 4.0 * window) continue;
            const Vec2 d(circle_dist(mod1(br.points[i].s), Q.x()), br.points[i].phi - Q.y());
            const double x = d.dot(ex), y = d.dot(ey);
            if (std::abs(x) <= window && std::abs(y) <= 5.0 * window) xy.emplace_back(x, y);
        }
        return xy;
    };

    auto fit = [&](const std::vector<Vec2>& xy, Eigen::VectorXd& coef) -> double {
        const int deg = 6;
        if (static_cast<int>(xy.size()) < deg + 3)
            throw JetUnresolved("too few polyline points in the adapted chart window");
        Eigen::MatrixXd A(xy.size(), deg + 1);
        Eigen::VectorXd rhs(xy.size());
        for (std::size_t i = 0; i < xy.size(); ++i) {
            double t = 1.0;
            for (int k = 0; k <= deg; ++k) {
                A(static_cast<Eigen::Index>(i), k) = t;
                t *= xy[i].x() / window;
            }
            rhs(static_cast<Eigen::Index>(i)) = xy[i].y();
        }
        coef = A.colPivHouseholderQr().solve(rhs);
        return (A * coef - rhs).norm() / std::sqrt(static_cast<double>(xy.size()));
    };

    Eigen::VectorXd cs, cu;
    const double rs = fit(collect(branches[record.stable_branch], record.stable_arc), cs);
    const double ru = fit(collect(branches[record.unstable_branch], record.unstable_arc), cu);
    Eigen::VectorXd diff = cu - cs;

    JetFit out;
    out.residual = std::max(rs, ru);
    out.coeffs.resize(diff.size());
    double amax = 0.0;
    for (int k = 0; k < diff.size(); ++k) {
        out.coeffs[static_cast<std::size_t>(k)] = diff[k] / std::pow(window, k);
        amax = std::max(amax, std::abs(diff[k]));
    }
    const double thresh = std::max({jet_tol * amax, 10.0 * out.residual, 1e-12});
    int order = 0;
    for (int k = 1; k < diff.size(); ++k) {
        if (std::abs(diff[k]) > thresh) {
            order = k;
            break;
        }
    }
    if (order == 0) throw JetUnresolved("all difference-jet coefficients below threshold");
    out.order = order;
    out.leading_coeff = out.coeffs[static_cast<std::size_t>(order)];
    return out;
}

void classify_fibering(const BoundaryTable& table, const PeriodicOrbit& orbit,
                       HomoclinicRecord& record, const std::vector<ManifoldBranch>& branches,
                       const AnnulusGuard& guard, const FiberingParams& params) {
    const int q = orbit.rotation.q;
    double rho_loc = std::numeric_limits<double>::infinity();
    for (const auto& br : branches) rho_loc = std::min(rho_loc, br.graph_radius());
    rho_loc = std::min(rho_loc, 0.2);
    if (!(rho_loc > 1e-6)) throw WindowTooSmall("no usable local-graph radius on the branches");

    auto near_orbit = [&](const PhasePoint& x) {
        double best = std::numeric_limits<double>::infinity();
        for (int k = 0; k < q; ++k)
            best = std::min(best, std::hypot(circle_dist(mod1(x.s), mod1(orbit.config[k])),
                                             x.phi - orbit.angles[k]));
        return best;
    };

    const auto frames = eigen_frames(table, orbit);
    const int G = std::max(params.gap_window, params.max_window);
    const auto fwd = march_homoclinic(table, orbit, frames, record.location, guard, G, true);
    const auto bwd = march_homoclinic(table, orbit, frames, record.location, guard, G, false);
    auto deep = [&](int i) -> const PhasePoint& {
        if (i == 0) return record.location;
        return i > 0 ? fwd[static_cast<std::size_t>(i - 1)] : bwd[static_cast<std::size_t>(-i - 1)];
    };

    int fwd_entry = -1, bwd_entry = -1;
    for (int i = 1; i <= params.max_window; ++i) {
        if (fwd_entry < 0 && near_orbit(deep(i)) < 0.5 * rho_loc) fwd_entry = i;
        if (bwd_entry < 0 && near_orbit(deep(-i)) < 0.5 * rho_loc) bwd_entry = i;
    }
    if (fwd_entry < 0 || bwd_entry < 0)
        throw WindowTooSmall("orbit window ends did not reach the local manifolds");

    const int L = std::max(fwd_entry, bwd_entry);
    record.window_half_width = L;
    record.orbit_window.clear();
    for (int i = -L; i <= L; ++i) record.orbit_window.push_back(deep(i));
    auto at = [&](int i) -> const PhasePoint& {
        return record.orbit_window[static_cast<std::size_t>(i + L)];
    };

    // Per-fiber statistics. The gaps that size U_Q are measured against the
    // deep extension of the orbit: both tails sweep every fiber between the
    // window edge and the periodic fibers, which in turn are the accumulation
    // set and excluded with the residual tail deviation as a margin.
    const double tail_dev = std::max(near_orbit(deep(G)), near_orbit(deep(-G)));

    const int n = 2 * L + 1;
    record.max_per_fiber = 1;
    record.zero_section_iterate = false;
    std::vector<double> gap(static_cast<std::size_t>(n));
    for (int i = -L; i <= L; ++i) {
        if (std::abs(at(i).phi) < params.zero_tol) record.zero_section_iterate = true;
        double g = 1.0;
        int cnt = 1;
        for (int j = -G; j <= G; ++j) {
            if (i == j) continue;
            const double d = std::abs(circle_dist(mod1(at(i).s), mod1(deep(j).s)));
            g = std::min(g, d);
            if (std::abs(j) <= L && d < params.fiber_tol) ++cnt;
        }
        for (int k = 0; k < q; ++k)
            g = std::min(g, std::abs(circle_dist(mod1(at(i).s), mod1(orbit.config[k]))) - tail_dev);
        gap[static_cast<std::size_t>(i + L)] = g;
        record.max_per_fiber = std::max(record.max_per_fiber, cnt);
    }

    auto on_local_manifold = [&](int i) {
        return (i >= fwd_entry || -i >= bwd_entry) && near_orbit(at(i)) < rho_loc;
    };

    // one-fibered: some iterate alone on its fiber and on a local manifold
    int best_i = 0;
    double best_gap = 0.0;
    for (int i = -L; i <= L; ++i) {
        if (gap[i + L] > params.fiber_tol && on_local_manifold(i) && gap[i + L] > best_gap) {
            best_gap = gap[i + L];
            best_i = i;
        }
    }
    if (best_gap > 0.0) {
        record.fibering = Fibering::OneFibered;
        record.fiber_index = best_i;
        const double c = mod1(at(best_i).s);
        record.fiber_neighborhood_lo = c - 0.5 * best_gap;
        record.fiber_neighborhood_hi = c + 0.5 * best_gap;
        return;
    }

    // symmetric two-fibered: q = 2, the record on the zero section, iterates
    // pairing through the involution I(f^l Q) = f^{-l} Q
    if (q == 2 && std::abs(record.location.phi) < params.zero_tol) {
        bool paired = true;
        for (int l = 1; l <= L; ++l) {
            const double ds = std::abs(circle_dist(mod1(at(l).s), mod1(at(-l).s)));
            const double dphi = std::abs(at(l).phi + at(-l).phi);
            if (ds > params.zero_tol || dphi > params.zero_tol) {
                paired = false;
                break;
            }
        }
        if (paired) {
            // smallest l on a local manifold whose fiber holds only the pair
            for (int l = 1; l <= L; ++l) {
                if (!on_local_manifold(l)) continue;
                double g = 1.0;
                for (int j = -G; j <= G; ++j) {
                    if (j == l || j == -l) continue;
                    g = std::min(g, std::abs(circle_dist(mod1(at(l).s), mod1(deep(j).s))));
                }
                for (int k = 0; k < q; ++k)
                    g = std::min(g,
                                 std::abs(circle_dist(mod1(at(l).s), mod1(orbit.config[k]))) - tail_dev);
                if (g > params.fiber_tol) {
                    record.fibering = Fibering::SymmetricTwoFibered;
                    record.fiber_index = l;
                    const double c = mod1(at(l).s);
                    record.fiber_neighborhood_lo = c - 0.5 * g;
                    record.fiber_neighborhood_hi = c + 0.5 * g;
                    return;
                }
            }
        }
    }
    record.fibering = Fibering::Unresolved;
}

std::vector<PhasePoint> pull_back(const BoundaryTable& pert, const std::vector<PhasePoint>& pts) {
    std::vector<PhasePoint> out;
    out.reserve(pts.size());
    for (const auto& p : pts) {
        const double th = pert.theta_of(mod1(p.s));
        const double k = std::round(p.s - th);
        out.push_back(PhasePoint{th + k, p.phi});
    }
    return out;
}

bool PhaseWindow::contains(const PhasePoint& x) const {
    const double span = s_hi - s_lo;
    const double d = mod1(x.s - s_lo);
    return d <= span && x.phi >= phi_lo && x.phi <= phi_hi;
}

WindowCountReport count_homoclinics_in_window(
    const BoundaryTable& base, const BoundaryTable& pert, const PeriodicOrbit& base_orbit,
    const std::vector<HomoclinicRecord>& base_records, const PhaseWindow& K, double N,
    const AnnulusGuard& guard, const GrowthParams& growth, int workers) {
    WindowCountReport rep;
    const HomoclinicRecord* inside = nullptr;
    for (const auto& r : base_records) {
        if (K.contains(r.location)) {
            ++rep.count_before;
            inside = &r;
        }
    }
    if (rep.count_before >= 2)
        throw WindowAmbiguous("window contains >= 2 unperturbed records");
    rep.order_bound = (rep.count_before == 1) ? std::max(inside->order, 1) : 0;

    // continuation of the orbit and its manifolds on the perturbed table
    std::vector<double> cfg = map_config_to(pert, base_orbit.config, base_orbit.rotation.p);
    if (!newton_polish(pert, base_orbit.rotation, guard, cfg))
        throw ContinuationLost("periodic orbit continuation failed in window count");
    PeriodicOrbit orb = build_orbit(pert, base_orbit.rotation, guard, cfg);
    auto branches = grow_all_branches(pert, orb, N, guard, growth, workers);
    for (auto& br : branches) {
        br.points = pull_back(pert, br.points);
        for (std::size_t i = 1; i < br.points.size(); ++i)
            br.arc[i] = br.arc[i - 1] + std::hypot(br.points[i].s - br.points[i - 1].s,
                                                   br.points[i].phi - br.points[i - 1].phi);
    }
    auto found = find_homoclinics(branches);
    for (const auto& r : found.records)
        if (K.contains(r.location)) ++rep.count_after;

    rep.bound_ok = (rep.count_before == 0) ? (rep.count_after == 0)
                                           : (rep.count_after <= rep.order_bound);
    return rep;
}

} // namespace forge
